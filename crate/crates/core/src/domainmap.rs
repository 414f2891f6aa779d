//! Maps between the moving subdomains `[-L, p(t)]`, `[p(t), L]` and the
//! reference interval `[0, 1]`.
//!
//! Both maps send the outer boundary to `y = 0` and the price to `y = 1`,
//! so the right map flips orientation.

use crate::error::{Error, Result};
use crate::forward::PriceSeries;
use crate::mesh::NodalField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    /// Length of the physical subdomain for price `p`.
    pub fn width(self, price: f64, half_width: f64) -> f64 {
        match self {
            Side::Left => price + half_width,
            Side::Right => half_width - price,
        }
    }
}

/// `y = (x + L)/(p + L)` on the left, `y = (x − L)/(p − L)` on the right.
pub fn map_to_reference(x: f64, price: f64, half_width: f64, side: Side) -> Result<f64> {
    let tol = 1e-12 * half_width;
    let (lo, hi) = match side {
        Side::Left => (-half_width, price),
        Side::Right => (price, half_width),
    };
    if !(x >= lo - tol && x <= hi + tol) {
        return Err(Error::OutOfDomain { x, lo, hi });
    }
    let y = match side {
        Side::Left => (x + half_width) / (price + half_width),
        Side::Right => (x - half_width) / (price - half_width),
    };
    Ok(y.clamp(0.0, 1.0))
}

/// Inverse of [`map_to_reference`].
pub fn map_from_reference(y: f64, price: f64, half_width: f64, side: Side) -> f64 {
    match side {
        Side::Left => (price + half_width) * y - half_width,
        Side::Right => (price - half_width) * y + half_width,
    }
}

/// Coefficients of the adjoint problem on the reference interval, one
/// entry per sample of the price series.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCoefficients {
    pub side: Side,
    pub half_width: f64,
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub derivatives: Vec<f64>,
    /// `a(t) = 1/w(t)²`
    pub diffusion: Vec<f64>,
    /// `b(t) = p'(t)/(p(t) ± L)`
    pub drift: Vec<f64>,
    /// `w(t)`, the length of the physical subdomain.
    pub weights: Vec<f64>,
}

impl MapCoefficients {
    /// Coefficients that do not depend on a price, for testing the
    /// reference-domain solvers in isolation.
    pub fn constant(side: Side, times: Vec<f64>, diffusion: f64, drift: f64, weight: f64) -> Self {
        let n = times.len();
        Self {
            side,
            half_width: 0.5,
            times,
            prices: vec![0.0; n],
            derivatives: vec![0.0; n],
            diffusion: vec![diffusion; n],
            drift: vec![drift; n],
            weights: vec![weight; n],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Uniform time step; errors if the samples are not equispaced.
    pub fn time_step(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::InvalidArgument("need at least two time samples".into()));
        }
        let span = self.times[self.times.len() - 1] - self.times[0];
        let dt = span / (self.times.len() - 1) as f64;
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-8 * dt {
                return Err(Error::InvalidArgument("time samples must be equispaced".into()));
            }
        }
        Ok(dt)
    }

    /// Checks `1/(2L − m)² < a ≤ 1/m²`, `|b| ≤ ‖p‖_{C¹}/m²` and
    /// `m ≤ w ≤ 2L − m` for margin `m`.
    pub fn check_bounds(&self, margin: f64) -> Result<()> {
        let l = self.half_width;
        let c1 = self.prices.iter().fold(0.0f64, |m, p| m.max(p.abs()))
            + self.derivatives.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let tol = 1e-12;
        for k in 0..self.len() {
            let (a, b, w) = (self.diffusion[k], self.drift[k], self.weights[k]);
            let ok = a > 1.0 / (2.0 * l - margin).powi(2) * (1.0 - tol)
                && a <= 1.0 / (margin * margin) * (1.0 + tol)
                && b.abs() <= c1 / (margin * margin) * (1.0 + tol)
                && w >= margin * (1.0 - tol)
                && w <= (2.0 * l - margin) * (1.0 + tol);
            if !ok {
                return Err(Error::PriceEscaped {
                    t: self.times[k],
                    price: self.prices[k],
                    lo: -l + margin,
                    hi: l - margin,
                });
            }
        }
        Ok(())
    }
}

/// Derivative of `p` at every sample: centred differences inside, second
/// order one-sided differences at the two ends.
pub fn price_derivative(series: &PriceSeries) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 samples, got {n}")));
    }
    let (t, p) = (&series.times, &series.prices);
    // derivative at t[at] of the quadratic through samples j, j+1, j+2
    let quad = |j: usize, at: usize| {
        let (t0, t1, t2) = (t[j], t[j + 1], t[j + 2]);
        let x = t[at];
        p[j] * ((x - t1) + (x - t2)) / ((t0 - t1) * (t0 - t2))
            + p[j + 1] * ((x - t0) + (x - t2)) / ((t1 - t0) * (t1 - t2))
            + p[j + 2] * ((x - t0) + (x - t1)) / ((t2 - t0) * (t2 - t1))
    };
    let mut d = Vec::with_capacity(n);
    d.push(quad(0, 0));
    for k in 1..n - 1 {
        d.push(quad(k - 1, k));
    }
    d.push(quad(n - 3, n - 1));
    Ok(d)
}

/// Diffusion, drift and width of the transformed adjoint problem for one
/// side of the price.
pub fn coefficients(series: &PriceSeries, half_width: f64, side: Side) -> Result<MapCoefficients> {
    let derivatives = price_derivative(series)?;
    let mut diffusion = Vec::with_capacity(series.len());
    let mut drift = Vec::with_capacity(series.len());
    let mut weights = Vec::with_capacity(series.len());
    for (k, (&p, &dp)) in series.prices.iter().zip(&derivatives).enumerate() {
        if !(p > -half_width && p < half_width) {
            return Err(Error::PriceEscaped { t: series.times[k], price: p, lo: -half_width, hi: half_width });
        }
        let w = side.width(p, half_width);
        let signed = match side {
            Side::Left => w,
            Side::Right => -w,
        };
        diffusion.push(1.0 / (w * w));
        drift.push(dp / signed);
        weights.push(w);
    }
    Ok(MapCoefficients {
        side,
        half_width,
        times: series.times.clone(),
        prices: series.prices.clone(),
        derivatives,
        diffusion,
        drift,
        weights,
    })
}

/// `w·∫₀¹ u v dy` with the trapezoidal rule.
pub fn weighted_inner_product(u: &NodalField, v: &NodalField, weight: f64) -> Result<f64> {
    if !u.grid().same_as(v.grid()) {
        return Err(Error::InvalidArgument("inner product of fields on different grids".into()));
    }
    let w = u.grid().lumped_weights();
    Ok(weight * u.values().iter().zip(v.values()).zip(&w).map(|((a, b), c)| a * b * c).sum::<f64>())
}
