//! Forward solver for the price formation model.
//!
//! The signed density `f` (buyers positive, vendors negative) is mapped to
//! `F` by summing copies of `f⁺` shifted by multiples of the transaction
//! cost to the left of the price and copies of `f⁻` to the right. `F`
//! solves the heat equation and its zero level set is the price.

use crate::error::{Error, Result};
use crate::mesh::{zero_crossing, BorderedSystem, Grid, NodalField, TridiagonalSystem};

/// Transaction cost, initial price and the shift counts of the
/// transformation on `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub cost: f64,
    pub initial_price: f64,
    pub half_width: f64,
    pub k_left: usize,
    pub k_right: usize,
}

impl TransformSpec {
    /// Requires `p0 + L` to be an integer multiple of the cost.
    pub fn new(cost: f64, initial_price: f64, half_width: f64) -> Result<Self> {
        let spec = Self::restart(cost, initial_price, half_width)?;
        let ratio = (initial_price + half_width) / cost;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(Error::MisalignedTransform { offset: initial_price + half_width, cost });
        }
        Ok(spec)
    }

    /// Same as [`TransformSpec::new`] without the alignment requirement;
    /// the shifted sums are truncated at the domain boundary. Used to
    /// restart the solver from a density whose price is arbitrary.
    pub fn restart(cost: f64, initial_price: f64, half_width: f64) -> Result<Self> {
        if !(cost > 0.0) || !(half_width > 0.0) {
            return Err(Error::InvalidArgument(format!("cost {cost} and half width {half_width} must be positive")));
        }
        if !(initial_price > -half_width + cost && initial_price < half_width - cost) {
            return Err(Error::InvalidArgument(format!(
                "initial price {initial_price} outside ({}, {})",
                -half_width + cost,
                half_width - cost
            )));
        }
        let k_left = ((initial_price + half_width) / cost + 1e-9).floor() as usize;
        let k_right = ((half_width - initial_price) / cost + 1e-9).floor() as usize;
        Ok(Self { cost, initial_price, half_width, k_left, k_right })
    }
}

/// Boundary treatment of the transformed problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryMode {
    /// `∂ₓF = 0` at both ends.
    Neumann,
    /// `∂ₓF(−L) = ∂ₓF(−L+a)` and `∂ₓF(L) = ∂ₓF(L−a)`, the image of the
    /// homogeneous Neumann condition on `f`.
    Nonlocal { cost: f64 },
}

/// Price and transaction rate sampled in time.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PriceSeries {
    pub fn new(times: Vec<f64>, prices: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if times.len() != prices.len() || times.len() != rates.len() {
            return Err(Error::InvalidArgument(format!(
                "series lengths differ: {} times, {} prices, {} rates",
                times.len(),
                prices.len(),
                rates.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative transaction rate {r}")));
        }
        Ok(Self { times, prices, rates })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_price(&self) -> f64 {
        *self.prices.last().expect("empty series")
    }

    /// Every `stride`-th sample, starting with the first.
    pub fn subsample(&self, stride: usize) -> Self {
        let pick = |v: &[f64]| v.iter().step_by(stride.max(1)).copied().collect::<Vec<_>>();
        Self { times: pick(&self.times), prices: pick(&self.prices), rates: pick(&self.rates) }
    }

    /// Samples with `t ≥ start` (up to rounding).
    pub fn from_time(&self, start: f64) -> Self {
        let tol = 1e-9 * self.times.last().map_or(1.0, |t| t.abs().max(1.0));
        let k = self.times.iter().position(|&t| t >= start - tol).unwrap_or(self.len());
        Self { times: self.times[k..].to_vec(), prices: self.prices[k..].to_vec(), rates: self.rates[k..].to_vec() }
    }

    /// Checks `−L + margin ≤ p(t) ≤ L − margin` at every sample.
    pub fn check_margins(&self, half_width: f64, margin: f64) -> Result<()> {
        let (lo, hi) = (-half_width + margin, half_width - margin);
        for (&t, &p) in self.times.iter().zip(&self.prices) {
            if !(p >= lo && p <= hi) {
                return Err(Error::PriceEscaped { t, price: p, lo, hi });
            }
        }
        Ok(())
    }
}

/// Output of [`run_forward`].
#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub series: PriceSeries,
    /// `F(·, t_k)` for every sample of `series`.
    pub transformed: Vec<NodalField>,
    pub final_density: NodalField,
    pub spec: TransformSpec,
}

impl ForwardResult {
    pub fn density_at(&self, k: usize) -> Result<NodalField> {
        back_transform(&self.transformed[k], &self.spec)
    }
}

fn check_sign_condition(f0: &NodalField, p0: f64) -> Result<()> {
    let tol = 1e-9 * f0.max_abs().max(1e-300);
    let g = f0.grid();
    for (i, &v) in f0.values().iter().enumerate() {
        let x = g.node(i);
        let near = (x - p0).abs() <= 1e-9 * g.h();
        if near {
            if v.abs() > tol {
                return Err(Error::IncompatibleInitialDatum(format!("f0({x}) = {v} at the price")));
            }
        } else if x < p0 && v < -tol {
            return Err(Error::IncompatibleInitialDatum(format!("f0({x}) = {v} < 0 left of the price")));
        } else if x > p0 && v > tol {
            return Err(Error::IncompatibleInitialDatum(format!("f0({x}) = {v} > 0 right of the price")));
        }
    }
    let at_price = f0.at(p0)?;
    if at_price.abs() > tol {
        return Err(Error::IncompatibleInitialDatum(format!("f0(p0) = {at_price}")));
    }
    Ok(())
}

/// Shifted-sum transformation `f0 ↦ F0`.
pub fn transform(f0: &NodalField, spec: &TransformSpec) -> Result<NodalField> {
    let g = *f0.grid();
    if (g.lo() + spec.half_width).abs() > 1e-12 || (g.hi() - spec.half_width).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "grid [{}, {}] does not match half width {}",
            g.lo(),
            g.hi(),
            spec.half_width
        )));
    }
    check_sign_condition(f0, spec.initial_price)?;
    let p0 = spec.initial_price;
    let a = spec.cost;
    let l = spec.half_width;
    let tol = 1e-12 * l;
    let values = g
        .nodes()
        .into_iter()
        .map(|x| {
            if x < p0 {
                (0..=spec.k_left)
                    .map(|n| x + n as f64 * a)
                    .take_while(|&y| y <= l + tol)
                    .map(|y| f0.at_or_zero(y).max(0.0))
                    .sum()
            } else if x > p0 {
                (0..=spec.k_right)
                    .map(|n| x - n as f64 * a)
                    .take_while(|&y| y >= -l - tol)
                    .map(|y| f0.at_or_zero(y).min(0.0))
                    .sum()
            } else {
                0.0
            }
        })
        .collect();
    NodalField::new(g, values)
}

/// Inverse of [`transform`]: `f = F − F⁺(· + a) − F⁻(· − a)`.
pub fn back_transform(field: &NodalField, spec: &TransformSpec) -> Result<NodalField> {
    if field.values().iter().all(|&v| v == 0.0) {
        return Ok(field.clone());
    }
    zero_crossing(field)?;
    let a = spec.cost;
    Ok(NodalField::from_fn(*field.grid(), |x| {
        let here = field.at_or_zero(x);
        let ahead = field.at_or_zero(x + a).max(0.0);
        let behind = field.at_or_zero(x - a).min(0.0);
        here - ahead - behind
    }))
}

/// Implicit Euler stepper for `∂ₜF = ∂ₓₓF` with lumped piecewise-linear
/// elements. The system matrix is factored once.
#[derive(Debug, Clone)]
pub struct HeatStepper {
    grid: Grid,
    dt: f64,
    weights: Vec<f64>,
    system: BorderedSystem,
}

impl HeatStepper {
    pub fn new(grid: Grid, dt: f64, bc: BoundaryMode) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let n = grid.n_nodes();
        let h = grid.h();
        let weights = grid.lumped_weights();
        let mut band = TridiagonalSystem::zeros(n);
        for i in 0..n {
            band.diag[i] = weights[i] / dt;
        }
        for i in 0..n - 1 {
            band.diag[i] += 1.0 / h;
            band.diag[i + 1] += 1.0 / h;
            band.upper[i] -= 1.0 / h;
            band.lower[i] -= 1.0 / h;
        }
        let mut extra = Vec::new();
        if let BoundaryMode::Nonlocal { cost } = bc {
            let m = cost / h;
            let mi = m.round() as usize;
            if (m - m.round()).abs() > 1e-9 || mi < 1 || mi + 1 > grid.n_cells() {
                return Err(Error::InvalidArgument(format!(
                    "transaction cost {cost} must be a multiple of the cell width {h} below the half width"
                )));
            }
            // boundary flux at −L equals the centred derivative at −L + a
            let last = n - 1;
            let c = 0.5 / h;
            extra.push((0, mi + 1, c));
            extra.push((0, mi - 1, -c));
            extra.push((last, last - mi + 1, -c));
            extra.push((last, last - mi - 1, c));
        }
        let system = BorderedSystem::new(band, &extra)?;
        Ok(Self { grid, dt, weights, system })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, field: &NodalField) -> Result<NodalField> {
        if !field.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("heat step on a different grid".into()));
        }
        let rhs: Vec<f64> = field.values().iter().zip(&self.weights).map(|(v, w)| v * w / self.dt).collect();
        NodalField::new(self.grid, self.system.solve(&rhs)?)
    }
}

/// One implicit Euler step of the heat equation.
pub fn step_heat(field: &NodalField, dt: f64, bc: BoundaryMode) -> Result<NodalField> {
    HeatStepper::new(*field.grid(), dt, bc)?.step(field)
}

/// `Λ = −∂ₓF(p)`: the slope across the cell containing `p`, or the
/// centred slope over the neighbours when `p` sits on a node.
pub fn transaction_rate(field: &NodalField, price: f64) -> Result<f64> {
    let g = field.grid();
    let (i, theta) = g.locate(price)?;
    let v = field.values();
    let h = g.h();
    let rate = if theta == 0.0 || theta == 1.0 {
        let k = if theta == 0.0 { i } else { i + 1 };
        if k == 0 || k == g.n_cells() {
            return Err(Error::OutOfDomain { x: price, lo: g.lo() + h, hi: g.hi() - h });
        }
        -(v[k + 1] - v[k - 1]) / (2.0 * h)
    } else {
        -(v[i + 1] - v[i]) / h
    };
    if !(rate > 0.0) {
        return Err(Error::HopfViolation { rate, price });
    }
    Ok(rate)
}

/// Integrates the transformed problem from `f0` over `[0, t_end]` in
/// `n_steps` implicit steps, extracting price and transaction rate at
/// every step.
pub fn run_forward(
    f0: &NodalField,
    spec: &TransformSpec,
    t_end: f64,
    n_steps: usize,
    bc: BoundaryMode,
) -> Result<ForwardResult> {
    run_forward_from(&transform(f0, spec)?, spec, 0.0, t_end, n_steps, bc)
}

/// Same as [`run_forward`] but starting from an already transformed field
/// at time `t_start`.
pub fn run_forward_from(
    initial: &NodalField,
    spec: &TransformSpec,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
    bc: BoundaryMode,
) -> Result<ForwardResult> {
    if n_steps == 0 || !(t_end > t_start) {
        return Err(Error::InvalidArgument(format!(
            "need a positive horizon and at least one step, got [{t_start}, {t_end}] / {n_steps}"
        )));
    }
    let dt = (t_end - t_start) / n_steps as f64;
    let stepper = HeatStepper::new(*initial.grid(), dt, bc)?;
    let l = spec.half_width;
    let (lo, hi) = (-l + spec.cost, l - spec.cost);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut prices = Vec::with_capacity(n_steps + 1);
    let mut rates = Vec::with_capacity(n_steps + 1);
    let mut transformed = Vec::with_capacity(n_steps + 1);
    let mut current = initial.clone();
    for k in 0..=n_steps {
        if k > 0 {
            current = stepper.step(&current)?;
        }
        let t = if k == n_steps { t_end } else { t_start + k as f64 * dt };
        let p = zero_crossing(&current)?;
        if !(p > lo && p < hi) {
            return Err(Error::PriceEscaped { t, price: p, lo, hi });
        }
        times.push(t);
        prices.push(p);
        rates.push(transaction_rate(&current, p)?);
        transformed.push(current.clone());
    }
    let final_density = back_transform(&current, spec)?;
    Ok(ForwardResult { series: PriceSeries::new(times, prices, rates)?, transformed, final_density, spec: *spec })
}

/// Buyer and vendor counts `(∫f⁺, ∫|f⁻|)` with trapezoidal weights.
pub fn population_masses(f: &NodalField) -> (f64, f64) {
    let w = f.grid().lumped_weights();
    f.values().iter().zip(&w).fold((0.0, 0.0), |(b, s), (&v, &wi)| (b + wi * v.max(0.0), s + wi * (-v).max(0.0)))
}

/// Long-time equilibrium price on `[-L, L]` for buyer mass `mass_left`
/// and (absolute) vendor mass `mass_right`.
///
/// The stationary transformed field is linear and carries the two masses
/// on its outer bands of width `a`, which gives
/// `p∞ = (2 M_l X − a (M_l − M_r)) / (2 (M_l + M_r)) − X/2` with `X = 2L`
/// the length of the price interval.
pub fn stationary_price(mass_left: f64, mass_right: f64, cost: f64, half_width: f64) -> Result<f64> {
    if !(mass_left >= 0.0 && mass_right >= 0.0) || mass_left + mass_right == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "masses must be non-negative and not both zero, got {mass_left}, {mass_right}"
        )));
    }
    let x = 2.0 * half_width;
    Ok((2.0 * mass_left * x - cost * (mass_left - mass_right)) / (2.0 * (mass_left + mass_right)) - 0.5 * x)
}
