//! Synthetic data generation, perturbation sweeps and price prediction.

use rayon::prelude::*;

use crate::assimilate::{reconstruct_final_density, AssimilationConfig, AssimilationMode, ReconstructionResult};
use crate::error::{Error, Result};
use crate::forward::{
    run_forward, run_forward_from, transform, BoundaryMode, ForwardResult, PriceSeries, TransformSpec,
};
use crate::mesh::{build_uniform_grid, zero_crossing, NodalField};
use std::f64::consts::PI;

/// Initial densities used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialDatum {
    /// `(x + 0.75)(x − 0.65)(x − 0.05)`, price 0.05
    Cubic1,
    /// `(x + 0.75)(x − 0.65)(x + 0.05)`, price −0.05
    Cubic2,
    /// `−sin(2πx)`, price 0
    Symmetric,
}

impl InitialDatum {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cubic-1" => Some(Self::Cubic1),
            "cubic-2" => Some(Self::Cubic2),
            "symmetric" => Some(Self::Symmetric),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cubic1 => "cubic-1",
            Self::Cubic2 => "cubic-2",
            Self::Symmetric => "symmetric",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::Cubic1 => (x + 0.75) * (x - 0.65) * (x - 0.05),
            Self::Cubic2 => (x + 0.75) * (x - 0.65) * (x + 0.05),
            Self::Symmetric => -(2.0 * PI * x).sin(),
        }
    }

    pub fn initial_price(self) -> f64 {
        match self {
            Self::Cubic1 => 0.05,
            Self::Cubic2 => -0.05,
            Self::Symmetric => 0.0,
        }
    }

    pub fn sample(self, half_width: f64, n_cells: usize) -> Result<NodalField> {
        let g = build_uniform_grid(half_width, n_cells)?;
        let p0 = self.initial_price();
        // exact zero at the price node
        Ok(NodalField::from_fn(g, |x| if (x - p0).abs() < 1e-12 { 0.0 } else { self.eval(x) }))
    }
}

/// Forward data on the refined grid, sampled for assimilation.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Price and rate at the assimilation time steps.
    pub series: PriceSeries,
    /// Density at `ε` on the refined grid.
    pub density_eps: NodalField,
    /// Density at `T` on the assimilation grid.
    pub density_final: NodalField,
    /// Transformed field at `T` on the assimilation grid.
    pub transformed_final: NodalField,
    pub forward: ForwardResult,
}

pub fn generate_data(datum: InitialDatum, cfg: &AssimilationConfig, bc: BoundaryMode) -> Result<SyntheticData> {
    cfg.validate()?;
    let f0 = datum.sample(cfg.half_width, cfg.n_cells * cfg.data_refinement)?;
    generate_data_from(&f0, datum.initial_price(), cfg, bc)
}

/// [`generate_data`] for an arbitrary initial density given on the refined
/// grid with price `p0`.
pub fn generate_data_from(
    f0: &NodalField,
    p0: f64,
    cfg: &AssimilationConfig,
    bc: BoundaryMode,
) -> Result<SyntheticData> {
    cfg.validate()?;
    let r = cfg.data_refinement;
    if f0.grid().n_cells() != cfg.n_cells * r {
        return Err(Error::GridMismatch(format!(
            "initial density has {} cells, expected {}",
            f0.grid().n_cells(),
            cfg.n_cells * r
        )));
    }
    let spec = TransformSpec::new(cfg.cost, p0, cfg.half_width)?;
    let forward = run_forward(f0, &spec, cfg.t_end, cfg.n_steps * r, bc)?;
    let series = forward.series.subsample(r);
    series.check_margins(cfg.half_width, cfg.margin)?;
    let dt_fine = cfg.t_end / (cfg.n_steps * r) as f64;
    let k_eps = (cfg.epsilon / dt_fine).round() as usize;
    let density_eps = forward.density_at(k_eps)?;
    let grid = cfg.grid()?;
    Ok(SyntheticData {
        series,
        density_eps,
        density_final: forward.final_density.resample(grid),
        transformed_final: forward.transformed.last().expect("nonempty run").resample(grid),
        forward,
    })
}

/// Default boundary treatment for a configuration.
pub fn default_boundary(cfg: &AssimilationConfig) -> BoundaryMode {
    BoundaryMode::Nonlocal { cost: cfg.cost }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationMode {
    /// `p + kδ sin(πt)`
    Slow,
    /// `p + δ sin(4kπt)`
    Fast,
}

impl PerturbationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "slow" => Some(Self::Slow),
            "fast" => Some(Self::Fast),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Slow => "slow",
            Self::Fast => "fast",
        }
    }

    /// Amplitude of the `k`-th perturbation.
    pub fn amplitude(self, delta: f64, k: usize) -> f64 {
        match self {
            Self::Slow => k as f64 * delta,
            Self::Fast if k == 0 => 0.0,
            Self::Fast => delta,
        }
    }
}

/// Perturbed copy of `base`; rates are carried over unchanged.
pub fn perturb_price(
    base: &PriceSeries,
    delta: f64,
    k: usize,
    mode: PerturbationMode,
    half_width: f64,
    margin: f64,
) -> Result<PriceSeries> {
    let kf = k as f64;
    let prices = base
        .times
        .iter()
        .zip(&base.prices)
        .map(|(&t, &p)| match mode {
            PerturbationMode::Slow => p + kf * delta * (PI * t).sin(),
            PerturbationMode::Fast => p + delta * (4.0 * kf * PI * t).sin(),
        })
        .collect();
    let out = PriceSeries::new(base.times.clone(), prices, base.rates.clone())?;
    out.check_margins(half_width, margin)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub k: usize,
    pub delta: f64,
    /// `(Σ_i ‖u_i^k − u_i^0‖²)^{1/2}` over all basis functions.
    pub control_error: f64,
    /// Discrete C¹ distance between the reconstructions.
    pub reconstruction_error: f64,
}

/// `max|u − v| + max|Δ(u − v)/h|` on a common grid.
pub fn c1_distance(u: &NodalField, v: &NodalField) -> Result<f64> {
    if !u.grid().same_as(v.grid()) {
        return Err(Error::GridMismatch("C¹ distance on different grids".into()));
    }
    let d: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
    let h = u.grid().h();
    let sup = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let slope = d.windows(2).fold(0.0f64, |m, w| m.max(((w[1] - w[0]) / h).abs()));
    Ok(sup + slope)
}

fn control_distance(a: &ReconstructionResult, b: &ReconstructionResult, dt: f64) -> f64 {
    let mut sum = 0.0;
    for (ua, ub) in a.controls.iter().zip(&b.controls) {
        let n = ua.len();
        for (k, (x, y)) in ua.iter().zip(ub).enumerate() {
            let tau = if k == 0 || k + 1 == n { 0.5 * dt } else { dt };
            sum += tau * (x - y) * (x - y);
        }
    }
    sum.sqrt()
}

/// Reconstructions from `clean` and its `K` perturbations, with errors
/// relative to the unperturbed one. Rows are ordered by `k`.
pub fn stability_sweep(
    clean: &PriceSeries,
    cfg: &AssimilationConfig,
    delta: f64,
    count: usize,
    mode: PerturbationMode,
    f_eps: Option<&NodalField>,
) -> Result<Vec<StabilityRow>> {
    let runs: Vec<Result<ReconstructionResult>> = (0..=count)
        .into_par_iter()
        .map(|k| {
            let data = perturb_price(clean, delta, k, mode, cfg.half_width, cfg.margin)?;
            reconstruct_final_density(&data, cfg, f_eps)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let dt = cfg.time_step();
    runs.iter()
        .enumerate()
        .map(|(k, run)| {
            Ok(StabilityRow {
                k,
                delta: mode.amplitude(delta, k),
                control_error: control_distance(run, &runs[0], dt),
                reconstruction_error: c1_distance(&run.fhat, &runs[0].fhat)?,
            })
        })
        .collect()
}

/// Settings of a prediction run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionConfig {
    pub half_width: f64,
    pub cost: f64,
    pub start: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub bc: BoundaryMode,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub series: PriceSeries,
    /// Reconstruction after sign cleanup.
    pub cleaned: NodalField,
    /// Predicted minus measured price at the start.
    pub jump: f64,
}

/// Projects a reconstruction onto densities with one sign change: the sign
/// change nearest `price_hint` is kept, positive values are clamped to zero
/// right of it and negative ones left of it.
pub fn clean_reconstruction(fhat: &NodalField, price_hint: f64) -> Result<(NodalField, f64)> {
    let g = *fhat.grid();
    let v = fhat.values();
    let mut best: Option<(usize, f64)> = None;
    let mut last_pos: Option<usize> = None;
    for i in 0..v.len() {
        if v[i] > 0.0 {
            last_pos = Some(i);
        } else if v[i] < 0.0 {
            if let Some(j) = last_pos.take() {
                let x = g.node(j) + (g.node(i) - g.node(j)) * v[j] / (v[j] - v[i]);
                if best.is_none_or(|(_, b)| (x - price_hint).abs() < (b - price_hint).abs()) {
                    best = Some((j, x));
                }
            }
        }
    }
    let (j, _) = best.ok_or_else(|| {
        Error::IncompatibleReconstruction("reconstruction has no positive-to-negative sign change".into())
    })?;
    let cleaned = NodalField::from_fn(g, |_| 0.0);
    let mut values = cleaned.into_values();
    for (i, (out, &x)) in values.iter_mut().zip(v).enumerate() {
        *out = if i <= j { x.max(0.0) } else { x.min(0.0) };
    }
    let cleaned = NodalField::new(g, values)?;
    let price = zero_crossing(&cleaned)
        .map_err(|e| Error::IncompatibleReconstruction(format!("cleanup left no single crossing: {e}")))?;
    Ok((cleaned, price))
}

/// Restarts the forward solver from a reconstructed density.
pub fn predict_price(fhat: &NodalField, measured_price: f64, cfg: &PredictionConfig) -> Result<Prediction> {
    let (cleaned, price) = clean_reconstruction(fhat, measured_price)?;
    let spec = TransformSpec::restart(cfg.cost, price, cfg.half_width)
        .map_err(|e| Error::IncompatibleReconstruction(format!("restart price {price}: {e}")))?;
    let initial = transform(&cleaned, &spec)?;
    let run = run_forward_from(&initial, &spec, cfg.start, cfg.start + cfg.horizon, cfg.n_steps, cfg.bc)?;
    let jump = run.series.prices[0] - measured_price;
    Ok(Prediction { series: run.series, cleaned, jump })
}

/// Named parameter sets of the three experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentPreset {
    pub datum: InitialDatum,
    pub assimilation: AssimilationConfig,
    pub perturbation: PerturbationMode,
    pub delta: f64,
    pub sweep_count: usize,
    pub sweep_basis: usize,
    pub horizon: f64,
}

impl ExperimentPreset {
    pub fn by_id(id: u32) -> Option<Self> {
        let base = AssimilationConfig::default();
        let one = Self {
            datum: InitialDatum::Cubic1,
            assimilation: base,
            perturbation: PerturbationMode::Slow,
            delta: 0.01,
            sweep_count: 13,
            sweep_basis: 80,
            horizon: 0.25,
        };
        match id {
            1 => Some(one),
            2 => Some(Self { datum: InitialDatum::Cubic2, ..one }),
            3 => {
                let mut a = base;
                a.n_cells = 100;
                a.n_steps = 100;
                a.t_end = 0.5;
                a.n_basis = 80;
                a.optimizer.alpha = 0.05;
                a.optimizer.gamma = 0.1;
                Some(Self {
                    datum: InitialDatum::Symmetric,
                    assimilation: a,
                    perturbation: PerturbationMode::Fast,
                    delta: 0.01,
                    sweep_count: 5,
                    sweep_basis: 80,
                    horizon: 0.5,
                })
            }
            _ => None,
        }
    }

    pub fn prediction(&self, bc: BoundaryMode) -> PredictionConfig {
        let a = &self.assimilation;
        PredictionConfig {
            half_width: a.half_width,
            cost: a.cost,
            start: a.t_end,
            horizon: self.horizon,
            n_steps: ((self.horizon / a.time_step()).round() as usize).max(1),
            bc,
        }
    }
}

/// Mode-independent convenience: reconstruct from synthetic data.
pub fn reconstruct_synthetic(data: &SyntheticData, cfg: &AssimilationConfig) -> Result<ReconstructionResult> {
    let f_eps = match cfg.mode {
        AssimilationMode::Verification => Some(&data.density_eps),
        AssimilationMode::Assimilation => None,
    };
    reconstruct_final_density(&data.series, cfg, f_eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series() -> PriceSeries {
        let times: Vec<f64> = (0..=100).map(|k| 0.01 * k as f64).collect();
        let prices = times.iter().map(|t| 0.05 + 0.02 * t).collect();
        PriceSeries::new(times, prices, vec![1.0; 101]).unwrap()
    }

    #[test]
    fn perturbation_examples() {
        let base = series();
        for mode in [PerturbationMode::Slow, PerturbationMode::Fast] {
            assert_eq!(perturb_price(&base, 0.0, 3, mode, 0.5, 0.05).unwrap(), base);
            let p = perturb_price(&base, 0.01, 2, mode, 0.5, 0.05).unwrap();
            assert_eq!(p.prices[0], base.prices[0]);
            assert_eq!(p.rates, base.rates);
        }
        let slow = perturb_price(&base, 0.01, 1, PerturbationMode::Slow, 0.5, 0.05).unwrap();
        assert_abs_diff_eq!(slow.prices[50], base.prices[50] + 0.01, epsilon = 1e-15);
        for k in 1..5 {
            let fast = perturb_price(&base, 0.01, k, PerturbationMode::Fast, 0.5, 0.05).unwrap();
            assert_abs_diff_eq!(fast.prices[50], base.prices[50], epsilon = 1e-15);
        }
        assert!(matches!(
            perturb_price(&base, 0.1, 5, PerturbationMode::Slow, 0.5, 0.05),
            Err(Error::PriceEscaped { .. })
        ));
    }

    #[test]
    fn data_are_admissible() {
        for datum in [InitialDatum::Cubic1, InitialDatum::Cubic2, InitialDatum::Symmetric] {
            let f = datum.sample(0.5, 200).unwrap();
            let spec = TransformSpec::new(0.05, datum.initial_price(), 0.5).unwrap();
            transform(&f, &spec).unwrap();
        }
    }

    #[test]
    fn c1_distance_examples() {
        let g = build_uniform_grid(0.5, 10).unwrap();
        let u = NodalField::from_fn(g, |x| x);
        assert_eq!(c1_distance(&u, &u).unwrap(), 0.0);
        let z = NodalField::zeros(g);
        assert_abs_diff_eq!(c1_distance(&u, &z).unwrap(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn cleanup_keeps_crossing_near_hint() {
        let g = build_uniform_grid(0.5, 10).unwrap();
        // sign changes near −0.25 (spurious) and 0.05
        let f = NodalField::new(g, vec![1.0, 0.5, 0.2, -0.01, 0.3, 0.2, -0.2, -0.4, 0.02, -0.3, -0.1]).unwrap();
        let (c, p) = clean_reconstruction(&f, 0.04).unwrap();
        assert_abs_diff_eq!(p, 0.05, epsilon = 1e-12);
        assert_eq!(c.values(), &[1.0, 0.5, 0.2, 0.0, 0.3, 0.2, -0.2, -0.4, 0.0, -0.3, -0.1]);
        let bad = NodalField::from_fn(g, |_| -1.0);
        assert!(matches!(clean_reconstruction(&bad, 0.0), Err(Error::IncompatibleReconstruction(_))));
    }

    #[test]
    fn presets() {
        let p1 = ExperimentPreset::by_id(1).unwrap();
        assert_eq!((p1.assimilation.n_cells, p1.assimilation.n_steps, p1.assimilation.n_basis), (200, 125, 50));
        let p3 = ExperimentPreset::by_id(3).unwrap();
        assert_eq!(p3.prediction(BoundaryMode::Neumann).n_steps, 100);
        assert!(ExperimentPreset::by_id(4).is_none());
    }
}
