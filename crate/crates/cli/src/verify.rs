//! Invariant suite behind `llassim verify`.

use std::f64::consts::PI;

use llassim::adjoint::AdjointOperator;
use llassim::forward::{population_masses, HeatStepper};
use llassim::mesh::{build_uniform_grid, Grid, NodalField};
use llassim::{
    back_transform, coefficients, gradient, objective, reconstruct_final_density, reconstruction_error, run_forward,
    stationary_price, transform, AssimilationMode, BoundaryMode, Region, Side, TransformSpec,
};

use crate::commands::{initial_density, synthetic};
use crate::config::RunConfig;
use crate::{Outcome, ResultExt};

pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.threshold
    }
}

fn rel_change(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs().max(f64::MIN_POSITIVE)
}

/// Runs every check; solver errors abort the suite.
pub fn run(cfg: &RunConfig) -> Outcome<Vec<Check>> {
    let a = &cfg.assimilation;
    let l = a.half_width;
    let grid = build_uniform_grid(l, a.n_cells).solver()?;
    let h = grid.h();
    let dt = a.time_step();
    let (f0_fine, p0) = initial_density(cfg, None)?;
    let f0 = f0_fine.resample(grid);
    let spec = TransformSpec::new(a.cost, p0, l).solver()?;
    let nonlocal = BoundaryMode::Nonlocal { cost: a.cost };
    let mut checks = Vec::new();

    let big_f = transform(&f0, &spec).solver()?;
    let back = back_transform(&big_f, &spec).solver()?;
    let round_trip = back.values().iter().zip(f0.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    checks.push(Check { name: "transform_round_trip", value: round_trip, threshold: 1e-12 });

    let neumann = HeatStepper::new(grid, dt, BoundaryMode::Neumann).solver()?;
    let mut field = big_f.clone();
    for _ in 0..a.n_steps {
        field = neumann.step(&field).solver()?;
    }
    // relative to ∫|F|, which stays positive when the signed integral is 0
    let scale = big_f.map(f64::abs).integral();
    checks.push(Check {
        name: "neumann_integral_drift",
        value: (field.integral() - big_f.integral()).abs() / scale,
        threshold: 1e-10,
    });

    let run = run_forward(&f0, &spec, a.t_end, a.n_steps, nonlocal).solver()?;
    let (b0, s0) = population_masses(&f0);
    let mut drift = 0.0f64;
    for k in 0..run.transformed.len() {
        let (b, s) = population_masses(&run.density_at(k).solver()?);
        drift = drift.max(rel_change(b0, b)).max(rel_change(s0, s));
    }
    checks.push(Check { name: "nonlocal_mass_drift", value: drift, threshold: 1e-10 });

    let theta = PI / (2.0 * l);
    let expected = 1.0 / (1.0 + dt * theta * theta);
    let mut mode = NodalField::from_fn(grid, |x| (theta * (x + l)).cos());
    let mut worst = 0.0f64;
    for _ in 0..a.n_steps {
        let next = neumann.step(&mode).solver()?;
        let num: f64 = next.values().iter().zip(mode.values()).map(|(x, y)| x * y).sum();
        let den: f64 = mode.values().iter().map(|y| y * y).sum();
        worst = worst.max((num / den / expected - 1.0).abs());
        mode = next;
    }
    checks.push(Check { name: "eigenmode_decay_rate", value: worst, threshold: 1e-2 });

    let long_steps = (5.0 / dt).round() as usize;
    let long = run_forward(&f0, &spec, 5.0, long_steps, nonlocal).solver()?;
    let p_inf = stationary_price(b0, s0, a.cost, l).solver()?;
    checks.push(Check {
        name: "stationary_price_gap",
        value: (long.series.final_price() - p_inf).abs(),
        threshold: 2.0 * h,
    });

    checks.push(Check { name: "adjoint_gradient", value: gradient_check(cfg, &f0, &spec)?, threshold: 1e-4 });

    let data = synthetic(cfg)?;
    let f_eps = match a.mode {
        AssimilationMode::Verification => Some(&data.density_eps),
        AssimilationMode::Assimilation => None,
    };
    let result = reconstruct_final_density(&data.series, a, f_eps).solver()?;
    let non_monotone = result.diagnostics.iter().filter(|d| !d.monotone).count();
    checks.push(Check { name: "non_monotone_descents", value: non_monotone as f64, threshold: 0.0 });
    let region = Region::Interior { price: data.series.final_price() };
    checks.push(Check {
        name: "reconstruction_error",
        value: reconstruction_error(&result.fhat, &data.density_final, region).solver()?,
        threshold: reconstruction_threshold(cfg.experiment),
    });
    Ok(checks)
}

/// Interior relative L² error bounds over the preset runs, which give 0.237,
/// 0.278 and 0.608. The symmetric datum has its largest values next to the
/// interface, where the reconstruction is least accurate.
fn reconstruction_threshold(experiment: u32) -> f64 {
    match experiment {
        3 => 0.7,
        _ => 0.3,
    }
}

/// Worst relative mismatch between the companion gradient and central
/// differences on a 50-cell, 30-step adjoint problem.
fn gradient_check(cfg: &RunConfig, f0: &NodalField, spec: &TransformSpec) -> Outcome<f64> {
    let a = &cfg.assimilation;
    let run = run_forward(f0, spec, a.t_end, 30, BoundaryMode::Nonlocal { cost: a.cost }).solver()?;
    let reference = Grid::unit(50).solver()?;
    let psi = NodalField::from_fn(reference, |y| reference.hat(35, y));
    let u: Vec<f64> = (0..=30).map(|k| 0.5 * (1.3 * k as f64 + 0.4).sin()).collect();
    let alpha = a.optimizer.alpha;
    let mut worst = 0.0f64;
    for side in [Side::Left, Side::Right] {
        let c = coefficients(&run.series, a.half_width, side).solver()?;
        let op = AdjointOperator::new(&c, 50).solver()?;
        let tau = op.time_weights();
        let j = |u: &[f64]| -> Outcome<f64> {
            let phi = NodalField::new(reference, op.initial_state(psi.values(), u).solver()?).solver()?;
            Ok(objective(&phi, op.initial_weight(), u, op.dt(), alpha))
        };
        let phi0 = op.initial_state(psi.values(), &u).solver()?;
        let start = NodalField::new(reference, phi0.iter().map(|v| -v).collect()).solver()?;
        let comp = op.solve_companion(&start).solver()?;
        let g = gradient(&u, &comp, &c, alpha, side).solver()?;
        let (mut diff, mut norm) = (0.0, 0.0);
        for k in 0..u.len() {
            let e = 1e-6;
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[k] += e;
            dn[k] -= e;
            let fd = (j(&up)? - j(&dn)?) / (2.0 * e) / tau[k];
            diff += (g[k] - fd).powi(2);
            norm += fd * fd;
        }
        worst = worst.max((diff / norm).sqrt());
    }
    Ok(worst)
}
