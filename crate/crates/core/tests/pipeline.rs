//! End-to-end properties of forward data, null controls and
//! reconstructions.

use llassim::adjoint::AdjointOperator;
use llassim::assimilate::reconstruct_final_density;
use llassim::control::solve_null_control_with;
use llassim::domainmap::map_from_reference;
use llassim::experiments::{default_boundary, generate_data, reconstruct_synthetic, InitialDatum, SyntheticData};
use llassim::mesh::{Grid, NodalField};
use llassim::{
    coefficients, duality_rhs, perturb_price, predict_price, reconstruction_error, stability_sweep, AssimilationConfig,
    AssimilationMode, OptimizerSettings, PerturbationMode, PriceSeries, Region, Side,
};

fn small_config() -> AssimilationConfig {
    AssimilationConfig { n_cells: 100, n_steps: 50, n_basis: 20, ..AssimilationConfig::default() }
}

fn data(datum: InitialDatum, cfg: &AssimilationConfig) -> SyntheticData {
    generate_data(datum, cfg, default_boundary(cfg)).unwrap()
}

/// `∫ f(x, T) ψ(x) dx` over one side by Simpson's rule on the fine density.
fn final_moment(d: &SyntheticData, psi: impl Fn(f64) -> f64, side: Side, l: f64) -> f64 {
    let p = d.series.final_price();
    let (lo, hi) = match side {
        Side::Left => (-l, p),
        Side::Right => (p, l),
    };
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| d.forward.final_density.at_or_zero(x) * psi(x);
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn duality_rhs_reproduces_hat_moment() {
    let cfg = AssimilationConfig::default();
    let d = data(InitialDatum::Cubic1, &cfg);
    let basis = cfg.basis_grid().unwrap();
    let reference = Grid::unit(cfg.reference_cells()).unwrap();
    let p_t = d.series.final_price();
    let l = cfg.half_width;
    for (i, side) in [(10, Side::Left), (42, Side::Right)] {
        let coeffs = coefficients(&d.series, l, side).unwrap();
        let op = AdjointOperator::new(&coeffs, cfg.reference_cells()).unwrap();
        let psi = NodalField::from_fn(reference, |y| basis.hat(i, map_from_reference(y, p_t, l, side)));
        let sol = solve_null_control_with(&op, &psi, &coeffs, &cfg.optimizer).unwrap();
        let rhs = duality_rhs(&sol, &d.series, cfg.cost, l, Some(&d.density_eps)).unwrap();
        let exact = final_moment(&d, |x| basis.hat(i, x), side, l);
        assert!((rhs - exact).abs() <= 0.02 * exact.abs(), "node {i}: {rhs} vs {exact}");
    }
}

#[test]
fn vanishing_rates_and_empty_side_give_zero_coefficients() {
    let cfg = AssimilationConfig { mode: AssimilationMode::Verification, ..small_config() };
    let n = cfg.n_steps + 1;
    let times: Vec<f64> = (0..n).map(|k| cfg.t_end * k as f64 / cfg.n_steps as f64).collect();
    let series = PriceSeries::new(times, vec![0.05; n], vec![0.0; n]).unwrap();
    let f_eps = InitialDatum::Cubic1.sample(cfg.half_width, cfg.n_cells * 2).unwrap().map(|v| v.max(0.0));
    let r = reconstruct_final_density(&series, &cfg, Some(&f_eps)).unwrap();
    let basis = cfg.basis_grid().unwrap();
    for (i, c) in r.coefficients.iter().enumerate() {
        if basis.node(i) > 0.05 {
            assert_eq!(*c, 0.0, "vendor coefficient {i}");
        }
    }
    assert!(r.coefficients.iter().any(|c| *c > 0.0));
}

#[test]
fn non_monotone_price_is_reconstructed_comparably() {
    let cfg = AssimilationConfig::default();
    let mut errors = Vec::new();
    for datum in [InitialDatum::Cubic1, InitialDatum::Cubic2] {
        let d = data(datum, &cfg);
        let r = reconstruct_synthetic(&d, &cfg).unwrap();
        let region = Region::Interior { price: d.series.final_price() };
        errors.push(reconstruction_error(&r.fhat, &d.density_final, region).unwrap());
    }
    assert!(errors[1] <= 2.0 * errors[0], "{errors:?}");
}

#[test]
fn assimilation_mode_is_close_to_verification_mode() {
    let cfg = small_config();
    let d = data(InitialDatum::Cubic1, &cfg);
    let v = reconstruct_synthetic(&d, &cfg).unwrap();
    let a = reconstruct_synthetic(&d, &AssimilationConfig { mode: AssimilationMode::Assimilation, ..cfg }).unwrap();
    let diff = reconstruction_error(&a.fhat, &v.fhat, Region::Full).unwrap();
    assert!(diff < 0.05, "{diff}");
}

#[test]
fn duality_rhs_is_nearly_linear_in_the_test_function() {
    let cfg = small_config();
    let d = data(InitialDatum::Cubic1, &cfg);
    let l = cfg.half_width;
    let reference = Grid::unit(cfg.reference_cells()).unwrap();
    let coeffs = coefficients(&d.series, l, Side::Left).unwrap();
    let op = AdjointOperator::new(&coeffs, cfg.reference_cells()).unwrap();
    let settings = OptimizerSettings { tolerance: 1e-8, max_iterations: 2000, ..cfg.optimizer };
    let rhs = |psi: &NodalField| {
        let sol = solve_null_control_with(&op, psi, &coeffs, &settings).unwrap();
        duality_rhs(&sol, &d.series, cfg.cost, l, Some(&d.density_eps)).unwrap()
    };
    let a = NodalField::from_fn(reference, |y| reference.hat(12, y));
    let b = NodalField::from_fn(reference, |y| (3.0 * y).sin());
    let sum = NodalField::new(reference, a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect()).unwrap();
    let (ra, rb, rs) = (rhs(&a), rhs(&b), rhs(&sum));
    assert!((rs - ra - rb).abs() <= 1e-3 * rs.abs(), "{rs} vs {ra} + {rb}");
}

#[test]
fn residual_shrinks_with_the_regularization() {
    let cfg = small_config();
    let d = data(InitialDatum::Cubic1, &cfg);
    let reference = Grid::unit(cfg.reference_cells()).unwrap();
    let coeffs = coefficients(&d.series, cfg.half_width, Side::Right).unwrap();
    let op = AdjointOperator::new(&coeffs, cfg.reference_cells()).unwrap();
    let psi = NodalField::from_fn(reference, |y| reference.hat(30, y));
    let residuals: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&alpha| {
            let s = OptimizerSettings { alpha, tolerance: 1e-7, max_iterations: 2000, ..cfg.optimizer };
            solve_null_control_with(&op, &psi, &coeffs, &s).unwrap().residual
        })
        .collect();
    assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
}

#[test]
fn control_difference_is_quadratic_in_the_perturbation() {
    let cfg = small_config();
    let d = data(InitialDatum::Cubic1, &cfg);
    let l = cfg.half_width;
    let reference = Grid::unit(cfg.reference_cells()).unwrap();
    let lumped = reference.lumped_weights();
    let psi = NodalField::from_fn(reference, |y| reference.hat(30, y));
    let settings = OptimizerSettings { tolerance: 1e-9, max_iterations: 3000, ..cfg.optimizer };
    let solve = |s: &PriceSeries| {
        let c = coefficients(s, l, Side::Left).unwrap();
        let op = AdjointOperator::new(&c, cfg.reference_cells()).unwrap();
        let w0 = op.initial_weight();
        (solve_null_control_with(&op, &psi, &c, &settings).unwrap(), w0, op.time_weights())
    };
    let (base, w0, tau) = solve(&d.series);
    let ks = [4usize, 6, 8, 10];
    let q: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let s = perturb_price(&d.series, 0.002, k, PerturbationMode::Slow, l, cfg.margin).unwrap();
            let (sol, _, _) = solve(&s);
            let phi = sol.trajectory.snapshots[0].values();
            let phi0 = base.trajectory.snapshots[0].values();
            let space: f64 = phi.iter().zip(phi0).zip(&lumped).map(|((a, b), c)| c * (a - b).powi(2)).sum();
            let time: f64 =
                sol.control.iter().zip(&base.control).zip(&tau).map(|((a, b), t)| t * (a - b).powi(2)).sum();
            w0 * space + 0.5 * cfg.optimizer.alpha * time
        })
        .collect();
    let x: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let y: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 4.0, y.iter().sum::<f64>() / 4.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!(slope >= 1.5, "slope {slope}, values {q:?}");
}

#[test]
fn empty_sweep_is_a_single_zero_row() {
    let cfg = small_config();
    let d = data(InitialDatum::Cubic1, &cfg);
    let rows = stability_sweep(&d.series, &cfg, 0.01, 0, PerturbationMode::Slow, Some(&d.density_eps)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].k, rows[0].control_error, rows[0].reconstruction_error), (0, 0.0, 0.0));
}

#[test]
fn restart_from_the_exact_density_continues_the_price() {
    let cfg = AssimilationConfig::default();
    let d = data(InitialDatum::Cubic1, &cfg);
    let preset = llassim::experiments::ExperimentPreset::by_id(1).unwrap();
    let pc = preset.prediction(default_boundary(&cfg));
    let h = 2.0 * cfg.half_width / cfg.n_cells as f64;
    let p = predict_price(&d.density_final, d.series.final_price(), &pc).unwrap();
    assert!(p.jump.abs() <= 2.0 * h, "jump {}", p.jump);
    assert_eq!(p.series.times[0], cfg.t_end);
    assert!((p.series.times.last().unwrap() - (cfg.t_end + pc.horizon)).abs() < 1e-12);
}
