//! Regularized null control of the adjoint problem by steepest descent
//! with an Armijo–Goldstein line search.

use crate::adjoint::{AdjointOperator, AdjointTrajectory, TrajectoryKind};
use crate::domainmap::{MapCoefficients, Side};
use crate::error::{Error, Result};
use crate::mesh::NodalField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub alpha: f64,
    pub beta0: f64,
    pub gamma: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_halvings: usize,
    /// Divide the boundary term of the gradient by the subdomain width.
    /// `false` gives the plain `αu + ∂_yG(1)` update direction.
    pub weighted_gradient: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta0: 0.25,
            gamma: 0.2,
            max_iterations: 250,
            tolerance: 1e-5,
            max_halvings: 4,
            weighted_gradient: true,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let ok =
            self.alpha >= 0.0 && self.beta0 > 0.0 && self.gamma > 0.0 && self.gamma <= 1.0 && self.tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Result of a line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoOutcome {
    pub step: f64,
    pub objective: f64,
    /// `false` when no candidate met the sufficient-decrease condition and
    /// the smallest one was taken.
    pub descended: bool,
}

#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub side: Side,
    pub control: Vec<f64>,
    /// `‖Φ(·, ε)‖` in physical coordinates.
    pub residual: f64,
    /// Residual of the uncontrolled problem `u = 0`.
    pub initial_residual: f64,
    /// Objective before the first and after every iteration.
    pub objective_history: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    /// One entry per iteration; `false` where the line search failed.
    pub descended: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: AdjointTrajectory,
}

impl ControlSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("empty history")
    }
}

fn trapezoid_sq(u: &[f64], tau: &[f64]) -> f64 {
    u.iter().zip(tau).map(|(v, t)| v * v * t).sum()
}

fn trapezoid_weights(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|k| if k == 0 || k + 1 == n { 0.5 * dt } else { dt }).collect()
}

/// `½·w·∫Φ(·, ε)² + (α/2)·∫u²`, both by the trapezoidal rule; `w` is the
/// ratio between physical and grid length (1 for a physical grid).
pub fn objective(phi_at_eps: &NodalField, weight: f64, u: &[f64], dt: f64, alpha: f64) -> f64 {
    let c = phi_at_eps.grid().lumped_weights();
    let space: f64 = phi_at_eps.values().iter().zip(&c).map(|(v, w)| v * v * w).sum();
    0.5 * weight * space + 0.5 * alpha * trapezoid_sq(u, &trapezoid_weights(u.len(), dt))
}

/// L² gradient of the objective with respect to the control, from the
/// companion solve started at `−Φ(·, ε)`.
pub fn gradient(
    u: &[f64],
    companion: &AdjointTrajectory,
    coeffs: &MapCoefficients,
    alpha: f64,
    side: Side,
) -> Result<Vec<f64>> {
    if companion.kind != TrajectoryKind::Companion || companion.side != side || coeffs.side != side {
        return Err(Error::InvalidArgument(format!("gradient needs a {} companion trajectory", side.name())));
    }
    if u.len() != companion.gradient_flux.len() {
        return Err(Error::InvalidArgument("control and companion lengths differ".into()));
    }
    Ok(u.iter().zip(&companion.gradient_flux).map(|(v, f)| alpha * v + f).collect())
}

/// Backtracking on `β0, β0/2, …, β0/2^max_halvings` until
/// `J(u + βd) ≤ J(u) + βγ ∇J·d`. `evaluate(β)` returns `J(u + βd)` and
/// `slope` is `∇J·d`.
pub fn armijo_step(
    current: f64,
    slope: f64,
    mut evaluate: impl FnMut(f64) -> Result<f64>,
    settings: &OptimizerSettings,
) -> Result<ArmijoOutcome> {
    let mut beta = settings.beta0;
    let mut value = evaluate(beta)?;
    for halving in 0..=settings.max_halvings {
        if value <= current + beta * settings.gamma * slope {
            return Ok(ArmijoOutcome { step: beta, objective: value, descended: true });
        }
        if halving < settings.max_halvings {
            beta *= 0.5;
            value = evaluate(beta)?;
        }
    }
    Ok(ArmijoOutcome { step: beta, objective: value, descended: false })
}

/// Steepest descent from `u = 0` for the control steering the adjoint
/// state started at `ψ` to zero at the first sample.
pub fn solve_null_control(
    terminal: &NodalField,
    coeffs: &MapCoefficients,
    settings: &OptimizerSettings,
) -> Result<ControlSolution> {
    let op = AdjointOperator::new(coeffs, terminal.grid().n_cells())?;
    solve_null_control_with(&op, terminal, coeffs, settings)
}

/// Same as [`solve_null_control`] with a prebuilt operator.
pub fn solve_null_control_with(
    op: &AdjointOperator,
    terminal: &NodalField,
    coeffs: &MapCoefficients,
    settings: &OptimizerSettings,
) -> Result<ControlSolution> {
    settings.validate()?;
    let n_t = op.n_samples();
    let tau = op.time_weights();
    let w0 = op.initial_weight();
    let lumped = op.grid().lumped_weights();
    let alpha = settings.alpha;
    let space_sq = |v: &[f64]| -> f64 { v.iter().zip(&lumped).map(|(x, c)| x * x * c).sum() };
    let space_dot = |v: &[f64], s: &[f64]| -> f64 { v.iter().zip(s).zip(&lumped).map(|((x, y), c)| x * y * c).sum() };
    let time_dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(&tau).map(|((x, y), t)| x * y * t).sum() };

    let mut u = vec![0.0; n_t];
    let mut phi0 = op.initial_state(terminal.values(), &u)?;
    let initial_residual = (w0 * space_sq(&phi0)).sqrt();
    let mut value = 0.5 * w0 * space_sq(&phi0);
    let mut history = vec![value];
    let mut gradient_norms = Vec::new();
    let mut descended = Vec::new();
    let mut converged = false;
    let zero_terminal = vec![0.0; terminal.values().len()];

    let mut iterations = 0;
    loop {
        let minus_phi: Vec<f64> = phi0.iter().map(|v| -v).collect();
        let (_, flux) = op.companion(&minus_phi)?;
        let g: Vec<f64> = u.iter().zip(&flux).map(|(v, f)| alpha * v + f).collect();
        let gnorm = time_dot(&g, &g).sqrt();
        gradient_norms.push(gnorm);
        if gnorm <= settings.tolerance {
            converged = true;
            break;
        }
        if iterations == settings.max_iterations {
            break;
        }
        let d: Vec<f64> = if settings.weighted_gradient {
            g.iter().map(|v| -v).collect()
        } else {
            u.iter().zip(&flux).zip(&coeffs.weights).map(|((v, f), w)| -(alpha * v + w * f)).collect()
        };
        let slope = time_dot(&g, &d);
        // Φ(ε) is affine in u, so J along the ray is an explicit quadratic
        let s = op.initial_state(&zero_terminal, &d)?;
        let (pp, ps, ss) = (space_sq(&phi0), space_dot(&phi0, &s), space_sq(&s));
        let (uu, ud, dd) = (time_dot(&u, &u), time_dot(&u, &d), time_dot(&d, &d));
        let along = |beta: f64| -> Result<f64> {
            Ok(0.5 * w0 * (pp + 2.0 * beta * ps + beta * beta * ss)
                + 0.5 * alpha * (uu + 2.0 * beta * ud + beta * beta * dd))
        };
        let step = armijo_step(value, slope, along, settings)?;
        for (uk, dk) in u.iter_mut().zip(&d) {
            *uk += step.step * dk;
        }
        for (p, sv) in phi0.iter_mut().zip(&s) {
            *p += step.step * sv;
        }
        value = step.objective;
        if !value.is_finite() {
            return Err(Error::Diverged { iterations: iterations + 1, alpha });
        }
        history.push(value);
        descended.push(step.descended);
        iterations += 1;
    }

    let trajectory = op.solve_adjoint(terminal, &u)?;
    let final_state = trajectory.snapshots[0].values();
    let residual = (w0 * space_sq(final_state)).sqrt();
    Ok(ControlSolution {
        side: coeffs.side,
        control: u,
        residual,
        initial_residual,
        objective_history: history,
        gradient_norms,
        descended,
        iterations,
        converged,
        trajectory,
    })
}
