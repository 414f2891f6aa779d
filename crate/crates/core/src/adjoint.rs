//! Backward adjoint and forward companion solves on the reference interval.
//!
//! Both use implicit Euler in time and lumped piecewise-linear elements in
//! space. The drift `b(t)·y·∂_y` is upwinded. The companion step is the
//! exact transpose of the adjoint step, so the gradient assembled from it
//! is the gradient of the discrete objective.

use crate::domainmap::{MapCoefficients, Side};
use crate::error::{Error, Result};
use crate::mesh::{Grid, NodalField, TridiagonalLu, TridiagonalSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Adjoint,
    Companion,
}

/// States of an adjoint or companion solve at every time sample.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub kind: TrajectoryKind,
    pub side: Side,
    pub times: Vec<f64>,
    pub snapshots: Vec<NodalField>,
    /// Value imposed at `y = 1` at each sample.
    pub boundary: Vec<f64>,
    /// Companion only: the boundary term of the discrete L² gradient at
    /// each sample (zero at the last one).
    pub gradient_flux: Vec<f64>,
}

impl AdjointTrajectory {
    pub fn initial(&self) -> &NodalField {
        &self.snapshots[0]
    }
}

/// Per-step implicit operators for one set of coefficients, factored once.
#[derive(Debug, Clone)]
pub struct AdjointOperator {
    grid: Grid,
    dt: f64,
    side: Side,
    times: Vec<f64>,
    weights: Vec<f64>,
    lumped: Vec<f64>,
    /// `M/dt + A_k`, unmodified
    bands: Vec<TridiagonalSystem>,
    adjoint: Vec<TridiagonalLu>,
    companion: Vec<TridiagonalLu>,
}

fn step_band(grid: &Grid, dt: f64, a: f64, b: f64, lumped: &[f64]) -> TridiagonalSystem {
    let n = grid.n_nodes();
    let h = grid.h();
    let mut band = TridiagonalSystem::zeros(n);
    for i in 0..n {
        band.diag[i] = lumped[i] / dt;
    }
    for i in 0..n - 1 {
        band.diag[i] += a / h;
        band.diag[i + 1] += a / h;
        band.upper[i] -= a / h;
        band.lower[i] -= a / h;
    }
    // backward in time the drift transports with velocity b·y
    for i in 1..n - 1 {
        let v = b * grid.node(i) * lumped[i] / h;
        if v > 0.0 {
            band.diag[i] += v;
            band.lower[i - 1] -= v;
        } else {
            band.diag[i] -= v;
            band.upper[i] += v;
        }
    }
    band
}

fn with_dirichlet_last_row(mut band: TridiagonalSystem) -> TridiagonalSystem {
    let n = band.size();
    band.lower[n - 2] = 0.0;
    band.diag[n - 1] = 1.0;
    band
}

impl AdjointOperator {
    pub fn new(coeffs: &MapCoefficients, n_cells: usize) -> Result<Self> {
        let grid = Grid::unit(n_cells)?;
        let dt = coeffs.time_step()?;
        let lumped = grid.lumped_weights();
        let steps = coeffs.len() - 1;
        let mut bands = Vec::with_capacity(steps);
        let mut adjoint = Vec::with_capacity(steps);
        let mut companion = Vec::with_capacity(steps);
        for k in 0..steps {
            let band = step_band(&grid, dt, coeffs.diffusion[k], coeffs.drift[k], &lumped);
            adjoint.push(with_dirichlet_last_row(band.clone()).factor()?);
            companion.push(with_dirichlet_last_row(band.transpose()).factor()?);
            bands.push(band);
        }
        Ok(Self {
            grid,
            dt,
            side: coeffs.side,
            times: coeffs.times.clone(),
            weights: coeffs.weights.clone(),
            lumped,
            bands,
            adjoint,
            companion,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    /// Trapezoidal weights of the time grid.
    pub fn time_weights(&self) -> Vec<f64> {
        let n = self.times.len();
        (0..n).map(|k| if k == 0 || k == n - 1 { 0.5 * self.dt } else { self.dt }).collect()
    }

    /// Length of the physical subdomain at the first sample.
    pub fn initial_weight(&self) -> f64 {
        self.weights[0]
    }

    fn check_inputs(&self, terminal: &[f64], control: &[f64]) -> Result<()> {
        if terminal.len() != self.grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "terminal datum has {} nodes, reference grid {}",
                terminal.len(),
                self.grid.n_nodes()
            )));
        }
        if control.len() != self.times.len() {
            return Err(Error::InvalidArgument(format!(
                "control has {} samples, time grid {}",
                control.len(),
                self.times.len()
            )));
        }
        Ok(())
    }

    fn backward_step(&self, k: usize, next: &[f64], boundary: f64) -> Vec<f64> {
        let n = next.len();
        let mut x: Vec<f64> = next.iter().zip(&self.lumped).map(|(v, c)| v * c / self.dt).collect();
        x[n - 1] = boundary;
        self.adjoint[k].solve_in_place(&mut x);
        x
    }

    /// Adjoint state at every sample, first sample first.
    pub fn solve(&self, terminal: &[f64], control: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_inputs(terminal, control)?;
        let steps = self.bands.len();
        let mut states = vec![Vec::new(); steps + 1];
        states[steps] = terminal.to_vec();
        for k in (0..steps).rev() {
            states[k] = self.backward_step(k, &states[k + 1], control[k]);
        }
        Ok(states)
    }

    /// Adjoint state at the first sample only.
    pub fn initial_state(&self, terminal: &[f64], control: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(terminal, control)?;
        let mut state = terminal.to_vec();
        for k in (0..self.bands.len()).rev() {
            state = self.backward_step(k, &state, control[k]);
        }
        Ok(state)
    }

    /// Companion states `G` (rescaled by `w(ε)/w(t)`) and the gradient
    /// boundary term, from `G(ε) = initial`.
    pub fn companion(&self, initial: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let n = self.grid.n_nodes();
        if initial.len() != n {
            return Err(Error::GridMismatch(format!(
                "companion datum has {} nodes, reference grid {}",
                initial.len(),
                n
            )));
        }
        let steps = self.bands.len();
        let w0 = self.weights[0];
        let tau = self.time_weights();
        let mut raw = Vec::with_capacity(steps + 1);
        raw.push(initial.to_vec());
        let mut flux = vec![0.0; steps + 1];
        for k in 0..steps {
            let prev: &Vec<f64> = &raw[k];
            let mut x: Vec<f64> = prev.iter().zip(&self.lumped).map(|(v, c)| v * c / self.dt).collect();
            x[n - 1] = 0.0;
            self.companion[k].solve_in_place(&mut x);
            let coupling = self.bands[k].upper[n - 2];
            let residual = self.lumped[n - 1] / self.dt * (x[n - 1] - prev[n - 1]) + coupling * x[n - 2];
            flux[k] = w0 * self.dt * residual / tau[k];
            raw.push(x);
        }
        let scaled =
            raw.into_iter().zip(&self.weights).map(|(g, w)| g.into_iter().map(|v| v * w0 / w).collect()).collect();
        Ok((scaled, flux))
    }

    pub fn solve_adjoint(&self, terminal: &NodalField, control: &[f64]) -> Result<AdjointTrajectory> {
        if !terminal.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("terminal datum is not on the reference grid".into()));
        }
        let states = self.solve(terminal.values(), control)?;
        let mut boundary = control.to_vec();
        boundary[states.len() - 1] = terminal.values()[self.grid.n_cells()];
        Ok(AdjointTrajectory {
            kind: TrajectoryKind::Adjoint,
            side: self.side,
            times: self.times.clone(),
            snapshots: states.into_iter().map(|v| NodalField::new(self.grid, v)).collect::<Result<_>>()?,
            boundary,
            gradient_flux: Vec::new(),
        })
    }

    pub fn solve_companion(&self, initial: &NodalField) -> Result<AdjointTrajectory> {
        if !initial.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("initial datum is not on the reference grid".into()));
        }
        let (states, flux) = self.companion(initial.values())?;
        let mut boundary = vec![0.0; states.len()];
        boundary[0] = initial.values()[self.grid.n_cells()];
        Ok(AdjointTrajectory {
            kind: TrajectoryKind::Companion,
            side: self.side,
            times: self.times.clone(),
            snapshots: states.into_iter().map(|v| NodalField::new(self.grid, v)).collect::<Result<_>>()?,
            boundary,
            gradient_flux: flux,
        })
    }
}

/// Backward solve of `−∂ₜΦ − a ∂_yyΦ + b y ∂_yΦ = 0` with `Φ(·, T) = ψ`,
/// `Φ(1, t) = u(t)` and `∂_yΦ(0, t) = 0`.
pub fn solve_adjoint(terminal: &NodalField, control: &[f64], coeffs: &MapCoefficients) -> Result<AdjointTrajectory> {
    AdjointOperator::new(coeffs, terminal.grid().n_cells())?.solve_adjoint(terminal, control)
}

/// Forward solve of `∂ₜG − a ∂_yyG − b y ∂_yG = 0` with `G(·, ε)` given,
/// `G(1, t) = 0` and `∂_yG(0, t) = 0`.
pub fn solve_companion(initial: &NodalField, coeffs: &MapCoefficients) -> Result<AdjointTrajectory> {
    AdjointOperator::new(coeffs, initial.grid().n_cells())?.solve_companion(initial)
}

/// Second-order one-sided estimate of `∂_y G(1, t_k)` for every snapshot.
pub fn boundary_flux(traj: &AdjointTrajectory) -> Vec<f64> {
    traj.snapshots
        .iter()
        .map(|s| {
            let v = s.values();
            let n = v.len() - 1;
            (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * s.grid().h())
        })
        .collect()
}
