//! Reconstruction of the final density from price and transaction-rate
//! data through the duality identities, one null-control problem per basis
//! function.

use rayon::prelude::*;

use crate::adjoint::AdjointOperator;
use crate::control::{solve_null_control_with, ControlSolution, OptimizerSettings};
use crate::domainmap::{coefficients, map_from_reference, map_to_reference, Side};
use crate::error::{Error, Result};
use crate::forward::PriceSeries;
use crate::mesh::{assemble_mass_matrix_for, build_uniform_grid, interpolate, Grid, NodalField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssimilationMode {
    /// Includes `∫f(·, ε)Φ(·, ε)`; needs the density at `ε`.
    Verification,
    /// Drops that term.
    Assimilation,
}

impl AssimilationMode {
    pub fn name(self) -> &'static str {
        match self {
            AssimilationMode::Verification => "verification",
            AssimilationMode::Assimilation => "assimilation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssimilationConfig {
    pub half_width: f64,
    /// Cells of the assimilation grid on `[-L, L]`.
    pub n_cells: usize,
    /// Time steps on `[0, T]`.
    pub n_steps: usize,
    pub t_end: f64,
    pub epsilon: f64,
    pub cost: f64,
    pub margin: f64,
    pub n_basis: usize,
    pub optimizer: OptimizerSettings,
    pub mode: AssimilationMode,
    /// Data are generated on a grid and time step this many times finer.
    pub data_refinement: usize,
}

impl Default for AssimilationConfig {
    fn default() -> Self {
        Self {
            half_width: 0.5,
            n_cells: 200,
            n_steps: 125,
            t_end: 0.25,
            epsilon: 0.0,
            cost: 0.05,
            margin: 0.05,
            n_basis: 50,
            optimizer: OptimizerSettings::default(),
            mode: AssimilationMode::Verification,
            data_refinement: 2,
        }
    }
}

impl AssimilationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.half_width > 0.0 && self.cost > 0.0 && self.margin >= self.cost) {
            return bad(format!(
                "need L > 0, a > 0 and margin ≥ a (L = {}, a = {}, margin = {})",
                self.half_width, self.cost, self.margin
            ));
        }
        if self.n_cells < 4 || !self.n_cells.is_multiple_of(2) {
            return bad(format!("cell count {} must be even and at least 4", self.n_cells));
        }
        if self.n_steps < 2 || !(self.t_end > 0.0) {
            return bad(format!("need T > 0 and at least 2 steps, got T = {} / {}", self.t_end, self.n_steps));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < self.t_end) {
            return bad(format!("ε = {} must lie in [0, T)", self.epsilon));
        }
        if self.n_basis < 2 || self.n_basis > self.n_cells + 1 {
            return bad(format!("basis count {} must be in [2, {}]", self.n_basis, self.n_cells + 1));
        }
        if self.data_refinement == 0 {
            return bad("data refinement must be positive".into());
        }
        self.optimizer.validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        build_uniform_grid(self.half_width, self.n_cells)
    }

    /// Cells of the reference interval for each side.
    pub fn reference_cells(&self) -> usize {
        self.n_cells / 2
    }

    /// Uniform grid whose nodes carry the hat basis.
    pub fn basis_grid(&self) -> Result<Grid> {
        Grid::new(-self.half_width, self.half_width, self.n_basis - 1)
    }

    pub fn time_step(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisDiagnostics {
    pub index: usize,
    pub node: f64,
    pub side: Side,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub residual: f64,
    pub initial_residual: f64,
    pub rhs: f64,
    /// Every accepted Armijo step decreased the objective.
    pub monotone: bool,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub fhat: NodalField,
    pub coefficients: Vec<f64>,
    pub diagnostics: Vec<BasisDiagnostics>,
    pub controls: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub split_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Full,
    /// Drops the first and last cell and the cell(s) touching `price`.
    Interior {
        price: f64,
    },
}

/// Right-hand side of the duality identity for one solved control:
/// `∫Λ(Φ(p−a) − u)` on the left, `∫Λ(u − Φ(p+a))` on the right, plus
/// `∫f(·, ε)Φ(·, ε)` when `f_eps` is given.
pub fn duality_rhs(
    sol: &ControlSolution,
    data: &PriceSeries,
    cost: f64,
    half_width: f64,
    f_eps: Option<&NodalField>,
) -> Result<f64> {
    let traj = &sol.trajectory;
    if traj.times.len() != data.len()
        || traj.times.iter().zip(&data.times).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(Error::InvalidArgument("control and data time grids differ".into()));
    }
    let n = data.len();
    let dt = if n > 1 { (data.times[n - 1] - data.times[0]) / (n - 1) as f64 } else { 0.0 };
    let mut sum = 0.0;
    for k in 0..n {
        let p = data.prices[k];
        let x = match sol.side {
            Side::Left => p - cost,
            Side::Right => p + cost,
        };
        let y = map_to_reference(x, p, half_width, sol.side)
            .map_err(|_| Error::ShiftOutOfDomain { x, side: sol.side.name() })?;
        let shifted = interpolate(&traj.snapshots[k], y)?;
        let jump = match sol.side {
            Side::Left => shifted - traj.boundary[k],
            Side::Right => traj.boundary[k] - shifted,
        };
        let tau = if k == 0 || k + 1 == n { 0.5 * dt } else { dt };
        sum += tau * data.rates[k] * jump;
    }
    if let Some(f) = f_eps {
        let phi = &traj.snapshots[0];
        let g = phi.grid();
        let p0 = data.prices[0];
        let w0 = sol.side.width(p0, half_width);
        let c = g.lumped_weights();
        let mut space = 0.0;
        for (i, (&v, &ci)) in phi.values().iter().zip(&c).enumerate() {
            let x = map_from_reference(g.node(i), p0, half_width, sol.side);
            space += ci * v * f.at_or_zero(x);
        }
        sum += w0 * space;
    }
    Ok(sum)
}

/// Hat basis function `i` of `basis` pulled back to the reference grid of
/// `side` at price `p`.
fn reference_hat(basis: &Grid, i: usize, reference: Grid, price: f64, half_width: f64, side: Side) -> NodalField {
    NodalField::from_fn(reference, |y| basis.hat(i, map_from_reference(y, price, half_width, side)))
}

/// One control problem per basis function, routed by the side of its
/// node, then the two clipped mass systems for the coefficients.
pub fn reconstruct_final_density(
    data: &PriceSeries,
    cfg: &AssimilationConfig,
    f_eps: Option<&NodalField>,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let f_eps = match (cfg.mode, f_eps) {
        (AssimilationMode::Verification, None) => {
            return Err(Error::InvalidArgument("verification mode needs the density at ε".into()))
        }
        (AssimilationMode::Verification, f) => f,
        (AssimilationMode::Assimilation, _) => None,
    };
    let series = data.from_time(cfg.epsilon);
    if series.len() < 3 {
        return Err(Error::InvalidArgument("fewer than 3 data samples after ε".into()));
    }
    series.check_margins(cfg.half_width, cfg.margin)?;
    let l = cfg.half_width;
    let p_t = series.final_price();
    let left = coefficients(&series, l, Side::Left)?;
    let right = coefficients(&series, l, Side::Right)?;
    let n_ref = cfg.reference_cells();
    let ops = (AdjointOperator::new(&left, n_ref)?, AdjointOperator::new(&right, n_ref)?);
    let basis = cfg.basis_grid()?;
    let reference = Grid::unit(n_ref)?;

    let solved: Vec<Result<(ControlSolution, f64)>> = (0..cfg.n_basis)
        .into_par_iter()
        .map(|i| {
            let side = if basis.node(i) <= p_t { Side::Left } else { Side::Right };
            let (op, coeffs) = match side {
                Side::Left => (&ops.0, &left),
                Side::Right => (&ops.1, &right),
            };
            let psi = reference_hat(&basis, i, reference, p_t, l, side);
            let sol = solve_null_control_with(op, &psi, coeffs, &cfg.optimizer)?;
            let rhs = duality_rhs(&sol, &series, cfg.cost, l, f_eps)?;
            Ok((sol, rhs))
        })
        .collect();
    let solved = solved.into_iter().collect::<Result<Vec<_>>>()?;

    let split = (0..cfg.n_basis).filter(|&i| basis.node(i) <= p_t).count();
    let mut coefficients = vec![0.0; cfg.n_basis];
    for (nodes, interval) in [(0..split, (-l, p_t)), (split..cfg.n_basis, (p_t, l))] {
        if nodes.is_empty() {
            continue;
        }
        let mass = assemble_mass_matrix_for(&basis, nodes.clone(), interval)?;
        let rhs: Vec<f64> = nodes.clone().map(|i| solved[i].1).collect();
        let c = mass.factor()?.solve(&rhs);
        for (i, v) in nodes.zip(c) {
            coefficients[i] = v;
        }
    }

    let grid = cfg.grid()?;
    let fhat = NodalField::from_fn(grid, |x| {
        let range = if x <= p_t { 0..split } else { split..cfg.n_basis };
        range.map(|j| coefficients[j] * basis.hat(j, x)).sum()
    });
    let diagnostics = solved
        .iter()
        .enumerate()
        .map(|(i, (sol, rhs))| BasisDiagnostics {
            index: i,
            node: basis.node(i),
            side: sol.side,
            iterations: sol.iterations,
            converged: sol.converged,
            objective: sol.objective(),
            residual: sol.residual,
            initial_residual: sol.initial_residual,
            rhs: *rhs,
            monotone: sol.objective_history.windows(2).zip(&sol.descended).all(|(w, &ok)| !ok || w[1] <= w[0]),
        })
        .collect();
    let controls = solved.into_iter().map(|(sol, _)| sol.control).collect();
    Ok(ReconstructionResult {
        fhat,
        coefficients,
        diagnostics,
        controls,
        times: series.times.clone(),
        split_price: p_t,
    })
}

/// Relative L² difference `‖fhat − reference‖/‖reference‖` over a region.
pub fn reconstruction_error(fhat: &NodalField, reference: &NodalField, region: Region) -> Result<f64> {
    if !fhat.grid().same_as(reference.grid()) {
        return Err(Error::GridMismatch("reconstruction and reference on different grids".into()));
    }
    let g = fhat.grid();
    let h = g.h();
    let n = g.n_cells();
    let keep = |c: usize| match region {
        Region::Full => true,
        Region::Interior { price } => {
            let (lo, hi) = (g.node(c), g.node(c + 1));
            c != 0 && c != n - 1 && !(hi >= price - 1e-12 * h && lo <= price + 1e-12 * h)
        }
    };
    let (f, r) = (fhat.values(), reference.values());
    let (mut num, mut den) = (0.0, 0.0);
    for c in (0..n).filter(|&c| keep(c)) {
        let d0 = f[c] - r[c];
        let d1 = f[c + 1] - r[c + 1];
        num += 0.5 * h * (d0 * d0 + d1 * d1);
        den += 0.5 * h * (r[c] * r[c] + r[c + 1] * r[c + 1]);
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference vanishes on the region".into()));
    }
    Ok((num / den).sqrt())
}
