//! Fixtures shared by the solver benchmarks.

use llassim::experiments::{generate_data, ExperimentPreset, SyntheticData};
use llassim::{AssimilationConfig, BoundaryMode};

/// Experiment-1 configuration shrunk to `n_cells` cells, `n_steps` steps
/// and `n_basis` basis functions.
pub fn small_config(n_cells: usize, n_steps: usize, n_basis: usize) -> AssimilationConfig {
    let mut cfg = ExperimentPreset::by_id(1).expect("preset 1").assimilation;
    cfg.n_cells = n_cells;
    cfg.n_steps = n_steps;
    cfg.n_basis = n_basis;
    cfg
}

pub fn synthetic(cfg: &AssimilationConfig) -> SyntheticData {
    generate_data(ExperimentPreset::by_id(1).expect("preset 1").datum, cfg, BoundaryMode::Nonlocal { cost: cfg.cost })
        .expect("forward run")
}
