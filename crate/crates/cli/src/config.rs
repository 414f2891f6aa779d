//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use llassim::experiments::{ExperimentPreset, InitialDatum};
use llassim::{AssimilationConfig, AssimilationMode, BoundaryMode, PerturbationMode};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSource {
    Datum(InitialDatum),
    /// `x,f` CSV resampled onto the data grid.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryChoice {
    Nonlocal,
    Neumann,
}

impl BoundaryChoice {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nonlocal" => Some(Self::Nonlocal),
            "neumann" => Some(Self::Neumann),
            _ => None,
        }
    }

    pub fn mode(self, cost: f64) -> BoundaryMode {
        match self {
            Self::Nonlocal => BoundaryMode::Nonlocal { cost },
            Self::Neumann => BoundaryMode::Neumann,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: u32,
    pub initial: InitialSource,
    pub out: PathBuf,
    /// Reserved; every solver in the pipeline is deterministic.
    pub seed: u64,
    pub bc: BoundaryChoice,
    pub assimilation: AssimilationConfig,
    pub perturbation: PerturbationMode,
    pub delta: f64,
    pub sweep_count: usize,
    pub sweep_basis: usize,
    pub horizon: f64,
}

const KEYS: &[&str] = &[
    "experiment",
    "f0",
    "f0_file",
    "out",
    "seed",
    "bc",
    "half_width",
    "n_cells",
    "n_steps",
    "t_end",
    "epsilon",
    "cost",
    "margin",
    "n_basis",
    "alpha",
    "beta0",
    "gamma",
    "max_iterations",
    "tolerance",
    "max_halvings",
    "weighted_gradient",
    "mode",
    "data_refinement",
    "perturbation",
    "delta",
    "sweep_count",
    "sweep_basis",
    "horizon",
];

impl RunConfig {
    pub fn preset(experiment: u32) -> Result<Self> {
        let p = ExperimentPreset::by_id(experiment).ok_or_else(|| anyhow!("unknown experiment {experiment}"))?;
        Ok(Self {
            experiment,
            initial: InitialSource::Datum(p.datum),
            out: PathBuf::from("."),
            seed: 0,
            bc: BoundaryChoice::Nonlocal,
            assimilation: p.assimilation,
            perturbation: p.perturbation,
            delta: p.delta,
            sweep_count: p.sweep_count,
            sweep_basis: p.sweep_basis,
            horizon: p.horizon,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Keys may come in any order; `experiment` selects the preset the
    /// other keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                bail!("line {}: unknown key `{key}`", n + 1);
            }
            if entries.insert(key.to_string(), (n + 1, value.to_string())).is_some() {
                bail!("line {}: duplicate key `{key}`", n + 1);
            }
        }
        let experiment = match entries.remove("experiment") {
            Some((n, v)) => v.parse().map_err(|_| anyhow!("line {n}: experiment must be 1, 2 or 3"))?,
            None => 1,
        };
        let mut cfg = Self::preset(experiment)?;
        let mut f0_file = None;
        for (key, (n, value)) in entries {
            cfg.set(&key, &value, &mut f0_file).with_context(|| format!("line {n}: key `{key}`"))?;
        }
        if let Some(path) = f0_file {
            if !matches!(cfg.initial, InitialSource::File(_)) {
                bail!("f0_file given but f0 is not `file`");
            }
            cfg.initial = InitialSource::File(path);
        } else if matches!(cfg.initial, InitialSource::File(_)) {
            bail!("f0 = file needs f0_file");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, f0_file: &mut Option<PathBuf>) -> Result<()> {
        let a = &mut self.assimilation;
        match key {
            "f0" => {
                self.initial = match value {
                    "file" => InitialSource::File(PathBuf::new()),
                    other => InitialSource::Datum(
                        InitialDatum::parse(other).ok_or_else(|| anyhow!("unknown initial datum `{other}`"))?,
                    ),
                }
            }
            "f0_file" => *f0_file = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = num(value)?,
            "bc" => self.bc = BoundaryChoice::parse(value).ok_or_else(|| anyhow!("bc must be nonlocal or neumann"))?,
            "half_width" => a.half_width = num(value)?,
            "n_cells" => a.n_cells = num(value)?,
            "n_steps" => a.n_steps = num(value)?,
            "t_end" => a.t_end = num(value)?,
            "epsilon" => a.epsilon = num(value)?,
            "cost" => a.cost = num(value)?,
            "margin" => a.margin = num(value)?,
            "n_basis" => a.n_basis = num(value)?,
            "alpha" => a.optimizer.alpha = num(value)?,
            "beta0" => a.optimizer.beta0 = num(value)?,
            "gamma" => a.optimizer.gamma = num(value)?,
            "max_iterations" => a.optimizer.max_iterations = num(value)?,
            "tolerance" => a.optimizer.tolerance = num(value)?,
            "max_halvings" => a.optimizer.max_halvings = num(value)?,
            "weighted_gradient" => a.optimizer.weighted_gradient = num(value)?,
            "mode" => a.mode = parse_mode(value)?,
            "data_refinement" => a.data_refinement = num(value)?,
            "perturbation" => {
                self.perturbation =
                    PerturbationMode::parse(value).ok_or_else(|| anyhow!("perturbation must be slow or fast"))?
            }
            "delta" => self.delta = num(value)?,
            "sweep_count" => self.sweep_count = num(value)?,
            "sweep_basis" => self.sweep_basis = num(value)?,
            "horizon" => self.horizon = num(value)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.assimilation.validate()?;
        if !(self.delta >= 0.0) || !(self.horizon > 0.0) || self.sweep_basis < 2 {
            bail!("need delta >= 0, horizon > 0 and sweep_basis >= 2");
        }
        Ok(())
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.bc.mode(self.assimilation.cost)
    }
}

pub fn parse_mode(value: &str) -> Result<AssimilationMode> {
    match value {
        "verification" => Ok(AssimilationMode::Verification),
        "assimilation" => Ok(AssimilationMode::Assimilation),
        other => bail!("mode must be verification or assimilation, got `{other}`"),
    }
}

fn num<T: std::str::FromStr>(value: &str) -> Result<T> {
    value.parse().map_err(|_| anyhow!("cannot parse `{value}`"))
}
