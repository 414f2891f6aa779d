//! Subcommand bodies. Every command computes first and writes its files
//! only once all results are available.

use std::path::{Path, PathBuf};

use anyhow::Context;
use llassim::assimilate::reconstruct_final_density;
use llassim::experiments::{generate_data_from, PredictionConfig, SyntheticData};
use llassim::forward::run_forward;
use llassim::mesh::{build_uniform_grid, zero_crossing, NodalField};
use llassim::{
    predict_price, reconstruction_error, stability_sweep, AssimilationMode, PriceSeries, Region, TransformSpec,
};

use crate::config::{InitialSource, RunConfig};
use crate::table::{field_table, fmt, read_field, read_series, series_table, Table};
use crate::{Failure, Outcome, ResultExt};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Initial density on the refined data grid and its price.
pub fn initial_density(cfg: &RunConfig, file: Option<&Path>) -> Outcome<(NodalField, f64)> {
    let a = &cfg.assimilation;
    let n = a.n_cells * a.data_refinement;
    let source = match file {
        Some(p) => InitialSource::File(p.to_path_buf()),
        None => cfg.initial.clone(),
    };
    match source {
        InitialSource::Datum(d) => Ok((d.sample(a.half_width, n).solver()?, d.initial_price())),
        InitialSource::File(path) => {
            let f = read_field(&path, "f").parse_input()?;
            let g = f.grid();
            if (g.lo() + a.half_width).abs() > 1e-9 || (g.hi() - a.half_width).abs() > 1e-9 {
                return Err(Failure::Parse(anyhow::anyhow!(
                    "{}: profile spans [{}, {}], expected [-{l}, {l}]",
                    path.display(),
                    g.lo(),
                    g.hi(),
                    l = a.half_width
                )));
            }
            let fine = f.resample(build_uniform_grid(a.half_width, n).solver()?);
            let p0 = zero_crossing(&fine).with_context(|| format!("{}: initial price", path.display())).solver()?;
            Ok((fine, p0))
        }
    }
}

pub fn synthetic(cfg: &RunConfig) -> Outcome<SyntheticData> {
    let (f0, p0) = initial_density(cfg, None)?;
    generate_data_from(&f0, p0, &cfg.assimilation, cfg.boundary()).solver()
}

fn write_all(out: &Path, files: &[(&str, &Table)]) -> Outcome<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).solver()?;
    for (name, table) in files {
        table.write(&out.join(name)).solver()?;
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Outcome<()> {
    let data = synthetic(cfg)?;
    let price = series_table(&data.series);
    write_all(
        &cfg.out,
        &[
            ("price.csv", &price),
            ("density_T.csv", &field_table(&data.density_final, "f")),
            ("transformed_T.csv", &field_table(&data.transformed_final, "F")),
        ],
    )?;
    say!("simulate: {} samples, p(T) = {}", price.len(), fmt(data.series.final_price()));
    Ok(())
}

/// Density at `ε` on the refined grid, from the configured or given `f0`.
fn density_at_epsilon(cfg: &RunConfig, f0_file: Option<&Path>) -> Outcome<NodalField> {
    let a = &cfg.assimilation;
    let (f0, p0) = initial_density(cfg, f0_file)?;
    let dt = a.t_end / (a.n_steps * a.data_refinement) as f64;
    let steps = (a.epsilon / dt).round() as usize;
    if steps == 0 {
        return Ok(f0);
    }
    let spec = TransformSpec::new(a.cost, p0, a.half_width).solver()?;
    let run = run_forward(&f0, &spec, steps as f64 * dt, steps, cfg.boundary()).solver()?;
    Ok(run.final_density)
}

fn check_samples(cfg: &RunConfig, series: &PriceSeries, path: &Path) -> Outcome<()> {
    let a = &cfg.assimilation;
    let last = *series.times.last().expect("nonempty");
    if series.len() != a.n_steps + 1 || (last - a.t_end).abs() > 1e-9 * a.t_end {
        return Err(Failure::Parse(anyhow::anyhow!(
            "{}: {} samples up to t = {last}, configuration expects {} up to {}",
            path.display(),
            series.len(),
            a.n_steps + 1,
            a.t_end
        )));
    }
    Ok(())
}

pub struct ReconstructArgs {
    pub price: PathBuf,
    pub f0: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

pub fn reconstruct(cfg: &RunConfig, args: &ReconstructArgs) -> Outcome<()> {
    let a = &cfg.assimilation;
    let series = read_series(&args.price).parse_input()?;
    check_samples(cfg, &series, &args.price)?;
    let reference = match &args.reference {
        Some(p) => Some(read_field(p, "f").parse_input()?),
        None => None,
    };
    let f_eps = match a.mode {
        AssimilationMode::Verification => Some(density_at_epsilon(cfg, args.f0.as_deref())?),
        AssimilationMode::Assimilation => None,
    };
    let result = reconstruct_final_density(&series, a, f_eps.as_ref()).solver()?;

    let mut controls = Table::new(&["basis_index", "t", "u"]);
    for (i, u) in result.controls.iter().enumerate() {
        for (t, v) in result.times.iter().zip(u) {
            controls.push(vec![i.to_string(), fmt(*t), fmt(*v)]);
        }
    }
    let mut diag = Table::new(&["basis_index", "iterations", "objective", "residual"]);
    for d in &result.diagnostics {
        diag.push(vec![d.index.to_string(), d.iterations.to_string(), fmt(d.objective), fmt(d.residual)]);
    }
    let error = match reference {
        Some(r) => {
            if !r.grid().same_as(result.fhat.grid()) {
                return Err(Failure::Parse(anyhow::anyhow!("reference profile is not on the assimilation grid")));
            }
            let region = Region::Interior { price: series.final_price() };
            Some(reconstruction_error(&result.fhat, &r, region).solver()?)
        }
        None => None,
    };
    write_all(
        &cfg.out,
        &[("fhat_T.csv", &field_table(&result.fhat, "f")), ("controls.csv", &controls), ("recon_diag.csv", &diag)],
    )?;
    let converged = result.diagnostics.iter().filter(|d| d.converged).count();
    say!("reconstruct: mode {}, {converged}/{} controls converged", a.mode.name(), result.diagnostics.len());
    if let Some(e) = error {
        say!("interior relative L2 error {}", fmt(e));
    }
    Ok(())
}

pub fn stability(cfg: &RunConfig) -> Outcome<()> {
    let data = synthetic(cfg)?;
    let mut a = cfg.assimilation;
    a.n_basis = cfg.sweep_basis;
    a.validate().solver()?;
    let f_eps = match a.mode {
        AssimilationMode::Verification => Some(&data.density_eps),
        AssimilationMode::Assimilation => None,
    };
    let rows = stability_sweep(&data.series, &a, cfg.delta, cfg.sweep_count, cfg.perturbation, f_eps).solver()?;
    let mut t = Table::new(&["delta", "err_u", "err_f"]);
    for r in &rows {
        t.push(vec![fmt(r.delta), fmt(r.control_error), fmt(r.reconstruction_error)]);
    }
    write_all(&cfg.out, &[("stability.csv", &t)])?;
    say!("stability: {} rows", t.len());
    Ok(())
}

pub struct PredictArgs {
    pub fhat: PathBuf,
    pub price: Option<PathBuf>,
}

pub fn predict(cfg: &RunConfig, args: &PredictArgs) -> Outcome<()> {
    let a = &cfg.assimilation;
    let fhat = read_field(&args.fhat, "f").parse_input()?;
    let (start, measured) = match &args.price {
        Some(p) => {
            let s = read_series(p).parse_input()?;
            (*s.times.last().expect("nonempty"), s.final_price())
        }
        None => {
            let s = synthetic(cfg)?.series;
            (a.t_end, s.final_price())
        }
    };
    let pc = PredictionConfig {
        half_width: a.half_width,
        cost: a.cost,
        start,
        horizon: cfg.horizon,
        n_steps: ((cfg.horizon / a.time_step()).round() as usize).max(1),
        bc: cfg.boundary(),
    };
    let prediction = predict_price(&fhat, measured, &pc).solver()?;
    write_all(&cfg.out, &[("predicted_price.csv", &series_table(&prediction.series))])?;
    say!(
        "predict: measured p(T) = {}, jump {}, p(T + horizon) = {}",
        fmt(measured),
        fmt(prediction.jump),
        fmt(prediction.series.final_price())
    );
    Ok(())
}

pub fn verify(cfg: &RunConfig) -> Outcome<()> {
    let checks = crate::verify::run(cfg)?;
    let mut t = Table::new(&["check", "value", "threshold", "status"]);
    let mut failed = Vec::new();
    for c in &checks {
        let status = if c.passed() { "pass" } else { "fail" };
        say!("{:<28} {status}  {} (threshold {})", c.name, fmt(c.value), fmt(c.threshold));
        t.push(vec![c.name.to_string(), fmt(c.value), fmt(c.threshold), status.to_string()]);
        if !c.passed() {
            failed.push(c.name);
        }
    }
    write_all(&cfg.out, &[("verify_report.csv", &t)])?;
    if !failed.is_empty() {
        return Err(Failure::Verify(anyhow::anyhow!("failed checks: {}", failed.join(", "))));
    }
    Ok(())
}
