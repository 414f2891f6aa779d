//! CSV reading and writing. Floats are written with 17 significant digits.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use llassim::mesh::{Grid, NodalField};
use llassim::PriceSeries;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Rows already formatted as fields; written only once complete.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| anyhow!("{e}"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn series_table(s: &PriceSeries) -> Table {
    let mut t = Table::new(&["t", "p", "lambda"]);
    for k in 0..s.len() {
        t.push(vec![fmt(s.times[k]), fmt(s.prices[k]), fmt(s.rates[k])]);
    }
    t
}

pub fn field_table(f: &NodalField, value: &'static str) -> Table {
    let mut t = Table::new(&["x", value]);
    let g = f.grid();
    for (i, v) in f.values().iter().enumerate() {
        t.push(vec![fmt(g.node(i)), fmt(*v)]);
    }
    t
}

/// Reads a numeric CSV with the given header; errors name the file line.
pub fn read_columns(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let found: Vec<String> = r
        .headers()
        .with_context(|| format!("{}: header", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if found != header {
        bail!("{}: line 1: header {:?}, expected {:?}", path.display(), found.join(","), header.join(","));
    }
    let mut columns = vec![Vec::new(); header.len()];
    for record in r.records() {
        let record = record.with_context(|| format!("{}: malformed record", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            bail!("{}: line {line}: expected {} fields, found {}", path.display(), header.len(), record.len());
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| anyhow!("{}: line {line}: `{field}` is not a number", path.display()))?;
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(columns)
}

pub fn read_series(path: &Path) -> Result<PriceSeries> {
    let mut c = read_columns(path, &["t", "p", "lambda"])?;
    let rates = c.pop().unwrap();
    let prices = c.pop().unwrap();
    let times = c.pop().unwrap();
    PriceSeries::new(times, prices, rates).with_context(|| format!("{}: invalid price series", path.display()))
}

/// Reads an `x,<value>` profile on a uniform grid.
pub fn read_field(path: &Path, value: &str) -> Result<NodalField> {
    let c = read_columns(path, &["x", value])?;
    let (x, v) = (&c[0], &c[1]);
    if x.len() < 2 {
        bail!("{}: need at least two nodes", path.display());
    }
    let grid = Grid::new(x[0], x[x.len() - 1], x.len() - 1)?;
    for (i, &xi) in x.iter().enumerate() {
        if (xi - grid.node(i)).abs() > 1e-9 * grid.h().max(1.0) {
            bail!("{}: line {}: nodes are not uniformly spaced", path.display(), i + 2);
        }
    }
    Ok(NodalField::new(grid, v.clone())?)
}
