//! Uniform 1D grids, piecewise-linear nodal fields and the banded linear
//! algebra shared by every solver in the crate.

use std::ops::Range;

use crate::error::{Error, Result};

/// Uniform grid on `[lo, hi]` split into `n_cells` equal cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n_cells: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n_cells: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidArgument(format!("empty grid interval [{lo}, {hi}]")));
        }
        if n_cells < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 cells, got {n_cells}")));
        }
        Ok(Self { lo, hi, n_cells })
    }

    /// Reference grid on `[0, 1]`.
    pub fn unit(n_cells: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n_cells)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.n_cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.hi
        } else {
            self.lo + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = 1e-12 * (self.hi - self.lo);
        x >= self.lo - tol && x <= self.hi + tol
    }

    /// Cell index and local coordinate in `[0, 1]` of `x`. Coordinates
    /// within rounding distance of a node snap onto it.
    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !self.contains(x) {
            return Err(Error::OutOfDomain { x, lo: self.lo, hi: self.hi });
        }
        let s = ((x - self.lo) / self.h()).clamp(0.0, self.n_cells as f64);
        let r = s.round();
        if (s - r).abs() < 1e-10 {
            let i = r as usize;
            return Ok(if i == self.n_cells { (i - 1, 1.0) } else { (i, 0.0) });
        }
        let i = (s.floor() as usize).min(self.n_cells - 1);
        Ok((i, s - i as f64))
    }

    /// Nodal quadrature weights of the trapezoidal rule (lumped mass).
    pub fn lumped_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.n_nodes()];
        w[0] = 0.5 * h;
        w[self.n_cells] = 0.5 * h;
        w
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        let tol = 1e-12 * (self.hi - self.lo).abs().max(1.0);
        self.n_cells == other.n_cells && (self.lo - other.lo).abs() <= tol && (self.hi - other.hi).abs() <= tol
    }

    /// Value of the hat function of node `i` at `x`.
    pub fn hat(&self, i: usize, x: f64) -> f64 {
        let d = (x - self.node(i)).abs() / self.h();
        (1.0 - d).max(0.0)
    }
}

/// Grid on `[-half_width, half_width]`.
pub fn build_uniform_grid(half_width: f64, n_cells: usize) -> Result<Grid> {
    if !(half_width > 0.0) {
        return Err(Error::InvalidArgument(format!("half width must be positive, got {half_width}")));
    }
    Grid::new(-half_width, half_width, n_cells)
}

/// Piecewise-linear function given by its nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    grid: Grid,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.n_nodes())));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.n_nodes()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, x: f64) -> Result<f64> {
        interpolate(self, x)
    }

    /// Value at `x`, zero outside the grid.
    pub fn at_or_zero(&self, x: f64) -> f64 {
        interpolate(self, x).unwrap_or(0.0)
    }

    /// Trapezoidal integral over the whole grid.
    pub fn integral(&self) -> f64 {
        self.grid.lumped_weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Resample onto another grid by linear interpolation; points outside
    /// this field's grid read as zero.
    pub fn resample(&self, grid: Grid) -> Self {
        Self::from_fn(grid, |x| self.at_or_zero(x))
    }
}

/// Linear interpolation of `field` at `x`.
pub fn interpolate(field: &NodalField, x: f64) -> Result<f64> {
    let (i, theta) = field.grid.locate(x)?;
    let v = &field.values;
    if theta == 0.0 {
        return Ok(v[i]);
    }
    if theta == 1.0 {
        return Ok(v[i + 1]);
    }
    Ok(v[i] * (1.0 - theta) + v[i + 1] * theta)
}

/// Location of the unique positive-to-negative sign change of `field`.
///
/// Exact zeros are skipped when counting sign changes; a run of zero
/// nodes between the last positive and first negative node resolves to
/// the middle of the run.
pub fn zero_crossing(field: &NodalField) -> Result<f64> {
    let v = &field.values;
    let mut prev: Option<(usize, f64)> = None;
    let mut changes = 0usize;
    let mut bracket = None;
    for (i, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        if let Some((j, s)) = prev {
            if s.signum() != x.signum() {
                changes += 1;
                if s > 0.0 {
                    bracket = Some((j, i));
                }
            }
        }
        prev = Some((i, x));
    }
    match (changes, bracket) {
        (0, _) => Err(Error::NoPrice),
        (1, Some((i, j))) => {
            let g = &field.grid;
            if j == i + 1 {
                let theta = v[i] / (v[i] - v[j]);
                Ok(g.node(i) + theta * g.h())
            } else {
                Ok(0.5 * (g.node(i + 1) + g.node(j - 1)))
            }
        }
        (1, None) => Err(Error::NoPrice),
        (n, _) => Err(Error::AmbiguousPrice(n)),
    }
}

/// Tridiagonal matrix: `lower[i] = A[i+1][i]`, `upper[i] = A[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::InvalidArgument(format!(
                "inconsistent diagonals: {} / {} / {}",
                lower.len(),
                n,
                upper.len()
            )));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self { lower: vec![0.0; off], diag: vec![0.0; n], upper: vec![0.0; off] }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self { lower: self.upper.clone(), diag: self.diag.clone(), upper: self.lower.clone() }
    }

    /// Row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.size()])
    }

    pub fn factor(&self) -> Result<TridiagonalLu> {
        TridiagonalLu::new(self)
    }
}

/// Thomas factorisation of a tridiagonal matrix, reusable across
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper_scaled: Vec<f64>,
}

impl TridiagonalLu {
    pub fn new(sys: &TridiagonalSystem) -> Result<Self> {
        let n = sys.size();
        let scale = sys.diag.iter().chain(&sys.lower).chain(&sys.upper).fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = f64::EPSILON * scale;
        let mut inv_pivot = vec![0.0; n];
        let mut upper_scaled = vec![0.0; n.saturating_sub(1)];
        let mut pivot = sys.diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = sys.diag[i] - sys.lower[i - 1] * upper_scaled[i - 1];
            }
            if !pivot.is_finite() || pivot.abs() <= tiny {
                return Err(Error::SingularSystem { row: i });
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < n {
                upper_scaled[i] = sys.upper[i] * inv_pivot[i];
            }
        }
        Ok(Self { lower: sys.lower.clone(), inv_pivot, upper_scaled })
    }

    pub fn size(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.size();
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i - 1] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper_scaled[i] * x[i + 1];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solve `system · v = rhs` with the Thomas algorithm.
pub fn solve_tridiagonal(system: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != system.size() {
        return Err(Error::InvalidArgument(format!("rhs length {} for system of size {}", rhs.len(), system.size())));
    }
    Ok(system.factor()?.solve(rhs))
}

/// Tridiagonal matrix plus a few rows carrying entries outside the band,
/// solved through a low-rank (Woodbury) correction of the Thomas solve.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    band: TridiagonalSystem,
    lu: TridiagonalLu,
    rows: Vec<usize>,
    extra: Vec<Vec<(usize, f64)>>,
    // T^{-1} e_r for each corrected row
    basis: Vec<Vec<f64>>,
    capacitance: Vec<Vec<f64>>,
}

impl BorderedSystem {
    /// `extra` holds `(row, col, value)` entries added to `band`. Entries
    /// that fall inside the band are merged into it.
    pub fn new(mut band: TridiagonalSystem, extra: &[(usize, usize, f64)]) -> Result<Self> {
        let n = band.size();
        let mut rows: Vec<usize> = Vec::new();
        let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
        for &(r, c, v) in extra {
            if r >= n || c >= n {
                return Err(Error::InvalidArgument(format!("entry ({r}, {c}) outside {n}x{n}")));
            }
            if r == c {
                band.diag[r] += v;
            } else if c + 1 == r {
                band.lower[c] += v;
            } else if r + 1 == c {
                band.upper[r] += v;
            } else {
                match rows.iter().position(|&x| x == r) {
                    Some(k) => entries[k].push((c, v)),
                    None => {
                        rows.push(r);
                        entries.push(vec![(c, v)]);
                    }
                }
            }
        }
        let lu = band.factor()?;
        let basis: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| {
                let mut e = vec![0.0; n];
                e[r] = 1.0;
                lu.solve_in_place(&mut e);
                e
            })
            .collect();
        let k = rows.len();
        let mut capacitance = vec![vec![0.0; k]; k];
        for (a, row) in capacitance.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                let dot: f64 = entries[a].iter().map(|&(c, v)| v * basis[b][c]).sum();
                *cell = dot + if a == b { 1.0 } else { 0.0 };
            }
        }
        Ok(Self { band, lu, rows, extra: entries, basis, capacitance })
    }

    pub fn size(&self) -> usize {
        self.band.size()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.band.apply(x);
        for (r, entries) in self.rows.iter().zip(&self.extra) {
            y[*r] += entries.iter().map(|&(c, v)| v * x[c]).sum::<f64>();
        }
        y
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.lu.solve(rhs);
        if self.rows.is_empty() {
            return Ok(y);
        }
        let mut proj: Vec<f64> =
            self.extra.iter().map(|entries| entries.iter().map(|&(c, v)| v * y[c]).sum()).collect();
        solve_dense(&self.capacitance, &mut proj)?;
        for (coef, b) in proj.iter().zip(&self.basis) {
            for (yi, bi) in y.iter_mut().zip(b) {
                *yi -= coef * bi;
            }
        }
        Ok(y)
    }
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(a: &[Vec<f64>], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap_or(col);
        if m[p][col].abs() < 1e-300 {
            return Err(Error::SingularSystem { row: col });
        }
        m.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * b[c]).sum();
        b[r] = (b[r] - s) / m[r][r];
    }
    Ok(())
}

/// Mass matrix restricted to an interval, over a contiguous range of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    pub nodes: Range<usize>,
    pub system: TridiagonalSystem,
}

/// Exact `∫ φ_i φ_j` over `[lo, hi]` for every node whose hat support
/// meets the open interval.
pub fn assemble_mass_matrix(grid: &Grid, interval: (f64, f64)) -> Result<MassMatrix> {
    let (lo, hi) = check_interval(grid, interval)?;
    let h = grid.h();
    let first = (((lo - grid.lo()) / h).ceil() as usize).saturating_sub(1);
    let last = ((((hi - grid.lo()) / h).floor() as usize) + 1).min(grid.n_cells());
    // drop hats that only touch the interval at a single point
    let first = if grid.node(first) + h <= lo { first + 1 } else { first };
    let last = if grid.node(last) - h >= hi { last - 1 } else { last };
    let nodes = first..last + 1;
    let system = assemble_mass_matrix_for(grid, nodes.clone(), (lo, hi))?;
    Ok(MassMatrix { nodes, system })
}

/// Exact `∫ φ_i φ_j` over `[lo, hi]` for the given node range. Cells
/// partially covered by the interval are integrated over the covered part.
pub fn assemble_mass_matrix_for(grid: &Grid, nodes: Range<usize>, interval: (f64, f64)) -> Result<TridiagonalSystem> {
    let (lo, hi) = check_interval(grid, interval)?;
    if nodes.is_empty() || nodes.end > grid.n_nodes() {
        return Err(Error::InvalidArgument(format!("bad node range {nodes:?}")));
    }
    let n = nodes.len();
    let mut sys = TridiagonalSystem::zeros(n);
    let h = grid.h();
    for cell in 0..grid.n_cells() {
        let (xl, xr) = (grid.node(cell), grid.node(cell + 1));
        let s = xl.max(lo);
        let e = xr.min(hi);
        if e <= s {
            continue;
        }
        // Simpson's rule is exact for the quadratic products of two hats.
        let left = |x: f64| (xr - x) / h;
        let right = |x: f64| (x - xl) / h;
        let m = 0.5 * (s + e);
        let simpson = |f: &dyn Fn(f64) -> f64| (e - s) / 6.0 * (f(s) + 4.0 * f(m) + f(e));
        let ll = simpson(&|x| left(x) * left(x));
        let lr = simpson(&|x| left(x) * right(x));
        let rr = simpson(&|x| right(x) * right(x));
        let a = cell;
        let b = cell + 1;
        if nodes.contains(&a) {
            sys.diag[a - nodes.start] += ll;
        }
        if nodes.contains(&b) {
            sys.diag[b - nodes.start] += rr;
        }
        if nodes.contains(&a) && nodes.contains(&b) {
            sys.upper[a - nodes.start] += lr;
            sys.lower[a - nodes.start] += lr;
        }
    }
    Ok(sys)
}

fn check_interval(grid: &Grid, (lo, hi): (f64, f64)) -> Result<(f64, f64)> {
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
    }
    for x in [lo, hi] {
        if !grid.contains(x) {
            return Err(Error::OutOfDomain { x, lo: grid.lo(), hi: grid.hi() });
        }
    }
    Ok((lo.max(grid.lo()), hi.min(grid.hi())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_examples() {
        let g = build_uniform_grid(0.5, 4).unwrap();
        assert_eq!(g.nodes(), vec![-0.5, -0.25, 0.0, 0.25, 0.5]);
        assert_eq!(g.h(), 0.25);
        let g = build_uniform_grid(0.5, 200).unwrap();
        assert_eq!(g.n_nodes(), 201);
        assert_abs_diff_eq!(g.h(), 0.005, epsilon = 1e-15);
        let g = build_uniform_grid(0.5, 100).unwrap();
        assert_eq!(g.n_nodes(), 101);
        assert_abs_diff_eq!(g.h(), 0.01, epsilon = 1e-15);
        assert!(build_uniform_grid(0.0, 4).is_err());
        assert!(build_uniform_grid(0.5, 1).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let g = build_uniform_grid(0.5, 8).unwrap();
        let f = NodalField::from_fn(g, |x| x * x);
        for (i, x) in g.nodes().into_iter().enumerate() {
            assert_eq!(interpolate(&f, x).unwrap(), f.values()[i]);
        }
        let g = Grid::new(0.0, 0.5, 2).unwrap();
        let f = NodalField::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(interpolate(&f, 0.125).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(interpolate(&f, 0.6), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn crossing_examples() {
        let g = Grid::new(0.0, 0.5, 2).unwrap();
        let f = NodalField::new(g, vec![1.0, -1.0, -2.0]).unwrap();
        assert_abs_diff_eq!(zero_crossing(&f).unwrap(), 0.125, epsilon = 1e-15);
        let f = NodalField::new(g, vec![1.0, 0.0, -1.0]).unwrap();
        assert_abs_diff_eq!(zero_crossing(&f).unwrap(), 0.25, epsilon = 1e-15);
        let g = Grid::new(0.0, 1.0, 4).unwrap();
        let f = NodalField::new(g, vec![1.0; 5]).unwrap();
        assert_eq!(zero_crossing(&f), Err(Error::NoPrice));
        let f = NodalField::new(g, vec![1.0, -1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(zero_crossing(&f), Err(Error::AmbiguousPrice(3)));
        let f = NodalField::new(g, vec![-1.0, -1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(zero_crossing(&f), Err(Error::NoPrice));
    }

    #[test]
    fn crossing_on_a_pair_of_nodes() {
        // values (+0.3, -0.1) on nodes (0, 0.25)
        let g = Grid::new(0.0, 0.5, 2).unwrap();
        let f = NodalField::new(g, vec![0.3, -0.1, -0.4]).unwrap();
        assert_abs_diff_eq!(zero_crossing(&f).unwrap(), 0.1875, epsilon = 1e-15);
    }

    #[test]
    fn mass_matrix_full_interval_rows() {
        let g = build_uniform_grid(0.5, 10).unwrap();
        let h = g.h();
        let m = assemble_mass_matrix(&g, (-0.5, 0.5)).unwrap();
        assert_eq!(m.nodes, 0..11);
        let s = &m.system;
        assert_abs_diff_eq!(s.diag[0], h / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.upper[0], h / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.diag[5], 2.0 * h / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.lower[4], h / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.upper[5], h / 6.0, epsilon = 1e-15);
        let sums = s.row_sums();
        for (i, r) in sums.iter().enumerate() {
            let expect = if i == 0 || i == 10 { h / 2.0 } else { h };
            assert_abs_diff_eq!(*r, expect, epsilon = 1e-15);
        }
        assert_eq!(s.lower, s.upper);
        assert!(assemble_mass_matrix(&g, (0.2, 0.2)).is_err());
    }

    fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        // 5-point rule on each panel
        let xs =
            [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
        let ws = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let d = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let (l, r) = (a + k as f64 * d, a + (k + 1) as f64 * d);
                let (c, hw) = (0.5 * (l + r), 0.5 * (r - l));
                xs.iter().zip(&ws).map(|(x, w)| w * hw * f(c + hw * x)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn clipped_mass_matrix_matches_quadrature() {
        let g = build_uniform_grid(0.5, 10).unwrap();
        let (lo, hi) = (-0.5, 0.137);
        let m = assemble_mass_matrix(&g, (lo, hi)).unwrap();
        // node 7 at 0.2 has support [0.1, 0.3] and is the last one touching
        assert_eq!(m.nodes, 0..8);
        let total: f64 = m.system.row_sums().iter().sum();
        assert_abs_diff_eq!(total, hi - lo, epsilon = 1e-14);
        for (a, i) in m.nodes.clone().enumerate() {
            for (b, j) in m.nodes.clone().enumerate() {
                let q = gauss_legendre(|x| g.hat(i, x) * g.hat(j, x), lo, hi, 400);
                let entry = if a == b {
                    m.system.diag[a]
                } else if b == a + 1 {
                    m.system.upper[a]
                } else if a == b + 1 {
                    m.system.lower[b]
                } else {
                    0.0
                };
                assert_abs_diff_eq!(entry, q, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn tridiagonal_examples() {
        let id = TridiagonalSystem::new(vec![0.0; 3], vec![1.0; 4], vec![0.0; 3]).unwrap();
        let r = vec![1.0, -2.0, 3.0, 4.5];
        assert_eq!(solve_tridiagonal(&id, &r).unwrap(), r);

        // 3x3 oracle by Cramer's rule
        let sys = TridiagonalSystem::new(vec![1.0, -1.0], vec![4.0, 3.0, 5.0], vec![2.0, 1.0]).unwrap();
        let b = [1.0, 2.0, 3.0];
        let a = [[4.0, 2.0, 0.0], [1.0, 3.0, 1.0], [0.0, -1.0, 5.0]];
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(a);
        let x = solve_tridiagonal(&sys, &b).unwrap();
        for k in 0..3 {
            let mut ak = a;
            for r in 0..3 {
                ak[r][k] = b[r];
            }
            assert_abs_diff_eq!(x[k], det(ak) / d, epsilon = 1e-14);
        }

        let g = build_uniform_grid(0.5, 20).unwrap();
        let m = assemble_mass_matrix(&g, (-0.5, 0.5)).unwrap().system;
        let v: Vec<f64> = (0..21).map(|i| (i as f64 * 0.3).sin()).collect();
        let back = solve_tridiagonal(&m, &m.apply(&v)).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }

        let singular = TridiagonalSystem::new(vec![1.0], vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(solve_tridiagonal(&singular, &[1.0, 1.0]), Err(Error::SingularSystem { row: 1 })));
    }

    #[test]
    fn bordered_solve_matches_application() {
        let n = 12;
        let band = TridiagonalSystem::new(vec![-1.0; n - 1], vec![3.0; n], vec![-1.0; n - 1]).unwrap();
        let sys = BorderedSystem::new(band, &[(0, 5, 0.5), (0, 7, -0.5), (n - 1, 3, 0.25), (2, 3, 0.1)]).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let back = sys.solve(&sys.apply(&x)).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn thomas_inverts_dominant_systems(
            n in 2usize..40,
            seed in proptest::collection::vec(-1.0f64..1.0, 160),
        ) {
            let lower: Vec<f64> = seed[..n - 1].to_vec();
            let upper: Vec<f64> = seed[40..40 + n - 1].to_vec();
            let diag: Vec<f64> = (0..n).map(|i| 2.5 + seed[80 + i].abs()).collect();
            let rhs: Vec<f64> = seed[120..120 + n].to_vec();
            let sys = TridiagonalSystem::new(lower, diag, upper).unwrap();
            let x = solve_tridiagonal(&sys, &rhs).unwrap();
            let r = sys.apply(&x);
            let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for (a, b) in r.iter().zip(&rhs) {
                prop_assert!((a - b).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn crossing_is_a_root_of_the_interpolant(
            left in proptest::collection::vec(0.01f64..2.0, 2..20),
            right in proptest::collection::vec(-2.0f64..-0.01, 1..20),
        ) {
            let mut v = left.clone();
            v.extend(&right);
            let g = Grid::new(-1.0, 1.0, v.len() - 1).unwrap();
            let f = NodalField::new(g, v).unwrap();
            let x = zero_crossing(&f).unwrap();
            prop_assert!(interpolate(&f, x).unwrap().abs() <= 1e-12);
        }

        #[test]
        fn interpolation_matches_two_point_formula(
            vals in proptest::collection::vec(-5.0f64..5.0, 3..30),
            t in 0.0f64..1.0,
        ) {
            let g = Grid::new(-0.5, 0.5, vals.len() - 1).unwrap();
            let f = NodalField::new(g, vals.clone()).unwrap();
            let x = -0.5 + t;
            let i = ((x + 0.5) / g.h()).floor().min((vals.len() - 2) as f64) as usize;
            let (xa, xb) = (g.node(i), g.node(i + 1));
            let direct = (vals[i] * (xb - x) + vals[i + 1] * (x - xa)) / (xb - xa);
            prop_assert!((interpolate(&f, x).unwrap() - direct).abs() <= 1e-12);
        }

        #[test]
        fn mass_matrix_is_symmetric(lo in -0.5f64..0.4, len in 0.01f64..0.5) {
            let g = build_uniform_grid(0.5, 17).unwrap();
            let hi = (lo + len).min(0.5);
            let m = assemble_mass_matrix(&g, (lo, hi)).unwrap();
            prop_assert_eq!(&m.system.lower, &m.system.upper);
            let total: f64 = m.system.row_sums().iter().sum();
            prop_assert!((total - (hi - lo)).abs() < 1e-13);
        }
    }
}
