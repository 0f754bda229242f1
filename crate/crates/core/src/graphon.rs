//! Graphon couplings: finite-rank spectral kernels and step-function kernels.
//!
//! A [`FiniteRankGraphon`] stores ordered eigenpairs and represents
//! `A(x, y) = sum_l lambda_l f_l(x) f_l(y)`. A [`StepGraphon`] is an `n x n`
//! symmetric matrix read on the uniform partition of `[0, 1]`; as an integral
//! operator it acts on cell vectors as `entries * v / n`.

use std::f64::consts::{PI, SQRT_2};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Tolerance for the orthonormality check on construction.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Composite midpoint rule on a uniform grid over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrature {
    nodes: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { nodes: 4096 }
    }
}

impl Quadrature {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::invalid("quadrature nodes", "must be positive"));
        }
        Ok(Quadrature { nodes })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.nodes as f64
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let sum: f64 = (0..self.nodes).map(|i| f(self.node(i))).sum();
        sum / self.nodes as f64
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { value: x })
    }
}

/// Cell of `x` in the uniform `n`-partition; the last cell is closed at 1.
pub fn cell_index(x: f64, n: usize) -> usize {
    ((x * n as f64).floor() as usize).min(n - 1)
}

/// Midpoint of cell `i` in the uniform `n`-partition.
pub fn cell_midpoint(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// `<u, v>` for cell vectors: `(1/n) sum u_i v_i`, the L2 product of the step functions.
pub fn cell_inner(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / u.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticKind {
    Sin,
    Cos,
    Const,
}

/// L2-normalized trigonometric eigenfunction: `sqrt2 sin(2 pi k x)`,
/// `sqrt2 cos(2 pi k x)`, or the constant 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticFn {
    kind: AnalyticKind,
    freq: u32,
}

impl AnalyticFn {
    pub fn new(kind: AnalyticKind, freq: u32) -> Result<Self> {
        match kind {
            AnalyticKind::Const => Ok(AnalyticFn { kind, freq: 0 }),
            _ if freq == 0 => Err(Error::invalid(
                "eigenfunction freq",
                "sin/cos eigenfunctions need freq >= 1",
            )),
            _ => Ok(AnalyticFn { kind, freq }),
        }
    }

    pub fn kind(&self) -> AnalyticKind {
        self.kind
    }

    pub fn freq(&self) -> u32 {
        self.freq
    }

    pub fn value(&self, x: f64) -> f64 {
        let arg = 2.0 * PI * self.freq as f64 * x;
        match self.kind {
            AnalyticKind::Sin => SQRT_2 * arg.sin(),
            AnalyticKind::Cos => SQRT_2 * arg.cos(),
            AnalyticKind::Const => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EigenFunction {
    Analytic(AnalyticFn),
    /// Cell values over a uniform partition.
    Step(Vec<f64>),
}

impl EigenFunction {
    pub fn sin(freq: u32) -> Self {
        EigenFunction::Analytic(AnalyticFn::new(AnalyticKind::Sin, freq).expect("freq >= 1"))
    }

    pub fn cos(freq: u32) -> Self {
        EigenFunction::Analytic(AnalyticFn::new(AnalyticKind::Cos, freq).expect("freq >= 1"))
    }

    pub fn constant() -> Self {
        EigenFunction::Analytic(AnalyticFn {
            kind: AnalyticKind::Const,
            freq: 0,
        })
    }

    /// Value at `x` without range checking.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            EigenFunction::Analytic(f) => f.value(x),
            EigenFunction::Step(cells) => cells[cell_index(x, cells.len())],
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.value(x))
    }

    pub fn partition(&self) -> Option<usize> {
        match self {
            EigenFunction::Step(cells) => Some(cells.len()),
            EigenFunction::Analytic(_) => None,
        }
    }

    /// Values on the `n` cells: stored values for a step function on the same
    /// partition, midpoint samples for an analytic one.
    pub fn cell_values(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            EigenFunction::Step(cells) if cells.len() == n => Ok(cells.clone()),
            EigenFunction::Step(cells) => Err(Error::Shape {
                context: "step eigenfunction partition",
                expected: n,
                got: cells.len(),
            }),
            EigenFunction::Analytic(f) => Ok((0..n).map(|i| f.value(cell_midpoint(i, n))).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    pub eigfun: EigenFunction,
}

impl EigenPair {
    pub fn new(lambda: f64, eigfun: EigenFunction) -> Self {
        EigenPair { lambda, eigfun }
    }
}

/// Pointwise-evaluable symmetric kernel on `[0, 1]^2`.
pub trait Kernel: Sync {
    fn eval(&self, x: f64, y: f64) -> Result<f64>;

    /// Tabulate the kernel on the nodes of `quad` for fast double sums.
    fn sample(&self, quad: &Quadrature) -> SampledKernel;
}

/// A kernel tabulated on quadrature nodes.
pub enum SampledKernel {
    LowRank { lambdas: Vec<f64>, columns: Vec<Vec<f64>> },
    Step { cells: Vec<usize>, entries: DMatrix<f64> },
}

impl SampledKernel {
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            SampledKernel::LowRank { lambdas, columns } => {
                lambdas.iter().zip(columns).map(|(l, f)| l * f[i] * f[j]).sum()
            }
            SampledKernel::Step { cells, entries } => entries[(cells[i], cells[j])],
        }
    }
}

/// `A(x, y) = sum_l lambda_l f_l(x) f_l(y)` with `|lambda_l|` non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteRankGraphon {
    pairs: Vec<EigenPair>,
    bound: f64,
}

impl FiniteRankGraphon {
    /// Validates ordering, nonzero finite eigenvalues within the bound, and
    /// orthonormality of the eigenfunctions.
    pub fn new(pairs: Vec<EigenPair>, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid("bound", "must be positive and finite"));
        }
        for (l, p) in pairs.iter().enumerate() {
            if !p.lambda.is_finite() || p.lambda == 0.0 {
                return Err(Error::invalid(
                    format!("pairs[{l}].lambda"),
                    "must be finite and nonzero",
                ));
            }
            if p.lambda.abs() > bound {
                return Err(Error::invalid(
                    format!("pairs[{l}].lambda"),
                    format!("|{}| exceeds the graphon bound {bound}", p.lambda),
                ));
            }
            if let EigenFunction::Step(cells) = &p.eigfun {
                if cells.is_empty() || cells.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(
                        format!("pairs[{l}].eigfun"),
                        "cell values must be non-empty and finite",
                    ));
                }
            }
        }
        for (l, w) in pairs.windows(2).enumerate() {
            if w[1].lambda.abs() > w[0].lambda.abs() {
                return Err(Error::invalid(
                    "pairs",
                    format!("|lambda| increases between positions {l} and {}", l + 1),
                ));
            }
        }
        let g = FiniteRankGraphon { pairs, bound };
        let gram = g.gram(&Quadrature::default());
        for (l, row) in gram.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                let target = if l == k { 1.0 } else { 0.0 };
                if (v - target).abs() > ORTHONORMAL_TOL {
                    return Err(Error::invalid(
                        "pairs",
                        format!("eigenfunctions {l} and {k} are not orthonormal: <f,f> = {v}"),
                    ));
                }
            }
        }
        Ok(g)
    }

    pub fn empty(bound: f64) -> Self {
        FiniteRankGraphon {
            pairs: Vec::new(),
            bound,
        }
    }

    /// `A(x, y) = 1`: one pair with `lambda = 1`, `f = 1` (mean-field coupling).
    pub fn uniform() -> Self {
        FiniteRankGraphon {
            pairs: vec![EigenPair::new(1.0, EigenFunction::constant())],
            bound: 1.0,
        }
    }

    /// `A(x, y) = cos(2 pi (x - y))` with the double eigenvalue 1/2.
    pub fn sinusoidal() -> Self {
        FiniteRankGraphon {
            pairs: vec![
                EigenPair::new(0.5, EigenFunction::sin(1)),
                EigenPair::new(0.5, EigenFunction::cos(1)),
            ],
            bound: 1.0,
        }
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn rank(&self) -> usize {
        self.pairs.len()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Common step partition when every eigenfunction is a step function on it.
    pub fn step_partition(&self) -> Option<usize> {
        let first = self.pairs.first()?.eigfun.partition()?;
        self.pairs
            .iter()
            .all(|p| p.eigfun.partition() == Some(first))
            .then_some(first)
    }

    /// Gram matrix of the eigenfunctions; exact on a shared step partition,
    /// quadrature otherwise.
    pub fn gram(&self, quad: &Quadrature) -> Vec<Vec<f64>> {
        let d = self.rank();
        let columns: Vec<Vec<f64>> = match self.step_partition() {
            Some(n) => self
                .pairs
                .iter()
                .map(|p| p.eigfun.cell_values(n).expect("shared partition"))
                .collect(),
            None => self
                .pairs
                .iter()
                .map(|p| (0..quad.nodes()).map(|i| p.eigfun.value(quad.node(i))).collect())
                .collect(),
        };
        (0..d)
            .map(|l| (0..d).map(|k| cell_inner(&columns[l], &columns[k])).collect())
            .collect()
    }

    /// Keep the first `min(level, d)` pairs.
    pub fn truncate(&self, level: usize) -> Self {
        FiniteRankGraphon {
            pairs: self.pairs.iter().take(level).cloned().collect(),
            bound: self.bound,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.lambda * p.eigfun.value(x) * p.eigfun.value(y))
            .sum()
    }

    /// `int A(., eta) v(eta) d eta = sum_l lambda_l <f_l, v> f_l`, with the
    /// inner products taken by quadrature.
    pub fn apply_fn(&self, v: impl Fn(f64) -> f64, quad: &Quadrature) -> Expansion<'_> {
        let coeffs = self
            .pairs
            .iter()
            .map(|p| p.lambda * quad.integrate(|x| p.eigfun.value(x) * v(x)))
            .collect();
        Expansion { graphon: self, coeffs }
    }

    /// Operator action on a piecewise-constant function given by its `n` cell values.
    pub fn apply_cells(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = v.len();
        let modes = self.cell_modes(n)?;
        let mut out = vec![0.0; n];
        for (p, f) in self.pairs.iter().zip(&modes) {
            let c = p.lambda * cell_inner(f, v);
            out.iter_mut().zip(f).for_each(|(o, fi)| *o += c * fi);
        }
        Ok(out)
    }

    /// Eigenfunction values on the `n`-cell partition, one vector per pair.
    pub fn cell_modes(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::invalid("n", "partition must have at least one cell"));
        }
        self.pairs.iter().map(|p| p.eigfun.cell_values(n)).collect()
    }

    /// Step graphon with `a_ij = A(x_i, x_j)` at cell midpoints.
    pub fn sample_step(&self, n: usize) -> Result<StepGraphon> {
        if n == 0 {
            return Err(Error::invalid("n", "partition must have at least one cell"));
        }
        let modes = self.cell_modes(n)?;
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let a: f64 = self.pairs.iter().zip(&modes).map(|(p, f)| p.lambda * f[i] * f[j]).sum();
                entries[(i, j)] = a;
                entries[(j, i)] = a;
            }
        }
        // Rounding can push a kernel that touches the bound just past it.
        let bound = entries.amax().max(self.bound);
        StepGraphon::new(entries, bound)
    }
}

impl Kernel for FiniteRankGraphon {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_unit(x)?;
        check_unit(y)?;
        Ok(self.value(x, y))
    }

    fn sample(&self, quad: &Quadrature) -> SampledKernel {
        SampledKernel::LowRank {
            lambdas: self.eigenvalues(),
            columns: self
                .pairs
                .iter()
                .map(|p| (0..quad.nodes()).map(|i| p.eigfun.value(quad.node(i))).collect())
                .collect(),
        }
    }
}

/// Linear combination `sum_l coeffs[l] f_l` of a graphon's eigenfunctions.
#[derive(Debug, Clone)]
pub struct Expansion<'a> {
    graphon: &'a FiniteRankGraphon,
    coeffs: Vec<f64>,
}

impl Expansion<'_> {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self, x: f64) -> f64 {
        self.graphon
            .pairs
            .iter()
            .zip(&self.coeffs)
            .map(|(p, c)| c * p.eigfun.value(x))
            .sum()
    }
}

/// Symmetric `n x n` coupling matrix read on the uniform partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGraphon {
    entries: DMatrix<f64>,
    bound: f64,
}

impl StepGraphon {
    /// Rejects non-square, asymmetric (exactly), non-finite, or out-of-bound entries.
    pub fn new(entries: DMatrix<f64>, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid("bound", "must be positive and finite"));
        }
        if !entries.is_square() {
            return Err(Error::Shape {
                context: "step graphon matrix",
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        let n = entries.nrows();
        if n == 0 {
            return Err(Error::invalid("matrix", "must have at least one cell"));
        }
        let mut asym = Vec::new();
        let mut oob = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let a = entries[(i, j)];
                if !a.is_finite() || a.abs() > bound {
                    oob.push((i, j));
                }
                if j > i && a != entries[(j, i)] {
                    asym.push((i, j));
                }
            }
        }
        if !asym.is_empty() {
            return Err(Error::invalid(
                "matrix",
                format!("not symmetric at {}", list_indices(&asym)),
            ));
        }
        if !oob.is_empty() {
            return Err(Error::invalid(
                "matrix",
                format!("entries outside [-{bound}, {bound}] at {}", list_indices(&oob)),
            ));
        }
        Ok(StepGraphon { entries, bound })
    }

    /// Row-major CSV without a header.
    pub fn from_csv_reader(reader: impl Read, bound: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    s.parse::<f64>()
                        .map_err(|_| Error::invalid("matrix_csv", format!("entry ({i}, {j}) = {s:?} is not a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix_csv", "empty matrix"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Shape {
                context: "matrix_csv row length",
                expected: n,
                got: bad.len(),
            });
        }
        let entries = DMatrix::from_row_iterator(n, n, rows.into_iter().flatten());
        StepGraphon::new(entries, bound)
    }

    pub fn from_csv_path(path: &Path, bound: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        StepGraphon::from_csv_reader(file, bound)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// The coupling as it acts on cell vectors: `entries / n`.
    pub fn scaled(&self) -> DMatrix<f64> {
        &self.entries / self.n() as f64
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let n = self.n();
        self.entries[(cell_index(x, n), cell_index(y, n))]
    }

    /// `(1/n) entries * v` on cell values.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if v.len() != n {
            return Err(Error::Shape {
                context: "step graphon apply",
                expected: n,
                got: v.len(),
            });
        }
        let inv_n = 1.0 / n as f64;
        Ok((0..n)
            .map(|i| (0..n).map(|j| self.entries[(i, j)] * v[j]).sum::<f64>() * inv_n)
            .collect())
    }

    /// `1e-10 * n * c`.
    pub fn default_zero_tol(&self) -> f64 {
        1e-10 * self.n() as f64 * self.bound
    }

    pub fn spectral_decompose(&self, zero_tol: f64) -> Result<FiniteRankGraphon> {
        self.spectral_decompose_with(zero_tol, 10_000)
    }

    /// Operator eigenpairs `(mu / n, sqrt(n) v)` of `entries`, keeping
    /// `|lambda| > zero_tol`, sorted by `|lambda|` descending (ties: larger
    /// lambda first). Each eigenfunction's first nonzero cell is positive.
    pub fn spectral_decompose_with(&self, zero_tol: f64, max_iter: usize) -> Result<FiniteRankGraphon> {
        let n = self.n();
        let eig =
            SymmetricEigen::try_new(self.entries.clone(), f64::EPSILON, max_iter).ok_or(Error::NoConvergence {
                dim: n,
                max_iter,
                eps: f64::EPSILON,
            })?;
        let scale = (n as f64).sqrt();
        let mut pairs: Vec<EigenPair> = (0..n)
            .filter_map(|k| {
                let lambda = eig.eigenvalues[k] / n as f64;
                if lambda.abs() <= zero_tol {
                    return None;
                }
                let mut cells: Vec<f64> = eig.eigenvectors.column(k).iter().map(|v| v * scale).collect();
                if let Some(first) = cells.iter().find(|v| v.abs() > 1e-9) {
                    if *first < 0.0 {
                        cells.iter_mut().for_each(|v| *v = -*v);
                    }
                }
                Some(EigenPair::new(lambda, EigenFunction::Step(cells)))
            })
            .collect();
        pairs.sort_by(|a, b| {
            b.lambda
                .abs()
                .total_cmp(&a.lambda.abs())
                .then(b.lambda.total_cmp(&a.lambda))
        });
        FiniteRankGraphon::new(pairs, self.bound)
    }
}

impl Kernel for StepGraphon {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_unit(x)?;
        check_unit(y)?;
        Ok(self.value(x, y))
    }

    fn sample(&self, quad: &Quadrature) -> SampledKernel {
        SampledKernel::Step {
            cells: (0..quad.nodes()).map(|i| cell_index(quad.node(i), self.n())).collect(),
            entries: self.entries.clone(),
        }
    }
}

fn list_indices(idx: &[(usize, usize)]) -> String {
    let shown: Vec<String> = idx.iter().take(8).map(|(i, j)| format!("({i}, {j})")).collect();
    if idx.len() > shown.len() {
        format!("{} and {} more", shown.join(", "), idx.len() - shown.len())
    } else {
        shown.join(", ")
    }
}

/// `||g1 - g2||` in `L2([0,1]^2)` by the tensor midpoint rule.
pub fn l2_distance(g1: &dyn Kernel, g2: &dyn Kernel, quad: &Quadrature, exec: Exec) -> f64 {
    let a = g1.sample(quad);
    let b = g2.sample(quad);
    let m = quad.nodes();
    let sum = exec.sum_range(m, |i| {
        (0..m)
            .map(|j| {
                let d = a.at(i, j) - b.at(i, j);
                d * d
            })
            .sum::<f64>()
    });
    (sum / (m * m) as f64).sqrt()
}
