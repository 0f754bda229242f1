//! Scalar Riccati equations `P' = 2 alpha P - beta^2 P^2 + q`, their explicit
//! solution through the algebraic root, and the finite-dimensional matrix
//! Riccati ODE used as a reference solver.
//!
//! All curves run forward in Riccati time `tau` from `P(0) = z0`; feedback
//! laws read them at time-to-go `T - t`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ode::{hermite, hermite_integral, rk4_step, TimeGrid};

fn check_horizon(horizon: f64, dt: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("T", format!("horizon must be positive, got {horizon}")));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= horizon) {
        return Err(Error::invalid(
            "dt",
            format!("need 0 < dt <= T, got dt = {dt}, T = {horizon}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRiccatiSpec {
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
    pub z0: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl ScalarRiccatiSpec {
    pub fn new(alpha: f64, beta: f64, q: f64, z0: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::invalid("riccati coefficients", "alpha and beta must be finite"));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::invalid("q", format!("state weight must be >= 0, got {q}")));
        }
        if !(z0.is_finite() && z0 >= 0.0) {
            return Err(Error::invalid("z0", format!("initial value must be >= 0, got {z0}")));
        }
        check_horizon(horizon, dt)?;
        Ok(ScalarRiccatiSpec {
            alpha,
            beta,
            q,
            z0,
            horizon,
            dt,
        })
    }

    pub fn rhs(&self, p: f64) -> f64 {
        2.0 * self.alpha * p - self.beta * self.beta * p * p + self.q
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon, self.dt)
    }
}

/// Gain samples on a uniform grid over `[0, T]`, with the ODE slope at each
/// sample so that off-grid reads use cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCurve {
    grid: TimeGrid,
    values: Vec<f64>,
    slopes: Vec<f64>,
    // prefix[k] = integral of the interpolant over [0, t_k]
    prefix: Vec<f64>,
}

impl GainCurve {
    pub(crate) fn from_parts(grid: TimeGrid, values: Vec<f64>, slopes: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        debug_assert_eq!(slopes.len(), grid.len());
        let h = grid.step();
        let mut prefix = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        prefix.push(acc);
        for k in 0..grid.steps() {
            acc += hermite_integral(h, 1.0, values[k], values[k + 1], slopes[k], slopes[k + 1]);
            prefix.push(acc);
        }
        GainCurve {
            grid,
            values,
            slopes,
            prefix,
        }
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        GainCurve::from_parts(grid, vec![value; grid.len()], vec![0.0; grid.len()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Value at `tau`, clamped to `[0, T]`.
    pub fn at(&self, tau: f64) -> f64 {
        let (k, tau) = self.grid.locate(tau);
        let h = self.grid.step();
        let s = (tau - self.grid.time(k)) / h;
        hermite(
            h,
            s,
            self.values[k],
            self.values[k + 1],
            self.slopes[k],
            self.slopes[k + 1],
        )
    }

    /// `int_a^b` of the interpolated curve, for `0 <= a <= b <= T`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    fn primitive(&self, tau: f64) -> f64 {
        let (k, tau) = self.grid.locate(tau);
        let h = self.grid.step();
        let s = (tau - self.grid.time(k)) / h;
        self.prefix[k]
            + hermite_integral(
                h,
                s,
                self.values[k],
                self.values[k + 1],
                self.slopes[k],
                self.slopes[k + 1],
            )
    }

    pub fn max_abs_diff(&self, other: &GainCurve) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Fourth-order Runge-Kutta integration from `z0` on the uniform grid.
pub fn solve_riccati_numeric(spec: &ScalarRiccatiSpec) -> Result<GainCurve> {
    let grid = spec.grid();
    let h = grid.step();
    let f = |_t: f64, p: &f64| spec.rhs(*p);
    let mut values = Vec::with_capacity(grid.len());
    let mut p = spec.z0;
    values.push(p);
    for k in 0..grid.steps() {
        p = rk4_step(&f, grid.time(k), &p, h);
        if !p.is_finite() {
            return Err(Error::BlowUp {
                what: "scalar Riccati solution",
                step: k + 1,
                time: grid.time(k + 1),
            });
        }
        values.push(p);
    }
    let slopes = values.iter().map(|&v| spec.rhs(v)).collect();
    Ok(GainCurve::from_parts(grid, values, slopes))
}

/// Nonnegative root `S` of `2 alpha S - beta^2 S^2 + q = 0`.
pub fn algebraic_root(alpha: f64, beta: f64, q: f64) -> Result<f64> {
    if beta == 0.0 {
        return Err(Error::ZeroInputGain);
    }
    let b2 = beta * beta;
    let a = alpha / b2;
    let c = q / b2;
    let r = (a * a + c).sqrt();
    // For a < 0 the textbook form r + a cancels; use c / (r - a) instead.
    Ok(if a >= 0.0 { r + a } else { c / (r - a) })
}

/// Explicit solution around the algebraic root:
/// `P_t = S + [e^{-2kt}/(z0 - S) + beta^2 int_0^t e^{-2k s} ds]^{-1}` with
/// `k = alpha - beta^2 S`, evaluated as `S + E (z0 - S) / (1 + beta^2 (z0 - S) (E - 1) / (2k))`,
/// `E = e^{2kt}`, which never overflows (k <= 0) and has the limit `(E-1)/(2k) -> t`.
///
/// Fails with [`Error::DegenerateBranch`] when `z0 == S` and
/// [`Error::ZeroInputGain`] when `beta == 0`.
pub fn solve_riccati_closed_form(spec: &ScalarRiccatiSpec) -> Result<GainCurve> {
    let root = algebraic_root(spec.alpha, spec.beta, spec.q)?;
    if spec.z0 == root {
        return Err(Error::DegenerateBranch { root });
    }
    let grid = spec.grid();
    let b2 = spec.beta * spec.beta;
    let k = spec.alpha - b2 * root;
    let offset = spec.z0 - root;
    let values: Vec<f64> = grid
        .times()
        .into_iter()
        .map(|t| {
            let growth = if k == 0.0 {
                t
            } else {
                (2.0 * k * t).exp_m1() / (2.0 * k)
            };
            let e = (2.0 * k * t).exp();
            root + e * offset / (1.0 + b2 * offset * growth)
        })
        .collect();
    let slopes = values.iter().map(|&v| spec.rhs(v)).collect();
    Ok(GainCurve::from_parts(grid, values, slopes))
}

/// Closed form with the degenerate branches filled in: the constant curve at
/// `S` when `z0 == S`, and the linear ODE solution when `beta == 0`.
pub fn solve_riccati_explicit(spec: &ScalarRiccatiSpec) -> Result<GainCurve> {
    match solve_riccati_closed_form(spec) {
        Err(Error::DegenerateBranch { root }) => Ok(GainCurve::constant(spec.grid(), root)),
        Err(Error::ZeroInputGain) => {
            let grid = spec.grid();
            let values: Vec<f64> = grid
                .times()
                .into_iter()
                .map(|t| {
                    if spec.alpha == 0.0 {
                        spec.z0 + spec.q * t
                    } else {
                        let a2 = 2.0 * spec.alpha;
                        spec.z0 * (a2 * t).exp() + spec.q * (a2 * t).exp_m1() / a2
                    }
                })
                .collect();
            if let Some(k) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::BlowUp {
                    what: "linear Riccati solution",
                    step: k,
                    time: grid.time(k),
                });
            }
            let slopes = values.iter().map(|&v| spec.rhs(v)).collect();
            Ok(GainCurve::from_parts(grid, values, slopes))
        }
        other => other,
    }
}

/// Time-sampled solution of `P' = A^T P + P A - P B B^T P + Q`, `P(0) = P0`.
#[derive(Debug, Clone)]
pub struct MatrixRiccatiSolution {
    grid: TimeGrid,
    values: Vec<DMatrix<f64>>,
    slopes: Vec<DMatrix<f64>>,
}

impl MatrixRiccatiSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    /// Elementwise cubic Hermite read at `tau`, clamped to `[0, T]`.
    pub fn at(&self, tau: f64) -> DMatrix<f64> {
        let (k, tau) = self.grid.locate(tau);
        let h = self.grid.step();
        let s = (tau - self.grid.time(k)) / h;
        let (p0, p1) = (&self.values[k], &self.values[k + 1]);
        let (d0, d1) = (&self.slopes[k], &self.slopes[k + 1]);
        DMatrix::from_fn(p0.nrows(), p0.ncols(), |i, j| {
            hermite(h, s, p0[(i, j)], p1[(i, j)], d0[(i, j)], d1[(i, j)])
        })
    }
}

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::invalid(name, "must be symmetric"));
    }
    let min = m.clone().symmetric_eigenvalues().min();
    if min < -1e-9 * scale {
        return Err(Error::invalid(
            name,
            format!("must be positive semidefinite, smallest eigenvalue {min:e}"),
        ));
    }
    Ok(())
}

pub fn solve_matrix_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    horizon: f64,
    dt: f64,
) -> Result<MatrixRiccatiSolution> {
    let n = a.nrows();
    for (name, m, cols) in [("A", a, n), ("Q", q, n), ("P0", p0, n)] {
        if m.nrows() != n || m.ncols() != cols {
            return Err(Error::Shape {
                context: match name {
                    "A" => "matrix Riccati A",
                    "Q" => "matrix Riccati Q",
                    _ => "matrix Riccati P0",
                },
                expected: n,
                got: if m.nrows() != n { m.nrows() } else { m.ncols() },
            });
        }
    }
    if b.nrows() != n {
        return Err(Error::Shape {
            context: "matrix Riccati B",
            expected: n,
            got: b.nrows(),
        });
    }
    check_psd("Q", q)?;
    check_psd("P0", p0)?;
    check_horizon(horizon, dt)?;

    let at = a.transpose();
    let bbt = b * b.transpose();
    let rhs = |p: &DMatrix<f64>| -> DMatrix<f64> { &at * p + p * a - p * &bbt * p + q };
    let f = |_t: f64, p: &DMatrix<f64>| rhs(p);

    let grid = TimeGrid::new(horizon, dt);
    let h = grid.step();
    let mut values = Vec::with_capacity(grid.len());
    let mut p = p0.clone();
    values.push(p.clone());
    for k in 0..grid.steps() {
        let next = rk4_step(&f, grid.time(k), &p, h);
        p = (&next + next.transpose()) * 0.5;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                what: "matrix Riccati solution",
                step: k + 1,
                time: grid.time(k + 1),
            });
        }
        values.push(p.clone());
    }
    let slopes = values.iter().map(rhs).collect();
    Ok(MatrixRiccatiSolution { grid, values, slopes })
}
