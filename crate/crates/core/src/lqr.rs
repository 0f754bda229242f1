//! Spectral decoupling of the graphon LQR problem into one auxiliary and `d`
//! eigendirection scalar problems, gain synthesis, and the resulting
//! feedback laws.
//!
//! With `A = sum_l lambda_l f_l f_l^T`, `B = poly_B(A)`, `Q = poly_Q(A)` and
//! `P0 = poly_P0(A)`, the state splits as `x = x_aux + sum_l xbar_l f_l` with
//! `xbar_l = <x, f_l>`. The auxiliary part sees `(alpha0, beta0, q0, z0)` and
//! direction `l` sees `(alpha0 + lambda_l, poly_B(lambda_l), poly_Q(lambda_l),
//! poly_P0(lambda_l))`, so the optimal law needs only `d + 1` scalar Riccati
//! solves.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graphon::{cell_index, cell_inner, FiniteRankGraphon, Quadrature};
use crate::poly::CoeffPoly;
use crate::riccati::{solve_riccati_explicit, solve_riccati_numeric, GainCurve, ScalarRiccatiSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LqrProblem {
    alpha0: f64,
    poly_b: CoeffPoly,
    poly_q: CoeffPoly,
    poly_p0: CoeffPoly,
    graphon: FiniteRankGraphon,
    horizon: f64,
}

/// Coefficients of one decoupled scalar LQR problem
/// `x' = drift x + gain u`, cost `int q x^2 + u^2 + z x_T^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSystem {
    pub drift: f64,
    pub gain: f64,
    pub q: f64,
    pub z: f64,
}

impl ScalarSystem {
    pub fn riccati(&self, horizon: f64, dt: f64) -> Result<ScalarRiccatiSpec> {
        ScalarRiccatiSpec::new(self.drift, self.gain, self.q, self.z, horizon, dt)
    }

    fn key(&self) -> [u64; 4] {
        [self.drift, self.gain, self.q, self.z].map(f64::to_bits)
    }
}

impl LqrProblem {
    /// Rejects weights that are negative on the spectrum, including on the
    /// null space (constant terms).
    pub fn new(
        alpha0: f64,
        poly_b: CoeffPoly,
        poly_q: CoeffPoly,
        poly_p0: CoeffPoly,
        graphon: FiniteRankGraphon,
        horizon: f64,
    ) -> Result<Self> {
        if !alpha0.is_finite() {
            return Err(Error::invalid("alpha0", "must be finite"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("T", format!("horizon must be positive, got {horizon}")));
        }
        for (name, p) in [("poly_Q", &poly_q), ("poly_P0", &poly_p0)] {
            if p.constant_term() < 0.0 {
                return Err(Error::invalid(
                    name,
                    format!("constant term {} is negative", p.constant_term()),
                ));
            }
            for (l, lambda) in graphon.eigenvalues().into_iter().enumerate() {
                let v = p.eval(lambda);
                if v < 0.0 {
                    return Err(Error::invalid(
                        name,
                        format!("negative ({v}) at eigenvalue {lambda} of direction {}", l + 1),
                    ));
                }
            }
        }
        Ok(LqrProblem {
            alpha0,
            poly_b,
            poly_q,
            poly_p0,
            graphon,
            horizon,
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn poly_b(&self) -> &CoeffPoly {
        &self.poly_b
    }

    pub fn poly_q(&self) -> &CoeffPoly {
        &self.poly_q
    }

    pub fn poly_p0(&self) -> &CoeffPoly {
        &self.poly_p0
    }

    pub fn graphon(&self) -> &FiniteRankGraphon {
        &self.graphon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn rank(&self) -> usize {
        self.graphon.rank()
    }

    pub fn beta0(&self) -> f64 {
        self.poly_b.constant_term()
    }

    pub fn with_graphon(&self, graphon: FiniteRankGraphon) -> Result<Self> {
        LqrProblem::new(
            self.alpha0,
            self.poly_b.clone(),
            self.poly_q.clone(),
            self.poly_p0.clone(),
            graphon,
            self.horizon,
        )
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        LqrProblem::new(
            self.alpha0,
            self.poly_b.clone(),
            self.poly_q.clone(),
            self.poly_p0.clone(),
            self.graphon.clone(),
            horizon,
        )
    }

    /// `(alpha0, beta0, q0, z0)`.
    pub fn auxiliary_params(&self) -> ScalarSystem {
        ScalarSystem {
            drift: self.alpha0,
            gain: self.poly_b.constant_term(),
            q: self.poly_q.constant_term(),
            z: self.poly_p0.constant_term(),
        }
    }

    /// Parameters of the scalar problem in direction `l` (0-based).
    pub fn eigensystem_params(&self, l: usize) -> Result<ScalarSystem> {
        let pair = self.graphon.pairs().get(l).ok_or(Error::Index {
            index: l,
            len: self.rank(),
        })?;
        Ok(self.params_at(pair.lambda))
    }

    /// Scalar problem seen by a direction with eigenvalue `lambda`; at
    /// `lambda = 0` this is the auxiliary problem.
    pub fn params_at(&self, lambda: f64) -> ScalarSystem {
        ScalarSystem {
            drift: self.alpha0 + lambda,
            gain: self.poly_b.eval(lambda),
            q: self.poly_q.eval(lambda),
            z: self.poly_p0.eval(lambda),
        }
    }
}

/// Eigen coordinates and the orthogonal residual of a cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledState {
    pub eigen_coords: Vec<f64>,
    pub auxiliary: Vec<f64>,
}

impl DecoupledState {
    /// `x_aux + sum_l xbar_l f_l`.
    pub fn reconstruct(&self, modes: &[Vec<f64>]) -> Vec<f64> {
        let mut x = self.auxiliary.clone();
        for (c, f) in self.eigen_coords.iter().zip(modes) {
            x.iter_mut().zip(f).for_each(|(xi, fi)| *xi += c * fi);
        }
        x
    }
}

/// Projection of a cell vector onto eigenfunction cell values `modes`.
pub fn project_onto(x: &[f64], modes: &[Vec<f64>]) -> DecoupledState {
    let eigen_coords: Vec<f64> = modes.iter().map(|f| cell_inner(x, f)).collect();
    let mut auxiliary = x.to_vec();
    for (c, f) in eigen_coords.iter().zip(modes) {
        auxiliary.iter_mut().zip(f).for_each(|(a, fi)| *a -= c * fi);
    }
    DecoupledState {
        eigen_coords,
        auxiliary,
    }
}

/// Project a piecewise-constant state (one value per cell) onto the graphon's
/// eigendirections.
pub fn project_state(x: &[f64], g: &FiniteRankGraphon) -> Result<DecoupledState> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("state", "must be finite"));
    }
    if let Some(n) = g.step_partition() {
        if x.len() != n {
            return Err(Error::Shape {
                context: "project_state",
                expected: n,
                got: x.len(),
            });
        }
    }
    let modes = g.cell_modes(x.len())?;
    Ok(project_onto(x, &modes))
}

/// Projection of a state given as a function on `[0, 1]`.
pub struct FunctionProjection<'a, F> {
    graphon: &'a FiniteRankGraphon,
    state: F,
    pub eigen_coords: Vec<f64>,
}

impl<F: Fn(f64) -> f64> FunctionProjection<'_, F> {
    /// `x(gamma) - sum_l xbar_l f_l(gamma)`.
    pub fn auxiliary(&self, gamma: f64) -> f64 {
        (self.state)(gamma)
            - self
                .graphon
                .pairs()
                .iter()
                .zip(&self.eigen_coords)
                .map(|(p, c)| c * p.eigfun.value(gamma))
                .sum::<f64>()
    }
}

pub fn project_fn<'a, F: Fn(f64) -> f64>(
    x: F,
    g: &'a FiniteRankGraphon,
    quad: &Quadrature,
) -> FunctionProjection<'a, F> {
    let eigen_coords = g
        .pairs()
        .iter()
        .map(|p| quad.integrate(|s| x(s) * p.eigfun.value(s)))
        .collect();
    FunctionProjection {
        graphon: g,
        state: x,
        eigen_coords,
    }
}

/// Auxiliary gain `L` and one eigengain `M^l` per direction, all on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    aux: GainCurve,
    eigen: Vec<GainCurve>,
    solves: usize,
}

impl GainSchedule {
    pub fn aux(&self) -> &GainCurve {
        &self.aux
    }

    pub fn eigen(&self) -> &[GainCurve] {
        &self.eigen
    }

    pub fn horizon(&self) -> f64 {
        self.aux.horizon()
    }

    /// Number of distinct scalar Riccati equations that were integrated.
    pub fn riccati_solves(&self) -> usize {
        self.solves
    }
}

/// Solve the auxiliary and eigendirection Riccati equations. Directions
/// with identical scalar problems (repeated eigenvalues) share one solve.
pub fn synthesize_gains(p: &LqrProblem, dt: f64, exec: Exec) -> Result<GainSchedule> {
    let mut jobs = vec![p.auxiliary_params()];
    let mut job_of: Vec<usize> = Vec::with_capacity(p.rank());
    let mut seen: HashMap<[u64; 4], usize> = HashMap::new();
    for l in 0..p.rank() {
        let sys = p.eigensystem_params(l)?;
        let idx = *seen.entry(sys.key()).or_insert_with(|| {
            jobs.push(sys);
            jobs.len() - 1
        });
        job_of.push(idx);
    }
    let specs = jobs
        .iter()
        .map(|s| s.riccati(p.horizon, dt))
        .collect::<Result<Vec<_>>>()?;
    let mut curves = exec
        .map(&specs, solve_riccati_numeric)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let eigen = job_of.iter().map(|&j| curves[j].clone()).collect();
    let aux = curves.swap_remove(0);
    Ok(GainSchedule {
        aux,
        eigen,
        solves: specs.len(),
    })
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if t.is_finite() && t >= -1e-12 * horizon && t <= horizon * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(Error::invalid("t", format!("{t} outside [0, {horizon}]")))
    }
}

/// Control of subsystem `gamma` from its own state, the global eigenstates
/// and its eigenfunction values:
/// `u(gamma) = -beta0 L_{T-t} x_aux(gamma) - sum_l b_l M^l_{T-t} xbar_l f_l(gamma)`.
pub fn control_localized(gamma: f64, t: f64, x: &[f64], gains: &GainSchedule, p: &LqrProblem) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain { value: gamma });
    }
    check_time(t, p.horizon)?;
    let n = x.len();
    let modes = p.graphon.cell_modes(n)?;
    let i = cell_index(gamma, n);
    let tau = p.horizon - t;
    let mut aux_state = x[i];
    let mut eigen_part = 0.0;
    for (l, f) in modes.iter().enumerate() {
        let xbar = cell_inner(x, f);
        aux_state -= xbar * f[i];
        let b = p.poly_b.eval(p.graphon.pairs()[l].lambda);
        eigen_part += b * gains.eigen[l].at(tau) * xbar * f[i];
    }
    Ok(-p.beta0() * gains.aux.at(tau) * aux_state - eigen_part)
}

/// The same law for all cells at once, as vector operations.
pub fn control_centralized(t: f64, x: &[f64], gains: &GainSchedule, p: &LqrProblem) -> Result<Vec<f64>> {
    check_time(t, p.horizon)?;
    let n = x.len();
    let d = p.rank();
    let modes = p.graphon.cell_modes(n)?;
    let f = DMatrix::from_fn(n, d, |i, l| modes[l][i]);
    let xv = DVector::from_column_slice(x);
    let coords = f.tr_mul(&xv) / n as f64;
    let aux_state = &xv - &f * &coords;
    let tau = p.horizon - t;
    let weighted = DVector::from_fn(d, |l, _| {
        p.poly_b.eval(p.graphon.pairs()[l].lambda) * gains.eigen[l].at(tau) * coords[l]
    });
    let u = aux_state * (-p.beta0() * gains.aux.at(tau)) - f * weighted;
    Ok(u.iter().copied().collect())
}

/// Riccati operator on `n` cells at Riccati time `tau`:
/// `P = L (I - sum_l Pi_l) + sum_l M^l Pi_l`, `Pi_l = f_l f_l^T / n`.
pub fn reconstruct_p(gains: &GainSchedule, g: &FiniteRankGraphon, tau: f64, n: usize) -> Result<DMatrix<f64>> {
    if gains.eigen.len() != g.rank() {
        return Err(Error::Shape {
            context: "reconstruct_P gains",
            expected: g.rank(),
            got: gains.eigen.len(),
        });
    }
    let modes = g.cell_modes(n)?;
    if !cells_orthonormal(&modes) {
        return Err(Error::Unsupported(format!(
            "eigenfunctions are not orthonormal on {n} cells"
        )));
    }
    let eigen: Vec<f64> = gains.eigen.iter().map(|c| c.at(tau)).collect();
    Ok(spectral_operator(n, gains.aux.at(tau), &eigen, &modes))
}

/// `base (I - sum_l Pi_l) + sum_l w_l Pi_l` on the cells of `modes`.
pub(crate) fn spectral_operator(n: usize, base: f64, weights: &[f64], modes: &[Vec<f64>]) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n) * base;
    for (f, w) in modes.iter().zip(weights) {
        let fv = DVector::from_column_slice(f);
        p += &fv * fv.transpose() * ((w - base) / n as f64);
    }
    p
}

/// Cell values form an orthonormal family under the cell inner product, so
/// the rank-one projections are genuine orthogonal projections.
pub(crate) fn cells_orthonormal(modes: &[Vec<f64>]) -> bool {
    modes.iter().enumerate().all(|(i, fi)| {
        modes.iter().enumerate().all(|(j, fj)| {
            let want = if i == j { 1.0 } else { 0.0 };
            (cell_inner(fi, fj) - want).abs() <= crate::graphon::ORTHONORMAL_TOL
        })
    })
}

/// Which eigendirections a decoupled controller treats explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ControllerMode {
    #[default]
    Optimal,
    /// Only the first `L` directions; the rest get the auxiliary law.
    Truncated(usize),
    AuxiliaryOnly,
}

impl ControllerMode {
    pub fn kept(&self, rank: usize) -> usize {
        match *self {
            ControllerMode::Optimal => rank,
            ControllerMode::Truncated(l) => l.min(rank),
            ControllerMode::AuxiliaryOnly => 0,
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerMode::Optimal => f.write_str("optimal"),
            ControllerMode::Truncated(l) => write!(f, "truncated({l})"),
            ControllerMode::AuxiliaryOnly => f.write_str("auxiliary_only"),
        }
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "optimal" => return Ok(ControllerMode::Optimal),
            "auxiliary_only" => return Ok(ControllerMode::AuxiliaryOnly),
            _ => {}
        }
        s.strip_prefix("truncated(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|l| l.trim().parse().ok())
            .map(ControllerMode::Truncated)
            .ok_or_else(|| {
                Error::invalid(
                    "controller",
                    format!("expected optimal, truncated(L) or auxiliary_only, got {s:?}"),
                )
            })
    }
}

impl TryFrom<String> for ControllerMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ControllerMode> for String {
    fn from(m: ControllerMode) -> Self {
        m.to_string()
    }
}

/// How subsystems obtain the eigenstates `xbar_l(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenstateMode {
    /// Project the current state at every evaluation.
    #[default]
    RealTime,
    /// Project `x0` once and propagate each eigenstate by its closed-loop flow.
    Precomputed,
}

/// A state feedback `u(t, x)` on an `n`-cell network over `[0, T]`.
pub trait Controller: Sync {
    fn horizon(&self) -> f64;

    fn control(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone)]
struct Direction {
    cells: DVector<f64>,
    lambda: f64,
    input_gain: f64,
    gain: GainCurve,
    initial: Option<f64>,
}

/// The localized optimal law, or its spectral truncation.
#[derive(Debug, Clone)]
pub struct DecoupledController {
    n: usize,
    horizon: f64,
    alpha0: f64,
    beta0: f64,
    aux: GainCurve,
    directions: Vec<Direction>,
}

impl DecoupledController {
    pub fn new(p: &LqrProblem, gains: &GainSchedule, n: usize, mode: ControllerMode) -> Result<Self> {
        if gains.eigen.len() != p.rank() {
            return Err(Error::Shape {
                context: "gain schedule",
                expected: p.rank(),
                got: gains.eigen.len(),
            });
        }
        if (gains.horizon() - p.horizon).abs() > 1e-12 * p.horizon {
            return Err(Error::invalid(
                "gains",
                format!("horizon {} differs from problem horizon {}", gains.horizon(), p.horizon),
            ));
        }
        if let ControllerMode::Truncated(l) = mode {
            if l > p.rank() {
                return Err(Error::Precondition(format!(
                    "truncation level {l} exceeds graphon rank {}",
                    p.rank()
                )));
            }
        }
        let kept = mode.kept(p.rank());
        let modes = p.graphon.cell_modes(n)?;
        let directions = (0..kept)
            .map(|l| {
                let lambda = p.graphon.pairs()[l].lambda;
                Direction {
                    cells: DVector::from_column_slice(&modes[l]),
                    lambda,
                    input_gain: p.poly_b.eval(lambda),
                    gain: gains.eigen[l].clone(),
                    initial: None,
                }
            })
            .collect();
        Ok(DecoupledController {
            n,
            horizon: p.horizon,
            alpha0: p.alpha0,
            beta0: p.beta0(),
            aux: gains.aux.clone(),
            directions,
        })
    }

    /// Switch to precomputed eigenstates seeded from `x0`:
    /// `xbar_l(t) = xbar_l(0) exp((alpha0 + lambda_l) t - b_l^2 int_{T-t}^T M^l)`.
    pub fn with_precomputed_eigenstates(mut self, x0: &[f64]) -> Result<Self> {
        if x0.len() != self.n {
            return Err(Error::Shape {
                context: "initial state",
                expected: self.n,
                got: x0.len(),
            });
        }
        for d in &mut self.directions {
            d.initial = Some(cell_inner(x0, d.cells.as_slice()));
        }
        Ok(self)
    }

    pub fn kept_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Eigenstates used by the law at time `t`.
    pub fn eigenstates(&self, t: f64, x: &DVector<f64>) -> Vec<f64> {
        let inv_n = 1.0 / self.n as f64;
        self.directions
            .iter()
            .map(|d| match d.initial {
                None => d.cells.dot(x) * inv_n,
                Some(x0) => {
                    let decay = d.input_gain * d.input_gain * d.gain.integral(self.horizon - t, self.horizon);
                    x0 * ((self.alpha0 + d.lambda) * t - decay).exp()
                }
            })
            .collect()
    }

    /// Scalar law for the subsystem in cell `i`.
    pub fn control_cell(&self, i: usize, t: f64, x: &DVector<f64>) -> f64 {
        let tau = self.horizon - t;
        let coords = self.eigenstates(t, x);
        let mut aux_state = x[i];
        let mut eigen_part = 0.0;
        for (d, c) in self.directions.iter().zip(&coords) {
            aux_state -= c * d.cells[i];
            eigen_part += d.input_gain * d.gain.at(tau) * c * d.cells[i];
        }
        -self.beta0 * self.aux.at(tau) * aux_state - eigen_part
    }
}

impl Controller for DecoupledController {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn control(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let tau = self.horizon - t;
        let coords = self.eigenstates(t, x);
        let mut aux_state = x.clone();
        let mut u = DVector::zeros(self.n);
        for (d, c) in self.directions.iter().zip(&coords) {
            aux_state.axpy(-c, &d.cells, 1.0);
            u.axpy(-d.input_gain * d.gain.at(tau) * c, &d.cells, 1.0);
        }
        u.axpy(-self.beta0 * self.aux.at(tau), &aux_state, 1.0);
        u
    }
}

/// Localized law with only the first `level` directions treated explicitly.
pub fn truncated_controller(
    p: &LqrProblem,
    level: usize,
    n: usize,
    dt: f64,
    exec: Exec,
) -> Result<DecoupledController> {
    if level > p.rank() {
        return Err(Error::Precondition(format!(
            "truncation level {level} exceeds graphon rank {}",
            p.rank()
        )));
    }
    let gains = synthesize_gains(&p.with_graphon(p.graphon.truncate(level))?, dt, exec)?;
    let trunc = p.with_graphon(p.graphon.truncate(level))?;
    DecoupledController::new(&trunc, &gains, n, ControllerMode::Optimal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiccatiMethod {
    #[default]
    Numeric,
    ClosedForm,
}

fn solve_with(method: RiccatiMethod, spec: &ScalarRiccatiSpec) -> Result<GainCurve> {
    match method {
        RiccatiMethod::Numeric => solve_riccati_numeric(spec),
        RiccatiMethod::ClosedForm => solve_riccati_explicit(spec),
    }
}

/// Predicted terminal ratio `x_trunc(T) / x_opt(T)` in ignored direction `h`
/// (0-based) when `poly_B = beta0`:
/// `exp(-beta0^2 int_0^T (Mtilde - M^h) dt)`, where `Mtilde` solves the
/// auxiliary Riccati equation.
pub fn ratio_prediction(p: &LqrProblem, h: usize, dt: f64, method: RiccatiMethod) -> Result<f64> {
    if p.poly_b.degree() > 0 {
        return Err(Error::Precondition(format!(
            "ratio prediction needs a constant input polynomial, got degree {}",
            p.poly_b.degree()
        )));
    }
    let eigen = p.eigensystem_params(h)?;
    let aux = p.auxiliary_params();
    let t = p.horizon;
    let m_tilde = solve_with(method, &aux.riccati(t, dt)?)?;
    let m = solve_with(method, &eigen.riccati(t, dt)?)?;
    let beta0 = p.beta0();
    Ok((-beta0 * beta0 * (m_tilde.integral(0.0, t) - m.integral(0.0, t))).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{EigenFunction, EigenPair};
    use std::f64::consts::{PI, SQRT_2};

    fn poly(c: &[f64]) -> CoeffPoly {
        CoeffPoly::new(c.to_vec()).unwrap()
    }

    fn worked_example(t: f64) -> LqrProblem {
        LqrProblem::new(
            2.0,
            poly(&[1.0, 0.5]),
            poly(&[1.0, -2.0, 1.0]),
            poly(&[1.0, -2.0, 1.0]),
            FiniteRankGraphon::sinusoidal(),
            t,
        )
        .unwrap()
    }

    #[test]
    fn eigensystem_params_of_the_worked_example() {
        let p = worked_example(1.0);
        for l in 0..2 {
            let s = p.eigensystem_params(l).unwrap();
            assert_eq!((s.drift, s.gain, s.q, s.z), (2.5, 1.25, 0.25, 0.25));
        }
        assert!(matches!(p.eigensystem_params(2), Err(Error::Index { .. })));
        let a = p.auxiliary_params();
        assert_eq!((a.drift, a.gain, a.q, a.z), (2.0, 1.0, 1.0, 1.0));
        assert_eq!(p.params_at(0.0), a);
    }

    #[test]
    fn uniform_params() {
        let p = LqrProblem::new(
            -0.5,
            CoeffPoly::constant(2.0),
            CoeffPoly::constant(3.0),
            CoeffPoly::constant(0.7),
            FiniteRankGraphon::uniform(),
            1.0,
        )
        .unwrap();
        let s = p.eigensystem_params(0).unwrap();
        assert_eq!((s.drift, s.gain, s.q, s.z), (0.5, 2.0, 3.0, 0.7));
        let gains = synthesize_gains(&p, 1e-3, Exec::default()).unwrap();
        assert_eq!(gains.eigen().len(), 1);
        assert_eq!(gains.riccati_solves(), 2);
    }

    #[test]
    fn problem_rejects_negative_weights() {
        let g = FiniteRankGraphon::sinusoidal();
        let bad = LqrProblem::new(0.0, poly(&[1.0]), poly(&[0.0, -1.0]), poly(&[0.0]), g.clone(), 1.0);
        assert!(bad.is_err());
        let bad = LqrProblem::new(0.0, poly(&[1.0]), poly(&[1.0]), poly(&[-0.1]), g, 1.0);
        assert!(bad.is_err());
    }

    #[test]
    fn worked_example_gains() {
        let p = worked_example(1.0);
        let gains = synthesize_gains(&p, 1e-3, Exec::default()).unwrap();
        assert_eq!(gains.riccati_solves(), 2);
        assert_eq!(gains.eigen()[0], gains.eigen()[1]);
        let aux = ScalarRiccatiSpec::new(2.0, 1.0, 1.0, 1.0, 1.0, 1e-3).unwrap();
        assert_eq!(gains.aux(), &solve_riccati_numeric(&aux).unwrap());
        let eig = ScalarRiccatiSpec::new(2.5, 1.25, 0.25, 0.25, 1.0, 1e-3).unwrap();
        assert_eq!(&gains.eigen()[0], &solve_riccati_numeric(&eig).unwrap());
        // L' = 4L - L^2 + 1 and M' = 5M - (25/16) M^2 + 1/4
        assert_eq!(aux.rhs(1.0), 4.0);
        assert_eq!(eig.rhs(0.25), 5.0 * 0.25 - 25.0 / 16.0 * 0.0625 + 0.25);
    }

    #[test]
    fn zero_cost_gives_zero_gains() {
        let p = LqrProblem::new(
            1.0,
            poly(&[1.0, 0.3]),
            poly(&[0.0]),
            poly(&[0.0]),
            FiniteRankGraphon::sinusoidal(),
            1.0,
        )
        .unwrap();
        let gains = synthesize_gains(&p, 1e-2, Exec::Sequential).unwrap();
        assert!(gains.aux().values().iter().all(|&v| v == 0.0));
        assert!(gains.eigen().iter().all(|c| c.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn projection_examples() {
        let g = FiniteRankGraphon::sinusoidal();
        let n = 16;
        let f1 = g.cell_modes(n).unwrap().remove(0);
        let s = project_state(&f1, &g).unwrap();
        assert!((s.eigen_coords[0] - 1.0).abs() < 1e-14);
        assert!(s.eigen_coords[1].abs() < 1e-14);
        assert!(s.auxiliary.iter().all(|a| a.abs() < 1e-14));

        // Alternating sign is orthogonal to sin/cos at freq 1 on 16 cells.
        let alt: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = project_state(&alt, &g).unwrap();
        assert!(s.eigen_coords.iter().all(|c| c.abs() < 1e-14));
        assert_eq!(s.reconstruct(&g.cell_modes(n).unwrap()).len(), n);
        for (a, b) in s.auxiliary.iter().zip(&alt) {
            assert!((a - b).abs() < 1e-14);
        }

        let x = |t: f64| SQRT_2 * (2.0 * PI * t).sin() + 3.0;
        let proj = project_fn(x, &g, &Quadrature::default());
        assert!((proj.eigen_coords[0] - 1.0).abs() < 1e-12);
        assert!(proj.eigen_coords[1].abs() < 1e-12);
        for gamma in [0.0, 0.3, 0.77, 1.0] {
            assert!((proj.auxiliary(gamma) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_shape_errors() {
        let step = FiniteRankGraphon::new(vec![EigenPair::new(1.0, EigenFunction::Step(vec![1.0; 4]))], 1.0).unwrap();
        assert!(matches!(project_state(&[1.0; 3], &step), Err(Error::Shape { .. })));
    }

    #[test]
    fn localized_examples() {
        let p = worked_example(1.0);
        let gains = synthesize_gains(&p, 1e-3, Exec::default()).unwrap();
        let n = 40;
        let zero = vec![0.0; n];
        assert_eq!(control_localized(0.3, 0.2, &zero, &gains, &p).unwrap(), 0.0);

        // State with no eigen content: u = -L_{T-t} x.
        let alt: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let t = 0.4;
        for i in [0, 7, 39] {
            let gamma = (i as f64 + 0.5) / n as f64;
            let u = control_localized(gamma, t, &alt, &gains, &p).unwrap();
            let alt_coords = project_state(&alt, p.graphon()).unwrap().eigen_coords;
            assert!(alt_coords.iter().all(|c| c.abs() < 1e-14));
            assert!((u + gains.aux().at(1.0 - t) * alt[i]).abs() < 1e-12);
        }

        // x = f_1 at t = 0: u = -(5/4) M_T sqrt2 sin(2 pi gamma) at cell midpoints.
        let f1 = p.graphon().cell_modes(n).unwrap().remove(0);
        for i in [3, 11, 30] {
            let gamma = (i as f64 + 0.5) / n as f64;
            let u = control_localized(gamma, 0.0, &f1, &gains, &p).unwrap();
            let want = -1.25 * gains.eigen()[0].last() * SQRT_2 * (2.0 * PI * gamma).sin();
            assert!((u - want).abs() < 1e-12);
        }

        assert!(matches!(
            control_localized(1.2, 0.0, &zero, &gains, &p),
            Err(Error::Domain { .. })
        ));
        assert!(control_localized(0.5, 1.5, &zero, &gains, &p).is_err());
    }

    #[test]
    fn centralized_matches_localized_and_operator_form() {
        let p = worked_example(1.0);
        let gains = synthesize_gains(&p, 1e-3, Exec::default()).unwrap();
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 / 6.0 - 1.0).collect();
        let t = 0.35;
        let u = control_centralized(t, &x, &gains, &p).unwrap();
        for (i, ui) in u.iter().enumerate() {
            let gamma = (i as f64 + 0.5) / n as f64;
            let loc = control_localized(gamma, t, &x, &gains, &p).unwrap();
            assert!((ui - loc).abs() <= 1e-12);
        }
        let ctrl = DecoupledController::new(&p, &gains, n, ControllerMode::Optimal).unwrap();
        let xv = DVector::from_column_slice(&x);
        let uc = ctrl.control(t, &xv);
        for i in 0..n {
            assert!((uc[i] - u[i]).abs() <= 1e-12);
            assert!((ctrl.control_cell(i, t, &xv) - u[i]).abs() <= 1e-12);
        }

        // -B P(T-t) x with P rebuilt on the step decomposition of the sampled coupling.
        let step = p.graphon().sample_step(n).unwrap();
        let dec = step.spectral_decompose(step.default_zero_tol()).unwrap();
        let pstep = p.with_graphon(dec.clone()).unwrap();
        let gstep = synthesize_gains(&pstep, 1e-3, Exec::default()).unwrap();
        let pm = reconstruct_p(&gstep, &dec, 1.0 - t, n).unwrap();
        let bm = p.poly_b().apply_matrix(&step.scaled()).unwrap();
        let op = -(bm * pm * &xv);
        for i in 0..n {
            assert!((op[i] - u[i]).abs() <= 1e-10, "{} vs {}", op[i], u[i]);
        }
        let zero = synthesize_gains(
            &LqrProblem::new(
                2.0,
                poly(&[1.0]),
                poly(&[0.0]),
                poly(&[0.0]),
                FiniteRankGraphon::sinusoidal(),
                1.0,
            )
            .unwrap(),
            1e-2,
            Exec::default(),
        )
        .unwrap();
        let pz = LqrProblem::new(
            2.0,
            poly(&[1.0]),
            poly(&[0.0]),
            poly(&[0.0]),
            FiniteRankGraphon::sinusoidal(),
            1.0,
        )
        .unwrap();
        assert!(control_centralized(0.5, &x, &zero, &pz)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruct_examples() {
        let g0 = FiniteRankGraphon::empty(1.0);
        let p = LqrProblem::new(0.3, poly(&[1.0]), poly(&[1.0]), poly(&[0.5]), g0.clone(), 1.0).unwrap();
        let gains = synthesize_gains(&p, 1e-2, Exec::default()).unwrap();
        let pm = reconstruct_p(&gains, &g0, 0.6, 3).unwrap();
        assert_eq!(pm, DMatrix::identity(3, 3) * gains.aux().at(0.6));

        // Sampled sin/cos stay orthonormal on 8 cells but not on 2.
        let analytic = worked_example(1.0);
        let ga = synthesize_gains(&analytic, 1e-2, Exec::default()).unwrap();
        let p8 = reconstruct_p(&ga, analytic.graphon(), 0.0, 8).unwrap();
        let p0 = analytic
            .poly_p0()
            .apply_matrix(&analytic.graphon().sample_step(8).unwrap().scaled())
            .unwrap();
        assert!((p8 - p0).amax() < 1e-12);
        assert!(matches!(
            reconstruct_p(&ga, analytic.graphon(), 0.0, 2),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn controller_mode_strings() {
        for (s, m) in [
            ("optimal", ControllerMode::Optimal),
            ("truncated(3)", ControllerMode::Truncated(3)),
            ("auxiliary_only", ControllerMode::AuxiliaryOnly),
        ] {
            assert_eq!(s.parse::<ControllerMode>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert!("truncated(x)".parse::<ControllerMode>().is_err());
        assert!("greedy".parse::<ControllerMode>().is_err());
    }

    #[test]
    fn truncation_extremes() {
        let p = worked_example(1.0);
        let n = 40;
        let full = truncated_controller(&p, 2, n, 1e-3, Exec::default()).unwrap();
        let gains = synthesize_gains(&p, 1e-3, Exec::default()).unwrap();
        let opt = DecoupledController::new(&p, &gains, n, ControllerMode::Optimal).unwrap();
        let x = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin());
        assert_eq!(full.control(0.3, &x), opt.control(0.3, &x));

        let none = truncated_controller(&p, 0, n, 1e-3, Exec::default()).unwrap();
        let u = none.control(0.3, &x);
        let want = &x * (-gains.aux().at(0.7));
        assert!((u - want).amax() < 1e-14);

        let via_mode = DecoupledController::new(&p, &gains, n, ControllerMode::Truncated(1)).unwrap();
        let via_fn = truncated_controller(&p, 1, n, 1e-3, Exec::default()).unwrap();
        assert!((via_mode.control(0.5, &x) - via_fn.control(0.5, &x)).amax() < 1e-14);
        assert!(truncated_controller(&p, 3, n, 1e-3, Exec::default()).is_err());
    }

    #[test]
    fn ratio_trivial_cases() {
        let base = LqrProblem::new(
            2.0,
            CoeffPoly::constant(1.0),
            poly(&[1.0, -2.0, 1.0]),
            poly(&[1.0, -2.0, 1.0]),
            FiniteRankGraphon::sinusoidal(),
            1.0,
        )
        .unwrap();
        let num = ratio_prediction(&base, 1, 1e-3, RiccatiMethod::Numeric).unwrap();
        let cf = ratio_prediction(&base, 1, 1e-3, RiccatiMethod::ClosedForm).unwrap();
        assert!((num - cf).abs() < 1e-9);
        assert!(num.is_finite() && num > 0.0, "{num}");

        assert!(matches!(
            ratio_prediction(&worked_example(1.0), 1, 1e-3, RiccatiMethod::Numeric),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn precomputed_matches_realtime_on_an_exact_system() {
        // For the closed loop itself this is exercised in the sim tests; here
        // only the t = 0 read is checked.
        let p = worked_example(1.0);
        let gains = synthesize_gains(&p, 1e-3, Exec::default()).unwrap();
        let n = 40;
        let x0: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let rt = DecoupledController::new(&p, &gains, n, ControllerMode::Optimal).unwrap();
        let pre = rt.clone().with_precomputed_eigenstates(&x0).unwrap();
        let xv = DVector::from_column_slice(&x0);
        assert!((rt.control(0.0, &xv) - pre.control(0.0, &xv)).amax() < 1e-14);
    }
}
