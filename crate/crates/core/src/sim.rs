//! Closed-loop simulation of step-function networks, the cost functional and
//! its spectral breakdown, and the comparisons against the direct matrix LQR
//! solution and against truncated controllers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graphon::{cell_inner, StepGraphon};
use crate::lqr::{
    cells_orthonormal, ratio_prediction, spectral_operator, synthesize_gains, truncated_controller, Controller,
    ControllerMode, DecoupledController, LqrProblem, RiccatiMethod,
};
use crate::ode::{rk4_step, TimeGrid};
use crate::riccati::{solve_matrix_riccati, MatrixRiccatiSolution};

/// The finite network `x' = A x + B u` with cost weights `Q`, `P0`, built from
/// a step coupling and the polynomials of an [`LqrProblem`].
#[derive(Debug, Clone)]
pub struct StepSystem {
    a_mat: DMatrix<f64>,
    b_mat: DMatrix<f64>,
    q_mat: DMatrix<f64>,
    p0_mat: DMatrix<f64>,
    modes: Vec<Vec<f64>>,
    aux_weights: (f64, f64),
    mode_weights: Vec<(f64, f64)>,
}

const PSD_TOL: f64 = -1e-9;

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let min = m.clone().symmetric_eigenvalues().min();
    if min < PSD_TOL * m.amax().max(1.0) {
        return Err(Error::invalid(
            name,
            format!("not positive semidefinite, smallest eigenvalue {min:e}"),
        ));
    }
    Ok(())
}

/// Also checks that `entries` realizes `p`'s graphon on its cells: the
/// eigenfunction cell values must be orthonormal and reproduce the coupling.
pub fn build_step_system(entries: &StepGraphon, p: &LqrProblem) -> Result<StepSystem> {
    let n = entries.n();
    let scaled = entries.scaled();
    let a_mat = DMatrix::identity(n, n) * p.alpha0() + &scaled;
    let b_mat = p.poly_b().apply_matrix(&scaled)?;
    let q_mat = p.poly_q().apply_matrix(&scaled)?;
    let p0_mat = p.poly_p0().apply_matrix(&scaled)?;
    check_psd("Q_mat", &q_mat)?;
    check_psd("P0_mat", &p0_mat)?;

    let modes = p.graphon().cell_modes(n)?;
    if !cells_orthonormal(&modes) {
        return Err(Error::Precondition(format!(
            "graphon eigenfunctions are not orthonormal on {n} cells"
        )));
    }
    let lambdas = p.graphon().eigenvalues();
    let rebuilt = spectral_operator(n, 0.0, &lambdas, &modes);
    let gap = (&rebuilt - &scaled).amax() * n as f64;
    let tol = 1e-8 * entries.bound().max(1.0);
    if gap > tol {
        return Err(Error::Precondition(format!(
            "step coupling differs from the problem's graphon by {gap:e} (tolerance {tol:e})"
        )));
    }
    let mode_weights = lambdas
        .iter()
        .map(|&l| (p.poly_q().eval(l), p.poly_p0().eval(l)))
        .collect();
    Ok(StepSystem {
        a_mat,
        b_mat,
        q_mat,
        p0_mat,
        modes,
        aux_weights: (p.poly_q().constant_term(), p.poly_p0().constant_term()),
        mode_weights,
    })
}

impl StepSystem {
    pub fn n(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn a_mat(&self) -> &DMatrix<f64> {
        &self.a_mat
    }

    pub fn b_mat(&self) -> &DMatrix<f64> {
        &self.b_mat
    }

    pub fn q_mat(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn p0_mat(&self) -> &DMatrix<f64> {
        &self.p0_mat
    }

    /// Eigenfunction values on the cells, one vector per direction.
    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = &self.a_mat * x;
        dx.gemv(1.0, &self.b_mat, u, 1.0);
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// `<x_t, f>` at every sample.
    pub fn projected(&self, f: &[f64]) -> Vec<f64> {
        self.states.iter().map(|x| cell_inner(x.as_slice(), f)).collect()
    }

    pub fn max_state_gap(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// `u = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroController {
    pub n: usize,
    pub horizon: f64,
}

impl Controller for ZeroController {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn control(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.n)
    }
}

/// `u = -B^T P(T - t) x` from the matrix Riccati solution.
#[derive(Debug, Clone)]
pub struct MatrixFeedback {
    bt: DMatrix<f64>,
    riccati: MatrixRiccatiSolution,
}

impl MatrixFeedback {
    pub fn solve(sys: &StepSystem, horizon: f64, dt: f64) -> Result<Self> {
        let riccati = solve_matrix_riccati(&sys.a_mat, &sys.b_mat, &sys.q_mat, &sys.p0_mat, horizon, dt)?;
        Ok(MatrixFeedback {
            bt: sys.b_mat.transpose(),
            riccati,
        })
    }

    pub fn riccati(&self) -> &MatrixRiccatiSolution {
        &self.riccati
    }
}

impl Controller for MatrixFeedback {
    fn horizon(&self) -> f64 {
        self.riccati.grid().horizon()
    }

    fn control(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        -(&self.bt * (self.riccati.at(self.horizon() - t) * x))
    }
}

/// Adds an open-loop term `eps * w(t)` to another controller.
pub struct Perturbed<'a, C: ?Sized, W> {
    pub base: &'a C,
    pub eps: f64,
    pub w: W,
}

impl<C, W> Controller for Perturbed<'_, C, W>
where
    C: Controller + ?Sized,
    W: Fn(f64) -> DVector<f64> + Sync,
{
    fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    fn control(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.base.control(t, x) + (self.w)(t) * self.eps
    }
}

/// RK4 on `x' = A x + B u(t, x)` with the feedback re-evaluated at every
/// stage; controls are recorded at the grid points.
pub fn simulate(
    sys: &StepSystem,
    controller: &dyn Controller,
    x0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let n = sys.n();
    if x0.len() != n {
        return Err(Error::Shape {
            context: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0", "must be finite"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("T", format!("horizon must be positive, got {horizon}")));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= horizon) {
        return Err(Error::invalid("dt", format!("need 0 < dt <= T, got {dt}")));
    }
    if (controller.horizon() - horizon).abs() > 1e-12 * horizon {
        return Err(Error::Precondition(format!(
            "controller is defined on [0, {}], simulation asks for [0, {horizon}]",
            controller.horizon()
        )));
    }
    let grid = TimeGrid::new(horizon, dt);
    let h = grid.step();
    let rhs = |t: f64, x: &DVector<f64>| sys.dynamics(x, &controller.control(t.min(horizon), x));
    let mut states = Vec::with_capacity(grid.len());
    let mut controls = Vec::with_capacity(grid.len());
    let mut x = DVector::from_column_slice(x0);
    for k in 0..grid.len() {
        let t = grid.time(k);
        controls.push(controller.control(t, &x));
        if k + 1 < grid.len() {
            let next = rk4_step(&rhs, t, &x, h);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp {
                    what: "closed-loop state",
                    step: k + 1,
                    time: grid.time(k + 1),
                });
            }
            states.push(std::mem::replace(&mut x, next));
        } else {
            states.push(x.clone());
        }
    }
    Ok(Trajectory { grid, states, controls })
}

/// `J = J_aux + sum_l J_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub aux: f64,
    pub eigen: Vec<f64>,
}

fn trapezoid(h: f64, values: &[f64]) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Trapezoid rule on the trajectory samples, with `(1/n)`-weighted inner
/// products. The breakdown splits states and controls into their
/// eigen coordinates and orthogonal residuals.
pub fn evaluate_cost(traj: &Trajectory, sys: &StepSystem) -> Result<CostBreakdown> {
    let n = sys.n();
    if traj.states.len() != traj.grid.len() || traj.controls.len() != traj.grid.len() {
        return Err(Error::invalid("trajectory", "incomplete on its grid"));
    }
    if let Some(x) = traj.states.iter().chain(&traj.controls).find(|x| x.len() != n) {
        return Err(Error::Shape {
            context: "trajectory sample",
            expected: n,
            got: x.len(),
        });
    }
    let inv_n = 1.0 / n as f64;
    let h = traj.grid.step();
    let last = traj.grid.len() - 1;

    let running: Vec<f64> = traj
        .states
        .iter()
        .zip(&traj.controls)
        .map(|(x, u)| (x.dot(&(&sys.q_mat * x)) + u.norm_squared()) * inv_n)
        .collect();
    let xt = &traj.states[last];
    let total = trapezoid(h, &running) + xt.dot(&(&sys.p0_mat * xt)) * inv_n;

    let (q0, z0) = sys.aux_weights;
    let mut aux_run = vec![0.0; traj.grid.len()];
    let mut eigen_run = vec![vec![0.0; traj.grid.len()]; sys.modes.len()];
    let mut aux_terminal = 0.0;
    let mut eigen_terminal = vec![0.0; sys.modes.len()];
    for k in 0..traj.grid.len() {
        let (x, u) = (&traj.states[k], &traj.controls[k]);
        let mut xr = x.clone();
        let mut ur = u.clone();
        for (l, f) in sys.modes.iter().enumerate() {
            let fv = DVector::from_column_slice(f);
            let (xb, ub) = (fv.dot(x) * inv_n, fv.dot(u) * inv_n);
            xr.axpy(-xb, &fv, 1.0);
            ur.axpy(-ub, &fv, 1.0);
            let (ql, zl) = sys.mode_weights[l];
            eigen_run[l][k] = ql * xb * xb + ub * ub;
            if k == last {
                eigen_terminal[l] = zl * xb * xb;
            }
        }
        aux_run[k] = (q0 * xr.norm_squared() + ur.norm_squared()) * inv_n;
        if k == last {
            aux_terminal = z0 * xr.norm_squared() * inv_n;
        }
    }
    Ok(CostBreakdown {
        total,
        aux: trapezoid(h, &aux_run) + aux_terminal,
        eigen: eigen_run
            .iter()
            .zip(&eigen_terminal)
            .map(|(run, term)| trapezoid(h, run) + term)
            .collect(),
    })
}

fn with_horizon(p: &LqrProblem, horizon: f64) -> Result<LqrProblem> {
    if horizon == p.horizon() {
        Ok(p.clone())
    } else {
        p.with_horizon(horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub cost_decoupled: f64,
    pub cost_oracle: f64,
    /// `|J_dec - J_oracle| / J_oracle`.
    pub rel_cost_gap: f64,
    /// Max elementwise gap between the reconstructed and matrix Riccati solutions over the grid.
    pub max_p_gap: f64,
    pub max_state_gap: f64,
}

/// Outcome of [`oracle_compare`], with both closed loops kept for output.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub report: OracleReport,
    pub decoupled: Trajectory,
    pub oracle: Trajectory,
}

/// Run the decoupled optimal controller and the matrix-Riccati feedback side
/// by side on `sys`.
pub fn oracle_compare(
    sys: &StepSystem,
    p: &LqrProblem,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    exec: Exec,
) -> Result<OracleRun> {
    let p = with_horizon(p, horizon)?;
    let n = sys.n();
    let (decoupled, oracle) = exec.join(
        || -> Result<_> {
            let gains = synthesize_gains(&p, dt, exec)?;
            let ctrl = DecoupledController::new(&p, &gains, n, ControllerMode::Optimal)?;
            let traj = simulate(sys, &ctrl, x0, horizon, dt)?;
            Ok((gains, traj))
        },
        || -> Result<_> {
            let ctrl = MatrixFeedback::solve(sys, horizon, dt)?;
            let traj = simulate(sys, &ctrl, x0, horizon, dt)?;
            Ok((ctrl, traj))
        },
    );
    let (gains, dec_traj) = decoupled?;
    let (oracle_ctrl, oracle_traj) = oracle?;

    let riccati = oracle_ctrl.riccati();
    let max_p_gap = exec
        .map_range(riccati.grid().len(), |k| {
            let tau = riccati.grid().time(k);
            let eigen: Vec<f64> = gains.eigen().iter().map(|c| c.at(tau)).collect();
            (spectral_operator(n, gains.aux().at(tau), &eigen, sys.modes()) - &riccati.values()[k]).amax()
        })
        .into_iter()
        .fold(0.0, f64::max);

    let cost_decoupled = evaluate_cost(&dec_traj, sys)?.total;
    let cost_oracle = evaluate_cost(&oracle_traj, sys)?.total;
    let rel_cost_gap = if cost_oracle == 0.0 {
        cost_decoupled.abs()
    } else {
        (cost_decoupled - cost_oracle).abs() / cost_oracle
    };
    Ok(OracleRun {
        report: OracleReport {
            cost_decoupled,
            cost_oracle,
            rel_cost_gap,
            max_p_gap,
            max_state_gap: dec_traj.max_state_gap(&oracle_traj),
        },
        decoupled: dec_traj,
        oracle: oracle_traj,
    })
}

/// Terminal ratio in one ignored direction (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRatio {
    pub direction: usize,
    /// `x_trunc(T) / x_opt(T)` projected on the direction.
    pub measured: f64,
    /// `None` unless the input polynomial is constant.
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub level: usize,
    pub j_truncated: f64,
    pub j_optimal: f64,
    pub ratios: Vec<DirectionRatio>,
}

/// Simulate the truncated controller for every level, in input order, next
/// to the optimal one.
pub fn truncation_study(
    sys: &StepSystem,
    p: &LqrProblem,
    x0: &[f64],
    levels: &[usize],
    horizon: f64,
    dt: f64,
    exec: Exec,
) -> Result<Vec<TruncationRow>> {
    let p = with_horizon(p, horizon)?;
    let d = p.rank();
    if let Some(&l) = levels.iter().find(|&&l| l > d) {
        return Err(Error::Precondition(format!(
            "truncation level {l} exceeds graphon rank {d}"
        )));
    }
    let n = sys.n();
    let optimal = truncated_controller(&p, d, n, dt, exec)?;
    let opt_traj = simulate(sys, &optimal, x0, horizon, dt)?;
    let j_optimal = evaluate_cost(&opt_traj, sys)?.total;
    let constant_input = p.poly_b().degree() == 0;

    exec.map(levels, |&level| -> Result<TruncationRow> {
        let (j_truncated, traj) = if level == d {
            (j_optimal, opt_traj.clone())
        } else {
            let ctrl = truncated_controller(&p, level, n, dt, Exec::Sequential)?;
            let traj = simulate(sys, &ctrl, x0, horizon, dt)?;
            (evaluate_cost(&traj, sys)?.total, traj)
        };
        let ratios = (level..d)
            .map(|h| {
                let f = &sys.modes()[h];
                let measured =
                    cell_inner(traj.terminal().as_slice(), f) / cell_inner(opt_traj.terminal().as_slice(), f);
                let predicted = if constant_input {
                    Some(ratio_prediction(&p, h, dt, RiccatiMethod::Numeric)?)
                } else {
                    None
                };
                Ok(DirectionRatio {
                    direction: h + 1,
                    measured,
                    predicted,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TruncationRow {
            level,
            j_truncated,
            j_optimal,
            ratios,
        })
    })
    .into_iter()
    .collect()
}
