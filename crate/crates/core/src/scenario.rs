//! Scenario files and the artifacts a run leaves behind.
//!
//! ```json
//! {"alpha0": 2.0, "poly_B": [1.0, 0.5], "poly_Q": [1.0, -2.0, 1.0],
//!  "poly_P0": [1.0, -2.0, 1.0], "T": 1.0, "dt": 0.001,
//!  "graphon": {"type": "sinusoidal"}, "n": 40, "seed": 7}
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graphon::{AnalyticFn, AnalyticKind, EigenFunction, EigenPair, FiniteRankGraphon, StepGraphon};
use crate::lqr::{synthesize_gains, ControllerMode, DecoupledController, EigenstateMode, GainSchedule, LqrProblem};
use crate::poly::CoeffPoly;
use crate::sim::{
    build_step_system, evaluate_cost, oracle_compare, simulate, truncation_study, CostBreakdown, OracleReport,
    StepSystem, Trajectory, TruncationRow,
};

fn default_horizon() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_bound() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub lambda: f64,
    pub fun: AnalyticKind,
    #[serde(default)]
    pub freq: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphonSpec {
    Sinusoidal,
    Uniform,
    /// Relative paths resolve against the scenario file's directory.
    Step {
        matrix_csv: PathBuf,
    },
    FiniteRank {
        pairs: Vec<PairSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub alpha0: f64,
    #[serde(rename = "poly_B")]
    pub poly_b: CoeffPoly,
    #[serde(rename = "poly_Q")]
    pub poly_q: CoeffPoly,
    #[serde(rename = "poly_P0")]
    pub poly_p0: CoeffPoly,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub graphon: GraphonSpec,
    /// Number of cells; taken from the matrix for step graphons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Bound `c` on `|A(x, y)|`.
    #[serde(default = "default_bound")]
    pub bound: f64,
    #[serde(default)]
    pub controller: ControllerMode,
    #[serde(default)]
    pub eigenstate: EigenstateMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub compare_oracle: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truncation_levels: Vec<usize>,
    /// Eigenvalues of step couplings at or below this are dropped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// The sinusoidal example: `alpha0 = 2`, `poly_B = 1 + s/2`,
/// `poly_Q = poly_P0 = (1 - s)^2` on 40 cells.
pub fn preset_example_vii() -> Scenario {
    let squared = CoeffPoly::new(vec![1.0, -2.0, 1.0]).expect("valid coefficients");
    Scenario {
        alpha0: 2.0,
        poly_b: CoeffPoly::new(vec![1.0, 0.5]).expect("valid coefficients"),
        poly_q: squared.clone(),
        poly_p0: squared,
        horizon: 1.0,
        dt: 1e-3,
        graphon: GraphonSpec::Sinusoidal,
        n: Some(40),
        bound: 1.0,
        controller: ControllerMode::Optimal,
        eigenstate: EigenstateMode::RealTime,
        seed: 7,
        output_dir: PathBuf::from("example_vii"),
        compare_oracle: false,
        truncation_levels: Vec::new(),
        zero_tol: None,
        base_dir: PathBuf::new(),
    }
}

/// Everything a run needs, resolved from a scenario.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: LqrProblem,
    pub step: StepGraphon,
    pub system: StepSystem,
    pub x0: Vec<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::invalid("scenario", format!("cannot read {}: {e}", path.display())))?;
        let mut s = Scenario::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("alpha0", self.alpha0),
            ("T", self.horizon),
            ("dt", self.dt),
            ("bound", self.bound),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        if self.horizon <= 0.0 {
            return Err(Error::invalid("T", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt < self.horizon) {
            return Err(Error::invalid("dt", format!("need 0 < dt < T, got {}", self.dt)));
        }
        if self.bound <= 0.0 {
            return Err(Error::invalid("bound", "must be positive"));
        }
        if let Some(tol) = self.zero_tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::invalid("zero_tol", "must be finite and nonnegative"));
            }
        }
        match &self.graphon {
            GraphonSpec::Step { matrix_csv } => {
                let path = self.resolve(matrix_csv);
                if !path.is_file() {
                    return Err(Error::invalid(
                        "graphon.matrix_csv",
                        format!("file not found: {}", path.display()),
                    ));
                }
            }
            _ if self.n.is_none() => {
                return Err(Error::invalid("n", "required for analytic graphons"));
            }
            _ => {}
        }
        if self.n == Some(0) {
            return Err(Error::invalid("n", "must be positive"));
        }
        Ok(())
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Where artifacts go; relative paths are taken as given (i.e. relative to
    /// the working directory).
    pub fn output_dir(&self) -> &Path {
        &self.output_dir
    }

    fn analytic_graphon(&self) -> Result<FiniteRankGraphon> {
        match &self.graphon {
            GraphonSpec::Sinusoidal => Ok(FiniteRankGraphon::sinusoidal()),
            GraphonSpec::Uniform => Ok(FiniteRankGraphon::uniform()),
            GraphonSpec::FiniteRank { pairs } => {
                let pairs = pairs
                    .iter()
                    .map(|p| {
                        Ok(EigenPair::new(
                            p.lambda,
                            EigenFunction::Analytic(AnalyticFn::new(p.fun, p.freq)?),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                FiniteRankGraphon::new(pairs, self.bound)
            }
            GraphonSpec::Step { .. } => unreachable!("step graphons are read from CSV"),
        }
    }

    pub fn initial_state(&self, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    }

    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let (graphon, step) = match &self.graphon {
            GraphonSpec::Step { matrix_csv } => {
                let step = StepGraphon::from_csv_path(&self.resolve(matrix_csv), self.bound)?;
                if let Some(n) = self.n {
                    if n != step.n() {
                        return Err(Error::invalid(
                            "n",
                            format!("{n} does not match the {}x{} matrix_csv", step.n(), step.n()),
                        ));
                    }
                }
                let tol = self.zero_tol.unwrap_or_else(|| step.default_zero_tol());
                (step.spectral_decompose(tol)?, step)
            }
            _ => {
                let g = self.analytic_graphon()?;
                let step = g.sample_step(self.n.expect("validated"))?;
                (g, step)
            }
        };
        let problem = LqrProblem::new(
            self.alpha0,
            self.poly_b.clone(),
            self.poly_q.clone(),
            self.poly_p0.clone(),
            graphon,
            self.horizon,
        )?;
        if let ControllerMode::Truncated(l) = self.controller {
            if l > problem.rank() {
                return Err(Error::invalid(
                    "controller",
                    format!("truncated({l}) exceeds graphon rank {}", problem.rank()),
                ));
            }
        }
        if let Some(&l) = self.truncation_levels.iter().find(|&&l| l > problem.rank()) {
            return Err(Error::invalid(
                "truncation_levels",
                format!("level {l} exceeds graphon rank {}", problem.rank()),
            ));
        }
        let system = build_step_system(&step, &problem)?;
        let x0 = self.initial_state(step.n());
        Ok(Setup {
            problem,
            step,
            system,
            x0,
        })
    }
}

/// What `run` computed, besides the files it wrote.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub gains: GainSchedule,
    pub trajectory: Trajectory,
    pub cost: CostBreakdown,
    pub oracle: Option<OracleReport>,
    pub truncation: Vec<TruncationRow>,
    pub output_dir: PathBuf,
}

#[derive(Serialize)]
struct CostFile<'a> {
    total: f64,
    aux: f64,
    eigen: &'a [f64],
    #[serde(flatten)]
    oracle: Option<OracleFields>,
}

#[derive(Serialize)]
struct OracleFields {
    oracle_cost: f64,
    oracle_rel_gap: f64,
    oracle_p_gap: f64,
    oracle_state_gap: f64,
}

/// Synthesize, simulate and write `scenario.json`, `gains.csv`,
/// `trajectory.csv`, `cost.json` and, if levels are given, `truncation.csv`.
pub fn run(scenario: &Scenario, exec: Exec) -> Result<RunOutcome> {
    let setup = scenario.setup()?;
    let Setup {
        problem: p,
        system: sys,
        x0,
        ..
    } = &setup;
    let (t, dt, n) = (scenario.horizon, scenario.dt, sys.n());

    let gains = synthesize_gains(p, dt, exec)?;
    let mut ctrl = DecoupledController::new(p, &gains, n, scenario.controller)?;
    if scenario.eigenstate == EigenstateMode::Precomputed {
        ctrl = ctrl.with_precomputed_eigenstates(x0)?;
    }
    let trajectory = simulate(sys, &ctrl, x0, t, dt)?;
    let cost = evaluate_cost(&trajectory, sys)?;
    let oracle = if scenario.compare_oracle {
        Some(oracle_compare(sys, p, x0, t, dt, exec)?.report)
    } else {
        None
    };
    let truncation = if scenario.truncation_levels.is_empty() {
        Vec::new()
    } else {
        truncation_study(sys, p, x0, &scenario.truncation_levels, t, dt, exec)?
    };

    let out = scenario.output_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("scenario.json"), scenario.to_json()? + "\n")?;
    write_gains(&out.join("gains.csv"), &gains)?;
    write_trajectory(&out.join("trajectory.csv"), &trajectory)?;
    write_cost(&out.join("cost.json"), &cost, oracle.as_ref())?;
    if !truncation.is_empty() {
        write_truncation(&out.join("truncation.csv"), &truncation)?;
    }
    Ok(RunOutcome {
        gains,
        trajectory,
        cost,
        oracle,
        truncation,
        output_dir: out,
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Columns `t, L, M_1, ..., M_d` with `t` the Riccati time.
pub fn write_gains(path: &Path, gains: &GainSchedule) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string(), "L".to_string()];
    header.extend((1..=gains.eigen().len()).map(|l| format!("M_{l}")));
    w.write_record(&header)?;
    for (k, t) in gains.aux().times().into_iter().enumerate() {
        let mut row = vec![num(t), num(gains.aux().values()[k])];
        row.extend(gains.eigen().iter().map(|c| num(c.values()[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, x_1..x_n, u_1..u_n`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    let n = traj.states.first().map_or(0, DVector::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("u_{i}")));
    w.write_record(&header)?;
    for (k, t) in traj.times().into_iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(traj.states[k].iter().map(|&v| num(v)));
        row.extend(traj.controls[k].iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cost(path: &Path, cost: &CostBreakdown, oracle: Option<&OracleReport>) -> Result<()> {
    let file = CostFile {
        total: cost.total,
        aux: cost.aux,
        eigen: &cost.eigen,
        oracle: oracle.map(|r| OracleFields {
            oracle_cost: r.cost_oracle,
            oracle_rel_gap: r.rel_cost_gap,
            oracle_p_gap: r.max_p_gap,
            oracle_state_gap: r.max_state_gap,
        }),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// One row per ignored direction; levels with none get an empty direction.
pub fn write_truncation(path: &Path, rows: &[TruncationRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "L",
        "J_truncated",
        "J_optimal",
        "direction",
        "ratio_measured",
        "ratio_predicted",
    ])?;
    for row in rows {
        let head = [row.level.to_string(), num(row.j_truncated), num(row.j_optimal)];
        if row.ratios.is_empty() {
            w.write_record(head.iter().map(String::as_str).chain(["", "", ""]))?;
        }
        for r in &row.ratios {
            let tail = [
                r.direction.to_string(),
                num(r.measured),
                r.predicted.map(num).unwrap_or_default(),
            ];
            w.write_record(head.iter().chain(&tail))?;
        }
    }
    w.flush()?;
    Ok(())
}
