//! `graphon-lqr`: run scenarios, the worked sinusoidal example, truncation
//! studies and oracle checks.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphon_lqr::scenario::{self, preset_example_vii, Scenario};
use graphon_lqr::sim::oracle_compare;
use graphon_lqr::{Error, Exec};

#[derive(Parser)]
#[command(
    name = "graphon-lqr",
    version,
    about = "LQR for graphon-coupled networks via spectral decoupling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize gains, simulate and write artifacts for a scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// The sinusoidal example on 40 cells.
    ExampleVii {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Cost and terminal-ratio table for truncated controllers.
    TruncationStudy {
        /// Scenario file; the worked example if omitted.
        scenario: Option<PathBuf>,
        /// Truncation levels, e.g. `0,1,2`; every level from 0 to the rank by default.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Compare the decoupled controller with the direct matrix Riccati solution.
    OracleCheck {
        /// Scenario file; the worked example if omitted.
        scenario: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the matrix Riccati oracle and record the gaps in cost.json.
    #[arg(long)]
    compare_oracle: bool,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        if let Some(dt) = self.dt {
            s.dt = dt;
        }
        if let Some(t) = self.horizon {
            s.horizon = t;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(out) = &self.out {
            s.output_dir = out.clone();
        }
        s.compare_oracle |= self.compare_oracle;
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

fn load(path: Option<&PathBuf>, opts: &Overrides) -> Result<Scenario, Error> {
    let mut s = match path {
        Some(p) => Scenario::load(p)?,
        None => preset_example_vii(),
    };
    opts.apply(&mut s);
    Ok(s)
}

fn run_scenario(s: &Scenario, exec: Exec) -> Result<(), Error> {
    let outcome = scenario::run(s, exec)?;
    let c = &outcome.cost;
    let eigen: Vec<String> = c.eigen.iter().map(|j| format!("{j:.6}")).collect();
    let mut line = format!("J = {:.9} (aux {:.6}, eigen [{}])", c.total, c.aux, eigen.join(", "));
    if let Some(r) = &outcome.oracle {
        line += &format!(", oracle_rel_gap = {:.3e}", r.rel_cost_gap);
    }
    println!("{line} -> {}", outcome.output_dir.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { scenario, opts } => run_scenario(&load(Some(&scenario), &opts)?, opts.exec()),
        Command::ExampleVii { opts } => run_scenario(&load(None, &opts)?, opts.exec()),
        Command::TruncationStudy { scenario, levels, opts } => {
            let mut s = load(scenario.as_ref(), &opts)?;
            s.truncation_levels = if levels.is_empty() {
                let rank = s.setup()?.problem.rank();
                (0..=rank).collect()
            } else {
                levels
            };
            let outcome = scenario::run(&s, opts.exec())?;
            println!("L,J_truncated,J_optimal,inflation");
            for row in &outcome.truncation {
                println!(
                    "{},{:.9},{:.9},{:.3e}",
                    row.level,
                    row.j_truncated,
                    row.j_optimal,
                    row.j_truncated / row.j_optimal - 1.0
                );
            }
            println!("-> {}", outcome.output_dir.join("truncation.csv").display());
            Ok(())
        }
        Command::OracleCheck { scenario, opts } => {
            let s = load(scenario.as_ref(), &opts)?;
            let setup = s.setup()?;
            let run = oracle_compare(&setup.system, &setup.problem, &setup.x0, s.horizon, s.dt, opts.exec())?;
            let r = &run.report;
            std::fs::create_dir_all(&s.output_dir)?;
            let path = s.output_dir.join("oracle.json");
            std::fs::write(&path, serde_json::to_string_pretty(r)? + "\n")?;
            println!(
                "J_dec = {:.9}, J_oracle = {:.9}, rel gap {:.3e}, P gap {:.3e}, state gap {:.3e} -> {}",
                r.cost_decoupled,
                r.cost_oracle,
                r.rel_cost_gap,
                r.max_p_gap,
                r.max_state_gap,
                path.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
