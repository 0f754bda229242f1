//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so the lines show without `--nocapture`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use graphon_lqr::lqr::{project_state, synthesize_gains, ControllerMode, DecoupledController};
use graphon_lqr::scenario::{self, preset_example_vii};
use graphon_lqr::sim::{oracle_compare, simulate, truncation_study, Perturbed};
use graphon_lqr::{
    algebraic_root, build_step_system, evaluate_cost, solve_riccati_closed_form, solve_riccati_numeric,
    truncated_controller, CoeffPoly, Exec, FiniteRankGraphon, LqrProblem, ScalarRiccatiSpec, StepGraphon,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let (mut worst_cost, mut worst_p) = (0.0f64, 0.0f64);
    for k in 0..20 {
        let n = [4, 6, 8][k % 3];
        let rank = rng.gen_range(1..=3);
        let (step, p) = common::random_problem(&mut rng, n, rank, 1.0);
        let sys = build_step_system(&step, &p).map_err(|e| e.to_string())?;
        let x0 = common::random_state(&mut rng, n);
        let r = oracle_compare(&sys, &p, &x0, 1.0, 1e-4, Exec::default())
            .map_err(|e| e.to_string())?
            .report;
        worst_cost = worst_cost.max(r.rel_cost_gap);
        worst_p = worst_p.max(r.max_p_gap);
    }
    check(
        worst_cost <= 1e-5 && worst_p <= 1e-6,
        format!("20 systems, max rel cost gap {worst_cost:.2e} (<= 1e-5), max P gap {worst_p:.2e} (<= 1e-6)"),
    )
}

fn example_vii() -> Outcome {
    let s = preset_example_vii();
    let setup = s.setup().map_err(|e| e.to_string())?;
    let p = &setup.problem;
    let aux = p.auxiliary_params();
    let mut ok = p.rank() == 2 && p.graphon().eigenvalues() == [0.5, 0.5];
    // P' = 2 alpha P - beta^2 P^2 + q, P(0) = z
    ok &= (2.0 * aux.drift, aux.gain * aux.gain, aux.q, aux.z) == (4.0, 1.0, 1.0, 1.0);
    for l in 0..2 {
        let e = p.eigensystem_params(l).map_err(|e| e.to_string())?;
        ok &= (2.0 * e.drift, e.gain * e.gain, e.q, e.z) == (5.0, 25.0 / 16.0, 0.25, 0.25);
    }
    let run =
        oracle_compare(&setup.system, p, &setup.x0, s.horizon, s.dt, Exec::default()).map_err(|e| e.to_string())?;
    let gap = run.report.rel_cost_gap;
    check(
        ok && gap <= 1e-4,
        format!(
            "decoupled problems match (symbolic: {ok}); N=40 rel cost gap {gap:.2e} (<= 1e-4), J = {:.6}",
            run.report.cost_decoupled
        ),
    )
}

fn closed_form_sweep() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut worst = 0.0f64;
    let mut points = 0;
    while points < 50 {
        let (alpha, beta, q, z0) = (
            rng.gen_range(-2.0..3.0),
            rng.gen_range(0.2..2.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
        );
        let s = algebraic_root(alpha, beta, q).map_err(|e| e.to_string())?;
        if (z0 - s).abs() < 1e-6 {
            continue;
        }
        let spec = ScalarRiccatiSpec::new(alpha, beta, q, z0, 5.0, 1e-4).map_err(|e| e.to_string())?;
        let cf = solve_riccati_closed_form(&spec).map_err(|e| e.to_string())?;
        let num = solve_riccati_numeric(&spec).map_err(|e| e.to_string())?;
        worst = worst.max(cf.max_abs_diff(&num));
        points += 1;
    }
    let spec = ScalarRiccatiSpec::new(0.0, 1.0, 1.0, 0.0, 1.0, 1e-4).map_err(|e| e.to_string())?;
    let cf = solve_riccati_closed_form(&spec).map_err(|e| e.to_string())?;
    let num = solve_riccati_numeric(&spec).map_err(|e| e.to_string())?;
    let tanh = cf
        .times()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            (cf.values()[k] - t.tanh())
                .abs()
                .max((num.values()[k] - t.tanh()).abs())
        })
        .fold(0.0, f64::max);
    check(
        worst <= 1e-6 && tanh <= 1e-8,
        format!("50-point sweep max |closed - numeric| {worst:.2e} (<= 1e-6); tanh case {tanh:.2e} (<= 1e-8)"),
    )
}

fn truncation_ratio() -> Outcome {
    let squared = CoeffPoly::new(vec![1.0, -2.0, 1.0]).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for t in [0.5, 1.0, 2.0] {
        let p = LqrProblem::new(
            2.0,
            CoeffPoly::constant(1.0),
            squared.clone(),
            squared.clone(),
            FiniteRankGraphon::sinusoidal(),
            t,
        )
        .map_err(|e| e.to_string())?;
        let n = 40;
        let sys = build_step_system(&p.graphon().sample_step(n).map_err(|e| e.to_string())?, &p)
            .map_err(|e| e.to_string())?;
        let x0 = preset_example_vii().initial_state(n);
        let rows = truncation_study(&sys, &p, &x0, &[1], t, 1e-3, Exec::default()).map_err(|e| e.to_string())?;
        let r = &rows[0].ratios[0];
        let predicted = r.predicted.ok_or("no prediction for constant poly_B")?;
        let err = (r.measured - predicted).abs();
        ok &= r.direction == 2 && err <= 1e-4;
        details.push(format!("T={t}: {:.6} vs {predicted:.6} ({err:.1e})", r.measured));
    }
    check(ok, format!("direction 2 measured vs predicted, {}", details.join("; ")))
}

fn decoupling_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let (mut worst_id, mut worst_cross) = (0.0f64, 0.0f64);
    for k in 0..200 {
        // Alternate between random step couplings and sampled trigonometric graphons.
        let (step, g): (StepGraphon, FiniteRankGraphon) = if k % 2 == 0 {
            let n = rng.gen_range(3..=10);
            let rank = rng.gen_range(1..=n.min(4));
            let step = common::random_step(&mut rng, n, rank);
            let g = step
                .spectral_decompose(step.default_zero_tol())
                .map_err(|e| e.to_string())?;
            (step, g)
        } else {
            let freq = rng.gen_range(1..=3u32);
            let mut pairs: Vec<(f64, graphon_lqr::EigenFunction)> = vec![
                (rng.gen_range(0.05..0.5), graphon_lqr::EigenFunction::sin(freq)),
                (rng.gen_range(0.05..0.5), graphon_lqr::EigenFunction::cos(freq)),
            ];
            if rng.gen_bool(0.5) {
                pairs.push((rng.gen_range(-0.5..-0.05), graphon_lqr::EigenFunction::constant()));
            }
            pairs.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
            let g = FiniteRankGraphon::new(
                pairs
                    .into_iter()
                    .map(|(l, f)| graphon_lqr::EigenPair::new(l, f))
                    .collect(),
                1.0,
            )
            .map_err(|e| e.to_string())?;
            let n = rng.gen_range(2 * freq as usize + 1..=12);
            (g.sample_step(n).map_err(|e| e.to_string())?, g)
        };
        let n = step.n();
        let poly_q = common::random_poly(&mut rng, 4);
        let x = common::random_state(&mut rng, n);
        let dec = project_state(&x, &g).map_err(|e| e.to_string())?;
        let modes = g.cell_modes(n).map_err(|e| e.to_string())?;

        let q_mat = poly_q.apply_matrix(&step.scaled()).map_err(|e| e.to_string())?;
        let xv = DVector::from_column_slice(&x);
        let lhs = xv.dot(&(&q_mat * &xv)) / n as f64;
        let aux_norm = dec.auxiliary.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let rhs = poly_q.constant_term() * aux_norm
            + g.eigenvalues()
                .iter()
                .zip(&dec.eigen_coords)
                .map(|(&l, c)| poly_q.eval(l) * c * c)
                .sum::<f64>();
        worst_id = worst_id.max((lhs - rhs).abs());

        let mut eigen_part = vec![0.0; n];
        for (c, f) in dec.eigen_coords.iter().zip(&modes) {
            eigen_part.iter_mut().zip(f).for_each(|(e, fi)| *e += c * fi);
        }
        for _ in 0..=4 {
            let cross = graphon_lqr::graphon::cell_inner(&dec.auxiliary, &eigen_part);
            worst_cross = worst_cross.max(cross.abs());
            eigen_part = step.apply(&eigen_part).map_err(|e| e.to_string())?;
        }
    }
    check(
        worst_id <= 1e-8 && worst_cross <= 1e-10,
        format!("200 triples, identity gap {worst_id:.2e} (<= 1e-8), cross terms {worst_cross:.2e} (<= 1e-10)"),
    )
}

fn optimality_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut systems: Vec<(StepGraphon, LqrProblem)> = (0..3)
        .map(|k| common::random_problem(&mut rng, 4 + k, 3, 1.0))
        .collect();
    let vii = preset_example_vii().setup().map_err(|e| e.to_string())?;
    systems.push((vii.step, vii.problem));

    let dt = 1e-3;
    let mut worst = f64::INFINITY;
    let mut runs = 0;
    for (step, p) in &systems {
        let sys = build_step_system(step, p).map_err(|e| e.to_string())?;
        let n = sys.n();
        let x0 = common::random_state(&mut rng, n);
        let gains = synthesize_gains(p, dt, Exec::default()).map_err(|e| e.to_string())?;
        let opt = DecoupledController::new(p, &gains, n, ControllerMode::Optimal).map_err(|e| e.to_string())?;
        let j_opt = evaluate_cost(&simulate(&sys, &opt, &x0, 1.0, dt).map_err(|e| e.to_string())?, &sys)
            .map_err(|e| e.to_string())?
            .total;
        let mut costs = Vec::new();
        for level in 0..p.rank() {
            let ctrl = truncated_controller(p, level, n, dt, Exec::default()).map_err(|e| e.to_string())?;
            let traj = simulate(&sys, &ctrl, &x0, 1.0, dt).map_err(|e| e.to_string())?;
            costs.push(evaluate_cost(&traj, &sys).map_err(|e| e.to_string())?.total);
        }
        for _ in 0..10 {
            let v: DVector<f64> = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let v = &v / (v.norm_squared() / n as f64).sqrt();
            let (omega, phase) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..6.3));
            let ctrl = Perturbed {
                base: &opt,
                eps: 1e-3,
                w: move |t: f64| &v * (omega * t + phase).cos(),
            };
            let traj = simulate(&sys, &ctrl, &x0, 1.0, dt).map_err(|e| e.to_string())?;
            costs.push(evaluate_cost(&traj, &sys).map_err(|e| e.to_string())?.total);
        }
        runs += costs.len();
        worst = costs.iter().map(|j| j - j_opt).fold(worst, f64::min);
    }
    check(
        worst >= -1e-8,
        format!("{runs} truncated/perturbed runs on 4 systems, min J - J_opt = {worst:.2e} (>= -1e-8)"),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut s = preset_example_vii();
    s.output_dir = tmp.path().join("example_vii");
    scenario::run(&s, Exec::default()).map_err(|e| e.to_string())?;
    let first = read_dir(&s.output_dir);
    scenario::run(&s, Exec::default()).map_err(|e| e.to_string())?;
    let second = read_dir(&s.output_dir);
    scenario::run(&s, Exec::Sequential).map_err(|e| e.to_string())?;
    let sequential = read_dir(&s.output_dir);
    let bytes: usize = first.values().map(Vec::len).sum();
    check(
        first.len() >= 4 && first == second && first == sequential,
        format!(
            "{} artifacts ({bytes} bytes) identical across repeated and sequential runs",
            first.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", oracle_equivalence),
        ("worked sinusoidal example", example_vii),
        ("closed-form Riccati", closed_form_sweep),
        ("truncation ratio", truncation_ratio),
        ("decoupling identities", decoupling_identities),
        ("optimality dominance", optimality_dominance),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
