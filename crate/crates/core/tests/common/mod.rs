//! Random systems shared by the integration tests.
#![allow(dead_code)]

use graphon_lqr::{CoeffPoly, FiniteRankGraphon, LqrProblem, StepGraphon};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `r` cell vectors, orthonormal under `<u, v> = (1/n) sum u_i v_i`.
pub fn orthonormal_cells(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Vec<Vec<f64>> {
    let m = DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.qr().q();
    let scale = (n as f64).sqrt();
    (0..r)
        .map(|l| q.column(l).iter().map(|v| v * scale).collect())
        .collect()
}

/// Step coupling `a_ij = sum_l lambda_l f_l[i] f_l[j]` with `|lambda| in [0.1, 1]`.
pub fn random_step(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> StepGraphon {
    let modes = orthonormal_cells(rng, n, rank);
    let mut lambdas: Vec<f64> = (0..rank)
        .map(|_| rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    lambdas.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let entries = DMatrix::from_fn(n, n, |i, j| {
        lambdas.iter().zip(&modes).map(|(l, f)| l * f[i] * f[j]).sum::<f64>()
    });
    let entries = (&entries + entries.transpose()) * 0.5;
    let bound = entries.amax().max(1.0);
    StepGraphon::new(entries, bound).unwrap()
}

pub fn random_poly(rng: &mut ChaCha8Rng, max_degree: usize) -> CoeffPoly {
    let deg = rng.gen_range(0..=max_degree);
    CoeffPoly::new((0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap()
}

/// Random polynomial shifted to be nonnegative on `spectrum` and at 0.
pub fn admissible_poly(rng: &mut ChaCha8Rng, max_degree: usize, spectrum: &[f64]) -> CoeffPoly {
    let p = random_poly(rng, max_degree);
    let low = spectrum
        .iter()
        .chain(&[0.0])
        .map(|&s| p.eval(s))
        .fold(f64::INFINITY, f64::min);
    let mut c = p.coeffs().to_vec();
    if low < 0.0 {
        c[0] -= low;
    }
    c[0] += rng.gen_range(0.0..0.5);
    CoeffPoly::new(c).unwrap()
}

/// Random admissible problem on a random step coupling of the given size.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, rank: usize, horizon: f64) -> (StepGraphon, LqrProblem) {
    let step = random_step(rng, n, rank);
    let g: FiniteRankGraphon = step.spectral_decompose(step.default_zero_tol()).unwrap();
    assert_eq!(g.rank(), rank);
    let spectrum = g.eigenvalues();
    let mut b = random_poly(rng, 3).coeffs().to_vec();
    b[0] = rng.gen_range(0.2..1.5);
    let p = LqrProblem::new(
        rng.gen_range(-1.0..1.0),
        CoeffPoly::new(b).unwrap(),
        admissible_poly(rng, 3, &spectrum),
        admissible_poly(rng, 3, &spectrum),
        g,
        horizon,
    )
    .unwrap();
    (step, p)
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
