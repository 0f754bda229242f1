use std::ops::{Add, Mul};

/// Uniform time grid `0 = t_0 < ... < t_K = T` with `K = ceil(T / dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    /// Callers validate `horizon > 0` and `0 < dt <= horizon`.
    pub fn new(horizon: f64, dt: f64) -> Self {
        let ratio = horizon / dt;
        // Absorb the representation error of e.g. 1.0 / 1e-3.
        let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
            ratio.round()
        } else {
            ratio.ceil()
        };
        TimeGrid {
            horizon,
            steps: (steps as usize).max(1),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Interval index `k` with `t_k <= t <= t_{k+1}` for `t` clamped to `[0, T]`.
    pub(crate) fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, self.horizon);
        let k = ((t / self.step()).floor() as usize).min(self.steps - 1);
        (k, t)
    }
}

/// One classic fourth-order Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step<T, F>(f: &F, t: f64, y: &T, h: f64) -> T
where
    T: Clone + Add<Output = T> + Mul<f64, Output = T>,
    F: Fn(f64, &T) -> T,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y.clone() + k1.clone() * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y.clone() + k2.clone() * (0.5 * h)));
    let k4 = f(t + h, &(y.clone() + k3.clone() * h));
    y.clone() + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Cubic Hermite interpolation on `[t0, t0 + h]` from endpoint values and slopes.
pub(crate) fn hermite(h: f64, s: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Exact integral of the cubic Hermite interpolant over `[t0, t0 + h*s]`.
pub(crate) fn hermite_integral(h: f64, s: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let i00 = 0.5 * s4 - s3 + s;
    let i10 = 0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2;
    let i01 = -0.5 * s4 + s3;
    let i11 = 0.25 * s4 - s3 / 3.0;
    h * (i00 * y0 + i10 * h * d0 + i01 * y1 + i11 * h * d1)
}
