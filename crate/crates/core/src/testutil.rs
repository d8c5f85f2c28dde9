//! Helpers shared by the unit tests.

use nalgebra::DVector;

/// Small deterministic generator so unit tests need no extra dependencies.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    /// Uniform in `[-1, 1)`.
    pub fn next(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    pub fn vector(&mut self, n: usize, scale: f64) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| scale * self.next()))
    }
}

/// Six-point central difference of `f` at `t`, two Richardson levels.
pub fn central_diff(f: impl Fn(f64) -> DVector<f64>, t: f64, h: f64) -> DVector<f64> {
    let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    let d1 = d(h);
    let d2 = d(h / 2.0);
    let d4 = d(h / 4.0);
    let r1 = (&d2 * 4.0 - &d1) / 3.0;
    let r2 = (&d4 * 4.0 - &d2) / 3.0;
    (r2 * 16.0 - r1) / 15.0
}

/// `‖a − b‖_∞ / max(1, ‖b‖_∞)`.
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Sinusoidal joint motion with closed-form derivatives.
pub struct SineMotion {
    pub offset: DVector<f64>,
    pub amplitude: DVector<f64>,
    pub freq: DVector<f64>,
    pub phase: DVector<f64>,
}

impl SineMotion {
    pub fn random(rng: &mut Lcg, n: usize, amp: f64) -> Self {
        Self {
            offset: DVector::zeros(n),
            amplitude: rng.vector(n, amp),
            freq: DVector::from_iterator(n, (0..n).map(|_| 1.0 + rng.next().abs() * 2.0)),
            phase: rng.vector(n, 3.0),
        }
    }

    /// Derivative of order `k` at `t`.
    pub fn at(&self, t: f64, k: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.offset.len(),
            (0..self.offset.len()).map(|j| {
                let w = self.freq[j];
                let arg = w * t + self.phase[j] + k as f64 * std::f64::consts::FRAC_PI_2;
                let base = if k == 0 { self.offset[j] } else { 0.0 };
                base + self.amplitude[j] * w.powi(k as i32) * arg.sin()
            }),
        )
    }
}
