//! Numeric helpers: `libm`-backed float functions, compensated summation,
//! Gauss-Legendre rules, and the handful of special functions the quadrature
//! oracle needs.

use alloc::vec::Vec;

pub use libm::{atan2, cos, cosh, exp, fabs, floor, log as ln, sin, sinh, sqrt};

pub const PI: f64 = core::f64::consts::PI;

/// `x mod m` folded into `[0, m)`.
pub fn rem_euclid(x: f64, m: f64) -> f64 {
    let r = x - m * floor(x / m);
    if r >= m {
        r - m
    } else if r < 0.0 {
        r + m
    } else {
        r
    }
}

pub fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Neumaier-compensated accumulator.
///
/// Addition order is fixed by the caller, so a fixed chunk partition merged
/// in chunk order yields bit-identical totals regardless of which worker
/// produced each chunk.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if fabs(self.sum) >= fabs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another accumulator in; sequence-sensitive, so callers must
    /// merge in a fixed order.
    pub fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root.
        let mut x = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if fabs(dx) < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Exponentially scaled modified Bessel function `I0e(x) = exp(-x) I0(x)`
/// for `x >= 0`. Power series below the crossover, asymptotic expansion
/// above; relative error is comfortably below 1e-10 on both branches.
pub fn bessel_i0e(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 30.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * exp(-x)
    } else {
        let inv = 1.0 / (8.0 * x);
        // Coefficients of the I0 asymptotic series: prod((2j-1)^2) / j!.
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..=8u32 {
            let tj = 2.0 * j as f64 - 1.0;
            term *= tj * tj * inv / j as f64;
            sum += term;
        }
        sum / sqrt(2.0 * PI * x)
    }
}

/// Sample mean and standard error of the mean from accumulated first and
/// second moments. Negative variance from rounding is clamped to zero.
pub fn mean_and_stderr(sum: f64, sum_sq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    (mean, sqrt(var / nf))
}
