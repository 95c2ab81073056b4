#![allow(dead_code)]

use dpmono_core::quadrature::{integrate, Tolerance};
use dpmono_core::BaseMeasure;

/// The atom full conditional `g(θ) θ^{-n}` on `[w_max, T]`, normalized by
/// adaptive quadrature.
pub struct AtomTarget {
    base: BaseMeasure,
    w_max: f64,
    count: f64,
    shift: f64,
    norm: f64,
}

impl AtomTarget {
    pub fn new(base: BaseMeasure, w_max: f64, count: usize) -> Self {
        let t = base.horizon();
        let count = count as f64;
        let shift = (0..=4096)
            .map(|i| w_max + (t - w_max) * i as f64 / 4096.0)
            .map(|th| base.ln_density(th) - count * th.ln())
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut target = Self { base, w_max, count, shift, norm: 1.0 };
        target.norm = target.integral(w_max, t);
        target
    }

    fn unnormalized(&self, theta: f64) -> f64 {
        let v = (self.base.ln_density(theta) - self.count * theta.ln() - self.shift).exp();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let tol = Tolerance { abs: 1e-15, rel: 1e-12, max_intervals: 4000 };
        integrate(|x| self.unnormalized(x), a, b, tol).value
    }

    pub fn density(&self, theta: f64) -> f64 {
        self.unnormalized(theta) / self.norm
    }

    /// CDF at each point of an ascending sample, accumulated interval by interval.
    pub fn cdf_sorted(&self, sorted: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        let mut prev = self.w_max;
        sorted
            .iter()
            .map(|&x| {
                acc += self.integral(prev, x);
                prev = x;
                (acc / self.norm).min(1.0)
            })
            .collect()
    }
}

/// KS statistic and p-value of an ascending sample against CDF values at
/// those points.
pub fn ks_from_cdf(cdf: &[f64]) -> (f64, f64) {
    let n = cdf.len() as f64;
    let d = cdf
        .iter()
        .enumerate()
        .map(|(i, &f)| ((i + 1) as f64 / n - f).max(f - i as f64 / n))
        .fold(0.0, f64::max);
    (d, dpmono_core::stats::ks_p_value(d, n))
}
