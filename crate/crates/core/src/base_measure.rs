//! The two base-measure families for the mixing distribution of atoms
//! `θ ∈ (0, T]`, and the quantile transport between members of a family.
//!
//! Both families are images of a standard `Gamma(a, 1)` variable `x`:
//!
//! * [`BaseFamily::TruncatedGamma`]: `θ = x / γ` conditioned on `θ ≤ T`,
//!   i.e. density `γ^a θ^{a-1} e^{-γθ} / (Γ(a) P(a, γT))` on `(0, T]`.
//! * [`BaseFamily::InvShiftedGamma`]: `u = x / γ ~ Gamma(a, rate γ)` and
//!   `θ = (1/u + 1/T)^{-1}`, so that `(1/θ - 1/T)^{-1} ~ Gamma(a, γ)`.
//!
//! All CDF work is done on the latent `x` scale with log-space incomplete
//! gamma functions, which keeps truncated sampling exact far into the tails.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, OpenClosed01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gamma_p_inv_ln, gamma_q_inv_ln, ln_gamma, ln_gamma_p, ln_gamma_q, ln_one_minus_exp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseFamily {
    TruncatedGamma,
    InvShiftedGamma,
}

impl fmt::Display for BaseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseFamily::TruncatedGamma => "truncated-gamma",
            BaseFamily::InvShiftedGamma => "inv-shifted-gamma",
        })
    }
}

impl FromStr for BaseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truncated-gamma" | "truncated" | "1" => Ok(BaseFamily::TruncatedGamma),
            "inv-shifted-gamma" | "inverse" | "2" => Ok(BaseFamily::InvShiftedGamma),
            other => Err(Error::config(format!("unknown base family `{other}`"))),
        }
    }
}

pub const DEFAULT_SHAPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseMeasure {
    family: BaseFamily,
    shape: f64,
    rate: f64,
    horizon: f64,
    // ln P(a, γT); zero for the second family.
    ln_norm: f64,
}

impl BaseMeasure {
    pub fn new(family: BaseFamily, shape: f64, rate: f64, horizon: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 1.0) {
            return Err(Error::domain(format!("shape must be > 1, got {shape}")));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!("rate must be positive, got {rate}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        let ln_norm = match family {
            BaseFamily::TruncatedGamma => ln_gamma_p(shape, rate * horizon),
            BaseFamily::InvShiftedGamma => 0.0,
        };
        Ok(Self {
            family,
            shape,
            rate,
            horizon,
            ln_norm,
        })
    }

    pub fn truncated_gamma(shape: f64, rate: f64, horizon: f64) -> Result<Self> {
        Self::new(BaseFamily::TruncatedGamma, shape, rate, horizon)
    }

    pub fn inv_shifted_gamma(shape: f64, rate: f64, horizon: f64) -> Result<Self> {
        Self::new(BaseFamily::InvShiftedGamma, shape, rate, horizon)
    }

    /// Same family, shape and horizon with a different rate.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        Self::new(self.family, self.shape, rate, self.horizon)
    }

    pub fn family(&self) -> BaseFamily {
        self.family
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_atom(&self, theta: f64) -> Result<()> {
        if !(theta > 0.0 && theta <= self.horizon) {
            return Err(Error::domain(format!(
                "atom {theta} outside (0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `(1/θ - 1/T)^{-1}`, the gamma-distributed variable of the second family.
    pub fn shifted_inverse(&self, theta: f64) -> f64 {
        if theta >= self.horizon {
            f64::INFINITY
        } else {
            theta * self.horizon / (self.horizon - theta)
        }
    }

    // Latent Gamma(a, 1) coordinate of an atom.
    fn latent(&self, theta: f64) -> f64 {
        match self.family {
            BaseFamily::TruncatedGamma => self.rate * theta,
            BaseFamily::InvShiftedGamma => self.rate * self.shifted_inverse(theta),
        }
    }

    fn latent_to_theta(&self, x: f64) -> f64 {
        let theta = match self.family {
            BaseFamily::TruncatedGamma => x / self.rate,
            BaseFamily::InvShiftedGamma => {
                let u = x / self.rate;
                if u.is_infinite() {
                    self.horizon
                } else {
                    self.horizon / (1.0 + self.horizon / u)
                }
            }
        };
        theta.min(self.horizon)
    }

    fn latent_upper(&self) -> f64 {
        match self.family {
            BaseFamily::TruncatedGamma => self.rate * self.horizon,
            BaseFamily::InvShiftedGamma => f64::INFINITY,
        }
    }

    /// Log density at `θ`; `-∞` outside `(0, T]`.
    pub fn ln_density(&self, theta: f64) -> f64 {
        if !(theta > 0.0 && theta <= self.horizon) {
            return f64::NEG_INFINITY;
        }
        let a = self.shape;
        let g = self.rate;
        match self.family {
            BaseFamily::TruncatedGamma => {
                a * g.ln() + (a - 1.0) * theta.ln() - g * theta - ln_gamma(a) - self.ln_norm
            }
            BaseFamily::InvShiftedGamma => {
                let u = self.shifted_inverse(theta);
                if u.is_infinite() {
                    return f64::NEG_INFINITY;
                }
                a * g.ln() - ln_gamma(a) + (a + 1.0) * u.ln() - g * u - 2.0 * theta.ln()
            }
        }
    }

    pub fn density(&self, theta: f64) -> Result<f64> {
        self.check_atom(theta)?;
        Ok(self.ln_density(theta).exp())
    }

    pub fn cdf(&self, theta: f64) -> Result<f64> {
        self.check_atom(theta)?;
        Ok(self.ln_cdf(theta).exp())
    }

    fn ln_cdf(&self, theta: f64) -> f64 {
        let x = self.latent(theta);
        match self.family {
            BaseFamily::TruncatedGamma => (ln_gamma_p(self.shape, x) - self.ln_norm).min(0.0),
            BaseFamily::InvShiftedGamma => ln_gamma_p(self.shape, x),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability {p} outside [0, 1]")));
        }
        Ok(self.quantile_ln(p.ln()))
    }

    fn quantile_ln(&self, ln_p: f64) -> f64 {
        let ln_target = match self.family {
            BaseFamily::TruncatedGamma => ln_p + self.ln_norm,
            BaseFamily::InvShiftedGamma => ln_p,
        };
        let x = gamma_p_inv_ln(self.shape, ln_target).min(self.latent_upper());
        self.latent_to_theta(x)
    }

    /// One draw from the base measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            BaseFamily::InvShiftedGamma => {
                let gamma = Gamma::new(self.shape, 1.0 / self.rate).expect("validated parameters");
                let u: f64 = gamma.sample(rng);
                1.0 / (1.0 / u + 1.0 / self.horizon)
            }
            BaseFamily::TruncatedGamma => {
                let v: f64 = OpenClosed01.sample(rng);
                self.quantile_ln(v.ln())
            }
        }
    }

    /// `ln G([lower, T])`.
    pub fn ln_mass_above(&self, lower: f64) -> f64 {
        if lower <= 0.0 {
            return 0.0;
        }
        if lower >= self.horizon {
            return f64::NEG_INFINITY;
        }
        let a = self.shape;
        let xl = self.latent(lower);
        let xu = self.latent_upper();
        let interval = if xl >= a {
            ln_gamma_q(a, xl) + ln_one_minus_exp(ln_gamma_q(a, xu) - ln_gamma_q(a, xl))
        } else {
            ln_gamma_p(a, xu) + ln_one_minus_exp(ln_gamma_p(a, xl) - ln_gamma_p(a, xu))
        };
        interval - self.ln_norm
    }

    /// Exact draw from the base measure restricted to `[lower, T]`, by
    /// inversion of the latent gamma CDF in log space.
    pub fn sample_above<R: Rng + ?Sized>(&self, lower: f64, rng: &mut R) -> f64 {
        if lower <= 0.0 {
            return self.sample(rng);
        }
        if lower >= self.horizon {
            return self.horizon;
        }
        let a = self.shape;
        let xl = self.latent(lower);
        let xu = self.latent_upper();
        let v: f64 = OpenClosed01.sample(rng);
        let x = if xl >= a {
            // Q(x) = Q(xl) - v (Q(xl) - Q(xu))
            let lq_l = ln_gamma_q(a, xl);
            let delta = ln_gamma_q(a, xu) - lq_l;
            let target = lq_l + (-v * (-delta.exp_m1())).ln_1p();
            gamma_q_inv_ln(a, target)
        } else {
            // P(x) = P(xl) + v (P(xu) - P(xl))
            let lp_u = ln_gamma_p(a, xu);
            let delta = ln_gamma_p(a, xl) - lp_u;
            let target = lp_u + (delta.exp() + v * (-delta.exp_m1())).ln();
            gamma_p_inv_ln(a, target.min(0.0))
        };
        self.latent_to_theta(x.clamp(xl, xu)).clamp(lower, self.horizon)
    }

    /// Location of the density maximum over `[lower, T]`.
    pub fn mode_above(&self, lower: f64) -> f64 {
        let a = self.shape;
        let t = self.horizon;
        let mode = match self.family {
            BaseFamily::TruncatedGamma => (a - 1.0) / self.rate,
            BaseFamily::InvShiftedGamma => {
                // d/dθ ln g has the sign of (a-1)T² + T(3-a-γT)θ - 2θ², a concave
                // quadratic that is positive at 0 and negative at T.
                let b = 3.0 - a - self.rate * t;
                t * (b + (b * b + 8.0 * (a - 1.0)).sqrt()) / 4.0
            }
        };
        mode.clamp(lower.max(0.0), t)
    }
}

/// Quantile transport `θ ↦ G_to⁻¹(G_from(θ))` between two members of one family.
pub fn psi_transform(theta: f64, from: &BaseMeasure, to: &BaseMeasure) -> Result<f64> {
    if from.family != to.family {
        return Err(Error::domain(format!(
            "cannot transport between families {} and {}",
            from.family, to.family
        )));
    }
    if from.shape != to.shape || from.horizon != to.horizon {
        return Err(Error::domain("transport needs equal shape and horizon"));
    }
    from.check_atom(theta)?;
    let t = from.horizon;
    if theta >= t {
        return Ok(t);
    }
    let (g, g2) = (from.rate, to.rate);
    let moved = match from.family {
        // Tγθ / (γ'(T − θ) + γθ), arranged to be exactly θ when γ' = γ.
        BaseFamily::InvShiftedGamma => theta / (1.0 + (g2 / g - 1.0) * (1.0 - theta / t)),
        BaseFamily::TruncatedGamma => {
            let a = from.shape;
            let x = g * theta;
            let latent = if x <= a {
                let ln_p = ln_gamma_p(a, x) + to.ln_norm - from.ln_norm;
                gamma_p_inv_ln(a, ln_p.min(0.0))
            } else {
                // Upper tail: G_from(θ) is too close to 1 to carry the information.
                let lq = ln_gamma_q(a, x);
                let ln_tail = lq + ln_one_minus_exp(ln_gamma_q(a, g * t) - lq) - from.ln_norm + to.ln_norm;
                let lq_top = ln_gamma_q(a, g2 * t);
                let hi = ln_tail.max(lq_top);
                let ln_q = hi + (-(ln_tail - lq_top).abs()).exp().ln_1p();
                gamma_q_inv_ln(a, ln_q.min(0.0))
            };
            latent / g2
        }
    };
    // The map is sandwiched between θ and θγ/γ'; clip the rounding error.
    let scaled = theta * (g / g2);
    Ok(moved.max(scaled.min(theta)).min(scaled.max(theta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};
    use crate::rng::stream;

    fn fam2(rate: f64) -> BaseMeasure {
        BaseMeasure::inv_shifted_gamma(2.0, rate, 8.0).unwrap()
    }

    fn fam1(rate: f64) -> BaseMeasure {
        BaseMeasure::truncated_gamma(2.0, rate, 8.0).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BaseMeasure::inv_shifted_gamma(1.0, 1.0, 8.0).is_err());
        assert!(BaseMeasure::inv_shifted_gamma(2.0, 0.0, 8.0).is_err());
        assert!(BaseMeasure::truncated_gamma(2.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn truncated_density_reference_value() {
        // θ e^{-θ} / G(8) at θ = 1 with G(8) = 1 - 9 e^{-8}.
        let g8 = 1.0 - 9.0 * (-8.0f64).exp();
        let expected = (-1.0f64).exp() / g8;
        let d = fam1(1.0).density(1.0).unwrap();
        assert!((d - expected).abs() < 1e-14);
        assert!((d - 0.368_993).abs() < 1e-6);
    }

    #[test]
    fn densities_integrate_to_one() {
        for g in [fam1(0.5), fam1(3.0), fam2(0.1), fam2(0.66), fam2(5.0)] {
            let total = integrate(|t| g.ln_density(t).exp(), 0.0, 8.0, Tolerance::default()).value;
            assert!((total - 1.0).abs() < 1e-8, "{g:?}: {total}");
        }
    }

    #[test]
    fn density_domain() {
        assert!(fam2(1.0).density(0.0).is_err());
        assert!(fam2(1.0).density(8.1).is_err());
        // Finite (zero) density at the horizon for the second family.
        assert_eq!(fam2(1.0).density(8.0).unwrap(), 0.0);
    }

    #[test]
    fn cdf_and_quantile_invert() {
        for g in [fam1(0.5), fam1(2.0), fam2(0.3), fam2(1.0)] {
            assert!((g.cdf(8.0).unwrap() - 1.0).abs() < 1e-10);
            for theta in [1.0, 3.0, 5.0] {
                let p = g.cdf(theta).unwrap();
                let back = g.quantile(p).unwrap();
                assert!((back - theta).abs() < 1e-8, "{g:?} {theta} -> {back}");
            }
        }
        assert!(fam1(1.0).quantile(1.5).is_err());
        assert!(fam1(1.0).quantile(-0.1).is_err());
    }

    #[test]
    fn second_family_cdf_is_latent_gamma_cdf() {
        let g = fam2(0.7);
        for theta in [0.5f64, 2.0, 6.5] {
            let u = 1.0 / (1.0 / theta - 1.0 / 8.0);
            // Gamma(2, rate 0.7) CDF in closed form.
            let x = 0.7 * u;
            let expected = 1.0 - (1.0 + x) * (-x).exp();
            assert!((g.cdf(theta).unwrap() - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn shifted_inverse_limits() {
        let g = fam2(1.0);
        // u = T maps to θ = T/2.
        assert!((g.latent_to_theta(1.0 * 8.0) - 4.0).abs() < 1e-15);
        assert_eq!(g.latent_to_theta(f64::INFINITY), 8.0);
    }

    #[test]
    fn transport_closed_form_and_identity() {
        let (g1, g2) = (fam2(1.0), fam2(2.0));
        assert!((psi_transform(4.0, &g1, &g2).unwrap() - 32.0 / 12.0).abs() < 1e-14);
        for theta in [0.1, 3.0, 7.9] {
            assert!((psi_transform(theta, &g1, &g1).unwrap() - theta).abs() < 1e-12);
            let f = fam1(0.8);
            assert!((psi_transform(theta, &f, &f).unwrap() - theta).abs() < 1e-10 * theta);
        }
        assert!(psi_transform(1.0, &fam1(1.0), &fam2(1.0)).is_err());
    }

    #[test]
    fn transport_closed_form_matches_quantile_route() {
        let (g1, g2) = (fam2(0.4), fam2(3.0));
        for theta in [0.2, 1.0, 5.0, 6.5] {
            let via_quantile = g2.quantile(g1.cdf(theta).unwrap()).unwrap();
            let closed = psi_transform(theta, &g1, &g2).unwrap();
            assert!((via_quantile - closed).abs() < 1e-9, "{theta}");
        }
    }

    #[test]
    fn truncated_sampling_respects_bounds_in_far_tail() {
        let mut rng = stream(3);
        // Rate so large that G([7.9, 8]) underflows in linear space.
        let g = fam2(20.0);
        assert!(g.ln_mass_above(7.9) < -700.0);
        for _ in 0..1000 {
            let th = g.sample_above(7.9, &mut rng);
            assert!((7.9..=8.0).contains(&th));
        }
        let g = fam1(50.0);
        for _ in 0..1000 {
            let th = g.sample_above(6.0, &mut rng);
            assert!((6.0..=8.0).contains(&th));
        }
    }

    #[test]
    fn mass_above_matches_cdf() {
        for g in [fam1(0.5), fam2(0.66)] {
            for l in [0.5, 3.0, 7.0] {
                let direct = 1.0 - g.cdf(l).unwrap();
                assert!((g.ln_mass_above(l).exp() - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_is_a_maximum() {
        for g in [fam2(0.05), fam2(0.66), fam2(10.0), fam1(0.5), fam1(0.1)] {
            for lower in [0.0, 1.0, 5.0] {
                let m = g.mode_above(lower);
                let best = g.ln_density(m);
                for i in 0..=1000 {
                    let th = lower + (8.0 - lower) * i as f64 / 1000.0;
                    if th > 0.0 {
                        assert!(g.ln_density(th) <= best + 1e-12, "{g:?} lower={lower} th={th}");
                    }
                }
            }
        }
    }
}
