//! Empirical-Bayes calibration of the base-measure rate γ.
//!
//! Under the inverse-shifted-gamma base measure a draw from the
//! prior-predictive of one event time is `W ~ U(0, θ)`, `θ ~ G_γ`, so
//! `E[W] = E[θ]/2 =: Ψ(γ)`. The estimator is `γ̂ = Ψ⁻¹(W̄)`.
//!
//! With `x = γu ~ Gamma(a, 1)` and `θ = uT/(u + T)`,
//! `Ψ(γ) = (T/2) E[x / (γT + x)]`, which is integrated in `x`.

use crate::base_measure::{BaseFamily, BaseMeasure};
use crate::error::{Error, Result};
use crate::intensity::{TruthId, TruthIntensity};
use crate::point_process::PointProcessSample;
use crate::quadrature::{integrate_to_infinity, Tolerance};
use crate::special::ln_gamma_pdf;

const PSI_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-15,
    rel: 1e-12,
    max_intervals: 4000,
};
const INITIAL_BRACKET: (f64, f64) = (1e-6, 1e6);
/// Clamp margin for the mean event time, relative to the horizon.
pub const CLAMP_MARGIN: f64 = 1e-6;

fn check_shape_horizon(a: f64, horizon: f64) -> Result<()> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::domain(format!("shape {a} must exceed 1")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon {horizon} must be positive")));
    }
    Ok(())
}

/// Ψ(γ): prior-predictive mean event time under the inverse-shifted-gamma
/// base measure with shape `a` on `[0, T]`.
pub fn psi(gamma: f64, a: f64, horizon: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma {gamma} must be positive")));
    }
    check_shape_horizon(a, horizon)?;
    let c = gamma * horizon;
    let ln_norm_free = |x: f64| ln_gamma_pdf(a, x);
    let est = integrate_to_infinity(
        |x| {
            if x <= 0.0 {
                0.0
            } else {
                x / (c + x) * ln_norm_free(x).exp()
            }
        },
        0.0,
        PSI_TOLERANCE,
    );
    Ok(0.5 * horizon * est.value.clamp(0.0, 1.0))
}

/// Ψ for a base measure; only the inverse-shifted-gamma family has one.
pub fn psi_for(base: &BaseMeasure) -> Result<f64> {
    require_family(base.family())?;
    psi(base.rate(), base.shape(), base.horizon())
}

pub fn require_family(family: BaseFamily) -> Result<()> {
    match family {
        BaseFamily::InvShiftedGamma => Ok(()),
        BaseFamily::TruncatedGamma => Err(Error::UnsupportedStrategy(
            "empirical-Bayes calibration is defined for the inverse-shifted-gamma base measure only".into(),
        )),
    }
}

/// Ψ tabulated on a log-spaced γ grid, used to bracket inversions.
#[derive(Debug, Clone)]
pub struct PsiTable {
    shape: f64,
    horizon: f64,
    ln_gamma: Vec<f64>,
    values: Vec<f64>,
}

impl PsiTable {
    /// Tabulates `points` values of Ψ for γ from `lo` to `hi` (log-spaced).
    pub fn new(a: f64, horizon: f64, lo: f64, hi: f64, points: usize) -> Result<Self> {
        check_shape_horizon(a, horizon)?;
        if !(lo > 0.0 && hi > lo && points >= 2) {
            return Err(Error::domain("table needs 0 < lo < hi and at least 2 points"));
        }
        let (l0, l1) = (lo.ln(), hi.ln());
        let ln_gamma: Vec<f64> = (0..points)
            .map(|i| l0 + (l1 - l0) * i as f64 / (points - 1) as f64)
            .collect();
        let values = ln_gamma
            .iter()
            .map(|lg| psi(lg.exp(), a, horizon))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shape: a,
            horizon,
            ln_gamma,
            values,
        })
    }

    pub fn gammas(&self) -> impl Iterator<Item = f64> + '_ {
        self.ln_gamma.iter().map(|l| l.exp())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] < w[0])
    }

    /// Exact Ψ⁻¹, bracketed from the table when the target lies inside it.
    pub fn inverse(&self, target: f64) -> Result<f64> {
        check_target(target, self.horizon)?;
        let idx = self.values.partition_point(|&v| v > target);
        let bracket = if idx == 0 || idx == self.values.len() {
            None
        } else {
            Some((self.ln_gamma[idx - 1].exp(), self.ln_gamma[idx].exp()))
        };
        invert(target, self.shape, self.horizon, bracket)
    }
}

fn check_target(target: f64, horizon: f64) -> Result<()> {
    if !(target > 0.0 && target < 0.5 * horizon) {
        return Err(Error::Calibration(format!(
            "target {target} outside (0, {})",
            0.5 * horizon
        )));
    }
    Ok(())
}

/// γ with `Ψ(γ) = target`, by bisection in `ln γ`.
pub fn psi_inverse(target: f64, a: f64, horizon: f64) -> Result<f64> {
    check_shape_horizon(a, horizon)?;
    check_target(target, horizon)?;
    invert(target, a, horizon, None)
}

fn invert(target: f64, a: f64, horizon: f64, bracket: Option<(f64, f64)>) -> Result<f64> {
    let (mut lo, mut hi) = bracket.unwrap_or(INITIAL_BRACKET);
    // Ψ decreases: need Ψ(lo) ≥ target ≥ Ψ(hi).
    while psi(lo, a, horizon)? < target {
        lo /= 10.0;
        if lo < 1e-300 {
            return Err(Error::Calibration(format!("no bracket below target {target}")));
        }
    }
    while psi(hi, a, horizon)? > target {
        hi *= 10.0;
        if hi > 1e300 {
            return Err(Error::Calibration(format!("no bracket above target {target}")));
        }
    }
    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (llo + lhi);
        let value = psi(mid.exp(), a, horizon)?;
        if value == target {
            return Ok(mid.exp());
        }
        if value > target {
            llo = mid;
        } else {
            lhi = mid;
        }
        if lhi - llo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (llo + lhi)).exp())
}

/// Empirical estimate of γ with a note on whether the mean was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaHat {
    pub gamma: f64,
    pub mean_event_time: f64,
    pub clamped: bool,
}

/// γ̂ = Ψ⁻¹(W̄), with W̄ clamped into `[δ, T/2 − δ]`, `δ = 1e-6·T`.
pub fn gamma_hat(sample: &PointProcessSample, a: f64, horizon: f64) -> Result<GammaHat> {
    let mean = sample
        .mean_event_time()
        .ok_or_else(|| Error::Calibration("empty sample has no mean event time".into()))?;
    gamma_hat_from_mean(mean, a, horizon)
}

pub fn gamma_hat_from_mean(mean: f64, a: f64, horizon: f64) -> Result<GammaHat> {
    let delta = CLAMP_MARGIN * horizon;
    let clamped_mean = mean.clamp(delta, 0.5 * horizon - delta);
    let clamped = clamped_mean != mean;
    if clamped {
        log::warn!("mean event time {mean} clamped to {clamped_mean} before calibration");
    }
    Ok(GammaHat {
        gamma: psi_inverse(clamped_mean, a, horizon)?,
        mean_event_time: mean,
        clamped,
    })
}

/// Deliberately perturbed rate `ρ · Ψ⁻¹(E_theo)` for a built-in truth.
pub fn gamma_fixed(rho: f64, truth: TruthId, a: f64, horizon: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::domain(format!("perturbation factor {rho} must be positive")));
    }
    let e_theo = TruthIntensity::with_horizon(truth, horizon)?.e_theo();
    Ok(rho * psi_inverse(e_theo, a, horizon)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits() {
        assert!((psi(1e-9, 2.0, 8.0).unwrap() - 4.0).abs() < 1e-6);
        assert!(psi(1e9, 2.0, 8.0).unwrap() < 1e-8);
        assert!(psi(0.0, 2.0, 8.0).is_err());
        assert!(psi(1.0, 1.0, 8.0).is_err());
    }

    #[test]
    fn closed_form_for_shape_two() {
        // E[x/(c+x)] for x ~ Gamma(2,1) is 1 - c + c² e^c E1(c); check at c = 8
        // against a value from an independent evaluation of E1.
        // E1(8) = 3.7665622843924906e-5
        let c: f64 = 8.0;
        let e1 = 3.766_562_284_392_490_6e-5;
        let exact = 4.0 * (1.0 - c + c * c * c.exp() * e1);
        assert!((psi(1.0, 2.0, 8.0).unwrap() - exact).abs() < 1e-9);
    }

    #[test]
    fn inverse_round_trip() {
        for g in [1e-3, 0.03, 0.66, 1.0, 17.0, 1e3] {
            let back = psi_inverse(psi(g, 2.0, 8.0).unwrap(), 2.0, 8.0).unwrap();
            assert!((back / g - 1.0).abs() < 1e-6, "{g} -> {back}");
        }
    }

    #[test]
    fn target_outside_range() {
        for t in [0.0, 4.0, 5.0, -1.0] {
            assert!(matches!(psi_inverse(t, 2.0, 8.0), Err(Error::Calibration(_))));
        }
    }

    #[test]
    fn table_is_monotone_and_inverts() {
        let table = PsiTable::new(2.0, 8.0, 1e-3, 1e3, 200).unwrap();
        assert!(table.is_strictly_decreasing());
        assert!(table.values().iter().all(|&v| v > 0.0 && v < 4.0));
        let target = psi(0.25, 2.0, 8.0).unwrap();
        assert!((table.inverse(target).unwrap() / 0.25 - 1.0).abs() < 1e-6);
        let outside = psi(1e5, 2.0, 8.0).unwrap();
        assert!((table.inverse(outside).unwrap() / 1e5 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gamma_hat_single_event_and_clamp() {
        let g0 = 0.8;
        let t = psi(g0, 2.0, 8.0).unwrap();
        let sample = PointProcessSample {
            events: vec![t],
            n: 1,
            horizon: 8.0,
            seed: 0,
            truth_id: None,
        };
        let est = gamma_hat(&sample, 2.0, 8.0).unwrap();
        assert!((est.gamma - g0).abs() < 1e-6);
        assert!(!est.clamped);

        let late = PointProcessSample {
            events: vec![4.0 - 8e-6, 6.0, 7.9],
            ..sample.clone()
        };
        let est = gamma_hat(&late, 2.0, 8.0).unwrap();
        assert!(est.clamped && est.gamma.is_finite() && est.gamma > 0.0);

        let empty = PointProcessSample {
            events: vec![],
            ..sample
        };
        assert!(gamma_hat(&empty, 2.0, 8.0).is_err());
    }

    #[test]
    fn fixed_rule_scales() {
        let base = gamma_fixed(1.0, TruthId::Lambda01, 2.0, 8.0).unwrap();
        let far = gamma_fixed(0.01, TruthId::Lambda01, 2.0, 8.0).unwrap();
        assert!((far - 0.01 * base).abs() < 1e-15);
        assert!((far - 0.000_323).abs() < 5e-6);
        assert!(gamma_fixed(0.0, TruthId::Lambda01, 2.0, 8.0).is_err());
    }

    #[test]
    fn family_one_is_unsupported() {
        let g = BaseMeasure::truncated_gamma(2.0, 1.0, 8.0).unwrap();
        assert!(matches!(psi_for(&g), Err(Error::UnsupportedStrategy(_))));
        let g = BaseMeasure::inv_shifted_gamma(2.0, 1.0, 8.0).unwrap();
        assert!((psi_for(&g).unwrap() - psi(1.0, 2.0, 8.0).unwrap()).abs() < 1e-15);
    }
}
