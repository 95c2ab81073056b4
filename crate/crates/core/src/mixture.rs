//! Stick-breaking representation of a Dirichlet-process mixture of uniform
//! kernels `θ⁻¹ 1{0 < t < θ}`, the normalized intensity it induces, and the
//! hyperparameter state that travels with it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, OpenClosed01};
use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::intensity::check_time;

/// Tail tolerance used when drawing a mixture from the prior.
pub const PRIOR_TRUNCATION: f64 = 1e-8;

/// Fraction of the current remainder kept by one `Beta(1, A)` stick.
///
/// `1 - v` with `v ~ Beta(1, A)` has the law of `U^{1/A}`; sampling it
/// directly avoids cancellation when `v` is close to 1.
pub fn stick_keep<R: Rng + ?Sized>(concentration: f64, rng: &mut R) -> f64 {
    let u: f64 = OpenClosed01.sample(rng);
    u.powf(1.0 / concentration)
}

/// Finite part of a stick-breaking mixture plus per-event latent variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    #[serde(rename = "w")]
    pub weights: Vec<f64>,
    #[serde(rename = "theta")]
    pub atoms: Vec<f64>,
    #[serde(rename = "c")]
    pub allocations: Vec<usize>,
    #[serde(rename = "u")]
    pub slices: Vec<f64>,
    #[serde(rename = "r")]
    pub remainder: f64,
    pub horizon: f64,
}

impl MixtureState {
    pub fn empty(horizon: f64) -> Self {
        Self {
            weights: Vec::new(),
            atoms: Vec::new(),
            allocations: Vec::new(),
            slices: Vec::new(),
            remainder: 1.0,
            horizon,
        }
    }

    /// Number of represented clusters `K*`.
    pub fn k_star(&self) -> usize {
        self.weights.len()
    }

    /// Allocation count per represented cluster.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.weights.len()];
        for &c in &self.allocations {
            counts[c] += 1;
        }
        counts
    }

    pub fn k_nonempty(&self) -> usize {
        self.counts().iter().filter(|&&n| n > 0).count()
    }

    /// Pushes one stick (weight taken from the remainder) with its atom.
    pub(crate) fn push_stick(&mut self, keep: f64, atom: f64) {
        let w = self.remainder * (1.0 - keep);
        self.remainder *= keep;
        self.weights.push(w);
        self.atoms.push(atom);
    }

    /// `λ̄(t) = Σ_k w_k 1{t < θ_k} / θ_k`, ignoring the unrepresented remainder.
    pub fn eval_bar_lambda(&self, t: f64) -> Result<f64> {
        check_time(t, self.horizon)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.atoms)
            .filter(|(_, &th)| t < th)
            .map(|(w, th)| w / th)
            .sum())
    }

    /// Point value and an upper bound that charges the remainder `r` to the
    /// largest possible uniform density at `t`, i.e. `[λ̄(t), λ̄(t) + r / t]`.
    pub fn eval_bar_lambda_bounds(&self, t: f64) -> Result<(f64, f64)> {
        let v = self.eval_bar_lambda(t)?;
        let slack = if self.remainder > 1e-12 {
            self.remainder / t
        } else {
            0.0
        };
        Ok((v, v + slack))
    }

    /// `λ̄` on a grid, in `O(K log K + len)`.
    pub fn bar_lambda_on(&self, grid: &Grid) -> GridFunction {
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&i, &j| self.atoms[j].total_cmp(&self.atoms[i]));
        let mut values = vec![0.0; grid.len];
        let mut acc = 0.0;
        let mut next = 0;
        for idx in (0..grid.len).rev() {
            let t = grid.point(idx);
            while next < order.len() && self.atoms[order[next]] > t {
                let k = order[next];
                acc += self.weights[k] / self.atoms[k];
                next += 1;
            }
            values[idx] = acc;
        }
        GridFunction { grid: *grid, values }
    }

    /// `t ↦ M λ̄(t)` on a grid.
    pub fn intensity_draw(&self, mass: f64, grid: &Grid) -> GridFunction {
        self.bar_lambda_on(grid).scaled(mass)
    }

    /// Checks the simplex, allocation-feasibility and slice invariants.
    pub fn audit(&self, events: Option<&[f64]>, zeta: Option<f64>) -> Result<()> {
        if self.weights.len() != self.atoms.len() {
            return Err(Error::domain("weights and atoms differ in length"));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) || !(self.remainder >= 0.0) {
            return Err(Error::domain("non-positive weight or negative remainder"));
        }
        let total: f64 = self.weights.iter().sum::<f64>() + self.remainder;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("weights sum to {total}")));
        }
        if self.allocations.iter().any(|&c| c >= self.weights.len()) {
            return Err(Error::domain("allocation index out of range"));
        }
        if let Some(events) = events {
            for (i, (&c, &w)) in self.allocations.iter().zip(events).enumerate() {
                if w > self.atoms[c] {
                    return Err(Error::domain(format!(
                        "event {i} at {w} exceeds its atom {}",
                        self.atoms[c]
                    )));
                }
            }
        }
        if let Some(zeta) = zeta {
            for (i, (&c, &u)) in self.allocations.iter().zip(&self.slices).enumerate() {
                if !(u < self.weights[c].min(zeta)) {
                    return Err(Error::domain(format!("slice {i} not below its cluster weight")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Draws a mixture from the stick-breaking prior, truncated once the
/// unrepresented remainder drops below `tail`.
pub fn sample_prior<R: Rng + ?Sized>(
    concentration: f64,
    base: &BaseMeasure,
    tail: f64,
    rng: &mut R,
) -> Result<MixtureState> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::domain(format!("tail tolerance {tail} outside (0, 1)")));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::domain(format!("concentration {concentration} must be positive")));
    }
    let mut state = MixtureState::empty(base.horizon());
    while state.remainder >= tail {
        let keep = stick_keep(concentration, rng);
        let atom = base.sample(rng);
        state.push_stick(keep, atom);
    }
    // Sticks whose weight underflowed carry no mass.
    let mut k = 0;
    while k < state.weights.len() {
        if state.weights[k] > 0.0 {
            k += 1;
        } else {
            state.weights.remove(k);
            state.atoms.remove(k);
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    EmpiricalBayes,
    FixedGamma,
    Hierarchical,
}

impl Strategy {
    pub fn updates_gamma(self) -> bool {
        matches!(self, Strategy::Hierarchical)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::EmpiricalBayes => "empirical",
            Strategy::FixedGamma => "fixed",
            Strategy::Hierarchical => "hierarchical",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "empirical" | "empirical-bayes" | "eb" => Ok(Strategy::EmpiricalBayes),
            "fixed" | "fixed-gamma" => Ok(Strategy::FixedGamma),
            "hierarchical" | "hb" => Ok(Strategy::Hierarchical),
            other => Err(Error::config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Gamma(shape, rate) hyperpriors on `A`, `γ` and the mass `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub a_concentration: f64,
    pub b_concentration: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub a_mass: f64,
    pub b_mass: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            a_concentration: 0.1,
            b_concentration: 0.1,
            a_gamma: 1.0,
            b_gamma: 1.0,
            a_mass: 0.1,
            b_mass: 0.1,
        }
    }
}

impl HyperPriors {
    /// Gamma hyperprior on `γ` with the given mean and standard deviation.
    pub fn with_gamma_moments(mut self, mean: f64, sd: f64) -> Result<Self> {
        if !(mean > 0.0 && sd > 0.0) {
            return Err(Error::config("gamma prior mean and sd must be positive"));
        }
        self.a_gamma = (mean / sd).powi(2);
        self.b_gamma = mean / (sd * sd);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub concentration: f64,
    pub gamma: f64,
    pub mass: f64,
    pub priors: HyperPriors,
    pub strategy: Strategy,
}

impl HyperState {
    pub const INITIAL_CONCENTRATION: f64 = 10.0;

    /// Initial state for a chain. Under the hierarchical strategy `γ` starts
    /// at its prior mean and `gamma` is ignored.
    pub fn initial(strategy: Strategy, gamma: f64, priors: HyperPriors) -> Result<Self> {
        let gamma = if strategy.updates_gamma() {
            priors.a_gamma / priors.b_gamma
        } else {
            gamma
        };
        let state = Self {
            concentration: Self::INITIAL_CONCENTRATION,
            gamma,
            mass: 1.0,
            priors,
            strategy,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.priors;
        let all = [
            self.concentration,
            self.gamma,
            self.mass,
            p.a_concentration,
            p.b_concentration,
            p.a_gamma,
            p.b_gamma,
            p.a_mass,
            p.b_mass,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::config(format!("hyperparameters must be positive: {self:?}")))
        }
    }
}
