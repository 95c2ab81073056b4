//! Joint-distribution test of the Gibbs sampler (Geweke, 2004).
//!
//! The marginal-conditional simulator draws `(A, γ, P)` from the prior and
//! then the events; the successive-conditional simulator alternates one Gibbs
//! sweep with regenerating the events from their conditional. Both target the
//! same joint law, so any functional has the same mean under both.

use rand::Rng;
use rand_distr::{Distribution, Gamma, OpenClosed01};
use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::error::{Error, Result};
use crate::gibbs::{Sampler, SamplerSettings};
use crate::mixture::{stick_keep, HyperPriors, HyperState, MixtureState, Strategy};
use crate::rng::{derive_seed, stream};
use crate::special::normal_cdf;
use crate::stats::{batch_means_se, mean, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub rounds: usize,
    pub events: usize,
    pub horizon: f64,
    pub shape: f64,
    pub priors: HyperPriors,
    pub seed: u64,
    pub batches: usize,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self {
            rounds: 10_000,
            events: 20,
            horizon: 8.0,
            shape: 2.0,
            priors: HyperPriors {
                a_concentration: 2.0,
                b_concentration: 1.0,
                a_gamma: 2.0,
                b_gamma: 2.0,
                ..HyperPriors::default()
            },
            seed: 2004,
            batches: 50,
        }
    }
}

/// The functionals compared by the test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GewekeDraw {
    pub k_nonempty: f64,
    pub concentration: f64,
    pub gamma: f64,
}

/// One exact draw of the full state and the events.
pub struct JointDraw {
    pub hyper: HyperState,
    pub state: MixtureState,
    pub events: Vec<f64>,
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng);
    g.max(f64::MIN_POSITIVE)
}

fn uniform_event<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    let v: f64 = OpenClosed01.sample(rng);
    theta * v
}

/// Prior draw of `(A, γ, P)` with sticks broken lazily as the allocations
/// need them, then `W_i ~ U(0, θ_{c_i})`.
pub fn joint_prior_draw<R: Rng + ?Sized>(config: &GewekeConfig, rng: &mut R) -> Result<JointDraw> {
    let p = config.priors;
    let mut hyper = HyperState::initial(Strategy::Hierarchical, 1.0, p)?;
    hyper.concentration = gamma_draw(p.a_concentration, p.b_concentration, rng);
    hyper.gamma = gamma_draw(p.a_gamma, p.b_gamma, rng);
    hyper.mass = gamma_draw(p.a_mass, p.b_mass, rng);
    let base = BaseMeasure::inv_shifted_gamma(config.shape, hyper.gamma, config.horizon)?;

    let mut state = MixtureState::empty(config.horizon);
    for _ in 0..config.events {
        let target: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = 0;
        loop {
            if k == state.weights.len() {
                if state.remainder <= 0.0 {
                    // Underflowed remainder: the last stick absorbs the target.
                    k -= 1;
                    break;
                }
                state.push_stick(stick_keep(hyper.concentration, rng), base.sample(rng));
            }
            acc += state.weights[k];
            if target < acc {
                break;
            }
            k += 1;
        }
        state.allocations.push(k);
    }
    let events = state
        .allocations
        .iter()
        .map(|&c| uniform_event(state.atoms[c], rng))
        .collect();
    Ok(JointDraw { hyper, state, events })
}

fn functionals(k_nonempty: usize, hyper: &HyperState) -> GewekeDraw {
    GewekeDraw {
        k_nonempty: k_nonempty as f64,
        concentration: hyper.concentration,
        gamma: hyper.gamma,
    }
}

/// Independent draws from the joint law.
pub fn marginal_conditional(config: &GewekeConfig) -> Result<Vec<GewekeDraw>> {
    let mut rng = stream(derive_seed(config.seed, &[1]));
    (0..config.rounds)
        .map(|_| {
            let d = joint_prior_draw(config, &mut rng)?;
            Ok(functionals(d.state.k_nonempty(), &d.hyper))
        })
        .collect()
}

/// Gibbs sweeps alternated with event regeneration.
pub fn successive_conditional(config: &GewekeConfig) -> Result<Vec<GewekeDraw>> {
    let mut rng = stream(derive_seed(config.seed, &[2]));
    let start = joint_prior_draw(config, &mut rng)?;
    let base = BaseMeasure::inv_shifted_gamma(config.shape, start.hyper.gamma, config.horizon)?;
    let mut sampler = Sampler::new(
        start.events.clone(),
        config.events as f64,
        start.hyper,
        &base,
        SamplerSettings::default(),
        &mut rng,
    )?;
    sampler.set_state(start.state)?;
    sampler.set_hyper(start.hyper)?;

    let mut draws = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let stats = sampler.sweep(&mut rng).map_err(|e| Error::Sweep {
            sweep: round + 1,
            source: Box::new(e),
        })?;
        let state = sampler.state();
        let events = state
            .allocations
            .iter()
            .map(|&c| uniform_event(state.atoms[c], &mut rng))
            .collect();
        sampler.set_events(events)?;
        draws.push(functionals(stats.k_nonempty, sampler.hyper()));
    }
    Ok(draws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTest {
    pub name: String,
    pub mean_marginal: f64,
    pub mean_successive: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub tests: Vec<MomentTest>,
}

impl GewekeReport {
    pub fn min_p_value(&self) -> f64 {
        self.tests.iter().map(|t| t.p_value).fold(1.0, f64::min)
    }
}

/// Two-sample z-test of equal means: i.i.d. standard error on the marginal
/// side, batch-means standard error on the autocorrelated side.
pub fn compare_means(name: &str, marginal: &[f64], successive: &[f64], batches: usize) -> MomentTest {
    let (m1, m2) = (mean(marginal), mean(successive));
    let se1 = (variance(marginal) / marginal.len() as f64).sqrt();
    let se2 = batch_means_se(successive, batches);
    let z = (m1 - m2) / (se1 * se1 + se2 * se2).sqrt();
    MomentTest {
        name: name.into(),
        mean_marginal: m1,
        mean_successive: m2,
        z,
        p_value: 2.0 * normal_cdf(-z.abs()),
    }
}

/// Compares first and second moments of `(K_nonempty, A, γ)`.
pub fn geweke_test(config: &GewekeConfig) -> Result<GewekeReport> {
    let mc = marginal_conditional(config)?;
    let sc = successive_conditional(config)?;
    type Pick = fn(&GewekeDraw) -> f64;
    let picks: [(&str, Pick); 3] = [
        ("K_nonempty", |d| d.k_nonempty),
        ("A", |d| d.concentration),
        ("gamma", |d| d.gamma),
    ];
    let mut tests = Vec::new();
    for (name, pick) in picks {
        let a: Vec<f64> = mc.iter().map(pick).collect();
        let b: Vec<f64> = sc.iter().map(pick).collect();
        tests.push(compare_means(name, &a, &b, config.batches));
        let a2: Vec<f64> = a.iter().map(|x| x * x).collect();
        let b2: Vec<f64> = b.iter().map(|x| x * x).collect();
        tests.push(compare_means(&format!("{name}^2"), &a2, &b2, config.batches));
    }
    Ok(GewekeReport { tests })
}
