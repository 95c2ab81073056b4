//! Slice-sampler Gibbs algorithm for the posterior of a Dirichlet-process
//! mixture of uniforms given the event times of a Poisson process.
//!
//! One sweep runs, in order:
//!
//! 1. slice variables `u_i ~ U(0, min(w_{c_i}, ζ))`;
//! 2. stick extension until the remainder falls below `u* = min u_i`, with
//!    fresh atoms from the base measure for the new (empty) clusters;
//! 3. allocations `c_i`, relabelled by order of appearance;
//! 4. exact accept–reject draws of the non-empty atoms;
//! 5. the concentration `A` by the auxiliary-variable scheme of West (1992);
//! 6. the base rate `γ` from its conjugate Gamma conditional (hierarchical
//!    strategy only), using every represented atom;
//! 7. the non-empty weights and the remainder from `Dir(n_1, …, n_K, A)`;
//!    empty clusters are dropped here;
//! 8. the total mass `M ~ Gamma(a_M + N(T), b_M + n)`.
//!
//! `A` is updated with the weights integrated out, so it is placed directly
//! before the weight draw: the pair forms one blocked update of `(A, w)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, OpenClosed01};
use serde::{Deserialize, Serialize};

use crate::base_measure::{BaseFamily, BaseMeasure};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mixture::{stick_keep, HyperState, MixtureState};
use crate::rng::stream;

/// Proposal cap for one accept–reject atom draw.
pub const DEFAULT_MAX_AR_PROPOSALS: u64 = 1_000_000;

/// Envelope used by the accept–reject atom update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArProposal {
    /// Base measure restricted to `[w_max, T]`, accepted with
    /// probability `(w_max / θ)^{n_k}`.
    BaseMeasure,
    /// Per draw, whichever has the larger acceptance rate: the base-measure
    /// envelope, or a piecewise envelope `c_j θ^{-n_k}` on `[w_max, T]` with
    /// `c_j` the supremum of the base density on piece `j`.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub zeta: f64,
    pub seed: u64,
    pub record_grid: Grid,
    pub proposal: ArProposal,
    pub max_ar_proposals: u64,
    /// Check state invariants after every sweep (always on in debug builds).
    pub audit: bool,
}

impl ChainConfig {
    pub fn new(n_iter: usize, burn_in: usize, seed: u64, record_grid: Grid) -> Self {
        Self {
            n_iter,
            burn_in,
            thin: 1,
            zeta: 1.0,
            seed,
            record_grid,
            proposal: ArProposal::Adaptive,
            max_ar_proposals: DEFAULT_MAX_AR_PROPOSALS,
            audit: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in > self.n_iter {
            return Err(Error::config(format!(
                "burn-in {} exceeds iteration count {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::config(format!("zeta {} outside (0, 1]", self.zeta)));
        }
        if self.max_ar_proposals == 0 {
            return Err(Error::config("max_ar_proposals must be positive"));
        }
        Ok(())
    }

    fn records(&self, sweep: usize) -> bool {
        sweep > self.burn_in && (sweep - self.burn_in).is_multiple_of(self.thin)
    }
}

/// Accept–reject bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl ArStats {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    fn absorb(&mut self, other: ArStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
    }
}

// ---------------------------------------------------------------------------
// Single conditional updates

/// Step 1: `u_i ~ U(0, min(w_{c_i}, ζ))`.
pub fn update_slices<R: Rng + ?Sized>(state: &mut MixtureState, zeta: f64, rng: &mut R) {
    let MixtureState {
        weights,
        allocations,
        slices,
        ..
    } = state;
    slices.clear();
    slices.extend(allocations.iter().map(|&c| {
        let xi = weights[c].min(zeta);
        // U(0, 1] scaled, then nudged off the upper end.
        let v: f64 = OpenClosed01.sample(rng);
        let u = xi * (1.0 - v);
        if u > 0.0 {
            u
        } else {
            xi * f64::EPSILON
        }
    }));
}

/// Steps 2 and 3: break sticks from the remainder until it drops below
/// `u* = min u_i`; every new stick gets an atom from `base`.
pub fn extend_sticks<R: Rng + ?Sized>(
    state: &mut MixtureState,
    concentration: f64,
    base: &BaseMeasure,
    rng: &mut R,
) -> Result<()> {
    let u_star = state.slices.iter().copied().fold(f64::INFINITY, f64::min);
    if state.slices.is_empty() {
        return Ok(());
    }
    if !(u_star >= 1e-300) {
        return Err(Error::DegenerateSlice(u_star));
    }
    while state.remainder >= u_star {
        let keep = stick_keep(concentration, rng);
        let atom = base.sample(rng);
        state.push_stick(keep, atom);
    }
    Ok(())
}

/// Draws an index from unnormalized non-negative weights.
fn draw_index<R: Rng + ?Sized>(weights: &[(usize, f64)], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    for &(k, w) in weights {
        if target < w {
            return Some(k);
        }
        target -= w;
    }
    weights.iter().rev().find(|(_, w)| *w > 0.0).map(|&(k, _)| k)
}

/// Step 3 with an arbitrary kernel `kernel(i, θ)` (density of observation
/// `i` under atom `θ`, zero when infeasible). Clusters are relabelled by
/// order of appearance, empty ones kept at the tail in their previous order.
pub fn allocate_with_kernel<R, K>(
    state: &mut MixtureState,
    n_obs: usize,
    zeta: f64,
    observation: impl Fn(usize) -> f64,
    kernel: K,
    rng: &mut R,
) -> Result<()>
where
    R: Rng + ?Sized,
    K: Fn(usize, f64) -> f64,
{
    let k_star = state.weights.len();
    let xi: Vec<f64> = state.weights.iter().map(|&w| w.min(zeta)).collect();
    // Clusters by decreasing slice threshold: a slice u_i only admits a prefix.
    let mut order: Vec<usize> = (0..k_star).collect();
    order.sort_by(|&i, &j| xi[j].total_cmp(&xi[i]));

    let mut candidates: Vec<(usize, f64)> = Vec::with_capacity(k_star);
    for i in 0..n_obs {
        let u = state.slices[i];
        candidates.clear();
        for &k in &order {
            if !(u < xi[k]) {
                break;
            }
            let h = kernel(i, state.atoms[k]);
            if h > 0.0 {
                candidates.push((k, h * state.weights[k] / xi[k]));
            }
        }
        match draw_index(&candidates, rng) {
            Some(k) => state.allocations[i] = k,
            None => {
                return Err(Error::EmptySupport {
                    event: i,
                    time: observation(i),
                })
            }
        }
    }
    relabel_by_appearance(state);
    Ok(())
}

fn relabel_by_appearance(state: &mut MixtureState) {
    let k_star = state.weights.len();
    let mut new_label = vec![usize::MAX; k_star];
    let mut order = Vec::with_capacity(k_star);
    for &c in &state.allocations {
        if new_label[c] == usize::MAX {
            new_label[c] = order.len();
            order.push(c);
        }
    }
    for (k, label) in new_label.iter_mut().enumerate() {
        if *label == usize::MAX {
            *label = order.len();
            order.push(k);
        }
    }
    state.weights = order.iter().map(|&k| state.weights[k]).collect();
    state.atoms = order.iter().map(|&k| state.atoms[k]).collect();
    for c in &mut state.allocations {
        *c = new_label[*c];
    }
}

/// Uniform kernel `θ⁻¹ 1{w ≤ θ}`.
pub fn uniform_kernel(event: f64, theta: f64) -> f64 {
    if event <= theta {
        1.0 / theta
    } else {
        0.0
    }
}

/// Step 3 for the uniform-kernel mixture.
pub fn update_allocations<R: Rng + ?Sized>(
    state: &mut MixtureState,
    events: &[f64],
    zeta: f64,
    rng: &mut R,
) -> Result<()> {
    allocate_with_kernel(
        state,
        events.len(),
        zeta,
        |i| events[i],
        |i, theta| uniform_kernel(events[i], theta),
        rng,
    )
}

/// Allocation probabilities of one event, normalized, in cluster order.
/// Exposed for checking the allocation rule.
pub fn allocation_probabilities(state: &MixtureState, event: f64, slice: f64, zeta: f64) -> Vec<f64> {
    let raw: Vec<f64> = state
        .weights
        .iter()
        .zip(&state.atoms)
        .map(|(&w, &theta)| {
            let xi = w.min(zeta);
            if slice < xi {
                uniform_kernel(event, theta) * w / xi
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

// ln ∫_{x0}^{x1} θ^{-n} dθ
fn ln_power_integral(x0: f64, x1: f64, count: usize) -> f64 {
    if count == 1 {
        (x1 / x0).ln().ln()
    } else {
        let m = (count - 1) as f64;
        -m * x0.ln() + (-(m * (x0 / x1).ln()).exp()).ln_1p() - m.ln()
    }
}

// Inverse CDF of the density ∝ θ^{-n} on [x0, x1] at level v.
fn power_law_quantile(x0: f64, x1: f64, count: usize, v: f64) -> f64 {
    let theta = if count == 1 {
        x0 * (x1 / x0).powf(v)
    } else {
        let m = (count - 1) as f64;
        let q = (m * (x0 / x1).ln()).exp();
        x0 * (1.0 - v + v * q).powf(-1.0 / m)
    };
    theta.clamp(x0, x1)
}

const ENVELOPE_PIECES: usize = 24;

/// Envelope `c_j θ^{-n}` on a partition of `[L, T]`, with `c_j` the supremum
/// of the (unimodal) base density over piece `j`.
struct PiecewiseEnvelope {
    edges: Vec<f64>,
    ln_bound: Vec<f64>,
    cumulative: Vec<f64>,
    ln_total: f64,
    count: usize,
}

impl PiecewiseEnvelope {
    fn new(base: &BaseMeasure, lower: f64, count: usize) -> Self {
        let horizon = base.horizon();
        let mode = base.mode_above(lower);
        let mut edges: Vec<f64> = (0..=ENVELOPE_PIECES)
            .flat_map(|j| {
                let q = j as f64 / ENVELOPE_PIECES as f64;
                [power_law_quantile(lower, horizon, count, q), lower * (horizon / lower).powf(q)]
            })
            .chain([lower, mode, horizon])
            .filter(|&x| x >= lower && x <= horizon)
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut ln_bound = Vec::with_capacity(edges.len());
        let mut ln_weight = Vec::with_capacity(edges.len());
        for w in edges.windows(2) {
            let peak = mode.clamp(w[0], w[1]);
            let b = base.ln_density(peak);
            ln_bound.push(b);
            ln_weight.push(b + ln_power_integral(w[0], w[1], count));
        }
        let top = ln_weight.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        let cumulative: Vec<f64> = ln_weight
            .iter()
            .map(|lw| {
                acc += (lw - top).exp();
                acc
            })
            .collect();
        let ln_total = top + acc.ln();
        let cumulative = cumulative.iter().map(|c| c / acc).collect();
        Self {
            edges,
            ln_bound,
            cumulative,
            ln_total,
            count,
        }
    }

    /// A proposal and its log acceptance probability.
    fn propose<R: Rng + ?Sized>(&self, base: &BaseMeasure, rng: &mut R) -> (f64, f64) {
        let pick: f64 = rng.random();
        let j = self
            .cumulative
            .partition_point(|&c| c <= pick)
            .min(self.ln_bound.len() - 1);
        let theta = power_law_quantile(self.edges[j], self.edges[j + 1], self.count, rng.random());
        (theta, base.ln_density(theta) - self.ln_bound[j])
    }
}

/// Exact draw from `p(θ) ∝ g(θ) θ^{-count}` on `[w_max, T]` by accept–reject.
///
/// Returns the draw and the number of proposals used.
pub fn sample_atom_conditional<R: Rng + ?Sized>(
    base: &BaseMeasure,
    w_max: f64,
    count: usize,
    proposal: ArProposal,
    max_proposals: u64,
    rng: &mut R,
) -> Result<(f64, u64)> {
    let horizon = base.horizon();
    if w_max >= horizon {
        return Ok((horizon, 0));
    }
    if !(w_max > 0.0) {
        return Err(Error::domain(format!(
            "cluster maximum {w_max} must be positive for the uniform kernel"
        )));
    }
    if count == 0 {
        return Ok((base.sample_above(w_max, rng), 1));
    }
    let n = count as f64;
    let ln_w_max = w_max.ln();
    // Unnormalized envelope masses; acceptance rates are inversely proportional.
    let ln_base_envelope = base.ln_mass_above(w_max) - n * ln_w_max;
    let envelope = match proposal {
        ArProposal::BaseMeasure => None,
        ArProposal::Adaptive => {
            let env = PiecewiseEnvelope::new(base, w_max, count);
            (env.ln_total < ln_base_envelope).then_some(env)
        }
    };
    if envelope.is_none() && ln_base_envelope == f64::NEG_INFINITY {
        return Err(Error::domain(format!(
            "base measure puts no mass above {w_max}"
        )));
    }
    for tries in 1..=max_proposals {
        let (theta, ln_accept) = match &envelope {
            Some(env) => env.propose(base, rng),
            None => {
                let theta = base.sample_above(w_max, rng);
                (theta, n * (ln_w_max - theta.ln()))
            }
        };
        let v: f64 = OpenClosed01.sample(rng);
        if v.ln() <= ln_accept {
            return Ok((theta, tries));
        }
    }
    Err(Error::ArExhausted {
        proposals: max_proposals,
        count,
        w_max,
    })
}

/// Step 4: redraw the atoms of non-empty clusters.
pub fn update_nonempty_atoms<R: Rng + ?Sized>(
    state: &mut MixtureState,
    events: &[f64],
    base: &BaseMeasure,
    proposal: ArProposal,
    max_proposals: u64,
    rng: &mut R,
) -> Result<ArStats> {
    let k_star = state.weights.len();
    let mut w_max = vec![0.0f64; k_star];
    let mut counts = vec![0usize; k_star];
    for (&c, &w) in state.allocations.iter().zip(events) {
        counts[c] += 1;
        w_max[c] = w_max[c].max(w);
    }
    let mut stats = ArStats::default();
    for k in 0..k_star {
        if counts[k] == 0 {
            continue;
        }
        let (theta, tries) = sample_atom_conditional(base, w_max[k], counts[k], proposal, max_proposals, rng)?;
        state.atoms[k] = theta;
        stats.absorb(ArStats {
            proposals: tries,
            accepted: u64::from(tries > 0),
        });
    }
    Ok(stats)
}

/// Step 7: `(w_1, …, w_K, r) ~ Dir(n_1, …, n_K, A)` over non-empty clusters;
/// empty clusters are removed.
pub fn update_weights<R: Rng + ?Sized>(state: &mut MixtureState, concentration: f64, rng: &mut R) {
    let counts = state.counts();
    let keep: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] > 0).collect();
    let mut label = vec![usize::MAX; counts.len()];
    for (new, &old) in keep.iter().enumerate() {
        label[old] = new;
    }
    let draws: Vec<f64> = keep
        .iter()
        .map(|&k| {
            Gamma::new(counts[k] as f64, 1.0)
                .expect("positive count")
                .sample(rng)
        })
        .collect();
    let rest: f64 = Gamma::new(concentration, 1.0).expect("positive concentration").sample(rng);
    let total: f64 = draws.iter().sum::<f64>() + rest;
    state.weights = draws.iter().map(|g| g / total).collect();
    state.remainder = rest / total;
    state.atoms = keep.iter().map(|&k| state.atoms[k]).collect();
    for c in &mut state.allocations {
        *c = label[*c];
    }
}

/// Mixing probability `π_x` of West's Gamma mixture for `A | x, K`.
pub fn west_mixture_weight(a: f64, b: f64, k_nonempty: usize, n_obs: usize, x: f64) -> f64 {
    let odds = (a + k_nonempty as f64 - 1.0) / (n_obs as f64 * (b - x.ln()));
    odds / (1.0 + odds)
}

/// Step 5: one draw of `A` given the number of non-empty clusters.
pub fn update_concentration<R: Rng + ?Sized>(
    concentration: f64,
    k_nonempty: usize,
    n_obs: usize,
    a: f64,
    b: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(n_obs >= 1 && k_nonempty >= 1);
    let x: f64 = Beta::new(concentration + 1.0, n_obs as f64)
        .expect("positive Beta parameters")
        .sample(rng);
    let x = x.max(f64::MIN_POSITIVE);
    let pi = west_mixture_weight(a, b, k_nonempty, n_obs, x);
    let rate = b - x.ln();
    let shape = if rng.random::<f64>() < pi {
        a + k_nonempty as f64
    } else {
        a + k_nonempty as f64 - 1.0
    };
    let draw: f64 = Gamma::new(shape, 1.0 / rate).expect("positive shape").sample(rng);
    draw.max(f64::MIN_POSITIVE)
}

/// Step 6: `γ ~ Gamma(a_γ + a K*, b_γ + Σ_k (1/θ_k - 1/T)^{-1})`.
pub fn update_gamma<R: Rng + ?Sized>(
    atoms: &[f64],
    base: &BaseMeasure,
    a_gamma: f64,
    b_gamma: f64,
    rng: &mut R,
) -> Result<f64> {
    if base.family() != BaseFamily::InvShiftedGamma {
        return Err(Error::UnsupportedStrategy(
            "the rate of the truncated-gamma base measure has no conjugate update".into(),
        ));
    }
    let mut rate = b_gamma;
    for &theta in atoms {
        let u = base.shifted_inverse(theta);
        if !u.is_finite() {
            return Err(Error::domain(format!(
                "atom {theta} at the horizon makes the gamma rate infinite"
            )));
        }
        rate += u;
    }
    let shape = a_gamma + base.shape() * atoms.len() as f64;
    let draw: f64 = Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng);
    Ok(draw.max(f64::MIN_POSITIVE))
}

/// Step 8: `M ~ Gamma(a_M + N(T), b_M + n)`.
pub fn update_mass<R: Rng + ?Sized>(n_obs: usize, n_scale: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    Gamma::new(a + n_obs as f64, 1.0 / (b + n_scale))
        .expect("positive parameters")
        .sample(rng)
}

// ---------------------------------------------------------------------------
// Chain orchestration

/// Per-sweep summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub k_star: usize,
    pub k_nonempty: usize,
    pub ar: ArStats,
}

/// Sampler settings that do not concern recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSettings {
    pub zeta: f64,
    pub proposal: ArProposal,
    pub max_ar_proposals: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            proposal: ArProposal::Adaptive,
            max_ar_proposals: DEFAULT_MAX_AR_PROPOSALS,
        }
    }
}

impl From<&ChainConfig> for SamplerSettings {
    fn from(c: &ChainConfig) -> Self {
        Self {
            zeta: c.zeta,
            proposal: c.proposal,
            max_ar_proposals: c.max_ar_proposals,
        }
    }
}

/// Gibbs sampler state for one chain.
#[derive(Debug, Clone)]
pub struct Sampler {
    events: Vec<f64>,
    n_scale: f64,
    state: MixtureState,
    hyper: HyperState,
    base: BaseMeasure,
    settings: SamplerSettings,
}

impl Sampler {
    /// Starts a chain: one cluster per event, atoms drawn from their
    /// single-event conditional, weights from `Dir(1, …, 1, A)`.
    ///
    /// `base` fixes the family, shape and horizon; its rate is replaced by
    /// `hyper.gamma`.
    pub fn new<R: Rng + ?Sized>(
        events: Vec<f64>,
        n_scale: f64,
        hyper: HyperState,
        base: &BaseMeasure,
        settings: SamplerSettings,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        if events.is_empty() {
            return Err(Error::config("the sampler needs at least one event"));
        }
        let horizon = base.horizon();
        if let Some(bad) = events.iter().find(|&&w| !(w > 0.0 && w <= horizon)) {
            return Err(Error::domain(format!(
                "event {bad} outside (0, {horizon}]; the uniform kernel gives zero likelihood at 0"
            )));
        }
        if hyper.strategy.updates_gamma() && base.family() != BaseFamily::InvShiftedGamma {
            return Err(Error::UnsupportedStrategy(
                "hierarchical gamma needs the inverse-shifted-gamma base measure".into(),
            ));
        }
        let base = base.with_rate(hyper.gamma)?;
        let mut state = MixtureState::empty(horizon);
        for &w in &events {
            let (theta, _) =
                sample_atom_conditional(&base, w, 1, settings.proposal, settings.max_ar_proposals, rng)?;
            state.atoms.push(theta);
            state.weights.push(0.0);
        }
        state.allocations = (0..events.len()).collect();
        update_weights(&mut state, hyper.concentration, rng);
        Ok(Self {
            events,
            n_scale,
            state,
            hyper,
            base,
            settings,
        })
    }

    pub fn state(&self) -> &MixtureState {
        &self.state
    }

    pub fn hyper(&self) -> &HyperState {
        &self.hyper
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    /// Replaces the observations, keeping every allocation feasible.
    pub fn set_events(&mut self, events: Vec<f64>) -> Result<()> {
        if events.len() != self.events.len() {
            return Err(Error::config("event count must not change"));
        }
        for (&c, &w) in self.state.allocations.iter().zip(&events) {
            if !(w > 0.0 && w <= self.state.atoms[c]) {
                return Err(Error::domain(format!("event {w} infeasible for its cluster")));
            }
        }
        self.events = events;
        Ok(())
    }

    /// Overrides the hyperparameters (e.g. to restart from a prior draw).
    pub fn set_hyper(&mut self, hyper: HyperState) -> Result<()> {
        hyper.validate()?;
        self.base = self.base.with_rate(hyper.gamma)?;
        self.hyper = hyper;
        Ok(())
    }

    /// Overrides the mixture state; allocations must be feasible.
    pub fn set_state(&mut self, state: MixtureState) -> Result<()> {
        state.audit(Some(&self.events), None)?;
        self.state = state;
        Ok(())
    }

    /// One full Gibbs sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SweepStats> {
        let zeta = self.settings.zeta;
        let n_obs = self.events.len();
        let priors = self.hyper.priors;

        update_slices(&mut self.state, zeta, rng);
        extend_sticks(&mut self.state, self.hyper.concentration, &self.base, rng)?;
        let k_star = self.state.k_star();
        update_allocations(&mut self.state, &self.events, zeta, rng)?;
        if cfg!(debug_assertions) {
            self.state.audit(Some(&self.events), Some(zeta))?;
        }
        let ar = update_nonempty_atoms(
            &mut self.state,
            &self.events,
            &self.base,
            self.settings.proposal,
            self.settings.max_ar_proposals,
            rng,
        )?;
        let k_nonempty = self.state.k_nonempty();
        self.hyper.concentration = update_concentration(
            self.hyper.concentration,
            k_nonempty,
            n_obs,
            priors.a_concentration,
            priors.b_concentration,
            rng,
        );
        if self.hyper.strategy.updates_gamma() {
            let gamma = update_gamma(&self.state.atoms, &self.base, priors.a_gamma, priors.b_gamma, rng)?;
            self.hyper.gamma = gamma;
            self.base = self.base.with_rate(gamma)?;
        }
        update_weights(&mut self.state, self.hyper.concentration, rng);
        self.hyper.mass = update_mass(n_obs, self.n_scale, priors.a_mass, priors.b_mass, rng);
        Ok(SweepStats {
            k_star,
            k_nonempty,
            ar,
        })
    }
}

/// One recorded sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sweep: usize,
    pub k_star: usize,
    pub k_nonempty: usize,
    pub concentration: f64,
    pub gamma: f64,
    pub mass: f64,
    pub ar_accept_rate: f64,
}

/// Recorded sweeps of a chain: scalar summaries plus `λ̄` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub grid: Grid,
    pub rows: Vec<TraceRow>,
    pub bar_lambda: Vec<Vec<f64>>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "sweep,K_star,K_nonempty,A,gamma,M,ar_accept_rate")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.sweep, r.k_star, r.k_nonempty, r.concentration, r.gamma, r.mass, r.ar_accept_rate
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per recorded sweep; the header lists the grid times.
    pub fn write_grid_csv(&self, path: &Path) -> Result<()> {
        write_grid_matrix(path, &self.grid, self.rows.iter().map(|r| r.sweep), &self.bar_lambda)
    }

    pub fn mean_mass(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.mass))
    }

    pub fn mean_k_nonempty(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.k_nonempty as f64))
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub(crate) fn write_grid_matrix(
    path: &Path,
    grid: &Grid,
    sweeps: impl Iterator<Item = usize>,
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "sweep")?;
    for t in grid.points() {
        write!(out, ",{t}")?;
    }
    writeln!(out)?;
    for (sweep, row) in sweeps.zip(rows) {
        write!(out, "{sweep}")?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Runs a chain on `events` (observed with exposure `n_scale`).
pub fn run_chain(
    events: &[f64],
    n_scale: f64,
    config: &ChainConfig,
    hyper_init: HyperState,
    base_init: &BaseMeasure,
) -> Result<ChainTrace> {
    config.validate()?;
    let mut rng = stream(config.seed);
    let mut sampler = Sampler::new(
        events.to_vec(),
        n_scale,
        hyper_init,
        base_init,
        SamplerSettings::from(config),
        &mut rng,
    )?;
    let mut trace = ChainTrace {
        grid: config.record_grid,
        rows: Vec::new(),
        bar_lambda: Vec::new(),
    };
    for sweep in 1..=config.n_iter {
        let stats = sampler.sweep(&mut rng).map_err(|e| Error::Sweep {
            sweep,
            source: Box::new(e),
        })?;
        if config.audit || cfg!(debug_assertions) {
            sampler
                .state
                .audit(Some(&sampler.events), None)
                .map_err(|e| Error::Sweep {
                    sweep,
                    source: Box::new(e),
                })?;
        }
        if config.records(sweep) {
            let h = sampler.hyper;
            trace.rows.push(TraceRow {
                sweep,
                k_star: stats.k_star,
                k_nonempty: stats.k_nonempty,
                concentration: h.concentration,
                gamma: h.gamma,
                mass: h.mass,
                ar_accept_rate: stats.ar.rate(),
            });
            trace
                .bar_lambda
                .push(sampler.state.bar_lambda_on(&config.record_grid).values);
        }
    }
    Ok(trace)
}
