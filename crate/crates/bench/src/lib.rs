//! Shared fixtures for the benchmarks.

use dpmono_core::rng::{stream, StreamRng};
use dpmono_core::{
    simulate_truth, BaseMeasure, HyperPriors, HyperState, Sampler, SamplerSettings, Strategy, TruthId,
};

/// A sampler on simulated `truth` data with `n` expected events, warmed up
/// for `warmup` sweeps.
pub fn warm_sampler(truth: TruthId, n: u64, warmup: usize) -> (Sampler, StreamRng) {
    let sample = simulate_truth(truth, n, 11).expect("simulation");
    let gamma = dpmono_core::gamma_hat(&sample, 2.0, sample.horizon).expect("calibration").gamma;
    let hyper = HyperState::initial(Strategy::EmpiricalBayes, gamma, HyperPriors::default()).expect("hyper");
    let base = BaseMeasure::inv_shifted_gamma(2.0, gamma, sample.horizon).expect("base");
    let mut rng = stream(3);
    let mut sampler =
        Sampler::new(sample.events, n as f64, hyper, &base, SamplerSettings::default(), &mut rng).expect("sampler");
    for _ in 0..warmup {
        sampler.sweep(&mut rng).expect("sweep");
    }
    (sampler, rng)
}
