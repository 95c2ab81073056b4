use dpmono_core::calibration::{psi, psi_inverse};
use dpmono_core::gibbs::update_weights;
use dpmono_core::harness::{dataset_seed, distance, summarize, Distance};
use dpmono_core::intensity::Intensity;
use dpmono_core::rng::stream;
use dpmono_core::{
    psi_transform, sample_prior, BaseFamily, BaseMeasure, Grid, GridFunction, HyperPriors, HyperState,
    PointProcessSample, Sampler, SamplerSettings, Strategy as ChainStrategy, TruthId, TruthIntensity,
};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = BaseFamily> {
    prop_oneof![Just(BaseFamily::TruncatedGamma), Just(BaseFamily::InvShiftedGamma)]
}

fn truth() -> impl Strategy<Value = TruthId> {
    prop_oneof![Just(TruthId::Lambda01), Just(TruthId::Lambda02), Just(TruthId::Lambda03)]
}

fn sorted_events(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..8_000_000, 1..max_len)
        .prop_map(|s| s.into_iter().map(|k| k as f64 * 1e-6).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truths_are_nonnegative_and_bar_is_monotone(id in truth(), t1 in 0.0..8.0f64, t2 in 0.0..8.0f64) {
        let truth = TruthIntensity::new(id);
        prop_assert!(truth.eval(t1).unwrap() >= 0.0);
        let bar = truth.normalized();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(bar.eval_bar(lo).unwrap() >= bar.eval_bar(hi).unwrap());
        let e = truth.e_theo();
        prop_assert!(e > 0.0 && e < 8.0);
    }

    #[test]
    fn prior_states_are_monotone_and_integrate_to_their_weight(
        conc in 0.1..20.0f64, rate in 0.01..10.0f64, fam in family(), seed in any::<u64>()
    ) {
        let base = BaseMeasure::new(fam, 2.0, rate, 8.0).unwrap();
        let state = sample_prior(conc, &base, 1e-6, &mut stream(seed)).unwrap();
        state.audit(None, None).unwrap();
        prop_assert!(state.weights.iter().sum::<f64>() >= 1.0 - 1e-6);
        let grid = Grid::new(0.0, 8.0, 10_000).unwrap();
        let f = state.bar_lambda_on(&grid);
        prop_assert!(f.is_non_increasing());
        // Each jump costs the trapezoid at most h·w/θ, so the error is below h·λ̄(0).
        let total: f64 = state.weights.iter().sum();
        prop_assert!((f.integral() - total).abs() <= 1e-4 + grid.step() * f.values[0]);
        let doubled = state.intensity_draw(2.0, &grid);
        prop_assert!(doubled.values.iter().zip(&f.values).all(|(d, v)| *d == 2.0 * v));
    }

    #[test]
    fn transport_sandwich_and_monotonicity(
        fam in family(), rate in 0.01..100.0f64, ratio in 1.0..100.0f64, t1 in 0.01..7.99f64, t2 in 0.01..7.99f64
    ) {
        let from = BaseMeasure::new(fam, 2.0, rate, 8.0).unwrap();
        let to = from.with_rate(rate * ratio).unwrap();
        let moved = psi_transform(t1, &from, &to).unwrap();
        let slack = 1e-9 * t1;
        prop_assert!(moved <= t1 + slack, "{moved} > {t1}");
        prop_assert!(moved >= t1 / ratio - slack, "{moved} < {}", t1 / ratio);
        if (t1 - t2).abs() > 1e-6 {
            let other = psi_transform(t2, &from, &to).unwrap();
            prop_assert!((moved < other) == (t1 < t2));
        }
    }

    #[test]
    fn quantile_inverts_cdf(fam in family(), rate in 0.01..10.0f64, theta in 0.05..7.95f64) {
        let base = BaseMeasure::new(fam, 2.0, rate, 8.0).unwrap();
        let p = base.cdf(theta).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assume!(p > 1e-12 && p < 1.0 - 1e-9);
        prop_assert!((base.quantile(p).unwrap() - theta).abs() < 1e-8 * theta.max(1.0));
    }

    #[test]
    fn psi_decreases_and_inverts(lg1 in -3.0..3.0f64, lg2 in -3.0..3.0f64) {
        let (g1, g2) = (10f64.powf(lg1), 10f64.powf(lg2));
        let (p1, p2) = (psi(g1, 2.0, 8.0).unwrap(), psi(g2, 2.0, 8.0).unwrap());
        prop_assert!(p1 > 0.0 && p1 < 4.0);
        if g1 < g2 * (1.0 - 1e-9) {
            prop_assert!(p1 > p2);
        }
        prop_assert!((psi_inverse(p1, 2.0, 8.0).unwrap() / g1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn weights_and_remainder_form_a_simplex(counts in prop::collection::vec(0usize..50, 1..20), conc in 0.01..50.0f64, seed in any::<u64>()) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let base = BaseMeasure::inv_shifted_gamma(2.0, 1.0, 8.0).unwrap();
        let mut state = sample_prior(1.0, &base, 1e-3, &mut stream(seed)).unwrap();
        let k = counts.len().min(state.k_star());
        state.allocations = counts.iter().take(k).enumerate().flat_map(|(j, &c)| std::iter::repeat_n(j, c)).collect();
        prop_assume!(!state.allocations.is_empty());
        let nonempty = state.k_nonempty();
        update_weights(&mut state, conc, &mut stream(seed ^ 1));
        state.audit(None, None).unwrap();
        prop_assert_eq!(state.k_star(), nonempty);
    }

    #[test]
    fn event_files_round_trip(events in sorted_events(50), n in 1u64..5000, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.txt");
        let sample = PointProcessSample { events, n, horizon: 8.0, seed, truth_id: Some(TruthId::Lambda03) };
        sample.save(&path).unwrap();
        prop_assert_eq!(PointProcessSample::load(&path).unwrap(), sample);
    }

    #[test]
    fn bands_are_ordered_and_distances_are_metrics(
        rows in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 16), 1..12),
        lo in 0.0..0.5f64, hi in 0.5..1.0f64
    ) {
        let grid = Grid::new(0.0, 8.0, 16).unwrap();
        let b = summarize(&grid, &rows, (lo, hi)).unwrap();
        for j in 0..16 {
            prop_assert!(b.low.values[j] <= b.median.values[j] && b.median.values[j] <= b.high.values[j]);
        }
        let f = GridFunction::new(grid, rows[0].clone()).unwrap();
        for w in [Distance::L1, Distance::L2, Distance::L2Squared, Distance::Sup] {
            let d = distance(&b.median, &f, w).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, distance(&f, &b.median, w).unwrap());
        }
    }

    #[test]
    fn dataset_seeds_are_pure(master in any::<u64>(), id in truth(), n in 1u64..10_000) {
        prop_assert_eq!(dataset_seed(master, id, n), dataset_seed(master, id, n));
    }

    #[test]
    fn gamma_prior_has_requested_moments(mean in 1e-3..10.0f64, sd in 1e-4..10.0f64) {
        let p = HyperPriors::default().with_gamma_moments(mean, sd).unwrap();
        prop_assert!((p.a_gamma / p.b_gamma / mean - 1.0).abs() < 1e-12);
        prop_assert!(((p.a_gamma / (p.b_gamma * p.b_gamma)).sqrt() / sd - 1.0).abs() < 1e-12);
        prop_assert!((p.a_gamma - (mean / sd).powi(2)).abs() <= 1e-12 * p.a_gamma);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sweeps_preserve_state_invariants(
        events in sorted_events(40),
        lg in -2.0..1.0f64,
        hierarchical in any::<bool>(),
        zeta in prop_oneof![Just(1.0), 0.05..1.0f64],
        seed in any::<u64>()
    ) {
        let gamma = 10f64.powf(lg);
        let strategy = if hierarchical { ChainStrategy::Hierarchical } else { ChainStrategy::EmpiricalBayes };
        let priors = HyperPriors::default().with_gamma_moments(gamma, gamma).unwrap();
        let hyper = HyperState::initial(strategy, gamma, priors).unwrap();
        let base = BaseMeasure::inv_shifted_gamma(2.0, gamma, 8.0).unwrap();
        let settings = SamplerSettings { zeta, ..SamplerSettings::default() };
        let mut rng = stream(seed);
        let n = events.len();
        let mut sampler = Sampler::new(events.clone(), n as f64, hyper, &base, settings, &mut rng).unwrap();
        let grid = Grid::new(0.0, 8.0, 257).unwrap();
        for _ in 0..15 {
            let stats = sampler.sweep(&mut rng).unwrap();
            let state = sampler.state();
            state.audit(Some(&events), None).unwrap();
            prop_assert_eq!(stats.k_nonempty, state.k_nonempty());
            prop_assert!(state.bar_lambda_on(&grid).is_non_increasing());
            let h = sampler.hyper();
            prop_assert!(h.concentration > 0.0 && h.gamma > 0.0 && h.mass > 0.0);
            if !hierarchical {
                prop_assert_eq!(h.gamma, gamma);
            }
        }
    }
}
