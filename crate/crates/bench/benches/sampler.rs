use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use dpmono_bench::warm_sampler;
use dpmono_core::calibration::{psi, psi_inverse};
use dpmono_core::gibbs::sample_atom_conditional;
use dpmono_core::rng::stream;
use dpmono_core::{ArProposal, BaseMeasure, TruthId};

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    for n in [500u64, 2000] {
        let (sampler, rng) = warm_sampler(TruthId::Lambda02, n, 200);
        group.bench_with_input(BenchmarkId::new("lambda02", n), &n, |b, _| {
            b.iter_batched_ref(
                || (sampler.clone(), rng.clone()),
                |(s, r)| s.sweep(r).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn calibration(c: &mut Criterion) {
    c.bench_function("psi", |b| b.iter(|| psi(black_box(0.5), 2.0, 8.0).unwrap()));
    c.bench_function("psi_inverse", |b| b.iter(|| psi_inverse(black_box(2.16), 2.0, 8.0).unwrap()));
}

fn accept_reject(c: &mut Criterion) {
    let mut group = c.benchmark_group("atom_conditional");
    for (gamma, count, w_max) in [(0.16, 5usize, 3.0), (0.16, 200, 0.5), (1e-4, 400, 0.5)] {
        let base = BaseMeasure::inv_shifted_gamma(2.0, gamma, 8.0).unwrap();
        for proposal in [ArProposal::Adaptive, ArProposal::BaseMeasure] {
            if proposal == ArProposal::BaseMeasure && count > 100 {
                continue;
            }
            let id = format!("{proposal:?}/g={gamma}/n={count}/w={w_max}");
            let mut rng = stream(9);
            group.bench_function(id, |b| {
                b.iter(|| sample_atom_conditional(&base, w_max, count, proposal, 1_000_000, &mut rng).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweep, calibration, accept_reject);
criterion_main!(benches);
