use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tiltlab::compiled::{compiled_counterpart, random_compiled_model};
use tiltlab::exec::Exec;
use tiltlab::protocol::{run_rounds_with, ProtocolConfig};
use tiltlab::qhe::Scheme;
use tiltlab::random::{random_binary_observable, seeded_rng};
use tiltlab::selftest::self_test_verdict;
use tiltlab::tilted::{acceptance_grid, honest_model, verify_sos, TiltedParams};

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sos_batch(c: &mut Criterion) {
    let grid = acceptance_grid();
    let mut g = c.benchmark_group("sos_identity_dim8");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map(16, |i| {
                    let mut rng = seeded_rng(1, i as u64);
                    let obs: Vec<_> = (0..4).map(|_| random_binary_observable(8, &mut rng)).collect();
                    grid.iter()
                        .map(|p| verify_sos(p, &obs[0], &obs[1], &obs[2], &obs[3]).unwrap())
                        .fold(0.0, f64::max)
                })
            })
        });
    }
    g.finish();
}

fn selftest_batch(c: &mut Criterion) {
    let p = TiltedParams::new(std::f64::consts::PI / 6.0, std::f64::consts::PI / 5.0).unwrap();
    let models: Vec<_> = (0..32).map(|s| random_compiled_model(8, s).unwrap()).collect();
    let mut g = c.benchmark_group("selftest_dim8");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(models.len(), |i| self_test_verdict(&models[i], &p, &Scheme::pad()).unwrap().pass))
        });
    }
    g.finish();
}

fn protocol_rounds(c: &mut Criterion) {
    let p = TiltedParams::new(std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4).unwrap();
    let model = compiled_counterpart(&honest_model(&p).partial_model().unwrap()).unwrap();
    let cfg = ProtocolConfig {
        functional: p.functional(),
        scheme: Scheme::pad(),
        rounds: 20_000,
        seed: 5,
    };
    let mut g = c.benchmark_group("protocol_20k_rounds");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_rounds_with(black_box(&cfg), &model, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sos_batch, selftest_batch, protocol_rounds);
criterion_main!(benches);
