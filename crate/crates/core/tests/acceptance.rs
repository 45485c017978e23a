//! End-to-end acceptance suite. Runs every check in sequence so the timed
//! ones are not slowed by neighbours, prints one PASS/FAIL line each and
//! fails if any of them failed.

use std::f64::consts::{FRAC_PI_4, SQRT_2};
use std::io::Write;
use std::time::{Duration, Instant};

use tiltlab::bell::BellFunctional;
use tiltlab::compiled::{
    cheat_classical, compiled_counterpart, near_optimal_model, perturb_honest, random_compiled_model,
    random_sequential_model, CompiledModel, Perturbation,
};
use tiltlab::dilation::{projectivize_model, random_mixed_model};
use tiltlab::exec::par_map;
use tiltlab::linalg::{self, PovmFamily};
use tiltlab::monomial::random_polynomial;
use tiltlab::protocol::{estimate_value, replay, run_rounds, ProtocolConfig, Transcript};
use tiltlab::pseudo::PseudoContext;
use tiltlab::qhe::Scheme;
use tiltlab::random::{random_binary_observable, seeded_rng};
use tiltlab::selftest::self_test_verdict;
use tiltlab::tilted::{acceptance_grid, honest_model, tilt_alpha, tilted_t, verify_sos, TiltedParams};

use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn honest_compiled(p: &TiltedParams) -> CompiledModel {
    compiled_counterpart(&honest_model(p).partial_model().unwrap()).unwrap()
}

fn sos_identity() -> Outcome {
    const TUPLES: u64 = 100;
    const DIMS: [usize; 3] = [2, 4, 8];
    let grid = acceptance_grid();
    let start = Instant::now();
    let worst = par_map(TUPLES as usize, |i| {
        let mut rng = seeded_rng(0xA11CE, i as u64);
        let da = DIMS[rng.random_range(0..3)];
        let db = DIMS[rng.random_range(0..3)];
        let a0 = random_binary_observable(da, &mut rng);
        let a1 = random_binary_observable(da, &mut rng);
        let b0 = random_binary_observable(db, &mut rng);
        let b1 = random_binary_observable(db, &mut rng);
        grid.iter()
            .map(|p| verify_sos(p, &a0, &a1, &b0, &b1).unwrap())
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(30),
        format!("{TUPLES} tuples x {} points, max residual {worst:.2e}, {elapsed:.2?}", grid.len()),
    )
}

fn honest_optimality() -> Outcome {
    let mut worst_value: f64 = 0.0;
    let mut worst_compiled: f64 = 0.0;
    for p in acceptance_grid() {
        let f = p.functional();
        let v = honest_model(&p).value(&f).unwrap();
        worst_value = worst_value.max((v - 2.0 * (1.0 + p.tau_sq())).abs());
        let c = honest_compiled(&p).value(&f, &Scheme::pad()).unwrap();
        worst_compiled = worst_compiled.max((c - v).abs());
    }
    outcome(
        worst_value <= 1e-9 && worst_compiled <= 1e-10,
        format!("value gap {worst_value:.2e}, compiled gap {worst_compiled:.2e}"),
    )
}

fn adversarial_bound() -> Outcome {
    const PER_POINT: usize = 500;
    let grid = acceptance_grid();
    let results = par_map(grid.len() * PER_POINT, |i| {
        let p = &grid[i / PER_POINT];
        let seed = i as u64;
        let model = if i % 2 == 0 {
            random_compiled_model(2 + i % 15, seed).unwrap()
        } else {
            let mut rng = seeded_rng(seed, 9);
            let da = rng.random_range(1..=4);
            let db = rng.random_range(1..=16 / da);
            random_sequential_model(da, db, seed).unwrap()
        };
        let excess = model.value(&p.functional(), &Scheme::pad()).unwrap() - p.eta_q();
        let cert = PseudoContext::new(model, Scheme::pad()).certify_bound(p).unwrap();
        (excess, cert.decomposition_residual())
    });
    let max_excess = results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let max_decomp = results.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        max_excess <= 1e-9 && max_decomp <= 1e-9,
        format!(
            "{} models, max value - eta {max_excess:.3e}, max decomposition residual {max_decomp:.2e}",
            results.len()
        ),
    )
}

fn extended_sos() -> Outcome {
    const PAIRS: usize = 300;
    let results = par_map(PAIRS, |i| {
        let mut rng = seeded_rng(0xB0B, i as u64);
        let dim = rng.random_range(1..=8);
        let ctx = PseudoContext::new(random_compiled_model(dim, i as u64).unwrap(), Scheme::pad());
        let x = rng.random_range(0..2u8);
        let poly = random_polynomial(x, 6, 6, &mut rng);
        let fast = ctx.eval_square(&poly).unwrap();
        let direct = ctx.eval_square_direct(&poly).unwrap();
        (fast, (fast - direct).abs())
    });
    let min_square = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_gap = results.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        min_square >= -1e-9 && max_gap <= 1e-9,
        format!("{PAIRS} pairs, min square {min_square:.2e}, max oracle gap {max_gap:.2e}"),
    )
}

fn selftest_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in acceptance_grid() {
        let report = self_test_verdict(&honest_compiled(&p), &p, &Scheme::pad()).unwrap();
        let claims = report.claims.iter().map(|c| c.residual);
        let lhs = [report.st1.lhs, report.st2.lhs]
            .into_iter()
            .chain(report.meas.iter().map(|m| m.check.lhs));
        worst = claims.chain(lhs).fold(worst, f64::max);
    }
    outcome(worst <= 1e-9, format!("max residual {worst:.2e}"))
}

fn robustness_ledger() -> Outcome {
    const PER_POINT: usize = 100;
    let deltas: Vec<f64> = (1..=10).map(|k| k as f64 / 100.0).collect();
    let grid = acceptance_grid();
    let cells = grid.len() * deltas.len();
    let results = par_map(cells * PER_POINT, |i| {
        let p = &grid[i / PER_POINT / deltas.len()];
        let delta = deltas[i / PER_POINT % deltas.len()];
        let seed = i as u64;
        let (model, _) = if i % 2 == 0 {
            perturb_honest(
                p,
                Perturbation {
                    delta,
                    seed,
                    rotate_states: true,
                },
            )
            .unwrap()
        } else {
            near_optimal_model(p, delta, 1 + (i / 2) % 4, seed).unwrap()
        };
        let r = self_test_verdict(&model, p, &Scheme::pad()).unwrap();
        r.claims
            .iter()
            .map(|c| c.bound - c.residual)
            .chain([&r.st1, &r.st2].map(|c| c.bound - c.lhs))
            .chain(r.meas.iter().map(|m| m.check.bound - m.check.lhs))
            .fold(f64::INFINITY, f64::min)
    });
    let violations = results.iter().filter(|&&s| s < -1e-9).count();
    let min_slack = results.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        violations == 0,
        format!("{} models, {violations} violations, min slack {min_slack:.3e}", results.len()),
    )
}

fn classical_values() -> Outcome {
    let chsh = BellFunctional::chsh();
    let c = chsh.classical_value().unwrap().value;
    let s = TiltedParams::new(FRAC_PI_4, FRAC_PI_4).unwrap().functional().classical_value().unwrap().value;
    let mut t_gap: f64 = 0.0;
    for theta in [std::f64::consts::PI / 12.0, std::f64::consts::PI / 8.0, std::f64::consts::PI / 6.0, FRAC_PI_4] {
        let t = tilted_t(theta).unwrap().classical_value().unwrap().value;
        t_gap = t_gap.max((t - 2.0 - tilt_alpha(theta).unwrap()).abs());
    }
    let (leaky, _) = cheat_classical(&chsh, &Scheme::Leaky).unwrap();
    let (pad, _) = cheat_classical(&chsh, &Scheme::pad()).unwrap();
    let pass = c == 2.0 && (s - 2.0 * SQRT_2).abs() <= 1e-12 && t_gap <= 1e-12 && leaky == 4.0 && pad <= 2.0 + 1e-12;
    outcome(
        pass,
        format!("CHSH {c}, S {s:.12}, T gap {t_gap:.1e}, leaky cheat {leaky}, pad cheat {pad}"),
    )
}

fn projective_defect(f: &PovmFamily) -> f64 {
    let d = f.dim();
    let sum = f.elements().iter().fold(linalg::zeros(d, d), |acc, e| acc + e);
    let completeness = (sum - linalg::identity(d)).norm();
    f.elements()
        .iter()
        .map(|e| (e * e - e).norm())
        .fold(completeness, f64::max)
}

fn dilation() -> Outcome {
    const MODELS: usize = 50;
    let results = par_map(MODELS, |i| {
        let mixed = random_mixed_model(1 + i % 8, 7000 + i as u64).unwrap();
        let proj = projectivize_model(&mixed).unwrap();
        let gap = [Scheme::pad(), Scheme::Leaky]
            .iter()
            .map(|s| mixed.behavior(s).max_difference(&proj.behavior(s)).unwrap())
            .fold(0.0, f64::max);
        let defect = proj.bob().iter().map(projective_defect).fold(0.0, f64::max);
        (gap, defect)
    });
    let gap = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let defect = results.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        gap <= 1e-10 && defect <= 1e-9,
        format!("{MODELS} models, behavior gap {gap:.2e}, projector defect {defect:.2e}"),
    )
}

fn protocol_statistics() -> Outcome {
    let p = TiltedParams::new(FRAC_PI_4, FRAC_PI_4).unwrap();
    let model = honest_compiled(&p);
    let cfg = ProtocolConfig {
        functional: p.functional(),
        scheme: Scheme::pad(),
        rounds: 1_000_000,
        seed: 20240611,
    };
    let start = Instant::now();
    let t = run_rounds(&cfg, &model).unwrap();
    let est = estimate_value(&t, &cfg.functional).unwrap();
    let elapsed = start.elapsed();
    let within = (est.mean - 4.0).abs() <= 3.0 * est.standard_error;
    let mut buf = Vec::new();
    t.write_jsonl(&mut buf).unwrap();
    let reread = Transcript::read_jsonl(buf.as_slice()).unwrap();
    let exact = reread == t && replay(&reread, &cfg.functional, &model).is_ok();
    outcome(
        within && exact && elapsed < Duration::from_secs(60),
        format!(
            "mean {:.5} +- {:.5}, replay {}, {elapsed:.2?}",
            est.mean,
            est.standard_error,
            if exact { "bit-exact" } else { "diverged" }
        ),
    )
}

#[test]
fn acceptance() {
    let suite: [(&str, fn() -> Outcome); 9] = [
        ("SOS identity", sos_identity),
        ("honest optimality", honest_optimality),
        ("adversarial bound", adversarial_bound),
        ("extended SOS", extended_sos),
        ("self-test exactness", selftest_exactness),
        ("robustness ledger", robustness_ledger),
        ("classical values", classical_values),
        ("dilation", dilation),
        ("protocol statistics", protocol_statistics),
    ];
    // Straight to the stream so the lines survive libtest's output capture.
    let mut err = std::io::stderr();
    let mut failed = Vec::new();
    writeln!(err).unwrap();
    for (k, (name, check)) in suite.iter().enumerate() {
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "[{}] {name:<20} {verdict}  {}", k + 1, o.detail).unwrap();
        if !o.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
