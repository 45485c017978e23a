use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tiltlab::angle::parse_angle;
use tiltlab::bell::BellFunctional;
use tiltlab::compiled::{
    cheat_classical, compiled_counterpart, perturb_honest, random_compiled_model, CompiledModel, Perturbation,
    MAX_RANDOM_DIM,
};
use tiltlab::dilation::{projectivize_model, MixedCompiledModel};
use tiltlab::exec::par_map;
use tiltlab::monomial::parse_polynomial;
use tiltlab::protocol::{estimate_value, replay, run_rounds, ProtocolConfig, Transcript};
use tiltlab::pseudo::PseudoContext;
use tiltlab::qhe::Scheme;
use tiltlab::random::{random_binary_observable, seeded_rng};
use tiltlab::selftest::self_test_verdict;
use tiltlab::tilted::{acceptance_grid, honest_model, tilted_t, verify_sos, TiltedParams};
use tiltlab::Error;

const TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "tiltlab", version, about = "Compiled tilted-CHSH experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Angles {
    /// State angle, in radians or as a multiple of pi ("pi/6")
    #[arg(long, value_parser = angle, default_value = "pi/4")]
    theta: f64,
    /// Measurement angle, same syntax
    #[arg(long, value_parser = angle, default_value = "pi/4")]
    phi: f64,
}

impl Angles {
    fn params(&self) -> Result<TiltedParams, Failure> {
        TiltedParams::new(self.theta, self.phi).map_err(Failure::usage)
    }

    fn config(&self) -> Value {
        json!({ "theta": self.theta, "phi": self.phi })
    }
}

#[derive(Args, Clone)]
struct Seed {
    #[arg(long, env = "TILTLAB_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Game {
    Chsh,
    /// S_{θ,φ}
    Tilted,
    /// T_θ
    T,
}

#[derive(Subcommand)]
enum Command {
    /// τ² and the quantum bound η^Q
    Tau(Angles),
    /// Value of the honest model against the maximal quantum value
    Value(Angles),
    /// Classical value by enumerating deterministic strategies
    Classical {
        #[arg(long, value_enum, default_value = "chsh")]
        game: Game,
        #[command(flatten)]
        angles: Angles,
    },
    /// Sum-of-squares identity on random observables
    SosVerify {
        #[arg(long, default_value_t = 100)]
        random: usize,
        /// Dimension of each party's observables
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[command(flatten)]
        seed: Seed,
    },
    /// Compiled value of a model under an encryption scheme
    CompileValue {
        #[command(flatten)]
        angles: Angles,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Pseudo-expectation certificate and positivity of a Hermitian square
    PseudoCheck {
        #[command(flatten)]
        angles: Angles,
        #[command(flatten)]
        model: ModelArgs,
        /// Polynomial P; the check evaluates P†P
        #[arg(long)]
        poly: String,
        /// Alice input used for a bare `A`
        #[arg(long, default_value_t = 0)]
        alice: u8,
    },
    /// Robust self-test report
    Selftest {
        #[command(flatten)]
        angles: Angles,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// CSV of deficit, residuals and bounds over a (θ, φ, δ) grid
    Sweep {
        /// Comma-separated perturbation strengths
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09,0.1")]
        deltas: Vec<f64>,
        /// Models per grid cell
        #[arg(long, default_value_t = 4)]
        models: usize,
        /// Restrict to one (θ, φ) instead of the built-in 25-point grid
        #[arg(long, value_parser = angle, requires = "phi")]
        theta: Option<f64>,
        #[arg(long, value_parser = angle, requires = "theta")]
        phi: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: Seed,
    },
    /// Naimark-dilate a mixed/POVM compiled model into a pure projective one
    Dilate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the two-round protocol
    ProtocolRun {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[command(flatten)]
        angles: Angles,
        #[command(flatten)]
        model: ModelArgs,
        /// Write the transcript as JSON lines
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Replay an existing transcript instead of running
        #[arg(long, conflicts_with = "transcript")]
        replay: Option<PathBuf>,
    },
    /// Best classical cheating prover against a scheme
    CheatDemo {
        #[arg(long, value_enum, default_value = "chsh")]
        game: Game,
        #[command(flatten)]
        angles: Angles,
        #[arg(long, value_parser = scheme, default_value = "leaky")]
        scheme: Scheme,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// honest, random:DIM, perturbed:DELTA or a JSON file
    #[arg(long, default_value = "honest")]
    model: String,
    #[arg(long, value_parser = scheme, default_value = "pad")]
    scheme: Scheme,
    #[command(flatten)]
    seed: Seed,
}

impl ModelArgs {
    fn load(&self, p: &TiltedParams) -> Result<CompiledModel, Failure> {
        let honest = || compiled_counterpart(&honest_model(p).partial_model()?);
        let spec = self.model.as_str();
        let model = if spec == "honest" {
            honest()
        } else if let Some(d) = spec.strip_prefix("random:") {
            let dim: usize = d.parse().map_err(|_| Failure::Usage(format!("bad dimension in {spec:?}")))?;
            if dim == 0 || dim > MAX_RANDOM_DIM {
                return Err(Failure::Usage(format!("random dimension must be 1..={MAX_RANDOM_DIM}")));
            }
            random_compiled_model(dim, self.seed.seed)
        } else if let Some(d) = spec.strip_prefix("perturbed:") {
            let delta: f64 = d.parse().map_err(|_| Failure::Usage(format!("bad delta in {spec:?}")))?;
            let opts = Perturbation {
                delta,
                seed: self.seed.seed,
                rotate_states: true,
            };
            perturb_honest(p, opts).map(|(m, _)| m)
        } else {
            let text = fs::read_to_string(spec).map_err(|e| Failure::Usage(format!("cannot read {spec}: {e}")))?;
            CompiledModel::from_json(&text)
        };
        model.map_err(Failure::usage)
    }

    fn config(&self) -> Value {
        json!({ "model": self.model, "scheme": self.scheme.name(), "seed": self.seed.seed })
    }
}

fn angle(s: &str) -> Result<f64, String> {
    parse_angle(s).map_err(|e| e.to_string())
}

fn scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    /// A check ran and did not hold.
    Check(String),
    Usage(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn gate(pass: bool, what: &str) -> Result<(), Failure> {
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(what.to_string()))
    }
}

/// For the human-readable summary only; JSON output keeps full precision.
fn rounded(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn emit(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn functional(game: Game, p: &TiltedParams) -> Result<BellFunctional, Failure> {
    Ok(match game {
        Game::Chsh => BellFunctional::chsh(),
        Game::Tilted => p.functional(),
        Game::T => tilted_t(p.theta()).map_err(Failure::usage)?,
    })
}

fn game_name(game: Game) -> &'static str {
    match game {
        Game::Chsh => "chsh",
        Game::Tilted => "tilted",
        Game::T => "t",
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Tau(a) => {
            let p = a.params()?;
            eprintln!("tau^2 = {}", rounded(p.tau_sq()));
            eprintln!("eta^Q = {}", rounded(p.eta_q()));
            emit(&json!({ "config": a.config(), "tau": p.tau(), "tau_sq": p.tau_sq(), "eta_q": p.eta_q() }));
            Ok(())
        }
        Command::Value(a) => {
            let p = a.params()?;
            let v = honest_model(&p).value(&p.functional()).map_err(Failure::usage)?;
            let gap = (v - p.eta_q()).abs();
            emit(&json!({ "config": a.config(), "value": v, "eta_q": p.eta_q(), "gap": gap }));
            gate(gap <= TOL, "honest value differs from eta^Q")
        }
        Command::Classical { game, angles } => {
            let p = angles.params()?;
            let c = functional(game, &p)?.classical_value().map_err(Failure::usage)?;
            emit(&json!({
                "config": { "game": game_name(game), "theta": angles.theta, "phi": angles.phi },
                "classical_value": c.value,
                "quantum_value": if matches!(game, Game::Tilted) { Some(p.eta_q()) } else { None },
                "maximizers": c.maximizers,
            }));
            Ok(())
        }
        Command::SosVerify { random, dim, seed } => {
            if random == 0 || dim == 0 || dim > 16 {
                return Err(Failure::Usage("need --random >= 1 and --dim in 1..=16".into()));
            }
            let grid = acceptance_grid();
            let worst = par_map(random, |i| {
                let mut rng = seeded_rng(seed.seed, i as u64);
                let obs: Vec<_> = (0..4).map(|_| random_binary_observable(dim, &mut rng)).collect();
                grid.iter()
                    .map(|p| verify_sos(p, &obs[0], &obs[1], &obs[2], &obs[3]).unwrap_or(f64::INFINITY))
                    .fold(0.0, f64::max)
            })
            .into_iter()
            .fold(0.0, f64::max);
            let pass = worst <= TOL;
            eprintln!("max residual {worst:.3e} {} 1e-9", if pass { "<=" } else { ">" });
            emit(&json!({
                "config": { "random": random, "dim": dim, "seed": seed.seed, "grid_points": grid.len() },
                "max_residual": worst,
                "pass": pass,
            }));
            gate(pass, "SOS residual above tolerance")
        }
        Command::CompileValue { angles, model } => {
            let p = angles.params()?;
            let m = model.load(&p)?;
            let v = m.value(&p.functional(), &model.scheme).map_err(Failure::usage)?;
            let chsh = m.value(&BellFunctional::chsh(), &model.scheme).map_err(Failure::usage)?;
            let within = v <= p.eta_q() + TOL;
            emit(&json!({
                "config": { "angles": angles.config(), "model": model.config() },
                "dim": m.dim(),
                "value": v,
                "chsh_value": chsh,
                "eta_q": p.eta_q(),
                "within_bound": within,
            }));
            // The bound only binds under a hiding scheme.
            gate(within || !model.scheme.is_perfectly_hiding(), "compiled value exceeds eta^Q")
        }
        Command::PseudoCheck {
            angles,
            model,
            poly,
            alice,
        } => {
            let p = angles.params()?;
            let poly = parse_polynomial(&poly, alice).map_err(Failure::usage)?;
            let ctx = PseudoContext::new(model.load(&p)?, model.scheme);
            let cert = ctx.certify_bound(&p).map_err(Failure::usage)?;
            let margin = ctx.eval_square(&poly).map_err(Failure::usage)?;
            let direct = ctx.eval_square_direct(&poly).map_err(Failure::usage)?;
            emit(&json!({
                "config": { "angles": angles.config(), "model": model.config(), "poly": poly.to_string() },
                "value": cert.pseudo_value,
                "slack": cert.slack,
                "positivity_margin": margin,
                "direct_square": direct,
                "eta_q": cert.eta_q,
                "decomposition_residual": cert.decomposition_residual(),
            }));
            gate(
                margin >= -TOL && cert.decomposition_residual() <= TOL,
                "pseudo-expectation certificate failed",
            )
        }
        Command::Selftest { angles, model, report } => {
            let p = angles.params()?;
            let m = model.load(&p)?;
            let r = self_test_verdict(&m, &p, &model.scheme).map_err(Failure::usage)?;
            if let Some(path) = report {
                let mut v: Value = serde_json::from_str(&r.to_json()).expect("report json");
                v["config"] = json!({ "angles": angles.config(), "model": model.config() });
                write_file(&path, &serde_json::to_string_pretty(&v).expect("json"))?;
            }
            for c in &r.claims {
                eprintln!(
                    "{:<10} residual {:.3e}  bound {:.3e}  {}",
                    c.label(),
                    c.residual,
                    c.bound,
                    if c.pass { "ok" } else { "VIOLATED" }
                );
            }
            eprintln!("st1 lhs {:.3e} bound {:.3e}", r.st1.lhs, r.st1.bound);
            eprintln!("st2 lhs {:.3e} bound {:.3e}", r.st2.lhs, r.st2.bound);
            eprintln!("epsilon {:.3e}  pass {}", r.epsilon, r.pass && r.claims_pass);
            gate(r.pass && r.claims_pass, "self-test bound violated")
        }
        Command::Sweep {
            deltas,
            models,
            theta,
            phi,
            out,
            seed,
        } => sweep(&deltas, models, theta.zip(phi), out.as_deref(), seed.seed),
        Command::Dilate { input, out } => {
            let text = fs::read_to_string(&input).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", input.display())))?;
            let mixed = MixedCompiledModel::from_json(&text)
                .or_else(|_| CompiledModel::from_json(&text).map(|m| MixedCompiledModel::from_pure(&m)))
                .map_err(Failure::usage)?;
            let proj = match projectivize_model(&mixed) {
                Ok(m) => m,
                Err(e @ Error::Consistency(_)) => return Err(Failure::Check(e.to_string())),
                Err(e) => return Err(Failure::usage(e)),
            };
            write_file(&out, &proj.to_json())?;
            let gap = mixed
                .behavior(&Scheme::pad())
                .max_difference(&proj.behavior(&Scheme::pad()))
                .unwrap_or(f64::INFINITY);
            emit(&json!({
                "config": { "in": input, "out": out },
                "input_dim": mixed.dim(),
                "output_dim": proj.dim(),
                "behavior_gap": gap,
            }));
            Ok(())
        }
        Command::ProtocolRun {
            n,
            angles,
            model,
            transcript,
            replay: replay_path,
        } => {
            let p = angles.params()?;
            let m = model.load(&p)?;
            let f = p.functional();
            let t = if let Some(path) = &replay_path {
                let file = fs::File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
                let t = Transcript::read_jsonl(BufReader::new(file)).map_err(Failure::usage)?;
                if let Err(e) = replay(&t, &f, &m) {
                    return Err(Failure::Check(e.to_string()));
                }
                t
            } else {
                let cfg = ProtocolConfig {
                    functional: f.clone(),
                    scheme: model.scheme,
                    rounds: n,
                    seed: model.seed.seed,
                };
                run_rounds(&cfg, &m).map_err(Failure::usage)?
            };
            if let Some(path) = &transcript {
                let mut buf = Vec::new();
                t.write_jsonl(&mut buf).map_err(Failure::usage)?;
                fs::write(path, buf).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
            }
            let est = estimate_value(&t, &f).map_err(Failure::usage)?;
            let exact = m.value(&f, &t.header.scheme).map_err(Failure::usage)?;
            let z = (est.mean - exact) / est.standard_error;
            emit(&json!({
                "config": {
                    "angles": angles.config(),
                    "model": model.model,
                    "scheme": t.header.scheme.name(),
                    "seed": t.header.seed,
                    "rounds": t.header.rounds,
                    "replayed": replay_path.is_some(),
                },
                "mean": est.mean,
                "standard_error": est.standard_error,
                "compiled_value": exact,
                "eta_q": p.eta_q(),
                "z": z,
            }));
            gate(z.abs() <= 4.0 || est.standard_error == 0.0 && est.mean == exact, "estimate more than 4 SE off")
        }
        Command::CheatDemo { game, angles, scheme } => {
            let p = angles.params()?;
            let f = functional(game, &p)?;
            let classical = f.classical_value().map_err(Failure::usage)?.value;
            let (value, strat) = cheat_classical(&f, &scheme).map_err(Failure::usage)?;
            eprintln!("{} cheat value {value} (classical bound {classical})", scheme.name());
            for chi in 0..2 {
                eprintln!("  chi={chi}: alpha={}  b(y=0)={}  b(y=1)={}", strat.alpha[chi], strat.b[chi][0], strat.b[chi][1]);
            }
            emit(&json!({
                "config": { "game": game_name(game), "theta": angles.theta, "phi": angles.phi, "scheme": scheme.name() },
                "cheat_value": value,
                "classical_value": classical,
                "strategy": strat,
                "exceeds_classical": value > classical + TOL,
            }));
            Ok(())
        }
    }
}

fn sweep(deltas: &[f64], models: usize, point: Option<(f64, f64)>, out: Option<&Path>, seed: u64) -> Result<(), Failure> {
    if models == 0 || deltas.is_empty() {
        return Err(Failure::Usage("need at least one delta and one model".into()));
    }
    if let Some(d) = deltas.iter().find(|d| !(d.is_finite() && d.abs() <= 0.3)) {
        return Err(Failure::Usage(format!("delta {d} outside [-0.3, 0.3]")));
    }
    let grid = match point {
        Some((t, f)) => vec![TiltedParams::new(t, f).map_err(Failure::usage)?],
        None => acceptance_grid(),
    };
    let cells = grid.len() * deltas.len() * models;
    let rows = par_map(cells, |i| -> Result<Vec<String>, Error> {
        let p = &grid[i / models / deltas.len()];
        let delta = deltas[i / models % deltas.len()];
        let opts = Perturbation {
            delta,
            seed: seed.wrapping_add(i as u64),
            rotate_states: true,
        };
        let (m, _) = perturb_honest(p, opts)?;
        let r = self_test_verdict(&m, p, &Scheme::pad())?;
        let prefix = format!("{},{},{},{},{:e}", p.theta(), p.phi(), delta, i % models, r.epsilon);
        let mut lines: Vec<String> = r
            .claims
            .iter()
            .map(|c| format!("{prefix},{},{:e},{:e},{}", c.label(), c.residual, c.bound, c.pass))
            .collect();
        for (name, c) in [("st1", &r.st1), ("st2", &r.st2)] {
            lines.push(format!("{prefix},{name},{:e},{:e},{}", c.lhs, c.bound, c.pass));
        }
        for mc in &r.meas {
            let c = &mc.check;
            lines.push(format!("{prefix},meas_x{}_b{}_y{},{:e},{:e},{}", mc.x, mc.b, mc.y, c.lhs, c.bound, c.pass));
        }
        Ok(lines)
    });
    let mut text = format!(
        "# tiltlab sweep seed={seed} models={models} deltas={} points={}\ntheta,phi,delta,model,epsilon,check,residual,bound,pass\n",
        deltas.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(";"),
        grid.len()
    );
    let mut violations = 0;
    for r in rows {
        for line in r.map_err(Failure::usage)? {
            violations += usize::from(line.ends_with("false"));
            text.push_str(&line);
            text.push('\n');
        }
    }
    match out {
        Some(path) => write_file(path, &text)?,
        None => io::stdout().write_all(text.as_bytes()).map_err(Failure::usage)?,
    }
    eprintln!("{cells} models, {violations} violated checks");
    gate(violations == 0, "a residual exceeded its bound")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
