//! The compiled game as a two-round interactive protocol.
//!
//! Each round runs a verifier and a prover state machine that talk only
//! through newline-delimited JSON frames:
//!
//! ```text
//! {"type":"setup","lambda":128,"seed":7}
//! {"type":"challenge1","chi":1}
//! {"type":"response1","alpha":0}
//! {"type":"challenge2","y":1}
//! {"type":"response2","b":1}
//! {"type":"verdict","weight":4.0}
//! ```
//!
//! Rounds are independent. Round `r` draws its randomness from streams
//! derived from `(seed, r)`, so a transcript is reproducible bit for bit
//! whatever the thread count.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bell::BellFunctional;
use crate::compiled::CompiledModel;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg;
use crate::qhe::{Scheme, SecretKey};
use crate::random::seeded_rng;

/// Mixed into the round seed for the prover's private randomness.
const PROVER_SALT: u64 = 0x5be0_cd19_137e_2179;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Setup { lambda: u32, seed: u64 },
    Challenge1 { chi: u8 },
    Response1 { alpha: u8 },
    Challenge2 { y: u8 },
    Response2 { b: u8 },
    /// `w_{abxy} / π(x, y)`
    Verdict { weight: f64 },
}

impl Message {
    pub fn to_frame(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn from_frame(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol(format!("malformed frame: {e}")))
    }

    fn kind(&self) -> &'static str {
        match self {
            Message::Setup { .. } => "setup",
            Message::Challenge1 { .. } => "challenge1",
            Message::Response1 { .. } => "response1",
            Message::Challenge2 { .. } => "challenge2",
            Message::Response2 { .. } => "response2",
            Message::Verdict { .. } => "verdict",
        }
    }
}

fn bit_field(v: u8, name: &str) -> Result<u8> {
    if v <= 1 {
        Ok(v)
    } else {
        Err(Error::Protocol(format!("{name} = {v} is not a bit")))
    }
}

/// Verifier side: the game, the encryption scheme, the number of rounds and the master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub functional: BellFunctional,
    pub scheme: Scheme,
    pub rounds: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("need at least one round".into()));
        }
        let s = self.functional.scenario();
        if (s.inputs_a, s.inputs_b, s.outputs_a, s.outputs_b) != (2, 2, 2, 2) {
            return Err(Error::ArityMismatch("protocol runs binary two-input games".into()));
        }
        for x in 0..2 {
            for y in 0..2 {
                let weighted = (0..2).any(|a| (0..2).any(|b| self.functional.weight(a, b, x, y) != 0.0));
                if weighted && s.pi[x][y] <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "pi({x},{y}) = 0 but the functional weights that pair"
                    )));
                }
            }
        }
        Ok(())
    }

    fn lambda(&self) -> u32 {
        match self.scheme {
            Scheme::Pad { lambda } => lambda,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VerifierState {
    Ready,
    AwaitResponse1,
    AwaitResponse2,
    Done,
    Aborted,
}

/// One round of the verifier. Any unexpected message aborts the round.
#[derive(Debug)]
pub struct Verifier<'a> {
    cfg: &'a ProtocolConfig,
    seed: u64,
    rng: ChaCha8Rng,
    state: VerifierState,
    key: Option<SecretKey>,
    x: u8,
    y: u8,
    chi: u8,
    alpha: u8,
    a: u8,
}

impl<'a> Verifier<'a> {
    pub fn new(cfg: &'a ProtocolConfig, round: u64) -> Self {
        Self {
            cfg,
            seed: cfg.seed,
            rng: seeded_rng(cfg.seed, round),
            state: VerifierState::Ready,
            key: None,
            x: 0,
            y: 0,
            chi: 0,
            alpha: 0,
            a: 0,
        }
    }

    /// Samples `(x, y) ∼ π` and a key, and returns the setup and first challenge.
    pub fn open(&mut self) -> Result<[Message; 2]> {
        if self.state != VerifierState::Ready {
            self.state = VerifierState::Aborted;
            return Err(Error::Protocol("round already opened".into()));
        }
        let pi = &self.cfg.functional.scenario().pi;
        let r: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut pick = (1, 1);
        'outer: for x in 0..2u8 {
            for y in 0..2u8 {
                acc += pi[x as usize][y as usize];
                if r < acc {
                    pick = (x, y);
                    break 'outer;
                }
            }
        }
        (self.x, self.y) = pick;
        let key = self.cfg.scheme.sample_key(&mut self.rng);
        self.chi = key.enc(self.x)?;
        self.key = Some(key);
        self.state = VerifierState::AwaitResponse1;
        Ok([
            Message::Setup {
                lambda: self.cfg.lambda(),
                seed: self.seed,
            },
            Message::Challenge1 { chi: self.chi },
        ])
    }

    pub fn receive(&mut self, msg: Message) -> Result<Message> {
        let out = match (self.state, msg) {
            (VerifierState::AwaitResponse1, Message::Response1 { alpha }) => {
                self.alpha = bit_field(alpha, "alpha")?;
                self.a = self.key.expect("key set on open").dec(self.alpha)?;
                self.state = VerifierState::AwaitResponse2;
                Ok(Message::Challenge2 { y: self.y })
            }
            (VerifierState::AwaitResponse2, Message::Response2 { b }) => {
                let b = bit_field(b, "b")?;
                let (x, y) = (self.x as usize, self.y as usize);
                let w = self.cfg.functional.weight(self.a as usize, b as usize, x, y);
                let weight = w / self.cfg.functional.scenario().pi[x][y];
                self.state = VerifierState::Done;
                Ok(Message::Verdict { weight })
            }
            (state, m) => Err(Error::Protocol(format!("verifier in state {state:?} got {}", m.kind()))),
        };
        if out.is_err() {
            self.state = VerifierState::Aborted;
        }
        out
    }

    fn record(&self, b: u8, weight: f64) -> RoundRecord {
        RoundRecord {
            key: self.key.map_or(0, |k| k.bit()),
            x: self.x,
            chi: self.chi,
            alpha: self.alpha,
            a: self.a,
            y: self.y,
            b,
            weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProverState {
    AwaitSetup,
    AwaitChallenge1,
    AwaitChallenge2,
    Done,
    Aborted,
}

/// One round of an honest-but-arbitrary prover holding a compiled model.
///
/// The key is handed to the prover's evaluation oracle outside the message
/// channel; it stands in for homomorphic evaluation and is read only to
/// pick the state table of key-dependent models.
#[derive(Debug)]
pub struct Prover<'a> {
    model: &'a CompiledModel,
    eval_key: u8,
    rng: ChaCha8Rng,
    state: ProverState,
    chi: u8,
    alpha: u8,
}

impl<'a> Prover<'a> {
    pub fn new(model: &'a CompiledModel, eval_key: u8, seed: u64, round: u64) -> Self {
        Self {
            model,
            eval_key: eval_key & 1,
            rng: seeded_rng(seed ^ PROVER_SALT, round),
            state: ProverState::AwaitSetup,
            chi: 0,
            alpha: 0,
        }
    }

    pub fn receive(&mut self, msg: Message) -> Result<Option<Message>> {
        let out = match (self.state, msg) {
            (ProverState::AwaitSetup, Message::Setup { .. }) => {
                self.state = ProverState::AwaitChallenge1;
                Ok(None)
            }
            (ProverState::AwaitChallenge1, Message::Challenge1 { chi }) => {
                self.chi = bit_field(chi, "chi")?;
                let p0 = self.model.state(self.eval_key, self.chi, 0).norm_squared();
                self.alpha = u8::from(self.rng.random::<f64>() >= p0);
                self.state = ProverState::AwaitChallenge2;
                Ok(Some(Message::Response1 { alpha: self.alpha }))
            }
            (ProverState::AwaitChallenge2, Message::Challenge2 { y }) => {
                let y = bit_field(y, "y")?;
                let psi = self.model.state(self.eval_key, self.chi, self.alpha);
                let norm_sq = psi.norm_squared();
                let p0 = linalg::expectation(self.model.bob()[y as usize].element(0), psi).re / norm_sq;
                let b = u8::from(self.rng.random::<f64>() >= p0);
                self.state = ProverState::Done;
                Ok(Some(Message::Response2 { b }))
            }
            (state, m) => Err(Error::Protocol(format!("prover in state {state:?} got {}", m.kind()))),
        };
        if out.is_err() {
            self.state = ProverState::Aborted;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub key: u8,
    pub x: u8,
    pub chi: u8,
    pub alpha: u8,
    pub a: u8,
    pub y: u8,
    pub b: u8,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub scheme: Scheme,
    pub seed: u64,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub rounds: Vec<RoundRecord>,
}

impl Transcript {
    /// Header line, then one JSON line per round.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Protocol(format!("write failed: {e}"));
        writeln!(out, "{}", serde_json::to_string(&self.header)?).map_err(io)?;
        for r in &self.rounds {
            writeln!(out, "{}", serde_json::to_string(r)?).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let io = |e: std::io::Error| Error::Parse(format!("read failed: {e}"));
        let header: TranscriptHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l.map_err(io)?)?,
            None => return Err(Error::Parse("empty transcript".into())),
        };
        let rounds = lines
            .map(|l| Ok(serde_json::from_str(&l.map_err(io)?)?))
            .collect::<Result<Vec<RoundRecord>>>()?;
        if rounds.len() != header.rounds {
            return Err(Error::Parse(format!(
                "header announces {} rounds, found {}",
                header.rounds,
                rounds.len()
            )));
        }
        Ok(Self { header, rounds })
    }

    /// `Dec(α) = a` and `Enc(x) = χ` under the recorded key in every round.
    pub fn check_consistency(&self) -> Result<()> {
        for (i, r) in self.rounds.iter().enumerate() {
            let key = SecretKey::new(r.key)?;
            if key.enc(r.x)? != r.chi || key.dec(r.alpha)? != r.a {
                return Err(Error::Consistency(format!("round {i} violates Enc/Dec under its key")));
            }
        }
        Ok(())
    }
}

/// Every frame of one round, in order.
pub fn run_round_frames(cfg: &ProtocolConfig, prover_model: &CompiledModel, round: u64) -> Result<(RoundRecord, Vec<String>)> {
    let mut frames = Vec::with_capacity(6);
    let mut verifier = Verifier::new(cfg, round);
    let opening = verifier.open()?;
    let key = verifier.key.map_or(0, |k| k.bit());
    let mut prover = Prover::new(prover_model, key, cfg.seed, round);
    let mut deliver_to_prover = |m: &Message, frames: &mut Vec<String>| -> Result<Option<Message>> {
        let f = m.to_frame();
        let parsed = Message::from_frame(&f)?;
        frames.push(f);
        prover.receive(parsed)
    };
    deliver_to_prover(&opening[0], &mut frames)?;
    let r1 = deliver_to_prover(&opening[1], &mut frames)?
        .ok_or_else(|| Error::Protocol("prover did not answer the first challenge".into()))?;
    let mut deliver_to_verifier = |m: Message, frames: &mut Vec<String>| -> Result<Message> {
        let f = m.to_frame();
        let parsed = Message::from_frame(&f)?;
        frames.push(f);
        verifier.receive(parsed)
    };
    let c2 = deliver_to_verifier(r1, &mut frames)?;
    let r2 = deliver_to_prover(&c2, &mut frames)?
        .ok_or_else(|| Error::Protocol("prover did not answer the second challenge".into()))?;
    let verdict = deliver_to_verifier(r2, &mut frames)?;
    frames.push(verdict.to_frame());
    let (b, weight) = match (r2, verdict) {
        (Message::Response2 { b }, Message::Verdict { weight }) => (b, weight),
        _ => return Err(Error::Protocol("round ended without a verdict".into())),
    };
    Ok((verifier.record(b, weight), frames))
}

pub fn run_rounds(cfg: &ProtocolConfig, prover: &CompiledModel) -> Result<Transcript> {
    run_rounds_with(cfg, prover, Exec::default())
}

pub fn run_rounds_with(cfg: &ProtocolConfig, prover: &CompiledModel, exec: Exec) -> Result<Transcript> {
    cfg.validate()?;
    let rounds = exec
        .map(cfg.rounds, |r| run_round_frames(cfg, prover, r as u64).map(|(rec, _)| rec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Transcript {
        header: TranscriptHeader {
            scheme: cfg.scheme,
            seed: cfg.seed,
            rounds: cfg.rounds,
        },
        rounds,
    })
}

/// Re-runs the protocol from the transcript's seed and compares round by round.
pub fn replay(t: &Transcript, functional: &BellFunctional, prover: &CompiledModel) -> Result<()> {
    let cfg = ProtocolConfig {
        functional: functional.clone(),
        scheme: t.header.scheme,
        rounds: t.header.rounds,
        seed: t.header.seed,
    };
    let again = run_rounds(&cfg, prover)?;
    match again.rounds.iter().zip(&t.rounds).position(|(a, b)| a != b) {
        Some(i) => Err(Error::Consistency(format!("replay diverges at round {i}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `√n`; infinite for a single round.
    pub standard_error: f64,
    pub rounds: usize,
}

/// Mean of `w_{abxy}/π(x,y)` over the rounds, with its standard error.
pub fn estimate_value(t: &Transcript, f: &BellFunctional) -> Result<Estimate> {
    if t.rounds.is_empty() {
        return Err(Error::InvalidArgument("empty transcript".into()));
    }
    let s = f.scenario();
    let fits = t.rounds.iter().all(|r| {
        (r.x as usize) < s.inputs_a && (r.y as usize) < s.inputs_b && (r.a as usize) < s.outputs_a && (r.b as usize) < s.outputs_b
    });
    if !fits {
        return Err(Error::ArityMismatch("transcript does not fit the functional's scenario".into()));
    }
    let weights = t.rounds.iter().map(|r| {
        let (x, y) = (r.x as usize, r.y as usize);
        let w = f.weight(r.a as usize, r.b as usize, x, y);
        if w == 0.0 {
            0.0
        } else {
            w / s.pi[x][y]
        }
    });
    let n = t.rounds.len();
    // Welford keeps the variance accurate for long transcripts.
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, w) in weights.enumerate() {
        let d = w - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (w - mean);
    }
    let standard_error = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(Estimate {
        mean,
        standard_error,
        rounds: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiled::{compiled_counterpart, random_compiled_model};
    use crate::tilted::{honest_model, TiltedParams};
    use std::f64::consts::FRAC_PI_4;

    fn chsh_setup(rounds: usize, seed: u64) -> (ProtocolConfig, CompiledModel) {
        let p = TiltedParams::new(FRAC_PI_4, FRAC_PI_4).unwrap();
        let model = compiled_counterpart(&honest_model(&p).partial_model().unwrap()).unwrap();
        let cfg = ProtocolConfig {
            functional: p.functional(),
            scheme: Scheme::pad(),
            rounds,
            seed,
        };
        (cfg, model)
    }

    #[test]
    fn single_round_has_six_frames() {
        let (cfg, model) = chsh_setup(1, 3);
        let (rec, frames) = run_round_frames(&cfg, &model, 0).unwrap();
        assert_eq!(frames.len(), 6);
        let kinds: Vec<_> = frames.iter().map(|f| Message::from_frame(f).unwrap().kind()).collect();
        assert_eq!(kinds, ["setup", "challenge1", "response1", "challenge2", "response2", "verdict"]);
        assert!(frames[1].starts_with("{\"type\":\"challenge1\",\"chi\":"));
        assert_eq!(rec.a, rec.alpha ^ rec.key);
    }

    #[test]
    fn replay_is_bit_exact() {
        let (cfg, model) = chsh_setup(2000, 11);
        let t = run_rounds(&cfg, &model).unwrap();
        assert_eq!(t, run_rounds_with(&cfg, &model, Exec::Sequential).unwrap());
        replay(&t, &cfg.functional, &model).unwrap();
        t.check_consistency().unwrap();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let back = Transcript::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let mut tampered = t.clone();
        tampered.rounds[5].b ^= 1;
        assert!(replay(&tampered, &cfg.functional, &model).is_err());
    }

    #[test]
    fn out_of_order_messages_are_rejected() {
        let (cfg, model) = chsh_setup(1, 0);
        let mut v = Verifier::new(&cfg, 0);
        assert!(v.receive(Message::Response1 { alpha: 0 }).is_err());
        assert!(v.open().is_err());

        let mut v = Verifier::new(&cfg, 0);
        v.open().unwrap();
        assert!(v.receive(Message::Response2 { b: 0 }).is_err());
        assert!(v.receive(Message::Response1 { alpha: 0 }).is_err(), "aborted rounds stay aborted");

        let mut v = Verifier::new(&cfg, 0);
        v.open().unwrap();
        v.receive(Message::Response1 { alpha: 1 }).unwrap();
        assert!(v.receive(Message::Response1 { alpha: 1 }).is_err());

        let mut v = Verifier::new(&cfg, 0);
        v.open().unwrap();
        assert!(v.receive(Message::Response1 { alpha: 2 }).is_err());

        let mut pr = Prover::new(&model, 0, 0, 0);
        assert!(pr.receive(Message::Challenge1 { chi: 0 }).is_err());
        let mut pr = Prover::new(&model, 0, 0, 0);
        pr.receive(Message::Setup { lambda: 1, seed: 0 }).unwrap();
        assert!(pr.receive(Message::Setup { lambda: 1, seed: 0 }).is_err());

        assert!(Message::from_frame("{\"type\":\"challenge1\"}").is_err());
        assert!(Message::from_frame("{\"type\":\"nope\",\"chi\":0}").is_err());
    }

    #[test]
    fn estimator_converges() {
        let model = random_compiled_model(3, 5).unwrap();
        let f = BellFunctional::chsh();
        let exact = model.value(&f, &Scheme::pad()).unwrap();
        let mut prev_err = f64::INFINITY;
        for n in [1_000, 10_000, 100_000] {
            let cfg = ProtocolConfig {
                functional: f.clone(),
                scheme: Scheme::pad(),
                rounds: n,
                seed: 21,
            };
            let est = estimate_value(&run_rounds(&cfg, &model).unwrap(), &f).unwrap();
            assert!((est.mean - exact).abs() <= 4.0 * est.standard_error);
            assert!(est.standard_error < prev_err);
            prev_err = est.standard_error;
        }
    }

    #[test]
    fn estimator_edge_cases() {
        let (cfg, model) = chsh_setup(50, 1);
        let t = run_rounds(&cfg, &model).unwrap();
        let zero = BellFunctional::zero(crate::bell::BellScenario::binary());
        assert_eq!(estimate_value(&t, &zero).unwrap().mean, 0.0);
        let empty = Transcript {
            header: t.header.clone(),
            rounds: vec![],
        };
        assert!(estimate_value(&empty, &cfg.functional).is_err());
        let one = Transcript {
            header: t.header.clone(),
            rounds: t.rounds[..1].to_vec(),
        };
        assert!(estimate_value(&one, &cfg.functional).unwrap().standard_error.is_infinite());
        let bad = ProtocolConfig { rounds: 0, ..cfg };
        assert!(run_rounds(&bad, &model).is_err());
    }

    #[test]
    fn deterministic_prover_variance() {
        // Under the leaky scheme this prover always answers a = b = 0.
        let zero = linalg::basis(1, 0);
        let none = linalg::StateVector::zeros(1);
        let states = crate::compiled::KeyedStates::Oblivious([[zero.clone(), none.clone()], [zero, none]]);
        let det = crate::linalg::PovmFamily::new(vec![linalg::identity(1), linalg::zeros(1, 1)]).unwrap();
        let model = CompiledModel::new(states, vec![det.clone(), det]).unwrap();
        let f = BellFunctional::chsh();
        let n = 20_000;
        let cfg = ProtocolConfig {
            functional: f.clone(),
            scheme: Scheme::Leaky,
            rounds: n,
            seed: 4,
        };
        let t = run_rounds(&cfg, &model).unwrap();
        assert!(t.rounds.iter().all(|r| r.a == 0 && r.b == 0));
        let est = estimate_value(&t, &f).unwrap();
        let exact = model.value(&f, &Scheme::Leaky).unwrap();
        assert!((exact - 2.0).abs() < 1e-12);
        let pi = &f.scenario().pi;
        let second: f64 = (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .map(|(x, y)| f.weight(0, 0, x, y).powi(2) / pi[x][y])
            .sum();
        let sd = (second - exact * exact).sqrt();
        assert!((est.standard_error * (n as f64).sqrt() - sd).abs() < 0.05 * sd);
        assert!((est.mean - exact).abs() < 4.0 * est.standard_error);
    }
}
