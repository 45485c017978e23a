//! Compiled models: post-first-round states `|Ψ_{α|χ}⟩` and second-round PVMs.
//!
//! States may be tabulated per key. A prover that really evaluates under
//! encryption produces states that depend on the hidden plaintext, which in
//! this single-bit setting means a separate table for each key. Adversarial
//! models that ignore the key use one shared table.

use serde::{Deserialize, Serialize};

use crate::bell::{BellFunctional, BellScenario, Behavior, BipartiteModel, PartialModel};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, MatrixJson, PovmFamily, StateVector};
use crate::qhe::Scheme;
use crate::random::{observable_with_signature, random_hermitian, random_state, seeded_rng};
use crate::tilted::{honest_model, TiltedParams};

const NORM_TOL: f64 = 1e-10;
pub const MAX_RANDOM_DIM: usize = 16;

/// `table[χ][α] = |Ψ_{α|χ}⟩`
pub type StateTable = [[StateVector; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub enum KeyedStates {
    Oblivious(StateTable),
    PerKey([StateTable; 2]),
}

impl KeyedStates {
    pub fn table(&self, key: u8) -> &StateTable {
        match self {
            KeyedStates::Oblivious(t) => t,
            KeyedStates::PerKey(ts) => &ts[key as usize],
        }
    }

    pub fn is_per_key(&self) -> bool {
        matches!(self, KeyedStates::PerKey(_))
    }

    fn tables(&self) -> Vec<&StateTable> {
        match self {
            KeyedStates::Oblivious(t) => vec![t],
            KeyedStates::PerKey(ts) => ts.iter().collect(),
        }
    }
}

/// `(ℋ̃, {|Ψ_{α|χ}⟩}, {N_{b|y}})` with binary ciphertexts and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    dim: usize,
    states: KeyedStates,
    bob: Vec<PovmFamily>,
}

impl CompiledModel {
    pub fn new(states: KeyedStates, bob: Vec<PovmFamily>) -> Result<Self> {
        if bob.len() != 2 || bob.iter().any(|f| f.outcomes() != 2) {
            return Err(Error::InvalidModel("need two binary Bob measurements".into()));
        }
        let dim = bob[0].dim();
        if bob[1].dim() != dim {
            return Err(Error::InvalidModel("Bob measurements act on different spaces".into()));
        }
        if bob.iter().any(|f| !f.is_projective()) {
            return Err(Error::InvalidModel("Bob measurements must be projective".into()));
        }
        for (k, table) in states.tables().into_iter().enumerate() {
            for (chi, row) in table.iter().enumerate() {
                let mut total = 0.0;
                for v in row {
                    if v.len() != dim {
                        return Err(Error::DimensionMismatch(format!(
                            "state of length {} on a {dim}-dimensional space",
                            v.len()
                        )));
                    }
                    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(Error::NonFinite("compiled state"));
                    }
                    total += v.norm_squared();
                }
                if (total - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidModel(format!(
                        "table {k}, chi={chi}: branch weights sum to {total}"
                    )));
                }
            }
        }
        Ok(Self { dim, states, bob })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &KeyedStates {
        &self.states
    }

    pub fn state(&self, key: u8, chi: u8, alpha: u8) -> &StateVector {
        &self.states.table(key)[chi as usize][alpha as usize]
    }

    pub fn bob(&self) -> &[PovmFamily] {
        &self.bob
    }

    /// `B_y = N_{0|y} − N_{1|y}`
    pub fn bob_observable(&self, y: usize) -> ComplexMatrix {
        self.bob[y].observable().expect("binary family")
    }

    /// Joint relabeling `(α, χ, key) ↦ (α⊕c, χ⊕c, key⊕c)`.
    pub fn relabeled(&self, c: u8) -> Self {
        let c = (c & 1) as usize;
        let shift = |t: &StateTable| -> StateTable {
            std::array::from_fn(|chi| std::array::from_fn(|alpha| t[chi ^ c][alpha ^ c].clone()))
        };
        let states = match &self.states {
            KeyedStates::Oblivious(t) => KeyedStates::Oblivious(shift(t)),
            KeyedStates::PerKey(ts) => KeyedStates::PerKey([shift(&ts[c]), shift(&ts[1 ^ c])]),
        };
        Self {
            dim: self.dim,
            states,
            bob: self.bob.clone(),
        }
    }

    /// `E_key Σ_{α: Dec α = a} ⟨Ψ_{α|Enc x}|N_{b|y}|Ψ_{α|Enc x}⟩`, exact over the key distribution.
    pub fn behavior(&self, scheme: &Scheme) -> Behavior {
        let keys = scheme.key_distribution();
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        for &(pk, k) in &keys {
            for x in 0..2u8 {
                let chi = x ^ k;
                for alpha in 0..2u8 {
                    let a = (alpha ^ k) as usize;
                    let psi = self.state(k, chi, alpha);
                    for y in 0..2 {
                        for b in 0..2 {
                            let v = linalg::expectation(self.bob[y].element(b), psi).re;
                            p[a][b][x as usize][y] += pk * v;
                        }
                    }
                }
            }
        }
        Behavior::from_fn(&BellScenario::binary(), |a, b, x, y| p[a][b][x][y])
    }

    pub fn value(&self, f: &BellFunctional, scheme: &Scheme) -> Result<f64> {
        f.evaluate(&self.behavior(scheme))
    }

    pub fn to_json(&self) -> String {
        let mut states = Vec::new();
        let keys: Vec<Option<u8>> = match self.states {
            KeyedStates::Oblivious(_) => vec![None],
            KeyedStates::PerKey(_) => vec![Some(0), Some(1)],
        };
        for key in keys {
            for chi in 0..2u8 {
                for alpha in 0..2u8 {
                    states.push(StateEntry {
                        key,
                        chi,
                        alpha,
                        vector: MatrixJson::from(self.state(key.unwrap_or(0), chi, alpha)),
                    });
                }
            }
        }
        let j = CompiledJson {
            dim: self.dim,
            states,
            bob: families_to_json(&self.bob),
        };
        serde_json::to_string_pretty(&j).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: CompiledJson = serde_json::from_str(text)?;
        let bob = families_from_json(&j.bob)?;
        let per_key = j.states.iter().any(|s| s.key.is_some());
        if per_key && j.states.iter().any(|s| s.key.is_none()) {
            return Err(Error::Parse("states mix keyed and key-free entries".into()));
        }
        let mut slots: [[[Option<StateVector>; 2]; 2]; 2] = Default::default();
        for s in &j.states {
            let k = s.key.unwrap_or(0);
            if k > 1 || s.chi > 1 || s.alpha > 1 {
                return Err(Error::Parse("key, chi and alpha must be bits".into()));
            }
            let slot = &mut slots[k as usize][s.chi as usize][s.alpha as usize];
            if slot.is_some() {
                return Err(Error::Parse(format!(
                    "duplicate state for key={k} chi={} alpha={}",
                    s.chi, s.alpha
                )));
            }
            *slot = Some(linalg::vector_from_json(&s.vector)?);
        }
        let take = |k: usize| -> Result<StateTable> {
            let mut out: [[Option<StateVector>; 2]; 2] = slots[k].clone();
            let mut pull = |chi: usize, alpha: usize| {
                out[chi][alpha]
                    .take()
                    .ok_or_else(|| Error::Parse(format!("missing state key={k} chi={chi} alpha={alpha}")))
            };
            Ok([[pull(0, 0)?, pull(0, 1)?], [pull(1, 0)?, pull(1, 1)?]])
        };
        let states = if per_key {
            KeyedStates::PerKey([take(0)?, take(1)?])
        } else {
            KeyedStates::Oblivious(take(0)?)
        };
        Self::new(states, bob)
    }
}

#[derive(Serialize, Deserialize)]
struct StateEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<u8>,
    chi: u8,
    alpha: u8,
    vector: MatrixJson,
}

#[derive(Serialize, Deserialize)]
struct CompiledJson {
    dim: usize,
    states: Vec<StateEntry>,
    bob: Vec<Vec<MatrixJson>>,
}

pub(crate) fn families_to_json(fams: &[PovmFamily]) -> Vec<Vec<MatrixJson>> {
    fams.iter()
        .map(|f| f.elements().iter().map(MatrixJson::from).collect())
        .collect()
}

pub(crate) fn families_from_json(j: &[Vec<MatrixJson>]) -> Result<Vec<PovmFamily>> {
    j.iter()
        .map(|els| {
            PovmFamily::new(
                els.iter()
                    .map(ComplexMatrix::try_from)
                    .collect::<Result<Vec<_>>>()?,
            )
        })
        .collect()
}

/// `|Ψ^k_{α|χ}⟩ = |φ_{α⊕k | χ⊕k}⟩` for both keys.
pub fn compiled_counterpart(pm: &PartialModel) -> Result<CompiledModel> {
    if !pm.is_pure() {
        return Err(Error::NotPure);
    }
    if pm.inputs() != 2 || pm.outputs() != 2 {
        return Err(Error::ArityMismatch("counterpart needs two inputs and two outcomes".into()));
    }
    let table = |k: usize| -> StateTable {
        std::array::from_fn(|chi| {
            std::array::from_fn(|alpha| pm.vector(alpha ^ k, chi ^ k).expect("pure").clone())
        })
    };
    CompiledModel::new(KeyedStates::PerKey([table(0), table(1)]), pm.bob().to_vec())
}

/// Alice measures first on `ℋ_A ⊗ ℋ_B`: `|Ψ^k_{α|χ}⟩ = (√M_{α⊕k|χ⊕k} ⊗ 𝟙)|Ψ⟩`, Bob uses `𝟙 ⊗ N`.
pub fn sequential_realization(model: &BipartiteModel) -> Result<CompiledModel> {
    if model.alice().len() != 2 || model.alice()[0].outcomes() != 2 {
        return Err(Error::ArityMismatch("sequential realization needs binary Alice inputs".into()));
    }
    let db = model.dim_b();
    let id_b = linalg::identity(db);
    let mut roots = Vec::with_capacity(2);
    for fam in model.alice() {
        let r: Vec<ComplexMatrix> = fam
            .elements()
            .iter()
            .map(|m| Ok(linalg::kron(&linalg::psd_sqrt(m)?, &id_b)))
            .collect::<Result<_>>()?;
        roots.push(r);
    }
    let table = |k: usize| -> StateTable {
        std::array::from_fn(|chi| {
            std::array::from_fn(|alpha| &roots[chi ^ k][alpha ^ k] * model.state())
        })
    };
    let bob = model
        .bob()
        .iter()
        .map(|f| f.extend_left(model.dim_a()))
        .collect();
    CompiledModel::new(KeyedStates::PerKey([table(0), table(1)]), bob)
}

/// Key-oblivious model: per `χ`, a Haar vector on `ℂ² ⊗ ℂ^dim` split into the
/// two `α` branches; Haar-random Bob observables.
pub fn random_compiled_model(dim: usize, seed: u64) -> Result<CompiledModel> {
    if dim == 0 || dim > MAX_RANDOM_DIM {
        return Err(Error::InvalidArgument(format!("dimension {dim} outside 1..={MAX_RANDOM_DIM}")));
    }
    let mut rng = seeded_rng(seed, 0);
    let table: StateTable = std::array::from_fn(|_| {
        let v = random_state(2 * dim, &mut rng);
        [v.rows(0, dim).into_owned(), v.rows(dim, dim).into_owned()]
    });
    let bob = (0..2)
        .map(|_| {
            use rand::Rng;
            let minus = rng.random_range(0..=dim);
            observable_with_signature(dim, minus, &mut rng).to_pvm()
        })
        .collect();
    CompiledModel::new(KeyedStates::Oblivious(table), bob)
}

/// Sequential realization of a random bipartite model with `dim_a · dim_b ≤ 16`.
pub fn random_sequential_model(dim_a: usize, dim_b: usize, seed: u64) -> Result<CompiledModel> {
    if dim_a == 0 || dim_b == 0 || dim_a * dim_b > MAX_RANDOM_DIM {
        return Err(Error::InvalidArgument(format!(
            "dimensions {dim_a}x{dim_b} exceed {MAX_RANDOM_DIM}"
        )));
    }
    use rand::Rng;
    let mut rng = seeded_rng(seed, 1);
    let mut pvms = |d: usize| -> Vec<PovmFamily> {
        (0..2)
            .map(|_| {
                let minus = rng.random_range(0..=d);
                observable_with_signature(d, minus, &mut rng).to_pvm()
            })
            .collect()
    };
    let alice = pvms(dim_a);
    let bob = pvms(dim_b);
    let state = random_state(dim_a * dim_b, &mut rng);
    sequential_realization(&BipartiteModel::new(alice, bob, state)?)
}

/// Options for [`perturb_honest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub delta: f64,
    pub seed: u64,
    /// Also rotate every state by one seeded unitary `exp(−iδH)`, `‖H‖ = 1`.
    pub rotate_states: bool,
}

/// Honest counterpart with Bob's observables conjugated by `exp(−iδσ_Y)`.
/// Returns the model and its deficit `ε = η^Q − value` under the pad scheme.
pub fn perturb_honest(p: &TiltedParams, opts: Perturbation) -> Result<(CompiledModel, f64)> {
    if !(opts.delta.is_finite() && opts.delta.abs() <= 0.3) {
        return Err(Error::InvalidArgument(format!("|delta| = {} exceeds 0.3", opts.delta)));
    }
    let honest = compiled_counterpart(&honest_model(p).partial_model()?)?;
    let u = linalg::unitary_exp(&linalg::pauli_y(), opts.delta)?;
    let bob = honest
        .bob()
        .iter()
        .map(|f| f.conjugate(&u))
        .collect::<Result<Vec<_>>>()?;
    let states = if opts.rotate_states {
        let mut rng = seeded_rng(opts.seed, 2);
        let h = random_hermitian(2, &mut rng);
        let h = h.scale(1.0 / linalg::op_norm(&h));
        let w = linalg::unitary_exp(&h, opts.delta)?;
        map_states(honest.states(), |v| &w * v)
    } else {
        honest.states().clone()
    };
    let model = CompiledModel::new(states, bob)?;
    let eps = p.eta_q() - model.value(&p.functional(), &Scheme::pad())?;
    Ok((model, eps))
}

fn map_states(states: &KeyedStates, f: impl Fn(&StateVector) -> StateVector) -> KeyedStates {
    let apply = |t: &StateTable| -> StateTable {
        std::array::from_fn(|chi| std::array::from_fn(|alpha| f(&t[chi][alpha])))
    };
    match states {
        KeyedStates::Oblivious(t) => KeyedStates::Oblivious(apply(t)),
        KeyedStates::PerKey(ts) => KeyedStates::PerKey([apply(&ts[0]), apply(&ts[1])]),
    }
}

/// A near-optimal bipartite model: the honest one with a Bob-side auxiliary
/// register of dimension `aux`, then every measurement and the joint state
/// moved by independent seeded unitaries `exp(−iδH)`, `‖H‖ = 1`. Returned in
/// its sequential realization together with `ε`.
pub fn near_optimal_model(
    p: &TiltedParams,
    delta: f64,
    aux: usize,
    seed: u64,
) -> Result<(CompiledModel, f64)> {
    if aux == 0 || 4 * aux > MAX_RANDOM_DIM {
        return Err(Error::InvalidArgument(format!("auxiliary dimension {aux} outside 1..=4")));
    }
    let mut rng = seeded_rng(seed, 3);
    let mut small_unitary = |d: usize| -> Result<ComplexMatrix> {
        let h = random_hermitian(d, &mut rng);
        let h = h.scale(1.0 / linalg::op_norm(&h));
        linalg::unitary_exp(&h, delta)
    };
    let honest = honest_model(p);
    let alice = honest
        .alice()
        .iter()
        .map(|f| f.conjugate(&small_unitary(2)?))
        .collect::<Result<Vec<_>>>()?;
    let bob = honest
        .bob()
        .iter()
        .map(|f| f.extend_right(aux).conjugate(&small_unitary(2 * aux)?))
        .collect::<Result<Vec<_>>>()?;
    let aux_state = {
        let mut r = seeded_rng(seed, 4);
        random_state(aux, &mut r)
    };
    let joint = linalg::kron_vec(honest.state(), &aux_state);
    let state = small_unitary(4 * aux)? * joint;
    let bip = BipartiteModel::new(alice, bob, state.unscale(state.norm()))?;
    let model = sequential_realization(&bip)?;
    let eps = p.eta_q() - model.value(&p.functional(), &Scheme::pad())?;
    Ok((model, eps))
}

/// Deterministic prover: first answer `α(χ)`, second answer `b(χ, y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheatStrategy {
    pub alpha: [u8; 2],
    /// `b[χ][y]`
    pub b: [[u8; 2]; 2],
}

/// Best deterministic classical prover against `scheme`, found by enumerating
/// all 64 strategies. Under the leaky scheme `χ = x`, so Bob's answer may use `x`.
pub fn cheat_classical(f: &BellFunctional, scheme: &Scheme) -> Result<(f64, CheatStrategy)> {
    let s = f.scenario();
    if s.inputs_a != 2 || s.inputs_b != 2 || s.outputs_a != 2 || s.outputs_b != 2 {
        return Err(Error::ArityMismatch("cheating prover needs a 2-input 2-output scenario".into()));
    }
    let keys = scheme.key_distribution();
    let mut best: Option<(f64, CheatStrategy)> = None;
    for code in 0..64u32 {
        let strat = CheatStrategy {
            alpha: [(code & 1) as u8, (code >> 1 & 1) as u8],
            b: [
                [(code >> 2 & 1) as u8, (code >> 3 & 1) as u8],
                [(code >> 4 & 1) as u8, (code >> 5 & 1) as u8],
            ],
        };
        let mut v = 0.0;
        for &(pk, k) in &keys {
            for x in 0..2u8 {
                let chi = x ^ k;
                let a = strat.alpha[chi as usize] ^ k;
                for y in 0..2 {
                    let b = strat.b[chi as usize][y];
                    v += pk * f.weight(a as usize, b as usize, x as usize, y);
                }
            }
        }
        if best.as_ref().is_none_or(|(bv, _)| v > *bv + 1e-12) {
            best = Some((v, strat));
        }
    }
    Ok(best.expect("64 strategies enumerated"))
}
