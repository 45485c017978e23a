//! Bell scenarios, bipartite and partial models, Bell functionals and classical values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::linalg::{self, ComplexMatrix, MatrixJson, PovmFamily, StateVector};

/// Upper limit on deterministic strategies per party in classical enumeration.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

const NORM_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-9;

/// Input/output alphabets and the input distribution `π(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellScenario {
    pub inputs_a: usize,
    pub inputs_b: usize,
    pub outputs_a: usize,
    pub outputs_b: usize,
    /// `pi[x][y]`
    pub pi: Vec<Vec<f64>>,
}

impl BellScenario {
    pub fn new(
        inputs_a: usize,
        inputs_b: usize,
        outputs_a: usize,
        outputs_b: usize,
        pi: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let s = Self {
            inputs_a,
            inputs_b,
            outputs_a,
            outputs_b,
            pi,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform(inputs_a: usize, inputs_b: usize, outputs_a: usize, outputs_b: usize) -> Self {
        let p = 1.0 / (inputs_a * inputs_b).max(1) as f64;
        Self {
            inputs_a,
            inputs_b,
            outputs_a,
            outputs_b,
            pi: vec![vec![p; inputs_b]; inputs_a],
        }
    }

    /// Two inputs and two outputs per party, uniform inputs.
    pub fn binary() -> Self {
        Self::uniform(2, 2, 2, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs_a == 0 || self.inputs_b == 0 || self.outputs_a == 0 || self.outputs_b == 0 {
            return Err(Error::InvalidScenario("empty alphabet".into()));
        }
        if self.pi.len() != self.inputs_a || self.pi.iter().any(|r| r.len() != self.inputs_b) {
            return Err(Error::InvalidScenario("input distribution has the wrong shape".into()));
        }
        let mut total = 0.0;
        for &p in self.pi.iter().flatten() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidScenario(format!("invalid probability {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidScenario(format!("input distribution sums to {total}")));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.inputs_a == other.inputs_a
            && self.inputs_b == other.inputs_b
            && self.outputs_a == other.outputs_a
            && self.outputs_b == other.outputs_b
    }

    fn table_len(&self) -> usize {
        self.outputs_a * self.outputs_b * self.inputs_a * self.inputs_b
    }

    fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        ((a * self.outputs_b + b) * self.inputs_a + x) * self.inputs_b + y
    }
}

/// Conditional distribution table `p(a, b | x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    scenario: BellScenario,
    p: Vec<f64>,
}

impl Behavior {
    pub fn from_fn(scenario: &BellScenario, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut p = vec![0.0; scenario.table_len()];
        for a in 0..scenario.outputs_a {
            for b in 0..scenario.outputs_b {
                for x in 0..scenario.inputs_a {
                    for y in 0..scenario.inputs_b {
                        p[scenario.index(a, b, x, y)] = f(a, b, x, y);
                    }
                }
            }
        }
        Self {
            scenario: scenario.clone(),
            p,
        }
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[self.scenario.index(a, b, x, y)]
    }

    /// `p(a | x, y)`
    pub fn alice_marginal(&self, a: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.outputs_b).map(|b| self.get(a, b, x, y)).sum()
    }

    /// `p(b | x, y)`
    pub fn bob_marginal(&self, b: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.outputs_a).map(|a| self.get(a, b, x, y)).sum()
    }

    /// Largest deviation of any conditional distribution from total mass 1.
    pub fn normalization_defect(&self) -> f64 {
        let s = &self.scenario;
        let mut worst = 0.0_f64;
        for x in 0..s.inputs_a {
            for y in 0..s.inputs_b {
                let total: f64 = (0..s.outputs_a).map(|a| self.alice_marginal(a, x, y)).sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
        worst
    }

    /// `max |p(a|x,y) − p(a|x,y')|`
    pub fn alice_signalling(&self) -> f64 {
        let s = &self.scenario;
        let mut worst = 0.0_f64;
        for x in 0..s.inputs_a {
            for a in 0..s.outputs_a {
                for y in 0..s.inputs_b {
                    for y2 in 0..s.inputs_b {
                        let d = self.alice_marginal(a, x, y) - self.alice_marginal(a, x, y2);
                        worst = worst.max(d.abs());
                    }
                }
            }
        }
        worst
    }

    /// `max |p(b|x,y) − p(b|x',y)|`
    pub fn bob_signalling(&self) -> f64 {
        let s = &self.scenario;
        let mut worst = 0.0_f64;
        for y in 0..s.inputs_b {
            for b in 0..s.outputs_b {
                for x in 0..s.inputs_a {
                    for x2 in 0..s.inputs_a {
                        let d = self.bob_marginal(b, x, y) - self.bob_marginal(b, x2, y);
                        worst = worst.max(d.abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest entrywise difference; `None` when shapes differ.
    pub fn max_difference(&self, other: &Behavior) -> Option<f64> {
        if !self.scenario.same_shape(&other.scenario) {
            return None;
        }
        Some(
            self.p
                .iter()
                .zip(&other.p)
                .fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs())),
        )
    }
}

/// Real weights `w_{abxy}` together with the scenario they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct BellFunctional {
    scenario: BellScenario,
    weights: Vec<f64>,
}

impl BellFunctional {
    pub fn zero(scenario: BellScenario) -> Self {
        let weights = vec![0.0; scenario.table_len()];
        Self { scenario, weights }
    }

    pub fn from_fn(
        scenario: BellScenario,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let table = Behavior::from_fn(&scenario, f);
        if table.p.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("Bell functional weights"));
        }
        Ok(Self {
            scenario,
            weights: table.p,
        })
    }

    /// `A0B0 + A0B1 + A1B0 − A1B1` with uniform inputs.
    pub fn chsh() -> Self {
        let mut f = Self::zero(BellScenario::binary());
        for x in 0..2 {
            for y in 0..2 {
                let sign = if x == 1 && y == 1 { -1.0 } else { 1.0 };
                f.add_correlator(x, y, sign);
            }
        }
        f
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    pub fn weight(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.weights[self.scenario.index(a, b, x, y)]
    }

    pub fn add_weight(&mut self, a: usize, b: usize, x: usize, y: usize, w: f64) {
        let i = self.scenario.index(a, b, x, y);
        self.weights[i] += w;
    }

    fn require_binary(&self) {
        assert!(
            self.scenario.outputs_a == 2 && self.scenario.outputs_b == 2,
            "observable terms need binary outcomes"
        );
    }

    /// Adds `c · A_x ⊗ B_y`.
    pub fn add_correlator(&mut self, x: usize, y: usize, c: f64) {
        self.require_binary();
        for a in 0..2 {
            for b in 0..2 {
                self.add_weight(a, b, x, y, c * sign(a + b));
            }
        }
    }

    /// Adds `c · A_x ⊗ 𝟙`, spread evenly over Bob's inputs.
    pub fn add_alice_marginal(&mut self, x: usize, c: f64) {
        self.require_binary();
        let ny = self.scenario.inputs_b as f64;
        for y in 0..self.scenario.inputs_b {
            for a in 0..2 {
                for b in 0..2 {
                    self.add_weight(a, b, x, y, c * sign(a) / ny);
                }
            }
        }
    }

    /// Adds `c · 𝟙 ⊗ B_y`, spread evenly over Alice's inputs.
    pub fn add_bob_marginal(&mut self, y: usize, c: f64) {
        self.require_binary();
        let nx = self.scenario.inputs_a as f64;
        for x in 0..self.scenario.inputs_a {
            for a in 0..2 {
                for b in 0..2 {
                    self.add_weight(a, b, x, y, c * sign(b) / nx);
                }
            }
        }
    }

    /// Adds `c · 𝟙`, spread evenly over all input pairs.
    pub fn add_constant(&mut self, c: f64) {
        let s = self.scenario.clone();
        let share = c / (s.inputs_a * s.inputs_b) as f64;
        for x in 0..s.inputs_a {
            for y in 0..s.inputs_b {
                for a in 0..s.outputs_a {
                    for b in 0..s.outputs_b {
                        self.add_weight(a, b, x, y, share);
                    }
                }
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            scenario: self.scenario.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// Largest weight difference; `None` when shapes differ.
    pub fn max_difference(&self, other: &Self) -> Option<f64> {
        if !self.scenario.same_shape(&other.scenario) {
            return None;
        }
        Some(
            self.weights
                .iter()
                .zip(&other.weights)
                .fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs())),
        )
    }

    /// `Σ w_{abxy} p(a,b|x,y)`
    pub fn evaluate(&self, behavior: &Behavior) -> Result<f64> {
        if !self.scenario.same_shape(&behavior.scenario) {
            return Err(Error::ArityMismatch("functional and behavior scenarios differ".into()));
        }
        Ok(self.weights.iter().zip(&behavior.p).map(|(w, p)| w * p).sum())
    }

    /// `S = Σ w_{abxy} M_{a|x} ⊗ N_{b|y}`
    pub fn bell_operator(&self, alice: &[PovmFamily], bob: &[PovmFamily]) -> Result<ComplexMatrix> {
        let s = &self.scenario;
        check_families(alice, s.inputs_a, s.outputs_a, "Alice")?;
        check_families(bob, s.inputs_b, s.outputs_b, "Bob")?;
        let da = alice[0].dim();
        let db = bob[0].dim();
        let mut op = linalg::zeros(da * db, da * db);
        for x in 0..s.inputs_a {
            for y in 0..s.inputs_b {
                for a in 0..s.outputs_a {
                    let mut bob_part = linalg::zeros(db, db);
                    let mut any = false;
                    for b in 0..s.outputs_b {
                        let w = self.weight(a, b, x, y);
                        if w != 0.0 {
                            bob_part += bob[y].element(b) * linalg::real(w);
                            any = true;
                        }
                    }
                    if any {
                        op += linalg::kron(alice[x].element(a), &bob_part);
                    }
                }
            }
        }
        Ok(op)
    }

    /// Exact classical value by enumeration of deterministic strategies.
    pub fn classical_value(&self) -> Result<ClassicalValue> {
        let s = &self.scenario;
        let count = |m: usize, n: usize| (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        let alice_count = count(s.outputs_a, s.inputs_a);
        let bob_count = count(s.outputs_b, s.inputs_b);
        for c in [alice_count, bob_count] {
            if c > ENUMERATION_LIMIT {
                return Err(Error::BudgetExceeded {
                    strategies: c,
                    limit: ENUMERATION_LIMIT,
                });
            }
        }
        let per_alice = par_map(alice_count as usize, |idx| {
            let alice = digits(idx, s.outputs_a, s.inputs_a);
            // Bob's best response decouples over y.
            let mut total = 0.0;
            let mut best_per_y: Vec<Vec<usize>> = Vec::with_capacity(s.inputs_b);
            for y in 0..s.inputs_b {
                let scores: Vec<f64> = (0..s.outputs_b)
                    .map(|b| (0..s.inputs_a).map(|x| self.weight(alice[x], b, x, y)).sum())
                    .collect();
                let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                total += best;
                best_per_y.push(
                    (0..s.outputs_b)
                        .filter(|&b| is_tie(scores[b], best))
                        .collect(),
                );
            }
            (total, alice, best_per_y)
        });
        let value = per_alice
            .iter()
            .map(|(v, _, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut maximizers = Vec::new();
        for (v, alice, best_per_y) in per_alice {
            if is_tie(v, value) {
                for bob in cartesian(&best_per_y) {
                    maximizers.push(DeterministicStrategy {
                        alice: alice.clone(),
                        bob,
                    });
                }
            }
        }
        maximizers.sort();
        Ok(ClassicalValue { value, maximizers })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FunctionalJson::from(self)).expect("functional serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: FunctionalJson = serde_json::from_str(text)?;
        Self::try_from(j)
    }
}

fn is_tie(v: f64, best: f64) -> bool {
    (v - best).abs() <= 1e-12 * (1.0 + best.abs())
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn digits(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

fn cartesian(choices: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for options in choices {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |&o| {
                    let mut p = prefix.clone();
                    p.push(o);
                    p
                })
            })
            .collect();
    }
    out
}

fn check_families(fams: &[PovmFamily], inputs: usize, outputs: usize, who: &str) -> Result<()> {
    if fams.len() != inputs {
        return Err(Error::ArityMismatch(format!(
            "{who} has {} measurement families, scenario expects {inputs}",
            fams.len()
        )));
    }
    let dim = fams[0].dim();
    for (k, f) in fams.iter().enumerate() {
        if f.outcomes() != outputs {
            return Err(Error::ArityMismatch(format!(
                "{who} family {k} has {} outcomes, scenario expects {outputs}",
                f.outcomes()
            )));
        }
        if f.dim() != dim {
            return Err(Error::DimensionMismatch(format!("{who} families act on different spaces")));
        }
    }
    Ok(())
}

/// Deterministic local strategy: `alice[x]` and `bob[y]` are the outputs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub alice: Vec<usize>,
    pub bob: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalValue {
    pub value: f64,
    /// All optimal strategies, lexicographically ordered.
    pub maximizers: Vec<DeterministicStrategy>,
}

#[derive(Serialize, Deserialize)]
struct FunctionalJson {
    weights: BTreeMap<String, f64>,
    scenario: BellScenario,
}

impl From<&BellFunctional> for FunctionalJson {
    fn from(f: &BellFunctional) -> Self {
        let s = &f.scenario;
        let mut weights = BTreeMap::new();
        for a in 0..s.outputs_a {
            for b in 0..s.outputs_b {
                for x in 0..s.inputs_a {
                    for y in 0..s.inputs_b {
                        let w = f.weight(a, b, x, y);
                        if w != 0.0 {
                            weights.insert(format!("{a},{b},{x},{y}"), w);
                        }
                    }
                }
            }
        }
        Self {
            weights,
            scenario: s.clone(),
        }
    }
}

impl TryFrom<FunctionalJson> for BellFunctional {
    type Error = Error;

    fn try_from(j: FunctionalJson) -> Result<Self> {
        j.scenario.validate()?;
        let mut f = BellFunctional::zero(j.scenario);
        let s = f.scenario.clone();
        for (key, w) in j.weights {
            let idx: Vec<usize> = key
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("weight key {key:?} is not \"a,b,x,y\"")))?;
            let [a, b, x, y] = idx[..] else {
                return Err(Error::Parse(format!("weight key {key:?} is not \"a,b,x,y\"")));
            };
            if a >= s.outputs_a || b >= s.outputs_b || x >= s.inputs_a || y >= s.inputs_b {
                return Err(Error::ArityMismatch(format!("weight key {key:?} out of range")));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite("Bell functional weights"));
            }
            f.add_weight(a, b, x, y, w);
        }
        Ok(f)
    }
}

/// Tensor-product model `(ℋ_A, ℋ_B, {M_{a|x}}, {N_{b|y}}, |Ψ⟩)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteModel {
    alice: Vec<PovmFamily>,
    bob: Vec<PovmFamily>,
    state: StateVector,
}

impl BipartiteModel {
    pub fn new(alice: Vec<PovmFamily>, bob: Vec<PovmFamily>, state: StateVector) -> Result<Self> {
        if alice.is_empty() || bob.is_empty() {
            return Err(Error::InvalidModel("each party needs at least one input".into()));
        }
        let da = alice[0].dim();
        let db = bob[0].dim();
        let oa = alice[0].outcomes();
        let ob = bob[0].outcomes();
        check_families(&alice, alice.len(), oa, "Alice")?;
        check_families(&bob, bob.len(), ob, "Bob")?;
        if state.len() != da * db {
            return Err(Error::DimensionMismatch(format!(
                "state has length {}, expected {da}·{db}",
                state.len()
            )));
        }
        if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        let n = state.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("state norm {n}")));
        }
        Ok(Self { alice, bob, state })
    }

    pub fn dim_a(&self) -> usize {
        self.alice[0].dim()
    }

    pub fn dim_b(&self) -> usize {
        self.bob[0].dim()
    }

    pub fn alice(&self) -> &[PovmFamily] {
        &self.alice
    }

    pub fn bob(&self) -> &[PovmFamily] {
        &self.bob
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    /// Scenario shape of this model with uniform inputs.
    pub fn scenario(&self) -> BellScenario {
        BellScenario::uniform(
            self.alice.len(),
            self.bob.len(),
            self.alice[0].outcomes(),
            self.bob[0].outcomes(),
        )
    }

    /// Born-rule table `⟨Ψ| M_{a|x} ⊗ N_{b|y} |Ψ⟩`.
    pub fn correlation(&self) -> Behavior {
        let s = self.scenario();
        Behavior::from_fn(&s, |a, b, x, y| {
            let op = linalg::kron(self.alice[x].element(a), self.bob[y].element(b));
            linalg::expectation(&op, &self.state).re
        })
    }

    /// `⟨Ψ|S|Ψ⟩`
    pub fn value(&self, f: &BellFunctional) -> Result<f64> {
        let s = f.bell_operator(&self.alice, &self.bob)?;
        Ok(linalg::expectation(&s, &self.state).re)
    }

    /// `ρ_{a|x} = tr_A[(M_{a|x} ⊗ 𝟙)|Ψ⟩⟨Ψ|]`
    pub fn partial_model(&self) -> Result<PartialModel> {
        let (da, db) = (self.dim_a(), self.dim_b());
        let proj = linalg::outer(&self.state);
        let id_b = linalg::identity(db);
        let mut rho = Vec::with_capacity(self.alice.len());
        for fam in &self.alice {
            let mut per_a = Vec::with_capacity(fam.outcomes());
            for m in fam.elements() {
                let lifted = linalg::kron(m, &id_b) * &proj;
                per_a.push(linalg::hermitian_part(&linalg::partial_trace_first(&lifted, da, db)?));
            }
            rho.push(per_a);
        }
        PartialModel::new(self.bob.clone(), rho)
    }
}

/// Bob's side of a bipartite model: `ρ_{a|x}` and his measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialModel {
    bob: Vec<PovmFamily>,
    /// `rho[x][a]`
    rho: Vec<Vec<ComplexMatrix>>,
    /// `vectors[x][a]` with `ρ_{a|x} = |φ⟩⟨φ|`, present when every `ρ` has rank ≤ 1.
    vectors: Option<Vec<Vec<StateVector>>>,
}

impl PartialModel {
    pub fn new(bob: Vec<PovmFamily>, rho: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        if bob.is_empty() || rho.is_empty() {
            return Err(Error::InvalidModel("partial model needs inputs on both sides".into()));
        }
        let d = bob[0].dim();
        let mut vectors = Some(Vec::with_capacity(rho.len()));
        for (x, per_a) in rho.iter().enumerate() {
            let mut total = 0.0;
            let mut vs = Vec::with_capacity(per_a.len());
            for r in per_a {
                if r.nrows() != d || r.ncols() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "ρ has dimension {}x{}, Bob acts on {d}",
                        r.nrows(),
                        r.ncols()
                    )));
                }
                let eig = linalg::eig_herm(r)?;
                if eig.values.first().is_some_and(|&l| l < -RANK_TOL) {
                    return Err(Error::InvalidState("post-measurement operator not PSD".into()));
                }
                total += r.trace().re;
                let top = eig.values[d - 1];
                let second = if d >= 2 { eig.values[d - 2] } else { 0.0 };
                if second > RANK_TOL {
                    vectors = None;
                } else if vectors.is_some() {
                    let v = eig.vector(d - 1) * linalg::real(top.max(0.0).sqrt());
                    vs.push(v);
                }
            }
            if (total - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidState(format!("Σ_a tr ρ_(a|{x}) = {total}")));
            }
            if let Some(all) = vectors.as_mut() {
                all.push(vs);
            }
        }
        Ok(Self { bob, rho, vectors })
    }

    pub fn bob(&self) -> &[PovmFamily] {
        &self.bob
    }

    pub fn rho(&self, a: usize, x: usize) -> &ComplexMatrix {
        &self.rho[x][a]
    }

    pub fn inputs(&self) -> usize {
        self.rho.len()
    }

    pub fn outputs(&self) -> usize {
        self.rho[0].len()
    }

    pub fn is_pure(&self) -> bool {
        self.vectors.is_some()
    }

    /// Sub-normalized `|φ_{a|x}⟩` for pure partial models.
    pub fn vector(&self, a: usize, x: usize) -> Option<&StateVector> {
        self.vectors.as_ref().map(|v| &v[x][a])
    }

    /// `p(a,b|x,y) = tr[N_{b|y} ρ_{a|x}]`
    pub fn behavior(&self) -> Behavior {
        let s = BellScenario::uniform(
            self.inputs(),
            self.bob.len(),
            self.outputs(),
            self.bob[0].outcomes(),
        );
        Behavior::from_fn(&s, |a, b, x, y| {
            (self.bob[y].element(b) * &self.rho[x][a]).trace().re
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BipartiteJson {
    alice: Vec<Vec<MatrixJson>>,
    bob: Vec<Vec<MatrixJson>>,
    state: MatrixJson,
}

impl BipartiteModel {
    pub fn to_json(&self) -> String {
        let fams = |f: &[PovmFamily]| {
            f.iter()
                .map(|p| p.elements().iter().map(MatrixJson::from).collect())
                .collect()
        };
        let j = BipartiteJson {
            alice: fams(&self.alice),
            bob: fams(&self.bob),
            state: MatrixJson::from(&self.state),
        };
        serde_json::to_string_pretty(&j).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: BipartiteJson = serde_json::from_str(text)?;
        let fams = |f: &[Vec<MatrixJson>]| -> Result<Vec<PovmFamily>> {
            f.iter()
                .map(|els| {
                    let m = els
                        .iter()
                        .map(ComplexMatrix::try_from)
                        .collect::<Result<Vec<_>>>()?;
                    PovmFamily::new(m)
                })
                .collect()
        };
        Self::new(fams(&j.alice)?, fams(&j.bob)?, linalg::vector_from_json(&j.state)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli_x, pauli_z, BinaryObservable};
    use crate::random::{random_povm, random_state, seeded_rng};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn pvm(m: ComplexMatrix) -> PovmFamily {
        BinaryObservable::new(m).unwrap().to_pvm()
    }

    fn chsh_model() -> BipartiteModel {
        let s = FRAC_1_SQRT_2;
        let bp = (pauli_z() + pauli_x()) * linalg::real(s);
        let bm = (pauli_z() - pauli_x()) * linalg::real(s);
        let phi = (linalg::basis(4, 0) + linalg::basis(4, 3)) * linalg::real(s);
        BipartiteModel::new(vec![pvm(pauli_z()), pvm(pauli_x())], vec![pvm(bp), pvm(bm)], phi).unwrap()
    }

    #[test]
    fn product_state_computational_basis() {
        let m = BipartiteModel::new(
            vec![pvm(pauli_z()), pvm(pauli_z())],
            vec![pvm(pauli_z()), pvm(pauli_z())],
            linalg::basis(4, 0),
        )
        .unwrap();
        let p = m.correlation();
        for x in 0..2 {
            for y in 0..2 {
                assert!((p.get(0, 0, x, y) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chsh_quantum_value() {
        let m = chsh_model();
        let f = BellFunctional::chsh();
        let v = m.value(&f).unwrap();
        assert!((v - 2.0 * SQRT_2).abs() < 1e-10);
        let via_table = f.evaluate(&m.correlation()).unwrap();
        assert!((v - via_table).abs() < 1e-10);
        let s = f.bell_operator(m.alice(), m.bob()).unwrap();
        assert!((linalg::op_norm(&s) - 2.0 * SQRT_2).abs() < 1e-10);
        assert!(linalg::hermiticity_defect(&s) <= 1e-10);
    }

    #[test]
    fn zero_functional() {
        let f = BellFunctional::zero(BellScenario::binary());
        let m = chsh_model();
        assert_eq!(f.bell_operator(m.alice(), m.bob()).unwrap(), linalg::zeros(4, 4));
        let c = f.classical_value().unwrap();
        assert_eq!(c.value, 0.0);
        assert_eq!(c.maximizers.len(), 16);
    }

    #[test]
    fn chsh_classical_value() {
        let c = BellFunctional::chsh().classical_value().unwrap();
        assert_eq!(c.value, 2.0);
        assert_eq!(c.maximizers.len(), 8);
        assert!(c.maximizers.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn budget_exceeded() {
        let f = BellFunctional::zero(BellScenario::uniform(21, 2, 2, 2));
        assert!(matches!(f.classical_value(), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn arity_mismatch() {
        let f = BellFunctional::zero(BellScenario::uniform(3, 2, 2, 2));
        let m = chsh_model();
        assert!(matches!(f.bell_operator(m.alice(), m.bob()), Err(Error::ArityMismatch(_))));
    }

    #[test]
    fn marginal_expansion_convention() {
        let mut f = BellFunctional::zero(BellScenario::binary());
        f.add_alice_marginal(0, 1.0);
        f.add_bob_marginal(1, 2.0);
        f.add_constant(3.0);
        let m = chsh_model();
        let s = f.bell_operator(m.alice(), m.bob()).unwrap();
        let expected = linalg::kron(&pauli_z(), &linalg::identity(2))
            + linalg::kron(&linalg::identity(2), &m.bob()[1].observable().unwrap()).scale(2.0)
            + linalg::identity(4).scale(3.0);
        assert!((s - expected).norm() < 1e-12);
    }

    #[test]
    fn partial_model_maximally_mixed() {
        let triv = PovmFamily::new(vec![linalg::identity(2), linalg::zeros(2, 2)]).unwrap();
        let phi = (linalg::basis(4, 0) + linalg::basis(4, 3)) * linalg::real(FRAC_1_SQRT_2);
        let m = BipartiteModel::new(vec![triv.clone(), triv], vec![pvm(pauli_z())], phi).unwrap();
        let pm = m.partial_model().unwrap();
        assert!(!pm.is_pure());
        assert!((pm.rho(0, 0) - linalg::identity(2).scale(0.5)).norm() < 1e-12);
    }

    #[test]
    fn functional_json_round_trip() {
        let mut f = BellFunctional::chsh();
        f.add_alice_marginal(1, 0.25);
        let back = BellFunctional::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert!(BellFunctional::from_json(r#"{"weights":{"0,0,5,0":1.0},"scenario":{"inputs_a":2,"inputs_b":2,"outputs_a":2,"outputs_b":2,"pi":[[0.25,0.25],[0.25,0.25]]}}"#).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = chsh_model();
        let back = BipartiteModel::from_json(&m.to_json()).unwrap();
        assert!(back.correlation().max_difference(&m.correlation()).unwrap() < 1e-15);
    }

    #[test]
    fn invalid_scenario_rejected() {
        assert!(BellScenario::new(2, 2, 2, 2, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).is_err());
        assert!(BellScenario::new(2, 2, 2, 2, vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_ok());
    }

    fn random_functional(rng: &mut impl Rng) -> BellFunctional {
        let w: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        BellFunctional::from_fn(BellScenario::binary(), |a, b, x, y| w[a * 8 + b * 4 + x * 2 + y]).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn product_states_never_violate(seed in any::<u64>()) {
            let mut rng = seeded_rng(seed, 0);
            let f = random_functional(&mut rng);
            let (da, db) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let state = linalg::kron_vec(&random_state(da, &mut rng), &random_state(db, &mut rng));
            let alice = (0..2).map(|_| random_povm(da, 2, &mut rng)).collect();
            let bob = (0..2).map(|_| random_povm(db, 2, &mut rng)).collect();
            let m = BipartiteModel::new(alice, bob, state).unwrap();
            let c = f.classical_value().unwrap().value;
            prop_assert!(m.value(&f).unwrap() <= c + 1e-9);
        }

        #[test]
        fn correlations_are_normalized_and_no_signalling(seed in any::<u64>()) {
            let mut rng = seeded_rng(seed, 1);
            let (da, db) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let state = random_state(da * db, &mut rng);
            let alice = (0..2).map(|_| random_povm(da, 2, &mut rng)).collect();
            let bob = (0..2).map(|_| random_povm(db, 2, &mut rng)).collect();
            let m = BipartiteModel::new(alice, bob, state).unwrap();
            let p = m.correlation();
            prop_assert!(p.normalization_defect() <= 1e-10);
            prop_assert!(p.alice_signalling() <= 1e-10);
            prop_assert!(p.bob_signalling() <= 1e-10);
        }

        #[test]
        fn classical_value_matches_deterministic_models(seed in any::<u64>()) {
            let mut rng = seeded_rng(seed, 2);
            let f = random_functional(&mut rng);
            let c = f.classical_value().unwrap();
            let mut best = f64::NEG_INFINITY;
            for idx in 0..16usize {
                let (a0, a1, b0, b1) = (idx >> 3 & 1, idx >> 2 & 1, idx >> 1 & 1, idx & 1);
                let table = Behavior::from_fn(&BellScenario::binary(), |a, b, x, y| {
                    let aa = if x == 0 { a0 } else { a1 };
                    let bb = if y == 0 { b0 } else { b1 };
                    if a == aa && b == bb { 1.0 } else { 0.0 }
                });
                best = best.max(f.evaluate(&table).unwrap());
            }
            prop_assert!((best - c.value).abs() <= 1e-12);
        }
    }
}
