//! Naimark dilation of POVMs and purification of sub-normalized states.
//!
//! A compiled description with mixed states and general POVMs is turned into
//! a pure, projective [`CompiledModel`] with the same behavior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bell::Behavior;
use crate::compiled::{families_from_json, families_to_json, CompiledModel, KeyedStates, StateTable};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, MatrixJson, PovmFamily, StateVector};
use crate::qhe::Scheme;
use crate::random::{random_density, random_povm, seeded_rng};

const PSD_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const BEHAVIOR_TOL: f64 = 1e-10;
/// Residual norm below which a candidate basis vector is treated as dependent.
const GS_TOL: f64 = 1e-8;

/// A POVM `{N_b}` on `ℂ^d` realized as the PVM `Ñ_b = U†(|b⟩⟨b| ⊗ 𝟙)U` on `ℂ^m ⊗ ℂ^d`.
#[derive(Debug, Clone)]
pub struct DilationResult {
    input_dim: usize,
    /// `U(|0⟩ ⊗ φ) = Σ_b |b⟩ ⊗ √N_b φ`
    unitary: ComplexMatrix,
    pvm: PovmFamily,
}

impl DilationResult {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embedded_dim(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn outcomes(&self) -> usize {
        self.pvm.outcomes()
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    pub fn pvm(&self) -> &PovmFamily {
        &self.pvm
    }

    /// `|0⟩ ⊗ φ`
    pub fn embed_state(&self, phi: &StateVector) -> Result<StateVector> {
        if phi.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "state of length {} into a dilation of a {}-dimensional POVM",
                phi.len(),
                self.input_dim
            )));
        }
        Ok(linalg::kron_vec(&linalg::basis(self.outcomes(), 0), phi))
    }

    /// `|0⟩⟨0| ⊗ ρ`
    pub fn embed_density(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != self.input_dim || rho.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch("density has the wrong dimension".into()));
        }
        Ok(linalg::kron(&linalg::outer(&linalg::basis(self.outcomes(), 0)), rho))
    }
}

/// Extends orthonormal columns to a unitary with Gram–Schmidt over the
/// canonical basis, taken in index order.
fn complete_unitary(v: &ComplexMatrix) -> ComplexMatrix {
    let n = v.nrows();
    let mut cols: Vec<StateVector> = (0..v.ncols()).map(|j| v.column(j).into_owned()).collect();
    for i in 0..n {
        if cols.len() == n {
            break;
        }
        let mut w = linalg::basis(n, i);
        // Two passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for c in &cols {
                let overlap = c.dotc(&w);
                w -= c * overlap;
            }
        }
        let norm = w.norm();
        if norm > GS_TOL {
            cols.push(w.unscale(norm));
        }
    }
    ComplexMatrix::from_columns(&cols)
}

pub fn naimark(povm: &PovmFamily) -> Result<DilationResult> {
    let d = povm.dim();
    let m = povm.outcomes();
    let mut v = linalg::zeros(m * d, d);
    for b in 0..m {
        let root = linalg::psd_sqrt(povm.element(b))?;
        v.view_mut((b * d, 0), (d, d)).copy_from(&root);
    }
    // The columns of V start at `|0⟩ ⊗ e_j`, which are the first `d` basis vectors.
    let mut unitary = complete_unitary(&v);
    if unitary.ncols() != m * d {
        return Err(Error::Consistency(format!(
            "unitary completion found {} of {} columns",
            unitary.ncols(),
            m * d
        )));
    }
    unitary.view_mut((0, 0), (m * d, d)).copy_from(&v);
    let elements = (0..m)
        .map(|b| {
            let proj = linalg::kron(&linalg::outer(&linalg::basis(m, b)), &linalg::identity(d));
            linalg::hermitian_part(&(unitary.adjoint() * proj * &unitary))
        })
        .collect();
    let pvm = PovmFamily::with_labels(elements, povm.labels().to_vec())?;
    if !pvm.is_projective() {
        return Err(Error::Consistency("dilated family is not projective".into()));
    }
    Ok(DilationResult {
        input_dim: d,
        unitary,
        pvm,
    })
}

fn check_density(rho: &ComplexMatrix) -> Result<f64> {
    linalg::ensure_square(rho)?;
    linalg::ensure_finite(rho, "density matrix")?;
    let defect = linalg::hermiticity_defect(rho);
    if defect > linalg::TOL_HERM {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let low = linalg::min_eigenvalue(rho)?;
    if low < -PSD_TOL {
        return Err(Error::InvalidState(format!("density has eigenvalue {low:.3e}")));
    }
    Ok(linalg::trace(rho).re)
}

/// `Σ_k √λ_k |v_k⟩ ⊗ |k⟩` on `ℋ ⊗ ℋ` with eigenvalues in descending order.
/// The squared norm is `tr ρ`.
pub fn purify(rho: &ComplexMatrix) -> Result<StateVector> {
    let tr = check_density(rho)?;
    if tr > 1.0 + TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {tr} exceeds 1")));
    }
    let d = rho.nrows();
    let eig = linalg::eig_herm(rho)?;
    let mut out = StateVector::zeros(d * d);
    for (k, idx) in descending_order(&eig.values).into_iter().enumerate() {
        let lambda = eig.values[idx].max(0.0);
        if lambda == 0.0 {
            continue;
        }
        out += linalg::kron_vec(&eig.vector(idx), &linalg::basis(d, k)).scale(lambda.sqrt());
    }
    Ok(out)
}

/// Indices by descending value, keeping the given order inside degenerate clusters.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if (values[c[0]] - v).abs() <= 1e-9 => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters.into_iter().rev().flatten().collect()
}

/// `table[χ][α] = ρ_{α|χ}`
pub type DensityTable = [[ComplexMatrix; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub enum KeyedDensities {
    Oblivious(DensityTable),
    PerKey([DensityTable; 2]),
}

impl KeyedDensities {
    pub fn table(&self, key: u8) -> &DensityTable {
        match self {
            KeyedDensities::Oblivious(t) => t,
            KeyedDensities::PerKey(ts) => &ts[key as usize],
        }
    }

    fn tables(&self) -> Vec<&DensityTable> {
        match self {
            KeyedDensities::Oblivious(t) => vec![t],
            KeyedDensities::PerKey(ts) => ts.iter().collect(),
        }
    }
}

/// Sub-normalized mixed states `ρ_{α|χ}` with `Σ_α tr ρ_{α|χ} = 1` and binary Bob POVMs.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedCompiledModel {
    dim: usize,
    states: KeyedDensities,
    bob: Vec<PovmFamily>,
}

impl MixedCompiledModel {
    pub fn new(states: KeyedDensities, bob: Vec<PovmFamily>) -> Result<Self> {
        if bob.len() != 2 || bob.iter().any(|f| f.outcomes() != 2) {
            return Err(Error::InvalidModel("need two binary Bob measurements".into()));
        }
        let dim = bob[0].dim();
        if bob[1].dim() != dim {
            return Err(Error::InvalidModel("Bob measurements act on different spaces".into()));
        }
        for table in states.tables() {
            for (chi, row) in table.iter().enumerate() {
                let mut total = 0.0;
                for rho in row {
                    if rho.nrows() != dim {
                        return Err(Error::DimensionMismatch(format!(
                            "density of dimension {} on a {dim}-dimensional space",
                            rho.nrows()
                        )));
                    }
                    total += check_density(rho)?;
                }
                if (total - 1.0).abs() > TRACE_TOL {
                    return Err(Error::InvalidModel(format!("chi={chi}: traces sum to {total}")));
                }
            }
        }
        Ok(Self { dim, states, bob })
    }

    /// `ρ_{α|χ} = |Ψ_{α|χ}⟩⟨Ψ_{α|χ}|`
    pub fn from_pure(model: &CompiledModel) -> Self {
        let conv = |t: &StateTable| -> DensityTable {
            std::array::from_fn(|chi| std::array::from_fn(|alpha| linalg::outer(&t[chi][alpha])))
        };
        let states = match model.states() {
            KeyedStates::Oblivious(t) => KeyedDensities::Oblivious(conv(t)),
            KeyedStates::PerKey(ts) => KeyedDensities::PerKey([conv(&ts[0]), conv(&ts[1])]),
        };
        Self {
            dim: model.dim(),
            states,
            bob: model.bob().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &KeyedDensities {
        &self.states
    }

    pub fn bob(&self) -> &[PovmFamily] {
        &self.bob
    }

    pub fn behavior(&self, scheme: &Scheme) -> Behavior {
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        for (pk, k) in scheme.key_distribution() {
            let table = self.states.table(k);
            for x in 0..2u8 {
                for alpha in 0..2u8 {
                    let rho = &table[(x ^ k) as usize][alpha as usize];
                    let a = (alpha ^ k) as usize;
                    for y in 0..2 {
                        for b in 0..2 {
                            p[a][b][x as usize][y] += pk * (self.bob[y].element(b) * rho).trace().re;
                        }
                    }
                }
            }
        }
        Behavior::from_fn(&crate::bell::BellScenario::binary(), |a, b, x, y| p[a][b][x][y])
    }

    pub fn to_json(&self) -> String {
        let keys: Vec<Option<u8>> = match self.states {
            KeyedDensities::Oblivious(_) => vec![None],
            KeyedDensities::PerKey(_) => vec![Some(0), Some(1)],
        };
        let mut states = Vec::new();
        for key in keys {
            let t = self.states.table(key.unwrap_or(0));
            for chi in 0..2u8 {
                for alpha in 0..2u8 {
                    states.push(DensityEntry {
                        key,
                        chi,
                        alpha,
                        rho: MatrixJson::from(&t[chi as usize][alpha as usize]),
                    });
                }
            }
        }
        serde_json::to_string_pretty(&MixedJson {
            dim: self.dim,
            states,
            bob: families_to_json(&self.bob),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: MixedJson = serde_json::from_str(text)?;
        let per_key = j.states.iter().any(|s| s.key.is_some());
        if per_key && j.states.iter().any(|s| s.key.is_none()) {
            return Err(Error::Parse("states mix keyed and key-free entries".into()));
        }
        let mut slots: [[[Option<ComplexMatrix>; 2]; 2]; 2] = Default::default();
        for s in &j.states {
            let k = s.key.unwrap_or(0);
            if k > 1 || s.chi > 1 || s.alpha > 1 {
                return Err(Error::Parse("key, chi and alpha must be bits".into()));
            }
            let slot = &mut slots[k as usize][s.chi as usize][s.alpha as usize];
            if slot.replace(ComplexMatrix::try_from(&s.rho)?).is_some() {
                return Err(Error::Parse(format!("duplicate density key={k} chi={} alpha={}", s.chi, s.alpha)));
            }
        }
        let mut take = |k: usize| -> Result<DensityTable> {
            let mut pull = |chi: usize, alpha: usize| {
                slots[k][chi][alpha]
                    .take()
                    .ok_or_else(|| Error::Parse(format!("missing density key={k} chi={chi} alpha={alpha}")))
            };
            Ok([[pull(0, 0)?, pull(0, 1)?], [pull(1, 0)?, pull(1, 1)?]])
        };
        let states = if per_key {
            KeyedDensities::PerKey([take(0)?, take(1)?])
        } else {
            KeyedDensities::Oblivious(take(0)?)
        };
        Self::new(states, families_from_json(&j.bob)?)
    }
}

#[derive(Serialize, Deserialize)]
struct DensityEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<u8>,
    chi: u8,
    alpha: u8,
    rho: MatrixJson,
}

#[derive(Serialize, Deserialize)]
struct MixedJson {
    dim: usize,
    states: Vec<DensityEntry>,
    bob: Vec<Vec<MatrixJson>>,
}

/// Pure projective model on `ℂ² ⊗ ℋ ⊗ ℋ̃` with states `|0⟩ ⊗ |Ψ̃_{α|χ}⟩`
/// and measurements `Ñ_{b|y} ⊗ 𝟙`. Fails if the behavior moves by more than `1e-10`.
pub fn projectivize_model(mixed: &MixedCompiledModel) -> Result<CompiledModel> {
    let d = mixed.dim();
    let bob = mixed
        .bob()
        .iter()
        .map(|f| Ok(naimark(f)?.pvm().extend_right(d)))
        .collect::<Result<Vec<_>>>()?;
    let lift = |rho: &ComplexMatrix| -> Result<StateVector> {
        Ok(linalg::kron_vec(&linalg::basis(2, 0), &purify(rho)?))
    };
    let conv = |t: &DensityTable| -> Result<StateTable> {
        Ok([
            [lift(&t[0][0])?, lift(&t[0][1])?],
            [lift(&t[1][0])?, lift(&t[1][1])?],
        ])
    };
    let states = match mixed.states() {
        KeyedDensities::Oblivious(t) => KeyedStates::Oblivious(conv(t)?),
        KeyedDensities::PerKey(ts) => KeyedStates::PerKey([conv(&ts[0])?, conv(&ts[1])?]),
    };
    let model = CompiledModel::new(states, bob)?;
    for scheme in [Scheme::pad(), Scheme::Leaky] {
        let gap = model
            .behavior(&scheme)
            .max_difference(&mixed.behavior(&scheme))
            .expect("same scenario");
        if gap > BEHAVIOR_TOL {
            return Err(Error::Consistency(format!("projectivized behavior moved by {gap:.3e}")));
        }
    }
    Ok(model)
}

/// Key-independent mixed model on `ℂ^dim`: for each `χ` a random density of
/// random rank is split by a random two-outcome POVM, and Bob uses random POVMs.
pub fn random_mixed_model(dim: usize, seed: u64) -> Result<MixedCompiledModel> {
    if dim == 0 || dim > 8 {
        return Err(Error::InvalidArgument(format!("dimension {dim} outside 1..=8")));
    }
    let mut rng = seeded_rng(seed, 5);
    let mut row = || -> Result<[ComplexMatrix; 2]> {
        let rank = rng.random_range(1..=dim);
        let sigma = random_density(dim, rank, 1.0, &mut rng);
        let split = random_povm(dim, 2, &mut rng);
        let part = |b: usize| -> Result<ComplexMatrix> {
            let r = linalg::psd_sqrt(split.element(b))?;
            Ok(linalg::hermitian_part(&(&r * &sigma * &r)))
        };
        Ok([part(0)?, part(1)?])
    };
    let states = KeyedDensities::Oblivious([row()?, row()?]);
    let bob = vec![random_povm(dim, 2, &mut rng), random_povm(dim, 2, &mut rng)];
    MixedCompiledModel::new(states, bob)
}
