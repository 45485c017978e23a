//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Tensor products follow a single convention throughout the crate: in
//! `kron(a, b)` the left factor owns the most-significant index block, so
//! `|i⟩ ⊗ |j⟩` sits at row `i * dim(b) + j`. Alice is always the left factor.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type StateVector = DVector<Complex64>;

/// Tolerance for every Hermiticity / idempotence / completeness check.
pub const TOL_HERM: f64 = 1e-9;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn from_real_rows(rows: &[&[f64]]) -> ComplexMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    ComplexMatrix::from_fn(n, m, |i, j| real(rows[i][j]))
}

pub fn diag_real(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i == j { real(values[i]) } else { ZERO })
}

pub fn pauli_x() -> ComplexMatrix {
    from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> ComplexMatrix {
    from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

/// Computational basis vector `|index⟩` in dimension `dim`.
pub fn basis(dim: usize, index: usize) -> StateVector {
    let mut v = StateVector::zeros(dim);
    v[index] = ONE;
    v
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &StateVector, b: &StateVector) -> StateVector {
    a.kronecker(b)
}

/// `|v⟩⟨v|`
pub fn outer(v: &StateVector) -> ComplexMatrix {
    v * v.adjoint()
}

/// `⟨u|M|v⟩`
pub fn sandwich(u: &StateVector, m: &ComplexMatrix, v: &StateVector) -> Complex64 {
    u.dotc(&(m * v))
}

pub fn expectation(m: &ComplexMatrix, v: &StateVector) -> Complex64 {
    sandwich(v, m, v)
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b + b * a
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.trace()
}

/// Largest singular value.
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// `√tr(M†M)`, i.e. the Frobenius norm.
pub fn schatten2(m: &ComplexMatrix) -> f64 {
    m.norm()
}

/// Positive part `|M| = √(M†M)`.
pub fn op_abs(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(m)?;
    let gram = m.adjoint() * m;
    let gram = hermitian_part(&gram);
    let eig = eig_herm(&gram)?;
    Ok(eig.map_values(|l| l.max(0.0).sqrt()))
}

pub fn ensure_square(m: &ComplexMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub fn ensure_finite(m: &ComplexMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Frobenius distance from Hermiticity, `‖M − M†‖_F`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.nrows() == m.ncols() && hermiticity_defect(m) <= tol
}

/// `(M + M†)/2`, used to strip roundoff before eigendecomposition.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues ascend. Each eigenvector has its first non-negligible
/// component made real and positive; vectors inside a degenerate cluster
/// are ordered by descending weight on the lowest basis indices.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> StateVector {
        self.vectors.column(k).into_owned()
    }

    /// `U f(Λ) U†`
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let s = real(f(self.values[k]));
            for i in 0..n {
                scaled[(i, k)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map_values(|l| l)
    }
}

const DEGENERACY_TOL: f64 = 1e-9;
const PHASE_TOL: f64 = 1e-12;

pub fn eig_herm(m: &ComplexMatrix) -> Result<HermitianEigen> {
    ensure_square(m)?;
    let defect = hermiticity_defect(m);
    if defect > TOL_HERM {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: zeros(0, 0),
        });
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut pairs: Vec<(f64, StateVector)> = (0..n)
        .map(|k| {
            let mut v = eig.eigenvectors.column(k).into_owned();
            fix_phase(&mut v);
            (eig.eigenvalues[k], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Reorder inside degenerate clusters so the result does not depend on
    // the solver's internal ordering.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (pairs[end].0 - pairs[start].0).abs() <= DEGENERACY_TOL {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| lexicographic_weight_order(&a.1, &b.1));
        start = end;
    }

    let values = pairs.iter().map(|p| p.0).collect();
    let mut vectors = zeros(n, n);
    for (k, (_, v)) in pairs.iter().enumerate() {
        vectors.set_column(k, v);
    }
    Ok(HermitianEigen { values, vectors })
}

fn lexicographic_weight_order(a: &StateVector, b: &StateVector) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let (wx, wy) = (x.norm(), y.norm());
        if (wx - wy).abs() > PHASE_TOL.sqrt() {
            return wy.total_cmp(&wx);
        }
    }
    std::cmp::Ordering::Equal
}

/// Multiply `v` by a global phase so its first non-negligible entry is real positive.
pub fn fix_phase(v: &mut StateVector) {
    let scale = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if scale == 0.0 {
        return;
    }
    if let Some(lead) = v.iter().find(|z| z.norm() > PHASE_TOL * scale.max(1.0)) {
        let phase = lead.conj() / lead.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// Principal square root of a positive semidefinite matrix (negative roundoff clipped).
pub fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eig_herm(m)?;
    Ok(eig.map_values(|l| l.max(0.0).sqrt()))
}

/// `exp(−i t H)` for Hermitian `H`.
pub fn unitary_exp(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let eig = eig_herm(h)?;
    let n = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for k in 0..n {
        let phase = Complex64::from_polar(1.0, -t * eig.values[k]);
        for i in 0..n {
            scaled[(i, k)] *= phase;
        }
    }
    Ok(scaled * eig.vectors.adjoint())
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &ComplexMatrix) -> Result<f64> {
    Ok(eig_herm(m)?.values.first().copied().unwrap_or(0.0))
}

/// `tr_A` of an operator on `ℋ_A ⊗ ℋ_B`.
pub fn partial_trace_first(m: &ComplexMatrix, dim_a: usize, dim_b: usize) -> Result<ComplexMatrix> {
    if m.nrows() != dim_a * dim_b || m.ncols() != dim_a * dim_b {
        return Err(Error::DimensionMismatch(format!(
            "partial trace of {}x{} over {dim_a}x{dim_b}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(ComplexMatrix::from_fn(dim_b, dim_b, |i, j| {
        (0..dim_a).map(|k| m[(k * dim_b + i, k * dim_b + j)]).sum()
    }))
}

/// `tr_B` of an operator on `ℋ_A ⊗ ℋ_B`.
pub fn partial_trace_second(m: &ComplexMatrix, dim_a: usize, dim_b: usize) -> Result<ComplexMatrix> {
    if m.nrows() != dim_a * dim_b || m.ncols() != dim_a * dim_b {
        return Err(Error::DimensionMismatch(format!(
            "partial trace of {}x{} over {dim_a}x{dim_b}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(ComplexMatrix::from_fn(dim_a, dim_a, |i, j| {
        (0..dim_b).map(|k| m[(i * dim_b + k, j * dim_b + k)]).sum()
    }))
}

/// A Hermitian involution (`B = B†`, `B² = 𝟙`).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryObservable {
    matrix: ComplexMatrix,
}

impl BinaryObservable {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        ensure_square(&matrix)?;
        ensure_finite(&matrix, "observable")?;
        let defect = hermiticity_defect(&matrix);
        if defect > TOL_HERM {
            return Err(Error::InvalidObservable(format!(
                "not Hermitian (defect {defect:.3e})"
            )));
        }
        let n = matrix.nrows();
        let square_defect = (&matrix * &matrix - identity(n)).norm();
        if square_defect > TOL_HERM {
            return Err(Error::InvalidObservable(format!(
                "does not square to identity (defect {square_defect:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// Skips validation; for negative tests that need a broken observable.
    #[cfg(test)]
    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// PVM `{(𝟙 + B)/2, (𝟙 − B)/2}` for outcomes `0, 1`.
    pub fn to_pvm(&self) -> PovmFamily {
        let n = self.dim();
        let id = identity(n);
        let plus = (&id + &self.matrix).scale(0.5);
        let minus = (&id - &self.matrix).scale(0.5);
        PovmFamily {
            elements: vec![plus, minus],
            labels: vec![0, 1],
            projective: true,
        }
    }
}

/// Measurement family over a finite set of outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmFamily {
    elements: Vec<ComplexMatrix>,
    labels: Vec<u32>,
    projective: bool,
}

impl PovmFamily {
    pub fn new(elements: Vec<ComplexMatrix>) -> Result<Self> {
        let labels = (0..elements.len() as u32).collect();
        Self::with_labels(elements, labels)
    }

    pub fn with_labels(elements: Vec<ComplexMatrix>, labels: Vec<u32>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPovm("no elements".into()));
        }
        if labels.len() != elements.len() {
            return Err(Error::InvalidPovm("label count differs from element count".into()));
        }
        let n = elements[0].nrows();
        let mut total = zeros(n, n);
        for (k, e) in elements.iter().enumerate() {
            ensure_square(e)?;
            ensure_finite(e, "POVM element")?;
            if e.nrows() != n {
                return Err(Error::InvalidPovm(format!("element {k} has dimension {}", e.nrows())));
            }
            let defect = hermiticity_defect(e);
            if defect > TOL_HERM {
                return Err(Error::InvalidPovm(format!("element {k} not Hermitian ({defect:.3e})")));
            }
            let low = min_eigenvalue(&hermitian_part(e))?;
            if low < -TOL_HERM {
                return Err(Error::InvalidPovm(format!("element {k} has eigenvalue {low:.3e}")));
            }
            total += e;
        }
        let completeness = (total - identity(n)).norm();
        if completeness > TOL_HERM {
            return Err(Error::InvalidPovm(format!(
                "elements sum to identity only within {completeness:.3e}"
            )));
        }
        let projective = elements.iter().all(|e| (e * e - e).norm() <= TOL_HERM);
        Ok(Self {
            elements,
            labels,
            projective,
        })
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn element(&self, outcome: usize) -> &ComplexMatrix {
        &self.elements[outcome]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn is_projective(&self) -> bool {
        self.projective
    }

    pub fn outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    /// `Σ_b (−1)^b N_b`; only meaningful for two-outcome families.
    pub fn observable(&self) -> Result<ComplexMatrix> {
        if self.outcomes() != 2 {
            return Err(Error::ArityMismatch(format!(
                "observable of a {}-outcome family",
                self.outcomes()
            )));
        }
        Ok(&self.elements[0] - &self.elements[1])
    }

    /// `{N_b ⊗ 𝟙}` for an ancilla of dimension `extra` on the right.
    pub fn extend_right(&self, extra: usize) -> PovmFamily {
        let id = identity(extra);
        PovmFamily {
            elements: self.elements.iter().map(|e| kron(e, &id)).collect(),
            labels: self.labels.clone(),
            projective: self.projective,
        }
    }

    /// `{𝟙 ⊗ N_b}` for an ancilla of dimension `extra` on the left.
    pub fn extend_left(&self, extra: usize) -> PovmFamily {
        let id = identity(extra);
        PovmFamily {
            elements: self.elements.iter().map(|e| kron(&id, e)).collect(),
            labels: self.labels.clone(),
            projective: self.projective,
        }
    }

    /// `{U N_b U†}` for unitary `U`.
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<PovmFamily> {
        let ud = u.adjoint();
        Self::with_labels(
            self.elements.iter().map(|e| u * e * &ud).collect(),
            self.labels.clone(),
        )
    }
}

/// Row-major JSON literal `{"rows", "cols", "re", "im"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self { rows, cols, re, im }
    }
}

impl TryFrom<&MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: &MatrixJson) -> Result<Self> {
        let n = j.rows * j.cols;
        if j.re.len() != n || j.im.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix literal {}x{} carries {} real and {} imaginary entries",
                j.rows,
                j.cols,
                j.re.len(),
                j.im.len()
            )));
        }
        let m = ComplexMatrix::from_fn(j.rows, j.cols, |r, c| {
            Complex64::new(j.re[r * j.cols + c], j.im[r * j.cols + c])
        });
        ensure_finite(&m, "matrix literal")?;
        Ok(m)
    }
}

impl From<&StateVector> for MatrixJson {
    fn from(v: &StateVector) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
    }
}

pub fn vector_from_json(j: &MatrixJson) -> Result<StateVector> {
    if j.cols != 1 {
        return Err(Error::DimensionMismatch(format!("expected a column, got {} columns", j.cols)));
    }
    let m = ComplexMatrix::try_from(j)?;
    Ok(m.column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{haar_unitary, random_hermitian, seeded_rng};
    use proptest::prelude::*;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).norm() <= tol
    }

    #[test]
    fn kron_identity_and_index_convention() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
        assert_eq!(kron(&pauli_z(), &identity(2)), diag_real(&[1.0, 1.0, -1.0, -1.0]));
        let v00 = basis(4, 0);
        let out = kron(&pauli_x(), &pauli_x()) * v00;
        assert_eq!(out, basis(4, 3));
        // |1⟩ ⊗ |0⟩ is index 2 under the Alice-high convention.
        assert_eq!(kron_vec(&basis(2, 1), &basis(2, 0)), basis(4, 2));
    }

    #[test]
    fn norms_and_abs() {
        assert!((op_norm(&pauli_x()) - 1.0).abs() < 1e-12);
        assert!((schatten2(&identity(4)) - 2.0).abs() < 1e-12);
        let abs = op_abs(&diag_real(&[-2.0, 3.0])).unwrap();
        assert!(close(&abs, &diag_real(&[2.0, 3.0]), 1e-12));
        assert!(matches!(op_abs(&zeros(2, 3)), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn eig_of_paulis() {
        let z = eig_herm(&pauli_z()).unwrap();
        assert_eq!(z.values.len(), 2);
        assert!((z.values[0] + 1.0).abs() < 1e-12 && (z.values[1] - 1.0).abs() < 1e-12);

        let x = eig_herm(&pauli_x()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let minus = StateVector::from_vec(vec![real(s), real(-s)]);
        let plus = StateVector::from_vec(vec![real(s), real(s)]);
        assert!((x.vector(0) - minus).norm() < 1e-12);
        assert!((x.vector(1) - plus).norm() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(eig_herm(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_reconstruction_random_8x8() {
        let mut rng = seeded_rng(7, 0);
        for _ in 0..20 {
            let h = random_hermitian(8, &mut rng);
            let e = eig_herm(&h).unwrap();
            assert!((e.reconstruct() - &h).norm() <= 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn degenerate_ordering_is_deterministic() {
        let e = eig_herm(&identity(3)).unwrap();
        assert!(close(&e.vectors, &identity(3), 1e-12));
    }

    #[test]
    fn partial_traces() {
        let rho_a = diag_real(&[0.25, 0.75]);
        let rho_b = from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let joint = kron(&rho_a, &rho_b);
        assert!(close(&partial_trace_first(&joint, 2, 2).unwrap(), &rho_b, 1e-12));
        assert!(close(&partial_trace_second(&joint, 2, 2).unwrap(), &rho_a, 1e-12));
    }

    #[test]
    fn observable_and_povm_validation() {
        assert!(BinaryObservable::new(pauli_x()).is_ok());
        assert!(BinaryObservable::new(diag_real(&[1.0, 0.5])).is_err());
        let pvm = BinaryObservable::new(pauli_z()).unwrap().to_pvm();
        assert!(pvm.is_projective());
        assert!(close(&pvm.observable().unwrap(), &pauli_z(), 1e-12));

        let half = diag_real(&[0.5, 0.5]);
        let noisy = PovmFamily::new(vec![half.clone(), half]).unwrap();
        assert!(!noisy.is_projective());
        assert!(PovmFamily::new(vec![diag_real(&[1.0, 0.0])]).is_err());
        assert!(PovmFamily::new(vec![diag_real(&[1.5, 1.0]), diag_real(&[-0.5, 0.0])]).is_err());
    }

    #[test]
    fn json_literal_round_trip() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[ONE, I, -I, real(2.0)]);
        let j = MatrixJson::from(&m);
        assert_eq!(j.re, vec![1.0, 0.0, 0.0, 2.0]);
        assert_eq!(j.im, vec![0.0, 1.0, -1.0, 0.0]);
        let text = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert_eq!(ComplexMatrix::try_from(&back).unwrap(), m);
        let bad = MatrixJson { rows: 2, cols: 2, re: vec![0.0; 3], im: vec![0.0; 4] };
        assert!(ComplexMatrix::try_from(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn abs_squares_to_gram(seed in any::<u64>(), dim in 1usize..=16) {
            let mut rng = seeded_rng(seed, 1);
            let h = random_hermitian(dim, &mut rng);
            let a = op_abs(&h).unwrap();
            prop_assert!((&a * &a - h.adjoint() * &h).norm() <= 1e-9);
            prop_assert!(min_eigenvalue(&a).unwrap() >= -1e-9);
        }

        #[test]
        fn op_norm_unitarily_invariant(seed in any::<u64>(), dim in 1usize..=12) {
            let mut rng = seeded_rng(seed, 2);
            let m = random_hermitian(dim, &mut rng);
            let u = haar_unitary(dim, &mut rng);
            let conj = &u * &m * u.adjoint();
            prop_assert!((op_norm(&conj) - op_norm(&m)).abs() <= 1e-9);
        }

        #[test]
        fn kron_is_associative(seed in any::<u64>(), da in 1usize..4, db in 1usize..4, dc in 1usize..4) {
            use rand::Rng;
            let mut rng = seeded_rng(seed, 3);
            let mut small = |n: usize| {
                ComplexMatrix::from_fn(n, n, |_, _| {
                    Complex64::new(rng.random_range(-4..=4) as f64, rng.random_range(-4..=4) as f64)
                })
            };
            let (a, b, c) = (small(da), small(db), small(dc));
            prop_assert_eq!(kron(&kron(&a, &b), &c), kron(&a, &kron(&b, &c)));
        }
    }
}
