//! The extended tilted-CHSH family `S_{θ,φ}`, its SOS certificate and honest
//! model, and the classic tilted-CHSH functional `T_θ`.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::bell::{BellFunctional, BellScenario, BipartiteModel};
use crate::error::{Error, Result};
use crate::linalg::{self, pauli_x, pauli_z, BinaryObservable, ComplexMatrix};
use crate::monomial::{Assignment, Letter, MonomialWord, OperatorPolynomial};

/// Validated `(θ, φ)` with the derived `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedParams {
    theta: f64,
    phi: f64,
    tau: f64,
}

impl TiltedParams {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::Domain("angles must be finite".into()));
        }
        if !(theta > 0.0 && theta <= FRAC_PI_4 + 1e-15) {
            return Err(Error::Domain(format!("theta = {theta} outside (0, pi/4]")));
        }
        let lo = (-2.0 * theta).max(-PI + 2.0 * theta);
        let hi = (2.0 * theta).min(PI - 2.0 * theta);
        if phi == 0.0 || phi <= lo || phi >= hi {
            return Err(Error::Domain(format!(
                "phi = {phi} outside ({lo}, {hi}) without 0"
            )));
        }
        let s2 = (2.0 * theta).sin();
        let c2 = (2.0 * theta).cos();
        let inv_tau_sq = s2 * s2 / phi.tan().powi(2) - c2 * c2;
        if !(inv_tau_sq > 0.0 && inv_tau_sq.is_finite()) {
            return Err(Error::Domain(format!("1/tau^2 = {inv_tau_sq} is not positive")));
        }
        Ok(Self {
            theta,
            phi,
            tau: inv_tau_sq.sqrt().recip(),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau_sq(&self) -> f64 {
        self.tau * self.tau
    }

    /// Maximal quantum value `2(1 + τ²)`.
    pub fn eta_q(&self) -> f64 {
        2.0 * (1.0 + self.tau_sq())
    }

    pub fn functional(&self) -> BellFunctional {
        functional_s(self)
    }
}

/// `S_{θ,φ} = A₀(B₀+B₁)/cosφ + τ²[sin2θ·A₁(B₀−B₁)/sinφ + cos2θ·(B₀+B₁)/cosφ]`
pub fn functional_s(p: &TiltedParams) -> BellFunctional {
    let (s2, c2) = (2.0 * p.theta).sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let t2 = p.tau_sq();
    let mut f = BellFunctional::zero(BellScenario::binary());
    f.add_correlator(0, 0, 1.0 / cp);
    f.add_correlator(0, 1, 1.0 / cp);
    f.add_correlator(1, 0, t2 * s2 / sp);
    f.add_correlator(1, 1, -t2 * s2 / sp);
    f.add_bob_marginal(0, t2 * c2 / cp);
    f.add_bob_marginal(1, t2 * c2 / cp);
    f
}

/// The Bell operator of `S_{θ,φ}` assembled directly from observables.
pub fn bell_operator_s(
    p: &TiltedParams,
    a0: &BinaryObservable,
    a1: &BinaryObservable,
    b0: &BinaryObservable,
    b1: &BinaryObservable,
) -> Result<ComplexMatrix> {
    if a0.dim() != a1.dim() || b0.dim() != b1.dim() {
        return Err(Error::DimensionMismatch("observables of one party differ in dimension".into()));
    }
    let (s2, c2) = (2.0 * p.theta).sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let t2 = p.tau_sq();
    let id_a = linalg::identity(a0.dim());
    let plus = b0.matrix() + b1.matrix();
    let minus = b0.matrix() - b1.matrix();
    Ok(linalg::kron(a0.matrix(), &plus).scale(1.0 / cp)
        + linalg::kron(a1.matrix(), &minus).scale(t2 * s2 / sp)
        + linalg::kron(&id_a, &plus).scale(t2 * c2 / cp))
}

/// `(N₀, N₁)` with `η^Q 𝟙 − S = N₀†N₀ + τ² N₁†N₁`.
pub fn sos_polynomials(p: &TiltedParams) -> (OperatorPolynomial, OperatorPolynomial) {
    let (s2, c2) = (2.0 * p.theta).sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let r = linalg::real;
    let a = |x: u8| MonomialWord::new(x, vec![Letter::A]).expect("bit");
    let b = |y: u8| MonomialWord::bob_word(&[y]).expect("bit");
    let ab = |y: u8| MonomialWord::new(1, vec![Letter::A, Letter::bob(y).expect("bit")]).expect("bit");
    let k0 = 1.0 / (2.0 * cp);
    let n0 = OperatorPolynomial::from_terms(vec![(r(1.0), a(0)), (r(-k0), b(0)), (r(-k0), b(1))])
        .expect("single Alice input");
    let ks = s2 / (2.0 * sp);
    let kc = c2 / (2.0 * cp);
    let n1 = OperatorPolynomial::from_terms(vec![
        (r(1.0), a(1)),
        (r(-ks), b(0)),
        (r(ks), b(1)),
        (r(-kc), ab(0)),
        (r(-kc), ab(1)),
    ])
    .expect("single Alice input");
    (n0, n1)
}

/// `‖η^Q 𝟙 − S − N₀†N₀ − τ²N₁†N₁‖_F` on `ℋ_A ⊗ ℋ_B`.
pub fn verify_sos(
    p: &TiltedParams,
    a0: &BinaryObservable,
    a1: &BinaryObservable,
    b0: &BinaryObservable,
    b1: &BinaryObservable,
) -> Result<f64> {
    let s = bell_operator_s(p, a0, a1, b0, b1)?;
    let (n0, n1) = sos_polynomials(p);
    let m0 = n0.evaluate(&Assignment::new(a0.clone(), b0.clone(), b1.clone()), true)?;
    let m1 = n1.evaluate(&Assignment::new(a1.clone(), b0.clone(), b1.clone()), true)?;
    let dim = s.nrows();
    let residual = linalg::identity(dim).scale(p.eta_q())
        - s
        - m0.adjoint() * &m0
        - (m1.adjoint() * &m1).scale(p.tau_sq());
    Ok(residual.norm())
}

/// Ideal observables `(A₀, A₁, B₀, B₁) = (σ_Z, σ_X, cosφσ_Z + sinφσ_X, cosφσ_Z − sinφσ_X)`.
pub fn honest_observables(p: &TiltedParams) -> [BinaryObservable; 4] {
    let (sp, cp) = p.phi.sin_cos();
    let b = |sign: f64| {
        BinaryObservable::new(pauli_z().scale(cp) + pauli_x().scale(sign * sp))
            .expect("rotated Pauli is an involution")
    };
    [
        BinaryObservable::new(pauli_z()).expect("Pauli"),
        BinaryObservable::new(pauli_x()).expect("Pauli"),
        b(1.0),
        b(-1.0),
    ]
}

/// `cosθ|00⟩ + sinθ|11⟩`
pub fn honest_state(theta: f64) -> linalg::StateVector {
    let (s, c) = theta.sin_cos();
    linalg::basis(4, 0) * linalg::real(c) + linalg::basis(4, 3) * linalg::real(s)
}

pub fn honest_model(p: &TiltedParams) -> BipartiteModel {
    let [a0, a1, b0, b1] = honest_observables(p);
    BipartiteModel::new(
        vec![a0.to_pvm(), a1.to_pvm()],
        vec![b0.to_pvm(), b1.to_pvm()],
        honest_state(p.theta),
    )
    .expect("honest model is valid")
}

/// `α_θ = 2/√(1 + 2tan²2θ)`, defined as 0 at `θ = π/4`.
pub fn tilt_alpha(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= FRAC_PI_4 + 1e-15) {
        return Err(Error::Domain(format!("theta = {theta} outside (0, pi/4]")));
    }
    if (theta - FRAC_PI_4).abs() < 1e-12 {
        return Ok(0.0);
    }
    Ok(2.0 / (1.0 + 2.0 * (2.0 * theta).tan().powi(2)).sqrt())
}

/// `T_θ = α_θ A₀ + A₀(B₀+B₁) + A₁(B₀−B₁)`
pub fn tilted_t(theta: f64) -> Result<BellFunctional> {
    let alpha = tilt_alpha(theta)?;
    let mut f = BellFunctional::chsh();
    f.add_alice_marginal(0, alpha);
    Ok(f)
}

/// `μ_θ` with `tan μ_θ = sin 2θ`.
pub fn mu_theta(theta: f64) -> f64 {
    (2.0 * theta).sin().atan()
}

/// The 5×5 parameter grid used by the acceptance suite: five values of θ and
/// five values of φ per θ, all with a strict quantum violation.
pub fn acceptance_grid() -> Vec<TiltedParams> {
    const THETAS: [f64; 5] = [PI / 12.0, PI / 8.0, PI / 6.0, 5.0 * PI / 24.0, PI / 4.0];
    const FRACTIONS: [f64; 5] = [-0.9, -0.75, 0.75, 0.85, 0.95];
    THETAS
        .iter()
        .flat_map(|&t| {
            FRACTIONS
                .iter()
                .map(move |&f| TiltedParams::new(t, f * 2.0 * t).expect("grid point in domain"))
        })
        .collect()
}
