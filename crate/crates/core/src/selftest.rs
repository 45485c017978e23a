//! Robust self-testing of the tilted-CHSH compiled counterpart.
//!
//! From Bob's observables we build `Z_B = (B₀+B₁)/(2cosφ)` and
//! `X_B = (B₀−B₁)/(2sinφ)`, their unitary regularizations, and the SWAP
//! isometry `V = Σ_b |b⟩ ⊗ X̃^b P^b`. Every residual below is an expectation
//! over keys of a sum over first-round answers, evaluated exactly.

use serde::{Deserialize, Serialize};

use crate::compiled::CompiledModel;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, StateVector};
use crate::qhe::Scheme;
use crate::tilted::{honest_observables, TiltedParams};

/// Eigenvalues with magnitude below this are sent to `+1` by [`regularize`].
pub const ZERO_TOL: f64 = 1e-12;
/// Slack allowed on every residual-versus-bound comparison.
pub const CHECK_TOL: f64 = 1e-9;
/// Largest ε tolerated below zero before a model counts as beating `η^Q`.
const DEFICIT_TOL: f64 = 1e-9;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Unitary sign of a Hermitian matrix; eigenvalues with `|λ| < zero_tol` become `+1`.
pub fn regularize(m: &ComplexMatrix, zero_tol: f64) -> Result<ComplexMatrix> {
    let eig = linalg::eig_herm(m)?;
    Ok(eig.map_values(|l| if l.abs() < zero_tol || l > 0.0 { 1.0 } else { -1.0 }))
}

#[derive(Debug, Clone)]
pub struct ZXOperators {
    pub z: ComplexMatrix,
    pub x: ComplexMatrix,
    pub z_reg: ComplexMatrix,
    pub x_reg: ComplexMatrix,
    /// `P^b = (1 + (−1)^b Z̃)/2`
    pub p: [ComplexMatrix; 2],
}

impl ZXOperators {
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }
}

pub fn build_zx(model: &CompiledModel, p: &TiltedParams) -> Result<ZXOperators> {
    let (sp, cp) = p.phi().sin_cos();
    let b0 = model.bob_observable(0);
    let b1 = model.bob_observable(1);
    let z = (&b0 + &b1).unscale(2.0 * cp);
    let x = (&b0 - &b1).unscale(2.0 * sp);
    let z_reg = regularize(&z, ZERO_TOL)?;
    let x_reg = regularize(&x, ZERO_TOL)?;
    let id = linalg::identity(model.dim());
    let p = [(&id + &z_reg).scale(0.5), (&id - &z_reg).scale(0.5)];
    Ok(ZXOperators { z, x, z_reg, x_reg, p })
}

/// `V = Σ_b |b⟩ ⊗ X̃^b P^b` as a `2d × d` matrix.
pub fn swap_isometry(zx: &ZXOperators) -> ComplexMatrix {
    let d = zx.dim();
    let mut v = linalg::zeros(2 * d, d);
    v.view_mut((0, 0), (d, d)).copy_from(&zx.p[0]);
    v.view_mut((d, 0), (d, d)).copy_from(&(&zx.x_reg * &zx.p[1]));
    v
}

/// Closed-form bounds as functions of the deficit `ε` and the encryption slack `negl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaLedger {
    pub epsilon: f64,
    pub negl: f64,
    pub theta: f64,
    pub phi: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub delta5: f64,
    pub delta6: f64,
    pub delta7: f64,
    /// Indexed by `x`.
    pub delta8: [f64; 2],
    pub delta9: [f64; 2],
    pub zeta: [f64; 2],
}

impl DeltaLedger {
    pub fn new(epsilon: f64, negl: f64, p: &TiltedParams) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::NegativeDeficit(epsilon));
        }
        if !(negl >= 0.0) || !negl.is_finite() {
            return Err(Error::InvalidArgument(format!("negl = {negl} must be finite and non-negative")));
        }
        let (theta, phi) = (p.theta(), p.phi());
        let tau_sq = p.tau_sq();
        let n = negl;
        let (sp, cp) = phi.sin_cos();
        let tp = phi.tan();
        let (s2t, c2t) = (2.0 * theta).sin_cos();

        let d0 = epsilon + (1.0 + tau_sq) * n;
        let d1 = d0 * (1.0 + 1.0 / cp).powi(2);
        let d2 = 16.0 * cp.powi(4) * d1;
        let d3 = d1 / tp.powi(4);
        let d4 = d1 / tp.powi(2);
        let d5 = 2.0 * d0 / tau_sq + 4.0 * s2t * s2t * (d4 + n) + 4.0 * c2t * c2t * (d0 + n);
        let d6 = 2.0 * (d0 + n)
            + 8.0 * (d4 + n)
            + 8.0 * (d0 + n) / (2.0 * sp * sp)
            + 16.0 * (1.0 + 1.0 / (2.0 * cp * cp)) * d0 / (s2t * s2t * tau_sq)
            + 16.0 * (1.0 / (s2t * s2t) + c2t * c2t / (2.0 * cp * cp * s2t * s2t)) * (d0 + n);
        let d7 = d6 / 2.0 + 2.0 * d5 / (s2t * s2t);
        let d8 = [d0, d0 + n];
        let d9 = [2.0 * d4 + 4.0 * n + d6, 2.0 * d4 + 2.0 * n + d6];
        let zeta = std::array::from_fn(|x| {
            let xf = x as f64;
            (cp * cp * d8[x] + sp * sp * d9[x]) / 2.0 + 2.0 * (1.0 - xf) * d7 + 2.0 * xf * d0
        });
        Ok(Self {
            epsilon,
            negl,
            theta,
            phi,
            delta0: d0,
            delta1: d1,
            delta2: d2,
            delta3: d3,
            delta4: d4,
            delta5: d5,
            delta6: d6,
            delta7: d7,
            delta8: d8,
            delta9: d9,
            zeta,
        })
    }
}

/// Ledger with `negl = 0`.
pub fn delta_ledger(epsilon: f64, p: &TiltedParams) -> Result<DeltaLedger> {
    DeltaLedger::new(epsilon, 0.0, p)
}

/// `ε = η^Q − value`, with round-off below zero clipped.
pub fn deficit(model: &CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<f64> {
    let eps = p.eta_q() - model.value(&p.functional(), scheme)?;
    if eps < -DEFICIT_TOL {
        return Err(Error::NegativeDeficit(eps));
    }
    Ok(eps.max(0.0))
}

/// One measured residual next to its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub claim: u8,
    /// `b` for claim 7, `x` for claims 12 and 13.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub index: Option<u8>,
    pub residual: f64,
    pub bound: f64,
    pub pass: bool,
}

impl ClaimCheck {
    fn new(claim: u8, index: Option<u8>, residual: f64, bound: f64) -> Self {
        Self {
            claim,
            index,
            residual,
            bound,
            pass: residual <= bound + CHECK_TOL,
        }
    }

    pub fn label(&self) -> String {
        match (self.claim, self.index) {
            (7, Some(b)) => format!("claim7[b={b}]"),
            (c, Some(x)) => format!("claim{c}[x={x}]"),
            (c, None) => format!("claim{c}"),
        }
    }
}

/// A state or measurement extraction check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionCheck {
    pub lhs: f64,
    pub bound: f64,
    pub pass: bool,
    /// The bound is at least the largest value the left side could take.
    pub vacuous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasCheck {
    pub x: u8,
    pub b: u8,
    pub y: u8,
    #[serde(flatten)]
    pub check: ExtractionCheck,
}

struct Branch<'a> {
    weight: f64,
    a: u8,
    psi: &'a StateVector,
}

/// Everything the checks share for one model.
struct Analysis<'a> {
    p: TiltedParams,
    zx: ZXOperators,
    v: ComplexMatrix,
    branches: [Vec<Branch<'a>>; 2],
    ledger: DeltaLedger,
    model: &'a CompiledModel,
}

impl<'a> Analysis<'a> {
    fn new(model: &'a CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<Self> {
        let eps = deficit(model, p, scheme)?;
        let ledger = delta_ledger(eps, p)?;
        let zx = build_zx(model, p)?;
        let v = swap_isometry(&zx);
        let keys = scheme.key_distribution();
        let branches = std::array::from_fn(|x| {
            let x = x as u8;
            keys.iter()
                .flat_map(|&(pk, k)| {
                    (0..2u8).map(move |alpha| Branch {
                        weight: pk,
                        a: alpha ^ k,
                        psi: model.state(k, x ^ k, alpha),
                    })
                })
                .collect()
        });
        Ok(Self {
            p: *p,
            zx,
            v,
            branches,
            ledger,
            model,
        })
    }

    /// `E_{χ: Enc x = χ} Σ_α ‖f(a, Ψ)‖²`
    fn mean_sq(&self, x: usize, f: impl Fn(u8, &StateVector) -> StateVector) -> f64 {
        self.branches[x]
            .iter()
            .map(|br| br.weight * f(br.a, br.psi).norm_squared())
            .sum()
    }

    fn sign(a: u8) -> f64 {
        if a == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn claims(&self) -> Vec<ClaimCheck> {
        let l = &self.ledger;
        let zx = &self.zx;
        let d = self.model.dim();
        let id = linalg::identity(d);
        let (s2t, c2t) = (2.0 * self.p.theta()).sin_cos();
        let b0 = self.model.bob_observable(0);
        let b1 = self.model.bob_observable(1);
        let z2 = &zx.z * &zx.z;
        let x2 = &zx.x * &zx.x;
        let anti_b = linalg::anticommutator(&b0, &b1);
        let c3 = id.scale(2.0 * (2.0 * self.p.phi()).cos()) - anti_b;
        let anti_reg = linalg::anticommutator(&zx.z_reg, &zx.x_reg);
        let c11 = &zx.x_reg * &zx.p[1] - &zx.p[0] * &zx.x_reg;
        let sz = linalg::kron(&linalg::pauli_z(), &id);
        let sx = linalg::kron(&linalg::pauli_x(), &id);
        let c12 = &self.v * &zx.z - &sz * &self.v;
        let c13 = &self.v * &zx.x - &sx * &self.v;

        let minus = |m: &ComplexMatrix| &id - m;
        let c1 = |a: u8, psi: &StateVector| psi.scale(Self::sign(a)) - &zx.z * psi;
        let c8 = |reg: bool| {
            let (z, x) = if reg { (&zx.z_reg, &zx.x_reg) } else { (&zx.z, &zx.x) };
            move |a: u8, psi: &StateVector| {
                psi - (x * psi).scale(Self::sign(a) * s2t) - (z * psi).scale(c2t)
            }
        };

        let mut out = vec![
            ClaimCheck::new(1, None, self.mean_sq(0, c1), l.delta0),
            ClaimCheck::new(2, None, self.mean_sq(0, |_, v| minus(&z2) * v), l.delta1),
            ClaimCheck::new(3, None, self.mean_sq(0, |_, v| &c3 * v), l.delta2),
            ClaimCheck::new(4, None, self.mean_sq(0, |_, v| minus(&x2) * v), l.delta3),
            ClaimCheck::new(5, None, self.mean_sq(0, |_, v| (&zx.z_reg - &zx.z) * v), l.delta0),
            ClaimCheck::new(6, None, self.mean_sq(0, |_, v| (&zx.x_reg - &zx.x) * v), l.delta4),
        ];
        for b in 0..2u8 {
            let r = self.mean_sq(0, |a, v| {
                let pv = &zx.p[b as usize] * v;
                if a == b {
                    pv - v
                } else {
                    pv
                }
            });
            out.push(ClaimCheck::new(7, Some(b), r, l.delta0));
        }
        out.push(ClaimCheck::new(8, None, self.mean_sq(1, c8(false)), l.delta0 / self.p.tau_sq()));
        out.push(ClaimCheck::new(9, None, self.mean_sq(1, c8(true)), l.delta5));
        out.push(ClaimCheck::new(10, None, self.mean_sq(1, |_, v| &anti_reg * v), l.delta6));
        out.push(ClaimCheck::new(11, None, self.mean_sq(1, |_, v| &c11 * v), l.delta6 / 4.0));
        for x in 0..2 {
            out.push(ClaimCheck::new(12, Some(x as u8), self.mean_sq(x, |_, v| &c12 * v), l.delta8[x]));
        }
        for x in 0..2 {
            out.push(ClaimCheck::new(13, Some(x as u8), self.mean_sq(x, |_, v| &c13 * v), l.delta9[x]));
        }
        out
    }

    /// `(lhs, ceiling)` where `ceiling = 2 E Σ (‖u‖² + ‖t‖²)` bounds `E Σ ‖u − t‖²`.
    fn compare(&self, x: usize, f: impl Fn(u8, &StateVector) -> (StateVector, StateVector)) -> (f64, f64) {
        self.branches[x].iter().fold((0.0, 0.0), |(lhs, cap), br| {
            let (u, t) = f(br.a, br.psi);
            (
                lhs + br.weight * (&u - &t).norm_squared(),
                cap + 2.0 * br.weight * (u.norm_squared() + t.norm_squared()),
            )
        })
    }

    fn st1_aux(&self, a: u8, psi: &StateVector) -> StateVector {
        if a == 0 {
            psi.clone()
        } else {
            &self.zx.x_reg * psi
        }
    }

    fn st2_aux(&self, psi: &StateVector) -> StateVector {
        (&self.zx.p[0] * psi).unscale(self.p.theta().cos())
    }

    fn st1(&self) -> ExtractionCheck {
        let (lhs, cap) = self.compare(0, |a, psi| {
            let target = linalg::kron_vec(&linalg::basis(2, a as usize), &self.st1_aux(a, psi));
            (&self.v * psi, target)
        });
        extraction(lhs, 2.0 * self.ledger.delta0, cap)
    }

    fn st2(&self) -> ExtractionCheck {
        let (lhs, cap) = self.compare(1, |a, psi| {
            let target = linalg::kron_vec(&ideal_st2(self.p.theta(), a), &self.st2_aux(psi));
            (&self.v * psi, target)
        });
        extraction(lhs, self.ledger.delta7, cap)
    }

    fn meas(&self) -> Vec<MeasCheck> {
        let theta = self.p.theta();
        let (st, ct) = theta.sin_cos();
        let q = honest_observables(&self.p);
        let q = [q[2].to_pvm(), q[3].to_pvm()];
        let mut out = Vec::with_capacity(8);
        for x in 0..2u8 {
            for y in 0..2u8 {
                for b in 0..2u8 {
                    let n = self.model.bob()[y as usize].element(b as usize);
                    let qb = q[y as usize].element(b as usize);
                    let (lhs, cap) = self.compare(x as usize, |a, psi| {
                        let (phi, aux) = if x == 0 {
                            let scale = if a == 0 { ct } else { st };
                            (
                                linalg::basis(2, a as usize).scale(scale),
                                self.st1_aux(a, psi).unscale(scale),
                            )
                        } else {
                            (
                                ideal_st2(theta, a).unscale(2f64.sqrt()),
                                self.st2_aux(psi).scale(2f64.sqrt()),
                            )
                        };
                        let u = &self.v * (n * psi);
                        (u, linalg::kron_vec(&(qb * phi), &aux))
                    });
                    out.push(MeasCheck {
                        x,
                        b,
                        y,
                        check: extraction(lhs, self.ledger.zeta[x as usize], cap),
                    });
                }
            }
        }
        out
    }
}

/// `cosθ|0⟩ + (−1)^a sinθ|1⟩`
fn ideal_st2(theta: f64, a: u8) -> StateVector {
    let (s, c) = theta.sin_cos();
    linalg::basis(2, 0).scale(c) + linalg::basis(2, 1).scale(Analysis::sign(a) * s)
}

fn extraction(lhs: f64, bound: f64, ceiling: f64) -> ExtractionCheck {
    ExtractionCheck {
        lhs,
        bound,
        pass: lhs <= bound + CHECK_TOL,
        vacuous: bound >= ceiling,
    }
}

/// Residuals of claims 1 to 13 with their ledger bounds.
pub fn claim_residuals(model: &CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<Vec<ClaimCheck>> {
    Ok(Analysis::new(model, p, scheme)?.claims())
}

/// `E_{χ:Enc 0} Σ_α ‖V|Ψ_{α|χ}⟩ − |Dec α⟩ ⊗ X̃^{Dec α}|Ψ_{α|χ}⟩‖²` against `2δ₀`.
pub fn check_st1(model: &CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<ExtractionCheck> {
    Ok(Analysis::new(model, p, scheme)?.st1())
}

/// `E_{χ:Enc 1} Σ_α ‖V|Ψ_{α|χ}⟩ − (cosθ|0⟩ + (−1)^{Dec α} sinθ|1⟩) ⊗ P⁰|Ψ_{α|χ}⟩/cosθ‖²` against `δ₇`.
pub fn check_st2(model: &CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<ExtractionCheck> {
    Ok(Analysis::new(model, p, scheme)?.st2())
}

/// Measurement extraction for every `(x, y, b)` against `ζ_x`.
pub fn check_meas(model: &CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<Vec<MeasCheck>> {
    Ok(Analysis::new(model, p, scheme)?.meas())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub schema_version: u32,
    pub theta: f64,
    pub phi: f64,
    pub scheme: Scheme,
    pub dim: usize,
    pub epsilon: f64,
    pub ledger: DeltaLedger,
    pub claims: Vec<ClaimCheck>,
    pub st1: ExtractionCheck,
    pub st2: ExtractionCheck,
    pub meas: Vec<MeasCheck>,
    /// Largest state or measurement extraction residual.
    pub max_extraction_lhs: f64,
    pub claims_pass: bool,
    /// st1, st2 and every measurement check hold.
    pub pass: bool,
}

impl SelfTestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn self_test_verdict(model: &CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<SelfTestReport> {
    let an = Analysis::new(model, p, scheme)?;
    let claims = an.claims();
    let st1 = an.st1();
    let st2 = an.st2();
    let meas = an.meas();
    let max_extraction_lhs = meas
        .iter()
        .map(|m| m.check.lhs)
        .chain([st1.lhs, st2.lhs])
        .fold(0.0, f64::max);
    let claims_pass = claims.iter().all(|c| c.pass);
    let pass = st1.pass && st2.pass && meas.iter().all(|m| m.check.pass);
    Ok(SelfTestReport {
        schema_version: REPORT_SCHEMA_VERSION,
        theta: p.theta(),
        phi: p.phi(),
        scheme: *scheme,
        dim: model.dim(),
        epsilon: an.ledger.epsilon,
        ledger: an.ledger,
        claims,
        st1,
        st2,
        meas,
        max_extraction_lhs,
        claims_pass,
        pass,
    })
}

/// `δ₅` and `δ₆` rebuilt from the measured residuals of the claims they cite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredChain {
    pub delta5: f64,
    pub delta6: f64,
}

pub fn measured_chain(model: &CompiledModel, p: &TiltedParams, scheme: &Scheme) -> Result<MeasuredChain> {
    let claims = claim_residuals(model, p, scheme)?;
    let r = |id: u8| {
        claims
            .iter()
            .find(|c| c.claim == id)
            .map(|c| c.residual)
            .expect("claim present")
    };
    let (sp, cp) = p.phi().sin_cos();
    let (s2t, c2t) = (2.0 * p.theta()).sin_cos();
    let (c1, c5, c6, c8) = (r(1), r(5), r(6), r(8));
    let delta5 = 2.0 * c8 + 4.0 * s2t * s2t * c6 + 4.0 * c2t * c2t * c5;
    let delta6 = 2.0 * c1
        + 8.0 * c6
        + 8.0 * c1 / (2.0 * sp * sp)
        + 16.0 * (1.0 + 1.0 / (2.0 * cp * cp)) * c8 / (s2t * s2t)
        + 16.0 * (1.0 / (s2t * s2t) + c2t * c2t / (2.0 * cp * cp * s2t * s2t)) * c5;
    Ok(MeasuredChain { delta5, delta6 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiled::{compiled_counterpart, perturb_honest, Perturbation};
    use crate::random::{random_binary_observable, seeded_rng};
    use crate::tilted::{acceptance_grid, honest_model};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn honest(p: &TiltedParams) -> CompiledModel {
        compiled_counterpart(&honest_model(p).partial_model().unwrap()).unwrap()
    }

    #[test]
    fn regularize_examples() {
        let z = linalg::pauli_z();
        assert!(close(&regularize(&z, ZERO_TOL).unwrap(), &z, 1e-12));
        let m = linalg::diag_real(&[0.5, -2.0]);
        assert!(close(&regularize(&m, ZERO_TOL).unwrap(), &linalg::diag_real(&[1.0, -1.0]), 1e-12));
        let m = linalg::diag_real(&[0.0, 3.0]);
        assert!(close(&regularize(&m, ZERO_TOL).unwrap(), &linalg::identity(2), 1e-12));
        let bad = linalg::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(regularize(&bad, ZERO_TOL), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn honest_zx_is_pauli() {
        for p in acceptance_grid() {
            let zx = build_zx(&honest(&p), &p).unwrap();
            assert!(close(&zx.z, &linalg::pauli_z(), 1e-12));
            assert!(close(&zx.x, &linalg::pauli_x(), 1e-12));
            assert!(close(&zx.z_reg, &linalg::pauli_z(), 1e-12));
            assert!(close(&zx.x_reg, &linalg::pauli_x(), 1e-12));
            let v = swap_isometry(&zx);
            let v0 = &v * linalg::basis(2, 0);
            let v1 = &v * linalg::basis(2, 1);
            assert!((v0 - linalg::basis(4, 0)).norm() < 1e-12);
            assert!((v1 - linalg::basis(4, 2)).norm() < 1e-12);
        }
    }

    #[test]
    fn ledger_examples() {
        let p = TiltedParams::new(FRAC_PI_4, FRAC_PI_4).unwrap();
        let zero = delta_ledger(0.0, &p).unwrap();
        for v in [zero.delta0, zero.delta1, zero.delta5, zero.delta6, zero.delta7, zero.zeta[0], zero.zeta[1]] {
            assert_eq!(v, 0.0);
        }
        let l = delta_ledger(0.01, &p).unwrap();
        assert!((l.delta1 - 0.01 * (1.0 + 2f64.sqrt()).powi(2)).abs() < 1e-12);
        assert!((l.delta1 - 0.0583).abs() < 1e-4);
        assert_eq!(l.delta2, 16.0 * p.phi().cos().powi(4) * l.delta1);
        assert!(matches!(delta_ledger(-0.1, &p), Err(Error::NegativeDeficit(_))));
        let q = TiltedParams::new(FRAC_PI_6, FRAC_PI_6).unwrap();
        let mut prev = delta_ledger(0.0, &q).unwrap();
        for k in 1..20 {
            let cur = delta_ledger(k as f64 * 0.01, &q).unwrap();
            assert!(cur.delta7 >= prev.delta7 && cur.zeta[0] >= prev.zeta[0] && cur.zeta[1] >= prev.zeta[1]);
            prev = cur;
        }
    }

    #[test]
    fn honest_counterpart_is_exact() {
        for p in acceptance_grid() {
            let r = self_test_verdict(&honest(&p), &p, &Scheme::pad()).unwrap();
            assert!(r.epsilon < 1e-12);
            for c in &r.claims {
                assert!(c.residual < 1e-10, "{} = {}", c.label(), c.residual);
            }
            assert!(r.max_extraction_lhs < 1e-10);
            assert!(r.pass && r.claims_pass);
            assert_eq!(r.meas.len(), 8);
        }
    }

    #[test]
    fn perturbed_models_pass() {
        for p in acceptance_grid().iter().step_by(3) {
            for (i, delta) in [0.01, 0.05, 0.1].into_iter().enumerate() {
                let (m, eps) = perturb_honest(
                    p,
                    Perturbation {
                        delta,
                        seed: i as u64,
                        rotate_states: true,
                    },
                )
                .unwrap();
                let r = self_test_verdict(&m, p, &Scheme::pad()).unwrap();
                assert!((r.epsilon - eps.max(0.0)).abs() < 1e-12);
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn measured_chain_below_ledger() {
        for p in acceptance_grid().iter().step_by(4) {
            let (m, _) = perturb_honest(
                p,
                Perturbation {
                    delta: 0.05,
                    seed: 7,
                    rotate_states: false,
                },
            )
            .unwrap();
            let chain = measured_chain(&m, p, &Scheme::pad()).unwrap();
            let ledger = Analysis::new(&m, p, &Scheme::pad()).unwrap().ledger;
            assert!(chain.delta5 <= ledger.delta5 + CHECK_TOL);
            assert!(chain.delta6 <= ledger.delta6 + CHECK_TOL);
        }
    }

    #[test]
    fn report_round_trips() {
        let p = TiltedParams::new(FRAC_PI_6, 0.5).unwrap();
        let r = self_test_verdict(&honest(&p), &p, &Scheme::pad()).unwrap();
        let back: SelfTestReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_json().contains("\"schema_version\": 1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn zx_identities(seed in any::<u64>(), dim_pow in 1u32..4, grid_index in 0usize..25) {
            let p = acceptance_grid()[grid_index];
            let d = 1usize << dim_pow;
            let mut rng = seeded_rng(seed, 0);
            let b0 = random_binary_observable(d, &mut rng);
            let b1 = random_binary_observable(d, &mut rng);
            let state = linalg::basis(d, 0);
            let zero = StateVector::zeros(d);
            let model = CompiledModel::new(
                crate::compiled::KeyedStates::Oblivious([[state.clone(), zero.clone()], [state, zero]]),
                vec![b0.to_pvm(), b1.to_pvm()],
            ).unwrap();
            let zx = build_zx(&model, &p).unwrap();
            let id = linalg::identity(d);
            prop_assert!(linalg::anticommutator(&zx.z, &zx.x).norm() < 1e-10);
            let (sp, cp) = p.phi().sin_cos();
            let lhs = (&zx.z * &zx.z).scale(cp * cp) + (&zx.x * &zx.x).scale(sp * sp);
            prop_assert!(close(&lhs, &id, 1e-10));
            for u in [&zx.z_reg, &zx.x_reg] {
                prop_assert!(close(&(u * u), &id, 1e-9));
                prop_assert!(linalg::hermiticity_defect(u) < 1e-9);
            }
            prop_assert!(linalg::commutator(&zx.z_reg, &zx.z).norm() < 1e-9);
            prop_assert!(close(&(&zx.p[0] + &zx.p[1]), &id, 1e-12));
            for pb in &zx.p {
                prop_assert!(close(&(pb * pb), pb, 1e-9));
            }
            let v = swap_isometry(&zx);
            prop_assert!(close(&(v.adjoint() * &v), &id, 1e-9));
            let zero_ket = linalg::basis(2, 0);
            let embed = linalg::kron(&linalg::outer(&zero_ket).columns(0, 1).into_owned(), &id);
            let alt = (linalg::kron(&linalg::identity(2), &zx.p[0])
                + linalg::kron(&linalg::pauli_x(), &(&zx.x_reg * &zx.p[1]))) * embed;
            prop_assert!(close(&alt, &v, 1e-12));
        }
    }
}
