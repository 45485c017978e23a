//! The pseudo-expectation `Ẽ` of a compiled model on monomials `A_x^i · w̄(B₀, B₁)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::compiled::CompiledModel;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::monomial::{canonical_form, Letter, MonomialWord, OperatorPolynomial};
use crate::qhe::Scheme;
use crate::tilted::{sos_polynomials, TiltedParams};

#[derive(Debug, Clone)]
pub struct PseudoContext {
    model: CompiledModel,
    scheme: Scheme,
    x_dist: [f64; 2],
    b: [ComplexMatrix; 2],
}

impl PseudoContext {
    /// Uniform distribution over Alice's inputs.
    pub fn new(model: CompiledModel, scheme: Scheme) -> Self {
        Self::with_distribution(model, scheme, [0.5, 0.5]).expect("uniform is a distribution")
    }

    pub fn with_distribution(model: CompiledModel, scheme: Scheme, x_dist: [f64; 2]) -> Result<Self> {
        if x_dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (x_dist[0] + x_dist[1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("{x_dist:?} is not a distribution")));
        }
        let b = [model.bob_observable(0), model.bob_observable(1)];
        Ok(Self {
            model,
            scheme,
            x_dist,
            b,
        })
    }

    pub fn model(&self) -> &CompiledModel {
        &self.model
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    fn b_matrix(&self, word: &MonomialWord) -> ComplexMatrix {
        let mut m = linalg::identity(self.model.dim());
        for y in word.bob_inputs() {
            m *= &self.b[y as usize];
        }
        m
    }

    /// `E_key Σ_α s(α⊕key) ⟨Ψ_{α|x⊕key}| W |Ψ_{α|x⊕key}⟩` for a fixed `x`.
    fn branch_sum(&self, x: u8, w: &ComplexMatrix, signed: bool) -> Complex64 {
        let mut total = linalg::ZERO;
        for (pk, k) in self.scheme.key_distribution() {
            for alpha in 0..2u8 {
                let psi = self.model.state(k, x ^ k, alpha);
                let s = if signed && (alpha ^ k) == 1 { -1.0 } else { 1.0 };
                total += linalg::expectation(w, psi) * (pk * s);
            }
        }
        total
    }

    /// `Ẽ[A_x^i · w̄]` for a canonical B-only word `w̄`. For `i = 0` the input `x` is averaged out.
    pub fn eval_monomial(&self, a_power: u8, x: u8, bword: &MonomialWord) -> Result<Complex64> {
        if bword.letters().contains(&Letter::A) {
            return Err(Error::UnsupportedTerm(format!("{bword} contains an Alice letter")));
        }
        if !bword.is_canonical() {
            return Err(Error::UnsupportedTerm(format!("{bword} is not canonical")));
        }
        if x > 1 {
            return Err(Error::NotABit(x));
        }
        let w = self.b_matrix(bword);
        match a_power {
            0 => Ok((0..2u8)
                .filter(|&xx| self.x_dist[xx as usize] > 0.0)
                .map(|xx| self.branch_sum(xx, &w, false) * self.x_dist[xx as usize])
                .sum()),
            1 => Ok(self.branch_sum(x, &w, true)),
            other => Err(Error::NotABit(other)),
        }
    }

    /// `Ẽ` of an arbitrary word, canonicalized first.
    pub fn eval_word(&self, w: &MonomialWord) -> Result<Complex64> {
        let c = canonical_form(w)?;
        let a_power = c.a_power();
        let x = c.alice_input().unwrap_or(0);
        let bword = MonomialWord::bob_word(&c.bob_inputs())?;
        self.eval_monomial(a_power, x, &bword)
    }

    pub fn eval_polynomial(&self, p: &OperatorPolynomial) -> Result<Complex64> {
        p.terms()
            .iter()
            .map(|(c, w)| Ok(c * self.eval_word(w)?))
            .sum()
    }

    /// The second-order block, including `Ẽ[A_x A_x'] = δ_{x,x'}`.
    pub fn eval_bilinear(&self, term: BilinearTerm) -> Result<Complex64> {
        let bw = |ys: &[u8]| MonomialWord::bob_word(ys).and_then(|w| canonical_form(&w));
        match term {
            BilinearTerm::One => self.eval_monomial(0, 0, &MonomialWord::identity()),
            BilinearTerm::A { x } => self.eval_monomial(1, x, &MonomialWord::identity()),
            BilinearTerm::B { y } => self.eval_monomial(0, 0, &bw(&[y])?),
            BilinearTerm::AB { x, y } => self.eval_monomial(1, x, &bw(&[y])?),
            BilinearTerm::BB { y, y2 } => self.eval_monomial(0, 0, &bw(&[y, y2])?),
            BilinearTerm::AA { x, x2 } => {
                if x > 1 || x2 > 1 {
                    return Err(Error::UnsupportedTerm(format!("A{x}A{x2}")));
                }
                Ok(linalg::real(if x == x2 { 1.0 } else { 0.0 }))
            }
        }
    }

    /// `Ẽ[P†P]` expanded term by term.
    pub fn eval_square(&self, p: &OperatorPolynomial) -> Result<f64> {
        Ok(self.eval_polynomial(&p.hermitian_square())?.re)
    }

    /// `E Σ_α ‖Σ_i (−1)^{Dec(α)·k_i} γ_i w_i(B) |Ψ_{α|χ}⟩‖²`, evaluated as a norm.
    pub fn eval_square_direct(&self, p: &OperatorPolynomial) -> Result<f64> {
        let dim = self.model.dim();
        let mut even = linalg::zeros(dim, dim);
        let mut odd = linalg::zeros(dim, dim);
        for (c, w) in p.terms() {
            let m = self.b_matrix(w) * *c;
            if w.a_power() == 1 {
                odd += m;
            } else {
                even += m;
            }
        }
        let plus = &even + &odd;
        let minus = &even - &odd;
        let inputs: Vec<(u8, f64)> = match p.alice_input() {
            Some(x) => vec![(x, 1.0)],
            None => (0..2u8).map(|x| (x, self.x_dist[x as usize])).collect(),
        };
        let mut total = 0.0;
        for (x, px) in inputs {
            for (pk, k) in self.scheme.key_distribution() {
                for alpha in 0..2u8 {
                    let psi = self.model.state(k, x ^ k, alpha);
                    let m = if (alpha ^ k) == 0 { &plus } else { &minus };
                    total += px * pk * (m * psi).norm_squared();
                }
            }
        }
        Ok(total)
    }

    /// `Ẽ[S_{θ,φ}]` and the SOS slack `Ẽ[N₀†N₀] + τ²Ẽ[N₁†N₁]`.
    pub fn certify_bound(&self, p: &TiltedParams) -> Result<Certificate> {
        let (s2, c2) = (2.0 * p.theta()).sin_cos();
        let (sp, cp) = p.phi().sin_cos();
        let t2 = p.tau_sq();
        let e = |t| self.eval_bilinear(t).map(|z| z.re);
        use BilinearTerm::{AB, B};
        let pseudo_value = (e(AB { x: 0, y: 0 })? + e(AB { x: 0, y: 1 })?) / cp
            + t2 * (s2 / sp * (e(AB { x: 1, y: 0 })? - e(AB { x: 1, y: 1 })?)
                + c2 / cp * (e(B { y: 0 })? + e(B { y: 1 })?));
        let (n0, n1) = sos_polynomials(p);
        let n0_square = self.eval_square(&n0)?;
        let n1_square = self.eval_square(&n1)?;
        Ok(Certificate {
            eta_q: p.eta_q(),
            pseudo_value,
            n0_square,
            n1_square,
            slack: n0_square + t2 * n1_square,
        })
    }
}

/// Terms of the second-order pseudo-expectation block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BilinearTerm {
    One,
    A { x: u8 },
    B { y: u8 },
    AB { x: u8, y: u8 },
    AA { x: u8, x2: u8 },
    BB { y: u8, y2: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub eta_q: f64,
    pub pseudo_value: f64,
    pub n0_square: f64,
    pub n1_square: f64,
    pub slack: f64,
}

impl Certificate {
    /// `|Ẽ[S] + slack − η^Q|`
    pub fn decomposition_residual(&self) -> f64 {
        (self.pseudo_value + self.slack - self.eta_q).abs()
    }
}
