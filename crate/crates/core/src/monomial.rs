//! Words and polynomials over `{A_x, B₀, B₁}` for a single fixed Alice input.
//!
//! Rewriting uses `A² = B_y² = 𝟙` and `[A, B_y] = 0`, so every word reduces
//! to `A^i · w̄` with `i ∈ {0,1}` and `w̄` an alternating word in `B₀, B₁`.
//!
//! Text syntax:
//!
//! ```text
//! poly   := ["+"|"-"] term (("+"|"-") term)*
//! term   := coeff ("*" letter)* | letter ("*" letter)*
//! coeff  := real | real "i" | "(" real ("+"|"-") real "i" ")"
//! letter := "A" | "A0" | "A1" | "B0" | "B1" | "1"
//! ```
//!
//! A bare `A` refers to the default Alice input supplied to the parser.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, BinaryObservable, ComplexMatrix};

/// Longest alternating B-word a canonical form may carry.
pub const MAX_B_DEGREE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    A,
    B0,
    B1,
}

impl Letter {
    pub fn bob(y: u8) -> Result<Letter> {
        match y {
            0 => Ok(Letter::B0),
            1 => Ok(Letter::B1),
            other => Err(Error::NotABit(other)),
        }
    }

    pub fn bob_input(self) -> Option<u8> {
        match self {
            Letter::A => None,
            Letter::B0 => Some(0),
            Letter::B1 => Some(1),
        }
    }
}

/// A word in the letters `A`, `B0`, `B1`. `alice_input` is `None` when no `A` appears.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonomialWord {
    alice_input: Option<u8>,
    letters: Vec<Letter>,
}

impl MonomialWord {
    pub fn identity() -> Self {
        Self {
            alice_input: None,
            letters: Vec::new(),
        }
    }

    pub fn new(alice_input: u8, letters: Vec<Letter>) -> Result<Self> {
        if alice_input > 1 {
            return Err(Error::NotABit(alice_input));
        }
        let has_a = letters.contains(&Letter::A);
        Ok(Self {
            alice_input: has_a.then_some(alice_input),
            letters,
        })
    }

    /// Word in Bob letters only, e.g. `bob_word(&[0, 1, 0])` is `B0·B1·B0`.
    pub fn bob_word(inputs: &[u8]) -> Result<Self> {
        let letters = inputs
            .iter()
            .map(|&y| Letter::bob(y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            alice_input: None,
            letters,
        })
    }

    /// Word from letters carrying explicit Alice inputs (`Some(x)` for `A_x`, `None` for B letters).
    pub fn from_labeled(tokens: &[(Letter, Option<u8>)]) -> Result<Self> {
        let mut alice: Option<u8> = None;
        let mut letters = Vec::with_capacity(tokens.len());
        for &(letter, x) in tokens {
            if letter == Letter::A {
                let x = x.unwrap_or(0);
                if x > 1 {
                    return Err(Error::NotABit(x));
                }
                match alice {
                    Some(prev) if prev != x => return Err(Error::MixedAliceInputs(prev, x)),
                    _ => alice = Some(x),
                }
            }
            letters.push(letter);
        }
        Ok(Self {
            alice_input: alice,
            letters,
        })
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn alice_input(&self) -> Option<u8> {
        self.alice_input
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Parity of `A` letters.
    pub fn a_power(&self) -> u8 {
        (self.letters.iter().filter(|&&l| l == Letter::A).count() % 2) as u8
    }

    /// Bob inputs of the B letters, in order.
    pub fn bob_inputs(&self) -> Vec<u8> {
        self.letters.iter().filter_map(|l| l.bob_input()).collect()
    }

    pub fn b_degree(&self) -> usize {
        self.letters.iter().filter(|&&l| l != Letter::A).count()
    }

    pub fn is_canonical(&self) -> bool {
        let mut rest = self.letters.as_slice();
        if rest.first() == Some(&Letter::A) {
            rest = &rest[1..];
        }
        rest.iter().all(|&l| l != Letter::A) && rest.windows(2).all(|w| w[0] != w[1])
    }

    /// Reversed word; every letter is self-adjoint.
    pub fn reversed(&self) -> Self {
        let mut letters = self.letters.clone();
        letters.reverse();
        Self {
            alice_input: self.alice_input,
            letters,
        }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let alice_input = merge_alice(self.alice_input, other.alice_input)?;
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Ok(Self {
            alice_input,
            letters,
        })
    }

    /// Matrix of the word under `assignment`.
    pub fn evaluate(&self, assignment: &Assignment, tensor: bool) -> Result<ComplexMatrix> {
        let mats = assignment.lifted(tensor, self.alice_input.is_some())?;
        let dim = mats.dim;
        let mut out = linalg::identity(dim);
        for &l in &self.letters {
            out *= mats.letter(l)?;
        }
        Ok(out)
    }
}

fn merge_alice(a: Option<u8>, b: Option<u8>) -> Result<Option<u8>> {
    match (a, b) {
        (Some(x), Some(y)) if x != y => Err(Error::MixedAliceInputs(x, y)),
        (Some(x), _) | (_, Some(x)) => Ok(Some(x)),
        (None, None) => Ok(None),
    }
}

/// `A^i · w̄` with `w̄` alternating; idempotent.
pub fn canonical_form(w: &MonomialWord) -> Result<MonomialWord> {
    let mut stack: Vec<Letter> = Vec::with_capacity(w.letters.len());
    let mut a_parity = false;
    for &l in &w.letters {
        match l {
            Letter::A => a_parity = !a_parity,
            b => {
                if stack.last() == Some(&b) {
                    stack.pop();
                } else {
                    stack.push(b);
                }
            }
        }
    }
    if stack.len() > MAX_B_DEGREE {
        return Err(Error::DegreeExceeded(stack.len()));
    }
    let mut letters = Vec::with_capacity(stack.len() + 1);
    if a_parity {
        letters.push(Letter::A);
    }
    letters.extend(stack);
    Ok(MonomialWord {
        alice_input: if a_parity { w.alice_input } else { None },
        letters,
    })
}

impl fmt::Display for MonomialWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .letters
            .iter()
            .map(|l| match l {
                Letter::A => format!("A{}", self.alice_input.unwrap_or(0)),
                Letter::B0 => "B0".to_string(),
                Letter::B1 => "B1".to_string(),
            })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Observables substituted for the letters.
#[derive(Debug, Clone)]
pub struct Assignment {
    pub a: Option<BinaryObservable>,
    pub b0: BinaryObservable,
    pub b1: BinaryObservable,
}

impl Assignment {
    pub fn new(a: BinaryObservable, b0: BinaryObservable, b1: BinaryObservable) -> Self {
        Self { a: Some(a), b0, b1 }
    }

    pub fn bob_only(b0: BinaryObservable, b1: BinaryObservable) -> Self {
        Self { a: None, b0, b1 }
    }

    fn lifted(&self, tensor: bool, needs_a: bool) -> Result<LiftedLetters> {
        let db = self.b0.dim();
        if self.b1.dim() != db {
            return Err(Error::DimensionMismatch(format!(
                "B0 has dimension {db}, B1 has {}",
                self.b1.dim()
            )));
        }
        if needs_a && self.a.is_none() {
            return Err(Error::DimensionMismatch("word uses A but none is assigned".into()));
        }
        if tensor {
            let a = self
                .a
                .as_ref()
                .ok_or_else(|| Error::DimensionMismatch("tensor evaluation needs A".into()))?;
            let da = a.dim();
            Ok(LiftedLetters {
                dim: da * db,
                a: Some(linalg::kron(a.matrix(), &linalg::identity(db))),
                b0: linalg::kron(&linalg::identity(da), self.b0.matrix()),
                b1: linalg::kron(&linalg::identity(da), self.b1.matrix()),
            })
        } else {
            if let Some(a) = &self.a {
                if a.dim() != db {
                    return Err(Error::DimensionMismatch(format!(
                        "A has dimension {}, B has {db}",
                        a.dim()
                    )));
                }
            }
            Ok(LiftedLetters {
                dim: db,
                a: self.a.as_ref().map(|a| a.matrix().clone()),
                b0: self.b0.matrix().clone(),
                b1: self.b1.matrix().clone(),
            })
        }
    }
}

struct LiftedLetters {
    dim: usize,
    a: Option<ComplexMatrix>,
    b0: ComplexMatrix,
    b1: ComplexMatrix,
}

impl LiftedLetters {
    fn letter(&self, l: Letter) -> Result<&ComplexMatrix> {
        match l {
            Letter::A => self
                .a
                .as_ref()
                .ok_or_else(|| Error::DimensionMismatch("word uses A but none is assigned".into())),
            Letter::B0 => Ok(&self.b0),
            Letter::B1 => Ok(&self.b1),
        }
    }
}

/// Complex-linear combination of canonical words with distinct words.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPolynomial {
    alice_input: Option<u8>,
    terms: Vec<(Complex64, MonomialWord)>,
}

impl OperatorPolynomial {
    pub fn zero() -> Self {
        Self {
            alice_input: None,
            terms: Vec::new(),
        }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::from_terms(vec![(c, MonomialWord::identity())]).expect("identity word is canonical")
    }

    pub fn monomial(c: Complex64, w: MonomialWord) -> Result<Self> {
        Self::from_terms(vec![(c, w)])
    }

    /// Canonicalizes every word and merges equal ones. Exactly-zero terms are dropped.
    pub fn from_terms(terms: Vec<(Complex64, MonomialWord)>) -> Result<Self> {
        let mut alice = None;
        let mut merged: BTreeMap<MonomialWord, Complex64> = BTreeMap::new();
        for (c, w) in terms {
            alice = merge_alice(alice, w.alice_input)?;
            let cw = canonical_form(&w)?;
            *merged.entry(cw).or_insert(linalg::ZERO) += c;
        }
        let terms: Vec<_> = merged
            .into_iter()
            .filter(|(_, c)| *c != linalg::ZERO)
            .map(|(w, c)| (c, w))
            .collect();
        let alice_input = terms.iter().find_map(|(_, w)| w.alice_input);
        Ok(Self { alice_input, terms })
    }

    pub fn terms(&self) -> &[(Complex64, MonomialWord)] {
        &self.terms
    }

    pub fn alice_input(&self) -> Option<u8> {
        self.alice_input
    }

    /// Maximum B-degree over terms.
    pub fn b_degree(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.b_degree()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, w: &MonomialWord) -> Result<Complex64> {
        let cw = canonical_form(w)?;
        Ok(self
            .terms
            .iter()
            .find(|(_, t)| *t == cw)
            .map_or(linalg::ZERO, |(c, _)| *c))
    }

    pub fn adjoint(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(c, w)| (c.conj(), w.reversed()))
            .collect();
        Self::from_terms(terms).expect("adjoint keeps the Alice input")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::from_terms(terms)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-linalg::ONE))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|(k, w)| (k * c, w.clone())).collect();
        Self::from_terms(terms).expect("scaling keeps the Alice input")
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        merge_alice(self.alice_input, other.alice_input)?;
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (c1, w1) in &self.terms {
            for (c2, w2) in &other.terms {
                terms.push((c1 * c2, w1.concat(w2)?));
            }
        }
        Self::from_terms(terms)
    }

    /// `P†P`
    pub fn hermitian_square(&self) -> Self {
        self.adjoint()
            .multiply(self)
            .expect("P and P† share the Alice input")
    }

    pub fn evaluate(&self, assignment: &Assignment, tensor: bool) -> Result<ComplexMatrix> {
        let mats = assignment.lifted(tensor, self.alice_input.is_some())?;
        let mut out = linalg::zeros(mats.dim, mats.dim);
        for (c, w) in &self.terms {
            let mut m = linalg::identity(mats.dim);
            for &l in w.letters() {
                m *= mats.letter(l)?;
            }
            out += m * *c;
        }
        Ok(out)
    }
}

impl fmt::Display for OperatorPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (c, w)) in self.terms.iter().enumerate() {
            let coeff = if c.im == 0.0 {
                if k > 0 && c.re < 0.0 {
                    write!(f, " - ")?;
                    format!("{:?}", -c.re)
                } else {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    format!("{:?}", c.re)
                }
            } else {
                if k > 0 {
                    write!(f, " + ")?;
                }
                let sign = if c.im < 0.0 { '-' } else { '+' };
                format!("({:?}{sign}{:?}i)", c.re, c.im.abs())
            };
            write!(f, "{coeff}*{w}")?;
        }
        Ok(())
    }
}

/// Random polynomial in `A_x, B₀, B₁` with up to `max_terms` terms, B-degree at
/// most `max_b_degree` and coefficients uniform in the unit square.
pub fn random_polynomial<R: Rng + ?Sized>(
    x: u8,
    max_terms: usize,
    max_b_degree: usize,
    rng: &mut R,
) -> OperatorPolynomial {
    let n = rng.random_range(1..=max_terms.max(1));
    let terms = (0..n)
        .map(|_| {
            let c = Complex64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            let mut letters = Vec::new();
            if rng.random::<bool>() {
                letters.push(Letter::A);
            }
            let len = rng.random_range(0..=max_b_degree);
            letters.extend((0..len).map(|_| if rng.random::<bool>() { Letter::B1 } else { Letter::B0 }));
            (c, MonomialWord::new(x.min(1), letters).expect("bit"))
        })
        .collect();
    OperatorPolynomial::from_terms(terms).expect("single Alice input")
}

/// Parses the polynomial text syntax described in the module docs.
pub fn parse_polynomial(text: &str, default_alice: u8) -> Result<OperatorPolynomial> {
    Parser::new(text, default_alice).polynomial()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    default_alice: u8,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, default_alice: u8) -> Self {
        Self {
            src,
            pos: 0,
            default_alice,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at offset {} in {:?}", self.pos, self.src))
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn polynomial(&mut self) -> Result<OperatorPolynomial> {
        let mut terms = Vec::new();
        let mut sign = if self.eat('-') {
            -1.0
        } else {
            self.eat('+');
            1.0
        };
        loop {
            let (c, w) = self.term()?;
            terms.push((c * sign, w));
            if self.eat('+') {
                sign = 1.0;
            } else if self.eat('-') {
                sign = -1.0;
            } else {
                break;
            }
        }
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("unexpected trailing input"));
        }
        OperatorPolynomial::from_terms(terms)
    }

    fn term(&mut self) -> Result<(Complex64, MonomialWord)> {
        self.skip_ws();
        let mut coeff = linalg::ONE;
        let mut tokens = Vec::new();
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' || c == '(' => {
                coeff = self.coefficient()?;
                if !self.eat('*') {
                    return Ok((coeff, MonomialWord::identity()));
                }
                tokens.push(self.letter()?);
            }
            Some(_) => tokens.push(self.letter()?),
            None => return Err(self.err("expected a term")),
        }
        while self.eat('*') {
            tokens.push(self.letter()?);
        }
        let tokens: Vec<_> = tokens.into_iter().flatten().collect();
        Ok((coeff, MonomialWord::from_labeled(&tokens)?))
    }

    /// `None` for the unit letter `1`.
    fn letter(&mut self) -> Result<Option<(Letter, Option<u8>)>> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let table: [(&str, Option<(Letter, Option<u8>)>); 6] = [
            ("A0", Some((Letter::A, Some(0)))),
            ("A1", Some((Letter::A, Some(1)))),
            ("B0", Some((Letter::B0, None))),
            ("B1", Some((Letter::B1, None))),
            ("A", Some((Letter::A, Some(self.default_alice)))),
            ("1", None),
        ];
        for (name, tok) in table {
            if rest.starts_with(name) {
                let after = rest[name.len()..].chars().next();
                if after.is_some_and(|c| c.is_ascii_alphanumeric()) {
                    continue;
                }
                self.pos += name.len();
                return Ok(tok);
            }
        }
        Err(self.err("expected one of A, A0, A1, B0, B1, 1"))
    }

    fn real(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            let c = bytes[self.pos] as char;
            let exp_sign = (c == '+' || c == '-')
                && self.pos > start
                && matches!(bytes[self.pos - 1] as char, 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map_err(|_| self.err("malformed number"))
    }

    fn coefficient(&mut self) -> Result<Complex64> {
        if self.eat('(') {
            let mut re = 0.0;
            let im;
            let sign_first = if self.eat('-') { -1.0 } else { 1.0 };
            let first = self.real()? * sign_first;
            if self.eat('i') {
                im = first;
            } else {
                re = first;
                let s = if self.eat('+') {
                    1.0
                } else if self.eat('-') {
                    -1.0
                } else {
                    return Err(self.err("expected '+' or '-' in complex literal"));
                };
                im = s * self.real()?;
                if !self.eat('i') {
                    return Err(self.err("expected 'i'"));
                }
            }
            if !self.eat(')') {
                return Err(self.err("expected ')'"));
            }
            let c = Complex64::new(re, im);
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(self.err("non-finite coefficient"));
            }
            Ok(c)
        } else {
            let v = self.real()?;
            if !v.is_finite() {
                return Err(self.err("non-finite coefficient"));
            }
            if self.eat('i') {
                Ok(Complex64::new(0.0, v))
            } else {
                Ok(linalg::real(v))
            }
        }
    }
}
