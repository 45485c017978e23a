//! Single-bit stand-ins for a homomorphic encryption scheme.
//!
//! The one-time pad hides a bit perfectly: for either plaintext the
//! ciphertext is uniform over the key. The leaky scheme uses the identity
//! key only and hides nothing.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::seeded_rng;

fn bit(v: u8) -> Result<u8> {
    if v <= 1 {
        Ok(v)
    } else {
        Err(Error::NotABit(v))
    }
}

/// Key distribution of an encryption scheme over single-bit plaintexts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    /// Uniform key; `λ` is recorded but has no effect.
    Pad { lambda: u32 },
    /// Always the zero key.
    Leaky,
    /// Key 0 with probability `½ + bias`. Test-only.
    BiasedPad { bias: f64 },
}

impl Scheme {
    pub fn pad() -> Self {
        Scheme::Pad { lambda: 128 }
    }

    pub fn biased_pad(bias: f64) -> Result<Self> {
        if !(bias.is_finite() && bias.abs() <= 0.5) {
            return Err(Error::InvalidArgument(format!("key bias {bias} outside [-1/2, 1/2]")));
        }
        Ok(Scheme::BiasedPad { bias })
    }

    /// `(probability, key)` pairs with positive probability.
    pub fn key_distribution(&self) -> Vec<(f64, u8)> {
        match *self {
            Scheme::Pad { .. } => vec![(0.5, 0), (0.5, 1)],
            Scheme::Leaky => vec![(1.0, 0)],
            Scheme::BiasedPad { bias } => [(0.5 + bias, 0), (0.5 - bias, 1)]
                .into_iter()
                .filter(|(p, _)| *p > 0.0)
                .collect(),
        }
    }

    pub fn probability_of_key(&self, key: u8) -> f64 {
        self.key_distribution()
            .iter()
            .find(|(_, k)| *k == key)
            .map_or(0.0, |(p, _)| *p)
    }

    pub fn sample_key<R: Rng + ?Sized>(&self, rng: &mut R) -> SecretKey {
        let key = match *self {
            Scheme::Pad { .. } => rng.random_range(0..=1),
            Scheme::Leaky => 0,
            Scheme::BiasedPad { bias } => u8::from(rng.random::<f64>() >= 0.5 + bias),
        };
        SecretKey { key }
    }

    /// Draws a key from the ChaCha stream seeded by `seed`.
    pub fn gen(&self, seed: u64) -> SecretKey {
        self.sample_key(&mut seeded_rng(seed, 0))
    }

    pub fn is_perfectly_hiding(&self) -> bool {
        distinguishing_advantage(self) == 0.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Pad { .. } => "pad",
            Scheme::Leaky => "leaky",
            Scheme::BiasedPad { .. } => "biased_pad",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pad" => Ok(Scheme::pad()),
            "leaky" => Ok(Scheme::Leaky),
            other => Err(Error::Parse(format!("unknown scheme {other:?}; expected pad or leaky"))),
        }
    }
}

/// A key bit. Encryption and decryption are both XOR with the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    key: u8,
}

impl SecretKey {
    pub fn new(key: u8) -> Result<Self> {
        Ok(Self { key: bit(key)? })
    }

    pub fn bit(&self) -> u8 {
        self.key
    }

    pub fn enc(&self, x: u8) -> Result<u8> {
        Ok(bit(x)? ^ self.key)
    }

    pub fn dec(&self, alpha: u8) -> Result<u8> {
        Ok(bit(alpha)? ^ self.key)
    }
}

/// Exact advantage of the best single-query distinguisher, maximized over
/// the four functions `{0,1} → {0,1}`.
pub fn distinguishing_advantage(scheme: &Scheme) -> f64 {
    let keys = scheme.key_distribution();
    let cipher_dist = |x: u8| {
        let mut d = [0.0; 2];
        for &(p, k) in &keys {
            d[(x ^ k) as usize] += p;
        }
        d
    };
    let (d0, d1) = (cipher_dist(0), cipher_dist(1));
    (0..4u8)
        .map(|table| {
            let guess = |c: usize| f64::from((table >> c) & 1);
            let p0: f64 = (0..2).map(|c| d0[c] * guess(c)).sum();
            let p1: f64 = (0..2).map(|c| d1[c] * guess(c)).sum();
            (p0 - p1).abs()
        })
        .fold(0.0, f64::max)
}

/// Empirical advantage from `trials` encryptions of each plaintext under fresh keys.
pub fn sampled_advantage(scheme: &Scheme, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut counts = [[0usize; 2]; 2];
    for (x, row) in counts.iter_mut().enumerate() {
        let mut rng = seeded_rng(seed, x as u64);
        for _ in 0..trials {
            let c = scheme.sample_key(&mut rng).enc(x as u8)?;
            row[c as usize] += 1;
        }
    }
    let n = trials as f64;
    Ok((0..4u8)
        .map(|table| {
            let hits = |row: &[usize; 2]| {
                (0..2)
                    .filter(|&c| (table >> c) & 1 == 1)
                    .map(|c| row[c])
                    .sum::<usize>() as f64
                    / n
            };
            (hits(&counts[0]) - hits(&counts[1])).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_encrypts_and_decrypts() {
        let k = SecretKey::new(1).unwrap();
        assert_eq!(k.enc(0).unwrap(), 1);
        for key in 0..2 {
            let k = SecretKey::new(key).unwrap();
            for x in 0..2 {
                assert_eq!(k.dec(k.enc(x).unwrap()).unwrap(), x);
            }
        }
        assert_eq!(k.enc(2), Err(Error::NotABit(2)));
        assert_eq!(SecretKey::new(3), Err(Error::NotABit(3)));
    }

    #[test]
    fn advantages() {
        assert_eq!(distinguishing_advantage(&Scheme::pad()), 0.0);
        assert_eq!(distinguishing_advantage(&Scheme::Leaky), 1.0);
        for beta in [0.0, 0.05, 0.2, 0.5] {
            let s = Scheme::biased_pad(beta).unwrap();
            assert!((distinguishing_advantage(&s) - 2.0 * beta).abs() < 1e-15);
        }
        assert!(Scheme::pad().is_perfectly_hiding());
        assert!(!Scheme::Leaky.is_perfectly_hiding());
    }

    #[test]
    fn pad_ciphertexts_uniform_over_keys() {
        let keys: Vec<SecretKey> = (0..10_000).map(|s| Scheme::pad().gen(s)).collect();
        let ones = keys.iter().filter(|k| k.enc(0).unwrap() == 1).count();
        assert_eq!(
            keys.iter().filter(|k| k.enc(1).unwrap() == 0).count(),
            ones,
            "enc(1) is the bitwise complement of enc(0) under the same key"
        );
        let frac = ones as f64 / 1e4;
        assert!((frac - 0.5).abs() < 4.0 * 0.005);
        let exact = Scheme::pad().key_distribution();
        assert_eq!(exact, vec![(0.5, 0), (0.5, 1)]);
    }

    #[test]
    fn sampled_advantage_behaviour() {
        assert!(sampled_advantage(&Scheme::pad(), 0, 1).is_err());
        assert_eq!(sampled_advantage(&Scheme::Leaky, 10, 1).unwrap(), 1.0);
        let a = sampled_advantage(&Scheme::pad(), 20_000, 3).unwrap();
        assert!(a < 0.03);
    }

    #[test]
    fn gen_is_deterministic() {
        assert_eq!(Scheme::pad().gen(42), Scheme::pad().gen(42));
        assert_eq!(Scheme::Leaky.gen(42).bit(), 0);
    }

    #[test]
    fn parse_names() {
        assert_eq!("pad".parse::<Scheme>().unwrap(), Scheme::pad());
        assert_eq!("leaky".parse::<Scheme>().unwrap(), Scheme::Leaky);
        assert!("rsa".parse::<Scheme>().is_err());
    }
}
