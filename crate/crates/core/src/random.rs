//! Seeded random matrices and observables.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, BinaryObservable, ComplexMatrix, StateVector};

/// ChaCha8 stream `stream` of seed `seed`; distinct streams never overlap.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    DMatrix::from_fn(rows, cols, |_, _| gaussian_complex(rng))
}

/// Haar-distributed unitary via QR of a Ginibre matrix with the phase fix on R's diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let qr = ginibre(dim, dim, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { linalg::ONE };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(dim, dim, rng);
    linalg::hermitian_part(&g)
}

/// Uniform unit vector.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    let v = StateVector::from_fn(dim, |_, _| gaussian_complex(rng));
    let n = v.norm();
    v.unscale(n)
}

/// `U diag(±1) U†` with Haar `U` and a uniformly chosen number of `−1` eigenvalues.
pub fn random_binary_observable<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> BinaryObservable {
    let minus = rng.random_range(0..=dim);
    observable_with_signature(dim, minus, rng)
}

/// Random observable with exactly `minus` eigenvalues equal to `−1`.
pub fn observable_with_signature<R: Rng + ?Sized>(
    dim: usize,
    minus: usize,
    rng: &mut R,
) -> BinaryObservable {
    let u = haar_unitary(dim, rng);
    let signs: Vec<f64> = (0..dim).map(|i| if i < minus { -1.0 } else { 1.0 }).collect();
    let m = linalg::hermitian_part(&(&u * linalg::diag_real(&signs) * u.adjoint()));
    BinaryObservable::new(m).expect("conjugated sign matrix is an involution")
}

/// Random POVM with `outcomes` elements: `G^{-1/2} W_b G^{-1/2}` for Wishart `W_b`.
pub fn random_povm<R: Rng + ?Sized>(
    dim: usize,
    outcomes: usize,
    rng: &mut R,
) -> linalg::PovmFamily {
    let raw: Vec<ComplexMatrix> = (0..outcomes)
        .map(|_| {
            let g = ginibre(dim, dim, rng);
            linalg::hermitian_part(&(&g * g.adjoint()))
        })
        .collect();
    let total = raw.iter().fold(linalg::zeros(dim, dim), |acc, w| acc + w);
    let eig = linalg::eig_herm(&linalg::hermitian_part(&total)).expect("Hermitian sum");
    let inv_sqrt = eig.map_values(|l| 1.0 / l.sqrt());
    let elements = raw
        .iter()
        .map(|w| linalg::hermitian_part(&(&inv_sqrt * w * &inv_sqrt)))
        .collect();
    linalg::PovmFamily::new(elements).expect("normalized Wishart family is a POVM")
}

/// Random density matrix of the given rank scaled to trace `weight`.
pub fn random_density<R: Rng + ?Sized>(
    dim: usize,
    rank: usize,
    weight: f64,
    rng: &mut R,
) -> ComplexMatrix {
    let g = ginibre(dim, rank.max(1), rng);
    let w = linalg::hermitian_part(&(&g * g.adjoint()));
    let tr = w.trace().re;
    w.scale(weight / tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = seeded_rng(1, 0);
        for dim in [1, 2, 5, 16] {
            let u = haar_unitary(dim, &mut rng);
            assert!((u.adjoint() * &u - linalg::identity(dim)).norm() < 1e-10);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = seeded_rng(9, 3).random();
        let b: u64 = seeded_rng(9, 3).random();
        let c: u64 = seeded_rng(9, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_povm_is_valid() {
        let mut rng = seeded_rng(2, 0);
        let p = random_povm(4, 3, &mut rng);
        assert_eq!(p.outcomes(), 3);
        assert!(!p.is_projective());
    }

    #[test]
    fn density_has_requested_trace() {
        let mut rng = seeded_rng(3, 0);
        let rho = random_density(3, 2, 0.3, &mut rng);
        assert!((rho.trace().re - 0.3).abs() < 1e-12);
        assert!(linalg::min_eigenvalue(&rho).unwrap() > -1e-12);
    }
}
