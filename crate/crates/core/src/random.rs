//! Random instances for property tests and the validation suite.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Mat, C64};
use crate::pauli::{PauliString, PauliSum, Phase};
use crate::state::DensityMatrix;

fn ginibre<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat {
    Mat::from_fn(d, d, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Full-rank mixed state from a Ginibre matrix, G G^dagger / Tr.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(1 << n, rng);
    let m = &g * g.adjoint();
    let tr = crate::linalg::trace(&m).re;
    let mut m = m / C64::new(tr, 0.0);
    crate::linalg::symmetrize(&mut m);
    DensityMatrix::from_matrix_unchecked(m)
}

/// Random pure state.
pub fn random_pure<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let v: Vec<C64> =
        (0..1usize << n).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    DensityMatrix::from_pure(&v).expect("nonzero gaussian vector")
}

/// Haar-distributed unitary via QR with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let d = 1usize << n;
    let qr = ginibre(d, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..d {
        let rk = r[(k, k)];
        let ph = if rk.norm() > 0.0 { rk / rk.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, k)] *= ph;
        }
    }
    q
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = ginibre(1 << n, rng);
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

/// Random Pauli string with a random real sign.
pub fn random_pauli<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PauliString {
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let phase = if rng.gen_bool(0.5) { Phase::ONE } else { Phase::MINUS_ONE };
    PauliString::from_masks(n, rng.gen::<u64>() & mask, rng.gen::<u64>() & mask, phase).expect("masks within range")
}

/// Pauli sum with `terms` random non-identity words and coefficients in [0.1, 1).
pub fn random_pauli_sum<R: Rng + ?Sized>(n: usize, terms: usize, rng: &mut R) -> PauliSum {
    let mut out = Vec::with_capacity(terms);
    while out.len() < terms {
        let p = random_pauli(n, rng);
        if !p.is_identity() {
            out.push((rng.gen_range(0.1..1.0), p));
        }
    }
    PauliSum::from_terms(n, out).expect("valid random terms")
}
