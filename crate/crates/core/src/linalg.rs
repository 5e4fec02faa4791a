//! Dense complex linear algebra helpers shared by the state backend and the oracles.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

/// Default cap on dense register width, in qubits (a 4096 x 4096 density matrix).
pub const DEFAULT_DENSE_LIMIT: usize = 12;
pub const DENSE_LIMIT_ENV: &str = "COLLIDESIM_DENSE_LIMIT";

static LIMIT_OVERRIDE: AtomicUsize = AtomicUsize::new(0);

/// Process-wide override of the dense limit. Zero clears it.
pub fn set_dense_limit(qubits: usize) {
    LIMIT_OVERRIDE.store(qubits, Ordering::Relaxed);
}

/// Current dense limit: explicit override, then the environment variable, then the default.
pub fn dense_limit() -> usize {
    let o = LIMIT_OVERRIDE.load(Ordering::Relaxed);
    if o > 0 {
        return o;
    }
    std::env::var(DENSE_LIMIT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_DENSE_LIMIT)
}

pub fn check_dense(qubits: usize) -> Result<()> {
    let limit = dense_limit();
    if qubits > limit {
        Err(Error::DenseLimit { qubits, limit })
    } else {
        Ok(())
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> Mat {
    Mat::identity(dim, dim)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Largest deviation of `m` from its adjoint.
pub fn hermiticity_residual(m: &Mat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Replace `m` by (m + m†)/2.
pub fn symmetrize(m: &mut Mat) {
    let d = m.nrows();
    for i in 0..d {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..d {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix: real eigenvalues and unitary eigenvector columns.
pub fn eigh(m: &Mat) -> (Vec<f64>, Mat) {
    let mut h = m.clone();
    symmetrize(&mut h);
    let se = h.symmetric_eigen();
    (se.eigenvalues.iter().copied().collect(), se.eigenvectors)
}

/// e^{-i tau H} for Hermitian H, via eigendecomposition.
pub fn expm_hermitian(h: &Mat, tau: f64) -> Mat {
    let (vals, vecs) = eigh(h);
    let mut scaled = vecs.clone();
    for (k, lam) in vals.iter().enumerate() {
        let ph = C64::from_polar(1.0, -tau * lam);
        for i in 0..scaled.nrows() {
            scaled[(i, k)] = vecs[(i, k)] * ph;
        }
    }
    &scaled * vecs.adjoint()
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Operator norm (largest singular value).
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Schatten-1 norm (sum of singular values).
pub fn trace_norm(m: &Mat) -> f64 {
    singular_values(m).into_iter().sum()
}

pub fn trace(m: &Mat) -> C64 {
    m.diagonal().iter().sum()
}

/// max |a_ij - b_ij|.
pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Integer power by repeated squaring.
pub fn matrix_power(m: &Mat, mut e: u64) -> Mat {
    let mut base = m.clone();
    let mut acc = identity(m.nrows());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_z_is_diagonal_phase() {
        let mut z = Mat::zeros(2, 2);
        z[(0, 0)] = c(1.0, 0.0);
        z[(1, 1)] = c(-1.0, 0.0);
        let u = expm_hermitian(&z, std::f64::consts::FRAC_PI_2);
        assert!((u[(0, 0)] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((u[(1, 1)] - c(0.0, 1.0)).norm() < 1e-12);
        assert!(u[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn power_matches_repeated_product() {
        let m = Mat::from_fn(3, 3, |i, j| c(0.1 * (i + j) as f64, 0.05 * i as f64));
        let mut direct = identity(3);
        for _ in 0..7 {
            direct = &direct * &m;
        }
        assert!(max_abs_diff(&direct, &matrix_power(&m, 7)) < 1e-12);
    }

    #[test]
    fn norms_of_diagonal() {
        let mut m = Mat::zeros(2, 2);
        m[(0, 0)] = c(3.0, 0.0);
        m[(1, 1)] = c(-1.0, 0.0);
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-12);
        assert!((trace_norm(&m) - 4.0).abs() < 1e-12);
    }
}
