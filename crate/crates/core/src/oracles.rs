//! Exact references: dense exponentials, Lindblad integration and distances.
//!
//! Superoperators act on the row-stacked vectorization vec(rho)[i d + j] = rho[i][j], for which
//! vec(A rho B) = (A kron B^T) vec(rho).

use crate::error::{Error, Result};
use crate::linalg::{self, check_dense, identity, kron, symmetrize, trace_norm, Mat, C64};
use crate::pauli::PauliSum;
use crate::state::DensityMatrix;

pub use crate::linalg::spectral_norm;

/// e^{-i tau H} via Hermitian eigendecomposition.
pub fn unitary_exact(h: &PauliSum, tau: f64) -> Result<Mat> {
    Ok(linalg::expm_hermitian(&h.to_dense()?, tau))
}

/// Full Schatten-1 distance ||a - b||_1 (not halved).
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::dim(format!("trace distance between {} and {} qubits", a.n(), b.n())));
    }
    Ok(trace_norm(&(a.matrix() - b.matrix())))
}

/// ||U^dagger U - I||, the unitarity residual.
pub fn unitarity_residual(u: &Mat) -> f64 {
    spectral_norm(&(u.adjoint() * u - identity(u.nrows())))
}

/// Lindblad generator d rho/dt = -i[H, rho] + sum_j (A_j rho A_j^dagger - {A_j^dagger A_j, rho}/2).
#[derive(Clone, Debug)]
pub struct Liouvillian {
    n: usize,
    h: Mat,
    jumps: Vec<Mat>,
}

impl Liouvillian {
    pub fn new(h: Mat, jumps: Vec<Mat>) -> Result<Self> {
        let d = h.nrows();
        if d != h.ncols() || !d.is_power_of_two() || d == 0 {
            return Err(Error::dim("Hamiltonian must be a 2^n square matrix"));
        }
        if let Some(a) = jumps.iter().find(|a| a.nrows() != d || a.ncols() != d) {
            return Err(Error::dim(format!("jump operator is {}x{}, expected {d}x{d}", a.nrows(), a.ncols())));
        }
        Ok(Liouvillian { n: d.trailing_zeros() as usize, h, jumps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hamiltonian(&self) -> &Mat {
        &self.h
    }

    pub fn jumps(&self) -> &[Mat] {
        &self.jumps
    }

    /// The 4^n x 4^n matrix acting on row-stacked vec(rho).
    pub fn matrix(&self) -> Result<Mat> {
        check_dense(2 * self.n)?;
        let d = self.h.nrows();
        let id = identity(d);
        let mi = C64::new(0.0, -1.0);
        let mut l = (kron(&self.h, &id) - kron(&id, &self.h.transpose())) * mi;
        for a in &self.jumps {
            let ada = a.adjoint() * a;
            l += kron(a, &a.map(|v| v.conj()));
            l -= (kron(&ada, &id) + kron(&id, &ada.transpose())) * C64::new(0.5, 0.0);
        }
        Ok(l)
    }

    /// Direct matrix-form action on rho.
    pub fn apply(&self, rho: &Mat) -> Mat {
        let mi = C64::new(0.0, -1.0);
        let mut out = (&self.h * rho - rho * &self.h) * mi;
        for a in &self.jumps {
            let ad = a.adjoint();
            let ada = &ad * a;
            out += a * rho * &ad;
            out -= (&ada * rho + rho * &ada) * C64::new(0.5, 0.0);
        }
        out
    }
}

/// Row-stack a square matrix.
pub fn vectorize(m: &Mat) -> nalgebra::DVector<C64> {
    let d = m.nrows();
    nalgebra::DVector::from_fn(d * d, |k, _| m[(k / d, k % d)])
}

pub fn unvectorize(v: &nalgebra::DVector<C64>) -> Mat {
    let d = (v.len() as f64).sqrt().round() as usize;
    Mat::from_fn(d, d, |i, j| v[i * d + j])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LindbladMethod {
    /// Dense exponential when 4^n <= 4096, else Rk45.
    Auto,
    Expm,
    Rk45,
}

/// Largest Liouvillian dimension integrated by dense exponential under `Auto`.
pub const EXPM_MAX_DIM: usize = 4096;

/// Reference Lindblad evolution of a collision model's limiting generator.
pub fn lindblad_evolve(
    model: &crate::collision::LindbladModel,
    rho0: &DensityMatrix,
    t: f64,
    tol: f64,
) -> Result<DensityMatrix> {
    lindblad_evolve_with(&model.liouvillian()?, rho0, t, tol, LindbladMethod::Auto)
}

/// rho(t) = e^{L t} rho0.
pub fn lindblad_evolve_with(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t: f64,
    tol: f64,
    method: LindbladMethod,
) -> Result<DensityMatrix> {
    if rho0.n() != l.n() {
        return Err(Error::dim(format!("state has {} qubits, generator acts on {}", rho0.n(), l.n())));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("evolution time {t} must be finite and nonnegative")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let method = match method {
        LindbladMethod::Auto if (1usize << (2 * l.n())) <= EXPM_MAX_DIM => LindbladMethod::Expm,
        LindbladMethod::Auto => LindbladMethod::Rk45,
        m => m,
    };
    let mut out = match method {
        LindbladMethod::Expm => {
            let e = (l.matrix()? * C64::new(t, 0.0)).exp();
            unvectorize(&(e * vectorize(rho0.matrix())))
        }
        _ => {
            check_dense(l.n())?;
            rk45(l, rho0.matrix(), t, tol)?
        }
    };
    symmetrize(&mut out);
    DensityMatrix::from_matrix(out)
}

// Dormand-Prince 5(4) tableau. The generator is time independent, so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Adaptive Dormand-Prince integration; Hermiticity and trace are restored after every step.
fn rk45(l: &Liouvillian, rho0: &Mat, t_end: f64, tol: f64) -> Result<Mat> {
    let tol = if tol > 0.0 { tol } else { 1e-10 };
    let tr0 = linalg::trace(rho0);
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut h = (t_end / 100.0).min(0.1);
    let min_step = t_end * 1e-14;
    while t < t_end {
        h = h.min(t_end - t);
        if h < min_step {
            return Err(Error::Numerical(format!("Lindblad step size underflow at t = {t}")));
        }
        let mut k: Vec<Mat> = Vec::with_capacity(7);
        for row in &A {
            let mut y = rho.clone();
            for (j, kj) in k.iter().enumerate() {
                if row[j] != 0.0 {
                    y += kj * C64::new(h * row[j], 0.0);
                }
            }
            k.push(l.apply(&y));
        }
        let mut y5 = rho.clone();
        let mut err = Mat::zeros(rho.nrows(), rho.ncols());
        for s in 0..7 {
            y5 += &k[s] * C64::new(h * B5[s], 0.0);
            err += &k[s] * C64::new(h * (B5[s] - B4[s]), 0.0);
        }
        let scale = tol * (1.0 + y5.iter().map(|v| v.norm()).fold(0.0, f64::max));
        let e = err.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
        if !e.is_finite() {
            return Err(Error::Numerical("non-finite Lindblad derivative".into()));
        }
        if e <= 1.0 {
            t += h;
            symmetrize(&mut y5);
            let tr = linalg::trace(&y5);
            if tr.norm() > 0.0 {
                y5 *= tr0 / tr;
            }
            rho = y5;
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(rho)
}

/// Channel rho -> Tr_env[U (rho kron sigma) U^dagger] with the environment last.
#[derive(Clone, Debug)]
pub struct StinespringChannel {
    pub u: Mat,
    pub env: DensityMatrix,
}

impl StinespringChannel {
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let mut joint = rho.tensor_append(&self.env)?;
        joint.apply_unitary(&self.u)?;
        let traced: Vec<usize> = (rho.n()..joint.n()).collect();
        joint.partial_trace(&traced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::random::{random_density, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigma_minus() -> Mat {
        let mut m = Mat::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn unitary_examples() {
        let z = PauliSum::parse("1 Z", None).unwrap();
        assert!(max_abs_diff(&unitary_exact(&z, 0.0).unwrap(), &identity(2)) < 1e-15);
        let u = unitary_exact(&z, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((u[(0, 0)] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((u[(1, 1)] - C64::new(0.0, 1.0)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = crate::random::random_pauli_sum(3, 6, &mut rng);
        assert!(unitarity_residual(&unitary_exact(&h, 1.3).unwrap()) < 1e-10);
    }

    #[test]
    fn distance_examples() {
        let a = DensityMatrix::basis(1, 0).unwrap();
        let b = DensityMatrix::basis(1, 1).unwrap();
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        assert!((trace_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = (random_density(2, &mut rng), random_density(2, &mut rng));
        // Hermitian difference: singular values are |eigenvalues|.
        let (vals, _) = linalg::eigh(&(x.matrix() - y.matrix()));
        let oracle: f64 = vals.iter().map(|v| v.abs()).sum();
        assert!((trace_distance(&x, &y).unwrap() - oracle).abs() < 1e-12);
        assert!(trace_distance(&x, &DensityMatrix::zero_state(1).unwrap()).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&identity(4)) - 1.0).abs() < 1e-15);
        let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(-1.0, 0.0)]));
        assert!((spectral_norm(&d) - 3.0).abs() < 1e-12);
        // Power iteration on M^dagger M.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_hermitian(2, &mut rng) + crate::random::random_unitary(2, &mut rng);
        let g = m.adjoint() * &m;
        let mut v = nalgebra::DVector::from_element(4, C64::new(1.0, 0.3));
        let mut lam = 0.0;
        for _ in 0..2000 {
            let w = &g * &v;
            lam = w.norm();
            v = w / C64::new(lam, 0.0);
        }
        assert!((spectral_norm(&m) - lam.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn liouvillian_matches_direct_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let h = random_hermitian(1, &mut rng);
            let a = random_hermitian(1, &mut rng) + crate::random::random_unitary(1, &mut rng);
            let l = Liouvillian::new(h, vec![a]).unwrap();
            let rho = random_density(1, &mut rng);
            let via_matrix = unvectorize(&(l.matrix().unwrap() * vectorize(rho.matrix())));
            assert!(max_abs_diff(&via_matrix, &l.apply(rho.matrix())) < 1e-12);
            assert!(linalg::trace(&l.apply(rho.matrix())).norm() < 1e-10);
        }
    }

    #[test]
    fn amplitude_damping_decay() {
        let l = Liouvillian::new(Mat::zeros(2, 2), vec![sigma_minus()]).unwrap();
        let rho0 = DensityMatrix::basis(1, 1).unwrap();
        let z = crate::state::Observable::from_pauli(PauliSum::parse("1 Z", None).unwrap()).unwrap();
        let expect = 1.0 - 2.0 * (-1.0f64).exp();
        for method in [LindbladMethod::Expm, LindbladMethod::Rk45] {
            let rho = lindblad_evolve_with(&l, &rho0, 1.0, 1e-10, method).unwrap();
            assert!((rho.expectation(&z).unwrap() - expect).abs() < 1e-8, "{method:?}");
        }
    }

    #[test]
    fn no_dynamics_is_identity() {
        let l = Liouvillian::new(Mat::zeros(4, 4), vec![]).unwrap();
        let rho0 = random_density(2, &mut ChaCha8Rng::seed_from_u64(5));
        let rho = lindblad_evolve_with(&l, &rho0, 2.0, 1e-10, LindbladMethod::Auto).unwrap();
        assert!(max_abs_diff(rho.matrix(), rho0.matrix()) < 1e-12);
    }

    #[test]
    fn integrators_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tol = 1e-9;
        for _ in 0..3 {
            let h = random_hermitian(2, &mut rng);
            let jumps =
                vec![random_hermitian(2, &mut rng) * C64::new(0.5, 0.0), crate::random::random_unitary(2, &mut rng)];
            let l = Liouvillian::new(h, jumps).unwrap();
            let rho0 = random_density(2, &mut rng);
            let a = lindblad_evolve_with(&l, &rho0, 0.7, tol, LindbladMethod::Expm).unwrap();
            let b = lindblad_evolve_with(&l, &rho0, 0.7, tol, LindbladMethod::Rk45).unwrap();
            assert!(max_abs_diff(a.matrix(), b.matrix()) <= 10.0 * tol);
            assert!((a.trace().re - 1.0).abs() < 1e-10 && a.hermiticity_residual() < 1e-12);
        }
    }
}
