//! Transverse-field Ising chain with amplitude-damping sub-environments.

use crate::collision::{lindblad_collision_spec, CollisionSpec, Jump, JumpOp, LindbladModel};
use crate::error::{Error, Result};
use crate::linalg::{identity, kron, Mat, C64};
use crate::pauli::{Axis, PauliString, PauliSum};
use crate::state::{DensityMatrix, Observable};

/// -J sum_i Z_i Z_{i+1} - h sum_i X_i, open chain unless `periodic`. Allows m = 1.
pub fn tfim_terms(m: usize, j: f64, h: f64, periodic: bool) -> Result<PauliSum> {
    if m == 0 {
        return Err(Error::invalid("chain needs at least one site"));
    }
    let mut terms = Vec::new();
    let bonds = if periodic && m > 2 { m } else { m - 1 };
    for i in 0..bonds {
        let a = PauliString::single(m, i, Axis::Z);
        let b = PauliString::single(m, (i + 1) % m, Axis::Z);
        terms.push((-j, a.mul(&b)?));
    }
    for i in 0..m {
        terms.push((-h, PauliString::single(m, i, Axis::X)));
    }
    PauliSum::from_terms(m, terms)
}

/// Open-boundary Ising chain on m >= 2 sites.
pub fn tfim_hamiltonian(m: usize, j: f64, h: f64) -> Result<PauliSum> {
    if m < 2 {
        return Err(Error::invalid(format!("Ising chain needs m >= 2, got {m}")));
    }
    tfim_terms(m, j, h, false)
}

pub fn tfim_hamiltonian_periodic(m: usize, j: f64, h: f64) -> Result<PauliSum> {
    if m < 2 {
        return Err(Error::invalid(format!("Ising chain needs m >= 2, got {m}")));
    }
    tfim_terms(m, j, h, true)
}

/// sqrt(gamma)(s+_j s-_a + s-_j s+_a) = (sqrt(gamma)/2)(X_j X_a + Y_j Y_a) on m system qubits
/// plus the env qubit a = m. Sites are 0-based.
pub fn amp_damp_interaction(site: usize, gamma: f64, m: usize) -> Result<PauliSum> {
    if site >= m {
        return Err(Error::invalid(format!("site {site} outside 0..{m}")));
    }
    if gamma < 0.0 {
        return Err(Error::invalid("damping rate must be nonnegative"));
    }
    let n = m + 1;
    let c = gamma.sqrt() / 2.0;
    let pair = |axis| PauliString::single(n, site, axis).mul(&PauliString::single(n, m, axis));
    PauliSum::from_terms(n, vec![(c, pair(Axis::X)?), (c, pair(Axis::Y)?)])
}

/// sqrt(gamma) P kron X_a, the collision realizing the Hermitian jump sqrt(gamma) P.
pub fn pauli_jump_interaction(p: &PauliString, gamma: f64) -> Result<PauliSum> {
    if gamma < 0.0 {
        return Err(Error::invalid("jump rate must be nonnegative"));
    }
    let x = PauliString::single(1, 0, Axis::X);
    PauliSum::from_terms(p.n() + 1, vec![(gamma.sqrt(), p.tensor(&x)?)])
}

/// Ground and excited populations (1, e^{-omega}) / (1 + e^{-omega}); omega = inf gives (1, 0).
pub fn thermal_populations(omega: f64) -> Result<(f64, f64)> {
    if omega.is_nan() || omega < 0.0 {
        return Err(Error::invalid(format!("inverse temperature {omega} must be in [0, inf]")));
    }
    let w = (-omega).exp();
    Ok((1.0 / (1.0 + w), w / (1.0 + w)))
}

pub fn thermal_env_state(omega: f64) -> Result<DensityMatrix> {
    let (p0, p1) = thermal_populations(omega)?;
    let mut m = Mat::zeros(2, 2);
    m[(0, 0)] = C64::new(p0, 0.0);
    m[(1, 1)] = C64::new(p1, 0.0);
    DensityMatrix::from_matrix(m)
}

/// |0><1|.
pub fn sigma_minus() -> Mat {
    let mut m = Mat::zeros(2, 2);
    m[(0, 1)] = C64::new(1.0, 0.0);
    m
}

/// (1/m) sum_j Z_j.
pub fn magnetization(m: usize) -> Result<Observable> {
    if m == 0 {
        return Err(Error::invalid("magnetization needs at least one site"));
    }
    let terms = (0..m).map(|i| (1.0 / m as f64, PauliString::single(m, i, Axis::Z)));
    Observable::from_pauli(PauliSum::from_terms(m, terms)?)
}

/// sqrt(gamma) sigma^- on 0-based `site` of an n-qubit register.
pub fn amp_damp_jump(site: usize, gamma: f64, n: usize) -> Result<Mat> {
    if site >= n {
        return Err(Error::invalid(format!("site {site} outside 0..{n}")));
    }
    if gamma < 0.0 {
        return Err(Error::invalid("damping rate must be nonnegative"));
    }
    crate::linalg::check_dense(n)?;
    let left = identity(1 << site);
    let right = identity(1 << (n - site - 1));
    Ok(kron(&kron(&left, &sigma_minus()), &right) * C64::new(gamma.sqrt(), 0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub m: usize,
    pub j: f64,
    pub h: f64,
    pub gamma: f64,
    /// Env inverse temperature; infinity is the zero-temperature state |0>.
    pub omega: f64,
    pub t: f64,
    pub eps: f64,
    pub periodic: bool,
    pub env_h_strength: f64,
}

impl BenchmarkConfig {
    /// Ten-site chain with J = 1, h = 0.1, gamma = 1.
    pub fn paper() -> Self {
        BenchmarkConfig { m: 10, ..Self::desk() }
    }

    /// Four-site chain with the same couplings, small enough for dense oracles.
    pub fn desk() -> Self {
        BenchmarkConfig {
            m: 4,
            j: 1.0,
            h: 0.1,
            gamma: 1.0,
            omega: f64::INFINITY,
            t: 1.0,
            eps: 0.01,
            periodic: false,
            env_h_strength: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("benchmark needs m >= 1"));
        }
        if !(self.j >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::invalid("J and gamma must be nonnegative"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::invalid("evolution time must be positive"));
        }
        Ok(())
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One amplitude-damping jump per site over the Ising chain.
pub fn benchmark_model(cfg: &BenchmarkConfig) -> Result<LindbladModel> {
    cfg.validate()?;
    let system_h = tfim_terms(cfg.m, cfg.j, cfg.h, cfg.periodic)?;
    let jumps = (0..cfg.m).map(|s| Jump { op: JumpOp::Lower(s), gamma: cfg.gamma }).collect();
    LindbladModel::new(cfg.m, system_h, jumps, cfg.omega, cfg.env_h_strength)
}

pub fn benchmark_spec(cfg: &BenchmarkConfig, nu: u64) -> Result<(LindbladModel, CollisionSpec)> {
    let model = benchmark_model(cfg)?;
    let spec = lindblad_collision_spec(&model, cfg.t, nu)?;
    Ok((model, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, spectral_norm};
    use crate::random::random_density;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pauli_dense(a: Axis) -> Mat {
        PauliString::single(1, 0, a).to_dense().unwrap()
    }

    #[test]
    fn tfim_structure() {
        let h = tfim_hamiltonian(2, 1.0, 0.0).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.terms()[0].1.to_string(), "-ZZ");
        let h = tfim_hamiltonian(10, 1.0, 0.1).unwrap();
        assert_eq!(h.len(), 19);
        assert!((h.total_weight() - 10.0).abs() < 1e-12);
        assert!(tfim_hamiltonian(1, 1.0, 0.1).is_err());
        assert_eq!(tfim_hamiltonian_periodic(4, 1.0, 0.1).unwrap().len(), 8);
    }

    #[test]
    fn tfim_matches_kronecker_oracle() {
        let (m, j, h) = (3, 0.7, 0.2);
        let ham = tfim_hamiltonian(m, j, h).unwrap().to_dense().unwrap();
        let embed = |ops: Vec<Mat>| ops.iter().skip(1).fold(ops[0].clone(), |acc, o| kron(&acc, o));
        let mut oracle = Mat::zeros(8, 8);
        for i in 0..m - 1 {
            let ops = (0..m).map(|q| if q == i || q == i + 1 { pauli_dense(Axis::Z) } else { identity(2) }).collect();
            oracle -= embed(ops) * C64::new(j, 0.0);
        }
        for i in 0..m {
            let ops = (0..m).map(|q| if q == i { pauli_dense(Axis::X) } else { identity(2) }).collect();
            oracle -= embed(ops) * C64::new(h, 0.0);
        }
        assert!(max_abs_diff(&ham, &oracle) < 1e-12);
        assert!(crate::linalg::hermiticity_residual(&ham) < 1e-12);
    }

    #[test]
    fn zero_field_commutes_with_global_flip() {
        let ham = tfim_hamiltonian(4, 1.0, 0.0).unwrap().to_dense().unwrap();
        let flip = PauliString::new(crate::pauli::Phase::ONE, &[Axis::X; 4]).unwrap().to_dense().unwrap();
        assert!(spectral_norm(&(&ham * &flip - &flip * &ham)) < 1e-12);
    }

    #[test]
    fn interaction_dense_form() {
        assert!(amp_damp_interaction(0, 0.0, 1).unwrap().is_empty());
        let hi = amp_damp_interaction(0, 1.0, 1).unwrap();
        assert_eq!(hi.len(), 2);
        assert!((hi.total_weight() - 1.0).abs() < 1e-15);
        let mut want = Mat::zeros(4, 4);
        want[(1, 2)] = C64::new(1.0, 0.0);
        want[(2, 1)] = C64::new(1.0, 0.0);
        assert!(max_abs_diff(&hi.to_dense().unwrap(), &want) < 1e-12);
        // sigma+ sigma- + sigma- sigma+ on site 1 of 2, env last.
        let sm = sigma_minus();
        let sp = sm.adjoint();
        let i2 = identity(2);
        let want = kron(&kron(&i2, &sp), &sm) + kron(&kron(&i2, &sm), &sp);
        let got = amp_damp_interaction(1, 1.0, 2).unwrap().to_dense().unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
        assert!(amp_damp_interaction(2, 1.0, 2).is_err());
    }

    #[test]
    fn zero_temperature_thermal_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hi = amp_damp_interaction(0, 0.8, 2).unwrap().to_dense().unwrap();
        let env = thermal_env_state(f64::INFINITY).unwrap();
        for _ in 0..10 {
            let rho = random_density(2, &mut rng).tensor_append(&env).unwrap();
            let comm = &hi * rho.matrix() - rho.matrix() * &hi;
            let traced = DensityMatrix::from_matrix_unchecked(comm).partial_trace(&[2]).unwrap();
            assert!(traced.matrix().iter().all(|v| v.norm() < 1e-12));
        }
    }

    #[test]
    fn thermal_states() {
        let z = thermal_env_state(f64::INFINITY).unwrap();
        assert!(max_abs_diff(z.matrix(), DensityMatrix::zero_state(1).unwrap().matrix()) < 1e-15);
        let half = thermal_env_state(0.0).unwrap();
        assert!(max_abs_diff(half.matrix(), DensityMatrix::maximally_mixed(1).unwrap().matrix()) < 1e-15);
        let t = thermal_env_state(3f64.ln()).unwrap();
        assert!((t.matrix()[(0, 0)].re - 0.75).abs() < 1e-12 && (t.matrix()[(1, 1)].re - 0.25).abs() < 1e-12);
        assert!(thermal_env_state(-1.0).is_err());
    }

    #[test]
    fn magnetization_examples() {
        for m in 1..=4 {
            let o = magnetization(m).unwrap();
            assert!((o.norm() - 1.0).abs() < 1e-12);
            assert!((DensityMatrix::zero_state(m).unwrap().expectation(&o).unwrap() - 1.0).abs() < 1e-12);
            assert!(DensityMatrix::maximally_mixed(m).unwrap().expectation(&o).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn jump_operator() {
        let a = amp_damp_jump(0, 4.0, 1).unwrap();
        assert!(max_abs_diff(&a, &(sigma_minus() * C64::new(2.0, 0.0))) < 1e-15);
        let a = amp_damp_jump(1, 0.5, 3).unwrap();
        let ada = a.adjoint() * &a;
        let one = DensityMatrix::basis(1, 1).unwrap().into_matrix();
        let want = kron(&kron(&identity(2), &one), &identity(2)) * C64::new(0.5, 0.0);
        assert!(max_abs_diff(&ada, &want) < 1e-15);
        assert!(amp_damp_jump(3, 1.0, 3).is_err());
    }

    #[test]
    fn benchmark_defaults() {
        let p = BenchmarkConfig::paper();
        assert_eq!((p.m, p.j, p.h, p.gamma), (10, 1.0, 0.1, 1.0));
        let (model, spec) = benchmark_spec(&BenchmarkConfig::desk(), 2).unwrap();
        assert_eq!(model.m(), 4);
        assert_eq!(spec.k(), 8);
        let single = BenchmarkConfig { m: 1, h: 0.0, ..BenchmarkConfig::desk() };
        let model = benchmark_model(&single).unwrap();
        assert!(model.system_h.is_empty());
        assert_eq!(model.jumps.len(), 1);
    }
}
