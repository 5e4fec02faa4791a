//! qDRIFT: N rotations on terms sampled proportionally to their weights.

use rand::Rng;

use crate::circuit::{CircuitProgram, OpSink, QubitRef};
use crate::error::{Error, Result};
use crate::pauli::NormalizedPauliSum;

use super::{system_targets, term_rotation};

/// N = ceil(2 (beta dt)^2 / eps'), at least 1.
pub fn choose_qdrift_length(beta: f64, dt: f64, eps_prime: f64) -> Result<u64> {
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::invalid(format!("eps' = {eps_prime} outside (0, 1)")));
    }
    let tau = beta * dt;
    Ok(((2.0 * tau * tau / eps_prime).ceil() as u64).max(1))
}

/// Emit N sampled rotations, each by tau/N on the unsigned term axis.
pub fn emit_qdrift<R: Rng + ?Sized>(
    h: &NormalizedPauliSum,
    tau: f64,
    n: u64,
    targets: &[QubitRef],
    rng: &mut R,
    sink: &mut dyn OpSink,
) {
    let n = n.max(1);
    let angle = tau / n as f64;
    if sink.order_insensitive() {
        let mut counts = vec![0u64; h.len()];
        for _ in 0..n {
            counts[h.sample_term(rng)] += 1;
        }
        for (l, &c) in counts.iter().enumerate() {
            if c > 0 {
                sink.push_repeated(&[term_rotation(h.term(l), angle, targets)], c);
            }
        }
        return;
    }
    for _ in 0..n {
        let l = h.sample_term(rng);
        sink.push(term_rotation(h.term(l), angle, targets));
    }
}

pub fn qdrift_compile<R: Rng + ?Sized>(
    h: &NormalizedPauliSum,
    beta: f64,
    dt: f64,
    n: u64,
    rng: &mut R,
) -> Result<CircuitProgram> {
    if n == 0 {
        return Err(Error::invalid("qDRIFT length must be at least 1"));
    }
    let mut prog = CircuitProgram::new(h.n(), false, Vec::new());
    emit_qdrift(h, beta * dt, n, &system_targets(h.n()), rng, &mut prog);
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateOp;
    use crate::linalg::{expm_hermitian, max_abs_diff};
    use crate::pauli::PauliSum;
    use crate::state::{DensityMatrix, Observable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(_: usize) -> Result<DensityMatrix> {
        DensityMatrix::zero_state(1)
    }

    #[test]
    fn length_formula() {
        assert_eq!(choose_qdrift_length(1.0, 1.0, 0.01).unwrap(), 200);
        assert_eq!(choose_qdrift_length(0.1, 1.0, 0.5).unwrap(), 1);
        let mut prev = u64::MAX;
        for eps in [0.001, 0.01, 0.1, 0.5, 0.9] {
            let n = choose_qdrift_length(2.0, 0.3, eps).unwrap();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn single_term_composes_to_exact() {
        let h = PauliSum::parse("0.8 -ZX", None).unwrap().normalize().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prog = qdrift_compile(&h, 0.8, 0.9, 7, &mut rng).unwrap();
        assert_eq!(prog.len(), 7);
        let rho = DensityMatrix::basis(2, 1).unwrap();
        let out = prog.execute(&rho, &env).unwrap();
        let u = expm_hermitian(&h.rescaled().to_dense().unwrap(), 0.9);
        assert!(max_abs_diff(out.matrix(), &(&u * rho.matrix() * u.adjoint())) < 1e-12);
    }

    #[test]
    fn zero_time_gives_identity_rotations() {
        let h = PauliSum::parse("1 X\n1 Z", None).unwrap().normalize().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prog = qdrift_compile(&h, 2.0, 0.0, 5, &mut rng).unwrap();
        assert_eq!(prog.len(), 5);
        assert!(prog.ops.iter().all(|op| matches!(op, GateOp::Rotation { angle, .. } if *angle == 0.0)));
    }

    #[test]
    fn batched_count_matches_program_count() {
        use crate::circuit::{count_resources, CostModel, ResourceCounter};
        let h = PauliSum::parse("1 XX\n2 ZI\n0.5 YZ", None).unwrap().normalize().unwrap();
        let prog = qdrift_compile(&h, 3.0, 0.5, 500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut counter = ResourceCounter::new(CostModel::default());
        emit_qdrift(&h, 1.5, 500, &system_targets(2), &mut ChaCha8Rng::seed_from_u64(4), &mut counter);
        assert_eq!(counter.report, count_resources(&prog, &CostModel::default()));
    }

    #[test]
    fn deterministic_under_seed() {
        let h = PauliSum::parse("1 X\n2 Z\n0.5 Y", None).unwrap().normalize().unwrap();
        let a = qdrift_compile(&h, 3.5, 0.4, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = qdrift_compile(&h, 3.5, 0.4, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn channel_bias_shrinks_with_length() {
        let h = PauliSum::parse("1 X\n1 Z", None).unwrap().normalize().unwrap();
        let (beta, dt) = (2.0, 0.6);
        let rho = DensityMatrix::zero_state(1).unwrap();
        let obs = Observable::from_pauli(PauliSum::parse("1 Y", None).unwrap()).unwrap();
        let u = expm_hermitian(&h.rescaled().to_dense().unwrap(), dt);
        let exact = DensityMatrix::from_matrix(&u * rho.matrix() * u.adjoint()).unwrap().expectation(&obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = 10_000;
        let bias = |n: u64, rng: &mut ChaCha8Rng| {
            let mean: f64 = (0..samples)
                .map(|_| {
                    let prog = qdrift_compile(&h, beta, dt, n, rng).unwrap();
                    prog.execute(&rho, &env).unwrap().expectation(&obs).unwrap()
                })
                .sum::<f64>()
                / samples as f64;
            (mean - exact).abs()
        };
        let b1 = bias(1, &mut rng);
        let b4 = bias(4, &mut rng);
        let b16 = bias(16, &mut rng);
        assert!(b1 > b4 && b4 > b16, "{b1} {b4} {b16}");
        // Leading-order bias is O(tau^2 / N).
        assert!(b16 < 2.0 * (beta * dt).powi(2) / 16.0);
    }
}
