//! Truncated-Taylor LCU of e^{-i tau H} split into r segments.
//!
//! With x = tau / r each segment is approximated by
//!   sum_{even k <= q} x^k/k! sqrt(1 + a_k^2) (-i)^k H^k sum_m p_m e^{-i phi_k P_m},
//! where a_k = x/(k+1) and phi_k = arctan(a_k). Pairing order k with k+1 this way keeps all
//! Taylor orders up to q+1, and every summand is a product of Paulis times one rotation.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::circuit::{CircuitProgram, GateOp, OpSink, QubitRef};
use crate::error::{Error, Result};
use crate::linalg::{identity, Mat, C64};
use crate::pauli::{NormalizedPauliSum, PauliString, Phase};

use super::{system_targets, term_rotation};

#[derive(Clone, Debug, PartialEq)]
pub struct LcuParams {
    pub r: u64,
    pub q: u32,
    pub tau: f64,
    pub alpha_segment: f64,
    pub alpha_total: f64,
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Weight of even order k in one segment: x^k/k! * sqrt(1 + (x/(k+1))^2).
pub fn segment_weight(x: f64, k: u32) -> f64 {
    let a = x / (k as f64 + 1.0);
    x.powi(k as i32) / factorial(k) * (1.0 + a * a).sqrt()
}

/// Rotation angle for order k.
pub fn segment_angle(x: f64, k: u32) -> f64 {
    (x / (k as f64 + 1.0)).atan()
}

/// sum_{k > q} x^k / k!, summed directly until terms are negligible, plus an e^x remainder bound.
pub fn taylor_tail(x: f64, q: u32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut k = q + 1;
    let mut term = x.powi(k as i32) / factorial(k);
    let mut sum = 0.0;
    for _ in 0..200 {
        sum += term;
        k += 1;
        term *= x / k as f64;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum + term * x.exp()
}

impl LcuParams {
    pub fn new(tau: f64, r: u64, q: u32) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau = {tau} must be finite and nonnegative")));
        }
        if r == 0 {
            return Err(Error::invalid("segment count r must be at least 1"));
        }
        if !q.is_multiple_of(2) {
            return Err(Error::invalid(format!("truncation order q = {q} must be even")));
        }
        let x = tau / r as f64;
        if x >= 1.0 {
            return Err(Error::invalid(format!("tau/r = {x} must be below 1")));
        }
        let alpha_segment: f64 = (0..=q).step_by(2).map(|k| segment_weight(x, k)).sum();
        Ok(LcuParams { r, q, tau, alpha_segment, alpha_total: alpha_segment.powf(r as f64) })
    }

    pub fn x(&self) -> f64 {
        self.tau / self.r as f64
    }

    /// Even orders 0, 2, ..., q.
    pub fn orders(&self) -> Vec<u32> {
        (0..=self.q).step_by(2).collect()
    }

    /// Truncation bound r * tail(tau/r, q).
    pub fn error_bound(&self) -> f64 {
        self.r as f64 * taylor_tail(self.x(), self.q)
    }
}

/// Smallest even q with r * tail(tau/r, q) <= eps'.
pub fn choose_lcu_q(tau: f64, r: u64, eps_prime: f64) -> Result<u32> {
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::invalid(format!("eps' = {eps_prime} outside (0, 1)")));
    }
    let x = tau / r as f64;
    let mut q = 0u32;
    while r as f64 * taylor_tail(x, q) > eps_prime {
        q += 2;
        if q > 200 {
            return Err(Error::Numerical("LCU truncation order exceeds 200".into()));
        }
    }
    Ok(q)
}

/// r = max(ceil(c_r tau^2 K), ceil(tau) + 1), then the smallest admissible q.
pub fn choose_lcu_params(tau: f64, k_collisions: usize, eps_prime: f64, c_r: f64) -> Result<LcuParams> {
    if k_collisions == 0 {
        return Err(Error::invalid("collision count must be at least 1"));
    }
    if !(c_r > 0.0) {
        return Err(Error::invalid("c_r must be positive"));
    }
    let by_variance = (c_r * tau * tau * k_collisions as f64).ceil() as u64;
    let by_radius = tau.ceil() as u64 + 1;
    let r = by_variance.max(by_radius).max(1);
    let q = choose_lcu_q(tau, r, eps_prime)?;
    LcuParams::new(tau, r, q)
}

/// Asymptotic truncation order log(r/eps') / log log(r/eps'), for comparison only.
pub fn asymptotic_q(r: u64, eps_prime: f64) -> f64 {
    let v = (r as f64 / eps_prime).ln();
    if v <= std::f64::consts::E {
        return v;
    }
    v / v.ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LcuSegment {
    pub k: u32,
    /// Term indices l_1..l_k of the Pauli product.
    pub paulis: Vec<usize>,
    /// Term index m of the rotation axis.
    pub rotation: usize,
    pub angle: f64,
    /// (-i)^k.
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledUnitary {
    pub segments: Vec<LcuSegment>,
}

pub fn lcu_sample<R: Rng + ?Sized>(h: &NormalizedPauliSum, params: &LcuParams, rng: &mut R) -> SampledUnitary {
    let x = params.x();
    let orders = params.orders();
    let weights: Vec<f64> = orders.iter().map(|&k| segment_weight(x, k)).collect();
    let order_dist = WeightedIndex::new(&weights).expect("positive order weights");
    let segments = (0..params.r)
        .map(|_| {
            let k = orders[order_dist.sample(rng)];
            let paulis = (0..k).map(|_| h.sample_term(rng)).collect();
            let rotation = h.sample_term(rng);
            LcuSegment { k, paulis, rotation, angle: segment_angle(x, k), phase: Phase::from_exponent(-(k as i64)) }
        })
        .collect();
    SampledUnitary { segments }
}

impl LcuSegment {
    /// Phased product (-i)^k P_{l_1} ... P_{l_k}.
    pub fn word(&self, h: &NormalizedPauliSum) -> PauliString {
        let mut w = PauliString::identity(h.n()).with_phase(self.phase);
        for &l in &self.paulis {
            w = w.mul(h.term(l)).expect("terms share the register");
        }
        w
    }

    /// Rotation first, then the Pauli word. The word is skipped when it is +I.
    pub fn emit(&self, h: &NormalizedPauliSum, targets: &[QubitRef], sink: &mut dyn OpSink) {
        sink.push(term_rotation(h.term(self.rotation), self.angle, targets));
        let w = self.word(h);
        if !(w.is_identity() && w.phase() == Phase::ONE) {
            sink.push(GateOp::Pauli { pauli: w, targets: targets.to_vec() });
        }
    }

    pub fn to_dense(&self, h: &NormalizedPauliSum) -> Result<Mat> {
        let d = 1usize << h.n();
        let axis = h.term(self.rotation).to_dense()?;
        let (s, c) = self.angle.sin_cos();
        let rot = identity(d) * C64::new(c, 0.0) - axis * C64::new(0.0, s);
        Ok(self.word(h).to_dense()? * rot)
    }
}

impl SampledUnitary {
    pub fn emit(&self, h: &NormalizedPauliSum, targets: &[QubitRef], sink: &mut dyn OpSink) {
        for seg in &self.segments {
            seg.emit(h, targets, sink);
        }
    }

    /// Dense product, later segments on the left.
    pub fn to_dense(&self, h: &NormalizedPauliSum) -> Result<Mat> {
        let mut u = identity(1 << h.n());
        for seg in &self.segments {
            u = seg.to_dense(h)? * u;
        }
        Ok(u)
    }
}

/// Uncontrolled fragment on `System(0..n)`.
pub fn lcu_to_program(sampled: &SampledUnitary, h: &NormalizedPauliSum) -> CircuitProgram {
    let mut prog = CircuitProgram::new(h.n(), false, Vec::new());
    sampled.emit(h, &system_targets(h.n()), &mut prog);
    prog
}

/// Dense U~ by enumerating every (k, l_1..l_k, m) summand of a segment, raised to the r-th power.
pub fn lcu_enumerate(h: &NormalizedPauliSum, params: &LcuParams) -> Result<Mat> {
    let d = 1usize << h.n();
    let x = params.x();
    let probs = h.probabilities();
    let l = probs.len();
    let mut segment = Mat::zeros(d, d);
    for k in params.orders() {
        let w = segment_weight(x, k);
        let slots = k as usize + 1;
        let count = l.pow(slots as u32);
        for code in 0..count {
            let mut idx = Vec::with_capacity(slots);
            let mut c = code;
            for _ in 0..slots {
                idx.push(c % l);
                c /= l;
            }
            let coef: f64 = w * idx.iter().map(|&i| probs[i]).product::<f64>();
            let seg = LcuSegment {
                k,
                paulis: idx[..k as usize].to_vec(),
                rotation: idx[k as usize],
                angle: segment_angle(x, k),
                phase: Phase::from_exponent(-(k as i64)),
            };
            segment += seg.to_dense(h)? * C64::new(coef, 0.0);
        }
    }
    Ok(crate::linalg::matrix_power(&segment, params.r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_hermitian, max_abs_diff, spectral_norm};
    use crate::pauli::PauliSum;
    use crate::random::{random_density, random_pauli_sum};
    use crate::state::DensityMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tail_matches_closed_form() {
        let x: f64 = 0.4;
        let direct = x.exp() - (1.0 + x + x * x / 2.0);
        assert!((taylor_tail(x, 2) - direct).abs() < 1e-15);
        assert_eq!(taylor_tail(0.0, 0), 0.0);
    }

    #[test]
    fn zero_time_limit() {
        let p = choose_lcu_params(0.0, 3, 1e-3, 1.0).unwrap();
        assert_eq!((p.r, p.q), (1, 0));
        assert_eq!(p.alpha_total, 1.0);
    }

    #[test]
    fn params_respect_invariants() {
        for &tau in &[0.05, 0.3, 1.0, 2.5] {
            for &k in &[1usize, 4, 20] {
                let p = choose_lcu_params(tau, k, 1e-3, 1.0).unwrap();
                assert!(p.x() < 1.0);
                assert!(p.alpha_total <= (tau * tau / p.r as f64).exp() + 1e-9);
                assert!(p.error_bound() <= 1e-3);
                assert_eq!(p.q % 2, 0);
            }
        }
    }

    #[test]
    fn truncation_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_pauli_sum(2, 3, &mut rng).normalize().unwrap();
        let p = choose_lcu_params(1.0, 4, 1e-3, 1.0).unwrap();
        let exact = expm_hermitian(&h.sum().to_dense().unwrap(), p.tau);
        let err = spectral_norm(&(exact - lcu_enumerate(&h, &p).unwrap()));
        assert!(err <= 1e-3, "error {err}");
        for (r, q) in [(1u64, 0u32), (2, 2), (3, 4)] {
            let p = LcuParams::new(0.6, r, q).unwrap();
            let exact = expm_hermitian(&h.sum().to_dense().unwrap(), 0.6);
            let err = spectral_norm(&(exact - lcu_enumerate(&h, &p).unwrap()));
            assert!(err <= p.error_bound(), "r={r} q={q}: {err} > {}", p.error_bound());
        }
    }

    #[test]
    fn q_zero_samples_are_pure_rotations() {
        let h = PauliSum::parse("1 X\n1 Z", None).unwrap().normalize().unwrap();
        let p = LcuParams::new(0.4, 2, 0).unwrap();
        let s = lcu_sample(&h, &p, &mut ChaCha8Rng::seed_from_u64(2));
        for seg in &s.segments {
            assert_eq!(seg.k, 0);
            assert!((seg.angle - 0.2f64.atan()).abs() < 1e-15);
        }
        assert_eq!(lcu_to_program(&s, &h).len(), 2);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let h = PauliSum::parse("1 X\n0.3 Z\n0.2 Y", None).unwrap().normalize().unwrap();
        let p = LcuParams::new(0.9, 2, 4).unwrap();
        let a = lcu_sample(&h, &p, &mut ChaCha8Rng::seed_from_u64(5));
        let b = lcu_sample(&h, &p, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_is_unbiased() {
        // One-qubit H = Z, tau = 0.4, r = 2.
        let h = PauliSum::parse("1 Z", None).unwrap().normalize().unwrap();
        let p = LcuParams::new(0.4, 2, 2).unwrap();
        let target = lcu_enumerate(&h, &p).unwrap() / C64::new(p.alpha_total, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut sum = Mat::zeros(2, 2);
        let mut sum_sq = nalgebra::DMatrix::<f64>::zeros(4, 1);
        for _ in 0..draws {
            let u = lcu_sample(&h, &p, &mut rng).to_dense(&h).unwrap();
            for (i, v) in u.iter().enumerate() {
                sum_sq[i] += v.norm_sqr();
            }
            sum += u;
        }
        let mean = sum / C64::new(draws as f64, 0.0);
        for i in 0..4 {
            let var = sum_sq[i] / draws as f64 - mean.as_slice()[i].norm_sqr();
            let sigma = (var.max(1e-30) / draws as f64).sqrt();
            let diff = (mean.as_slice()[i] - target.as_slice()[i]).norm();
            assert!(diff <= 3.0 * sigma.max(1e-12) + 1e-12, "entry {i}: {diff} vs sigma {sigma}");
        }
    }

    #[test]
    fn phase_of_even_order_survives() {
        let h = PauliSum::parse("1 X", None).unwrap().normalize().unwrap();
        let seg = LcuSegment { k: 2, paulis: vec![0, 0], rotation: 0, angle: 0.1, phase: Phase::from_exponent(-2) };
        assert_eq!(seg.word(&h), PauliString::identity(1).with_phase(Phase::MINUS_ONE));
        let mut prog = CircuitProgram::new(1, false, Vec::new());
        seg.emit(&h, &[QubitRef::System(0)], &mut prog);
        assert_eq!(prog.len(), 2);
        let ctrl = prog.ops[1].clone().controlled(QubitRef::Ancilla, crate::state::Polarity::OnOne).unwrap();
        match ctrl {
            GateOp::ControlledPauli { pauli, .. } => assert_eq!(pauli.phase(), Phase::MINUS_ONE),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fragment_execution_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_pauli_sum(2, 4, &mut rng).normalize().unwrap();
        let p = LcuParams::new(1.2, 3, 4).unwrap();
        let rho = random_density(2, &mut rng);
        for _ in 0..10 {
            let s = lcu_sample(&h, &p, &mut rng);
            let u = s.to_dense(&h).unwrap();
            let out = lcu_to_program(&s, &h).execute(&rho, &|_| DensityMatrix::zero_state(1)).unwrap();
            assert!(max_abs_diff(out.matrix(), &(&u * rho.matrix() * u.adjoint())) < 1e-12);
        }
    }
}
