//! First-order Trotter and Suzuki product formulas.

use crate::circuit::{CircuitProgram, GateOp, OpSink, QubitRef};
use crate::error::{Error, Result};
use crate::linalg::{expm_hermitian, identity, matrix_power, spectral_norm, Mat, C64};
use crate::pauli::NormalizedPauliSum;

use super::{system_targets, term_rotation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrotterOrder {
    First,
    /// Suzuki formula S_{2k}.
    Suzuki(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepStrategy {
    /// Closed-form bound valid for every normalized Hamiltonian.
    WorstCase,
    /// First-order bound weighted by the instance's anticommuting pairs; Suzuki orders as `WorstCase`.
    Commutator,
    /// Smallest power of two meeting the target against a dense exponential.
    Empirical,
}

impl std::str::FromStr for StepStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "worst-case" => Ok(StepStrategy::WorstCase),
            "commutator" => Ok(StepStrategy::Commutator),
            "empirical" => Ok(StepStrategy::Empirical),
            other => Err(Error::Config(format!("unknown step strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for StepStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepStrategy::WorstCase => "worst-case",
            StepStrategy::Commutator => "commutator",
            StepStrategy::Empirical => "empirical",
        })
    }
}

/// Ops for one first-order step: prod_l e^{-i lambda p_l P_l} in input term order.
pub fn trotter1_step(h: &NormalizedPauliSum, lambda: f64, targets: &[QubitRef]) -> Vec<GateOp> {
    h.sum().terms().iter().map(|(p, term)| term_rotation(term, lambda * p, targets)).collect()
}

/// Suzuki recursion u_k = 1 / (4 - 4^{1/(2k-1)}).
pub fn suzuki_u(k: u32) -> f64 {
    1.0 / (4.0 - 4f64.powf(1.0 / (2.0 * k as f64 - 1.0)))
}

fn suzuki_into(h: &NormalizedPauliSum, k: u32, lambda: f64, targets: &[QubitRef], out: &mut Vec<GateOp>) {
    if k == 1 {
        let half = trotter1_step(h, lambda / 2.0, targets);
        out.extend(half.iter().cloned());
        out.extend(half.into_iter().rev());
        return;
    }
    let u = suzuki_u(k);
    for _ in 0..2 {
        suzuki_into(h, k - 1, u * lambda, targets, out);
    }
    suzuki_into(h, k - 1, (1.0 - 4.0 * u) * lambda, targets, out);
    for _ in 0..2 {
        suzuki_into(h, k - 1, u * lambda, targets, out);
    }
}

/// Ops for one S_{2k}(lambda) step; 2 * 5^{k-1} * L rotations.
pub fn suzuki_step(h: &NormalizedPauliSum, k: u32, lambda: f64, targets: &[QubitRef]) -> Vec<GateOp> {
    let mut out = Vec::new();
    suzuki_into(h, k.max(1), lambda, targets, &mut out);
    out
}

pub fn step_ops(h: &NormalizedPauliSum, order: TrotterOrder, lambda: f64, targets: &[QubitRef]) -> Vec<GateOp> {
    match order {
        TrotterOrder::First => trotter1_step(h, lambda, targets),
        TrotterOrder::Suzuki(k) => suzuki_step(h, k, lambda, targets),
    }
}

/// Emit `steps` repetitions of the order-`order` step for total time `tau`.
pub fn emit_trotter(
    h: &NormalizedPauliSum,
    order: TrotterOrder,
    tau: f64,
    steps: u64,
    targets: &[QubitRef],
    sink: &mut dyn OpSink,
) {
    let steps = steps.max(1);
    let body = step_ops(h, order, tau / steps as f64, targets);
    sink.push_repeated(&body, steps);
}

pub fn trotter1_compile(h: &NormalizedPauliSum, beta: f64, dt: f64, steps: u64) -> Result<CircuitProgram> {
    if steps == 0 {
        return Err(Error::invalid("trotter steps must be at least 1"));
    }
    let mut prog = CircuitProgram::new(h.n(), false, Vec::new());
    emit_trotter(h, TrotterOrder::First, beta * dt, steps, &system_targets(h.n()), &mut prog);
    Ok(prog)
}

pub fn trotter2k_compile(h: &NormalizedPauliSum, beta: f64, dt: f64, k: u32, steps: u64) -> Result<CircuitProgram> {
    if k == 0 {
        return Err(Error::invalid("suzuki half-order k must be at least 1"));
    }
    if steps == 0 {
        return Err(Error::invalid("trotter steps must be at least 1"));
    }
    let mut prog = CircuitProgram::new(h.n(), false, Vec::new());
    emit_trotter(h, TrotterOrder::Suzuki(k), beta * dt, steps, &system_targets(h.n()), &mut prog);
    Ok(prog)
}

/// Dense unitary of the product formula, built from the same op list as the circuit.
pub fn trotter_dense(h: &NormalizedPauliSum, order: TrotterOrder, tau: f64, steps: u64) -> Result<Mat> {
    let n = h.n();
    let targets = system_targets(n);
    let mut step = identity(1 << n);
    for op in step_ops(h, order, tau / steps.max(1) as f64, &targets) {
        if let GateOp::Rotation { axis, angle, .. } = op {
            let p = axis.to_dense()?;
            let (s, c) = angle.sin_cos();
            let r = identity(1 << n) * C64::new(c, 0.0) - p * C64::new(0.0, s);
            step = r * step;
        }
    }
    Ok(matrix_power(&step, steps.max(1)))
}

/// Sum over term pairs of ||[p_i P_i, p_j P_j]||, i.e. 2 p_i p_j for anticommuting pairs.
pub fn commutator_weight(h: &NormalizedPauliSum) -> f64 {
    let terms = h.sum().terms();
    let mut total = 0.0;
    for i in 0..terms.len() {
        for j in (i + 1)..terms.len() {
            if !terms[i].1.commutes_with(&terms[j].1) {
                total += 2.0 * terms[i].0 * terms[j].0;
            }
        }
    }
    total
}

/// Constant c in the order-2k bound (c tau)^{2k+1} / steps^{2k}.
pub fn suzuki_constant(k: u32) -> f64 {
    2.0 * 5f64.powi(k as i32 - 1)
}

/// Closed-form step count.
///
/// First order: ||U - S^s|| <= tau^2 / (2 s), using commutator weight <= 1.
/// Order 2k: ||U - S^s|| <= (c_k tau)^{2k+1} / s^{2k} with c_k = 2 * 5^{k-1}.
pub fn worst_case_steps(tau: f64, order: TrotterOrder, eps_prime: f64) -> u64 {
    let s = match order {
        TrotterOrder::First => tau * tau / (2.0 * eps_prime),
        TrotterOrder::Suzuki(k) => {
            let two_k = 2.0 * k as f64;
            (suzuki_constant(k) * tau).powf((two_k + 1.0) / two_k) * eps_prime.powf(-1.0 / two_k)
        }
    };
    (s.ceil() as u64).max(1)
}

/// First order: ||U - S^s|| <= tau^2 C / (2 s) with C the commutator weight of `h`.
pub fn commutator_steps(h: &NormalizedPauliSum, tau: f64, order: TrotterOrder, eps_prime: f64) -> u64 {
    match order {
        TrotterOrder::First => ((tau * tau * commutator_weight(h) / (2.0 * eps_prime)).ceil() as u64).max(1),
        TrotterOrder::Suzuki(_) => worst_case_steps(tau, order, eps_prime),
    }
}

/// Operator-norm error of the product formula against the dense exponential.
pub fn trotter_error(h: &NormalizedPauliSum, order: TrotterOrder, tau: f64, steps: u64) -> Result<f64> {
    let exact = expm_hermitian(&h.sum().to_dense()?, tau);
    Ok(spectral_norm(&(exact - trotter_dense(h, order, tau, steps)?)))
}

pub fn choose_trotter_steps(
    h: &NormalizedPauliSum,
    beta: f64,
    dt: f64,
    order: TrotterOrder,
    eps_prime: f64,
    strategy: StepStrategy,
) -> Result<u64> {
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::invalid(format!("eps' = {eps_prime} outside (0, 1)")));
    }
    let tau = beta * dt;
    match strategy {
        StepStrategy::WorstCase => Ok(worst_case_steps(tau, order, eps_prime)),
        StepStrategy::Commutator => Ok(commutator_steps(h, tau, order, eps_prime)),
        StepStrategy::Empirical => {
            let exact = expm_hermitian(&h.sum().to_dense()?, tau);
            let mut steps = 1u64;
            loop {
                let err = spectral_norm(&(&exact - trotter_dense(h, order, tau, steps)?));
                if err <= eps_prime {
                    return Ok(steps);
                }
                if steps >= 1 << 40 {
                    return Err(Error::Numerical(format!("no step count up to 2^40 reaches eps' = {eps_prime:e}")));
                }
                steps *= 2;
            }
        }
    }
}
