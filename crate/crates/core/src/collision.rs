//! Collision maps: Markovian K-collision maps, the Lindblad-approximating (m, nu) cycle and
//! the partial-swap non-Markovian variant, as sampled circuits and as exact dense maps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::circuit::{
    CircuitProgram, ControlledSink, CostModel, EnvPreparer, GateOp, OpSink, QubitRef, ResourceCounter, ResourceReport,
};
use crate::error::{Error, Result};
use crate::hamsim::lcu::lcu_sample;
use crate::hamsim::qdrift::emit_qdrift;
use crate::hamsim::trotter::emit_trotter;
use crate::hamsim::{
    choose_lcu_params, choose_lcu_q, choose_qdrift_length, choose_trotter_steps, Backend, BackendOptions, LcuParams,
    PrecisionMode, TrotterOrder,
};
use crate::linalg::{check_dense, expm_hermitian, identity, Mat, C64};
use crate::models::{
    amp_damp_interaction, amp_damp_jump, pauli_jump_interaction, thermal_env_state, thermal_populations,
};
use crate::oracles::Liouvillian;
use crate::pauli::{Axis, NormalizedPauliSum, PauliString, PauliSum};
use crate::state::{DensityMatrix, Observable, Polarity};

/// Initial state of one sub-environment.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvState {
    /// Single-qubit thermal state at inverse temperature omega (infinity gives |0>).
    Thermal {
        omega: f64,
    },
    Basis {
        width: usize,
        index: usize,
    },
    Dense(DensityMatrix),
}

impl EnvState {
    pub fn width(&self) -> usize {
        match self {
            EnvState::Thermal { .. } => 1,
            EnvState::Basis { width, .. } => *width,
            EnvState::Dense(d) => d.n(),
        }
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        match self {
            EnvState::Thermal { omega } => thermal_env_state(*omega),
            EnvState::Basis { width, index } => DensityMatrix::basis(*width, *index),
            EnvState::Dense(d) => Ok(d.clone()),
        }
    }
}

/// One system-environment collision. The joint register is the system followed by the env.
#[derive(Clone, Debug)]
pub struct Collision {
    n: usize,
    pub system_h: PauliSum,
    pub env_h: PauliSum,
    pub interaction_h: PauliSum,
    pub env_state: EnvState,
    h_total: Option<NormalizedPauliSum>,
}

impl Collision {
    pub fn new(system_h: PauliSum, env_h: PauliSum, interaction_h: PauliSum, env_state: EnvState) -> Result<Self> {
        let n = system_h.n();
        let w = env_state.width();
        if w == 0 {
            return Err(Error::invalid("environment must have at least one qubit"));
        }
        if env_h.n() != w {
            return Err(Error::dim(format!("env Hamiltonian on {} qubits, env has {w}", env_h.n())));
        }
        if interaction_h.n() != n + w {
            return Err(Error::dim(format!("interaction on {} qubits, system + env has {}", interaction_h.n(), n + w)));
        }
        let sys: Vec<usize> = (0..n).collect();
        let env: Vec<usize> = (n..n + w).collect();
        let total = system_h.embed(n + w, &sys)?.plus(&env_h.embed(n + w, &env)?)?.plus(&interaction_h)?;
        let h_total = if total.is_empty() { None } else { Some(total.normalize()?) };
        Ok(Collision { n, system_h, env_h, interaction_h, env_state, h_total })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn env_width(&self) -> usize {
        self.env_state.width()
    }

    /// Normalized joint Hamiltonian; `None` when it vanishes.
    pub fn h_total(&self) -> Option<&NormalizedPauliSum> {
        self.h_total.as_ref()
    }

    /// Total weight beta_j (zero for a vanishing Hamiltonian).
    pub fn beta(&self) -> f64 {
        self.h_total.as_ref().map_or(0.0, |h| h.beta())
    }

    pub fn joint_h(&self) -> PauliSum {
        self.h_total.as_ref().map_or_else(|| PauliSum::new(self.n + self.env_width()), |h| h.rescaled())
    }

    /// e^{-i dt H_j} on system + env.
    pub fn unitary(&self, dt: f64) -> Result<Mat> {
        let q = self.n + self.env_width();
        check_dense(q)?;
        match &self.h_total {
            Some(h) => Ok(expm_hermitian(&h.rescaled().to_dense()?, dt)),
            None => Ok(identity(1 << q)),
        }
    }
}

/// K collisions of duration dt on an n-qubit system. Repeated collisions share one `Arc`.
#[derive(Clone, Debug)]
pub struct CollisionSpec {
    pub n: usize,
    pub system_h: PauliSum,
    pub collisions: Vec<Arc<Collision>>,
    pub dt: f64,
}

impl CollisionSpec {
    pub fn new(system_h: PauliSum, collisions: Vec<Arc<Collision>>, dt: f64) -> Result<Self> {
        let n = system_h.n();
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("collision time {dt} must be finite and nonnegative")));
        }
        if let Some(c) = collisions.iter().find(|c| c.n() != n) {
            return Err(Error::dim(format!("collision on {} system qubits, spec has {n}", c.n())));
        }
        Ok(CollisionSpec { n, system_h, collisions, dt })
    }

    /// K copies of a single collision built from `system_h`.
    pub fn uniform(
        system_h: PauliSum,
        env_h: PauliSum,
        interaction_h: PauliSum,
        env_state: EnvState,
        k: usize,
        dt: f64,
    ) -> Result<Self> {
        let c = Arc::new(Collision::new(system_h.clone(), env_h, interaction_h, env_state)?);
        CollisionSpec::new(system_h, vec![c; k], dt)
    }

    pub fn k(&self) -> usize {
        self.collisions.len()
    }

    /// max_j beta_j.
    pub fn beta(&self) -> f64 {
        self.collisions.iter().map(|c| c.beta()).fold(0.0, f64::max)
    }

    /// Distinct env widths in order of first use; Markov programs allocate one slot per width.
    pub fn env_widths(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for c in &self.collisions {
            if !out.contains(&c.env_width()) {
                out.push(c.env_width());
            }
        }
        out
    }
}

impl EnvPreparer for CollisionSpec {
    fn prepare(&self, state: usize) -> Result<DensityMatrix> {
        self.collisions
            .get(state)
            .ok_or_else(|| Error::MalformedProgram(format!("no collision {state} to prepare")))?
            .env_state
            .density()
    }
}

/// Markovian spec plus a partial swap with probability p between consecutive env registers.
#[derive(Clone, Debug)]
pub struct NonMarkovSpec {
    pub base: CollisionSpec,
    pub p: f64,
}

impl NonMarkovSpec {
    pub fn new(base: CollisionSpec, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("swap probability {p} outside [0, 1]")));
        }
        if base.env_widths().len() > 1 {
            return Err(Error::invalid("non-Markovian collisions need equal env widths"));
        }
        Ok(NonMarkovSpec { base, p })
    }

    pub fn env_width(&self) -> usize {
        self.base.env_widths().first().copied().unwrap_or(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum JumpOp {
    /// sigma^- on a 0-based site.
    Lower(usize),
    /// Hermitian Pauli jump with a real phase.
    Pauli(PauliString),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub op: JumpOp,
    pub gamma: f64,
}

/// Lindblad dynamics with one single-qubit thermal sub-environment per jump.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladModel {
    pub n: usize,
    pub system_h: PauliSum,
    pub jumps: Vec<Jump>,
    pub env_omega: f64,
    pub env_h_strength: f64,
}

impl LindbladModel {
    pub fn new(n: usize, system_h: PauliSum, jumps: Vec<Jump>, env_omega: f64, env_h_strength: f64) -> Result<Self> {
        if system_h.n() != n {
            return Err(Error::dim(format!("system Hamiltonian on {} qubits, model has {n}", system_h.n())));
        }
        if jumps.is_empty() {
            return Err(Error::invalid("Lindblad model needs at least one jump"));
        }
        for j in &jumps {
            if !(j.gamma >= 0.0 && j.gamma.is_finite()) {
                return Err(Error::invalid(format!("jump rate {} must be nonnegative", j.gamma)));
            }
            match &j.op {
                JumpOp::Lower(s) if *s >= n => {
                    return Err(Error::invalid(format!("jump site {s} outside 0..{n}")));
                }
                JumpOp::Pauli(p) if p.n() != n || !p.phase().is_real() => {
                    return Err(Error::invalid(format!("Pauli jump {p} must be Hermitian on {n} qubits")));
                }
                _ => {}
            }
        }
        thermal_populations(env_omega)?;
        if !env_h_strength.is_finite() {
            return Err(Error::invalid("env Hamiltonian strength must be finite"));
        }
        Ok(LindbladModel { n, system_h, jumps, env_omega, env_h_strength })
    }

    /// Number of sub-environments.
    pub fn m(&self) -> usize {
        self.jumps.len()
    }

    /// Unscaled interaction H_{I_l} on system + one env qubit.
    pub fn interaction(&self, l: usize) -> Result<PauliSum> {
        let jump = &self.jumps[l];
        match &jump.op {
            JumpOp::Lower(site) => amp_damp_interaction(*site, jump.gamma, self.n),
            JumpOp::Pauli(p) => pauli_jump_interaction(p, jump.gamma),
        }
    }

    /// H_E = beta_E Z on the env qubit.
    pub fn env_h(&self) -> Result<PauliSum> {
        PauliSum::from_terms(1, vec![(self.env_h_strength, PauliString::single(1, 0, Axis::Z))])
    }

    pub fn jump_matrix(&self, l: usize) -> Result<Mat> {
        let jump = &self.jumps[l];
        match &jump.op {
            JumpOp::Lower(site) => amp_damp_jump(*site, jump.gamma, self.n),
            JumpOp::Pauli(p) => Ok(p.to_dense()? * C64::new(jump.gamma.sqrt(), 0.0)),
        }
    }

    /// Generator reached by the collision limit: each jump A enters as p0 D[A] + p1 D[A^dagger]
    /// with the env thermal populations (p0, p1).
    pub fn liouvillian(&self) -> Result<Liouvillian> {
        check_dense(self.n)?;
        let (p0, p1) = thermal_populations(self.env_omega)?;
        let mut ops = Vec::new();
        for l in 0..self.m() {
            let a = self.jump_matrix(l)?;
            if p1 > 0.0 {
                ops.push(a.adjoint() * C64::new(p1.sqrt(), 0.0));
            }
            ops.push(a * C64::new(p0.sqrt(), 0.0));
        }
        Liouvillian::new(self.system_h.to_dense()?, ops)
    }
}

/// K = m nu collisions with dt = t/nu; collision j uses H_S/m + H_E + lambda H_{I_l}, l = j mod m,
/// lambda = sqrt(nu/t) so that lambda^2 dt = 1.
pub fn lindblad_collision_spec(model: &LindbladModel, t: f64, nu: u64) -> Result<CollisionSpec> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("evolution time {t} must be positive")));
    }
    if nu == 0 {
        return Err(Error::invalid("nu must be at least 1"));
    }
    let m = model.m();
    let dt = t / nu as f64;
    let lambda = (nu as f64 / t).sqrt();
    let sys = model.system_h.scaled(1.0 / m as f64)?;
    let env_h = model.env_h()?;
    let distinct = (0..m)
        .map(|l| {
            let hi = model.interaction(l)?.scaled(lambda)?;
            Ok(Arc::new(Collision::new(sys.clone(), env_h.clone(), hi, EnvState::Thermal { omega: model.env_omega })?))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = m * nu as usize;
    let collisions = (0..k).map(|j| distinct[j % m].clone()).collect();
    CollisionSpec::new(model.system_h.clone(), collisions, dt)
}

/// Total approximation budget and observable norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    pub eps: f64,
    pub norm_o: f64,
}

/// Per-collision precision: eps/(3K||O||) for direct backends, eps/(6K||O||) for SA-LCU.
pub fn required_precision(k: usize, norm_o: f64, eps: f64, mode: PrecisionMode) -> Result<f64> {
    if k == 0 || !(norm_o > 0.0) || !(eps > 0.0) {
        return Err(Error::invalid("required precision needs K >= 1, ||O|| > 0 and eps > 0"));
    }
    let c = match mode {
        PrecisionMode::Generic => 3.0,
        PrecisionMode::Salcu => 6.0,
    };
    Ok(eps / (c * k as f64 * norm_o))
}

/// Upper cap on the per-collision precision handed to the backends.
pub const MAX_EPS_PRIME: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum CollisionPlan {
    Identity,
    Trotter { order: TrotterOrder, steps: u64 },
    Qdrift { n: u64 },
    Salcu { params: LcuParams },
}

/// Backend parameters resolved once per distinct collision; emits fresh circuits per run.
#[derive(Clone, Debug)]
pub struct CompiledSpec {
    spec: CollisionSpec,
    backend: Backend,
    eps_prime: f64,
    plans: Vec<Arc<CollisionPlan>>,
}

impl CompiledSpec {
    pub fn new(spec: &CollisionSpec, backend: Backend, budget: Budget, options: &BackendOptions) -> Result<Self> {
        if backend == Backend::Exact {
            return Err(Error::invalid("the exact backend has no circuit; use the exact maps"));
        }
        let k = spec.k().max(1);
        // Degenerate budgets are capped: any precision below the requested one is still valid.
        let eps_prime = required_precision(k, budget.norm_o, budget.eps, backend.precision_mode())?.min(MAX_EPS_PRIME);
        let mut cache: HashMap<*const Collision, Arc<CollisionPlan>> = HashMap::new();
        let mut plans = Vec::with_capacity(spec.k());
        for c in &spec.collisions {
            let key = Arc::as_ptr(c);
            let plan = match cache.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let p = Arc::new(plan_for(c, spec.dt, k, backend, eps_prime, options)?);
                    cache.insert(key, p.clone());
                    p
                }
            };
            plans.push(plan);
        }
        Ok(CompiledSpec { spec: spec.clone(), backend, eps_prime, plans })
    }

    pub fn spec(&self) -> &CollisionSpec {
        &self.spec
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn eps_prime(&self) -> f64 {
        self.eps_prime
    }

    pub fn plan(&self, j: usize) -> &CollisionPlan {
        &self.plans[j]
    }

    /// LCU parameters per collision (SA-LCU only; identity collisions contribute alpha = 1).
    pub fn lcu_params(&self) -> Vec<LcuParams> {
        self.plans
            .iter()
            .filter_map(|p| match p.as_ref() {
                CollisionPlan::Salcu { params } => Some(params.clone()),
                _ => None,
            })
            .collect()
    }

    fn emit_collision<R: Rng + ?Sized>(&self, j: usize, slot: usize, rng: &mut R, sink: &mut dyn OpSink) {
        let c = &self.spec.collisions[j];
        let Some(h) = c.h_total() else { return };
        let mut targets: Vec<QubitRef> = (0..c.n()).map(QubitRef::System).collect();
        targets.extend((0..c.env_width()).map(|index| QubitRef::Env { slot, index }));
        let tau = h.beta() * self.spec.dt;
        match self.plans[j].as_ref() {
            CollisionPlan::Identity => {}
            CollisionPlan::Trotter { order, steps } => emit_trotter(h, *order, tau, *steps, &targets, sink),
            CollisionPlan::Qdrift { n } => emit_qdrift(h, tau, *n, &targets, rng, sink),
            CollisionPlan::Salcu { params } => {
                let x = lcu_sample(h, params, rng);
                let y = lcu_sample(h, params, rng);
                x.emit(
                    h,
                    &targets,
                    &mut ControlledSink { inner: sink, control: QubitRef::Ancilla, polarity: Polarity::OnOne },
                );
                y.emit(
                    h,
                    &targets,
                    &mut ControlledSink { inner: sink, control: QubitRef::Ancilla, polarity: Polarity::OnZero },
                );
            }
        }
    }

    /// Registers of a Markov program: ancilla for SA-LCU, one env slot per distinct width.
    pub fn markov_skeleton(&self) -> CircuitProgram {
        CircuitProgram::new(self.spec.n, self.backend.uses_ancilla(), self.spec.env_widths())
    }

    pub fn emit_markov<R: Rng + ?Sized>(&self, rng: &mut R, sink: &mut dyn OpSink) {
        let widths = self.spec.env_widths();
        for (j, c) in self.spec.collisions.iter().enumerate() {
            let slot = widths.iter().position(|&w| w == c.env_width()).expect("width registered");
            sink.push(GateOp::PrepareEnv { slot, state: j });
            self.emit_collision(j, slot, rng, sink);
            sink.push(GateOp::TraceEnv { slot });
        }
    }

    pub fn markov_program<R: Rng + ?Sized>(&self, rng: &mut R) -> CircuitProgram {
        let mut prog = self.markov_skeleton();
        self.emit_markov(rng, &mut prog);
        prog
    }

    /// Resource count of one sampled Markov run without materializing the program.
    pub fn count_markov<R: Rng + ?Sized>(&self, rng: &mut R, model: CostModel) -> ResourceReport {
        let mut counter = ResourceCounter::new(model);
        self.emit_markov(rng, &mut counter);
        counter.report
    }

    pub fn count_nonmarkov<R: Rng + ?Sized>(&self, p: f64, rng: &mut R, model: CostModel) -> ResourceReport {
        let mut counter = ResourceCounter::new(model);
        self.emit_nonmarkov(p, rng, &mut counter);
        counter.report
    }

    pub fn nonmarkov_skeleton(&self) -> CircuitProgram {
        let w = self.spec.env_widths().first().copied().unwrap_or(1);
        CircuitProgram::new(self.spec.n, self.backend.uses_ancilla(), vec![w, w])
    }

    /// Slot 0 is active for odd (1-based) collisions and slot 1 for even ones. After every
    /// collision but the last, the other slot receives the next env state, a swap is applied
    /// with probability p and the active slot is traced out.
    pub fn emit_nonmarkov<R: Rng + ?Sized>(&self, p: f64, rng: &mut R, sink: &mut dyn OpSink) {
        let k = self.spec.k();
        if k == 0 {
            return;
        }
        let w = self.spec.env_widths()[0];
        sink.push(GateOp::PrepareEnv { slot: 0, state: 0 });
        for j in 0..k {
            let active = j % 2;
            let other = 1 - active;
            self.emit_collision(j, active, rng, sink);
            if j + 1 < k {
                sink.push(GateOp::PrepareEnv { slot: other, state: j + 1 });
                if rng.gen_bool(p) {
                    for index in 0..w {
                        sink.push(GateOp::Swap {
                            a: QubitRef::Env { slot: active, index },
                            b: QubitRef::Env { slot: other, index },
                        });
                    }
                }
            }
            sink.push(GateOp::TraceEnv { slot: active });
        }
    }

    pub fn nonmarkov_program<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> CircuitProgram {
        let mut prog = self.nonmarkov_skeleton();
        self.emit_nonmarkov(p, rng, &mut prog);
        prog
    }
}

fn plan_for(
    c: &Collision,
    dt: f64,
    k: usize,
    backend: Backend,
    eps_prime: f64,
    options: &BackendOptions,
) -> Result<CollisionPlan> {
    let Some(h) = c.h_total() else { return Ok(CollisionPlan::Identity) };
    if dt == 0.0 {
        return Ok(CollisionPlan::Identity);
    }
    let beta = h.beta();
    let trotter = |order| -> Result<CollisionPlan> {
        let steps = match options.steps {
            Some(s) if s >= 1 => s,
            Some(_) => return Err(Error::invalid("trotter steps must be at least 1")),
            None => choose_trotter_steps(h, beta, dt, order, eps_prime, options.strategy)?,
        };
        Ok(CollisionPlan::Trotter { order, steps })
    };
    match backend {
        Backend::Trotter1 => trotter(TrotterOrder::First),
        Backend::Trotter2k(kk) => trotter(TrotterOrder::Suzuki(kk)),
        Backend::Qdrift => {
            let n = match options.qdrift_n {
                Some(n) if n >= 1 => n,
                Some(_) => return Err(Error::invalid("qDRIFT length must be at least 1")),
                None => choose_qdrift_length(beta, dt, eps_prime)?,
            };
            Ok(CollisionPlan::Qdrift { n })
        }
        Backend::Salcu => {
            let tau = beta * dt;
            let params = match (options.r, options.q) {
                (Some(r), Some(q)) => LcuParams::new(tau, r, q)?,
                (Some(r), None) => LcuParams::new(tau, r, choose_lcu_q(tau, r, eps_prime)?)?,
                (None, q) => {
                    let p = choose_lcu_params(tau, k, eps_prime, options.c_r)?;
                    match q {
                        Some(q) => LcuParams::new(tau, p.r, q)?,
                        None => p,
                    }
                }
            };
            Ok(CollisionPlan::Salcu { params })
        }
        Backend::Exact => Err(Error::invalid("the exact backend has no circuit")),
    }
}

pub fn markov_program<R: Rng + ?Sized>(
    spec: &CollisionSpec,
    backend: Backend,
    budget: Budget,
    options: &BackendOptions,
    rng: &mut R,
) -> Result<CircuitProgram> {
    Ok(CompiledSpec::new(spec, backend, budget, options)?.markov_program(rng))
}

pub fn nonmarkov_program<R: Rng + ?Sized>(
    spec: &NonMarkovSpec,
    backend: Backend,
    budget: Budget,
    options: &BackendOptions,
    rng: &mut R,
) -> Result<CircuitProgram> {
    Ok(CompiledSpec::new(&spec.base, backend, budget, options)?.nonmarkov_program(spec.p, rng))
}

/// Dense collision unitaries, computed once per distinct collision.
fn collision_unitaries(spec: &CollisionSpec) -> Result<Vec<Arc<Mat>>> {
    let mut cache: HashMap<*const Collision, Arc<Mat>> = HashMap::new();
    spec.collisions
        .iter()
        .map(|c| {
            let key = Arc::as_ptr(c);
            if let Some(u) = cache.get(&key) {
                return Ok(u.clone());
            }
            let u = Arc::new(c.unitary(spec.dt)?);
            cache.insert(key, u.clone());
            Ok(u)
        })
        .collect()
}

/// Composition over j of Tr_{E_j}[U_j (rho kron rho_{E_j}) U_j^dagger].
pub fn exact_k_collision(spec: &CollisionSpec, rho_s: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_s.n() != spec.n {
        return Err(Error::dim(format!("state has {} qubits, system has {}", rho_s.n(), spec.n)));
    }
    let us = collision_unitaries(spec)?;
    let mut rho = rho_s.clone();
    for (c, u) in spec.collisions.iter().zip(us) {
        let mut joint = rho.tensor_append(&c.env_state.density()?)?;
        joint.apply_unitary(&u)?;
        let traced: Vec<usize> = (spec.n..joint.n()).collect();
        rho = joint.partial_trace(&traced)?;
    }
    Ok(rho)
}

/// Exact non-Markovian map on the layout [system, active env, next env].
pub fn exact_nonmarkov(spec: &NonMarkovSpec, rho_s: &DensityMatrix) -> Result<DensityMatrix> {
    let base = &spec.base;
    if rho_s.n() != base.n {
        return Err(Error::dim(format!("state has {} qubits, system has {}", rho_s.n(), base.n)));
    }
    let k = base.k();
    if k == 0 {
        return Ok(rho_s.clone());
    }
    let n = base.n;
    let w = spec.env_width();
    check_dense(n + 2 * w)?;
    let us = collision_unitaries(base)?;
    let mut rho = rho_s.tensor_append(&base.collisions[0].env_state.density()?)?;
    for (j, u) in us.iter().enumerate().take(k) {
        rho.apply_unitary(u)?;
        if j + 1 < k {
            rho = rho.tensor_append(&base.collisions[j + 1].env_state.density()?)?;
            if spec.p > 0.0 {
                let mut swapped = rho.clone();
                for i in 0..w {
                    swapped.swap(n + i, n + w + i)?;
                }
                let mixed = rho.matrix() * C64::new(1.0 - spec.p, 0.0) + swapped.matrix() * C64::new(spec.p, 0.0);
                rho = DensityMatrix::from_matrix_unchecked(mixed);
            }
        }
        let active: Vec<usize> = (n..n + w).collect();
        rho = rho.partial_trace(&active)?;
    }
    Ok(rho)
}

/// Which slot collides, which receives the next env state, per 1-based collision index.
pub fn register_role_table(k: usize) -> String {
    let mut out = String::from("collision,active_slot,prepared_slot\n");
    for j in 1..=k {
        let active = (j + 1) % 2;
        let prepared = if j < k { (1 - active).to_string() } else { "-".into() };
        let _ = writeln!(out, "{j},e{active},{}", if prepared == "-" { prepared } else { format!("e{prepared}") });
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct NuStep {
    pub nu: u64,
    pub k: usize,
    pub value: f64,
    /// |value(nu) - value(nu/2)|, absent for the first point.
    pub change: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NuSearch {
    pub nu: u64,
    pub trace: Vec<NuStep>,
}

impl NuSearch {
    pub const CSV_HEADER: &'static str = "nu,K,value,change";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for s in &self.trace {
            let change = s.change.map(|c| format!("{c:.16e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{:.16e},{}", s.nu, s.k, s.value, change);
        }
        out
    }
}

/// Default first nu of the doubling search.
pub const NU_START: u64 = 4;

/// Double nu until the exact collision estimate of <O> changes by less than eps/2.
pub fn suggest_nu(
    model: &LindbladModel,
    t: f64,
    rho0: &DensityMatrix,
    obs: &Observable,
    eps: f64,
    start: u64,
    max_nu: u64,
) -> Result<NuSearch> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let value = |nu: u64| -> Result<f64> {
        let spec = lindblad_collision_spec(model, t, nu)?;
        exact_k_collision(&spec, rho0)?.expectation(obs)
    };
    let mut nu = start.max(1);
    let mut prev = value(nu)?;
    let mut trace = vec![NuStep { nu, k: model.m() * nu as usize, value: prev, change: None }];
    while nu < max_nu {
        nu *= 2;
        let v = value(nu)?;
        let change = (v - prev).abs();
        trace.push(NuStep { nu, k: model.m() * nu as usize, value: v, change: Some(change) });
        if change < eps / 2.0 {
            return Ok(NuSearch { nu, trace });
        }
        prev = v;
    }
    Err(Error::Numerical(format!("nu search did not settle below eps/2 = {} by nu = {nu}", eps / 2.0)))
}

/// Diagnostic Gamma = ||L||^2 / m + max(beta_S, beta_I, beta_E)^4 with a caller-supplied bound
/// on the induced 1->1 norm of the Lindbladian.
pub fn gamma_diagnostic(model: &LindbladModel, l_norm_bound: f64) -> Result<f64> {
    let mut beta_max = model.system_h.total_weight().max(model.env_h_strength.abs());
    for l in 0..model.m() {
        beta_max = beta_max.max(model.interaction(l)?.total_weight());
    }
    Ok(l_norm_bound * l_norm_bound / model.m() as f64 + beta_max.powi(4))
}
