//! Backend-agnostic gate programs, their execution on the dense backend and their cost.

use std::fmt;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::pauli::PauliString;
use crate::state::{DensityMatrix, InnerGate, Polarity};

/// Logical qubit address. Env qubits are resolved against the live slot layout at run time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QubitRef {
    Ancilla,
    System(usize),
    Env { slot: usize, index: usize },
}

impl fmt::Display for QubitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QubitRef::Ancilla => write!(f, "a"),
            QubitRef::System(i) => write!(f, "s{i}"),
            QubitRef::Env { slot, index } => write!(f, "e{slot}.{index}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    PauliGate,
    PauliRotation,
    ControlledPauliGate,
    ControlledPauliRotation,
    Swap,
    PrepareEnv,
    TraceEnv,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateOp {
    Pauli {
        pauli: PauliString,
        targets: Vec<QubitRef>,
    },
    Rotation {
        axis: PauliString,
        angle: f64,
        targets: Vec<QubitRef>,
    },
    ControlledPauli {
        pauli: PauliString,
        targets: Vec<QubitRef>,
        control: QubitRef,
        polarity: Polarity,
    },
    ControlledRotation {
        axis: PauliString,
        angle: f64,
        targets: Vec<QubitRef>,
        control: QubitRef,
        polarity: Polarity,
    },
    Swap {
        a: QubitRef,
        b: QubitRef,
    },
    /// Append a fresh register in slot `slot`, initialized by the preparer's state `state`.
    PrepareEnv {
        slot: usize,
        state: usize,
    },
    TraceEnv {
        slot: usize,
    },
}

impl GateOp {
    pub fn kind(&self) -> GateKind {
        match self {
            GateOp::Pauli { .. } => GateKind::PauliGate,
            GateOp::Rotation { .. } => GateKind::PauliRotation,
            GateOp::ControlledPauli { .. } => GateKind::ControlledPauliGate,
            GateOp::ControlledRotation { .. } => GateKind::ControlledPauliRotation,
            GateOp::Swap { .. } => GateKind::Swap,
            GateOp::PrepareEnv { .. } => GateKind::PrepareEnv,
            GateOp::TraceEnv { .. } => GateKind::TraceEnv,
        }
    }

    /// Wrap an uncontrolled Pauli gate or rotation with a control. Other ops are rejected.
    pub fn controlled(self, control: QubitRef, polarity: Polarity) -> Result<GateOp> {
        match self {
            GateOp::Pauli { pauli, targets } => Ok(GateOp::ControlledPauli { pauli, targets, control, polarity }),
            GateOp::Rotation { axis, angle, targets } => {
                Ok(GateOp::ControlledRotation { axis, angle, targets, control, polarity })
            }
            other => Err(Error::MalformedProgram(format!("cannot control {:?}", other.kind()))),
        }
    }

    pub fn control(&self) -> Option<(QubitRef, Polarity)> {
        match self {
            GateOp::ControlledPauli { control, polarity, .. }
            | GateOp::ControlledRotation { control, polarity, .. } => Some((*control, *polarity)),
            _ => None,
        }
    }

    fn targets(&self) -> Vec<QubitRef> {
        match self {
            GateOp::Pauli { targets, .. }
            | GateOp::Rotation { targets, .. }
            | GateOp::ControlledPauli { targets, .. }
            | GateOp::ControlledRotation { targets, .. } => targets.clone(),
            GateOp::Swap { a, b } => vec![*a, *b],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |t: &[QubitRef]| t.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(",");
        let pol = |p: &Polarity| if *p == Polarity::OnOne { "on1" } else { "on0" };
        match self {
            GateOp::Pauli { pauli, targets } => write!(f, "pauli {pauli} [{}]", list(targets)),
            GateOp::Rotation { axis, angle, targets } => {
                write!(f, "rot {axis} {angle:e} [{}]", list(targets))
            }
            GateOp::ControlledPauli { pauli, targets, control, polarity } => {
                write!(f, "cpauli {pauli} [{}] ctrl={control} {}", list(targets), pol(polarity))
            }
            GateOp::ControlledRotation { axis, angle, targets, control, polarity } => {
                write!(f, "crot {axis} {angle:e} [{}] ctrl={control} {}", list(targets), pol(polarity))
            }
            GateOp::Swap { a, b } => write!(f, "swap {a} {b}"),
            GateOp::PrepareEnv { slot, state } => write!(f, "prep e{slot} state={state}"),
            GateOp::TraceEnv { slot } => write!(f, "trace e{slot}"),
        }
    }
}

/// Source of environment states for `PrepareEnv`.
pub trait EnvPreparer {
    fn prepare(&self, state: usize) -> Result<DensityMatrix>;
}

impl<F> EnvPreparer for F
where
    F: Fn(usize) -> Result<DensityMatrix>,
{
    fn prepare(&self, state: usize) -> Result<DensityMatrix> {
        self(state)
    }
}

/// Destination for emitted ops: a stored program or a streaming resource counter.
pub trait OpSink {
    fn push(&mut self, op: GateOp);

    /// Emit `ops` back to back `times` times.
    fn push_repeated(&mut self, ops: &[GateOp], times: u64) {
        for _ in 0..times {
            for op in ops {
                self.push(op.clone());
            }
        }
    }

    /// True when the sink's result does not depend on op order, so emitters may batch equal ops.
    fn order_insensitive(&self) -> bool {
        false
    }
}

/// Forwards every op to `inner` wrapped with a control qubit.
pub struct ControlledSink<'a> {
    pub inner: &'a mut dyn OpSink,
    pub control: QubitRef,
    pub polarity: Polarity,
}

impl ControlledSink<'_> {
    fn wrap(&self, op: GateOp) -> GateOp {
        op.controlled(self.control, self.polarity).expect("only gates and rotations are controlled")
    }
}

impl OpSink for ControlledSink<'_> {
    fn push(&mut self, op: GateOp) {
        let op = self.wrap(op);
        self.inner.push(op);
    }

    fn push_repeated(&mut self, ops: &[GateOp], times: u64) {
        let wrapped: Vec<GateOp> = ops.iter().cloned().map(|op| self.wrap(op)).collect();
        self.inner.push_repeated(&wrapped, times);
    }

    fn order_insensitive(&self) -> bool {
        self.inner.order_insensitive()
    }
}

/// CNOT cost model for the analytic resource count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub swap_cnots: u64,
    pub prepare_env_cnots: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { swap_cnots: 3, prepare_env_cnots: 2 }
    }
}

impl CostModel {
    /// CNOT count of one op. A weight-w rotation is a staircase with 2(w-1) CNOTs; control
    /// adds 2 for the controlled Rz. Controlled Pauli words cost one CNOT-equivalent per
    /// non-identity axis, so a controlled phase is free.
    pub fn cnots(&self, op: &GateOp) -> u64 {
        match op {
            GateOp::Pauli { .. } | GateOp::TraceEnv { .. } => 0,
            GateOp::Rotation { axis, .. } => 2 * (axis.weight() as u64).saturating_sub(1),
            GateOp::ControlledPauli { pauli, .. } => pauli.weight() as u64,
            GateOp::ControlledRotation { axis, .. } => 2 * axis.weight() as u64,
            GateOp::Swap { .. } => self.swap_cnots,
            GateOp::PrepareEnv { .. } => self.prepare_env_cnots,
        }
    }

    /// Sequential layer count: CNOTs when there are any, else one single-qubit layer.
    /// Tracing out a register is free.
    pub fn depth(&self, op: &GateOp) -> u64 {
        match op {
            GateOp::TraceEnv { .. } => 0,
            _ => self.cnots(op).max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResourceReport {
    pub cnot_count: u64,
    pub rotation_count: u64,
    pub pauli_gate_count: u64,
    pub depth_proxy: u64,
    pub env_preps: u64,
}

impl ResourceReport {
    pub const CSV_HEADER: &'static str = "cnot_count,rotation_count,pauli_gate_count,depth_proxy,env_preps";

    pub fn of_op(op: &GateOp, model: &CostModel) -> ResourceReport {
        let kind = op.kind();
        ResourceReport {
            cnot_count: model.cnots(op),
            rotation_count: matches!(kind, GateKind::PauliRotation | GateKind::ControlledPauliRotation) as u64,
            pauli_gate_count: matches!(kind, GateKind::PauliGate | GateKind::ControlledPauliGate) as u64,
            depth_proxy: model.depth(op),
            env_preps: (kind == GateKind::PrepareEnv) as u64,
        }
    }

    pub fn times(self, k: u64) -> ResourceReport {
        ResourceReport {
            cnot_count: self.cnot_count * k,
            rotation_count: self.rotation_count * k,
            pauli_gate_count: self.pauli_gate_count * k,
            depth_proxy: self.depth_proxy * k,
            env_preps: self.env_preps * k,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.cnot_count, self.rotation_count, self.pauli_gate_count, self.depth_proxy, self.env_preps
        )
    }
}

impl Add for ResourceReport {
    type Output = ResourceReport;
    fn add(self, o: ResourceReport) -> ResourceReport {
        ResourceReport {
            cnot_count: self.cnot_count + o.cnot_count,
            rotation_count: self.rotation_count + o.rotation_count,
            pauli_gate_count: self.pauli_gate_count + o.pauli_gate_count,
            depth_proxy: self.depth_proxy + o.depth_proxy,
            env_preps: self.env_preps + o.env_preps,
        }
    }
}

impl AddAssign for ResourceReport {
    fn add_assign(&mut self, o: ResourceReport) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ResourceReport {
    fn sum<I: Iterator<Item = ResourceReport>>(iter: I) -> ResourceReport {
        iter.fold(ResourceReport::default(), |a, b| a + b)
    }
}

/// Counts ops as they are emitted, without storing them.
#[derive(Clone, Debug, Default)]
pub struct ResourceCounter {
    pub model: CostModel,
    pub report: ResourceReport,
}

impl ResourceCounter {
    pub fn new(model: CostModel) -> Self {
        ResourceCounter { model, report: ResourceReport::default() }
    }
}

impl OpSink for ResourceCounter {
    fn push(&mut self, op: GateOp) {
        self.report += ResourceReport::of_op(&op, &self.model);
    }

    fn push_repeated(&mut self, ops: &[GateOp], times: u64) {
        let once: ResourceReport = ops.iter().map(|op| ResourceReport::of_op(op, &self.model)).sum();
        self.report += once.times(times);
    }

    fn order_insensitive(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitProgram {
    pub system_qubits: usize,
    pub ancilla: bool,
    pub env_widths: Vec<usize>,
    pub ops: Vec<GateOp>,
}

impl OpSink for CircuitProgram {
    fn push(&mut self, op: GateOp) {
        self.ops.push(op);
    }
}

/// Live register layout during execution: ancilla, system, then prepared slots in order.
struct Layout<'a> {
    program: &'a CircuitProgram,
    live: Vec<usize>,
}

impl<'a> Layout<'a> {
    fn base(&self) -> usize {
        self.program.ancilla as usize + self.program.system_qubits
    }

    fn width(&self) -> usize {
        self.base() + self.live.iter().map(|&s| self.program.env_widths[s]).sum::<usize>()
    }

    fn slot_offset(&self, slot: usize) -> Option<usize> {
        let mut off = self.base();
        for &s in &self.live {
            if s == slot {
                return Some(off);
            }
            off += self.program.env_widths[s];
        }
        None
    }

    fn resolve(&self, q: QubitRef) -> Result<usize> {
        let p = self.program;
        match q {
            QubitRef::Ancilla if p.ancilla => Ok(0),
            QubitRef::Ancilla => Err(Error::MalformedProgram("ancilla used but not allocated".into())),
            QubitRef::System(i) if i < p.system_qubits => Ok(p.ancilla as usize + i),
            QubitRef::System(i) => Err(Error::MalformedProgram(format!("system qubit {i} out of range"))),
            QubitRef::Env { slot, index } => {
                let width = *p
                    .env_widths
                    .get(slot)
                    .ok_or_else(|| Error::MalformedProgram(format!("unknown env slot {slot}")))?;
                if index >= width {
                    return Err(Error::MalformedProgram(format!("env qubit {slot}.{index} out of range")));
                }
                let off = self
                    .slot_offset(slot)
                    .ok_or_else(|| Error::MalformedProgram(format!("env slot {slot} not prepared")))?;
                Ok(off + index)
            }
        }
    }

    fn resolve_all(&self, qs: &[QubitRef]) -> Result<Vec<usize>> {
        let out = qs.iter().map(|q| self.resolve(*q)).collect::<Result<Vec<_>>>()?;
        for (i, t) in out.iter().enumerate() {
            if out[..i].contains(t) {
                return Err(Error::MalformedProgram(format!("duplicate target {}", qs[i])));
            }
        }
        Ok(out)
    }

    /// Update the live set for Prepare/Trace; returns the traced qubit indices for TraceEnv.
    fn step(&mut self, op: &GateOp) -> Result<Option<Vec<usize>>> {
        match op {
            GateOp::PrepareEnv { slot, .. } => {
                if *slot >= self.program.env_widths.len() {
                    return Err(Error::MalformedProgram(format!("unknown env slot {slot}")));
                }
                if self.live.contains(slot) {
                    return Err(Error::MalformedProgram(format!("env slot {slot} prepared twice")));
                }
                self.live.push(*slot);
                Ok(None)
            }
            GateOp::TraceEnv { slot } => {
                let off = self
                    .slot_offset(*slot)
                    .ok_or_else(|| Error::MalformedProgram(format!("trace of unprepared slot {slot}")))?;
                let w = self.program.env_widths[*slot];
                self.live.retain(|s| s != slot);
                Ok(Some((off..off + w).collect()))
            }
            _ => Ok(None),
        }
    }
}

impl CircuitProgram {
    pub fn new(system_qubits: usize, ancilla: bool, env_widths: Vec<usize>) -> Self {
        CircuitProgram { system_qubits, ancilla, env_widths, ops: Vec::new() }
    }

    /// Number of qubits in the state passed to `execute`.
    pub fn input_qubits(&self) -> usize {
        self.ancilla as usize + self.system_qubits
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Append another program on the same registers.
    pub fn extend_from(&mut self, other: &CircuitProgram) -> Result<()> {
        if other.system_qubits != self.system_qubits
            || other.ancilla != self.ancilla
            || other.env_widths != self.env_widths
        {
            return Err(Error::MalformedProgram("concatenating programs with different registers".into()));
        }
        self.ops.extend(other.ops.iter().cloned());
        Ok(())
    }

    /// Structural check: targets resolvable and distinct, controls disjoint from targets,
    /// every TraceEnv matched by a PrepareEnv, every slot released at the end.
    pub fn validate(&self) -> Result<()> {
        let mut layout = Layout { program: self, live: Vec::new() };
        for op in &self.ops {
            let targets = layout.resolve_all(&op.targets())?;
            if let Some((c, _)) = op.control() {
                let ci = layout.resolve(c)?;
                if targets.contains(&ci) {
                    return Err(Error::MalformedProgram(format!("control {c} is also a target")));
                }
            }
            match op {
                GateOp::Pauli { pauli: p, targets: t }
                | GateOp::ControlledPauli { pauli: p, targets: t, .. }
                | GateOp::Rotation { axis: p, targets: t, .. }
                | GateOp::ControlledRotation { axis: p, targets: t, .. }
                    if p.n() != t.len() =>
                {
                    return Err(Error::MalformedProgram(format!("{op}: word/targets length mismatch")));
                }
                _ => {}
            }
            layout.step(op)?;
        }
        if !layout.live.is_empty() {
            return Err(Error::MalformedProgram(format!("env slots {:?} never traced", layout.live)));
        }
        Ok(())
    }

    /// Run the program on `rho` (ancilla first if present, then the system).
    pub fn execute(&self, rho: &DensityMatrix, env: &dyn EnvPreparer) -> Result<DensityMatrix> {
        self.validate()?;
        if rho.n() != self.input_qubits() {
            return Err(Error::dim(format!(
                "program expects {} input qubits, state has {}",
                self.input_qubits(),
                rho.n()
            )));
        }
        let mut state = rho.clone();
        let mut layout = Layout { program: self, live: Vec::new() };
        for op in &self.ops {
            match op {
                GateOp::Pauli { pauli, targets } => {
                    state.apply_pauli(pauli, &layout.resolve_all(targets)?)?;
                }
                GateOp::Rotation { axis, angle, targets } => {
                    state.apply_pauli_rotation(axis, *angle, &layout.resolve_all(targets)?)?;
                }
                GateOp::ControlledPauli { pauli, targets, control, polarity } => {
                    let inner = InnerGate::Pauli { pauli: pauli.clone(), targets: layout.resolve_all(targets)? };
                    state.apply_controlled(&inner, layout.resolve(*control)?, *polarity)?;
                }
                GateOp::ControlledRotation { axis, angle, targets, control, polarity } => {
                    let inner = InnerGate::Rotation {
                        axis: axis.clone(),
                        angle: *angle,
                        targets: layout.resolve_all(targets)?,
                    };
                    state.apply_controlled(&inner, layout.resolve(*control)?, *polarity)?;
                }
                GateOp::Swap { a, b } => {
                    state.swap(layout.resolve(*a)?, layout.resolve(*b)?)?;
                }
                GateOp::PrepareEnv { slot, state: id } => {
                    let env_state = env.prepare(*id)?;
                    if env_state.n() != self.env_widths[*slot] {
                        return Err(Error::dim(format!(
                            "env state {id} has {} qubits, slot {slot} holds {}",
                            env_state.n(),
                            self.env_widths[*slot]
                        )));
                    }
                    state = state.tensor_append(&env_state)?;
                    layout.step(op)?;
                }
                GateOp::TraceEnv { .. } => {
                    if let Some(traced) = layout.step(op)? {
                        state = state.partial_trace(&traced)?;
                    }
                }
            }
            debug_assert_eq!(state.n(), layout.width());
        }
        Ok(state)
    }

    /// Maximal runs of consecutive controlled ops sharing a polarity.
    pub fn controlled_blocks(&self) -> Vec<(Polarity, usize)> {
        let mut blocks: Vec<(Polarity, usize)> = Vec::new();
        let mut current: Option<Polarity> = None;
        for op in &self.ops {
            match op.control() {
                Some((_, pol)) if current == Some(pol) => blocks.last_mut().unwrap().1 += 1,
                Some((_, pol)) => {
                    blocks.push((pol, 1));
                    current = Some(pol);
                }
                None => current = None,
            }
        }
        blocks
    }
}

pub fn count_resources(program: &CircuitProgram, model: &CostModel) -> ResourceReport {
    program.ops.iter().map(|op| ResourceReport::of_op(op, model)).sum()
}

impl fmt::Display for CircuitProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths = self.env_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
        writeln!(
            f,
            "# system={} ancilla={} env=[{}] ops={}",
            self.system_qubits,
            self.ancilla as u8,
            widths,
            self.ops.len()
        )?;
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::random::{random_density, random_pauli};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn env0(_: usize) -> Result<DensityMatrix> {
        DensityMatrix::zero_state(1)
    }

    #[test]
    fn empty_and_prepare_discard() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(2, &mut rng);
        let prog = CircuitProgram::new(2, false, vec![1]);
        assert_eq!(prog.execute(&rho, &env0).unwrap(), rho);
        let mut prog = CircuitProgram::new(2, false, vec![1]);
        prog.push(GateOp::PrepareEnv { slot: 0, state: 0 });
        prog.push(GateOp::TraceEnv { slot: 0 });
        let out = prog.execute(&rho, &env0).unwrap();
        assert!(max_abs_diff(out.matrix(), rho.matrix()) < 1e-15);
    }

    #[test]
    fn random_program_matches_direct_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let rho = random_density(2, &mut rng);
            let env_state = random_density(1, &mut rng);
            let q1 = random_pauli(2, &mut rng);
            let q2 = random_pauli(3, &mut rng).unsigned();
            let q3 = random_pauli(2, &mut rng);
            let phi: f64 = rng.gen_range(-1.0..1.0);
            let e = QubitRef::Env { slot: 0, index: 0 };
            let mut prog = CircuitProgram::new(1, true, vec![1]);
            prog.push(GateOp::Pauli { pauli: q1.clone(), targets: vec![QubitRef::Ancilla, QubitRef::System(0)] });
            prog.push(GateOp::PrepareEnv { slot: 0, state: 0 });
            prog.push(GateOp::Rotation {
                axis: q2.clone(),
                angle: phi,
                targets: vec![e, QubitRef::System(0), QubitRef::Ancilla],
            });
            prog.push(GateOp::ControlledPauli {
                pauli: q3.clone(),
                targets: vec![QubitRef::System(0), e],
                control: QubitRef::Ancilla,
                polarity: Polarity::OnZero,
            });
            prog.push(GateOp::TraceEnv { slot: 0 });
            let env_copy = env_state.clone();
            let got = prog.execute(&rho, &move |_| Ok(env_copy.clone())).unwrap();

            let mut direct = rho.clone();
            direct.apply_pauli(&q1, &[0, 1]).unwrap();
            let mut direct = direct.tensor_append(&env_state).unwrap();
            direct.apply_pauli_rotation(&q2, phi, &[2, 1, 0]).unwrap();
            direct.apply_controlled(&InnerGate::Pauli { pauli: q3, targets: vec![1, 2] }, 0, Polarity::OnZero).unwrap();
            let direct = direct.partial_trace(&[2]).unwrap();
            assert!(max_abs_diff(got.matrix(), direct.matrix()) < 1e-12);
        }
    }

    #[test]
    fn malformed_programs_rejected() {
        let rho = DensityMatrix::zero_state(1).unwrap();
        let mut prog = CircuitProgram::new(1, false, vec![1]);
        prog.push(GateOp::TraceEnv { slot: 0 });
        assert!(prog.execute(&rho, &env0).is_err());

        let mut prog = CircuitProgram::new(1, false, vec![1]);
        prog.push(GateOp::PrepareEnv { slot: 0, state: 0 });
        assert!(prog.validate().is_err());

        let mut prog = CircuitProgram::new(1, false, vec![1]);
        prog.push(GateOp::Pauli { pauli: p("X"), targets: vec![QubitRef::Ancilla] });
        assert!(prog.validate().is_err());

        let mut prog = CircuitProgram::new(2, true, vec![]);
        prog.push(GateOp::ControlledPauli {
            pauli: p("X"),
            targets: vec![QubitRef::Ancilla],
            control: QubitRef::Ancilla,
            polarity: Polarity::OnOne,
        });
        assert!(prog.validate().is_err());
    }

    #[test]
    fn cost_model_examples() {
        let m = CostModel::default();
        let t3: Vec<QubitRef> = (0..3).map(QubitRef::System).collect();
        let rot = GateOp::Rotation { axis: p("XYZ"), angle: 0.1, targets: t3.clone() };
        assert_eq!(m.cnots(&rot), 4);
        let swap = GateOp::Swap { a: QubitRef::System(0), b: QubitRef::System(1) };
        assert_eq!(m.cnots(&swap), 3);
        for w in 1..=3usize {
            let axis = p(&"X".repeat(w));
            let targets: Vec<QubitRef> = (0..w).map(QubitRef::System).collect();
            let crot = GateOp::ControlledRotation {
                axis,
                angle: 0.2,
                targets,
                control: QubitRef::Ancilla,
                polarity: Polarity::OnOne,
            };
            assert_eq!(m.cnots(&crot), 2 * (w as u64 - 1) + 2);
        }
        let cphase = GateOp::ControlledPauli {
            pauli: p("-iII"),
            targets: vec![QubitRef::System(0), QubitRef::System(1)],
            control: QubitRef::Ancilla,
            polarity: Polarity::OnOne,
        };
        assert_eq!(m.cnots(&cphase), 0);
    }

    #[test]
    fn resources_are_additive_and_counter_agrees() {
        let mut a = CircuitProgram::new(2, false, vec![1]);
        a.push(GateOp::PrepareEnv { slot: 0, state: 0 });
        a.push(GateOp::Rotation {
            axis: p("XZ"),
            angle: 0.3,
            targets: vec![QubitRef::System(0), QubitRef::Env { slot: 0, index: 0 }],
        });
        a.push(GateOp::TraceEnv { slot: 0 });
        let mut b = CircuitProgram::new(2, false, vec![1]);
        b.push(GateOp::Pauli { pauli: p("-YY"), targets: vec![QubitRef::System(0), QubitRef::System(1)] });
        let model = CostModel::default();
        let mut ab = a.clone();
        ab.extend_from(&b).unwrap();
        assert_eq!(count_resources(&ab, &model), count_resources(&a, &model) + count_resources(&b, &model));

        let mut counter = ResourceCounter::new(model);
        counter.push_repeated(&ab.ops, 5);
        assert_eq!(counter.report, count_resources(&ab, &model).times(5));
        assert_eq!(counter.report.env_preps, 5);
    }

    #[test]
    fn pretty_printer_is_stable() {
        let mut prog = CircuitProgram::new(1, true, vec![1]);
        prog.push(GateOp::PrepareEnv { slot: 0, state: 2 });
        prog.push(GateOp::ControlledRotation {
            axis: p("XZ"),
            angle: 0.25,
            targets: vec![QubitRef::System(0), QubitRef::Env { slot: 0, index: 0 }],
            control: QubitRef::Ancilla,
            polarity: Polarity::OnZero,
        });
        prog.push(GateOp::ControlledPauli {
            pauli: p("-YI"),
            targets: vec![QubitRef::System(0), QubitRef::Env { slot: 0, index: 0 }],
            control: QubitRef::Ancilla,
            polarity: Polarity::OnZero,
        });
        prog.push(GateOp::TraceEnv { slot: 0 });
        let expect = "# system=1 ancilla=1 env=[1] ops=4\n\
                      prep e0 state=2\n\
                      crot +XZ 2.5e-1 [s0,e0.0] ctrl=a on0\n\
                      cpauli -YI [s0,e0.0] ctrl=a on0\n\
                      trace e0\n";
        assert_eq!(prog.to_string(), expect);
        assert_eq!(prog.controlled_blocks(), vec![(Polarity::OnZero, 2)]);
    }

    #[test]
    fn unitary_program_preserves_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(3, &mut rng);
        let mut prog = CircuitProgram::new(3, false, vec![]);
        let all: Vec<QubitRef> = (0..3).map(QubitRef::System).collect();
        for _ in 0..10 {
            prog.push(GateOp::Rotation {
                axis: random_pauli(3, &mut rng).unsigned(),
                angle: rng.gen(),
                targets: all.clone(),
            });
            prog.push(GateOp::Pauli { pauli: random_pauli(3, &mut rng), targets: all.clone() });
        }
        prog.push(GateOp::Swap { a: QubitRef::System(0), b: QubitRef::System(2) });
        let out = prog.execute(&rho, &env0).unwrap();
        assert!((out.purity() - rho.purity()).abs() < 1e-10);
        assert_eq!(out, prog.execute(&rho, &env0).unwrap());
    }
}
