//! Hamiltonian simulation compilers for e^{-i beta dt H} with H normalized.

pub mod lcu;
pub mod qdrift;
pub mod trotter;

use std::fmt;
use std::str::FromStr;

use crate::circuit::{GateOp, QubitRef};
use crate::error::{Error, Result};
use crate::pauli::{PauliString, Phase};

pub use lcu::{
    choose_lcu_params, choose_lcu_q, lcu_enumerate, lcu_sample, lcu_to_program, taylor_tail, LcuParams, LcuSegment,
    SampledUnitary,
};
pub use qdrift::{choose_qdrift_length, qdrift_compile};
pub use trotter::{choose_trotter_steps, trotter1_compile, trotter2k_compile, StepStrategy, TrotterOrder};

/// Backend selector as written in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    Trotter1,
    /// Suzuki formula of order 2k.
    Trotter2k(u32),
    Qdrift,
    Salcu,
    /// Dense exponentials; no circuit is emitted.
    Exact,
}

/// How the per-collision precision is derived from the total budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecisionMode {
    Generic,
    Salcu,
}

impl Backend {
    pub const ALL_CIRCUIT: [Backend; 4] = [Backend::Trotter1, Backend::Trotter2k(1), Backend::Qdrift, Backend::Salcu];

    pub fn uses_ancilla(self) -> bool {
        self == Backend::Salcu
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Backend::Qdrift | Backend::Salcu)
    }

    pub fn precision_mode(self) -> PrecisionMode {
        if self == Backend::Salcu {
            PrecisionMode::Salcu
        } else {
            PrecisionMode::Generic
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Trotter1 => write!(f, "trotter1"),
            Backend::Trotter2k(k) => write!(f, "trotter2k:{k}"),
            Backend::Qdrift => write!(f, "qdrift"),
            Backend::Salcu => write!(f, "salcu"),
            Backend::Exact => write!(f, "exact"),
        }
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "trotter1" => Ok(Backend::Trotter1),
            "qdrift" => Ok(Backend::Qdrift),
            "salcu" => Ok(Backend::Salcu),
            "exact" => Ok(Backend::Exact),
            _ => {
                let k = s
                    .strip_prefix("trotter2k:")
                    .and_then(|k| k.parse::<u32>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::Config(format!("unknown backend {s:?}")))?;
                Ok(Backend::Trotter2k(k))
            }
        }
    }
}

/// Optional parameter overrides accepted from configs.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendOptions {
    pub steps: Option<u64>,
    pub qdrift_n: Option<u64>,
    pub r: Option<u64>,
    pub q: Option<u32>,
    pub c_r: f64,
    pub strategy: StepStrategy,
}

impl Default for BackendOptions {
    fn default() -> Self {
        BackendOptions { steps: None, qdrift_n: None, r: None, q: None, c_r: 1.0, strategy: StepStrategy::WorstCase }
    }
}

/// Rotation e^{-i angle P} for a signed term P = s P', expressed on the unsigned axis.
pub(crate) fn term_rotation(term: &PauliString, angle: f64, targets: &[QubitRef]) -> GateOp {
    let sign = if term.phase() == Phase::MINUS_ONE { -1.0 } else { 1.0 };
    GateOp::Rotation { axis: term.unsigned(), angle: angle * sign, targets: targets.to_vec() }
}

/// Default targets `System(0..n)` for standalone compilation.
pub(crate) fn system_targets(n: usize) -> Vec<QubitRef> {
    (0..n).map(QubitRef::System).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_round_trip() {
        for s in ["trotter1", "trotter2k:1", "trotter2k:3", "qdrift", "salcu", "exact"] {
            assert_eq!(s.parse::<Backend>().unwrap().to_string(), s);
        }
        assert!("trotter2k:0".parse::<Backend>().is_err());
        assert!("lcu".parse::<Backend>().is_err());
    }
}
