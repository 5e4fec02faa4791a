//! Randomized estimation of Tr[O M[rho]]: repeated coherent runs, ancilla or direct
//! measurement, zeta rescaling and Hoeffding sample sizing.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{count_resources, CircuitProgram, CostModel, EnvPreparer, ResourceReport};
use crate::collision::{exact_k_collision, exact_nonmarkov, Budget, CollisionSpec, CompiledSpec, NonMarkovSpec};
use crate::error::{Error, Result};
use crate::hamsim::{Backend, BackendOptions, LcuParams};
use crate::state::{DensityMatrix, Observable, ShotMeasurement};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Measurement {
    /// Conditional expectation of the measured observable per sampled circuit.
    #[default]
    Analytic,
    /// One Born-rule eigenvalue sample per run.
    Shot,
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measurement::Analytic => "analytic",
            Measurement::Shot => "shot",
        })
    }
}

impl FromStr for Measurement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "analytic" => Ok(Measurement::Analytic),
            "shot" => Ok(Measurement::Shot),
            other => Err(Error::Config(format!("unknown measurement mode '{other}'"))),
        }
    }
}

/// T = ceil(8 ||O||^2 ln(2/delta) zeta^4 / eps^2).
pub fn hoeffding_t(norm_o: f64, eps: f64, delta: f64, zeta: f64) -> Result<u64> {
    if !(norm_o > 0.0 && eps > 0.0 && zeta > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("Hoeffding count needs ||O||, eps, zeta > 0 and delta in (0, 1)"));
    }
    let t = 8.0 * norm_o * norm_o * (2.0 / delta).ln() * zeta.powi(4) / (eps * eps);
    if !t.is_finite() || t > u64::MAX as f64 {
        return Err(Error::Numerical(format!("Hoeffding count {t:e} overflows")));
    }
    Ok((t.ceil() as u64).max(1))
}

/// zeta = prod_j alpha^(j); an empty list gives 1.
pub fn zeta_of(params: &[LcuParams]) -> f64 {
    params.iter().map(|p| p.alpha_total).product()
}

/// Observable as measured on the program output, with its Born sampler when shots are taken.
#[derive(Clone, Debug)]
pub struct Measurer {
    measured: Observable,
    has_ancilla: bool,
    shots: Option<ShotMeasurement>,
}

impl Measurer {
    /// With an ancilla the measured observable is sigma^x on the ancilla tensored with `obs`.
    pub fn new(obs: &Observable, mode: Measurement, has_ancilla: bool) -> Result<Self> {
        let measured = if has_ancilla { obs.with_ancilla_x()? } else { obs.clone() };
        let shots = match mode {
            Measurement::Analytic => None,
            Measurement::Shot => Some(ShotMeasurement::new(&measured)?),
        };
        Ok(Measurer { measured, has_ancilla, shots })
    }

    pub fn mode(&self) -> Measurement {
        if self.shots.is_some() {
            Measurement::Shot
        } else {
            Measurement::Analytic
        }
    }

    pub fn has_ancilla(&self) -> bool {
        self.has_ancilla
    }

    /// Program input: |+><+| on the ancilla (if any) followed by the system state.
    pub fn input(&self, rho_s: &DensityMatrix) -> Result<DensityMatrix> {
        if self.has_ancilla {
            DensityMatrix::plus().tensor_append(rho_s)
        } else {
            Ok(rho_s.clone())
        }
    }

    pub fn measure(&self, rho_final: &DensityMatrix, rng: &mut ChaCha8Rng) -> Result<f64> {
        match &self.shots {
            None => rho_final.expectation(&self.measured),
            Some(shots) => shots.sample(rho_final, rng),
        }
    }
}

/// One coherent run: execute `program` on the prepared input and measure.
pub fn run_once(
    program: &CircuitProgram,
    rho_s: &DensityMatrix,
    measurer: &Measurer,
    env: &dyn EnvPreparer,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if program.ancilla != measurer.has_ancilla() {
        return Err(Error::dim("program ancilla and measurement ancilla disagree"));
    }
    let out = program.execute(&measurer.input(rho_s)?, env)?;
    measurer.measure(&out, rng)
}

/// Independent generator of run `index` under `seed`.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug)]
pub enum Dynamics<'a> {
    Markov(&'a CollisionSpec),
    NonMarkov(&'a NonMarkovSpec),
}

impl Dynamics<'_> {
    pub fn base(&self) -> &CollisionSpec {
        match self {
            Dynamics::Markov(s) => s,
            Dynamics::NonMarkov(s) => &s.base,
        }
    }

    /// Output of the exact map.
    pub fn exact(&self, rho_s: &DensityMatrix) -> Result<DensityMatrix> {
        match self {
            Dynamics::Markov(s) => exact_k_collision(s, rho_s),
            Dynamics::NonMarkov(s) => exact_nonmarkov(s, rho_s),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimateConfig {
    pub backend: Backend,
    pub options: BackendOptions,
    pub eps: f64,
    pub delta: f64,
    pub measurement: Measurement,
    /// Overrides the Hoeffding run count.
    pub runs: Option<u64>,
    pub seed: u64,
    /// Thread count; `None` uses the global pool.
    pub workers: Option<usize>,
    pub cost_model: CostModel,
    pub config_hash: String,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            backend: Backend::Salcu,
            options: BackendOptions::default(),
            eps: 0.1,
            delta: 0.05,
            measurement: Measurement::Analytic,
            runs: None,
            seed: 0,
            workers: None,
            cost_model: CostModel::default(),
            config_hash: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub mu: f64,
    pub stderr: f64,
    pub t: u64,
    pub zeta: f64,
    /// Per-run mu_k, before the zeta^2 rescaling.
    pub samples: Vec<f64>,
    pub resources: ResourceReport,
    pub cnot_per_run_mean: f64,
    pub depth_proxy_mean: f64,
    pub seed: u64,
    pub config_hash: String,
    pub backend: Backend,
    pub hoeffding_t: u64,
    pub eps_prime: Option<f64>,
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str =
        "mu,stderr,T,zeta,cnot_per_run_mean,depth_proxy_mean,seed,config_hash,backend,hoeffding_T,T_below_hoeffding";

    pub fn t_below_hoeffding(&self) -> bool {
        self.t < self.hoeffding_t
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{},{},{},{}",
            self.mu,
            self.stderr,
            self.t,
            self.zeta,
            self.cnot_per_run_mean,
            self.depth_proxy_mean,
            self.seed,
            self.config_hash,
            self.backend,
            self.hoeffding_t,
            self.t_below_hoeffding()
        )
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("run,mu_k\n");
        for (k, v) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{k},{v:.16e}");
        }
        out
    }
}

/// Estimate Tr[O M[rho_s]] for a Markovian or non-Markovian collision map.
///
/// Generic backends get half the budget for approximation (per-collision precision
/// eps/(6K||O||)); SA-LCU gets its own eps/(6K||O||) split. The run count defaults to the
/// Hoeffding count at the full eps.
pub fn estimate(
    dynamics: Dynamics<'_>,
    rho_s: &DensityMatrix,
    obs: &Observable,
    cfg: &EstimateConfig,
) -> Result<EstimateReport> {
    let base = dynamics.base();
    if rho_s.n() != base.n || obs.n() != base.n {
        return Err(Error::dim(format!(
            "state on {} and observable on {} qubits for a {}-qubit system",
            rho_s.n(),
            obs.n(),
            base.n
        )));
    }
    if !(cfg.eps > 0.0) || !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::invalid("eps must be positive and delta in (0, 1)"));
    }
    if cfg.runs == Some(0) {
        return Err(Error::invalid("run count must be at least 1"));
    }
    let norm_o = obs.norm();
    let compiled = match cfg.backend {
        Backend::Exact => None,
        Backend::Salcu => Some(CompiledSpec::new(base, cfg.backend, Budget { eps: cfg.eps, norm_o }, &cfg.options)?),
        _ => Some(CompiledSpec::new(base, cfg.backend, Budget { eps: cfg.eps / 2.0, norm_o }, &cfg.options)?),
    };
    let zeta =
        compiled.as_ref().map_or(1.0, |c| if cfg.backend == Backend::Salcu { zeta_of(&c.lcu_params()) } else { 1.0 });
    let hoeffding = hoeffding_t(norm_o, cfg.eps, cfg.delta, zeta)?;
    let t = cfg.runs.unwrap_or(hoeffding);
    let measurer = Measurer::new(obs, cfg.measurement, cfg.backend.uses_ancilla())?;

    // A channel that is the same for every run is evaluated once.
    let fixed_state = match (&compiled, dynamics) {
        (None, _) => Some((dynamics.exact(rho_s)?, ResourceReport::default())),
        (Some(c), Dynamics::Markov(spec)) if !cfg.backend.is_randomized() => {
            let prog = c.markov_program(&mut run_rng(cfg.seed, 0));
            let res = count_resources(&prog, &cfg.cost_model);
            Some((prog.execute(&measurer.input(rho_s)?, spec)?, res))
        }
        _ => None,
    };

    let run = |k: u64| -> Result<(f64, ResourceReport)> {
        let mut rng = run_rng(cfg.seed, k);
        if let Some((state, res)) = &fixed_state {
            return Ok((measurer.measure(state, &mut rng)?, *res));
        }
        let c = compiled.as_ref().expect("randomized runs are compiled");
        let prog = match dynamics {
            Dynamics::Markov(_) => c.markov_program(&mut rng),
            Dynamics::NonMarkov(nm) => c.nonmarkov_program(nm.p, &mut rng),
        };
        let res = count_resources(&prog, &cfg.cost_model);
        Ok((run_once(&prog, rho_s, &measurer, base, &mut rng)?, res))
    };

    let results: Vec<Result<(f64, ResourceReport)>> =
        if fixed_state.is_some() && cfg.measurement == Measurement::Analytic {
            let first = run(0)?;
            (0..t).map(|_| Ok(first)).collect()
        } else {
            let par = || (0..t).into_par_iter().map(run).collect::<Vec<_>>();
            match cfg.workers {
                Some(w) => rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                    .install(par),
                None => par(),
            }
        };

    let mut samples = Vec::with_capacity(t as usize);
    let mut resources = ResourceReport::default();
    for r in results {
        let (mu_k, res) = r?;
        samples.push(mu_k);
        resources += res;
    }
    let z2 = zeta * zeta;
    let mean = samples.iter().sum::<f64>() / t as f64;
    let stderr = if t > 1 {
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
        z2 * (var / t as f64).sqrt()
    } else {
        0.0
    };
    Ok(EstimateReport {
        mu: z2 * mean,
        stderr,
        t,
        zeta,
        samples,
        resources,
        cnot_per_run_mean: resources.cnot_count as f64 / t as f64,
        depth_proxy_mean: resources.depth_proxy as f64 / t as f64,
        seed: cfg.seed,
        config_hash: cfg.config_hash.clone(),
        backend: cfg.backend,
        hoeffding_t: hoeffding,
        eps_prime: compiled.as_ref().map(|c| c.eps_prime()),
    })
}

/// Mean per-run resources over `compilations` sampled circuits.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanResources {
    pub backend: Backend,
    pub k: usize,
    pub eps_prime: f64,
    pub compilations: u64,
    pub total: ResourceReport,
    pub cnot_mean: f64,
    pub depth_mean: f64,
    pub rotation_mean: f64,
}

/// Count resources for the circuit the estimator would run, without simulating states.
/// Deterministic backends are compiled once.
#[allow(clippy::too_many_arguments)]
pub fn mean_resources(
    dynamics: Dynamics<'_>,
    backend: Backend,
    eps: f64,
    norm_o: f64,
    options: &BackendOptions,
    compilations: u64,
    seed: u64,
    model: CostModel,
) -> Result<MeanResources> {
    let base = dynamics.base();
    let eps_backend = if backend == Backend::Salcu { eps } else { eps / 2.0 };
    let compiled = CompiledSpec::new(base, backend, Budget { eps: eps_backend, norm_o }, options)?;
    let count = |k: u64| {
        let mut rng = run_rng(seed, k);
        match dynamics {
            Dynamics::Markov(_) => compiled.count_markov(&mut rng, model),
            Dynamics::NonMarkov(nm) => compiled.count_nonmarkov(nm.p, &mut rng, model),
        }
    };
    let randomized = backend.is_randomized() || matches!(dynamics, Dynamics::NonMarkov(nm) if nm.p > 0.0 && nm.p < 1.0);
    let n = if randomized { compilations.max(1) } else { 1 };
    let reports: Vec<ResourceReport> = (0..n).into_par_iter().map(count).collect();
    let total: ResourceReport = reports.into_iter().sum();
    Ok(MeanResources {
        backend,
        k: base.k(),
        eps_prime: compiled.eps_prime(),
        compilations: n,
        total,
        cnot_mean: total.cnot_count as f64 / n as f64,
        depth_mean: total.depth_proxy as f64 / n as f64,
        rotation_mean: total.rotation_count as f64 / n as f64,
    })
}
