//! Subcommand implementations behind the `collidesim` binary.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::circuit::CostModel;
use crate::collision::{
    exact_k_collision, exact_nonmarkov, lindblad_collision_spec, suggest_nu, Collision, CollisionSpec, LindbladModel,
    NonMarkovSpec, NuSearch, NU_START,
};
use crate::config::{
    ExperimentConfig, InitialState, ModelSource, NuChoice, ObservableChoice, RawConfig, SweepAxis, SweepMode,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate, mean_resources, Dynamics, EstimateConfig, EstimateReport, MeanResources};
use crate::hamsim::Backend;
use crate::linalg::set_dense_limit;
use crate::models::{benchmark_model, magnetization, BenchmarkConfig};
use crate::oracles::lindblad_evolve;
use crate::state::{DensityMatrix, Observable};

/// Largest nu tried by the automatic doubling search.
pub const NU_MAX: u64 = 1 << 16;
const ORACLE_TOL: f64 = 1e-10;

pub const ORACLE_HEADER: &str = "t,lindblad,collision,nu";
pub const RESOURCES_HEADER: &str =
    "backend,t,eps,nu,K,eps_prime,compilations,cnot_per_run_mean,rotation_per_run_mean,depth_proxy_mean";
pub const SWEEP_ESTIMATE_HEADER: &str =
    "axis,value,backend,nu,K,mu,stderr,T,zeta,cnot_per_run_mean,depth_proxy_mean,oracle,abs_error";
pub const SWEEP_RESOURCES_HEADER: &str =
    "axis,value,backend,nu,K,eps_prime,compilations,cnot_per_run_mean,rotation_per_run_mean,depth_proxy_mean";

/// How `dynamics.nu = auto` is resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NuMode {
    /// Doubling search against the exact collision map.
    Search,
    /// ceil(nu_scale t^2 / eps), no state simulation.
    Scaling,
}

/// Everything needed to run one configured experiment.
pub struct Prepared {
    /// Absent when only resources are needed.
    pub rho: Option<DensityMatrix>,
    pub obs: Observable,
    pub model: Option<LindbladModel>,
    pub spec: CollisionSpec,
    pub nonmarkov: Option<NonMarkovSpec>,
    pub nu: Option<u64>,
    pub nu_trace: Option<NuSearch>,
}

impl Prepared {
    pub fn dynamics(&self) -> Dynamics<'_> {
        match &self.nonmarkov {
            Some(nm) => Dynamics::NonMarkov(nm),
            None => Dynamics::Markov(&self.spec),
        }
    }

    pub fn rho(&self) -> Result<&DensityMatrix> {
        self.rho.as_ref().ok_or_else(|| Error::Config("initial state was not prepared".into()))
    }

    /// Exact Lindblad value at time t (benchmark models only).
    pub fn lindblad_value(&self, t: f64) -> Result<Option<f64>> {
        match &self.model {
            Some(m) => Ok(Some(lindblad_evolve(m, self.rho()?, t, ORACLE_TOL)?.expectation(&self.obs)?)),
            None => Ok(None),
        }
    }

    pub fn collision_value(&self) -> Result<f64> {
        self.dynamics().exact(self.rho()?)?.expectation(&self.obs)
    }
}

fn initial_state(cfg: &ExperimentConfig, n: usize) -> Result<DensityMatrix> {
    let rho = match &cfg.initial_state {
        InitialState::Zero => DensityMatrix::zero_state(n)?,
        InitialState::Mixed => DensityMatrix::maximally_mixed(n)?,
        InitialState::Basis(i) => DensityMatrix::basis(n, *i)?,
        InitialState::Dense(d) => d.clone(),
    };
    if rho.n() != n {
        return Err(Error::Config(format!("initial state has {} qubits, system has {n}", rho.n())));
    }
    Ok(rho)
}

fn observable(cfg: &ExperimentConfig, n: usize) -> Result<Observable> {
    match &cfg.observable {
        ObservableChoice::Magnetization => magnetization(n),
        ObservableChoice::Pauli(sum) => Observable::from_pauli(sum.clone()),
    }
}

fn prepare(cfg: &ExperimentConfig, mode: NuMode) -> Result<Prepared> {
    if let Some(limit) = cfg.dense_limit {
        set_dense_limit(limit);
    }
    let n = cfg.model.n();
    let obs = observable(cfg, n)?;
    let rho = match mode {
        NuMode::Search => Some(initial_state(cfg, n)?),
        NuMode::Scaling => None,
    };
    let (model, spec, nu, nu_trace) = match &cfg.model {
        ModelSource::Benchmark(b) => {
            let b = BenchmarkConfig { t: cfg.t, eps: cfg.eps, ..b.clone() };
            let model = benchmark_model(&b)?;
            let (nu, trace) = match (cfg.nu, &rho) {
                (NuChoice::Fixed(nu), _) => (nu, None),
                (NuChoice::Auto, None) => (((cfg.nu_scale * cfg.t * cfg.t / cfg.eps).ceil() as u64).max(1), None),
                (NuChoice::Auto, Some(rho)) => {
                    let s = suggest_nu(&model, cfg.t, rho, &obs, cfg.eps, NU_START, NU_MAX)?;
                    (s.nu, Some(s))
                }
            };
            let spec = lindblad_collision_spec(&model, cfg.t, nu)?;
            (Some(model), spec, Some(nu), trace)
        }
        ModelSource::Custom(c) => {
            let coll = Arc::new(Collision::new(
                c.system_h.clone(),
                c.env_h.clone(),
                c.interaction_h.clone(),
                c.env_state.clone(),
            )?);
            (None, CollisionSpec::new(c.system_h.clone(), vec![coll; c.k], c.dt)?, None, None)
        }
    };
    let nonmarkov = cfg.p.map(|p| NonMarkovSpec::new(spec.clone(), p)).transpose()?;
    Ok(Prepared { rho, obs, model, spec, nonmarkov, nu, nu_trace })
}

fn estimate_config(cfg: &ExperimentConfig, backend: Backend) -> EstimateConfig {
    EstimateConfig {
        backend,
        options: cfg.options.clone(),
        eps: cfg.eps,
        delta: cfg.delta,
        measurement: cfg.measurement,
        runs: cfg.runs,
        seed: cfg.seed,
        workers: cfg.workers,
        cost_model: CostModel::default(),
        config_hash: cfg.hash.clone(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create output dir {}: {e}", dir.display())))
}

/// Append `row` to a CSV file, writing `header` first when the file is new or empty.
pub fn append_csv(path: &Path, header: &str, row: &str) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

pub struct RunOutcome {
    pub report: EstimateReport,
    pub nu: Option<u64>,
    pub report_path: PathBuf,
    pub summary: String,
}

/// Estimate the configured observable without writing any files.
pub fn run_estimate(cfg: &ExperimentConfig) -> Result<(Prepared, EstimateReport)> {
    let prep = prepare(cfg, NuMode::Search)?;
    let report = estimate(prep.dynamics(), prep.rho()?, &prep.obs, &estimate_config(cfg, cfg.backend))?;
    Ok((prep, report))
}

/// Estimate the configured observable and append one row to `report.csv`.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let (prep, report) = run_estimate(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let report_path = cfg.out_dir.join("report.csv");
    append_csv(&report_path, EstimateReport::CSV_HEADER, &report.csv_row())?;
    if cfg.samples {
        write_file(&cfg.out_dir.join(format!("samples_{}_{}.csv", cfg.hash, cfg.seed)), &report.samples_csv())?;
    }
    if let Some(trace) = &prep.nu_trace {
        write_file(&cfg.out_dir.join("nu_trace.csv"), &trace.to_csv())?;
    }
    let mut summary = format!(
        "mu = {:.6} +/- {:.6} (T = {}, zeta = {:.4}, mean CNOTs/run = {:.1}, backend {})",
        report.mu, report.stderr, report.t, report.zeta, report.cnot_per_run_mean, report.backend
    );
    if let Some(nu) = prep.nu {
        let _ = write!(summary, ", nu = {nu}, K = {}", prep.spec.k());
    }
    if report.t_below_hoeffding() {
        let _ = write!(summary, "; T below the Hoeffding count {}", report.hoeffding_t);
    }
    Ok(RunOutcome { report, nu: prep.nu, report_path, summary })
}

/// One oracle row: (t, Lindblad value, exact collision value, nu).
pub type OracleRow = (f64, Option<f64>, f64, Option<u64>);

/// Exact expectation values on the configured time grid.
pub fn oracle_rows(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    match cfg.model {
        ModelSource::Benchmark(_) => {
            let mut times = cfg.times.clone();
            if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return Err(Error::Config("oracle times must be finite and nonnegative".into()));
            }
            times.sort_by(f64::total_cmp);
            for t in times {
                if t == 0.0 {
                    let n = cfg.model.n();
                    let v = initial_state(cfg, n)?.expectation(&observable(cfg, n)?)?;
                    rows.push((0.0, Some(v), v, None));
                    continue;
                }
                let prep = prepare(&ExperimentConfig { t, ..cfg.clone() }, NuMode::Search)?;
                rows.push((t, prep.lindblad_value(t)?, prep.collision_value()?, prep.nu));
            }
        }
        ModelSource::Custom(ref c) => {
            let prep = prepare(cfg, NuMode::Search)?;
            rows.push((c.k as f64 * c.dt, None, prep.collision_value()?, None));
        }
    }
    Ok(rows)
}

/// [`oracle_rows`] written to `oracle.csv`.
pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<(Vec<OracleRow>, PathBuf)> {
    let rows = oracle_rows(cfg)?;
    let mut out = format!("{ORACLE_HEADER}\n");
    for (t, l, c, nu) in &rows {
        let l = l.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let nu = nu.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{t:.16e},{l},{c:.16e},{nu}");
    }
    ensure_dir(&cfg.out_dir)?;
    let path = write_file(&cfg.out_dir.join("oracle.csv"), &out)?;
    Ok((rows, path))
}

fn resources_for(cfg: &ExperimentConfig, backend: Backend) -> Result<(MeanResources, Option<u64>)> {
    if backend == Backend::Exact {
        return Err(Error::Config("the exact backend has no circuit to count".into()));
    }
    let prep = prepare(cfg, NuMode::Scaling)?;
    let res = mean_resources(
        prep.dynamics(),
        backend,
        cfg.eps,
        prep.obs.norm(),
        &cfg.options,
        cfg.compilations,
        cfg.seed,
        CostModel::default(),
    )?;
    Ok((res, prep.nu))
}

fn resources_fields(r: &MeanResources) -> String {
    format!(
        "{:.16e},{},{:.16e},{:.16e},{:.16e}",
        r.eps_prime, r.compilations, r.cnot_mean, r.rotation_mean, r.depth_mean
    )
}

/// Per-backend circuit resources without state simulation, written to `resources.csv`.
pub fn cmd_resources(cfg: &ExperimentConfig) -> Result<(Vec<MeanResources>, PathBuf)> {
    let mut out = format!("{RESOURCES_HEADER}\n");
    let mut all = Vec::new();
    for &backend in &cfg.resource_backends {
        let (r, nu) = resources_for(cfg, backend)?;
        let nu = nu.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{backend},{:.16e},{:.16e},{nu},{},{}", cfg.t, cfg.eps, r.k, resources_fields(&r));
        all.push(r);
    }
    ensure_dir(&cfg.out_dir)?;
    let path = write_file(&cfg.out_dir.join("resources.csv"), &out)?;
    Ok((all, path))
}

fn with_axis(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Eps => {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::Config(format!("sweep eps {value} outside (0, 1)")));
            }
            c.eps = value;
        }
        SweepAxis::T => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("sweep t {value} must be positive")));
            }
            c.t = value;
            c.times = vec![value];
        }
        SweepAxis::Nu => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("sweep nu {value} must be a positive integer")));
            }
            c.nu = NuChoice::Fixed(value as u64);
        }
        SweepAxis::P => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("sweep p {value} outside [0, 1]")));
            }
            c.p = Some(value);
        }
    }
    Ok(c)
}

/// One row per (value, backend), written to `sweep_<axis>.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<(Vec<String>, PathBuf)> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let header = match cfg.sweep_mode {
        SweepMode::Estimate => SWEEP_ESTIMATE_HEADER,
        SweepMode::Resources => SWEEP_RESOURCES_HEADER,
    };
    let mut rows = Vec::new();
    for &value in values {
        let c = with_axis(cfg, axis, value)?;
        for &backend in &cfg.sweep_backends {
            let row = match cfg.sweep_mode {
                SweepMode::Estimate => {
                    let prep = prepare(&c, NuMode::Search)?;
                    let rep = estimate(prep.dynamics(), prep.rho()?, &prep.obs, &estimate_config(&c, backend))?;
                    let oracle = match prep.lindblad_value(c.t)? {
                        Some(v) => v,
                        None => prep.collision_value()?,
                    };
                    format!(
                        "{axis},{value:.16e},{backend},{},{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{oracle:.16e},{:.16e}",
                        prep.nu.map(|v| v.to_string()).unwrap_or_default(),
                        prep.spec.k(),
                        rep.mu,
                        rep.stderr,
                        rep.t,
                        rep.zeta,
                        rep.cnot_per_run_mean,
                        rep.depth_proxy_mean,
                        (rep.mu - oracle).abs()
                    )
                }
                SweepMode::Resources => {
                    let (r, nu) = resources_for(&c, backend)?;
                    format!(
                        "{axis},{value:.16e},{backend},{},{},{}",
                        nu.map(|v| v.to_string()).unwrap_or_default(),
                        r.k,
                        resources_fields(&r)
                    )
                }
            };
            rows.push(row);
        }
    }
    let mut out = format!("{header}\n");
    for r in &rows {
        let _ = writeln!(out, "{r}");
    }
    ensure_dir(&cfg.out_dir)?;
    let path = write_file(&cfg.out_dir.join(format!("sweep_{axis}.csv")), &out)?;
    Ok((rows, path))
}

/// Exact Markov and non-Markov values for a prepared configuration (used by tests and sweeps).
pub fn exact_values(cfg: &ExperimentConfig) -> Result<(f64, Option<f64>)> {
    let prep = prepare(cfg, NuMode::Search)?;
    let markov = exact_k_collision(&prep.spec, prep.rho()?)?.expectation(&prep.obs)?;
    let nm = prep.nonmarkov.as_ref().map(|nm| exact_nonmarkov(nm, prep.rho()?)?.expectation(&prep.obs)).transpose()?;
    Ok((markov, nm))
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Also replaces the sweep and resources backend lists.
    pub backend: Option<String>,
    pub axis: Option<String>,
    pub values: Option<String>,
}

/// Load `path` (or the defaults), apply overrides, and validate.
pub fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<ExperimentConfig> {
    let mut raw = match path {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    if let Some(seed) = ov.seed {
        raw.set("execution.seed", seed.to_string())?;
    }
    if let Some(w) = ov.workers {
        raw.set("execution.workers", w.to_string())?;
    }
    if let Some(b) = &ov.backend {
        raw.set("dynamics.backend", b.clone())?;
        raw.set("sweep.backends", b.clone())?;
        raw.set("resources.backends", b.clone())?;
    }
    if let Some(a) = &ov.axis {
        raw.set("sweep.axis", a.clone())?;
    }
    if let Some(v) = &ov.values {
        raw.set("sweep.values", v.clone())?;
    }
    let mut cfg = ExperimentConfig::from_raw(&raw)?;
    if let Some(out) = &ov.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}
