//! Experiment configuration: flat `section.key = value` text with a JSON alternative.
//!
//! ```text
//! # benchmark run
//! model.kind = benchmark
//! model.m = 4
//! dynamics.eps = 1e-2
//! dynamics.backend = trotter2k:1
//! execution.seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::collision::EnvState;
use crate::error::{Error, Result};
use crate::estimator::Measurement;
use crate::hamsim::{Backend, BackendOptions, StepStrategy};
use crate::models::BenchmarkConfig;
use crate::pauli::PauliSum;
use crate::state::DensityMatrix;

/// Every accepted key with its default (empty means "unset").
const KEYS: &[(&str, &str)] = &[
    ("model.kind", "benchmark"),
    ("model.m", "4"),
    ("model.J", "1"),
    ("model.h", "0.1"),
    ("model.gamma", "1"),
    ("model.omega", "inf"),
    ("model.periodic", "false"),
    ("model.env_strength", "1"),
    ("model.system_h", ""),
    ("model.env_h", ""),
    ("model.interaction_h", ""),
    ("model.env_state", "basis:0"),
    ("model.K", ""),
    ("model.dt", ""),
    ("model.observable", "magnetization"),
    ("model.initial_state", "zero"),
    ("dynamics.t", "1"),
    ("dynamics.eps", "0.01"),
    ("dynamics.delta", "0.05"),
    ("dynamics.nu", "auto"),
    ("dynamics.backend", "salcu"),
    ("dynamics.measurement", "analytic"),
    ("dynamics.p", ""),
    ("dynamics.times", ""),
    ("backend.steps", ""),
    ("backend.N", ""),
    ("backend.r", ""),
    ("backend.q", ""),
    ("backend.c_r", "1"),
    ("backend.strategy", "worst-case"),
    ("execution.seed", "0"),
    ("execution.workers", ""),
    ("execution.T", ""),
    ("execution.dense_limit", ""),
    ("output.dir", "."),
    ("output.samples", "false"),
    ("sweep.axis", ""),
    ("sweep.values", ""),
    ("sweep.backends", ""),
    ("sweep.mode", "estimate"),
    ("resources.backends", "trotter1,trotter2k:1,qdrift,salcu"),
    ("resources.compilations", "4"),
    ("resources.nu_scale", "1"),
];

/// Keys that do not change results and are left out of the config hash.
const UNHASHED: &[&str] = &["execution.workers", "output.dir"];

/// Parsed key/value pairs plus the directory relative paths resolve against.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key = value, got '{line}'") })?;
            let k = k.trim();
            check_key(k).map_err(|_| Error::Parse { line: i + 1, msg: format!("unknown key '{k}'") })?;
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key '{k}'") });
            }
        }
        Ok(RawConfig { entries, base_dir: PathBuf::new() })
    }

    /// JSON object, nested by section or flat with dotted keys; arrays become comma lists.
    pub fn parse_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let mut entries = BTreeMap::new();
        flatten_json("", &v, &mut entries)?;
        for k in entries.keys() {
            check_key(k)?;
        }
        Ok(RawConfig { entries, base_dir: PathBuf::new() })
    }

    /// Load by extension (`.json` or key/value text).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut raw = if path.extension().is_some_and(|e| e == "json") {
            Self::parse_json(&text)?
        } else {
            Self::parse_kv(&text)?
        };
        raw.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key)?;
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    /// Sorted `key = value` lines of the result-relevant keys.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            if !UNHASHED.contains(&k.as_str()) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    /// First 16 hex digits of SHA-256 over the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn value(&self, key: &str) -> Option<&str> {
        self.get(key).or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d).filter(|d| !d.is_empty()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.value(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("cannot parse {key} = '{v}'"))))
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?.ok_or_else(|| Error::Config(format!("missing {key}")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        match self.value(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<T>().map_err(|_| Error::Config(format!("cannot parse '{s}' in {key}"))))
                .collect(),
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        let v = self.value(key).ok_or_else(|| Error::Config(format!("missing {key}")))?;
        let p = self.base_dir.join(v);
        if !p.exists() {
            return Err(Error::Config(format!("{key}: file {} not found", p.display())));
        }
        Ok(p)
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown key '{key}'")))
    }
}

fn flatten_json(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) -> Result<()> {
    let scalar = |v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            Value::Null => Ok(String::new()),
            _ => Err(Error::Config(format!("nested value under '{prefix}' is not a scalar"))),
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_json(&key, child, out)?;
            }
        }
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
            out.insert(prefix.to_string(), parts.join(","));
        }
        other => {
            out.insert(prefix.to_string(), scalar(other)?);
        }
    }
    Ok(())
}

/// Float parser accepting `inf`.
fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        v => v.parse().map_err(|_| Error::Config(format!("not a number: '{v}'"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CustomModel {
    pub system_h: PauliSum,
    pub env_h: PauliSum,
    pub interaction_h: PauliSum,
    pub env_state: EnvState,
    pub k: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSource {
    Benchmark(BenchmarkConfig),
    Custom(CustomModel),
}

impl ModelSource {
    pub fn n(&self) -> usize {
        match self {
            ModelSource::Benchmark(b) => b.m,
            ModelSource::Custom(c) => c.system_h.n(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuChoice {
    Auto,
    Fixed(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObservableChoice {
    /// (1/n) sum_j Z_j
    Magnetization,
    Pauli(PauliSum),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Zero,
    Basis(usize),
    Mixed,
    Dense(DensityMatrix),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Eps,
    T,
    Nu,
    P,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eps" => Ok(SweepAxis::Eps),
            "t" => Ok(SweepAxis::T),
            "nu" => Ok(SweepAxis::Nu),
            "p" => Ok(SweepAxis::P),
            other => Err(Error::Config(format!("unknown sweep axis '{other}' (eps, t, nu, p)"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Eps => "eps",
            SweepAxis::T => "t",
            SweepAxis::Nu => "nu",
            SweepAxis::P => "p",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Estimate,
    Resources,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub observable: ObservableChoice,
    pub initial_state: InitialState,
    pub t: f64,
    pub eps: f64,
    pub delta: f64,
    pub nu: NuChoice,
    pub backend: Backend,
    pub measurement: Measurement,
    /// Swap probability; present for non-Markovian runs.
    pub p: Option<f64>,
    /// Oracle time grid (defaults to `[t]`).
    pub times: Vec<f64>,
    pub options: BackendOptions,
    pub seed: u64,
    pub workers: Option<usize>,
    pub runs: Option<u64>,
    pub dense_limit: Option<usize>,
    pub out_dir: PathBuf,
    pub samples: bool,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_values: Vec<f64>,
    pub sweep_backends: Vec<Backend>,
    pub sweep_mode: SweepMode,
    pub resource_backends: Vec<Backend>,
    pub compilations: u64,
    /// nu = ceil(nu_scale t^2 / eps) when resources are counted with `dynamics.nu = auto`.
    pub nu_scale: f64,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let model = match raw.value("model.kind").unwrap_or("benchmark") {
            "benchmark" => {
                let b = BenchmarkConfig {
                    m: raw.required("model.m")?,
                    j: raw.required("model.J")?,
                    h: raw.required("model.h")?,
                    gamma: raw.required("model.gamma")?,
                    omega: parse_f64(raw.value("model.omega").unwrap_or("inf"))?,
                    t: raw.required("dynamics.t")?,
                    eps: raw.required("dynamics.eps")?,
                    periodic: raw.required("model.periodic")?,
                    env_h_strength: raw.required("model.env_strength")?,
                };
                for key in ["model.system_h", "model.env_h", "model.interaction_h", "model.K", "model.dt"] {
                    if raw.get(key).is_some() {
                        return Err(Error::Config(format!("{key} is only valid with model.kind = custom")));
                    }
                }
                ModelSource::Benchmark(b)
            }
            "custom" => {
                let read = |key: &str| -> Result<PauliSum> {
                    let path = raw.path(key)?;
                    let text = std::fs::read_to_string(&path)?;
                    PauliSum::parse(&text, None)
                };
                let system_h = read("model.system_h")?;
                let env_h = read("model.env_h")?;
                let interaction_h = read("model.interaction_h")?;
                let env_state = parse_env_state(raw, raw.value("model.env_state").unwrap_or("basis:0"), env_h.n())?;
                ModelSource::Custom(CustomModel {
                    system_h,
                    env_h,
                    interaction_h,
                    env_state,
                    k: raw.required("model.K")?,
                    dt: raw.required("model.dt")?,
                })
            }
            other => return Err(Error::Config(format!("model.kind must be benchmark or custom, got '{other}'"))),
        };
        let n = model.n();
        let observable = match raw.value("model.observable").unwrap_or("magnetization") {
            "magnetization" => ObservableChoice::Magnetization,
            _ => {
                let path = raw.path("model.observable")?;
                ObservableChoice::Pauli(PauliSum::parse(&std::fs::read_to_string(&path)?, Some(n))?)
            }
        };
        let initial_state = match raw.value("model.initial_state").unwrap_or("zero") {
            "zero" => InitialState::Zero,
            "mixed" => InitialState::Mixed,
            v if v.starts_with("basis:") => InitialState::Basis(
                v[6..].trim().parse().map_err(|_| Error::Config(format!("bad basis index in '{v}'")))?,
            ),
            v if v.starts_with("file:") => {
                let p = raw.base_dir.join(v[5..].trim());
                InitialState::Dense(
                    DensityMatrix::load(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                )
            }
            v => return Err(Error::Config(format!("model.initial_state '{v}' (zero, mixed, basis:<i>, file:<path>)"))),
        };

        let eps: f64 = raw.required("dynamics.eps")?;
        let delta: f64 = raw.required("dynamics.delta")?;
        if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("eps = {eps} and delta = {delta} must lie in (0, 1)")));
        }
        let nu = match raw.value("dynamics.nu").unwrap_or("auto") {
            "auto" => NuChoice::Auto,
            v => NuChoice::Fixed(
                v.parse()
                    .map_err(|_| Error::Config(format!("dynamics.nu must be auto or a positive integer, got '{v}'")))?,
            ),
        };
        if nu == NuChoice::Fixed(0) {
            return Err(Error::Config("dynamics.nu must be at least 1".into()));
        }
        let t: f64 = raw.required("dynamics.t")?;
        let times = raw.list::<String>("dynamics.times")?.iter().map(|s| parse_f64(s)).collect::<Result<Vec<_>>>()?;
        let p: Option<f64> = raw.parse("dynamics.p")?;
        if let Some(p) = p {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("dynamics.p = {p} outside [0, 1]")));
            }
        }
        let options = BackendOptions {
            steps: raw.parse("backend.steps")?,
            qdrift_n: raw.parse("backend.N")?,
            r: raw.parse("backend.r")?,
            q: raw.parse("backend.q")?,
            c_r: raw.required("backend.c_r")?,
            strategy: raw.required::<StepStrategy>("backend.strategy")?,
        };
        let backend: Backend = raw.required("dynamics.backend")?;
        let sweep_backends = match raw.list::<Backend>("sweep.backends")? {
            v if v.is_empty() => vec![backend],
            v => v,
        };
        let sweep_mode = match raw.value("sweep.mode").unwrap_or("estimate") {
            "estimate" => SweepMode::Estimate,
            "resources" => SweepMode::Resources,
            v => return Err(Error::Config(format!("sweep.mode must be estimate or resources, got '{v}'"))),
        };
        Ok(ExperimentConfig {
            model,
            observable,
            initial_state,
            t,
            eps,
            delta,
            nu,
            backend,
            measurement: raw.required("dynamics.measurement")?,
            p,
            times: if times.is_empty() { vec![t] } else { times },
            options,
            seed: raw.required("execution.seed")?,
            workers: raw.parse("execution.workers")?,
            runs: raw.parse("execution.T")?,
            dense_limit: raw.parse("execution.dense_limit")?,
            out_dir: raw.base_dir.join(raw.value("output.dir").unwrap_or(".")),
            samples: raw.required("output.samples")?,
            sweep_axis: raw.parse("sweep.axis")?,
            sweep_values: raw.list::<String>("sweep.values")?.iter().map(|s| parse_f64(s)).collect::<Result<_>>()?,
            sweep_backends,
            sweep_mode,
            resource_backends: raw.list("resources.backends")?,
            compilations: raw.required("resources.compilations")?,
            nu_scale: raw.required("resources.nu_scale")?,
            hash: raw.hash(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_raw(&RawConfig::load(path)?)
    }
}

fn parse_env_state(raw: &RawConfig, v: &str, width: usize) -> Result<EnvState> {
    if let Some(w) = v.strip_prefix("thermal:") {
        if width != 1 {
            return Err(Error::Config("thermal env states are single-qubit".into()));
        }
        return Ok(EnvState::Thermal { omega: parse_f64(w)? });
    }
    if let Some(i) = v.strip_prefix("basis:") {
        let index = i.trim().parse().map_err(|_| Error::Config(format!("bad basis index in '{v}'")))?;
        if index >= 1 << width {
            return Err(Error::Config(format!("basis index {index} outside a {width}-qubit env")));
        }
        return Ok(EnvState::Basis { width, index });
    }
    if let Some(f) = v.strip_prefix("file:") {
        let p = raw.base_dir.join(f.trim());
        let d = DensityMatrix::load(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        if d.n() != width {
            return Err(Error::Config(format!("env state file has {} qubits, env has {width}", d.n())));
        }
        return Ok(EnvState::Dense(d));
    }
    Err(Error::Config(format!("model.env_state '{v}' (thermal:<omega>, basis:<i>, file:<path>)")))
}
