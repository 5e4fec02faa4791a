//! Acceptance suite shared by `collidesim validate` and the integration tests.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::CostModel;
use crate::collision::{
    exact_k_collision, exact_nonmarkov, lindblad_collision_spec, suggest_nu, Collision, CollisionSpec, EnvState, Jump,
    JumpOp, LindbladModel, NonMarkovSpec, NU_START,
};
use crate::error::Result;
use crate::estimator::{estimate, hoeffding_t, mean_resources, Dynamics, EstimateConfig, Measurement};
use crate::hamsim::{choose_lcu_q, lcu_enumerate, Backend, BackendOptions, LcuParams};
use crate::linalg::{expm_hermitian, identity, kron, spectral_norm, Mat, C64};
use crate::models::{benchmark_spec, magnetization, BenchmarkConfig};
use crate::oracles::{lindblad_evolve, trace_distance, unitary_exact, StinespringChannel};
use crate::pauli::PauliSum;
use crate::random::{random_density, random_hermitian, random_pauli_sum, random_unitary};
use crate::state::{DensityMatrix, Observable};

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {} ({:.2} s, limit {} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        )
    }
}

pub const CRITERIA: [(u8, &str, u64); 9] = [
    (1, "exact-map equivalence", 1),
    (2, "LCU truncation bound", 30),
    (3, "estimator unbiasedness", 120),
    (4, "Hoeffding coverage", 600),
    (5, "Lindblad convergence", 60),
    (6, "reduced benchmark", 300),
    (7, "resource trends", 600),
    (8, "non-Markovian reductions", 30),
    (9, "channel perturbation bounds", 30),
];

/// Run one criterion; numerical errors count as failures with the error as detail.
pub fn run_criterion(id: u8) -> Option<CriterionResult> {
    let &(id, name, limit) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let outcome = match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        _ => criterion_9(),
    };
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(limit);
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Some(CriterionResult { id, name, passed: ok && elapsed < limit, detail, elapsed, limit })
}

pub fn run_all() -> Vec<CriterionResult> {
    CRITERIA.iter().filter_map(|c| run_criterion(c.0)).collect()
}

type Outcome = Result<(bool, String)>;

fn z_obs() -> Observable {
    Observable::from_pauli(PauliSum::parse("1 Z", None).expect("literal")).expect("literal")
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Smallest c with P(X > c) <= alpha for X ~ Binomial(n, p).
pub fn binomial_critical(n: u64, p: f64, alpha: f64) -> u64 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut cdf = pmf;
    let mut c = 0;
    while 1.0 - cdf > alpha && c < n {
        pmf *= (n - c) as f64 / (c + 1) as f64 * p / (1.0 - p);
        c += 1;
        cdf += pmf;
    }
    c
}

/// Random 2-qubit system, 1-qubit env collisions used by several criteria.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize, dt: f64) -> Result<CollisionSpec> {
    let hs = random_pauli_sum(n, 3, rng);
    let collisions = (0..k)
        .map(|_| {
            Ok(Arc::new(Collision::new(
                hs.clone(),
                random_pauli_sum(1, 2, rng),
                random_pauli_sum(n + 1, 3, rng),
                EnvState::Dense(random_density(1, rng)),
            )?))
        })
        .collect::<Result<Vec<_>>>()?;
    CollisionSpec::new(hs, collisions, dt)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let spec = random_instance(&mut rng, 2, 5, 0.3)?;
    let rho = random_density(2, &mut rng);
    // Oracle Hamiltonian assembled by Kronecker products of the dense parts.
    let mut manual = rho.clone();
    for c in &spec.collisions {
        let h = kron(&c.system_h.to_dense()?, &identity(2))
            + kron(&identity(4), &c.env_h.to_dense()?)
            + c.interaction_h.to_dense()?;
        let u = expm_hermitian(&h, spec.dt);
        let mut joint = manual.tensor_append(&c.env_state.density()?)?;
        joint.apply_unitary(&u)?;
        manual = joint.partial_trace(&[2])?;
    }
    let d = trace_distance(&exact_k_collision(&spec, &rho)?, &manual)?;
    Ok((d <= 1e-10, format!("trace distance {d:.3e} <= 1e-10")))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_err: f64 = 0.0;
    let mut worst_alpha: f64 = f64::NEG_INFINITY;
    let mut ok = true;
    for _ in 0..5 {
        let h = random_pauli_sum(2, 4, &mut rng).normalize()?;
        for tau in [0.3, 0.7] {
            for r in [2u64, 4] {
                let q = choose_lcu_q(tau, r, 1e-3)?;
                let params = LcuParams::new(tau, r, q)?;
                let approx = lcu_enumerate(&h, &params)?;
                let err = spectral_norm(&(unitary_exact(h.sum(), tau)? - approx));
                let slack = params.alpha_total - (tau * tau / r as f64).exp();
                worst_err = worst_err.max(err);
                worst_alpha = worst_alpha.max(slack);
                ok &= err <= 1e-3 && slack <= 1e-9;
            }
        }
    }
    Ok((ok, format!("max ||U - U~|| = {worst_err:.3e} <= 1e-3, max alpha - e^(tau^2/r) = {worst_alpha:.3e}")))
}

/// 1-qubit system, thermal 1-qubit env, K = 2.
fn small_instance(dt: f64) -> Result<CollisionSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let hs = random_pauli_sum(1, 2, &mut rng);
    let c = Collision::new(
        hs.clone(),
        PauliSum::parse("0.5 Z", None)?,
        random_pauli_sum(2, 3, &mut rng),
        EnvState::Thermal { omega: 1.0 },
    )?;
    let c = Arc::new(c);
    CollisionSpec::new(hs, vec![c; 2], dt)
}

fn criterion_3() -> Outcome {
    let spec = small_instance(0.5)?;
    let rho = DensityMatrix::basis(1, 1)?;
    let obs = z_obs();
    let exact = exact_k_collision(&spec, &rho)?.expectation(&obs)?;
    let cfg = EstimateConfig { backend: Backend::Salcu, eps: 0.02, runs: Some(100_000), seed: 3, ..Default::default() };
    let rep = estimate(Dynamics::Markov(&spec), &rho, &obs, &cfg)?;
    let dev = (rep.mu - exact).abs();
    let ok = dev <= 3.0 * rep.stderr && dev <= 0.02;
    Ok((ok, format!("|mu - exact| = {dev:.3e}, 3 sigma = {:.3e}, zeta = {:.4}", 3.0 * rep.stderr, rep.zeta)))
}

fn criterion_4() -> Outcome {
    // Shorter collisions keep zeta near 1 and the Hoeffding count near 2400.
    let spec = small_instance(0.2)?;
    let rho = DensityMatrix::basis(1, 1)?;
    let obs = z_obs();
    let exact = exact_k_collision(&spec, &rho)?.expectation(&obs)?;
    let (eps, delta, trials) = (0.1, 0.1, 200u64);
    let mut failures = 0;
    let mut t = 0;
    for i in 0..trials {
        let cfg = EstimateConfig {
            backend: Backend::Salcu,
            eps,
            delta,
            measurement: Measurement::Shot,
            seed: 4_000 + i,
            ..Default::default()
        };
        let rep = estimate(Dynamics::Markov(&spec), &rho, &obs, &cfg)?;
        t = rep.t;
        if rep.t != hoeffding_t(1.0, eps, delta, rep.zeta)? {
            return Ok((false, "run count differs from the Hoeffding count".into()));
        }
        if (rep.mu - exact).abs() > eps {
            failures += 1;
        }
    }
    let critical = binomial_critical(trials, delta, 0.01);
    Ok((failures <= critical, format!("{failures}/{trials} misses (critical {critical}), T = {t}")))
}

fn damping_model() -> Result<LindbladModel> {
    LindbladModel::new(1, PauliSum::new(1), vec![Jump { op: JumpOp::Lower(0), gamma: 1.0 }], f64::INFINITY, 1.0)
}

fn criterion_5() -> Outcome {
    let model = damping_model()?;
    let rho = DensityMatrix::basis(1, 1)?;
    let target = 1.0 - 2.0 * (-1.0f64).exp();
    let nus = [8u64, 16, 32, 64];
    let errs = nus
        .iter()
        .map(|&nu| {
            Ok((exact_k_collision(&lindblad_collision_spec(&model, 1.0, nu)?, &rho)?.expectation(&z_obs())? - target)
                .abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = nus.iter().map(|&v| v as f64).collect();
    let slope = loglog_slope(&xs, &errs);
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    Ok(((slope + 1.0).abs() <= 0.3, format!("errors [{}], slope {slope:.3}", shown.join(", "))))
}

fn criterion_6() -> Outcome {
    let cfg = BenchmarkConfig { m: 4, j: 1.0, h: 0.1, gamma: 1.0, t: 1.0, eps: 0.01, ..BenchmarkConfig::desk() };
    let (model, _) = benchmark_spec(&cfg, 1)?;
    let rho = DensityMatrix::zero_state(4)?;
    let obs = magnetization(4)?;
    let search = suggest_nu(&model, cfg.t, &rho, &obs, cfg.eps, NU_START, 1 << 14)?;
    let value = search.trace.last().expect("nonempty trace").value;
    let oracle = lindblad_evolve(&model, &rho, cfg.t, 1e-10)?.expectation(&obs)?;
    let dev = (value - oracle).abs();
    Ok((dev <= 0.01, format!("nu = {}, M_z = {value:.6}, oracle = {oracle:.6}, |diff| = {dev:.3e}", search.nu)))
}

/// Per-run CNOT means for the m = 4 benchmark with nu = ceil(1/eps).
pub fn resource_trend(backend: Backend, eps_values: &[f64], seed: u64) -> Result<Vec<f64>> {
    let cfg = BenchmarkConfig::desk();
    eps_values
        .iter()
        .map(|&eps| {
            let nu = (1.0 / eps).ceil() as u64;
            let (_, spec) = benchmark_spec(&cfg, nu)?;
            let r = mean_resources(
                Dynamics::Markov(&spec),
                backend,
                eps,
                1.0,
                &BackendOptions::default(),
                4,
                seed,
                CostModel::default(),
            )?;
            Ok(r.cnot_mean)
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let eps = [1e-1, 1e-2, 1e-3];
    let inv: Vec<f64> = eps.iter().map(|e| 1.0 / e).collect();
    let targets =
        [(Backend::Trotter1, 2.0), (Backend::Qdrift, 2.0), (Backend::Trotter2k(1), 1.25), (Backend::Salcu, 1.0)];
    let mut ok = true;
    let mut detail = Vec::new();
    let mut finest = Vec::new();
    for (backend, want) in targets {
        let counts = resource_trend(backend, &eps, 7)?;
        let slope = loglog_slope(&inv, &counts);
        ok &= (slope - want).abs() <= 0.35;
        detail.push(format!("{backend} slope {slope:.2} (target {want})"));
        finest.push((backend, counts[2]));
    }
    let at = |b: Backend| finest.iter().find(|(x, _)| *x == b).map(|(_, c)| *c).unwrap_or(f64::NAN);
    let (s, t2, q) = (at(Backend::Salcu), at(Backend::Trotter2k(1)), at(Backend::Qdrift));
    ok &= s < t2 && t2 < q;
    detail.push(format!("at 1e-3: salcu {s:.3e} < trotter2k:1 {t2:.3e} < qdrift {q:.3e}"));
    Ok((ok, detail.join("; ")))
}

fn exchange(p: f64, k: usize, coupled: bool) -> Result<NonMarkovSpec> {
    let hi = if coupled { PauliSum::parse("1 XX\n1 YY", None)? } else { PauliSum::new(2) };
    let base =
        CollisionSpec::uniform(PauliSum::new(1), PauliSum::new(1), hi, EnvState::Basis { width: 1, index: 0 }, k, 0.6)?;
    NonMarkovSpec::new(base, p)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let spec = random_instance(&mut rng, 2, 4, 0.5)?;
    let rho = random_density(2, &mut rng);
    let d0 = trace_distance(
        &exact_nonmarkov(&NonMarkovSpec::new(spec.clone(), 0.0)?, &rho)?,
        &exact_k_collision(&spec, &rho)?,
    )?;

    // Decoupled two-collision run with a rotating first env: after the swap the second register
    // holds exactly the first env's evolved state.
    let env_h = PauliSum::parse("0.7 X", None)?;
    let hs = PauliSum::new(1);
    let first = Collision::new(hs.clone(), env_h, PauliSum::new(2), EnvState::Basis { width: 1, index: 1 })?;
    let u = first.unitary(0.5)?;
    let rho_s = DensityMatrix::zero_state(1)?;
    let mut joint = rho_s.tensor_append(&DensityMatrix::basis(1, 1)?)?;
    joint.apply_unitary(&u)?;
    let e1 = joint.partial_trace(&[0])?;
    let mut swapped = joint.tensor_append(&DensityMatrix::basis(1, 0)?)?;
    swapped.swap(1, 2)?;
    let e2 = swapped.partial_trace(&[0, 1])?;
    let transfer = trace_distance(&e1, &e2)?;
    let second =
        Collision::new(hs.clone(), PauliSum::new(1), PauliSum::new(2), EnvState::Basis { width: 1, index: 0 })?;
    let nm = NonMarkovSpec::new(CollisionSpec::new(hs, vec![Arc::new(first), Arc::new(second)], 0.5)?, 1.0)?;
    let untouched = trace_distance(&exact_nonmarkov(&nm, &rho_s)?, &rho_s)?;

    let one = DensityMatrix::basis(1, 1)?;
    let witness = trace_distance(
        &exact_nonmarkov(&exchange(0.5, 4, true)?, &one)?,
        &exact_nonmarkov(&exchange(0.0, 4, true)?, &one)?,
    )?;
    let ok = d0 <= 1e-10 && transfer <= 1e-10 && untouched <= 1e-10 && witness > 1e-3;
    Ok((ok, format!("p=0 gap {d0:.2e}, swap transfer {transfer:.2e}, memory witness {witness:.4}")))
}

fn random_channel(rng: &mut ChaCha8Rng) -> StinespringChannel {
    StinespringChannel { u: random_unitary(2, rng), env: random_density(1, rng) }
}

/// Unitary within spectral distance of about `scale` of `u`.
fn perturb(u: &Mat, scale: f64, rng: &mut ChaCha8Rng) -> Mat {
    let d = u.nrows().trailing_zeros() as usize;
    let h = random_hermitian(d, rng);
    let h = &h / C64::new(spectral_norm(&h), 0.0);
    u * expm_hermitian(&h, scale)
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    // Two-qubit unitaries act on system + env; the single-qubit system state is the channel input.
    let (mut a2, mut a3, mut a4) = (0, 0, 0);
    for _ in 0..100 {
        // Unitary perturbation bound on expectation values.
        let p = random_unitary(2, &mut rng);
        let q = perturb(&p, rng.gen_range(0.0..0.5), &mut rng);
        let gamma = spectral_norm(&(&p - &q));
        let rho = random_density(2, &mut rng);
        let o = Observable::from_dense(random_hermitian(2, &mut rng))?;
        let mut pr = rho.clone();
        pr.apply_unitary(&p)?;
        let mut qr = rho.clone();
        qr.apply_unitary(&q)?;
        if gamma <= 1.0 && (pr.expectation(&o)? - qr.expectation(&o)?).abs() <= 3.0 * gamma * o.norm() + 1e-12 {
            a2 += 1;
        }

        // Composition of K close channels.
        let k = rng.gen_range(2..6);
        let mut delta: f64 = 0.0;
        let mut pairs = Vec::new();
        for _ in 0..k {
            let a = random_channel(&mut rng);
            let b = StinespringChannel { u: perturb(&a.u, rng.gen_range(0.0..0.2), &mut rng), env: a.env.clone() };
            delta = delta.max(2.0 * spectral_norm(&(&a.u - &b.u)));
            pairs.push((a, b));
        }
        let mut x = random_density(1, &mut rng);
        let mut y = x.clone();
        for (a, b) in &pairs {
            x = a.apply(&x)?;
            y = b.apply(&y)?;
        }
        if trace_distance(&x, &y)? <= k as f64 * delta + 1e-12 {
            a3 += 1;
        }

        // Unitary after channel.
        let (ca, cb) = (random_channel(&mut rng), random_channel(&mut rng));
        let u = random_unitary(1, &mut rng);
        let ut = perturb(&u, rng.gen_range(0.0..0.5), &mut rng);
        let rho = random_density(1, &mut rng);
        let (mut l, mut r) = (ca.apply(&rho)?, cb.apply(&rho)?);
        let inner = trace_distance(&l, &r)?;
        l.apply_unitary(&u)?;
        r.apply_unitary(&ut)?;
        if trace_distance(&l, &r)? <= 2.0 * spectral_norm(&(&u - &ut)) + inner + 1e-12 {
            a4 += 1;
        }
    }
    Ok((
        a2 == 100 && a3 == 100 && a4 == 100,
        format!("3 gamma ||O||: {a2}/100, K delta: {a3}/100, 2||U-U~|| + ||A-B||: {a4}/100"),
    ))
}
