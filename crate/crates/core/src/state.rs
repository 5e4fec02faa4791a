//! Dense density matrices. Qubit 0 is the most significant bit of the basis index.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, check_dense, eigh, hermiticity_residual, kron, Mat, C64};
use crate::pauli::{PauliString, PauliSum, Phase};

const IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    /// Apply when the control is |1>.
    OnOne,
    /// Apply when the control is |0>.
    OnZero,
}

/// Gate that can be wrapped by `apply_controlled`.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerGate {
    Pauli { pauli: PauliString, targets: Vec<usize> },
    Rotation { axis: PauliString, angle: f64, targets: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    data: Mat,
}

impl DensityMatrix {
    /// Wrap a square matrix of dimension 2^n. Hermiticity and unit trace are checked.
    pub fn from_matrix(data: Mat) -> Result<Self> {
        let d = data.nrows();
        if d != data.ncols() || !d.is_power_of_two() {
            return Err(Error::dim(format!("{}x{} is not a qubit register", d, data.ncols())));
        }
        let n = d.trailing_zeros() as usize;
        check_dense(n)?;
        let rho = DensityMatrix { n, data };
        rho.check_physical(1e-10)?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(data: Mat) -> Self {
        let n = data.nrows().trailing_zeros() as usize;
        DensityMatrix { n, data }
    }

    /// Computational basis state |index><index|.
    pub fn basis(n: usize, index: usize) -> Result<Self> {
        check_dense(n)?;
        let d = 1usize << n;
        if index >= d {
            return Err(Error::invalid(format!("basis index {index} out of range")));
        }
        let mut data = Mat::zeros(d, d);
        data[(index, index)] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { n, data })
    }

    pub fn zero_state(n: usize) -> Result<Self> {
        DensityMatrix::basis(n, 0)
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_dense(n)?;
        let d = 1usize << n;
        Ok(DensityMatrix { n, data: Mat::identity(d, d) / C64::new(d as f64, 0.0) })
    }

    /// |psi><psi| for a (not necessarily normalized) state vector.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::invalid("zero state vector"));
        }
        let v = nalgebra::DVector::from_column_slice(psi) / C64::new(norm2.sqrt(), 0.0);
        DensityMatrix::from_matrix(&v * v.adjoint())
    }

    /// Single-qubit |+><+|.
    pub fn plus() -> Self {
        let h = C64::new(0.5, 0.0);
        DensityMatrix { n: 1, data: Mat::from_element(2, 2, h) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn matrix(&self) -> &Mat {
        &self.data
    }

    pub fn into_matrix(self) -> Mat {
        self.data
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.data)
    }

    pub fn purity(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for j in 0..d {
            for i in 0..d {
                s += (self.data[(i, j)] * self.data[(j, i)]).re;
            }
        }
        s
    }

    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.data)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(&self.data).0.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Hermiticity and trace check; positivity is scanned only in debug builds.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let h = self.hermiticity_residual();
        if h > tol {
            return Err(Error::Numerical(format!("state not Hermitian (residual {h:.3e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::Numerical(format!("state trace is {tr}")));
        }
        if cfg!(debug_assertions) {
            let lo = self.min_eigenvalue();
            if lo < -1e-9 {
                return Err(Error::Numerical(format!("negative eigenvalue {lo:.3e}")));
            }
        }
        Ok(())
    }

    fn check_targets(&self, targets: &[usize], width: usize) -> Result<()> {
        if targets.len() != width {
            return Err(Error::dim(format!("{} targets for a {width}-qubit operator", targets.len())));
        }
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.n {
                return Err(Error::invalid(format!("target {t} out of range ({} qubits)", self.n)));
            }
            if targets[..i].contains(&t) {
                return Err(Error::invalid(format!("duplicate target {t}")));
            }
        }
        Ok(())
    }

    fn control_bit(&self, control: usize, targets: &[usize]) -> Result<u64> {
        if control >= self.n {
            return Err(Error::invalid(format!("control {control} out of range")));
        }
        if targets.contains(&control) {
            return Err(Error::invalid(format!("control {control} is also a target")));
        }
        Ok(1u64 << (self.n - 1 - control))
    }

    /// rho -> U rho U^dagger with U = a I + b P on the active subspace, where
    /// P|k> = base (-1)^{|zm & k|} |k ^ xm>.
    fn apply_affine(&mut self, a: C64, b: C64, xm: u64, zm: u64, base: Phase, ctrl: Option<(u64, bool)>) {
        let d = self.dim();
        let base = base.to_complex();
        let f = |k: usize| -> C64 {
            if (zm & k as u64).count_ones() % 2 == 1 {
                -base
            } else {
                base
            }
        };
        let active = |i: usize| match ctrl {
            None => true,
            Some((bit, on_one)) => ((i as u64 & bit) != 0) == on_one,
        };
        let x = xm as usize;
        let data = self.data.as_mut_slice();
        // Left multiplication acts on rows; storage is column-major.
        for j in 0..d {
            let col = &mut data[j * d..(j + 1) * d];
            for i in 0..d {
                if !active(i) {
                    continue;
                }
                if x == 0 {
                    col[i] *= a + b * f(i);
                } else if i < i ^ x {
                    let k = i ^ x;
                    let (ri, rk) = (col[i], col[k]);
                    col[i] = a * ri + b * f(k) * rk;
                    col[k] = a * rk + b * f(i) * ri;
                }
            }
        }
        let (ac, bc) = (a.conj(), b.conj());
        for j in 0..d {
            if !active(j) {
                continue;
            }
            if x == 0 {
                let s = ac + bc * f(j).conj();
                for v in &mut data[j * d..(j + 1) * d] {
                    *v *= s;
                }
            } else if j < j ^ x {
                let k = j ^ x;
                let (sjj, sjk) = (ac, bc * f(k).conj());
                let (skk, skj) = (ac, bc * f(j).conj());
                for i in 0..d {
                    let (vj, vk) = (data[j * d + i], data[k * d + i]);
                    data[j * d + i] = sjj * vj + sjk * vk;
                    data[k * d + i] = skk * vk + skj * vj;
                }
            }
        }
    }

    fn pauli_parts(&self, p: &PauliString, targets: &[usize]) -> (u64, u64, Phase) {
        let (xm, zm) = p.register_masks(targets, self.n);
        let base = p.phase() * Phase::from_exponent((xm & zm).count_ones() as i64);
        (xm, zm, base)
    }

    /// rho -> P rho P^dagger for the phased Pauli `p` placed on `targets`.
    pub fn apply_pauli(&mut self, p: &PauliString, targets: &[usize]) -> Result<()> {
        self.check_targets(targets, p.n())?;
        let (xm, zm, base) = self.pauli_parts(p, targets);
        self.apply_affine(C64::new(0.0, 0.0), C64::new(1.0, 0.0), xm, zm, base, None);
        Ok(())
    }

    /// rho -> e^{-i angle P} rho e^{+i angle P}.
    pub fn apply_pauli_rotation(&mut self, axis: &PauliString, angle: f64, targets: &[usize]) -> Result<()> {
        self.check_rotation(axis, angle)?;
        self.check_targets(targets, axis.n())?;
        let (xm, zm, base) = self.pauli_parts(axis, targets);
        let (s, c) = angle.sin_cos();
        self.apply_affine(C64::new(c, 0.0), C64::new(0.0, -s), xm, zm, base, None);
        Ok(())
    }

    fn check_rotation(&self, axis: &PauliString, angle: f64) -> Result<()> {
        if axis.phase() != Phase::ONE {
            return Err(Error::invalid(format!("rotation axis {axis} must have phase +1")));
        }
        if !angle.is_finite() {
            return Err(Error::invalid("non-finite rotation angle"));
        }
        Ok(())
    }

    /// Controlled version of `inner`. Phases of the inner gate become relative phases
    /// on the control qubit.
    pub fn apply_controlled(&mut self, inner: &InnerGate, control: usize, polarity: Polarity) -> Result<()> {
        let (a, b, p, targets) = match inner {
            InnerGate::Pauli { pauli, targets } => (C64::new(0.0, 0.0), C64::new(1.0, 0.0), pauli, targets),
            InnerGate::Rotation { axis, angle, targets } => {
                self.check_rotation(axis, *angle)?;
                let (s, c) = angle.sin_cos();
                (C64::new(c, 0.0), C64::new(0.0, -s), axis, targets)
            }
        };
        self.check_targets(targets, p.n())?;
        let bit = self.control_bit(control, targets)?;
        let (xm, zm, base) = self.pauli_parts(p, targets);
        self.apply_affine(a, b, xm, zm, base, Some((bit, polarity == Polarity::OnOne)));
        Ok(())
    }

    pub fn swap(&mut self, q1: usize, q2: usize) -> Result<()> {
        if q1 >= self.n || q2 >= self.n {
            return Err(Error::invalid("swap qubit out of range"));
        }
        if q1 == q2 {
            return Err(Error::invalid("swap needs two distinct qubits"));
        }
        let b1 = self.n - 1 - q1;
        let b2 = self.n - 1 - q2;
        let perm = |i: usize| {
            let (x1, x2) = (i >> b1 & 1, i >> b2 & 1);
            if x1 == x2 {
                i
            } else {
                i ^ (1 << b1) ^ (1 << b2)
            }
        };
        let d = self.dim();
        let old = self.data.clone();
        self.data = Mat::from_fn(d, d, |i, j| old[(perm(i), perm(j))]);
        Ok(())
    }

    /// rho -> U rho U^dagger for a full-register unitary.
    pub fn apply_unitary(&mut self, u: &Mat) -> Result<()> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::dim("unitary dimension differs from state"));
        }
        self.data = u * &self.data * u.adjoint();
        Ok(())
    }

    /// rho (x) env with the env qubits appended as least significant.
    pub fn tensor_append(&self, env: &DensityMatrix) -> Result<DensityMatrix> {
        check_dense(self.n + env.n)?;
        Ok(DensityMatrix { n: self.n + env.n, data: kron(&self.data, &env.data) })
    }

    /// Trace out the listed qubits.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<DensityMatrix> {
        if traced.is_empty() {
            return Err(Error::invalid("partial trace over no qubits"));
        }
        for (i, &t) in traced.iter().enumerate() {
            if t >= self.n {
                return Err(Error::invalid(format!("traced qubit {t} out of range")));
            }
            if traced[..i].contains(&t) {
                return Err(Error::invalid(format!("qubit {t} traced twice")));
            }
        }
        if traced.len() == self.n {
            return Err(Error::invalid("cannot trace out every qubit"));
        }
        let keep: Vec<usize> = (0..self.n).filter(|q| !traced.contains(q)).collect();
        let spread = |bits: usize, qubits: &[usize]| -> usize {
            let w = qubits.len();
            qubits
                .iter()
                .enumerate()
                .filter(|(k, _)| bits >> (w - 1 - k) & 1 == 1)
                .fold(0usize, |acc, (_, &q)| acc | 1 << (self.n - 1 - q))
        };
        let dk = 1usize << keep.len();
        let dt = 1usize << traced.len();
        let kept_idx: Vec<usize> = (0..dk).map(|a| spread(a, &keep)).collect();
        let traced_idx: Vec<usize> = (0..dt).map(|t| spread(t, traced)).collect();
        let out = Mat::from_fn(dk, dk, |a, b| {
            traced_idx.iter().map(|&t| self.data[(kept_idx[a] | t, kept_idx[b] | t)]).sum()
        });
        Ok(DensityMatrix { n: keep.len(), data: out })
    }

    /// Tr[O rho] with the imaginary residue checked and discarded.
    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        if obs.n != self.n {
            return Err(Error::dim(format!("{}-qubit observable on {}-qubit state", obs.n, self.n)));
        }
        let val = match &obs.kind {
            ObservableKind::Pauli(sum) => {
                let targets: Vec<usize> = (0..self.n).collect();
                let mut acc = C64::new(0.0, 0.0);
                for (c, p) in sum.terms() {
                    acc += self.pauli_trace(p, &targets) * *c;
                }
                acc
            }
            ObservableKind::Dense(o) => {
                let d = self.dim();
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..d {
                    for i in 0..d {
                        acc += o[(i, j)] * self.data[(j, i)];
                    }
                }
                acc
            }
        };
        if val.im.abs() > IMAG_TOL * obs.norm.max(1.0) {
            return Err(Error::Numerical(format!("expectation has imaginary part {:.3e}", val.im)));
        }
        Ok(val.re)
    }

    /// Tr[P rho] for a Pauli placed on `targets`.
    pub fn pauli_trace(&self, p: &PauliString, targets: &[usize]) -> C64 {
        let (xm, zm, base) = self.pauli_parts(p, targets);
        let base = base.to_complex();
        let x = xm as usize;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..self.dim() {
            let v = self.data[(k, k ^ x)];
            if (zm & k as u64).count_ones() % 2 == 1 {
                acc -= v;
            } else {
                acc += v;
            }
        }
        acc * base
    }

    /// Binary dump: little-endian u32 qubit count, then row-major (re, im) f64 pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n as u32).to_le_bytes())?;
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                let v = self.data[(i, j)];
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        check_dense(n)?;
        let d = 1usize << n;
        let mut data = Mat::zeros(d, d);
        let mut b8 = [0u8; 8];
        for i in 0..d {
            for j in 0..d {
                r.read_exact(&mut b8)?;
                let re = f64::from_le_bytes(b8);
                r.read_exact(&mut b8)?;
                let im = f64::from_le_bytes(b8);
                data[(i, j)] = C64::new(re, im);
            }
        }
        Ok(DensityMatrix { n, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        DensityMatrix::read_from(std::io::BufReader::new(f))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObservableKind {
    Pauli(PauliSum),
    Dense(Mat),
}

/// Hermitian observable with its spectral norm cached at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    n: usize,
    kind: ObservableKind,
    norm: f64,
}

impl Observable {
    pub fn from_pauli(sum: PauliSum) -> Result<Self> {
        if sum.is_empty() {
            return Err(Error::invalid("observable has no terms"));
        }
        let norm = linalg::spectral_norm(&sum.to_dense()?);
        Ok(Observable { n: sum.n(), kind: ObservableKind::Pauli(sum), norm })
    }

    pub fn from_dense(m: Mat) -> Result<Self> {
        let d = m.nrows();
        if d != m.ncols() || !d.is_power_of_two() || d < 2 {
            return Err(Error::dim("observable must be a 2^n square matrix"));
        }
        let r = hermiticity_residual(&m);
        if r > 1e-10 {
            return Err(Error::invalid(format!("observable not Hermitian (residual {r:.3e})")));
        }
        let norm = linalg::spectral_norm(&m);
        Ok(Observable { n: d.trailing_zeros() as usize, kind: ObservableKind::Dense(m), norm })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn kind(&self) -> &ObservableKind {
        &self.kind
    }

    pub fn to_dense(&self) -> Result<Mat> {
        match &self.kind {
            ObservableKind::Pauli(s) => s.to_dense(),
            ObservableKind::Dense(m) => Ok(m.clone()),
        }
    }

    /// sigma^x on a new leading qubit, tensored with this observable.
    pub fn with_ancilla_x(&self) -> Result<Observable> {
        let kind = match &self.kind {
            ObservableKind::Pauli(s) => {
                let x = PauliString::single(1, 0, crate::pauli::Axis::X);
                let terms = s.terms().iter().map(|(c, p)| Ok((*c, x.tensor(p)?))).collect::<Result<Vec<_>>>()?;
                ObservableKind::Pauli(PauliSum::from_terms(self.n + 1, terms)?)
            }
            ObservableKind::Dense(m) => {
                let one = C64::new(1.0, 0.0);
                let zero = C64::new(0.0, 0.0);
                let sx = Mat::from_row_slice(2, 2, &[zero, one, one, zero]);
                ObservableKind::Dense(kron(&sx, m))
            }
        };
        Ok(Observable { n: self.n + 1, kind, norm: self.norm })
    }
}

/// Born-rule sampler for one observable, built once from its eigendecomposition.
#[derive(Clone, Debug)]
pub struct ShotMeasurement {
    eigenvalues: Vec<f64>,
    eigenvectors: Mat,
}

impl ShotMeasurement {
    pub fn new(obs: &Observable) -> Result<Self> {
        let (eigenvalues, eigenvectors) = eigh(&obs.to_dense()?);
        Ok(ShotMeasurement { eigenvalues, eigenvectors })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Outcome probabilities <v_i| rho |v_i>, clipped at zero.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        if rho.dim() != self.eigenvectors.nrows() {
            return Err(Error::dim("measurement dimension differs from state"));
        }
        let rv = rho.matrix() * &self.eigenvectors;
        Ok((0..self.eigenvalues.len())
            .map(|k| {
                let v = self.eigenvectors.column(k);
                let p: C64 = v.iter().zip(rv.column(k).iter()).map(|(a, b)| a.conj() * b).sum();
                p.re.max(0.0)
            })
            .collect())
    }

    /// One eigenvalue drawn from the Born distribution given outcome probabilities.
    pub fn sample_with<R: Rng + ?Sized>(&self, probs: &[f64], rng: &mut R) -> f64 {
        let total: f64 = probs.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (k, p) in probs.iter().enumerate() {
            if u < *p {
                return self.eigenvalues[k];
            }
            u -= p;
        }
        let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1);
        self.eigenvalues[last]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rho: &DensityMatrix, rng: &mut R) -> Result<f64> {
        let probs = self.probabilities(rho)?;
        Ok(self.sample_with(&probs, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff};
    use crate::random::{random_density, random_pauli};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    /// Embed an operator on `targets` into the full register by permuting a Kronecker product.
    fn embed_dense(op: &Mat, targets: &[usize], n: usize) -> Mat {
        let rest: Vec<usize> = (0..n).filter(|q| !targets.contains(q)).collect();
        let full = kron(op, &identity(1 << rest.len()));
        let order: Vec<usize> = targets.iter().chain(rest.iter()).copied().collect();
        let d = 1usize << n;
        let to_local = |i: usize| -> usize {
            let mut out = 0;
            for (pos, &q) in order.iter().enumerate() {
                if i >> (n - 1 - q) & 1 == 1 {
                    out |= 1 << (n - 1 - pos);
                }
            }
            out
        };
        Mat::from_fn(d, d, |i, j| full[(to_local(i), to_local(j))])
    }

    #[test]
    fn x_flips_zero_state() {
        let mut rho = DensityMatrix::zero_state(1).unwrap();
        rho.apply_pauli(&p("X"), &[0]).unwrap();
        assert_eq!(rho, DensityMatrix::basis(1, 1).unwrap());
    }

    #[test]
    fn global_phase_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(2, &mut rng);
        let mut out = rho.clone();
        out.apply_pauli(&p("-II"), &[0, 1]).unwrap();
        assert!(max_abs_diff(rho.matrix(), out.matrix()) < 1e-15);
    }

    #[test]
    fn pauli_matches_dense_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let rho = random_density(3, &mut rng);
            let q = random_pauli(2, &mut rng);
            let targets = [2, 0];
            let u = embed_dense(&q.to_dense().unwrap(), &targets, 3);
            let expect = &u * rho.matrix() * u.adjoint();
            let mut got = rho.clone();
            got.apply_pauli(&q, &targets).unwrap();
            assert!(max_abs_diff(&expect, got.matrix()) < 1e-12);
            assert!((got.trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_examples_and_oracle() {
        let mut rho = DensityMatrix::zero_state(1).unwrap();
        rho.apply_pauli_rotation(&p("X"), 0.0, &[0]).unwrap();
        assert_eq!(rho, DensityMatrix::zero_state(1).unwrap());
        rho.apply_pauli_rotation(&p("X"), std::f64::consts::FRAC_PI_2, &[0]).unwrap();
        assert!(max_abs_diff(rho.matrix(), DensityMatrix::basis(1, 1).unwrap().matrix()) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rho = random_density(3, &mut rng);
            let axis = random_pauli(3, &mut rng).unsigned();
            let phi: f64 = rng.gen_range(-3.0..3.0);
            let u = crate::linalg::expm_hermitian(&axis.to_dense().unwrap(), phi);
            let expect = &u * rho.matrix() * u.adjoint();
            let mut got = rho.clone();
            got.apply_pauli_rotation(&axis, phi, &[0, 1, 2]).unwrap();
            assert!(max_abs_diff(&expect, got.matrix()) < 1e-12);
        }
        assert!(rho.clone().apply_pauli_rotation(&p("-X"), 0.1, &[0]).is_err());
    }

    #[test]
    fn controlled_examples() {
        let mut rho = DensityMatrix::zero_state(2).unwrap();
        let inner = InnerGate::Pauli { pauli: p("X"), targets: vec![1] };
        rho.apply_controlled(&inner, 0, Polarity::OnOne).unwrap();
        assert_eq!(rho, DensityMatrix::zero_state(2).unwrap());

        let minus = DensityMatrix::from_pure(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]).unwrap();
        let mut plus = DensityMatrix::plus();
        let neg = InnerGate::Pauli { pauli: PauliString::identity(0).with_phase(Phase::MINUS_ONE), targets: vec![] };
        plus.apply_controlled(&neg, 0, Polarity::OnOne).unwrap();
        assert!(max_abs_diff(plus.matrix(), minus.matrix()) < 1e-15);

        let mut two = DensityMatrix::plus().tensor_append(&DensityMatrix::zero_state(1).unwrap()).unwrap();
        let neg = InnerGate::Pauli { pauli: p("-I"), targets: vec![1] };
        two.apply_controlled(&neg, 0, Polarity::OnOne).unwrap();
        let ctrl = two.partial_trace(&[1]).unwrap();
        assert!(max_abs_diff(ctrl.matrix(), minus.matrix()) < 1e-15);
    }

    #[test]
    fn controlled_matches_block_diagonal_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let rho = random_density(3, &mut rng);
            let q = random_pauli(2, &mut rng);
            let targets = vec![2, 0];
            let control = 1;
            let polarity = if trial % 2 == 0 { Polarity::OnOne } else { Polarity::OnZero };
            let (inner, u_small) = if trial % 4 < 2 {
                (InnerGate::Pauli { pauli: q.clone(), targets: targets.clone() }, q.to_dense().unwrap())
            } else {
                let axis = q.unsigned();
                let phi = rng.gen_range(-2.0..2.0);
                let u = crate::linalg::expm_hermitian(&axis.to_dense().unwrap(), phi);
                (InnerGate::Rotation { axis, angle: phi, targets: targets.clone() }, u)
            };
            let u_full = embed_dense(&u_small, &targets, 3);
            let d = 8;
            let bit = 1 << (3 - 1 - control);
            let on = |i: usize| ((i & bit) != 0) == (polarity == Polarity::OnOne);
            let cu = Mat::from_fn(d, d, |i, j| {
                if on(i) && on(j) {
                    u_full[(i, j)]
                } else if i == j && !on(i) {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let expect = &cu * rho.matrix() * cu.adjoint();
            let mut got = rho.clone();
            got.apply_controlled(&inner, control, polarity).unwrap();
            assert!(max_abs_diff(&expect, got.matrix()) < 1e-12);
        }
    }

    #[test]
    fn control_collision_rejected() {
        let mut rho = DensityMatrix::zero_state(2).unwrap();
        let inner = InnerGate::Pauli { pauli: p("X"), targets: vec![1] };
        assert!(rho.apply_controlled(&inner, 1, Polarity::OnOne).is_err());
        assert!(rho.apply_pauli(&p("XX"), &[0, 0]).is_err());
        assert!(rho.apply_pauli(&p("X"), &[2]).is_err());
    }

    #[test]
    fn tensor_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_density(2, &mut rng);
        let b = random_density(1, &mut rng);
        let ab = a.tensor_append(&b).unwrap();
        assert!(max_abs_diff(ab.matrix(), &kron(a.matrix(), b.matrix())) < 1e-15);
        assert!(max_abs_diff(ab.partial_trace(&[2]).unwrap().matrix(), a.matrix()) < 1e-12);
        assert!(max_abs_diff(ab.partial_trace(&[0, 1]).unwrap().matrix(), b.matrix()) < 1e-12);

        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        let both = mixed.tensor_append(&mixed).unwrap();
        assert!(max_abs_diff(both.matrix(), DensityMatrix::maximally_mixed(2).unwrap().matrix()) < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let bell = DensityMatrix::from_pure(&[C64::new(s, 0.0), z, z, C64::new(s, 0.0)]).unwrap();
        let red = bell.partial_trace(&[1]).unwrap();
        assert!(max_abs_diff(red.matrix(), mixed.matrix()) < 1e-15);
        assert!(bell.partial_trace(&[0, 1]).is_err());
        assert!(bell.partial_trace(&[]).is_err());
    }

    #[test]
    fn partial_trace_matches_index_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_density(3, &mut rng);
        // Trace qubit 1 by explicit index summation: i = (a, t, c).
        let mut expect = Mat::zeros(4, 4);
        for a in 0..2 {
            for c in 0..2 {
                for a2 in 0..2 {
                    for c2 in 0..2 {
                        for t in 0..2 {
                            let i = a << 2 | t << 1 | c;
                            let j = a2 << 2 | t << 1 | c2;
                            expect[(a << 1 | c, a2 << 1 | c2)] += rho.matrix()[(i, j)];
                        }
                    }
                }
            }
        }
        let got = rho.partial_trace(&[1]).unwrap();
        assert!(max_abs_diff(&expect, got.matrix()) < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let z = Observable::from_pauli(PauliSum::parse("1 Z", None).unwrap()).unwrap();
        assert_eq!(DensityMatrix::zero_state(1).unwrap().expectation(&z).unwrap(), 1.0);
        assert_eq!(DensityMatrix::maximally_mixed(1).unwrap().expectation(&z).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_density(2, &mut rng);
        let h = crate::random::random_pauli_sum(2, 4, &mut rng);
        let obs = Observable::from_pauli(h.clone()).unwrap();
        let dense = Observable::from_dense(h.to_dense().unwrap()).unwrap();
        let oracle = (h.to_dense().unwrap() * rho.matrix()).trace().re;
        assert!((rho.expectation(&obs).unwrap() - oracle).abs() < 1e-12);
        assert!((rho.expectation(&dense).unwrap() - oracle).abs() < 1e-12);
        assert!((obs.norm() - dense.norm()).abs() < 1e-12);
        assert!(DensityMatrix::zero_state(1).unwrap().expectation(&obs).is_err());
    }

    #[test]
    fn ancilla_x_observable() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = crate::random::random_pauli_sum(1, 2, &mut rng);
        let obs = Observable::from_pauli(h.clone()).unwrap();
        let ax = obs.with_ancilla_x().unwrap();
        let dx = Observable::from_dense(h.to_dense().unwrap()).unwrap().with_ancilla_x().unwrap();
        assert!(max_abs_diff(&ax.to_dense().unwrap(), &dx.to_dense().unwrap()) < 1e-15);
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = random_density(2, &mut rng);
        let mut buf = Vec::new();
        rho.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 16 * 16);
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
        // First off-diagonal element in row-major order is (0, 1).
        let re = f64::from_le_bytes(buf[20..28].try_into().unwrap());
        assert_eq!(re, rho.matrix()[(0, 1)].re);
        let back = DensityMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn shot_sampling_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rho = random_density(1, &mut rng);
        let obs = Observable::from_pauli(PauliSum::parse("0.6 X\n0.8 Z", None).unwrap()).unwrap();
        let m = ShotMeasurement::new(&obs).unwrap();
        let probs = m.probabilities(&rho).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| m.sample_with(&probs, &mut rng)).sum::<f64>() / n as f64;
        let exact = rho.expectation(&obs).unwrap();
        assert!((mean - exact).abs() < 3.0 * 1.0 / (n as f64).sqrt() * 1.5);
    }
}
