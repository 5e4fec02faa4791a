//! Phase-exact Pauli strings over at most 64 qubits and positive-weight Pauli sums.
//!
//! A string is stored as an x-mask and a z-mask (bit `q` describes qubit `q`) plus a phase
//! in Z4. The operator for masks (x, z) is `i^{|x & z|} X^x Z^z`, so `Y` is `x = z = 1`.

use std::collections::HashMap;
use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{check_dense, Mat, C64};

pub const MAX_QUBITS: usize = 64;

/// Unit phase `i^k`, k in 0..4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: i64) -> Phase {
        Phase(k.rem_euclid(4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0.is_multiple_of(2)
    }

    pub fn conj(self) -> Phase {
        Phase((4 - self.0) % 4)
    }

    pub fn to_complex(self) -> C64 {
        match self.0 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        }
    }

    fn prefix(self) -> &'static str {
        match self.0 {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    I,
    X,
    Y,
    Z,
}

impl Axis {
    fn bits(self) -> (bool, bool) {
        match self {
            Axis::I => (false, false),
            Axis::X => (true, false),
            Axis::Y => (true, true),
            Axis::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Axis {
        match (x, z) {
            (false, false) => Axis::I,
            (true, false) => Axis::X,
            (true, true) => Axis::Y,
            (false, true) => Axis::Z,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Axis::I => 'I',
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }

    pub fn from_letter(ch: char) -> Option<Axis> {
        match ch {
            'I' => Some(Axis::I),
            'X' => Some(Axis::X),
            'Y' => Some(Axis::Y),
            'Z' => Some(Axis::Z),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
    phase: Phase,
}

#[inline]
fn pc(v: u64) -> i64 {
    v.count_ones() as i64
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_QUBITS, "at most {MAX_QUBITS} qubits");
        PauliString { n, x: 0, z: 0, phase: Phase::ONE }
    }

    pub fn new(phase: Phase, axes: &[Axis]) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_QUBITS {
            return Err(Error::invalid(format!("pauli string needs 1..={MAX_QUBITS} axes, got {}", axes.len())));
        }
        let mut p = PauliString::identity(axes.len());
        for (q, a) in axes.iter().enumerate() {
            p.set_axis(q, *a);
        }
        p.phase = phase;
        Ok(p)
    }

    /// Build from raw masks (bit `q` = qubit `q`).
    pub fn from_masks(n: usize, x: u64, z: u64, phase: Phase) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::invalid(format!("at most {MAX_QUBITS} qubits")));
        }
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        if (x | z) & !mask != 0 {
            return Err(Error::invalid("mask bits beyond qubit count"));
        }
        Ok(PauliString { n, x, z, phase })
    }

    /// Single non-identity axis on qubit `q` of an `n`-qubit register.
    pub fn single(n: usize, q: usize, axis: Axis) -> Self {
        assert!(q < n, "qubit {q} out of range for {n} qubits");
        let mut p = PauliString::identity(n);
        p.set_axis(q, axis);
        p
    }

    fn set_axis(&mut self, q: usize, a: Axis) {
        let (bx, bz) = a.bits();
        let bit = 1u64 << q;
        self.x = (self.x & !bit) | if bx { bit } else { 0 };
        self.z = (self.z & !bit) | if bz { bit } else { 0 };
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(&self, phase: Phase) -> Self {
        PauliString { phase, ..self.clone() }
    }

    /// Same axes with phase +1.
    pub fn unsigned(&self) -> Self {
        self.with_phase(Phase::ONE)
    }

    pub fn axis(&self, q: usize) -> Axis {
        Axis::from_bits(self.x >> q & 1 == 1, self.z >> q & 1 == 1)
    }

    pub fn axes(&self) -> Vec<Axis> {
        (0..self.n).map(|q| self.axis(q)).collect()
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| (self.x | self.z) >> q & 1 == 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// Axis word without phase, e.g. `XZIY`.
    pub fn word(&self) -> String {
        (0..self.n).map(|q| self.axis(q).letter()).collect()
    }

    /// Group product `self * other` with exact phase.
    pub fn mul(&self, other: &PauliString) -> Result<PauliString> {
        if self.n != other.n {
            return Err(Error::dim(format!("pauli product of {} and {} qubits", self.n, other.n)));
        }
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let k = pc(self.x & self.z) + pc(other.x & other.z) + 2 * pc(self.z & other.x) - pc(x & z);
        let phase = self.phase * other.phase * Phase::from_exponent(k);
        Ok(PauliString { n: self.n, x, z, phase })
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        (pc(self.x & other.z) + pc(self.z & other.x)) % 2 == 0
    }

    /// Masks in register index space for `targets`, where qubit `t` of a `total`-qubit
    /// register sits at index bit `total - 1 - t`.
    pub fn register_masks(&self, targets: &[usize], total: usize) -> (u64, u64) {
        let mut xm = 0u64;
        let mut zm = 0u64;
        for (q, &t) in targets.iter().enumerate() {
            let bit = 1u64 << (total - 1 - t);
            if self.x >> q & 1 == 1 {
                xm |= bit;
            }
            if self.z >> q & 1 == 1 {
                zm |= bit;
            }
        }
        (xm, zm)
    }

    /// Place this string on qubits `map[q]` of a `new_n`-qubit register.
    pub fn embed(&self, new_n: usize, map: &[usize]) -> Result<PauliString> {
        if map.len() != self.n {
            return Err(Error::dim("embedding map length differs from qubit count"));
        }
        let mut out = PauliString::identity(new_n);
        for (q, &t) in map.iter().enumerate() {
            if t >= new_n {
                return Err(Error::invalid(format!("embed target {t} out of range")));
            }
            out.set_axis(t, self.axis(q));
        }
        out.phase = self.phase;
        Ok(out)
    }

    /// `self` on the first qubits, `other` on the following ones.
    pub fn tensor(&self, other: &PauliString) -> Result<PauliString> {
        let n = self.n + other.n;
        if n > MAX_QUBITS {
            return Err(Error::invalid("tensor product exceeds 64 qubits"));
        }
        Ok(PauliString {
            n,
            x: self.x | other.x << self.n,
            z: self.z | other.z << self.n,
            phase: self.phase * other.phase,
        })
    }

    pub fn to_dense(&self) -> Result<Mat> {
        check_dense(self.n)?;
        let d = 1usize << self.n;
        let targets: Vec<usize> = (0..self.n).collect();
        let (xm, zm) = self.register_masks(&targets, self.n);
        let base = self.phase * Phase::from_exponent(pc(xm & zm));
        let mut m = Mat::zeros(d, d);
        for b in 0..d as u64 {
            let sign = if pc(zm & b) % 2 == 1 { Phase::MINUS_ONE } else { Phase::ONE };
            m[((b ^ xm) as usize, b as usize)] = (base * sign).to_complex();
        }
        Ok(m)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.phase.prefix(), self.word())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Accepts an optional phase prefix (`+`, `-`, `i`, `+i`, `-i`) followed by axis letters.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (phase, word) = if let Some(rest) = s.strip_prefix("-i") {
            (Phase::MINUS_I, rest)
        } else if let Some(rest) = s.strip_prefix("+i") {
            (Phase::I, rest)
        } else if let Some(rest) = s.strip_prefix('-') {
            (Phase::MINUS_ONE, rest)
        } else if let Some(rest) = s.strip_prefix('+') {
            (Phase::ONE, rest)
        } else if let Some(rest) = s.strip_prefix('i') {
            (Phase::I, rest)
        } else {
            (Phase::ONE, s)
        };
        let axes = word
            .chars()
            .map(|ch| Axis::from_letter(ch).ok_or_else(|| Error::invalid(format!("bad axis letter {ch:?} in {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        PauliString::new(phase, &axes)
    }
}

/// Hermitian weighted sum `sum_l c_l P_l` with every `c_l > 0` and real phases on `P_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n: usize,
    terms: Vec<(f64, PauliString)>,
}

/// Coefficients below this after merging are dropped.
pub const DROP_TOL: f64 = 1e-15;

impl PauliSum {
    pub fn new(n: usize) -> Self {
        PauliSum { n, terms: Vec::new() }
    }

    /// Canonicalizing constructor: negative coefficients flip the phase, equal
    /// (axes, phase) pairs merge, near-zero results are dropped.
    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, PauliString)>,
    {
        let mut out = PauliSum::new(n);
        let mut index: HashMap<(u64, u64, Phase), usize> = HashMap::new();
        for (coef, p) in terms {
            if p.n != n {
                return Err(Error::dim(format!("term on {} qubits in {n}-qubit sum", p.n)));
            }
            if !coef.is_finite() {
                return Err(Error::invalid("non-finite coefficient"));
            }
            if !p.phase.is_real() {
                return Err(Error::invalid(format!("term {p} is not Hermitian")));
            }
            if coef == 0.0 {
                continue;
            }
            let (c, p) = if coef < 0.0 { (-coef, p.with_phase(p.phase * Phase::MINUS_ONE)) } else { (coef, p) };
            let key = (p.x, p.z, p.phase);
            match index.get(&key) {
                Some(&i) => out.terms[i].0 += c,
                None => {
                    index.insert(key, out.terms.len());
                    out.terms.push((c, p));
                }
            }
        }
        out.terms.retain(|(c, _)| *c >= DROP_TOL);
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of coefficients.
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c).sum()
    }

    pub fn scaled(&self, s: f64) -> Result<PauliSum> {
        PauliSum::from_terms(self.n, self.terms.iter().map(|(c, p)| (c * s, p.clone())))
    }

    /// Concatenate with `other` (same register) and canonicalize.
    pub fn plus(&self, other: &PauliSum) -> Result<PauliSum> {
        if self.n != other.n {
            return Err(Error::dim("adding pauli sums on different registers"));
        }
        PauliSum::from_terms(self.n, self.terms.iter().chain(other.terms.iter()).cloned())
    }

    pub fn embed(&self, new_n: usize, map: &[usize]) -> Result<PauliSum> {
        let terms = self.terms.iter().map(|(c, p)| Ok((*c, p.embed(new_n, map)?))).collect::<Result<Vec<_>>>()?;
        PauliSum::from_terms(new_n, terms)
    }

    pub fn to_dense(&self) -> Result<Mat> {
        check_dense(self.n)?;
        let d = 1usize << self.n;
        let mut m = Mat::zeros(d, d);
        let targets: Vec<usize> = (0..self.n).collect();
        for (coef, p) in &self.terms {
            let (xm, zm) = p.register_masks(&targets, self.n);
            let base = p.phase * Phase::from_exponent(pc(xm & zm));
            for b in 0..d as u64 {
                let sign = if pc(zm & b) % 2 == 1 { Phase::MINUS_ONE } else { Phase::ONE };
                m[((b ^ xm) as usize, b as usize)] += (base * sign).to_complex() * *coef;
            }
        }
        Ok(m)
    }

    pub fn normalize(&self) -> Result<NormalizedPauliSum> {
        NormalizedPauliSum::new(self)
    }

    /// Parse the line format `<coef> <word>`; blank lines and `#` comments are skipped.
    /// `n` fixes the qubit count, otherwise it is taken from the first term.
    pub fn parse(text: &str, n: Option<usize>) -> Result<PauliSum> {
        let mut terms = Vec::new();
        let mut width = n;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let mut parts = line.split_whitespace();
            let coef_s = parts.next().ok_or_else(|| err("missing coefficient".into()))?;
            let word = parts.next().ok_or_else(|| err("missing pauli word".into()))?;
            if parts.next().is_some() {
                return Err(err("trailing tokens".into()));
            }
            let coef: f64 = coef_s.parse().map_err(|_| err(format!("bad coefficient {coef_s:?}")))?;
            let p: PauliString = word.parse().map_err(|e: Error| err(e.to_string()))?;
            match width {
                Some(w) if w != p.n => return Err(err(format!("word has {} qubits, expected {w}", p.n))),
                None => width = Some(p.n),
                _ => {}
            }
            terms.push((coef, p));
        }
        let n = width.ok_or_else(|| Error::Parse { line: 0, msg: "empty pauli sum".into() })?;
        PauliSum::from_terms(n, terms)
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, p) in &self.terms {
            let sign = if p.phase == Phase::MINUS_ONE { "-" } else { "" };
            writeln!(f, "{c} {sign}{}", p.word())?;
        }
        Ok(())
    }
}

impl FromStr for PauliSum {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PauliSum::parse(s, None)
    }
}

/// A Pauli sum rescaled to unit total weight, with the original weight kept as `beta`.
#[derive(Clone, Debug)]
pub struct NormalizedPauliSum {
    sum: PauliSum,
    beta: f64,
    sampler: WeightedIndex<f64>,
}

impl NormalizedPauliSum {
    pub fn new(h: &PauliSum) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::invalid("cannot normalize an empty pauli sum"));
        }
        let beta = h.total_weight();
        let sum = PauliSum { n: h.n, terms: h.terms.iter().map(|(c, p)| (c / beta, p.clone())).collect() };
        let sampler = WeightedIndex::new(sum.terms.iter().map(|(c, _)| *c))
            .map_err(|e| Error::Numerical(format!("term sampler: {e}")))?;
        Ok(NormalizedPauliSum { sum, beta, sampler })
    }

    pub fn n(&self) -> usize {
        self.sum.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sum(&self) -> &PauliSum {
        &self.sum
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.sum.terms.iter().map(|(c, _)| *c).collect()
    }

    pub fn term(&self, idx: usize) -> &PauliString {
        &self.sum.terms[idx].1
    }

    /// `beta` times the normalized coefficients.
    pub fn rescaled(&self) -> PauliSum {
        PauliSum { n: self.sum.n, terms: self.sum.terms.iter().map(|(c, p)| (c * self.beta, p.clone())).collect() }
    }

    /// Draw a term index with probability equal to its normalized weight.
    pub fn sample_term<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, max_abs_diff};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn single_dense(a: Axis) -> Mat {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let v = match a {
            Axis::I => [o, z, z, o],
            Axis::X => [z, o, o, z],
            Axis::Y => [z, -i, i, z],
            Axis::Z => [o, z, z, -o],
        };
        Mat::from_row_slice(2, 2, &v)
    }

    /// Kronecker-product construction, independent of the bitmask path.
    fn kron_oracle(p: &PauliString) -> Mat {
        let mut m = Mat::from_element(1, 1, p.phase().to_complex());
        for a in p.axes() {
            m = kron(&m, &single_dense(a));
        }
        m
    }

    #[test]
    fn single_qubit_products() {
        assert_eq!(p("X").mul(&p("Y")).unwrap(), p("+iZ"));
        assert_eq!(p("Y").mul(&p("X")).unwrap(), p("-iZ"));
        assert_eq!(p("Z").mul(&p("X")).unwrap(), p("+iY"));
        assert_eq!(p("Y").mul(&p("Y")).unwrap(), p("I"));
    }

    #[test]
    fn identity_product_is_neutral() {
        let q = p("-XY");
        assert_eq!(p("II").mul(&q).unwrap(), q);
    }

    #[test]
    fn xz_times_zx_is_yy() {
        let prod = p("XZ").mul(&p("ZX")).unwrap();
        assert_eq!(prod, p("YY"));
        let dense = &p("XZ").to_dense().unwrap() * &p("ZX").to_dense().unwrap();
        assert!(max_abs_diff(&dense, &p("YY").to_dense().unwrap()) < 1e-12);
    }

    #[test]
    fn product_dimension_mismatch() {
        assert!(p("X").mul(&p("XX")).is_err());
    }

    #[test]
    fn dense_matches_kronecker_for_all_two_qubit_words() {
        for w in ["II", "IX", "XY", "-ZY", "+iYZ", "-iXX"] {
            let q = p(w);
            assert!(max_abs_diff(&q.to_dense().unwrap(), &kron_oracle(&q)) < 1e-15, "{w}");
        }
    }

    #[test]
    fn normalize_examples() {
        let h = PauliSum::parse("0.3 XX\n0.7 ZI\n", None).unwrap();
        let nh = h.normalize().unwrap();
        assert!((nh.beta() - 1.0).abs() < 1e-15);
        assert_eq!(nh.probabilities(), vec![0.3, 0.7]);

        let h = PauliSum::parse("2 X\n3 Z", None).unwrap();
        let nh = h.normalize().unwrap();
        assert_eq!(nh.beta(), 5.0);
        assert!((nh.probabilities()[0] - 0.4).abs() < 1e-15);
        assert!((nh.probabilities()[1] - 0.6).abs() < 1e-15);

        let h = PauliSum::parse("-2 X", None).unwrap();
        assert_eq!(h.terms()[0], (2.0, p("-X")));
        assert_eq!(h.normalize().unwrap().beta(), 2.0);
    }

    #[test]
    fn normalize_empty_fails() {
        assert!(PauliSum::new(2).normalize().is_err());
    }

    #[test]
    fn canonicalization_merges_equal_words() {
        let h = PauliSum::parse("1 XZ\n0.5 XZ\n0.25 -XZ\n", None).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.terms()[0], (1.5, p("XZ")));
        assert_eq!(h.terms()[1], (0.25, p("-XZ")));
    }

    #[test]
    fn non_hermitian_term_rejected() {
        assert!(PauliSum::from_terms(1, [(1.0, p("iX"))]).is_err());
    }

    #[test]
    fn dense_examples() {
        let z = PauliSum::parse("1 Z", None).unwrap().to_dense().unwrap();
        assert_eq!(z[(0, 0)].re, 1.0);
        assert_eq!(z[(1, 1)].re, -1.0);
        let xz = PauliSum::parse("1 X\n1 Z", None).unwrap().to_dense().unwrap();
        let expect =
            Mat::from_row_slice(2, 2, &[C64::new(1., 0.), C64::new(1., 0.), C64::new(1., 0.), C64::new(-1., 0.)]);
        assert!(max_abs_diff(&xz, &expect) < 1e-15);
    }

    #[test]
    fn sampling_single_term_and_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let one = PauliSum::parse("0.4 Z", None).unwrap().normalize().unwrap();
        assert!((0..100).all(|_| one.sample_term(&mut rng) == 0));

        let two = PauliSum::parse("1 X\n1 Z", None).unwrap().normalize().unwrap();
        let draws = 100_000;
        let hits = (0..draws).filter(|_| two.sample_term(&mut rng) == 0).count();
        assert!((hits as f64 / draws as f64 - 0.5).abs() < 0.01);

        let seq = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| two.sample_term(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(seq(3), seq(3));
    }

    #[test]
    fn text_round_trip() {
        let h = PauliSum::parse("0.5 -XZIY\n1.25 ZZII # comment\n\n", None).unwrap();
        assert_eq!(h.n(), 4);
        let again: PauliSum = h.to_string().parse().unwrap();
        assert_eq!(h, again);
    }

    #[test]
    fn parse_errors_carry_line() {
        match PauliSum::parse("1 X\n2 Q", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(PauliSum::parse("1 X\n2 XX", None).is_err());
    }

    #[test]
    fn embed_and_tensor() {
        let q = p("-XZ");
        let e = q.embed(4, &[3, 1]).unwrap();
        assert_eq!(e, p("-IZIX"));
        assert_eq!(p("X").tensor(&p("-Z")).unwrap(), p("-XZ"));
    }
}
