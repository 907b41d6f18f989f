//! Mode-space representation of the two registers.
//!
//! The control register lives on OAM labels `|l⟩` and the work register on
//! the polarization pair `{H, V}`. A [`ModeState`] is a finite map from
//! `(l, pol)` to complex amplitude; amplitudes are not required to be
//! normalized and all comparisons go through [`state_fidelity`], which is
//! invariant under scale and global phase.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest control-register dimension handled by the dense simulation.
pub const MAX_DIM: usize = 1024;

/// Fidelity deficit below which two states are considered equal.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

/// Tolerance on the squared norm for a state to count as normalized.
pub const NORM_TOL: f64 = 1e-12;

/// Topological charge `l` of an LG mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OamIndex(pub i32);

impl OamIndex {
    pub fn charge(self) -> i32 {
        self.0
    }

    pub fn magnitude(self) -> u32 {
        self.0.unsigned_abs()
    }

    /// Sign inversion performed by a Dove prism.
    pub fn inverted(self) -> Self {
        OamIndex(-self.0)
    }

    pub fn shifted(self, delta: i32) -> Self {
        OamIndex(self.0 + delta)
    }
}

impl fmt::Display for OamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

/// Work-register basis: horizontal or vertical linear polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn flipped(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::H => "H",
            Polarization::V => "V",
        })
    }
}

/// Key of a basis ket `|l, pol⟩`.
pub type Ket = (OamIndex, Polarization);

/// Complex amplitudes over `|l, pol⟩` kets. Absent kets have amplitude 0.
///
/// Terms are kept in `(l, pol)` order, which fixes the JSON ordering.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<TermRecord>", try_from = "Vec<TermRecord>")]
pub struct ModeState {
    terms: BTreeMap<Ket, Complex64>,
}

/// JSON record of one term: `{l, pol, re, im}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub l: i32,
    pub pol: Polarization,
    pub re: f64,
    pub im: f64,
}

impl From<ModeState> for Vec<TermRecord> {
    fn from(s: ModeState) -> Self {
        s.terms
            .into_iter()
            .map(|((l, pol), a)| TermRecord { l: l.0, pol, re: a.re, im: a.im })
            .collect()
    }
}

impl TryFrom<Vec<TermRecord>> for ModeState {
    type Error = Error;

    fn try_from(records: Vec<TermRecord>) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for t in records {
            if !(t.re.is_finite() && t.im.is_finite()) {
                return Err(Error::Domain(format!("non-finite amplitude on |{:+},{}⟩", t.l, t.pol)));
            }
            if terms.insert((OamIndex(t.l), t.pol), Complex64::new(t.re, t.im)).is_some() {
                return Err(Error::Domain(format!("duplicate ket |{:+},{}⟩", t.l, t.pol)));
            }
        }
        Ok(ModeState { terms })
    }
}

impl ModeState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Single ket `|l, pol⟩` with unit amplitude.
    pub fn ket(l: i32, pol: Polarization) -> Self {
        Self::from_terms([((OamIndex(l), pol), Complex64::new(1.0, 0.0))])
    }

    /// Builds a state, summing amplitudes of repeated kets.
    pub fn from_terms<I: IntoIterator<Item = (Ket, Complex64)>>(terms: I) -> Self {
        let mut s = ModeState::new();
        for (k, a) in terms {
            s.add_amplitude(k, a);
        }
        s
    }

    /// Adds `amp` to the amplitude of `ket`. Exact cancellations drop the key.
    pub fn add_amplitude(&mut self, ket: Ket, amp: Complex64) {
        let entry = self.terms.entry(ket).or_insert(Complex64::new(0.0, 0.0));
        *entry += amp;
        if *entry == Complex64::new(0.0, 0.0) {
            self.terms.remove(&ket);
        }
    }

    pub fn amplitude(&self, l: i32, pol: Polarization) -> Complex64 {
        self.terms.get(&(OamIndex(l), pol)).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Ket, Complex64)> + '_ {
        self.terms.iter().map(|(k, a)| (*k, *a))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() < NORM_TOL
    }

    /// Unit-norm copy; the empty state is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(Complex64::new(1.0 / n, 0.0))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self::from_terms(self.terms().map(|(k, a)| (k, a * c)))
    }

    /// Coherent (amplitude-level) sum of two beams.
    pub fn superpose(&self, other: &ModeState) -> Self {
        let mut out = self.clone();
        for (k, a) in other.terms() {
            out.add_amplitude(k, a);
        }
        out
    }

    /// Maps every ket through `f`, summing amplitudes that land on the same ket.
    pub fn map_kets<F: Fn(Ket) -> Ket>(&self, f: F) -> Self {
        Self::from_terms(self.terms().map(|(k, a)| (f(k), a)))
    }

    pub fn filter<F: Fn(Ket) -> bool>(&self, keep: F) -> Self {
        ModeState { terms: self.terms.iter().filter(|(k, _)| keep(**k)).map(|(k, a)| (*k, *a)).collect() }
    }

    /// Kets whose magnitude exceeds `rel_tol` times the largest magnitude.
    pub fn support(&self, rel_tol: f64) -> BTreeSet<Ket> {
        let max = self.terms.values().map(|a| a.norm()).fold(0.0, f64::max);
        self.terms
            .iter()
            .filter(|(_, a)| max > 0.0 && a.norm() > rel_tol * max)
            .map(|(k, _)| *k)
            .collect()
    }

    /// Drops terms below `rel_tol` times the largest magnitude.
    pub fn pruned(&self, rel_tol: f64) -> Self {
        let keep = self.support(rel_tol);
        self.filter(|k| keep.contains(&k))
    }

    pub fn polarizations(&self) -> BTreeSet<Polarization> {
        self.terms.keys().map(|(_, p)| *p).collect()
    }

    /// Rotates the global phase so the first nonzero term (in `(l, pol)`
    /// order) is real and positive.
    pub fn phase_referenced(&self) -> Self {
        match self.terms.values().find(|a| a.norm() > 0.0) {
            Some(a) => self.scaled(a.conj() / a.norm()),
            None => self.clone(),
        }
    }

    /// Equality up to scale and global phase.
    pub fn equivalent(&self, other: &ModeState) -> bool {
        match state_fidelity(self, other) {
            Ok(f) => f > 1.0 - EQUIVALENCE_TOL,
            Err(_) => true,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl fmt::Display for ModeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("0");
        }
        for (i, ((l, p), a)) in self.terms().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({:.4}{:+.4}i)|{l},{p}⟩", a.re, a.im)?;
        }
        Ok(())
    }
}

/// Bijection between computational values `x` and OAM labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisMap {
    pairs: Vec<(u64, OamIndex)>,
}

impl BasisMap {
    /// Validates bijectivity and nonzero labels; pairs are stored sorted by `x`.
    pub fn new(mut pairs: Vec<(u64, OamIndex)>) -> Result<Self> {
        pairs.sort_by_key(|(x, _)| *x);
        let xs: BTreeSet<u64> = pairs.iter().map(|(x, _)| *x).collect();
        let ls: BTreeSet<OamIndex> = pairs.iter().map(|(_, l)| *l).collect();
        if xs.len() != pairs.len() || ls.len() != pairs.len() {
            return Err(Error::Domain("basis map is not a bijection".into()));
        }
        if ls.contains(&OamIndex(0)) {
            return Err(Error::Domain("basis labels must have l != 0".into()));
        }
        Ok(BasisMap { pairs })
    }

    /// The four-label map used by the optics: 0↔+1, 1↔−1, 2↔+2, 3↔−2.
    pub fn compiled() -> Self {
        Self::alternating(2).expect("n = 2 is within the cap")
    }

    /// `2^n` labels in the order +1, −1, +2, −2, +3, …
    pub fn alternating(n: u32) -> Result<Self> {
        let dim = register_dim(n)?;
        let pairs = (0..dim as u64)
            .map(|x| {
                let m = (x / 2 + 1) as i32;
                (x, OamIndex(if x % 2 == 0 { m } else { -m }))
            })
            .collect();
        Self::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u64, OamIndex)] {
        &self.pairs
    }

    pub fn label(&self, x: u64) -> Option<OamIndex> {
        self.pairs.iter().find(|(v, _)| *v == x).map(|(_, l)| *l)
    }

    pub fn value(&self, l: OamIndex) -> Option<u64> {
        self.pairs.iter().find(|(_, m)| *m == l).map(|(x, _)| *x)
    }

    /// `true` when the map covers exactly `0..2^n`.
    pub fn covers(&self, n: u32) -> bool {
        match register_dim(n) {
            Ok(dim) => self.pairs.len() == dim && self.pairs.iter().enumerate().all(|(i, (x, _))| *x == i as u64),
            Err(_) => false,
        }
    }

    /// Register bit count when the map covers `0..2^n`.
    pub fn bits(&self) -> Option<u32> {
        let len = self.pairs.len();
        if len < 2 || !len.is_power_of_two() {
            return None;
        }
        let n = len.trailing_zeros();
        self.covers(n).then_some(n)
    }
}

impl Default for BasisMap {
    fn default() -> Self {
        Self::compiled()
    }
}

/// Register dimension `2^n`, capped at [`MAX_DIM`].
pub fn register_dim(n: u32) -> Result<usize> {
    if n > MAX_DIM.trailing_zeros() {
        return Err(Error::Resource(format!("2^{n} exceeds the dimension cap {MAX_DIM}")));
    }
    Ok(1usize << n)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn mod_pow(base: u64, mut exp: u64, modulus: u64) -> u64 {
    if modulus == 1 {
        return 0;
    }
    let m = modulus as u128;
    let mut b = base as u128 % m;
    let mut acc = 1u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn is_prime_power(n: u64) -> bool {
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            let mut m = n;
            while m.is_multiple_of(d) {
                m /= d;
            }
            return m == 1;
        }
        d += 1;
    }
    is_prime(n)
}

fn multiplicative_order(a: u64, modulus: u64) -> u64 {
    let mut r = 1;
    let mut v = a % modulus;
    while v != 1 {
        v = v * a % modulus;
        r += 1;
    }
    r
}

/// A factoring instance: modulus `N`, base `a`, control bits `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawProblem")]
pub struct ShorProblem {
    #[serde(rename = "N")]
    modulus: u64,
    #[serde(rename = "a")]
    base: u64,
    #[serde(rename = "n")]
    bits: u32,
}

#[derive(Deserialize)]
struct RawProblem {
    #[serde(rename = "N")]
    modulus: u64,
    #[serde(rename = "a")]
    base: u64,
    #[serde(rename = "n")]
    bits: u32,
}

impl TryFrom<RawProblem> for ShorProblem {
    type Error = Error;

    fn try_from(raw: RawProblem) -> Result<Self> {
        ShorProblem::new(raw.modulus, raw.base, raw.bits)
    }
}

impl ShorProblem {
    /// Checks `1 < a < N`, `gcd(a, N) = 1`, `N` odd composite and not a
    /// prime power, `2^n ≤ MAX_DIM`, and that `2^n` holds a full period of
    /// `a^x mod N`.
    pub fn new(modulus: u64, base: u64, bits: u32) -> Result<Self> {
        if modulus < 3 || modulus.is_multiple_of(2) {
            return Err(Error::Domain(format!("N = {modulus} must be odd and at least 3")));
        }
        if is_prime(modulus) {
            return Err(Error::Domain(format!("N = {modulus} is prime")));
        }
        if is_prime_power(modulus) {
            return Err(Error::Domain(format!("N = {modulus} is a prime power")));
        }
        if base <= 1 || base >= modulus {
            return Err(Error::Domain(format!("a = {base} must satisfy 1 < a < N = {modulus}")));
        }
        let g = gcd(base, modulus);
        if g != 1 {
            return Err(Error::Domain(format!("a = {base} not coprime with N = {modulus} (gcd {g})")));
        }
        if bits == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        let dim = register_dim(bits)?;
        let period = multiplicative_order(base, modulus);
        if period as usize > dim {
            return Err(Error::Domain(format!(
                "2^n = {dim} cannot hold the {period} distinct values of {base}^x mod {modulus}"
            )));
        }
        Ok(ShorProblem { modulus, base, bits })
    }

    /// The compiled instance N = 15, a = 11, n = 2.
    pub fn compiled() -> Self {
        Self::new(15, 11, 2).expect("compiled instance is valid")
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        1 << self.bits
    }

    /// `a^x mod N`.
    pub fn mef(&self, x: u64) -> u64 {
        mod_pow(self.base, x, self.modulus)
    }

    /// Distinct values of `a^x mod N` over the register, in order of first appearance.
    pub fn distinct_mef_values(&self) -> Vec<u64> {
        let mut seen = Vec::new();
        for x in 0..self.dim() as u64 {
            let v = self.mef(x);
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen
    }

    /// Whether the work register fits in two polarizations.
    pub fn is_two_valued(&self) -> bool {
        self.distinct_mef_values().len() <= 2
    }
}

/// Assignment of modular-exponentiation values to polarizations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkMap(pub BTreeMap<u64, Polarization>);

impl WorkMap {
    /// First value to appear (always 1, at x = 0) → H, the second → V.
    pub fn for_problem(problem: &ShorProblem) -> Result<Self> {
        let values = problem.distinct_mef_values();
        if values.len() > 2 {
            return Err(Error::Unsupported(format!(
                "{}^x mod {} takes {} values; two polarizations hold at most 2",
                problem.base(),
                problem.modulus(),
                values.len()
            )));
        }
        Ok(WorkMap(values.into_iter().zip(Polarization::BOTH).collect()))
    }

    pub fn get(&self, value: u64) -> Option<Polarization> {
        self.0.get(&value).copied()
    }

    /// Values routed to `pol`.
    pub fn values_for(&self, pol: Polarization) -> Vec<u64> {
        self.0.iter().filter(|(_, p)| **p == pol).map(|(v, _)| *v).collect()
    }
}

/// Uniform superposition `Σ_x |l(x), H⟩`, unnormalized unless `normalize`.
pub fn make_input_state(problem: &ShorProblem, basis: &BasisMap, normalize: bool) -> Result<ModeState> {
    if !basis.covers(problem.bits()) {
        return Err(Error::Domain(format!("basis does not cover x in [0, {})", problem.dim())));
    }
    let s = ModeState::from_terms(
        basis.pairs().iter().map(|(_, l)| ((*l, Polarization::H), Complex64::new(1.0, 0.0))),
    );
    Ok(if normalize { s.normalized() } else { s })
}

/// Modular exponentiation: `|l(x), H⟩ → |l(x), work_map(a^x mod N)⟩`.
pub fn apply_mef(
    state: &ModeState,
    problem: &ShorProblem,
    basis: &BasisMap,
    work_map: &WorkMap,
) -> Result<ModeState> {
    if !problem.is_two_valued() {
        return Err(Error::Unsupported(format!(
            "{}^x mod {} is not two-valued over 2^{} inputs",
            problem.base(),
            problem.modulus(),
            problem.bits()
        )));
    }
    let assigned: BTreeSet<Polarization> =
        problem.distinct_mef_values().iter().filter_map(|v| work_map.get(*v)).collect();
    if assigned.len() != problem.distinct_mef_values().len() {
        return Err(Error::Precondition("work map must give each MEF value its own polarization".into()));
    }
    let mut out = ModeState::new();
    for ((l, pol), a) in state.terms() {
        if pol != Polarization::H {
            return Err(Error::Precondition(format!("work register not initialized: |{l},{pol}⟩ present")));
        }
        let x = basis
            .value(l)
            .filter(|x| (*x as usize) < problem.dim())
            .ok_or_else(|| Error::Domain(format!("OAM label {l} outside the basis")))?;
        let v = problem.mef(x);
        let target = work_map.get(v).ok_or_else(|| Error::Precondition(format!("work map lacks value {v}")))?;
        out.add_amplitude((l, target), a);
    }
    Ok(out)
}

/// Polarization beam splitter output for `pol`; amplitudes are not renormalized.
pub fn project_work(state: &ModeState, pol: Polarization) -> ModeState {
    state.filter(|(_, p)| p == pol)
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::default(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        DenseMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.dim).map(|r| self.get(r, col)).collect()
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut data = vec![Complex64::default(); d * d];
        for r in 0..d {
            for c in 0..d {
                data[c * d + r] = self.get(r, c).conj();
            }
        }
        DenseMatrix { dim: d, data }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let d = self.dim;
        let mut data = vec![Complex64::default(); d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.get(r, k);
                for c in 0..d {
                    data[r * d + c] += a * other.get(k, c);
                }
            }
        }
        DenseMatrix { dim: d, data }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim).map(|r| (0..self.dim).map(|c| self.get(r, c) * v[c]).sum()).collect()
    }

    /// Largest entrywise magnitude of `self − other`.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// `e^{i 2π k / dim}`, exact on quarter turns.
pub(crate) fn root_of_unity(k: u64, dim: u64) -> Complex64 {
    let k = k % dim;
    if (4 * k).is_multiple_of(dim) {
        return match 4 * k / dim {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / dim as f64)
}

/// DFT matrix over `2^n`: entry `(j, x) = 2^{−n/2} e^{i2πjx/2^n}`.
pub fn dft_matrix(n: u32) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::Domain("DFT needs n >= 1".into()));
    }
    let dim = register_dim(n)?;
    let scale = 1.0 / (dim as f64).sqrt();
    let mut data = Vec::with_capacity(dim * dim);
    for j in 0..dim as u64 {
        for x in 0..dim as u64 {
            data.push(root_of_unity(j * x, dim as u64) * scale);
        }
    }
    Ok(DenseMatrix { dim, data })
}

/// Applies the DFT to the control register of each polarization branch.
/// Output values `j` are written on the same OAM labels via `basis`.
pub fn apply_dft(state: &ModeState, basis: &BasisMap) -> Result<ModeState> {
    let n = basis
        .bits()
        .ok_or_else(|| Error::Domain("DFT basis must cover 0..2^n for some n >= 1".into()))?;
    let m = dft_matrix(n)?;
    let dim = m.dim();
    let mut out = ModeState::new();
    for pol in state.polarizations() {
        let mut v = vec![Complex64::default(); dim];
        for ((l, p), a) in state.terms() {
            if p != pol {
                continue;
            }
            let x = basis.value(l).ok_or_else(|| Error::Domain(format!("OAM label {l} outside the basis")))?;
            v[x as usize] += a;
        }
        for (j, a) in m.apply(&v).into_iter().enumerate() {
            if a != Complex64::default() {
                out.add_amplitude((basis.pairs()[j].1, pol), a);
            }
        }
    }
    Ok(out)
}

/// `|⟨s1|s2⟩|² / (‖s1‖² ‖s2‖²)`; 0 if exactly one state is empty.
pub fn state_fidelity(s1: &ModeState, s2: &ModeState) -> Result<f64> {
    let (n1, n2) = (s1.norm_sqr(), s2.norm_sqr());
    if n1 == 0.0 && n2 == 0.0 {
        return Err(Error::Domain("fidelity of two empty states".into()));
    }
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(0.0);
    }
    let overlap: Complex64 = s1
        .terms()
        .map(|(k, a)| a.conj() * s2.terms.get(&k).copied().unwrap_or_default())
        .sum();
    Ok((overlap.norm_sqr() / (n1 * n2)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Polarization::{H, V};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn state(terms: &[(i32, Polarization, Complex64)]) -> ModeState {
        ModeState::from_terms(terms.iter().map(|(l, p, a)| ((OamIndex(*l), *p), *a)))
    }

    fn eq6() -> ModeState {
        state(&[(1, H, c(1., 0.)), (-1, V, c(1., 0.)), (2, H, c(1., 0.)), (-2, V, c(1., 0.))])
    }

    #[test]
    fn input_state_for_compiled_instance() {
        let s = make_input_state(&ShorProblem::compiled(), &BasisMap::compiled(), false).unwrap();
        let want = state(&[(1, H, c(1., 0.)), (-1, H, c(1., 0.)), (2, H, c(1., 0.)), (-2, H, c(1., 0.))]);
        assert_eq!(s, want);
        let n = make_input_state(&ShorProblem::compiled(), &BasisMap::compiled(), true).unwrap();
        assert!(n.is_normalized());
    }

    #[test]
    fn input_state_eight_terms() {
        // 21 = 3·7, a = 2 has order 6 ≤ 8.
        let p = ShorProblem::new(21, 2, 3).unwrap();
        let s = make_input_state(&p, &BasisMap::alternating(3).unwrap(), false).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.terms().all(|((_, pol), a)| pol == H && a == c(1., 0.)));
    }

    #[test]
    fn input_state_single_entry_basis() {
        let basis = BasisMap::new(vec![(0, OamIndex(1))]).unwrap();
        assert!(basis.covers(0));
        let s = ModeState::from_terms(basis.pairs().iter().map(|(_, l)| ((*l, H), c(1., 0.))));
        assert_eq!(s, ModeState::ket(1, H));
    }

    #[test]
    fn input_state_rejects_incomplete_basis() {
        let basis = BasisMap::new(vec![(0, OamIndex(1)), (1, OamIndex(-1))]).unwrap();
        assert!(matches!(make_input_state(&ShorProblem::compiled(), &basis, false), Err(Error::Domain(_))));
    }

    #[test]
    fn basis_map_must_be_bijective() {
        assert!(BasisMap::new(vec![(0, OamIndex(1)), (1, OamIndex(1))]).is_err());
        assert!(BasisMap::new(vec![(0, OamIndex(1)), (0, OamIndex(2))]).is_err());
        assert!(BasisMap::new(vec![(0, OamIndex(0))]).is_err());
        let b = BasisMap::compiled();
        let labels: Vec<i32> = b.pairs().iter().map(|(_, l)| l.0).collect();
        assert_eq!(labels, vec![1, -1, 2, -2]);
    }

    #[test]
    fn problem_validation() {
        assert!(ShorProblem::new(15, 5, 2).is_err());
        assert!(ShorProblem::new(15, 1, 2).is_err());
        assert!(ShorProblem::new(15, 15, 2).is_err());
        assert!(ShorProblem::new(13, 2, 2).is_err());
        assert!(ShorProblem::new(9, 2, 3).is_err());
        assert!(ShorProblem::new(14, 3, 2).is_err());
        assert!(ShorProblem::new(15, 7, 1).is_err());
        assert!(matches!(ShorProblem::new(15, 7, 11), Err(Error::Resource(_))));
        assert!(ShorProblem::new(15, 7, 2).is_ok());
    }

    #[test]
    fn mef_compiled() {
        let p = ShorProblem::compiled();
        let b = BasisMap::compiled();
        let wm = WorkMap::for_problem(&p).unwrap();
        assert_eq!(wm.get(1), Some(H));
        assert_eq!(wm.get(11), Some(V));
        let out = apply_mef(&make_input_state(&p, &b, false).unwrap(), &p, &b, &wm).unwrap();
        assert_eq!(out, eq6());
    }

    #[test]
    fn mef_identity_on_x0() {
        let p = ShorProblem::compiled();
        let b = BasisMap::compiled();
        let wm = WorkMap::for_problem(&p).unwrap();
        assert_eq!(apply_mef(&ModeState::ket(1, H), &p, &b, &wm).unwrap(), ModeState::ket(1, H));
    }

    #[test]
    fn mef_base_four() {
        let p = ShorProblem::new(15, 4, 2).unwrap();
        let values: Vec<u64> = (0..4).map(|x| p.mef(x)).collect();
        assert_eq!(values, vec![1, 4, 1, 4]);
        let b = BasisMap::compiled();
        let wm = WorkMap(BTreeMap::from([(1, H), (4, V)]));
        let out = apply_mef(&make_input_state(&p, &b, false).unwrap(), &p, &b, &wm).unwrap();
        assert_eq!(out, eq6());
    }

    #[test]
    fn mef_errors() {
        let p = ShorProblem::compiled();
        let b = BasisMap::compiled();
        let wm = WorkMap::for_problem(&p).unwrap();
        assert!(matches!(apply_mef(&ModeState::ket(1, V), &p, &b, &wm), Err(Error::Precondition(_))));
        assert!(matches!(apply_mef(&ModeState::ket(5, H), &p, &b, &wm), Err(Error::Domain(_))));
        let same = WorkMap(BTreeMap::from([(1, H), (11, H)]));
        assert!(matches!(apply_mef(&ModeState::ket(1, H), &p, &b, &same), Err(Error::Precondition(_))));
        let seven = ShorProblem::new(15, 7, 2).unwrap();
        assert!(matches!(WorkMap::for_problem(&seven), Err(Error::Unsupported(_))));
        assert!(matches!(apply_mef(&ModeState::ket(1, H), &seven, &b, &wm), Err(Error::Unsupported(_))));
    }

    #[test]
    fn projections() {
        assert_eq!(project_work(&eq6(), H), state(&[(1, H, c(1., 0.)), (2, H, c(1., 0.))]));
        assert_eq!(project_work(&eq6(), V), state(&[(-1, V, c(1., 0.)), (-2, V, c(1., 0.))]));
        assert!(project_work(&ModeState::ket(1, H), V).is_empty());
    }

    #[test]
    fn dft_n1_is_hadamard() {
        let m = dft_matrix(1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (j, x, want) in [(0, 0, s), (0, 1, s), (1, 0, s), (1, 1, -s)] {
            assert!((m.get(j, x) - c(want, 0.)).norm() < 1e-15);
        }
    }

    #[test]
    fn dft_n2_column_one() {
        let col = dft_matrix(2).unwrap().column(1);
        assert_eq!(col, vec![c(0.5, 0.), c(0., 0.5), c(-0.5, 0.), c(0., -0.5)]);
    }

    #[test]
    fn dft_unitary_and_squares_to_reversal() {
        for n in 1..=4 {
            let m = dft_matrix(n).unwrap();
            let dim = m.dim();
            assert!(m.matmul(&m.adjoint()).max_abs_diff(&DenseMatrix::identity(dim)) < 1e-12);
            let sq = m.matmul(&m);
            for j in 0..dim {
                for x in 0..dim {
                    let want = if (j + x) % dim == 0 { 1.0 } else { 0.0 };
                    assert!((sq.get(j, x) - c(want, 0.)).norm() < 1e-12);
                }
            }
        }
        assert!(matches!(dft_matrix(0), Err(Error::Domain(_))));
        assert!(matches!(dft_matrix(11), Err(Error::Resource(_))));
    }

    #[test]
    fn dft_of_projected_branches() {
        let b = BasisMap::compiled();
        let h = apply_dft(&state(&[(1, H, c(1., 0.)), (2, H, c(1., 0.))]), &b).unwrap();
        assert_eq!(h, state(&[(1, H, c(1., 0.)), (2, H, c(1., 0.))]));
        let v = apply_dft(&state(&[(-1, V, c(1., 0.)), (-2, V, c(1., 0.))]), &b).unwrap();
        assert_eq!(v, state(&[(1, V, c(1., 0.)), (2, V, c(-1., 0.))]));
    }

    #[test]
    fn dft_of_uniform_is_single_term() {
        let p = ShorProblem::compiled();
        let b = BasisMap::compiled();
        let out = apply_dft(&make_input_state(&p, &b, false).unwrap(), &b).unwrap();
        assert_eq!(out, state(&[(1, H, c(2., 0.))]));
    }

    #[test]
    fn dft_rejects_foreign_label() {
        assert!(matches!(apply_dft(&ModeState::ket(3, H), &BasisMap::compiled()), Err(Error::Domain(_))));
    }

    #[test]
    fn fidelity_cases() {
        let psi = eq6();
        assert!((state_fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-15);
        let rotated = psi.scaled(Complex64::from_polar(1.0, 0.7));
        assert!((state_fidelity(&psi, &rotated).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(state_fidelity(&ModeState::ket(1, H), &ModeState::ket(-1, H)).unwrap(), 0.0);
        assert_eq!(state_fidelity(&ModeState::ket(1, H), &ModeState::new()).unwrap(), 0.0);
        assert!(state_fidelity(&ModeState::new(), &ModeState::new()).is_err());
    }

    #[test]
    fn json_is_ordered_by_l_then_pol() {
        let s = state(&[(2, H, c(1., 0.)), (-1, V, c(0., 1.)), (-1, H, c(0.5, 0.))]);
        let j = s.to_json().unwrap();
        assert_eq!(
            j,
            r#"[{"l":-1,"pol":"H","re":0.5,"im":0.0},{"l":-1,"pol":"V","re":0.0,"im":1.0},{"l":2,"pol":"H","re":1.0,"im":0.0}]"#
        );
        assert_eq!(ModeState::from_json(&j).unwrap(), s);
        assert!(ModeState::from_json(r#"[{"l":1,"pol":"H","re":1,"im":0},{"l":1,"pol":"H","re":1,"im":0}]"#).is_err());
    }

    fn arb_state() -> impl Strategy<Value = ModeState> {
        proptest::collection::vec(
            (prop::sample::select(vec![1, -1, 2, -2]), any::<bool>(), -1.0f64..1.0, -1.0f64..1.0),
            0..8,
        )
        .prop_map(|ts| {
            ModeState::from_terms(
                ts.into_iter().map(|(l, h, re, im)| ((OamIndex(l), if h { H } else { V }), c(re, im))),
            )
        })
    }

    proptest! {
        #[test]
        fn projections_partition(s in arb_state()) {
            prop_assert_eq!(project_work(&s, H).superpose(&project_work(&s, V)), s);
        }

        #[test]
        fn mef_preserves_norm(amps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4)) {
            let p = ShorProblem::compiled();
            let b = BasisMap::compiled();
            let s = ModeState::from_terms(b.pairs().iter().zip(&amps).map(|((_, l), (re, im))| ((*l, H), c(*re, *im))));
            let out = apply_mef(&s, &p, &b, &WorkMap::for_problem(&p).unwrap()).unwrap();
            prop_assert_eq!(out.norm_sqr(), s.norm_sqr());
            prop_assert_eq!(out.len(), s.len());
        }

        #[test]
        fn dft_preserves_norm(s in arb_state()) {
            let out = apply_dft(&s, &BasisMap::compiled()).unwrap();
            prop_assert!((out.norm_sqr() - s.norm_sqr()).abs() < 1e-12);
        }

        #[test]
        fn fidelity_symmetric_and_scale_invariant(
            a in arb_state(), b in arb_state(), mag in 0.1f64..10.0, phase in -3.0f64..3.0
        ) {
            prop_assume!(!a.is_empty() && !b.is_empty());
            let f = state_fidelity(&a, &b).unwrap();
            prop_assert!((f - state_fidelity(&b, &a).unwrap()).abs() < 1e-12);
            let k = Complex64::from_polar(mag, phase);
            prop_assert!((f - state_fidelity(&a.scaled(k), &b).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn json_round_trip(s in arb_state()) {
            prop_assert_eq!(ModeState::from_json(&s.to_json().unwrap()).unwrap(), s);
        }
    }
}
