//! Ising problems, spin configurations and energy evaluation.
//!
//! The energy of a configuration `s` is `E(s) = -Σ_{i<j} J_ij s_i s_j - Σ_i h_i s_i`.
//! Couplings are stored once per unordered pair as coordinate triples and
//! mirrored into a compressed row index so that dense and sparse instances
//! share one representation.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this many terms energies are accumulated with compensated summation.
const COMPENSATED_SUM_THRESHOLD: usize = 1000;

/// Provenance of a problem: generator family, seed and knobs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub family: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub knobs: BTreeMap<String, f64>,
}

/// A pairwise Ising problem over `n` spins.
#[derive(Clone, Debug)]
pub struct IsingProblem {
    n: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    meta: ProblemMeta,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl PartialEq for IsingProblem {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.couplings == other.couplings && self.fields == other.fields
    }
}

impl IsingProblem {
    /// Builds a problem, validating indices, finiteness and uniqueness of pairs.
    ///
    /// Couplings may be given in any order; they are stored sorted by `(i, j)`.
    pub fn new(n: usize, couplings: Vec<(usize, usize, f64)>, fields: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProblem("n must be at least 1".into()));
        }
        if fields.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: fields.len() });
        }
        if let Some((i, h)) = fields.iter().enumerate().find(|(_, h)| !h.is_finite()) {
            return Err(Error::InvalidProblem(format!("field h_{i} = {h} is not finite")));
        }
        let mut seen = HashSet::with_capacity(couplings.len());
        for &(i, j, v) in &couplings {
            if i == j {
                return Err(Error::InvalidProblem(format!("self-coupling J_{i}{i} is not allowed")));
            }
            if i > j {
                return Err(Error::InvalidProblem(format!("coupling ({i}, {j}) must satisfy i < j")));
            }
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            if !v.is_finite() {
                return Err(Error::InvalidProblem(format!("coupling J_{i},{j} = {v} is not finite")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidProblem(format!("duplicate coupling ({i}, {j})")));
            }
        }
        let mut couplings = couplings;
        couplings.sort_by_key(|c| (c.0, c.1));

        let mut degree = vec![0usize; n];
        for &(i, j, _) in &couplings {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for d in &degree {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let nnz = row_ptr[n];
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        let mut cursor = row_ptr[..n].to_vec();
        for &(i, j, v) in &couplings {
            cols[cursor[i]] = j;
            vals[cursor[i]] = v;
            cursor[i] += 1;
            cols[cursor[j]] = i;
            vals[cursor[j]] = v;
            cursor[j] += 1;
        }
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            let mut row: Vec<(usize, f64)> = cols[lo..hi].iter().copied().zip(vals[lo..hi].iter().copied()).collect();
            row.sort_by_key(|&(c, _)| c);
            for (k, (c, v)) in row.into_iter().enumerate() {
                cols[lo + k] = c;
                vals[lo + k] = v;
            }
        }

        Ok(Self { n, couplings, fields, meta: ProblemMeta::default(), row_ptr, cols, vals })
    }

    pub fn with_meta(mut self, meta: ProblemMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    /// Neighbours of spin `i` and the coupling to each.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// True when every coefficient is an integer.
    pub fn has_integer_coefficients(&self) -> bool {
        self.couplings.iter().all(|c| c.2.fract() == 0.0) && self.fields.iter().all(|h| h.fract() == 0.0)
    }

    /// Largest coefficient magnitude over couplings and fields.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.couplings
            .iter()
            .map(|c| c.2.abs())
            .chain(self.fields.iter().map(|h| h.abs()))
            .fold(0.0, f64::max)
    }

    /// `Σ_j J_ij s_j + h_i` for spins given as `±1` values.
    #[inline]
    pub(crate) fn local_field_of<S: Copy + Into<f64>>(&self, spins: &[S], i: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let mut acc = self.fields[i];
        for k in lo..hi {
            acc += self.vals[k] * spins[self.cols[k]].into();
        }
        acc
    }

    /// Energy over an unchecked slice of real-valued "spins".
    ///
    /// Used both for `±1` configurations and for the tanh-relaxed energy.
    pub(crate) fn energy_of<S: Copy + Into<f64>>(&self, spins: &[S]) -> f64 {
        let terms = self
            .couplings
            .iter()
            .map(|&(i, j, v)| -v * spins[i].into() * spins[j].into())
            .chain(self.fields.iter().zip(spins).map(|(h, &s)| -h * s.into()));
        if self.couplings.len() + self.n > COMPENSATED_SUM_THRESHOLD {
            neumaier_sum(terms)
        } else {
            terms.sum()
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n, actual: len })
        }
    }
}

fn neumaier_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// A configuration of `n` spins, each exactly `-1` or `+1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidProblem(format!("spin value {bad} is not ±1")));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Spins `sign(x_i)` with the convention `sign(0) = +1`.
    pub fn from_positions(x: &[f64]) -> Self {
        Self(x.iter().map(|&xi| if xi >= 0.0 { 1 } else { -1 }).collect())
    }

    /// Spins from the bits of `bits`; bit `i` set means spin `i` is `-1`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        Self((0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut s = self.clone();
        s.flip(i);
        s
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

impl TryFrom<Vec<i8>> for SpinConfig {
    type Error = Error;

    fn try_from(v: Vec<i8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SpinConfig> for Vec<i8> {
    fn from(s: SpinConfig) -> Self {
        s.0
    }
}

/// `E(s) = -Σ_{i<j} J_ij s_i s_j - Σ_i h_i s_i`.
pub fn energy(problem: &IsingProblem, s: &SpinConfig) -> Result<f64> {
    problem.check_len(s.len())?;
    Ok(problem.energy_of(s.as_slice()))
}

/// `energy(flip(s, i)) - energy(s)` in `O(degree(i))`.
pub fn flip_delta(problem: &IsingProblem, s: &SpinConfig, i: usize) -> Result<f64> {
    problem.check_len(s.len())?;
    if i >= problem.n() {
        return Err(Error::IndexOutOfRange { index: i, n: problem.n() });
    }
    Ok(2.0 * f64::from(s.get(i)) * problem.local_field_of(s.as_slice(), i))
}

/// Unnormalized Boltzmann weight `exp(-beta * E)`.
///
/// The partition function is never formed. Weights that overflow saturate to
/// `f64::MAX` instead of becoming infinite.
///
/// # Panics
///
/// Panics if `beta` is negative or NaN.
pub fn boltzmann_weight(e: f64, beta: f64) -> f64 {
    assert!(beta >= 0.0, "inverse temperature must be non-negative, got {beta}");
    if beta == 0.0 {
        return 1.0;
    }
    let w = (-beta * e).exp();
    if w.is_infinite() {
        f64::MAX
    } else {
        w
    }
}

/// Serializes a problem in canonical text form.
///
/// Couplings are written sorted by `(i, j)`, followed by the non-zero fields.
pub fn to_text(problem: &IsingProblem) -> String {
    let mut out = String::new();
    writeln!(out, "ising {}", problem.n).unwrap();
    for &(i, j, v) in &problem.couplings {
        writeln!(out, "J {i} {j} {v}").unwrap();
    }
    for (i, &h) in problem.fields.iter().enumerate() {
        if h != 0.0 {
            writeln!(out, "h {i} {h}").unwrap();
        }
    }
    out
}

/// Parses the line-oriented problem format.
///
/// ```text
/// # comment
/// ising 3
/// J 0 1 1.5
/// J 1 2 -1/3
/// h 2 0.25
/// ```
pub fn parse_problem(text: &str) -> Result<IsingProblem> {
    let mut n: Option<usize> = None;
    let mut couplings = Vec::new();
    let mut fields: Vec<f64> = Vec::new();
    let mut coupling_lines: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut field_lines: BTreeMap<usize, usize> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match (tokens[0], n) {
            ("ising", None) => {
                if tokens.len() != 2 {
                    return Err(err("expected `ising <n>`".into()));
                }
                let size: usize = tokens[1].parse().map_err(|_| err(format!("invalid spin count `{}`", tokens[1])))?;
                if size == 0 {
                    return Err(err("spin count must be at least 1".into()));
                }
                n = Some(size);
                fields = vec![0.0; size];
            }
            ("ising", Some(_)) => return Err(err("duplicate `ising` header".into())),
            (_, None) => return Err(err("expected `ising <n>` header before any record".into())),
            ("J", Some(size)) => {
                if tokens.len() != 4 {
                    return Err(err("expected `J <i> <j> <value>`".into()));
                }
                let i = parse_index(tokens[1], size).map_err(err)?;
                let j = parse_index(tokens[2], size).map_err(err)?;
                if i == j {
                    return Err(err(format!("self-coupling J {i} {j} is not allowed")));
                }
                if i > j {
                    return Err(err(format!("coupling indices must satisfy i < j, got {i} > {j}")));
                }
                let v = parse_value(tokens[3]).map_err(err)?;
                if let Some(first) = coupling_lines.insert((i, j), line_no) {
                    return Err(err(format!("duplicate coupling ({i}, {j}), first defined on line {first}")));
                }
                couplings.push((i, j, v));
            }
            ("h", Some(size)) => {
                if tokens.len() != 3 {
                    return Err(err("expected `h <i> <value>`".into()));
                }
                let i = parse_index(tokens[1], size).map_err(err)?;
                let v = parse_value(tokens[2]).map_err(err)?;
                if let Some(first) = field_lines.insert(i, line_no) {
                    return Err(err(format!("duplicate field for spin {i}, first defined on line {first}")));
                }
                fields[i] = v;
            }
            (other, Some(_)) => return Err(err(format!("unknown record `{other}`"))),
        }
    }
    let n = n.ok_or(Error::Parse { line: 0, message: "missing `ising <n>` header".into() })?;
    IsingProblem::new(n, couplings, fields)
}

fn parse_index(tok: &str, n: usize) -> std::result::Result<usize, String> {
    let i: usize = tok.parse().map_err(|_| format!("invalid index `{tok}`"))?;
    if i >= n {
        return Err(format!("index {i} out of range for n = {n}"));
    }
    Ok(i)
}

fn parse_value(tok: &str) -> std::result::Result<f64, String> {
    let v = match tok.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.parse().map_err(|_| format!("invalid numerator in `{tok}`"))?;
            let den: f64 = den.parse().map_err(|_| format!("invalid denominator in `{tok}`"))?;
            if den == 0.0 {
                return Err(format!("zero denominator in `{tok}`"));
            }
            num / den
        }
        None => tok.parse().map_err(|_| format!("invalid value `{tok}`"))?,
    };
    if !v.is_finite() {
        return Err(format!("value `{tok}` is not finite"));
    }
    Ok(v)
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<IsingProblem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    parse_problem(&text)
}

pub fn save_problem(problem: &IsingProblem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(problem)).map_err(|source| Error::Io { path: path.into(), source })
}
