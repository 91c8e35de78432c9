//! Benchmark instance generators.
//!
//! | family          | J_ij                         | h_i       |
//! |-----------------|------------------------------|-----------|
//! | `maxcut_dense`  | −1 per Erdős–Rényi edge      | 0         |
//! | `maxcut_d3`     | −1 per 3-regular edge        | 0         |
//! | `sk_bool`       | {0, 1}                       | 0         |
//! | `sk_ising`      | {−1, +1}                     | 0         |
//! | `sk_uniform`    | 0 or U(0, 1)                 | 0         |
//! | `nae_3_sat`     | integer clause-pair sums     | 0         |
//! | `spin_model`    | U(−1, 1)                     | U(−1, 1)  |
//!
//! Max-cut edges map to `J = −1` so that minimizing the energy maximizes the cut.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IsingProblem, ProblemMeta, SpinConfig};
use crate::rng::{self, Purpose};

const D3_MAX_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MaxcutDense,
    MaxcutD3,
    SkBool,
    SkIsing,
    SkUniform,
    Nae3Sat,
    SpinModel,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::MaxcutDense,
        Family::MaxcutD3,
        Family::SkBool,
        Family::SkIsing,
        Family::SkUniform,
        Family::Nae3Sat,
        Family::SpinModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::MaxcutDense => "maxcut_dense",
            Family::MaxcutD3 => "maxcut_d3",
            Family::SkBool => "sk_bool",
            Family::SkIsing => "sk_ising",
            Family::SkUniform => "sk_uniform",
            Family::Nae3Sat => "nae_3_sat",
            Family::SpinModel => "spin_model",
        }
    }

    pub fn is_maxcut(self) -> bool {
        matches!(self, Family::MaxcutDense | Family::MaxcutD3)
    }

    /// Families whose coefficients are all integers.
    pub fn is_integer(self) -> bool {
        !matches!(self, Family::SkUniform | Family::SpinModel)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown problem family `{s}`")))
    }
}

/// What to generate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
    /// Edge probability for `maxcut_dense`.
    pub edge_prob: f64,
    /// Clauses per variable for `nae_3_sat`.
    pub clause_ratio: f64,
    /// Probability that an `sk_uniform` coupling is zero.
    pub sparsity: f64,
}

impl GenSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        Self { family, n, seed, edge_prob: 0.5, clause_ratio: 2.1, sparsity: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Generation(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        match self.family {
            Family::MaxcutD3 if self.n < 4 || self.n % 2 == 1 => {
                bad(format!("a 3-regular graph needs an even n >= 4, got {}", self.n))
            }
            Family::Nae3Sat if self.n < 3 => bad("nae_3_sat needs at least 3 variables".into()),
            Family::Nae3Sat if !(self.clause_ratio > 0.0 && self.clause_ratio.is_finite()) => {
                bad(format!("clause ratio must be positive, got {}", self.clause_ratio))
            }
            Family::MaxcutDense if !(0.0..=1.0).contains(&self.edge_prob) => {
                bad(format!("edge probability must lie in [0, 1], got {}", self.edge_prob))
            }
            Family::SkUniform if !(0.0..=1.0).contains(&self.sparsity) => {
                bad(format!("sparsity must lie in [0, 1], got {}", self.sparsity))
            }
            _ => Ok(()),
        }
    }

    fn meta(&self) -> ProblemMeta {
        let mut knobs = BTreeMap::new();
        match self.family {
            Family::MaxcutDense => {
                knobs.insert("edge_prob".into(), self.edge_prob);
            }
            Family::Nae3Sat => {
                knobs.insert("clause_ratio".into(), self.clause_ratio);
            }
            Family::SkUniform => {
                knobs.insert("sparsity".into(), self.sparsity);
            }
            _ => {}
        }
        ProblemMeta { family: Some(self.family.name().into()), seed: Some(self.seed), knobs }
    }
}

/// A not-all-equal clause: three distinct variables with polarities (`true` = positive literal).
pub type NaeClause = [(usize, bool); 3];

/// Generates an instance of the requested family. Identical specs give identical problems.
pub fn generate(spec: &GenSpec) -> Result<IsingProblem> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = rng::stream(spec.seed, Purpose::Generator);
    let mut couplings = Vec::new();
    let mut fields = vec![0.0; n];

    let mut all_pairs = |f: &mut dyn FnMut(&mut rand_chacha::ChaCha8Rng) -> f64| {
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(&mut rng);
                if v != 0.0 {
                    couplings.push((i, j, v));
                }
            }
        }
    };

    match spec.family {
        Family::MaxcutDense => all_pairs(&mut |r| if r.gen_bool(spec.edge_prob) { -1.0 } else { 0.0 }),
        Family::SkBool => all_pairs(&mut |r| if r.gen_bool(0.5) { 1.0 } else { 0.0 }),
        Family::SkIsing => all_pairs(&mut |r| if r.gen_bool(0.5) { 1.0 } else { -1.0 }),
        Family::SkUniform => all_pairs(&mut |r| if r.gen_bool(spec.sparsity) { 0.0 } else { r.gen::<f64>() }),
        Family::SpinModel => {
            all_pairs(&mut |r| r.gen_range(-1.0..1.0));
            for h in &mut fields {
                *h = rng.gen_range(-1.0..1.0);
            }
        }
        Family::MaxcutD3 => {
            couplings = random_cubic_graph(n, &mut rng)?.into_iter().map(|(i, j)| (i, j, -1.0)).collect();
        }
        Family::Nae3Sat => {
            couplings = nae_couplings(&sample_nae_clauses(n, spec.clause_ratio, &mut rng));
        }
    }

    Ok(IsingProblem::new(n, couplings, fields)?.with_meta(spec.meta()))
}

/// The clauses behind a generated `nae_3_sat` instance (same seed, same draws).
pub fn nae_clauses(spec: &GenSpec) -> Result<Vec<NaeClause>> {
    if spec.family != Family::Nae3Sat {
        return Err(Error::Unsupported(format!("{} instances have no clauses", spec.family)));
    }
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Purpose::Generator);
    Ok(sample_nae_clauses(spec.n, spec.clause_ratio, &mut rng))
}

fn sample_nae_clauses(n: usize, ratio: f64, rng: &mut impl Rng) -> Vec<NaeClause> {
    let m = (ratio * n as f64).round() as usize;
    (0..m)
        .map(|_| {
            let vars = rand::seq::index::sample(rng, n, 3);
            [(vars.index(0), rng.gen()), (vars.index(1), rng.gen()), (vars.index(2), rng.gen())]
        })
        .collect()
}

/// Each clause contributes `σ_aσ_b + σ_aσ_c + σ_bσ_c` (σ = polarity·spin), which is −1
/// when the literals are not all equal and 3 otherwise.
fn nae_couplings(clauses: &[NaeClause]) -> Vec<(usize, usize, f64)> {
    let mut acc: BTreeMap<(usize, usize), i64> = BTreeMap::new();
    for clause in clauses {
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let (va, pa) = clause[a];
            let (vb, pb) = clause[b];
            let key = (va.min(vb), va.max(vb));
            *acc.entry(key).or_default() -= if pa == pb { 1 } else { -1 };
        }
    }
    acc.into_iter().filter(|&(_, v)| v != 0).map(|((i, j), v)| (i, j, v as f64)).collect()
}

/// Uniform-ish random 3-regular simple graph by the configuration model with rejection.
fn random_cubic_graph(n: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| [v, v, v]).collect();
    'attempt: for _ in 0..D3_MAX_ATTEMPTS {
        stubs.shuffle(rng);
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(3 * n / 2);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b {
                continue 'attempt;
            }
            edges.push((a, b));
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        return Ok(edges);
    }
    Err(Error::Generation(format!("no simple 3-regular graph on {n} vertices after {D3_MAX_ATTEMPTS} attempts")))
}

fn family_of(problem: &IsingProblem) -> Option<Family> {
    problem.meta().family.as_deref().and_then(|f| f.parse().ok())
}

/// Number of edges cut by the partition `s` of a max-cut instance.
pub fn cut_value(problem: &IsingProblem, s: &SpinConfig) -> Result<u64> {
    match family_of(problem) {
        Some(f) if f.is_maxcut() => {}
        other => {
            return Err(Error::Unsupported(format!(
                "cut_value needs a max-cut instance, got {}",
                other.map_or("an untagged problem".to_string(), |f| f.to_string())
            )))
        }
    }
    problem.check_len(s.len())?;
    Ok(problem.couplings().iter().filter(|&&(i, j, _)| s.get(i) != s.get(j)).count() as u64)
}

/// Checks that every coefficient lies in its family's domain.
pub fn audit_domain(problem: &IsingProblem) -> Result<()> {
    let family = family_of(problem).ok_or_else(|| Error::Unsupported("problem carries no family tag".into()))?;
    let coupling_ok = |v: f64| match family {
        Family::MaxcutDense | Family::MaxcutD3 => v == -1.0,
        Family::SkBool => v == 0.0 || v == 1.0,
        Family::SkIsing => v == 1.0 || v == -1.0,
        Family::SkUniform => (0.0..1.0).contains(&v),
        Family::Nae3Sat => v.fract() == 0.0,
        Family::SpinModel => (-1.0..1.0).contains(&v),
    };
    if let Some(&(i, j, v)) = problem.couplings().iter().find(|c| !coupling_ok(c.2)) {
        return Err(Error::InvalidProblem(format!("{family}: coupling J_{i},{j} = {v} outside the family domain")));
    }
    let field_ok = |h: f64| match family {
        Family::SpinModel => (-1.0..1.0).contains(&h),
        _ => h == 0.0,
    };
    if let Some((i, h)) = problem.fields().iter().enumerate().find(|(_, &h)| !field_ok(h)) {
        return Err(Error::InvalidProblem(format!("{family}: field h_{i} = {h} outside the family domain")));
    }
    if family == Family::MaxcutD3 && (0..problem.n()).any(|i| problem.degree(i) != 3) {
        return Err(Error::InvalidProblem("maxcut_d3 instance is not 3-regular".into()));
    }
    Ok(())
}
