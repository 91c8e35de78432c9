//! Time-to-solution estimation, exhaustive ground states and scaling fits.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::baselines::SaConfig;
use crate::error::{Error, Result};
use crate::model::{IsingProblem, SpinConfig};
use crate::problems::{generate, Family, GenSpec};
use crate::rng::derive_seed;
use crate::solver::{Solver, SolverSpec};

/// Target confidence of the time-to-solution metric.
pub const TTS_CONFIDENCE: f64 = 0.99;

/// Largest problem `brute_force_ground` will enumerate.
pub const BRUTE_FORCE_MAX_N: usize = 24;

/// Time to reach the target with 99% confidence given single-run time `t1`
/// and single-run success probability `p`.
///
/// The run-count factor `ln(0.01) / ln(1 - p)` is clamped below at 1.
/// `p = 0` gives `f64::INFINITY`.
pub fn tts(t1: f64, p: f64) -> Result<f64> {
    Ok(t1 * run_factor(t1, p)?)
}

/// Same as [`tts`] but with the run count rounded up to a whole number of runs.
pub fn tts_whole_runs(t1: f64, p: f64) -> Result<f64> {
    Ok(t1 * run_factor(t1, p)?.ceil())
}

fn run_factor(t1: f64, p: f64) -> Result<f64> {
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(Error::InvalidConfig(format!("T1 must be positive and finite, got {t1}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("success probability must lie in [0, 1], got {p}")));
    }
    if p == 0.0 {
        return Ok(f64::INFINITY);
    }
    if p == 1.0 || p == TTS_CONFIDENCE {
        return Ok(1.0);
    }
    Ok(((1.0 - TTS_CONFIDENCE).ln() / (1.0 - p).ln()).max(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsRecord {
    /// Mean wall time of the runs that completed, in seconds. NaN if none did.
    pub t1: f64,
    pub p: f64,
    /// Seconds; infinite when nothing succeeded.
    pub tts: f64,
    /// TTS with the run count rounded up to an integer.
    pub tts_whole_runs: f64,
    pub runs: usize,
    pub successes: usize,
    /// Runs that returned an error.
    pub failures: usize,
    /// Lowest energy over all completed runs.
    pub best_energy: f64,
}

/// Success tolerance for comparing against a reference energy: exact for
/// integer-coefficient problems, relative otherwise.
pub fn success_tolerance(problem: &IsingProblem, reference: f64) -> f64 {
    if problem.has_integer_coefficients() {
        1e-9
    } else {
        1e-6 * (1.0 + reference.abs())
    }
}

/// Runs `solver` `runs` times with seeds `derive_seed(base_seed, k)` and
/// counts runs that reach `reference + tol`.
pub fn estimate_success(
    problem: &IsingProblem,
    solver: &dyn Solver,
    reference: f64,
    runs: usize,
    tol: f64,
    base_seed: u64,
) -> Result<TtsRecord> {
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    let mut successes = 0;
    let mut failures = 0;
    let mut time = 0.0;
    let mut best_energy = f64::INFINITY;
    for k in 0..runs {
        match solver.solve(problem, derive_seed(base_seed, k as u64)) {
            Ok(r) => {
                time += r.wall_time;
                best_energy = best_energy.min(r.best_energy);
                if r.best_energy <= reference + tol {
                    successes += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let completed = runs - failures;
    let p = successes as f64 / runs as f64;
    let t1 = if completed == 0 { f64::NAN } else { (time / completed as f64).max(f64::MIN_POSITIVE) };
    let (tts, tts_whole_runs) = if completed == 0 || p == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (tts(t1, p)?, tts_whole_runs(t1, p)?)
    };
    Ok(TtsRecord { t1, p, tts, tts_whole_runs, runs, successes, failures, best_energy })
}

/// Exact ground state found by enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    /// Number of configurations attaining the minimum.
    pub minimizers: u64,
    /// One minimizing configuration.
    pub witness: SpinConfig,
}

/// Enumerates all `2^n` configurations in Gray-code order.
///
/// Each step flips one spin, so the energy changes by `2 s_i f_i` where `f_i`
/// is the cached local field; the neighbours' fields are then patched.
/// Configurations within a round-off tolerance of the minimum count as ties.
pub fn brute_force_ground(problem: &IsingProblem) -> Result<GroundState> {
    let n = problem.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::Unsupported(format!(
            "brute force is limited to n <= {BRUTE_FORCE_MAX_N}, got n = {n}; use a best-of-SA reference"
        )));
    }
    let mut s = vec![1i8; n];
    let mut field: Vec<f64> = (0..n).map(|i| problem.local_field_of(&s, i)).collect();
    let mut e = problem.energy_of(&s);
    let scale: f64 = problem.couplings().iter().map(|c| c.2.abs()).sum::<f64>()
        + problem.fields().iter().map(|h| h.abs()).sum::<f64>();
    let tie = if problem.has_integer_coefficients() { 0.5 } else { 1e-9 * (1.0 + scale) };

    let mut best = e;
    let mut best_bits = 0u64;
    let mut count = 1u64;
    let mut bits = 0u64;
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        let si = s[i] as f64;
        e += 2.0 * si * field[i];
        for (j, w) in problem.neighbors(i) {
            field[j] -= 2.0 * w * si;
        }
        s[i] = -s[i];
        bits ^= 1 << i;
        if e < best - tie {
            best = e;
            best_bits = bits;
            count = 1;
        } else if e <= best + tie {
            count += 1;
            if e < best {
                best = e;
                best_bits = bits;
            }
        }
    }
    let witness = SpinConfig::from_bits(n, best_bits);
    let energy = problem.energy_of(witness.as_slice());
    Ok(GroundState { energy, minimizers: count, witness })
}

/// How reference energies are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePolicy {
    /// Instances up to this size are enumerated exactly.
    pub brute_force_max_n: usize,
    /// Independent SA runs for larger instances.
    pub sa_runs: usize,
    /// SA sweeps per run, as a multiple of the largest evaluated solver's annealing steps.
    pub budget_factor: usize,
}

impl Default for ReferencePolicy {
    fn default() -> Self {
        Self { brute_force_max_n: BRUTE_FORCE_MAX_N, sa_runs: 32, budget_factor: 10 }
    }
}

impl ReferencePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.brute_force_max_n > BRUTE_FORCE_MAX_N {
            return Err(Error::InvalidConfig(format!("brute_force_max_n may not exceed {BRUTE_FORCE_MAX_N}")));
        }
        if self.sa_runs == 0 || self.budget_factor == 0 {
            return Err(Error::InvalidConfig("sa_runs and budget_factor must be at least 1".into()));
        }
        Ok(())
    }
}

/// A resolved reference energy and how it was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub energy: f64,
    /// `brute_force` or `best_of_sa(runs=.., sweeps=..)`.
    pub method: String,
}

/// Reference energy under `policy` for an instance evaluated with solvers of
/// at most `budget` annealing steps.
pub fn resolve_reference(
    problem: &IsingProblem,
    policy: &ReferencePolicy,
    budget: usize,
    seed: u64,
) -> Result<Reference> {
    policy.validate()?;
    if problem.n() <= policy.brute_force_max_n {
        let g = brute_force_ground(problem)?;
        return Ok(Reference { energy: g.energy, method: "brute_force".into() });
    }
    let sweeps = budget.max(1) * policy.budget_factor;
    let config = SaConfig { sweeps, ..SaConfig::default() };
    let spec = SolverSpec::Sa(config);
    let energy = (0..policy.sa_runs)
        .into_par_iter()
        .map(|k| spec.solve(problem, derive_seed(seed, k as u64)).map(|r| r.best_energy))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(Reference { energy, method: format!("best_of_sa(runs={},sweeps={sweeps})", policy.sa_runs) })
}

/// A benchmark grid over one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    pub n_grid: Vec<usize>,
    pub instances: usize,
    pub runs: usize,
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub reference: ReferencePolicy,
    /// Instance `k` at size `n` uses seed `derive_seed(derive_seed(seed, n), k)`.
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.instances == 0 || self.runs == 0 || self.solvers.is_empty() {
            return Err(Error::InvalidConfig("experiment needs at least one n, instance, run and solver".into()));
        }
        for s in &self.solvers {
            s.validate()?;
        }
        self.reference.validate()
    }

    pub fn instance_seed(&self, n: usize, k: usize) -> u64 {
        derive_seed(derive_seed(self.seed, n as u64), k as u64)
    }
}

/// One (instance, solver) result. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub family: String,
    pub n: usize,
    pub instance: usize,
    pub instance_seed: u64,
    pub solver: String,
    pub t1: f64,
    pub p: f64,
    pub tts: f64,
    pub tts_whole_runs: f64,
    pub best_energy: f64,
    pub reference_energy: f64,
    pub reference_method: String,
    pub runs: usize,
    pub successes: usize,
    pub failures: usize,
    pub error: Option<String>,
}

impl ResultRow {
    fn key(&self) -> (&str, usize, usize, &str) {
        (&self.family, self.n, self.instance, &self.solver)
    }

    /// Equality ignoring wall-time derived fields.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.key() == other.key()
            && self.instance_seed == other.instance_seed
            && self.p == other.p
            && self.best_energy.to_bits() == other.best_energy.to_bits()
            && self.reference_energy.to_bits() == other.reference_energy.to_bits()
            && self.reference_method == other.reference_method
            && self.successes == other.successes
            && self.failures == other.failures
            && self.error == other.error
    }
}

/// Generates every instance, resolves its reference and evaluates each solver.
///
/// Instances are processed concurrently; rows come back sorted by
/// `(family, n, instance, solver)`. Failures are recorded in the row.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let budget = spec.solvers.iter().map(SolverSpec::anneal_steps).max().unwrap_or(1);
    let jobs: Vec<(usize, usize)> =
        spec.n_grid.iter().flat_map(|&n| (0..spec.instances).map(move |k| (n, k))).collect();

    let mut rows: Vec<ResultRow> = jobs
        .par_iter()
        .flat_map_iter(|&(n, k)| instance_rows(spec, n, k, budget))
        .collect();
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(rows)
}

fn instance_rows(spec: &ExperimentSpec, n: usize, k: usize, budget: usize) -> Vec<ResultRow> {
    let seed = spec.instance_seed(n, k);
    let blank = |solver: &str, error: String| ResultRow {
        family: spec.family.name().into(),
        n,
        instance: k,
        instance_seed: seed,
        solver: solver.into(),
        t1: f64::NAN,
        p: 0.0,
        tts: f64::INFINITY,
        tts_whole_runs: f64::INFINITY,
        best_energy: f64::NAN,
        reference_energy: f64::NAN,
        reference_method: String::new(),
        runs: spec.runs,
        successes: 0,
        failures: spec.runs,
        error: Some(error),
    };
    let setup = generate(&GenSpec::new(spec.family, n, seed))
        .and_then(|p| resolve_reference(&p, &spec.reference, budget, seed).map(|r| (p, r)));
    let (problem, reference) = match setup {
        Ok(x) => x,
        Err(e) => return spec.solvers.iter().map(|s| blank(s.id(), e.to_string())).collect(),
    };
    let tol = success_tolerance(&problem, reference.energy);
    spec.solvers
        .iter()
        .map(|solver| match estimate_success(&problem, solver, reference.energy, spec.runs, tol, seed) {
            Ok(r) => ResultRow {
                t1: r.t1,
                p: r.p,
                tts: r.tts,
                tts_whole_runs: r.tts_whole_runs,
                best_energy: r.best_energy,
                reference_energy: reference.energy,
                reference_method: reference.method.clone(),
                successes: r.successes,
                failures: r.failures,
                error: (r.failures > 0).then(|| format!("{} of {} runs failed", r.failures, r.runs)),
                ..blank(solver.id(), String::new())
            },
            Err(e) => blank(solver.id(), e.to_string()),
        })
        .collect()
}

/// Writes one JSON object per row.
pub fn write_json_lines(rows: &[ResultRow], mut out: impl Write) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| Error::Unsupported(e.to_string()))?;
        writeln!(out).map_err(io_error)?;
    }
    Ok(())
}

pub fn read_json_lines(text: &str) -> Result<Vec<ResultRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

/// Writes the rows as CSV with a header line.
pub fn write_csv(rows: &[ResultRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Unsupported(e.to_string()))?;
    }
    w.flush().map_err(io_error)
}

fn io_error(e: std::io::Error) -> Error {
    Error::Io { path: "<output>".into(), source: e }
}

/// Median TTS of one `(family, n, solver)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub family: String,
    pub n: usize,
    pub solver: String,
    pub instances: usize,
    pub median_tts: f64,
    pub median_p: f64,
}

/// Median of a non-empty sample; infinities sort last.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        let (a, b) = (values[m - 1], values[m]);
        if a == b { a } else { 0.5 * (a + b) }
    }
}

pub fn summary(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut cells: std::collections::BTreeMap<(String, usize, String), Vec<&ResultRow>> = Default::default();
    for r in rows {
        cells.entry((r.family.clone(), r.n, r.solver.clone())).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((family, n, solver), rs)| SummaryRow {
            instances: rs.len(),
            median_tts: median(&mut rs.iter().map(|r| r.tts).collect::<Vec<_>>()),
            median_p: median(&mut rs.iter().map(|r| r.p).collect::<Vec<_>>()),
            family,
            n,
            solver,
        })
        .collect()
}

/// Power-law fit `tts ~ c * n^exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub solver: String,
    pub exponent: f64,
    /// `ln c`.
    pub intercept: f64,
    /// 95% confidence interval of the exponent.
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(n, median TTS)` pairs used in the fit.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares line through `(ln n, ln tts)`.
pub fn fit_power_law(solver: &str, points: &[(usize, f64)]) -> Result<ScalingFit> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Unsupported(format!(
            "{solver}: scaling fit needs at least 3 distinct n values, got {}",
            distinct.len()
        )));
    }
    if let Some(bad) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::Unsupported(format!("{solver}: TTS at n = {} is {}, cannot fit", bad.0, bad.1)));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = m - 2.0;
    let half_width = if dof > 0.0 {
        let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let se = (sse / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Unsupported(e.to_string()))?.inverse_cdf(0.975);
        t * se
    } else {
        f64::INFINITY
    };
    Ok(ScalingFit {
        solver: solver.into(),
        exponent: slope,
        intercept,
        ci_low: slope - half_width,
        ci_high: slope + half_width,
        points: points.to_vec(),
    })
}

/// Fits the median TTS against `n` for every solver in a summary.
pub fn scaling_report(summary: &[SummaryRow]) -> Result<Vec<ScalingFit>> {
    let mut solvers: Vec<&str> = summary.iter().map(|s| s.solver.as_str()).collect();
    solvers.sort_unstable();
    solvers.dedup();
    solvers
        .into_iter()
        .map(|solver| {
            let mut pts: Vec<(usize, f64)> =
                summary.iter().filter(|s| s.solver == solver).map(|s| (s.n, s.median_tts)).collect();
            pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal)));
            fit_power_law(solver, &pts)
        })
        .collect()
}
