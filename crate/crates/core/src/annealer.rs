//! The outer annealing loop.
//!
//! Each outer step resamples the momenta, integrates one trajectory at the
//! current inverse temperature, applies the Metropolis correction on the
//! hard-sign Hamiltonian and then advances the temperature schedule. The
//! best configuration is sampled after every inner integrator step.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmc::{self, HmcParams, PhaseState};
use crate::model::{IsingProblem, SpinConfig};
use crate::rng::{self, Purpose};

/// How the inverse temperature advances between outer steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    #[default]
    Geometric,
    /// Geometric ratio further scaled by 1.05 or 1/1.05 depending on the acceptance rate.
    Adaptive,
}

impl std::str::FromStr for BetaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "adaptive" => Ok(Self::Adaptive),
            _ => Err(Error::InvalidConfig(format!("unknown beta rule `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    /// `gamma`, `epsilon` and `L`; the `beta` field is overwritten by the schedule.
    pub hmc: HmcParams,
    pub beta_start: f64,
    pub beta_end: f64,
    pub outer_steps: usize,
    pub beta_rule: BetaRule,
    pub adapt_target: f64,
    pub seed: u64,
    /// Keep `(step, best_E)` pairs for every outer step.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            hmc: HmcParams::default(),
            beta_start: 0.1,
            beta_end: 10.0,
            outer_steps: 1000,
            beta_rule: BetaRule::Geometric,
            adapt_target: 0.5,
            seed: 0,
            record_trace: false,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        HmcParams { beta: self.beta_start, ..self.hmc }.validate()?;
        validate_schedule(self.beta_start, self.beta_end, self.outer_steps)?;
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::InvalidConfig(format!("adapt_target must lie in (0, 1), got {}", self.adapt_target)));
        }
        Ok(())
    }

    /// Per-step ratio of the geometric schedule.
    pub fn geometric_ratio(&self) -> f64 {
        geometric_ratio(self.beta_start, self.beta_end, self.outer_steps)
    }
}

pub(crate) fn validate_schedule(beta_start: f64, beta_end: f64, steps: usize) -> Result<()> {
    if !(beta_start > 0.0 && beta_start.is_finite() && beta_end.is_finite()) {
        return Err(Error::InvalidConfig(format!("beta_start must be positive and finite, got {beta_start}")));
    }
    if beta_start > beta_end {
        return Err(Error::InvalidConfig(format!("beta_start {beta_start} exceeds beta_end {beta_end}")));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("step count must be at least 1".into()));
    }
    Ok(())
}

pub(crate) fn geometric_ratio(beta_start: f64, beta_end: f64, steps: usize) -> f64 {
    (beta_end / beta_start).powf(1.0 / steps as f64)
}

/// Inverse temperature for the next outer step, clamped to `[beta_start, beta_end]`.
///
/// An acceptance rate exactly at the adaptive target leaves the geometric ratio unchanged.
pub fn next_beta(beta: f64, acc_rate: f64, config: &AnnealConfig) -> f64 {
    let mut ratio = config.geometric_ratio();
    if config.beta_rule == BetaRule::Adaptive {
        if acc_rate > config.adapt_target {
            ratio *= 1.05;
        } else if acc_rate < config.adapt_target {
            ratio /= 1.05;
        }
    }
    (beta * ratio).clamp(config.beta_start, config.beta_end)
}

/// Outcome of one annealing run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub best_spins: SpinConfig,
    pub best_energy: f64,
    /// Seconds.
    pub wall_time: f64,
    pub outer_steps_run: usize,
    pub acceptance_rate: f64,
    /// Trajectories abandoned because positions or momenta blew up.
    #[serde(default)]
    pub divergences: usize,
    /// Fixed-point saturation events (fixed-point runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_trace: Option<Vec<(usize, f64)>>,
}

impl RunResult {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.best_spins == other.best_spins
            && self.best_energy.to_bits() == other.best_energy.to_bits()
            && self.outer_steps_run == other.outer_steps_run
            && self.acceptance_rate.to_bits() == other.acceptance_rate.to_bits()
            && self.divergences == other.divergences
            && self.saturations == other.saturations
            && self.energy_trace == other.energy_trace
    }
}

pub(crate) fn standard_normal_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Runs the parallel HMC annealer. Deterministic in `(problem, config)`.
pub fn anneal(problem: &IsingProblem, config: &AnnealConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let n = problem.n();

    let mut init_rng = rng::stream(config.seed, Purpose::InitialState);
    let mut momentum_rng = rng::stream(config.seed, Purpose::Momentum);
    let mut accept_rng = rng::stream(config.seed, Purpose::Acceptance);

    let x = standard_normal_vec(n, &mut init_rng);
    let v = standard_normal_vec(n, &mut init_rng);
    let mut state = PhaseState { x, v };

    let mut best_spins = state.spins();
    let mut best_energy = problem.energy_of(best_spins.as_slice());
    let mut trace = config.record_trace.then(|| vec![(0usize, best_energy)]);

    let mut beta = config.beta_start;
    let mut accepted = 0usize;
    let mut divergences = 0usize;

    for step in 1..=config.outer_steps {
        state.v = standard_normal_vec(n, &mut momentum_rng);
        let params = HmcParams { beta, ..config.hmc };
        let h_old = hmc::hamiltonian(problem, &state, beta)?;
        let u: f64 = accept_rng.gen();

        match hmc::trajectory_below(problem, &state, &params, best_energy) {
            Ok(traj) => {
                if let Some(b) = traj.improvements.last() {
                    best_energy = b.energy;
                    best_spins = b.spins.clone();
                }
                let h_new = hmc::hamiltonian(problem, &traj.state, beta)?;
                if hmc::accept(h_old, h_new, u) {
                    state = traj.state;
                    accepted += 1;
                }
            }
            Err(Error::Divergence { .. }) => divergences += 1,
            Err(e) => return Err(e),
        }

        if let Some(t) = trace.as_mut() {
            t.push((step, best_energy));
        }
        beta = next_beta(beta, accepted as f64 / step as f64, config);
    }

    Ok(RunResult {
        best_spins,
        best_energy,
        wall_time: started.elapsed().as_secs_f64(),
        outer_steps_run: config.outer_steps,
        acceptance_rate: accepted as f64 / config.outer_steps as f64,
        divergences,
        saturations: None,
        energy_trace: trace,
    })
}
