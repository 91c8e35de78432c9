//! Solver flags and their resolution into a full configuration.

use clap::Args;
use phia_core::hmc::ForceModel;
use phia_core::{AnnealConfig, BetaRule, FixedFormat, GahmcConfig, HmcParams, Result, SaConfig, SolverSpec};

/// Every solver knob. Unset flags take the solver's default; the resolved
/// configuration is always echoed.
#[derive(Args, Debug, Clone, Default)]
pub struct SolverFlags {
    /// Tanh sharpness gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Integrator step size.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Integrator steps per trajectory (L).
    #[arg(long = "steps")]
    pub steps: Option<usize>,
    /// Use the fully smoothed force instead of the hard-sign quasi-gradient.
    #[arg(long)]
    pub smoothed_force: bool,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    /// Outer annealing steps (phia, phia-fixed, gahmc).
    #[arg(long)]
    pub outer_steps: Option<usize>,
    /// geometric | adaptive
    #[arg(long)]
    pub beta_rule: Option<BetaRule>,
    #[arg(long)]
    pub adapt_target: Option<f64>,
    /// Sweeps for the sa solver.
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Integration time per gahmc trajectory.
    #[arg(long)]
    pub trajectory_time: Option<f64>,
    /// Zero-crossing events allowed per gahmc trajectory.
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Fixed-point word length (phia-fixed).
    #[arg(long)]
    pub total_bits: Option<u32>,
    /// Fixed-point fractional bits (phia-fixed).
    #[arg(long)]
    pub frac_bits: Option<u32>,
    /// Keep the best-energy trace in the result.
    #[arg(long)]
    pub trace: bool,
}

impl SolverFlags {
    fn anneal(&self, seed: u64) -> AnnealConfig {
        let d = AnnealConfig::default();
        AnnealConfig {
            hmc: HmcParams {
                gamma: self.gamma.unwrap_or(d.hmc.gamma),
                epsilon: self.epsilon.unwrap_or(d.hmc.epsilon),
                steps: self.steps.unwrap_or(d.hmc.steps),
                beta: d.hmc.beta,
                force: if self.smoothed_force { ForceModel::Smoothed } else { ForceModel::HardSign },
            },
            beta_start: self.beta_start.unwrap_or(d.beta_start),
            beta_end: self.beta_end.unwrap_or(d.beta_end),
            outer_steps: self.outer_steps.unwrap_or(d.outer_steps),
            beta_rule: self.beta_rule.unwrap_or(d.beta_rule),
            adapt_target: self.adapt_target.unwrap_or(d.adapt_target),
            seed,
            record_trace: self.trace,
        }
    }

    /// Full configuration for `solver` with the given seed.
    pub fn resolve(&self, solver: &str, seed: u64) -> Result<SolverSpec> {
        let spec = match SolverSpec::from_id(solver)? {
            SolverSpec::Phia(_) => SolverSpec::Phia(self.anneal(seed)),
            SolverSpec::PhiaFixed { format, .. } => SolverSpec::PhiaFixed {
                config: self.anneal(seed),
                format: FixedFormat {
                    total_bits: self.total_bits.unwrap_or(format.total_bits),
                    frac_bits: self.frac_bits.unwrap_or(format.frac_bits),
                },
            },
            SolverSpec::Sa(d) => SolverSpec::Sa(SaConfig {
                sweeps: self.sweeps.unwrap_or(d.sweeps),
                beta_start: self.beta_start.unwrap_or(d.beta_start),
                beta_end: self.beta_end.unwrap_or(d.beta_end),
                seed,
                record_trace: self.trace,
            }),
            SolverSpec::Gahmc(d) => SolverSpec::Gahmc(GahmcConfig {
                trajectory_time: self.trajectory_time.unwrap_or(d.trajectory_time),
                outer_steps: self.outer_steps.unwrap_or(d.outer_steps),
                beta_start: self.beta_start.unwrap_or(d.beta_start),
                beta_end: self.beta_end.unwrap_or(d.beta_end),
                seed,
                max_events: self.max_events.unwrap_or(d.max_events),
                record_trace: self.trace,
            }),
        };
        spec.validate()?;
        Ok(spec)
    }
}
