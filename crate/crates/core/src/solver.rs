//! A uniform handle over the four solvers.

use serde::{Deserialize, Serialize};

use crate::annealer::{anneal, AnnealConfig, RunResult};
use crate::baselines::{gahmc_anneal, sa_anneal, GahmcConfig, SaConfig};
use crate::error::{Error, Result};
use crate::fixedpoint::{fx_anneal, FixedFormat};
use crate::model::IsingProblem;

/// Something that can minimize an Ising energy from a seed.
pub trait Solver: Sync {
    /// Short identifier used in result rows.
    fn id(&self) -> &'static str;

    /// Runs once. The seed overrides whatever seed the configuration carries.
    fn solve(&self, problem: &IsingProblem, seed: u64) -> Result<RunResult>;
}

/// A solver together with its full configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum SolverSpec {
    Phia(AnnealConfig),
    PhiaFixed { config: AnnealConfig, format: FixedFormat },
    Sa(SaConfig),
    Gahmc(GahmcConfig),
}

impl SolverSpec {
    pub const IDS: [&'static str; 4] = ["phia", "phia-fixed", "sa", "gahmc"];

    /// Default configuration for a solver id.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "phia" => Ok(Self::Phia(AnnealConfig::default())),
            "phia-fixed" => Ok(Self::PhiaFixed { config: AnnealConfig::default(), format: FixedFormat::default() }),
            "sa" => Ok(Self::Sa(SaConfig::default())),
            "gahmc" => Ok(Self::Gahmc(GahmcConfig::default())),
            _ => Err(Error::InvalidConfig(format!("unknown solver `{id}` (expected one of {})", Self::IDS.join(", ")))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Phia(c) => c.validate(),
            Self::PhiaFixed { config, format } => {
                config.validate()?;
                format.validate()
            }
            Self::Sa(c) => c.validate(),
            Self::Gahmc(c) => c.validate(),
        }
    }

    /// Annealing steps per run: outer steps (one temperature level each) for
    /// the HMC solvers, sweeps for SA.
    pub fn anneal_steps(&self) -> usize {
        match self {
            Self::Phia(c) | Self::PhiaFixed { config: c, .. } => c.outer_steps,
            Self::Sa(c) => c.sweeps,
            Self::Gahmc(c) => c.outer_steps,
        }
    }

    /// Seed carried by the configuration.
    pub fn seed(&self) -> u64 {
        match self {
            Self::Phia(c) | Self::PhiaFixed { config: c, .. } => c.seed,
            Self::Sa(c) => c.seed,
            Self::Gahmc(c) => c.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Self::Phia(c) | Self::PhiaFixed { config: c, .. } => c.seed = seed,
            Self::Sa(c) => c.seed = seed,
            Self::Gahmc(c) => c.seed = seed,
        }
        self
    }
}

impl Solver for SolverSpec {
    fn id(&self) -> &'static str {
        match self {
            Self::Phia(_) => "phia",
            Self::PhiaFixed { .. } => "phia-fixed",
            Self::Sa(_) => "sa",
            Self::Gahmc(_) => "gahmc",
        }
    }

    fn solve(&self, problem: &IsingProblem, seed: u64) -> Result<RunResult> {
        match self.with_seed(seed) {
            Self::Phia(c) => anneal(problem, &c),
            Self::PhiaFixed { config, format } => fx_anneal(problem, &config, &format),
            Self::Sa(c) => sa_anneal(problem, &c),
            Self::Gahmc(c) => gahmc_anneal(problem, &c),
        }
    }
}
