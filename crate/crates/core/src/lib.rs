//! Parallel Ising annealing with gradient-based Hamiltonian Monte Carlo.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: Ising problems, spin configurations, energies and the text file format.
//! * [`hmc`]: the augmented Hamiltonian, the tanh-smoothed gradient and the
//!   position-then-momentum integrator.
//! * [`annealer`]: the outer annealing loop (momentum refresh, Metropolis
//!   correction, inverse-temperature schedule, best-so-far tracking).
//! * [`baselines`]: single-flip Metropolis annealing and exact zero-crossing GAHMC.
//! * [`problems`]: benchmark instance generators.
//! * [`fixedpoint`]: fixed-point emulation of the hardware datapath and its cycle model.
//! * [`bench`]: time-to-solution estimation, exhaustive ground states and scaling reports.

pub mod annealer;
pub mod baselines;
pub mod bench;
mod error;
pub mod fixedpoint;
pub mod hmc;
pub mod model;
pub mod problems;
pub mod rng;
pub mod solver;

pub use annealer::{anneal, AnnealConfig, BetaRule, RunResult};
pub use baselines::{gahmc_anneal, sa_anneal, GahmcConfig, SaConfig};
pub use error::{Error, Result};
pub use fixedpoint::{fx_anneal, FixedFormat};
pub use hmc::{HmcParams, PhaseState};
pub use model::{energy, IsingProblem, ProblemMeta, SpinConfig};
pub use problems::{generate, Family, GenSpec};
pub use solver::{Solver, SolverSpec};
