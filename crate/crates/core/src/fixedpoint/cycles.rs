//! Cycle-cost model of the five-state annealing controller.
//!
//! Closed forms (in clock cycles, `f = floor(n / 32)`):
//!
//! ```text
//! T_s1  = n/2 + 5
//! T_s2  = n/2 + 10 + (n + 2) f
//! T_d   = n + 12 + (n + 2) f
//! T_s3  = L (T_d + 13 + n) = L (2n + 25 + (n + 2) f)
//! T_est = (2L + 1) n + 15 + 25 L + (L + 1)(n + 2) f
//! ```
//!
//! `n/2` is kept exact: counts are held in half cycles.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Nanoseconds per clock at 100 MHz.
pub const CLK_NS: f64 = 10.0;

/// Width of one accumulation tree (ADDER32 sums 32 inputs).
const ADDER_TREE_WIDTH: u64 = 32;
/// Pipeline depth of the ADDER32 tree.
const ADDER_TREE_STAGES: u64 = 5;

/// A cycle count with half-cycle resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CycleCount {
    half_cycles: u64,
}

impl CycleCount {
    pub const fn cycles(c: u64) -> Self {
        Self { half_cycles: 2 * c }
    }

    pub const fn half_cycles(h: u64) -> Self {
        Self { half_cycles: h }
    }

    /// Exact value, possibly ending in `.5`.
    pub fn exact(self) -> f64 {
        self.half_cycles as f64 / 2.0
    }

    /// Rounded up to whole clocks.
    pub fn ceil(self) -> u64 {
        self.half_cycles.div_ceil(2)
    }

    pub fn nanoseconds(self) -> f64 {
        self.exact() * CLK_NS
    }

    pub fn is_whole(self) -> bool {
        self.half_cycles.is_multiple_of(2)
    }
}

impl std::ops::Add for CycleCount {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self { half_cycles: self.half_cycles + rhs.half_cycles }
    }
}

impl std::ops::Mul<u64> for CycleCount {
    type Output = Self;

    fn mul(self, rhs: u64) -> Self {
        Self { half_cycles: self.half_cycles * rhs }
    }
}

impl std::iter::Sum for CycleCount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

impl fmt::Display for CycleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_whole() {
            write!(f, "{}", self.half_cycles / 2)
        } else {
            write!(f, "{}.5", self.half_cycles / 2)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleEstimate {
    pub n: u64,
    pub inner_steps: u64,
    pub t_s1: CycleCount,
    pub t_s2: CycleCount,
    pub t_d: CycleCount,
    pub t_s3: CycleCount,
    pub t_est: CycleCount,
}

impl CycleEstimate {
    pub fn nanoseconds(&self) -> f64 {
        self.t_est.nanoseconds()
    }
}

fn check(n: u64, l: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("cycle model needs n >= 1".into()));
    }
    if l == 0 {
        return Err(Error::InvalidConfig("cycle model needs L >= 1 (State 3 runs at least once)".into()));
    }
    Ok(())
}

/// Closed-form per-state cycle counts for one run with `n` spins and `l` inner steps.
pub fn cycle_estimate(n: u64, l: u64) -> Result<CycleEstimate> {
    check(n, l)?;
    let f = n / ADDER_TREE_WIDTH;
    let passes = (n + 2) * f;
    Ok(CycleEstimate {
        n,
        inner_steps: l,
        t_s1: CycleCount::half_cycles(n + 10),
        t_s2: CycleCount::half_cycles(n + 20 + 2 * passes),
        t_d: CycleCount::cycles(n + 12 + passes),
        t_s3: CycleCount::cycles(l * (2 * n + 25 + passes)),
        t_est: CycleCount::cycles((2 * l + 1) * n + 15 + 25 * l + (l + 1) * passes),
    })
}

/// One controller state visit.
#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub outer_step: u64,
    pub state: u8,
    pub label: &'static str,
    /// Named phases and their costs, in execution order.
    pub phases: Vec<(&'static str, CycleCount)>,
    pub total: CycleCount,
}

#[derive(Clone, Debug, Serialize)]
pub struct CycleLedger {
    pub n: u64,
    pub inner_steps: u64,
    pub entries: Vec<LedgerEntry>,
}

impl CycleLedger {
    /// Total cycles spent in `state` during outer step `outer_step`.
    pub fn state_total(&self, outer_step: u64, state: u8) -> CycleCount {
        self.entries.iter().filter(|e| e.outer_step == outer_step && e.state == state).map(|e| e.total).sum()
    }

    pub fn total(&self) -> CycleCount {
        self.entries.iter().map(|e| e.total).sum()
    }

    pub fn state_sequence(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.state).collect()
    }
}

/// Datapath timing used by the controller simulation.
struct Datapath {
    n: u64,
}

impl Datapath {
    /// Streaming `k` words over a two-word-per-clock bus: one half cycle per word.
    fn stream_pairs(&self, words: u64) -> CycleCount {
        (0..words).map(|_| CycleCount::half_cycles(1)).sum()
    }

    /// Streaming `k` words one per clock.
    fn stream(&self, words: u64) -> CycleCount {
        (0..words).map(|_| CycleCount::cycles(1)).sum()
    }

    /// Pipeline fill: one clock per stage.
    fn fill(&self, stages: u64) -> CycleCount {
        CycleCount::cycles(stages)
    }

    /// Quasi-gradient accumulation: each full 32-wide tree pass streams `n + 2` words.
    fn accumulate(&self) -> CycleCount {
        (0..self.n / ADDER_TREE_WIDTH).map(|_| self.stream(self.n + 2)).sum()
    }
}

/// Walks the controller through `outer_steps` runs of states 1→2→3→4→5 and
/// records the cycles charged to each state.
///
/// States 4 and 5 (acceptance/temperature and best-result bookkeeping) are
/// outside the single-run estimate and are charged zero cycles.
pub fn state_machine_trace(n: u64, l: u64, outer_steps: u64) -> Result<CycleLedger> {
    check(n, l)?;
    if outer_steps == 0 {
        return Err(Error::InvalidConfig("trace needs at least one outer step".into()));
    }
    let dp = Datapath { n };
    let mut entries = Vec::new();
    let mut push = |outer_step, state, label, phases: Vec<(&'static str, CycleCount)>| {
        let total = phases.iter().map(|p| p.1).sum();
        entries.push(LedgerEntry { outer_step, state, label, phases, total });
    };

    for outer in 1..=outer_steps {
        push(
            outer,
            1,
            "initialization",
            vec![("load x, v (two words/clk)", dp.stream_pairs(n)), ("ADDER32 fill", dp.fill(ADDER_TREE_STAGES))],
        );
        push(
            outer,
            2,
            "first v update",
            vec![
                ("load x (two words/clk)", dp.stream_pairs(n)),
                ("ADDER32 fill", dp.fill(ADDER_TREE_STAGES)),
                ("derivative block fill", dp.fill(5)),
                ("quasi-gradient accumulation", dp.accumulate()),
            ],
        );
        let mut s3 = Vec::new();
        for _ in 0..l {
            // v-dot block latency T_d.
            s3.push(("v-dot stream", dp.stream(n)));
            s3.push(("v-dot block fill", dp.fill(12)));
            s3.push(("quasi-gradient accumulation", dp.accumulate()));
            // Position update and Hamiltonian block.
            s3.push(("x update stream", dp.stream(n)));
            s3.push(("H block fill", dp.fill(13)));
        }
        push(outer, 3, "EM iterations", s3);
        push(outer, 4, "acceptance and temperature", vec![]);
        push(outer, 5, "best-result bookkeeping", vec![]);
    }
    Ok(CycleLedger { n, inner_steps: l, entries })
}
