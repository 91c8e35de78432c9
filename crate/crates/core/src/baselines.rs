//! Reference solvers: single-flip Metropolis annealing and exact GAHMC.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annealer::{geometric_ratio, standard_normal_vec, validate_schedule, RunResult};
use crate::error::{Error, Result};
use crate::hmc::PhaseState;
use crate::model::{IsingProblem, SpinConfig};
use crate::rng::{self, Purpose};

/// Single-flip simulated annealing settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub sweeps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { sweeps: 1000, beta_start: 0.1, beta_end: 10.0, seed: 0, record_trace: false }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        validate_schedule(self.beta_start, self.beta_end, self.sweeps)
    }
}

/// Metropolis simulated annealing with one random-order sweep per temperature.
///
/// The inverse temperature moves geometrically from `beta_start` on the first
/// sweep to `beta_end` on the last. The best configuration is checked at the
/// end of every sweep.
pub fn sa_anneal(problem: &IsingProblem, config: &SaConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let n = problem.n();
    let mut init_rng = rng::stream(config.seed, Purpose::InitialState);
    let mut order_rng = rng::stream(config.seed, Purpose::SpinOrder);
    let mut accept_rng = rng::stream(config.seed, Purpose::Acceptance);

    let mut spins: Vec<i8> = (0..n).map(|_| if init_rng.gen::<bool>() { 1 } else { -1 }).collect();
    let mut fields: Vec<f64> = (0..n).map(|i| problem.local_field_of(&spins, i)).collect();
    let mut current = problem.energy_of(&spins);
    let mut best_energy = current;
    let mut best_spins = spins.clone();
    let mut trace = config.record_trace.then(|| vec![(0usize, best_energy)]);

    let ratio = geometric_ratio(config.beta_start, config.beta_end, config.sweeps.saturating_sub(1).max(1));
    let mut beta = config.beta_start;
    let mut order: Vec<usize> = (0..n).collect();
    let (mut proposals, mut flips) = (0u64, 0u64);

    for sweep in 1..=config.sweeps {
        order.shuffle(&mut order_rng);
        for &i in &order {
            let s_i = f64::from(spins[i]);
            let delta = 2.0 * s_i * fields[i];
            proposals += 1;
            if delta <= 0.0 || accept_rng.gen::<f64>() < (-beta * delta).exp() {
                spins[i] = -spins[i];
                current += delta;
                flips += 1;
                for (j, w) in problem.neighbors(i) {
                    fields[j] -= 2.0 * w * s_i;
                }
            }
        }
        if current < best_energy {
            let exact = problem.energy_of(&spins);
            current = exact;
            if exact < best_energy {
                best_energy = exact;
                best_spins.copy_from_slice(&spins);
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push((sweep, best_energy));
        }
        beta = (beta * ratio).min(config.beta_end);
    }

    Ok(RunResult {
        best_spins: SpinConfig::new(best_spins)?,
        best_energy,
        wall_time: started.elapsed().as_secs_f64(),
        outer_steps_run: config.sweeps,
        acceptance_rate: if proposals == 0 { 0.0 } else { flips as f64 / proposals as f64 },
        divergences: 0,
        saturations: None,
        energy_trace: trace,
    })
}

/// Exact Gaussian-augmented HMC settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GahmcConfig {
    /// Integration time per trajectory.
    pub trajectory_time: f64,
    pub outer_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
    /// Zero-crossing events allowed per trajectory before it is cut short.
    pub max_events: usize,
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for GahmcConfig {
    fn default() -> Self {
        Self {
            trajectory_time: FRAC_PI_2,
            outer_steps: 1000,
            beta_start: 0.1,
            beta_end: 10.0,
            seed: 0,
            max_events: 10_000,
            record_trace: false,
        }
    }
}

impl GahmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.trajectory_time > 0.0 && self.trajectory_time.is_finite()) {
            return Err(Error::InvalidConfig(format!("trajectory_time must be positive, got {}", self.trajectory_time)));
        }
        if self.max_events == 0 {
            return Err(Error::InvalidConfig("max_events must be at least 1".into()));
        }
        validate_schedule(self.beta_start, self.beta_end, self.outer_steps)
    }
}

/// What happened at a wall `x_i = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallEvent {
    Crossed(usize),
    Reflected(usize),
}

/// Result of integrating the exact piecewise-harmonic dynamics.
#[derive(Clone, Debug)]
pub struct GahmcTrajectory {
    pub state: PhaseState,
    /// Spin configuration tracked through the events; agrees with `sign(x)`
    /// except on coordinates sitting exactly on a wall.
    pub spins: SpinConfig,
    /// `E(spins)`, updated incrementally.
    pub energy: f64,
    pub events: Vec<WallEvent>,
    /// Integration time actually covered (shorter than requested when the event budget ran out).
    pub elapsed: f64,
}

impl GahmcTrajectory {
    pub fn crossings(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, WallEvent::Crossed(_))).count()
    }
}

/// Time until coordinate `i` next reaches its wall, given the spin it currently carries.
fn time_to_wall(x: f64, v: f64, s: i8) -> f64 {
    if x == 0.0 && v == 0.0 {
        return f64::INFINITY;
    }
    let on_wall = x == 0.0 || (x > 0.0) != (s > 0);
    if on_wall {
        // Either leaving through the wall right now or heading back inside.
        return if f64::from(s) * v < 0.0 { 0.0 } else { PI };
    }
    let t = (v.atan2(x) + FRAC_PI_2).rem_euclid(PI);
    if t == 0.0 {
        PI
    } else {
        t
    }
}

/// `beta E(s) + |x|^2/2 + |v|^2/2` with the spins supplied explicitly.
pub fn hamiltonian_with_spins(problem: &IsingProblem, state: &PhaseState, spins: &SpinConfig, beta: f64) -> f64 {
    beta * problem.energy_of(spins.as_slice())
        + 0.5 * state.x.iter().map(|x| x * x).sum::<f64>()
        + 0.5 * state.v.iter().map(|v| v * v).sum::<f64>()
}

/// Integrates `H = beta E(s) + |x|^2/2 + |v|^2/2` exactly for `time`.
///
/// Between walls every coordinate rotates as `x(t) = x cos t + v sin t`. At a
/// wall the coordinate crosses with its momentum magnitude reduced by the
/// energy jump `beta ΔE`, or reflects when its kinetic energy `v^2/2` does not
/// exceed the jump. Simultaneous walls are handled in index order.
pub fn gahmc_trajectory(
    problem: &IsingProblem,
    state: &PhaseState,
    spins: &SpinConfig,
    beta: f64,
    time: f64,
    max_events: usize,
) -> Result<GahmcTrajectory> {
    problem.check_len(state.x.len())?;
    problem.check_len(state.v.len())?;
    problem.check_len(spins.len())?;
    let n = problem.n();
    let mut x = state.x.clone();
    let mut v = state.v.clone();
    let mut s: Vec<i8> = spins.as_slice().to_vec();
    let mut energy = problem.energy_of(&s);
    let mut events = Vec::new();
    let mut remaining = time;
    let mut wall_times: Vec<f64> = (0..n).map(|i| time_to_wall(x[i], v[i], s[i])).collect();

    loop {
        let (next, tau) = wall_times
            .iter()
            .copied()
            .enumerate()
            .fold((usize::MAX, f64::INFINITY), |acc, (i, t)| if t < acc.1 { (i, t) } else { acc });
        let step = tau.min(remaining);
        if step > 0.0 {
            let (sin, cos) = step.sin_cos();
            for (xi, vi) in x.iter_mut().zip(v.iter_mut()) {
                let (x0, v0) = (*xi, *vi);
                *xi = x0 * cos + v0 * sin;
                *vi = v0 * cos - x0 * sin;
            }
            remaining -= step;
        }
        if tau > step || next == usize::MAX {
            break;
        }

        let i = next;
        x[i] = 0.0;
        let jump = beta * 2.0 * f64::from(s[i]) * problem.local_field_of(&s, i);
        if 0.5 * v[i] * v[i] > jump {
            v[i] = v[i].signum() * (v[i] * v[i] - 2.0 * jump).sqrt();
            s[i] = -s[i];
            energy += jump / beta;
            events.push(WallEvent::Crossed(i));
        } else {
            v[i] = -v[i];
            events.push(WallEvent::Reflected(i));
        }

        // Rotation moved every coordinate; refresh all wall times.
        for j in 0..n {
            wall_times[j] = time_to_wall(x[j], v[j], s[j]);
        }
        if events.len() >= max_events || remaining <= 0.0 {
            break;
        }
    }

    Ok(GahmcTrajectory {
        state: PhaseState { x, v },
        spins: SpinConfig::new(s)?,
        energy,
        events,
        elapsed: time - remaining,
    })
}

/// Vanilla exact GAHMC annealing: every trajectory is accepted.
pub fn gahmc_anneal(problem: &IsingProblem, config: &GahmcConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let n = problem.n();
    let mut init_rng = rng::stream(config.seed, Purpose::InitialState);
    let mut momentum_rng = rng::stream(config.seed, Purpose::Momentum);

    let mut state = PhaseState { x: standard_normal_vec(n, &mut init_rng), v: vec![0.0; n] };
    let mut spins = state.spins();
    let mut best_spins = spins.clone();
    let mut best_energy = problem.energy_of(spins.as_slice());
    let mut trace = config.record_trace.then(|| vec![(0usize, best_energy)]);

    let ratio = geometric_ratio(config.beta_start, config.beta_end, config.outer_steps);
    let mut beta = config.beta_start;
    for step in 1..=config.outer_steps {
        state.v = standard_normal_vec(n, &mut momentum_rng);
        let traj = gahmc_trajectory(problem, &state, &spins, beta, config.trajectory_time, config.max_events)?;
        state = traj.state;
        spins = traj.spins;
        if traj.energy < best_energy {
            let exact = problem.energy_of(spins.as_slice());
            if exact < best_energy {
                best_energy = exact;
                best_spins = spins.clone();
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push((step, best_energy));
        }
        beta = (beta * ratio).min(config.beta_end);
    }

    Ok(RunResult {
        best_spins,
        best_energy,
        wall_time: started.elapsed().as_secs_f64(),
        outer_steps_run: config.outer_steps,
        acceptance_rate: 1.0,
        divergences: 0,
        saturations: None,
        energy_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::energy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, seed: u64) -> IsingProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                c.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        let h = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        IsingProblem::new(n, c, h).unwrap()
    }

    #[test]
    fn sa_single_spin() {
        let p = IsingProblem::new(1, vec![], vec![1.0]).unwrap();
        for seed in 0..10 {
            let r = sa_anneal(&p, &SaConfig { sweeps: 5, seed, ..SaConfig::default() }).unwrap();
            assert_eq!(r.best_energy, -1.0);
        }
    }

    #[test]
    fn sa_greedy_limit() {
        let p = IsingProblem::new(2, vec![(0, 1, 1.0)], vec![0.0; 2]).unwrap();
        for seed in 0..10 {
            let c = SaConfig { sweeps: 3, beta_start: 1e9, beta_end: 1e9, seed, ..SaConfig::default() };
            assert_eq!(sa_anneal(&p, &c).unwrap().best_energy, -1.0);
        }
    }

    #[test]
    fn sa_is_reproducible_and_consistent() {
        let p = random_problem(30, 1);
        let c = SaConfig { sweeps: 200, seed: 5, record_trace: true, ..SaConfig::default() };
        let a = sa_anneal(&p, &c).unwrap();
        assert!(a.same_outcome(&sa_anneal(&p, &c).unwrap()));
        assert_eq!(a.best_energy, energy(&p, &a.best_spins).unwrap());
        let t = a.energy_trace.unwrap();
        assert!(t.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn wall_time_geometry() {
        // x(t) = cos t: first zero at pi/2.
        assert!((time_to_wall(1.0, 0.0, 1) - FRAC_PI_2).abs() < 1e-15);
        // x(t) = sin t from the wall, moving inward: next wall after a half period.
        assert_eq!(time_to_wall(0.0, 1.0, 1), PI);
        // Moving outward from the wall: immediate.
        assert_eq!(time_to_wall(0.0, -1.0, 1), 0.0);
        // Heading toward zero from below.
        let t = time_to_wall(-1.0, 1.0, -1);
        assert!((-(t.cos()) + t.sin()).abs() < 1e-15);
        assert!(t > 0.0 && t < FRAC_PI_2);
        assert_eq!(time_to_wall(0.0, 0.0, 1), f64::INFINITY);
    }

    #[test]
    fn zero_problem_rotates_back_after_full_period() {
        let p = IsingProblem::new(4, vec![], vec![0.0; 4]).unwrap();
        let st = PhaseState::new(vec![0.3, -1.2, 0.8, -0.1], vec![1.0, 0.4, -0.7, 0.05]).unwrap();
        let traj = gahmc_trajectory(&p, &st, &st.spins(), 1.0, 2.0 * PI, 10_000).unwrap();
        for (a, b) in traj.state.x.iter().zip(&st.x).chain(traj.state.v.iter().zip(&st.v)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(traj.events.iter().all(|e| matches!(e, WallEvent::Crossed(_))));
        assert_eq!(traj.spins, st.spins());
    }

    #[test]
    fn barrier_reflects_slow_coordinate() {
        // s = -1 is the ground state for h < 0, so crossing to +1 costs 2|h|.
        let p = IsingProblem::new(1, vec![], vec![-10.0]).unwrap();
        let st = PhaseState::new(vec![-0.01], vec![0.05]).unwrap();
        let traj = gahmc_trajectory(&p, &st, &st.spins(), 1.0, 1.0, 100).unwrap();
        assert_eq!(traj.spins.as_slice(), &[-1]);
        assert_eq!(traj.events, vec![WallEvent::Reflected(0)]);
        assert!(traj.state.x[0] < 0.0);
    }

    #[test]
    fn fast_coordinate_crosses_with_reduced_speed() {
        // E(+1) - E(-1) = -2 h = -2 for h = 1: crossing to +1 releases energy.
        let p = IsingProblem::new(1, vec![], vec![1.0]).unwrap();
        let st = PhaseState::new(vec![-1e-3], vec![1.0]).unwrap();
        let traj = gahmc_trajectory(&p, &st, &st.spins(), 0.5, 1e-3 + 1e-9, 10).unwrap();
        assert_eq!(traj.events, vec![WallEvent::Crossed(0)]);
        assert_eq!(traj.spins.as_slice(), &[1]);
        // v^2 - 2 beta ΔE = 1 + 2 * 0.5 * 2 = 3 (to first order in the tiny rotation).
        assert!((traj.state.v[0] - 3f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn exact_dynamics_conserve_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..5 {
            let p = random_problem(16, seed);
            let st = PhaseState::new(standard_normal_vec(16, &mut rng), standard_normal_vec(16, &mut rng)).unwrap();
            let spins = st.spins();
            let beta = 1.0;
            let h0 = hamiltonian_with_spins(&p, &st, &spins, beta);
            let traj = gahmc_trajectory(&p, &st, &spins, beta, 1e6, 10_000).unwrap();
            assert!(traj.crossings() >= 1000, "{}", traj.crossings());
            let h1 = hamiltonian_with_spins(&p, &traj.state, &traj.spins, beta);
            assert!((h1 - h0).abs() <= 1e-6, "{h0} -> {h1}");
            assert!((traj.energy - energy(&p, &traj.spins).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn event_budget_bounds_trajectory() {
        let p = random_problem(8, 3);
        let st = PhaseState::new(vec![0.5; 8], vec![1.0; 8]).unwrap();
        let traj = gahmc_trajectory(&p, &st, &st.spins(), 1.0, 1e6, 25).unwrap();
        assert_eq!(traj.events.len(), 25);
        assert!(traj.elapsed < 1e6);
    }

    #[test]
    fn gahmc_anneal_finds_small_ground_state() {
        let p = IsingProblem::new(2, vec![(0, 1, 1.0)], vec![0.0; 2]).unwrap();
        for seed in 0..10 {
            let c = GahmcConfig { outer_steps: 50, seed, ..GahmcConfig::default() };
            let r = gahmc_anneal(&p, &c).unwrap();
            assert_eq!(r.best_energy, -1.0);
            assert!(r.same_outcome(&gahmc_anneal(&p, &c).unwrap()));
        }
    }

    #[test]
    fn invalid_configs() {
        let p = IsingProblem::new(1, vec![], vec![1.0]).unwrap();
        assert!(sa_anneal(&p, &SaConfig { sweeps: 0, ..SaConfig::default() }).is_err());
        assert!(gahmc_anneal(&p, &GahmcConfig { trajectory_time: 0.0, ..GahmcConfig::default() }).is_err());
    }
}
