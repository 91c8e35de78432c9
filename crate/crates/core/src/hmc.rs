//! Gradient-based HMC over the Gaussian-augmented Ising landscape.
//!
//! Spins are tied to continuous positions by `s = sign(x)`. The augmented
//! Hamiltonian is
//!
//! ```text
//! H(x, v) = beta * E(sign x) + |x|^2 / 2 + |v|^2 / 2
//! ```
//!
//! and the non-differentiable `sign` is replaced by `tanh(gamma x)` only where
//! a derivative is needed. One integrator step moves every position, then
//! every momentum, with all components independent given the previous
//! snapshot.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{IsingProblem, SpinConfig};

/// Positions or momenta beyond this magnitude abort the trajectory.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Below this size the per-component loops run serially.
const PARALLEL_MIN_SPINS: usize = 4096;

/// Continuous positions `x` and momenta `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), actual: v.len() });
        }
        if x.iter().chain(&v).any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("phase state must be finite".into()));
        }
        Ok(Self { x, v })
    }

    pub fn zeros(n: usize) -> Self {
        Self { x: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn spins(&self) -> SpinConfig {
        SpinConfig::from_positions(&self.x)
    }

    fn check(&self, problem: &IsingProblem) -> Result<()> {
        problem.check_len(self.x.len())?;
        problem.check_len(self.v.len())
    }
}

/// Which force drives the momentum update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceModel {
    /// Quasi-gradient on hard signs, tanh derivative as the chain-rule factor.
    #[default]
    HardSign,
    /// Gradient of the fully tanh-relaxed Hamiltonian.
    Smoothed,
}

/// Integrator hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HmcParams {
    /// Sharpness of the tanh surrogate.
    pub gamma: f64,
    /// Step size.
    pub epsilon: f64,
    /// Inner steps per trajectory.
    pub steps: usize,
    /// Inverse temperature.
    pub beta: f64,
    #[serde(default)]
    pub force: ForceModel,
}

impl Default for HmcParams {
    fn default() -> Self {
        Self { gamma: 2.0, epsilon: 0.1, steps: 10, beta: 1.0, force: ForceModel::HardSign }
    }
}

impl HmcParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("gamma", self.gamma)?;
        positive("epsilon", self.epsilon)?;
        positive("beta", self.beta)?;
        if self.steps == 0 {
            return Err(Error::InvalidConfig("inner steps L must be at least 1".into()));
        }
        Ok(())
    }
}

/// `sign(x)` with `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

#[inline]
pub fn tanh_sign(x: f64, gamma: f64) -> f64 {
    (gamma * x).tanh()
}

/// `d/dx tanh(gamma x) = gamma (1 - tanh^2(gamma x))`.
#[inline]
pub fn dtanh_sign(x: f64, gamma: f64) -> f64 {
    // sech^2(y) = 4 e^{-2|y|} / (1 + e^{-2|y|})^2, free of the 1 - tanh^2 cancellation.
    let e = (-2.0 * (gamma * x).abs()).exp();
    gamma * 4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// `I_i = Σ_j J_ij s_j + h_i`, i.e. `-∂E/∂s_i`.
pub fn quasi_gradient(problem: &IsingProblem, s: &SpinConfig) -> Result<Vec<f64>> {
    problem.check_len(s.len())?;
    let spins = s.as_slice();
    Ok((0..problem.n()).map(|i| problem.local_field_of(spins, i)).collect())
}

/// `beta E(sign x) + |x|^2/2 + |v|^2/2`.
pub fn hamiltonian(problem: &IsingProblem, state: &PhaseState, beta: f64) -> Result<f64> {
    state.check(problem)?;
    let s = state.spins();
    Ok(beta * problem.energy_of(s.as_slice()) + kinetic_and_gaussian(state))
}

/// Same as [`hamiltonian`] with `tanh(gamma x)` in place of `sign x`.
pub fn smoothed_hamiltonian(problem: &IsingProblem, state: &PhaseState, beta: f64, gamma: f64) -> Result<f64> {
    state.check(problem)?;
    let t: Vec<f64> = state.x.iter().map(|&x| tanh_sign(x, gamma)).collect();
    Ok(beta * problem.energy_of(&t) + kinetic_and_gaussian(state))
}

fn kinetic_and_gaussian(state: &PhaseState) -> f64 {
    0.5 * state.x.iter().map(|x| x * x).sum::<f64>() + 0.5 * state.v.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`smoothed_hamiltonian`] in `x`:
/// `x_i - beta * dtanh(x_i) * (Σ_j J_ij tanh(gamma x_j) + h_i)`.
pub fn smoothed_gradient(problem: &IsingProblem, x: &[f64], beta: f64, gamma: f64) -> Result<Vec<f64>> {
    problem.check_len(x.len())?;
    let t: Vec<f64> = x.iter().map(|&xi| tanh_sign(xi, gamma)).collect();
    Ok((0..problem.n())
        .map(|i| x[i] - beta * dtanh_sign(x[i], gamma) * problem.local_field_of(&t, i))
        .collect())
}

/// Momentum derivative `beta * dtanh(x_i) * I_i(sign x) - x_i`.
pub fn v_dot(problem: &IsingProblem, x: &[f64], beta: f64, gamma: f64) -> Result<Vec<f64>> {
    problem.check_len(x.len())?;
    let s: Vec<f64> = x.iter().map(|&xi| f64::from(sign(xi))).collect();
    Ok((0..problem.n())
        .map(|i| beta * dtanh_sign(x[i], gamma) * problem.local_field_of(&s, i) - x[i])
        .collect())
}

/// One position-then-momentum step: `x' = x + eps v`, `v' = v + eps v_dot(x')`.
pub fn em_update(problem: &IsingProblem, state: &PhaseState, params: &HmcParams) -> Result<PhaseState> {
    params.validate()?;
    state.check(problem)?;
    let mut next = state.clone();
    let mut ws = Workspace::new(problem.n());
    ws.step(problem, &mut next, params);
    if next.x.iter().chain(&next.v).any(|c| !c.is_finite()) {
        return Err(Error::Divergence { step: 0 });
    }
    Ok(next)
}

/// A spin configuration that improved on everything seen before it.
#[derive(Clone, Debug, PartialEq)]
pub struct Improvement {
    /// 1-based inner step at which it was observed.
    pub step: usize,
    pub spins: SpinConfig,
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub state: PhaseState,
    /// Strict energy improvements in the order they were met.
    pub improvements: Vec<Improvement>,
}

impl Trajectory {
    pub fn best(&self) -> Option<&Improvement> {
        self.improvements.last()
    }
}

/// Applies `params.steps` integrator steps, recording every strict improvement of `E(sign x)`.
pub fn trajectory(problem: &IsingProblem, state: &PhaseState, params: &HmcParams) -> Result<Trajectory> {
    trajectory_below(problem, state, params, f64::INFINITY)
}

/// Like [`trajectory`], but only configurations below `threshold` count as improvements.
pub fn trajectory_below(
    problem: &IsingProblem,
    state: &PhaseState,
    params: &HmcParams,
    threshold: f64,
) -> Result<Trajectory> {
    params.validate()?;
    state.check(problem)?;
    let mut ws = Workspace::new(problem.n());
    let mut current = state.clone();
    let mut improvements = Vec::new();
    let mut best = threshold;
    for step in 1..=params.steps {
        let approx_e = ws.step(problem, &mut current, params);
        if current.x.iter().chain(&current.v).any(|c| !c.is_finite() || c.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Divergence { step });
        }
        if approx_e < best + 1e-9 * (1.0 + best.abs().min(f64::MAX)) {
            let spins = current.spins();
            let e = problem.energy_of(spins.as_slice());
            if e < best {
                best = e;
                improvements.push(Improvement { step, spins, energy: e });
            }
        }
    }
    Ok(Trajectory { state: current, improvements })
}

/// `true` iff `u < min(1, exp(-(h_new - h_old)))`.
pub fn accept(h_old: f64, h_new: f64, u: f64) -> bool {
    let delta = h_new - h_old;
    if delta.is_nan() {
        return false;
    }
    if delta <= 0.0 {
        return true;
    }
    u < (-delta).exp()
}

/// Scratch buffers for the in-place integrator step.
pub(crate) struct Workspace {
    spins: Vec<f64>,
    /// Local fields `I(spins)`, patched incrementally when signs change.
    fields: Vec<f64>,
    aux: Vec<f64>,
    primed: bool,
}

impl Workspace {
    pub(crate) fn new(n: usize) -> Self {
        Self { spins: vec![0.0; n], fields: vec![0.0; n], aux: vec![0.0; n], primed: false }
    }

    /// Brings `spins` and `fields` in line with `sign(x)`.
    fn sync_signs(&mut self, problem: &IsingProblem, x: &[f64]) {
        if !self.primed {
            for (s, &xi) in self.spins.iter_mut().zip(x) {
                *s = f64::from(sign(xi));
            }
            for i in 0..x.len() {
                self.fields[i] = problem.local_field_of(&self.spins, i);
            }
            self.primed = true;
            return;
        }
        for (i, &xi) in x.iter().enumerate() {
            let s = f64::from(sign(xi));
            if s != self.spins[i] {
                let delta = s - self.spins[i];
                for (j, w) in problem.neighbors(i) {
                    self.fields[j] += w * delta;
                }
                self.spins[i] = s;
            }
        }
    }

    /// Advances `state` by one step and returns an estimate of `E(sign x')`
    /// computed from the local fields of the step.
    pub(crate) fn step(&mut self, problem: &IsingProblem, state: &mut PhaseState, params: &HmcParams) -> f64 {
        let eps = params.epsilon;
        let (beta, gamma) = (params.beta, params.gamma);
        let n = problem.n();
        let parallel = n >= PARALLEL_MIN_SPINS;

        if parallel {
            state.x.par_iter_mut().zip(&state.v).for_each(|(x, v)| *x += eps * v);
        } else {
            state.x.iter_mut().zip(&state.v).for_each(|(x, v)| *x += eps * v);
        }
        self.sync_signs(problem, &state.x);
        if params.force == ForceModel::Smoothed {
            for (t, &x) in self.aux.iter_mut().zip(&state.x) {
                *t = tanh_sign(x, gamma);
            }
        }
        let (spins, fields, aux) = (&self.spins, &self.fields, &self.aux);
        let x = &state.x;
        let h = problem.fields();
        let update = |i: usize, v: &mut f64| -> f64 {
            let field = match params.force {
                ForceModel::HardSign => fields[i],
                ForceModel::Smoothed => problem.local_field_of(aux, i),
            };
            *v += eps * (beta * dtanh_sign(x[i], gamma) * field - x[i]);
            // -(1/2) s_i (I_i + h_i) summed over i gives E(s).
            -0.5 * spins[i] * (fields[i] + h[i])
        };
        if parallel {
            state.v.par_iter_mut().enumerate().map(|(i, v)| update(i, v)).sum()
        } else {
            state.v.iter_mut().enumerate().map(|(i, v)| update(i, v)).sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::energy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, rng: &mut impl Rng, with_fields: bool) -> IsingProblem {
        let mut c = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.7) {
                    c.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        let h = (0..n).map(|_| if with_fields { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        IsingProblem::new(n, c, h).unwrap()
    }

    fn gaussian(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn zero_problem(n: usize) -> IsingProblem {
        IsingProblem::new(n, vec![], vec![0.0; n]).unwrap()
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sign(0.7), 1);
        assert_eq!(sign(-0.7), -1);
        assert_eq!(sign(0.0), 1);
        assert_eq!(sign(-0.0), 1);
    }

    #[test]
    fn tanh_examples() {
        assert_eq!(tanh_sign(0.0, 3.0), 0.0);
        assert!((tanh_sign(2.0, 10.0) - 1.0).abs() < 1e-8);
        assert!((tanh_sign(0.5, 1.0) - 0.462_117_157_260_009_8).abs() < 1e-15);
    }

    #[test]
    fn dtanh_examples() {
        assert_eq!(dtanh_sign(0.0, 2.0), 2.0);
        assert_eq!(dtanh_sign(1e3, 2.0), 0.0);
        assert_eq!(dtanh_sign(-1e3, 2.0), 0.0);
        let h = 1e-5;
        let fd = (tanh_sign(0.5 + h, 1.0) - tanh_sign(0.5 - h, 1.0)) / (2.0 * h);
        assert!((fd - dtanh_sign(0.5, 1.0)).abs() < 1e-8);
    }

    #[test]
    fn quasi_gradient_examples() {
        let p = IsingProblem::new(2, vec![(0, 1, 1.0)], vec![0.0; 2]).unwrap();
        let s = SpinConfig::new(vec![1, -1]).unwrap();
        assert_eq!(quasi_gradient(&p, &s).unwrap(), vec![-1.0, 1.0]);

        let h = vec![0.5, -2.0, 1.25];
        let p = IsingProblem::new(3, vec![], h.clone()).unwrap();
        for bits in 0..8 {
            assert_eq!(quasi_gradient(&p, &SpinConfig::from_bits(3, bits)).unwrap(), h);
        }
    }

    #[test]
    fn quasi_gradient_matches_two_point_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_problem(8, &mut rng, true);
        for bits in [0u64, 37, 255, 170] {
            let s = SpinConfig::from_bits(8, bits);
            let g = quasi_gradient(&p, &s).unwrap();
            for i in 0..8 {
                let mut up = s.clone();
                let mut down = s.clone();
                if up.get(i) < 0 {
                    up.flip(i);
                } else {
                    down.flip(i);
                }
                let oracle = -(energy(&p, &up).unwrap() - energy(&p, &down).unwrap()) / 2.0;
                assert!((g[i] - oracle).abs() < 1e-12, "{} vs {}", g[i], oracle);
            }
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_problem(6, &mut rng, true);
        let h0 = hamiltonian(&p, &PhaseState::zeros(6), 0.7).unwrap();
        assert_eq!(h0, 0.7 * energy(&p, &SpinConfig::all_up(6)).unwrap());

        let p1 = IsingProblem::new(1, vec![], vec![1.0]).unwrap();
        let st = PhaseState::new(vec![2.0], vec![0.0]).unwrap();
        assert_eq!(hamiltonian(&p1, &st, 1.0).unwrap(), 1.0);

        let st = PhaseState::new(gaussian(6, &mut rng), gaussian(6, &mut rng)).unwrap();
        let beta = 1.3;
        let rest = hamiltonian(&p, &st, beta).unwrap() - beta * energy(&p, &st.spins()).unwrap();
        let quad = 0.5 * st.x.iter().map(|x| x * x).sum::<f64>() + 0.5 * st.v.iter().map(|v| v * v).sum::<f64>();
        assert!((rest - quad).abs() < 1e-12);
    }

    #[test]
    fn smoothed_hamiltonian_saturates_to_hard() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_problem(10, &mut rng, true);
        for _ in 0..20 {
            let x: Vec<f64> = (0..10)
                .map(|_| {
                    let m = rng.gen_range(0.5..2.0);
                    if rng.gen_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            let st = PhaseState::new(x, gaussian(10, &mut rng)).unwrap();
            let hard = hamiltonian(&p, &st, 2.0).unwrap();
            let soft = smoothed_hamiltonian(&p, &st, 2.0, 50.0).unwrap();
            assert!((hard - soft).abs() <= 1e-6 * (1.0 + hard.abs()));
        }
        let p0 = IsingProblem::new(3, vec![(0, 1, 1.0), (1, 2, -2.0)], vec![0.0; 3]).unwrap();
        assert_eq!(smoothed_hamiltonian(&p0, &PhaseState::zeros(3), 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (beta, gamma, h) = (1.5, 2.0, 1e-5);
        for _ in 0..10 {
            let p = random_problem(16, &mut rng, true);
            let x = gaussian(16, &mut rng);
            let v = gaussian(16, &mut rng);
            let grad = smoothed_gradient(&p, &x, beta, gamma).unwrap();
            for i in 0..16 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let hp = smoothed_hamiltonian(&p, &PhaseState { x: xp, v: v.clone() }, beta, gamma).unwrap();
                let hm = smoothed_hamiltonian(&p, &PhaseState { x: xm, v: v.clone() }, beta, gamma).unwrap();
                let fd = (hp - hm) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1.0), "{fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn v_dot_examples() {
        let p1 = IsingProblem::new(1, vec![], vec![1.0]).unwrap();
        assert_eq!(v_dot(&p1, &[0.0], 1.0, 1.0).unwrap(), vec![1.0]);

        let x = vec![0.3, -1.2, 2.5];
        assert_eq!(v_dot(&zero_problem(3), &x, 4.0, 2.0).unwrap(), vec![-0.3, 1.2, -2.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_problem(8, &mut rng, true);
        let x: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 12.0 } else { -15.0 }).collect();
        let vd = v_dot(&p, &x, 1.0, 2.0).unwrap();
        for (a, b) in vd.iter().zip(&x) {
            assert!((a + b).abs() < 1e-6);
        }
    }

    #[test]
    fn v_dot_uses_hard_signs_in_the_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_problem(7, &mut rng, true);
        let x = gaussian(7, &mut rng);
        let q = quasi_gradient(&p, &SpinConfig::from_positions(&x)).unwrap();
        let vd = v_dot(&p, &x, 0.8, 3.0).unwrap();
        for i in 0..7 {
            assert_eq!(vd[i], 0.8 * dtanh_sign(x[i], 3.0) * q[i] - x[i]);
        }
    }

    #[test]
    fn em_update_hand_example() {
        let params = HmcParams { epsilon: 0.1, ..HmcParams::default() };
        let st = PhaseState::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let next = em_update(&zero_problem(2), &st, &params).unwrap();
        assert_eq!(next.x, vec![1.0, 0.1]);
        assert!((next.v[0] + 0.1).abs() < 1e-15);
        assert!((next.v[1] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn em_update_is_identity_at_zero_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_problem(5, &mut rng, true);
        let st = PhaseState::new(gaussian(5, &mut rng), gaussian(5, &mut rng)).unwrap();
        let mut ws = Workspace::new(5);
        let mut next = st.clone();
        ws.step(&p, &mut next, &HmcParams { epsilon: 0.0, ..HmcParams::default() });
        assert_eq!(next, st);
        assert!(em_update(&p, &st, &HmcParams { epsilon: 0.0, ..HmcParams::default() }).is_err());
    }

    #[test]
    fn em_update_matches_its_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = random_problem(9, &mut rng, true);
        let st = PhaseState::new(gaussian(9, &mut rng), gaussian(9, &mut rng)).unwrap();
        let params = HmcParams { beta: 1.7, gamma: 2.5, epsilon: 0.07, ..HmcParams::default() };
        let next = em_update(&p, &st, &params).unwrap();
        let x1: Vec<f64> = st.x.iter().zip(&st.v).map(|(x, v)| x + 0.07 * v).collect();
        let vd = v_dot(&p, &x1, 1.7, 2.5).unwrap();
        assert_eq!(next.x, x1);
        for i in 0..9 {
            assert_eq!(next.v[i], st.v[i] + 0.07 * vd[i]);
        }
    }

    #[test]
    fn em_update_component_order_is_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let p = random_problem(12, &mut rng, true);
        let st = PhaseState::new(gaussian(12, &mut rng), gaussian(12, &mut rng)).unwrap();
        let params = HmcParams::default();
        let reference = em_update(&p, &st, &params).unwrap();

        let mut order: Vec<usize> = (0..12).collect();
        for trial in 0..5 {
            use rand::seq::SliceRandom;
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(trial));
            let mut x = st.x.clone();
            for &i in &order {
                x[i] = st.x[i] + params.epsilon * st.v[i];
            }
            let s = SpinConfig::from_positions(&x);
            let mut v = st.v.clone();
            for &i in order.iter().rev() {
                let field = p.local_field_of(s.as_slice(), i);
                v[i] = st.v[i] + params.epsilon * (params.beta * dtanh_sign(x[i], params.gamma) * field - x[i]);
            }
            assert_eq!(x, reference.x);
            assert_eq!(v, reference.v);
        }
    }

    #[test]
    fn reversal_returns_near_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = zero_problem(4);
        let st = PhaseState::new(gaussian(4, &mut rng), gaussian(4, &mut rng)).unwrap();
        let scale: f64 = st.x.iter().chain(&st.v).map(|c| c.abs()).fold(0.0, f64::max);
        for (eps, steps) in [(0.1, 1), (0.05, 1), (0.1, 10), (0.02, 50)] {
            let params = HmcParams { epsilon: eps, steps, ..HmcParams::default() };
            let fwd = trajectory(&p, &st, &params).unwrap().state;
            let flipped = PhaseState { x: fwd.x, v: fwd.v.iter().map(|v| -v).collect() };
            let back = trajectory(&p, &flipped, &params).unwrap().state;
            let err = back
                .x
                .iter()
                .zip(&st.x)
                .chain(back.v.iter().map(|v| -v).collect::<Vec<_>>().iter().zip(&st.v))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 2.0 * eps * eps * steps as f64 * scale, "eps={eps} L={steps}: {err}");
        }
    }

    #[test]
    fn single_step_trajectory_is_em_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_problem(6, &mut rng, true);
        let st = PhaseState::new(gaussian(6, &mut rng), gaussian(6, &mut rng)).unwrap();
        let params = HmcParams { steps: 1, ..HmcParams::default() };
        assert_eq!(trajectory(&p, &st, &params).unwrap().state, em_update(&p, &st, &params).unwrap());
    }

    #[test]
    fn oscillator_returns_after_one_period() {
        let p = zero_problem(3);
        let st = PhaseState::new(vec![1.0, -0.5, 0.2], vec![0.0, 0.8, -1.1]).unwrap();
        for eps in [0.02, 0.01] {
            let steps = (2.0 * std::f64::consts::PI / eps).round() as usize;
            let end = trajectory(&p, &st, &HmcParams { epsilon: eps, steps, ..HmcParams::default() }).unwrap().state;
            let err = end.x.iter().zip(&st.x).chain(end.v.iter().zip(&st.v)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 2.0 * eps, "eps={eps}: {err}");
        }
    }

    #[test]
    fn improvements_are_strict_and_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_problem(10, &mut rng, true);
        let st = PhaseState::new(gaussian(10, &mut rng), gaussian(10, &mut rng)).unwrap();
        let params = HmcParams { steps: 200, beta: 2.0, ..HmcParams::default() };
        let traj = trajectory(&p, &st, &params).unwrap();
        assert!(!traj.improvements.is_empty());
        assert_eq!(traj.improvements[0].step, 1);
        for w in traj.improvements.windows(2) {
            assert!(w[1].energy < w[0].energy);
            assert!(w[1].step > w[0].step);
        }
        for imp in &traj.improvements {
            assert_eq!(imp.energy, energy(&p, &imp.spins).unwrap());
        }
        // Counting strict improvements over the per-step energies gives the same length.
        let mut cur = st.clone();
        let mut best = f64::INFINITY;
        let mut count = 0;
        for _ in 0..200 {
            cur = em_update(&p, &cur, &HmcParams { steps: 1, ..params }).unwrap();
            let e = energy(&p, &cur.spins()).unwrap();
            if e < best {
                best = e;
                count += 1;
            }
        }
        assert_eq!(traj.improvements.len(), count);
    }

    #[test]
    fn divergence_is_reported() {
        let p = IsingProblem::new(2, vec![(0, 1, 1.0)], vec![0.0; 2]).unwrap();
        let st = PhaseState::new(vec![0.01, -0.01], vec![2e6, -2e6]).unwrap();
        let params = HmcParams { epsilon: 1.0, steps: 5, ..HmcParams::default() };
        assert!(matches!(trajectory(&p, &st, &params), Err(Error::Divergence { .. })));
    }

    #[test]
    fn smoothed_force_step_matches_smoothed_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_problem(6, &mut rng, true);
        let st = PhaseState::new(gaussian(6, &mut rng), gaussian(6, &mut rng)).unwrap();
        let params = HmcParams { force: ForceModel::Smoothed, ..HmcParams::default() };
        let next = em_update(&p, &st, &params).unwrap();
        let g = smoothed_gradient(&p, &next.x, params.beta, params.gamma).unwrap();
        for i in 0..6 {
            assert!((next.v[i] - (st.v[i] - params.epsilon * g[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn accept_examples() {
        assert!(accept(3.0, 1.0, 0.999));
        assert!(accept(1.0, 1.0, 0.999));
        assert!(!accept(1.0, f64::INFINITY, 0.0));
        assert!(!accept(f64::INFINITY, f64::INFINITY, 0.0));
        let ln2 = std::f64::consts::LN_2;
        assert!(accept(0.0, ln2, 0.49));
        assert!(!accept(0.0, ln2, 0.51));
    }

    #[test]
    fn saturation_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let delta = 0.5;
        for gamma in [1.0, 5.0, 20.0] {
            for _ in 0..1000 {
                let m = delta + rng.gen_range(0.0..3.0);
                let x = if rng.gen_bool(0.5) { m } else { -m };
                let gap = (tanh_sign(x, gamma) - f64::from(sign(x))).abs();
                assert!(gap <= 2.0 * (-2.0 * gamma * delta).exp());
            }
        }
    }

    proptest! {
        #[test]
        fn accept_is_shift_invariant(
            old in -4096i32..4096, new in -4096i32..4096, shift in -65536i32..65536, u in 0.0f64..1.0
        ) {
            // Dyadic values keep the shifted differences exact.
            let (o, n, c) = (f64::from(old) / 64.0, f64::from(new) / 64.0, f64::from(shift) / 64.0);
            prop_assert_eq!(accept(o, n, u), accept(o + c, n + c, u));
        }

        #[test]
        fn dtanh_positive_and_bounded(x in -5.0f64..5.0, gamma in 0.1f64..10.0) {
            let d = dtanh_sign(x, gamma);
            // Underflows to zero far in the tails.
            prop_assert!(d >= 0.0 && d <= gamma);
        }
    }
}
