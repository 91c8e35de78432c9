//! The annealing loop with every state variable held in fixed point.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Fixed, FixedFormat, FxUnit, PolyDtanh};
use crate::annealer::{next_beta, AnnealConfig, RunResult};
use crate::error::{Error, Result};
use crate::model::{IsingProblem, SpinConfig};
use crate::rng::{self, Purpose};

/// An Ising problem with coefficients quantized to one format.
#[derive(Clone, Debug)]
pub struct FxProblem {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<i64>,
    fields: Vec<i64>,
}

impl FxProblem {
    /// Fails if any coefficient lies outside the representable range.
    pub fn new(problem: &IsingProblem, unit: &mut FxUnit) -> Result<Self> {
        let fmt = *unit.format();
        if let Some(&(i, j, v)) = problem.couplings().iter().find(|c| !fmt.contains(c.2)) {
            return Err(Error::InvalidProblem(format!(
                "coupling J_{i},{j} = {v} outside the fixed-point range [{}, {}]",
                fmt.min_value(),
                fmt.max_value()
            )));
        }
        if let Some((i, h)) = problem.fields().iter().enumerate().find(|(_, h)| !fmt.contains(**h)) {
            return Err(Error::InvalidProblem(format!("field h_{i} = {h} outside the fixed-point range")));
        }
        let n = problem.n();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for (j, v) in problem.neighbors(i) {
                cols.push(j);
                vals.push(unit.quantize(v).0);
            }
            row_ptr.push(cols.len());
        }
        let fields = problem.fields().iter().map(|&h| unit.quantize(h).0).collect();
        Ok(Self { n, row_ptr, cols, vals, fields })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Σ_j J_ij s_j + h_i` in raw units; sums of `±J` are exact.
    #[inline]
    fn local_field(&self, spins: &[i8], i: usize) -> i128 {
        let mut acc = self.fields[i] as i128;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            let j = self.cols[k];
            if spins[j] > 0 {
                acc += self.vals[k] as i128;
            } else {
                acc -= self.vals[k] as i128;
            }
        }
        acc
    }

    /// `E(s)` in raw units: `-(1/2) Σ_i s_i (I_i + h_i)`, where the sum is even.
    pub fn energy_raw(&self, spins: &[i8]) -> i128 {
        let twice: i128 = (0..self.n)
            .map(|i| {
                let t = self.local_field(spins, i) + self.fields[i] as i128;
                if spins[i] > 0 {
                    t
                } else {
                    -t
                }
            })
            .sum();
        -(twice / 2)
    }
}

/// Fixed-point position/momentum state with its integrator.
pub(crate) struct FxIntegrator<'a> {
    pub problem: &'a FxProblem,
    pub poly: PolyDtanh,
    pub spins: Vec<i8>,
}

impl<'a> FxIntegrator<'a> {
    pub fn new(problem: &'a FxProblem, gamma: f64, unit: &mut FxUnit) -> Self {
        Self { problem, poly: PolyDtanh::new(gamma, unit), spins: vec![1; problem.n()] }
    }

    /// `x += eps v`, then `v += eps (beta * p(x) * I(sign x) - x)`. Returns `E(sign x)` in raw units.
    pub fn step(&mut self, x: &mut [Fixed], v: &mut [Fixed], beta: Fixed, eps: Fixed, unit: &mut FxUnit) -> i128 {
        for (xi, &vi) in x.iter_mut().zip(v.iter()) {
            let dx = unit.mul(eps, vi);
            *xi = unit.add(*xi, dx);
        }
        for (s, xi) in self.spins.iter_mut().zip(x.iter()) {
            *s = if xi.0 >= 0 { 1 } else { -1 };
        }
        let mut twice_neg_energy: i128 = 0;
        for i in 0..self.problem.n {
            let field_raw = self.problem.local_field(&self.spins, i);
            let both = field_raw + self.problem.fields[i] as i128;
            twice_neg_energy += if self.spins[i] > 0 { both } else { -both };
            let field = unit.narrow(field_raw);
            let slope = self.poly.eval(x[i], unit);
            let push = unit.mul(slope, field);
            let force = unit.mul(beta, push);
            let force = unit.sub(force, x[i]);
            let dv = unit.mul(eps, force);
            v[i] = unit.add(v[i], dv);
        }
        -(twice_neg_energy / 2)
    }
}

/// `beta E + |x|^2/2 + |v|^2/2` in fixed point; the energy is given in raw units.
fn fx_hamiltonian(energy_raw: i128, x: &[Fixed], v: &[Fixed], beta: Fixed, unit: &mut FxUnit) -> Fixed {
    let e = unit.narrow(energy_raw);
    let potential = unit.mul(beta, e);
    let mut squares: i128 = 0;
    for c in x.iter().chain(v) {
        squares += unit.square(*c).0 as i128;
    }
    let half = unit.narrow(squares / 2);
    unit.add(potential, half)
}

fn spins_of(x: &[Fixed]) -> Vec<i8> {
    x.iter().map(|c| if c.0 >= 0 { 1 } else { -1 }).collect()
}

/// The annealer with fixed-point state, the polynomial tanh derivative and
/// exact integer energy bookkeeping.
///
/// Random draws are the same streams as [`crate::annealer::anneal`], quantized
/// on entry; the acceptance probability is evaluated in floating point from
/// the fixed-point Hamiltonian difference. `best_energy` is re-evaluated on the
/// original problem.
pub fn fx_anneal(problem: &IsingProblem, config: &AnnealConfig, fmt: &FixedFormat) -> Result<RunResult> {
    config.validate()?;
    fmt.validate()?;
    let started = Instant::now();
    let mut unit = FxUnit::new(*fmt);
    let fxp = FxProblem::new(problem, &mut unit)?;
    let n = problem.n();

    let mut init_rng = rng::stream(config.seed, Purpose::InitialState);
    let mut momentum_rng = rng::stream(config.seed, Purpose::Momentum);
    let mut accept_rng = rng::stream(config.seed, Purpose::Acceptance);
    let normals = |rng: &mut rand_chacha::ChaCha8Rng, unit: &mut FxUnit| -> Vec<Fixed> {
        (0..n).map(|_| unit.quantize(rng.sample::<f64, _>(StandardNormal))).collect()
    };

    let mut x = normals(&mut init_rng, &mut unit);
    let _initial_v = normals(&mut init_rng, &mut unit);
    let mut spins = spins_of(&x);
    let mut best_raw = fxp.energy_raw(&spins);
    let mut best_spins = spins.clone();
    let mut trace_best = problem.energy_of(&best_spins);
    let mut trace = config.record_trace.then(|| vec![(0usize, trace_best)]);

    let eps = unit.quantize(config.hmc.epsilon);
    let mut integrator = FxIntegrator::new(&fxp, config.hmc.gamma, &mut unit);
    let mut beta = config.beta_start;
    let mut accepted = 0usize;
    let mut x_new = x.clone();

    for step in 1..=config.outer_steps {
        let mut v = normals(&mut momentum_rng, &mut unit);
        let beta_q = unit.quantize(beta);
        let h_old = fx_hamiltonian(fxp.energy_raw(&spins), &x, &v, beta_q, &mut unit);
        let u: f64 = accept_rng.gen();

        x_new.copy_from_slice(&x);
        let mut e_raw = 0;
        for _ in 0..config.hmc.steps {
            e_raw = integrator.step(&mut x_new, &mut v, beta_q, eps, &mut unit);
            if e_raw < best_raw {
                best_raw = e_raw;
                best_spins.copy_from_slice(&integrator.spins);
            }
        }
        let h_new = fx_hamiltonian(e_raw, &x_new, &v, beta_q, &mut unit);
        let delta = unit.to_real(Fixed(h_new.0)) - unit.to_real(Fixed(h_old.0));
        if delta <= 0.0 || u < (-delta).exp() {
            std::mem::swap(&mut x, &mut x_new);
            spins.copy_from_slice(&integrator.spins);
            accepted += 1;
        }

        if let Some(t) = trace.as_mut() {
            trace_best = problem.energy_of(&best_spins);
            t.push((step, trace_best));
        }
        beta = next_beta(beta, accepted as f64 / step as f64, config);
    }

    let best_spins = SpinConfig::new(best_spins)?;
    Ok(RunResult {
        best_energy: problem.energy_of(best_spins.as_slice()),
        best_spins,
        wall_time: started.elapsed().as_secs_f64(),
        outer_steps_run: config.outer_steps,
        acceptance_rate: accepted as f64 / config.outer_steps as f64,
        divergences: 0,
        saturations: Some(unit.saturations()),
        energy_trace: trace,
    })
}
