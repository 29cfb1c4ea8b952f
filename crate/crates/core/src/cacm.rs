//! Chaotic amplitude control with momentum (CACm).
//!
//! One step of the dynamics, with `w` the instance couplings:
//!
//! ```text
//! beta = beta1 + t/T * (beta2 - beta1)
//! xpp  = xp;  xp = x
//! mu   = w @ tanh(xp)
//! x    = xp + dt * (-beta * xp + alpha * e * mu + gamma * (xp - xpp))
//! e    = e - (xp^2 - 1) * e * xi
//! e    = max(e, E_FLOOR) / mean(max(e, E_FLOOR))
//! H    = -1/2 * sign(x)^T w sign(x)
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ising::{is_ground_hit, IsingInstance, SpinConfig, DEFAULT_REL_TOL};
use crate::seed::{derive_seed, rng_from};
use crate::{Error, Result};

/// Lower clamp applied to the auxiliary error variables before normalization.
pub const E_FLOOR: f64 = 1e-12;

/// Half-width of the uniform amplitude initialization.
pub const INIT_AMPLITUDE: f64 = 0.1;

pub const DEFAULT_RUNS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacmParams {
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub xi: f64,
    pub dt: f64,
}

impl CacmParams {
    /// Best-known parameters used as the tuning baseline, with `steps = 1000`
    /// and `dt = 0.5`.
    pub const KNOWN_BEST: Self =
        Self { steps: 1000, beta1: 1.185, beta2: 1.185, alpha: 0.170, gamma: 1.270, xi: 0.070, dt: 0.5 };

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be finite and > 0, got {}", self.dt)));
        }
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("xi", self.xi),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "beta1" => self.beta1,
            "beta2" => self.beta2,
            "alpha" => self.alpha,
            "gamma" => self.gamma,
            "xi" => self.xi,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "beta1" => &mut self.beta1,
            "beta2" => &mut self.beta2,
            "alpha" => &mut self.alpha,
            "gamma" => &mut self.gamma,
            "xi" => &mut self.xi,
            other => return Err(Error::InvalidInput(format!("`{other}` is not a tunable CACm parameter"))),
        };
        *slot = value;
        Ok(())
    }
}

impl Default for CacmParams {
    fn default() -> Self {
        Self::KNOWN_BEST
    }
}

pub fn beta_schedule(t: usize, steps: usize, beta1: f64, beta2: f64) -> f64 {
    beta1 + (t as f64 / steps as f64) * (beta2 - beta1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacmState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub x_prev2: Vec<f64>,
    pub e: Vec<f64>,
    pub t_index: usize,
    pub energy: f64,
    pub best_energy: f64,
    pub best_spins: SpinConfig,
    // scratch
    y: Vec<f64>,
    mu: Vec<f64>,
    s: Vec<f64>,
}

impl CacmState {
    /// State with explicit initial amplitudes; `e` starts at all ones.
    pub fn from_amplitudes(instance: &IsingInstance, x0: Vec<f64>) -> Result<Self> {
        let n = instance.n_spins();
        if x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: x0.len() });
        }
        let spins = SpinConfig::from_signs(&x0);
        let s = spins.as_f64();
        let energy = instance.energy_of_f64(&s);
        Ok(Self {
            x_prev: x0.clone(),
            x_prev2: x0.clone(),
            x: x0,
            e: vec![1.0; n],
            t_index: 0,
            energy,
            best_energy: energy,
            best_spins: spins,
            y: vec![0.0; n],
            mu: vec![0.0; n],
            s,
        })
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.e).all(|v| v.is_finite())
    }
}

/// Amplitudes drawn i.i.d. uniform in `[-0.1, 0.1]`.
pub fn init_state(instance: &IsingInstance, seed: u64) -> CacmState {
    let mut rng = rng_from(seed);
    let x0: Vec<f64> = (0..instance.n_spins()).map(|_| rng.random_range(-INIT_AMPLITUDE..=INIT_AMPLITUDE)).collect();
    CacmState::from_amplitudes(instance, x0).expect("length matches by construction")
}

/// Advances `state` by one step. Returns `true` when the energy improved.
pub fn cacm_step(state: &mut CacmState, instance: &IsingInstance, params: &CacmParams) -> bool {
    let beta = beta_schedule(state.t_index, params.steps, params.beta1, params.beta2);

    // xpp <- xp, xp <- x; x is overwritten below.
    std::mem::swap(&mut state.x_prev2, &mut state.x_prev);
    state.x_prev.copy_from_slice(&state.x);

    for (y, &xp) in state.y.iter_mut().zip(&state.x_prev) {
        *y = xp.tanh();
    }
    instance.mat_vec(&state.y, &mut state.mu);

    let dt = params.dt;
    for i in 0..state.x.len() {
        let xp = state.x_prev[i];
        let xpp = state.x_prev2[i];
        state.x[i] = xp + dt * (-beta * xp + params.alpha * state.e[i] * state.mu[i] + params.gamma * (xp - xpp));
    }

    let mut sum = 0.0;
    for (e, &xp) in state.e.iter_mut().zip(&state.x_prev) {
        let next = *e - (xp * xp - 1.0) * *e * params.xi;
        *e = next.max(E_FLOOR);
        sum += *e;
    }
    let mean = sum / state.e.len() as f64;
    for e in state.e.iter_mut() {
        *e /= mean;
    }

    for (s, &x) in state.s.iter_mut().zip(&state.x) {
        *s = if x < 0.0 { -1.0 } else { 1.0 };
    }
    state.energy = instance.energy_of_f64(&state.s);
    state.t_index += 1;
    if state.energy < state.best_energy {
        state.best_energy = state.energy;
        state.best_spins = SpinConfig::from_signs(&state.s);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub best_energy: f64,
    pub hit_ground: bool,
    /// Number of completed steps when the ground energy was first reached
    /// (0 when the initial state already hits).
    pub steps_to_first_hit: Option<usize>,
    /// The run produced a non-finite amplitude or error variable and was stopped.
    pub diverged: bool,
}

/// Runs the dynamics for `params.steps` steps from a seeded initial state.
pub fn cacm_run(instance: &IsingInstance, params: &CacmParams, seed: u64) -> RunResult {
    run_from(init_state(instance, seed), instance, params, DEFAULT_REL_TOL)
}

pub fn run_from(mut state: CacmState, instance: &IsingInstance, params: &CacmParams, rel_tol: f64) -> RunResult {
    let mut first_hit = is_ground_hit(instance, state.best_energy, rel_tol).then_some(0);
    for _ in 0..params.steps {
        let improved = cacm_step(&mut state, instance, params);
        if !state.is_finite() {
            return RunResult {
                best_energy: state.best_energy,
                hit_ground: false,
                steps_to_first_hit: None,
                diverged: true,
            };
        }
        if improved && first_hit.is_none() && is_ground_hit(instance, state.best_energy, rel_tol) {
            first_hit = Some(state.t_index);
        }
    }
    RunResult {
        best_energy: state.best_energy,
        hit_ground: first_hit.is_some(),
        steps_to_first_hit: first_hit,
        diverged: false,
    }
}

/// Marker for the infinite TTS of a configuration that never hits.
pub const TTS_INFINITE: f64 = f64::INFINITY;

/// Time to solution at 99% confidence, in solver steps.
pub fn tts(p0: f64, steps: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidInput(format!("p0 must lie in [0, 1], got {p0}")));
    }
    let steps = steps as f64;
    Ok(if p0 == 0.0 {
        TTS_INFINITE
    } else if p0 >= 0.99 {
        steps
    } else {
        steps * (0.01f64).ln() / (1.0 - p0).ln()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub p0: f64,
    pub tts: f64,
    pub runs: usize,
    pub hits: usize,
    pub diverged: usize,
    pub mean_best_energy: f64,
    pub min_best_energy: f64,
}

/// Runs `runs` independent solves with seeds `derive_seed(master_seed, k)`.
///
/// Runs execute on the current rayon pool; the reduction only counts and sums in
/// run-index order, so the result is independent of scheduling.
pub fn evaluate(instance: &IsingInstance, params: &CacmParams, runs: usize, master_seed: u64) -> Result<EvalResult> {
    params.validate()?;
    if runs == 0 {
        return Err(Error::InvalidInput("runs must be >= 1".into()));
    }
    let results: Vec<RunResult> =
        (0..runs).into_par_iter().map(|k| cacm_run(instance, params, derive_seed(master_seed, k as u64))).collect();
    let hits = results.iter().filter(|r| r.hit_ground).count();
    let diverged = results.iter().filter(|r| r.diverged).count();
    let mean_best_energy = results.iter().map(|r| r.best_energy).sum::<f64>() / runs as f64;
    let min_best_energy = results.iter().map(|r| r.best_energy).fold(f64::INFINITY, f64::min);
    let p0 = hits as f64 / runs as f64;
    Ok(EvalResult { p0, tts: tts(p0, params.steps)?, runs, hits, diverged, mean_best_energy, min_best_energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{generate_wishart, WishartSpec};

    fn small() -> IsingInstance {
        generate_wishart(&WishartSpec::new(12, 8, 7)).unwrap()
    }

    #[test]
    fn beta_schedule_examples() {
        assert_eq!(beta_schedule(0, 1000, 0.3, 1.7), 0.3);
        for t in [0, 1, 500, 999] {
            assert_eq!(beta_schedule(t, 1000, 1.185, 1.185), 1.185);
        }
        assert_eq!(beta_schedule(500, 1000, 1.0, 2.0), 1.5);
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let inst = small();
        let a = init_state(&inst, 9);
        let b = init_state(&inst, 9);
        assert_eq!(a, b);
        assert_ne!(a.x, init_state(&inst, 10).x);
        assert!(a.x.iter().all(|v| (-0.1..=0.1).contains(v)));
        assert_eq!(a.e.iter().sum::<f64>() / 12.0, 1.0);
        assert_eq!(a.x_prev, a.x);
        assert_eq!(a.x_prev2, a.x);
    }

    #[test]
    fn single_decoupled_spin() {
        let inst = IsingInstance::new(1, vec![0.0], SpinConfig::all_up(1)).unwrap();
        let r = cacm_run(&inst, &CacmParams { steps: 50, ..CacmParams::KNOWN_BEST }, 3);
        assert_eq!(r.best_energy, 0.0);
        assert!(r.hit_ground);
    }

    #[test]
    fn pure_decay_step() {
        // alpha = gamma = xi = 0, beta = 1, dt = 0.5: x' = x - 0.5 x.
        let inst = small();
        let params = CacmParams { steps: 10, beta1: 1.0, beta2: 1.0, alpha: 0.0, gamma: 0.0, xi: 0.0, dt: 0.5 };
        let x0 = vec![0.2; 12];
        let mut st = CacmState::from_amplitudes(&inst, x0).unwrap();
        cacm_step(&mut st, &inst, &params);
        assert!(st.x.iter().all(|&v| v == 0.1));
        assert!(st.e.iter().all(|&v| v == 1.0));
        assert_eq!(st.x_prev, vec![0.2; 12]);
        assert_eq!(st.t_index, 1);
    }

    #[test]
    fn e_floor_keeps_dynamics_total() {
        // xi large enough to push e negative for |xp| > 1.
        let inst = small();
        let params = CacmParams { xi: 50.0, ..CacmParams::KNOWN_BEST };
        let mut st = CacmState::from_amplitudes(&inst, vec![3.0; 12]).unwrap();
        cacm_step(&mut st, &inst, &params);
        assert!(st.e.iter().all(|&v| v > 0.0 && v.is_finite()));
        let mean = st.e.iter().sum::<f64>() / 12.0;
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn divergence_is_reported_not_panicked() {
        let inst = small();
        let params = CacmParams { steps: 5, ..CacmParams::KNOWN_BEST };
        let st = CacmState::from_amplitudes(&inst, vec![f64::MAX; 12]).unwrap();
        let r = run_from(st, &inst, &params, DEFAULT_REL_TOL);
        assert!(r.diverged);
        assert!(!r.hit_ground);
    }

    #[test]
    fn best_energy_is_monotone() {
        let inst = small();
        let params = CacmParams { steps: 300, ..CacmParams::KNOWN_BEST };
        let mut st = init_state(&inst, 1);
        let mut last = st.best_energy;
        for _ in 0..params.steps {
            cacm_step(&mut st, &inst, &params);
            assert!(st.best_energy <= last);
            assert!(st.best_energy <= st.energy);
            last = st.best_energy;
        }
    }

    #[test]
    fn tts_examples() {
        assert_eq!(tts(0.99, 1000).unwrap(), 1000.0);
        assert_eq!(tts(1.0, 1000).unwrap(), 1000.0);
        assert!(tts(0.0, 1000).unwrap().is_infinite());
        // ln(0.01)/ln(0.5) = log2(100) = 6.643856189774724
        assert!((tts(0.5, 1000).unwrap() - 6643.856189774724).abs() < 1e-6);
        assert!(tts(-0.1, 10).is_err());
        assert!(tts(1.1, 10).is_err());
    }

    #[test]
    fn evaluate_validates() {
        let inst = small();
        assert!(evaluate(&inst, &CacmParams::KNOWN_BEST, 0, 1).is_err());
        assert!(evaluate(&inst, &CacmParams { dt: 0.0, ..CacmParams::KNOWN_BEST }, 1, 1).is_err());
        assert!(evaluate(&inst, &CacmParams { steps: 0, ..CacmParams::KNOWN_BEST }, 1, 1).is_err());
    }

    #[test]
    fn evaluate_resolution() {
        let inst = small();
        let params = CacmParams { steps: 200, ..CacmParams::KNOWN_BEST };
        let r = evaluate(&inst, &params, 7, 11).unwrap();
        assert_eq!(r.p0 * 7.0, r.hits as f64);
        assert_eq!(r.tts, tts(r.p0, 200).unwrap());
        let one = evaluate(&inst, &params, 1, 11).unwrap();
        assert!(one.p0 == 0.0 || one.p0 == 1.0);
    }

    #[test]
    fn params_get_set() {
        let mut p = CacmParams::KNOWN_BEST;
        p.set("gamma", 0.5).unwrap();
        assert_eq!(p.get("gamma"), Some(0.5));
        assert!(p.set("dt", 0.1).is_err());
        assert_eq!(p.get("steps"), None);
    }
}
