//! Gaussian-process regression with expected-improvement acquisition.
//!
//! Inputs live in the unit cube, so the RBF kernel matrix only depends on the
//! observed inputs and its Cholesky factor is extended one row per observation.
//! Targets are re-standardized on every ask.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{uniform_unit, Observation, SamplerConfig};

const HALTON_BASES: [u32; 5] = [2, 3, 5, 7, 11];
const VAR_FLOOR: f64 = 1e-12;

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let mut f = 1.0 / base as f64;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f /= base as f64;
    }
    r
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// EI for minimization of a Gaussian prediction against `best`.
pub(crate) fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.max(VAR_FLOOR).sqrt();
    let z = (best - mean) / sd;
    ((best - mean) * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

pub(crate) struct GpEngine {
    dim: usize,
    startup: usize,
    length_scale: f64,
    noise: f64,
    candidates: usize,
    xs: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Lower-triangular Cholesky factor of K + noise * I, row by row.
    chol: Vec<Vec<f64>>,
}

/// Posterior in standardized units, ready for prediction.
pub(crate) struct Posterior {
    alpha: Vec<f64>,
    best: f64,
}

impl GpEngine {
    pub fn new(dim: usize, config: &SamplerConfig) -> Self {
        Self {
            dim,
            startup: config.gp_startup,
            length_scale: config.gp_length_scale,
            noise: config.gp_noise,
            candidates: config.gp_candidates.max(1),
            xs: Vec::new(),
            values: Vec::new(),
            chol: Vec::new(),
        }
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-0.5 * d2 / (self.length_scale * self.length_scale)).exp()
    }

    /// Solves `L v = k` by forward substitution.
    fn forward(&self, k: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; k.len()];
        for (i, row) in self.chol.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&v[..i]).map(|(l, x)| l * x).sum();
            v[i] = (k[i] - s) / row[i];
        }
        v
    }

    fn backward(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = v[i];
            for j in i + 1..n {
                s -= self.chol[j][i] * x[j];
            }
            x[i] = s / self.chol[i][i];
        }
        x
    }

    pub fn observe(&mut self, obs: &Observation) {
        let k: Vec<f64> = self.xs.iter().map(|x| self.kernel(x, &obs.unit)).collect();
        let mut row = self.forward(&k);
        let diag = 1.0 + self.noise - row.iter().map(|l| l * l).sum::<f64>();
        row.push(diag.max(self.noise).sqrt());
        self.chol.push(row);
        self.xs.push(obs.unit.clone());
        self.values.push(obs.value);
    }

    /// Standardized fitting targets; `+inf` becomes `worst + 3 std` of the finite values.
    pub fn targets(&self) -> Option<Vec<f64>> {
        let finite: Vec<f64> = self.values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return None;
        }
        let (_, sd) = mean_sd(&finite);
        let worst = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let fill = worst + 3.0 * if sd > VAR_FLOOR.sqrt() { sd } else { worst.abs().max(1.0) };
        let y: Vec<f64> = self.values.iter().map(|&v| if v.is_finite() { v } else { fill }).collect();
        let (mean, sd) = mean_sd(&y);
        let scale = if sd > VAR_FLOOR.sqrt() { sd } else { 1.0 };
        Some(y.iter().map(|v| (v - mean) / scale).collect())
    }

    pub fn posterior(&self) -> Option<Posterior> {
        let z = self.targets()?;
        let best = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let alpha = self.backward(&self.forward(&z));
        Some(Posterior { alpha, best })
    }

    /// Predictive mean and latent variance at a unit-cube point.
    pub fn predict(&self, post: &Posterior, x: &[f64]) -> (f64, f64) {
        let k: Vec<f64> = self.xs.iter().map(|xi| self.kernel(xi, x)).collect();
        let mean = k.iter().zip(&post.alpha).map(|(a, b)| a * b).sum();
        let v = self.forward(&k);
        let var = (1.0 - v.iter().map(|x| x * x).sum::<f64>()).max(VAR_FLOOR);
        (mean, var)
    }

    pub fn acquisition(&self, post: &Posterior, x: &[f64]) -> f64 {
        let (m, v) = self.predict(post, x);
        expected_improvement(m, v, post.best)
    }

    pub fn propose(&mut self, obs: &[Observation], rng: &mut ChaCha8Rng) -> Vec<f64> {
        if obs.len() < self.startup {
            return uniform_unit(rng, self.dim);
        }
        let Some(post) = self.posterior() else {
            return uniform_unit(rng, self.dim);
        };
        // Randomly shifted Halton candidates.
        let shift = uniform_unit(rng, self.dim);
        let offset: u64 = rng.random_range(0..1 << 20);
        let mut best = (f64::NEG_INFINITY, vec![0.5; self.dim]);
        for i in 0..self.candidates as u64 {
            let c: Vec<f64> = (0..self.dim)
                .map(|d| {
                    let base = HALTON_BASES[d % HALTON_BASES.len()];
                    (radical_inverse(i + offset + 1, base) + shift[d]).fract()
                })
                .collect();
            let ei = self.acquisition(&post, &c);
            if ei > best.0 {
                best = (ei, c);
            }
        }
        best.1
    }

    pub fn internals_finite(&self) -> bool {
        self.chol.iter().flatten().all(|v| v.is_finite())
            && self.targets().is_none_or(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
