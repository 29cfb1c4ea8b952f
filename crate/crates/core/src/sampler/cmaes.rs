//! (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates.
//!
//! Candidates are clipped to the unit cube; the clipped steps are what the
//! update sees.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Observation;

const SIGMA_MIN: f64 = 1e-12;
const SIGMA_MAX: f64 = 2.0;

pub(super) struct CmaesEngine {
    dim: usize,
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,

    sigma0: f64,
    started: bool,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    /// Eigenbasis `B` and axis lengths `D` of the current covariance.
    basis: DMatrix<f64>,
    axes: DVector<f64>,

    /// Steps `(x - m) / sigma` of the current generation's candidates.
    steps: Vec<DVector<f64>>,
    told: Vec<(usize, f64)>,
}

impl CmaesEngine {
    pub fn new(dim: usize, sigma0: f64) -> Self {
        let n = dim as f64;
        let lambda = 4 + (3.0 * n.ln()).floor() as usize;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((mu as f64) + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        Self {
            dim,
            lambda,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            sigma0,
            started: false,
            mean: DVector::from_element(dim, 0.5),
            sigma: sigma0,
            cov: DMatrix::identity(dim, dim),
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            generation: 0,
            basis: DMatrix::identity(dim, dim),
            axes: DVector::from_element(dim, 1.0),
            steps: Vec::new(),
            told: Vec::new(),
        }
    }

    pub fn observe(&mut self, obs: &Observation) {
        if obs.injected {
            return;
        }
        let k = self.told.len();
        self.told.push((k, obs.value));
        if self.told.len() == self.lambda {
            self.update();
        }
    }

    pub fn propose(&mut self, obs: &[Observation], rng: &mut ChaCha8Rng) -> Vec<f64> {
        if !self.started {
            // Start from the best injected observation, else the box centre.
            if let Some(best) = obs.iter().filter(|o| o.value.is_finite()).min_by(|a, b| a.value.total_cmp(&b.value)) {
                self.mean = DVector::from_column_slice(&best.unit);
            }
            self.sigma = self.sigma0;
            self.started = true;
        }
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.basis * z.component_mul(&self.axes);
        let x = (&self.mean + self.sigma * y).map(|v| v.clamp(0.0, 1.0));
        self.steps.push((&x - &self.mean) / self.sigma);
        x.as_slice().to_vec()
    }

    fn update(&mut self) {
        let n = self.dim as f64;
        let mut order: Vec<(usize, f64)> = std::mem::take(&mut self.told);
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let steps = std::mem::take(&mut self.steps);

        let mut y_w = DVector::zeros(self.dim);
        for (w, &(i, _)) in self.weights.iter().zip(&order) {
            y_w += *w * &steps[i];
        }
        self.mean = (&self.mean + self.sigma * &y_w).map(|v| v.clamp(0.0, 1.0));

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt = &self.basis * DMatrix::from_diagonal(&self.axes.map(|d| 1.0 / d)) * self.basis.transpose();
        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt() * inv_sqrt * &y_w;
        self.generation += 1;
        let norm_ps = self.p_sigma.norm();
        let denom = (1.0 - (1.0 - self.c_sigma).powi(2 * self.generation as i32)).sqrt();
        let h_sigma = if norm_ps / denom < (1.4 + 2.0 / (n + 1.0)) * self.chi_n { 1.0 } else { 0.0 };

        self.p_c = (1.0 - self.c_c) * &self.p_c + h_sigma * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (w, &(i, _)) in self.weights.iter().zip(&order) {
            rank_mu += *w * &steps[i] * steps[i].transpose();
        }
        let delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c);
        self.cov = (1.0 - self.c_1 - self.c_mu) * &self.cov
            + self.c_1 * (&self.p_c * self.p_c.transpose() + delta_h * &self.cov)
            + self.c_mu * rank_mu;
        self.cov = 0.5 * (&self.cov + self.cov.transpose());

        self.sigma *= ((self.c_sigma / self.d_sigma) * (norm_ps / self.chi_n - 1.0)).exp();
        self.sigma = self.sigma.clamp(SIGMA_MIN, SIGMA_MAX);

        let eig = SymmetricEigen::new(self.cov.clone());
        self.basis = eig.eigenvectors;
        self.axes = eig.eigenvalues.map(|v| v.max(1e-20).sqrt());
    }

    pub fn internals_finite(&self) -> bool {
        self.mean.iter().chain(self.cov.iter()).chain(self.p_sigma.iter()).chain(self.p_c.iter()).all(|v| v.is_finite())
            && self.sigma.is_finite()
    }
}
