//! Independent-dimension tree-structured Parzen estimator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ranked, uniform_unit, Observation, SamplerConfig};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Gaussian mixture on `[0, 1]` with each component truncated to the interval.
/// Component 0 is a broad prior centred at 0.5.
#[derive(Debug, Clone)]
pub(crate) struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    log_mass: Vec<f64>,
}

impl Parzen {
    pub fn fit(points: &[f64]) -> Self {
        let mut sorted = points.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let min_bw = 1.0 / (n as f64 + 1.0).min(100.0);
        let mut mus = vec![0.5];
        let mut sigmas = vec![1.0];
        for (i, &m) in sorted.iter().enumerate() {
            let left = if i == 0 { 0.0 } else { sorted[i - 1] };
            let right = if i + 1 == n { 1.0 } else { sorted[i + 1] };
            let bw = (m - left).max(right - m).clamp(min_bw, 1.0);
            mus.push(m);
            sigmas.push(bw);
        }
        let log_mass = mus
            .iter()
            .zip(&sigmas)
            .map(|(&m, &s)| (normal_cdf((1.0 - m) / s) - normal_cdf(-m / s)).max(1e-300).ln())
            .collect();
        Self { mus, sigmas, log_mass }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let k = self.mus.len() as f64;
        let terms: Vec<f64> = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .zip(&self.log_mass)
            .map(|((&m, &s), &lm)| {
                let z = (x - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - lm
            })
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() - k.ln()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let c = rng.random_range(0..self.mus.len());
        let (m, s) = (self.mus[c], self.sigmas[c]);
        for _ in 0..100 {
            let z: f64 = rng.sample(StandardNormal);
            let x = m + s * z;
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        m.clamp(0.0, 1.0)
    }
}

pub(super) struct TpeEngine {
    dim: usize,
    startup: usize,
    gamma: f64,
    candidates: usize,
}

impl TpeEngine {
    pub fn new(dim: usize, config: &SamplerConfig) -> Self {
        Self { dim, startup: config.tpe_startup, gamma: config.tpe_gamma, candidates: config.tpe_candidates.max(1) }
    }

    /// Splits observations into (good, bad). The good set is the best
    /// `ceil(gamma * n)` finite observations; infinite values are always bad.
    pub fn split<'a>(&self, obs: &'a [Observation]) -> (Vec<&'a Observation>, Vec<&'a Observation>) {
        let order = ranked(obs);
        let n_good = (self.gamma * obs.len() as f64).ceil() as usize;
        let mut good = Vec::new();
        let mut bad = Vec::new();
        for (rank, &i) in order.iter().enumerate() {
            if rank < n_good && obs[i].value.is_finite() {
                good.push(&obs[i]);
            } else {
                bad.push(&obs[i]);
            }
        }
        (good, bad)
    }

    pub fn propose(&mut self, obs: &[Observation], rng: &mut ChaCha8Rng) -> Vec<f64> {
        if obs.len() < self.startup {
            return uniform_unit(rng, self.dim);
        }
        let (good, bad) = self.split(obs);
        if good.is_empty() {
            return uniform_unit(rng, self.dim);
        }
        let mut best = vec![0.0; self.dim];
        for d in 0..self.dim {
            let l = Parzen::fit(&good.iter().map(|o| o.unit[d]).collect::<Vec<_>>());
            let g = Parzen::fit(&bad.iter().map(|o| o.unit[d]).collect::<Vec<_>>());
            let mut top = (f64::NEG_INFINITY, 0.5);
            for _ in 0..self.candidates {
                let x = l.sample(rng);
                let score = l.log_pdf(x) - g.log_pdf(x);
                if score > top.0 {
                    top = (score, x);
                }
            }
            best[d] = top.1;
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(u: f64, v: f64) -> Observation {
        Observation { unit: vec![u], value: v, injected: false }
    }

    #[test]
    fn infinity_always_bad() {
        let t = TpeEngine::new(1, &SamplerConfig { tpe_gamma: 1.0, ..Default::default() });
        let o = vec![obs(0.1, 1.0), obs(0.2, f64::INFINITY), obs(0.3, 2.0)];
        let (good, bad) = t.split(&o);
        assert_eq!(good.len(), 2);
        assert_eq!(bad.len(), 1);
        assert!(bad[0].value.is_infinite());
    }

    #[test]
    fn quantile_split() {
        let t = TpeEngine::new(1, &SamplerConfig::default());
        let o: Vec<_> = (0..10).map(|i| obs(i as f64 / 10.0, (10 - i) as f64)).collect();
        let (good, bad) = t.split(&o);
        // ceil(0.25 * 10) = 3 best: values 1, 2, 3
        assert_eq!(good.iter().map(|o| o.value).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(bad.len(), 7);
    }

    #[test]
    fn parzen_is_normalized() {
        let p = Parzen::fit(&[0.05, 0.3, 0.31, 0.9]);
        let n = 20_000;
        let integral: f64 = (0..n).map(|i| p.log_pdf((i as f64 + 0.5) / n as f64).exp()).sum::<f64>() / n as f64;
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn parzen_samples_in_unit_interval() {
        let p = Parzen::fit(&[0.0, 1.0]);
        let mut rng = crate::seed::rng_from(1);
        for _ in 0..1000 {
            assert!((0.0..=1.0).contains(&p.sample(&mut rng)));
        }
    }
}
