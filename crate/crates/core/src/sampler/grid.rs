use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::SearchSpace;

/// Smallest `k` with `k^d >= budget`, i.e. `ceil(budget^(1/d))` without
/// floating-point rounding trouble.
fn points_per_dim(budget: usize, d: usize) -> usize {
    let mut k = 1usize;
    while k.checked_pow(d as u32).is_some_and(|p| p < budget) {
        k += 1;
    }
    k
}

fn axis(k: usize) -> Vec<f64> {
    if k == 1 {
        vec![0.5]
    } else {
        (0..k).map(|j| j as f64 / (k - 1) as f64).collect()
    }
}

/// Lattice points in unit coordinates, first dimension varying slowest.
fn unit_lattice(d: usize, budget: usize) -> (usize, Vec<Vec<f64>>) {
    let k = points_per_dim(budget, d);
    let ax = axis(k);
    let total = k.saturating_pow(d as u32);
    let take = budget.min(total);
    let mut out = Vec::with_capacity(take);
    for idx in 0..take {
        let mut rem = idx;
        let mut p = vec![0.0; d];
        for slot in p.iter_mut().rev() {
            *slot = ax[rem % k];
            rem /= k;
        }
        out.push(p);
    }
    (k, out)
}

/// Inclusive-endpoint lattice with `ceil(budget^(1/d))` points per dimension,
/// enumerated lexicographically and truncated to `budget` points.
pub fn grid_points(space: &SearchSpace, budget: usize) -> Vec<Vec<f64>> {
    unit_lattice(space.dim(), budget.max(1)).1.iter().map(|u| space.from_unit(u)).collect()
}

pub(super) struct GridEngine {
    lattice: Vec<Vec<f64>>,
    half_cell: f64,
    cursor: usize,
}

impl GridEngine {
    pub fn new(d: usize, budget: usize) -> Self {
        let (k, lattice) = unit_lattice(d, budget);
        let half_cell = if k == 1 { 0.5 } else { 0.5 / (k - 1) as f64 };
        Self { lattice, half_cell, cursor: 0 }
    }

    /// Next lattice point; once exhausted, lattice points jittered by up to half a cell.
    pub fn next(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let i = self.cursor;
        self.cursor += 1;
        let base = &self.lattice[i % self.lattice.len()];
        if i < self.lattice.len() {
            return base.clone();
        }
        base.iter().map(|&u| (u + rng.random_range(-self.half_cell..=self.half_cell)).clamp(0.0, 1.0)).collect()
    }
}
