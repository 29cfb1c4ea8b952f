//! Ising instances, energies and the Wishart planted ensemble.
//!
//! Couplings are stored in the solver convention `w`, so the energy of a spin
//! configuration `s` is `-1/2 * s^T w s`. The physical coupling matrix of the
//! Hamiltonian `1/2 * s^T Omega s` is `Omega = -w`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::{derive_seed, rng_from};
use crate::{jsonfmt, Error, Result};

/// Largest instance accepted by [`brute_force_ground`].
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// Default relative tolerance for [`is_ground_hit`].
pub const DEFAULT_REL_TOL: f64 = 1e-6;

pub const FORMAT_VERSION: &str = "1";

/// Largest eigenvalue of the coupling matrix `w` of generated instances.
pub const SPECTRAL_TARGET: f64 = 11.5;

/// A configuration of `n` spins, each exactly `-1` or `+1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput(format!("spin value {bad} is not -1 or +1")));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Signs of a real vector; zero maps to `+1`.
    pub fn from_signs(x: &[f64]) -> Self {
        Self(x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|&s| -s).collect())
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| f64::from(s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedChoice {
    AllOnes,
    Random,
}

impl std::str::FromStr for PlantedChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_ones" | "all-ones" | "ones" => Ok(Self::AllOnes),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidInput(format!("unknown planted choice `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WishartSpec {
    pub n_spins: usize,
    pub m_columns: usize,
    pub seed: u64,
    pub planted_choice: PlantedChoice,
}

impl WishartSpec {
    pub fn new(n_spins: usize, m_columns: usize, seed: u64) -> Self {
        Self { n_spins, m_columns, seed, planted_choice: PlantedChoice::AllOnes }
    }

    /// Default hardness for `n` spins: `m = ceil(0.7 n)`.
    pub fn default_m(n_spins: usize) -> usize {
        (7 * n_spins).div_ceil(10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 2 {
            return Err(Error::InvalidInput(format!("n_spins must be >= 2, got {}", self.n_spins)));
        }
        if self.m_columns < 1 {
            return Err(Error::InvalidInput("m_columns must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub m: usize,
    pub seed: u64,
    pub planted_choice: PlantedChoice,
    /// Factor applied to the `1/n`-normalized Wishart couplings.
    pub coupling_scale: f64,
}

/// Dense Ising instance with a known ground state.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingInstance {
    n_spins: usize,
    couplings: Vec<f64>,
    planted: SpinConfig,
    ground_energy: f64,
    meta: Option<GeneratorMeta>,
}

impl IsingInstance {
    /// Builds an instance from a row-major coupling matrix. The ground energy is
    /// recomputed as the energy of `planted`.
    pub fn new(n_spins: usize, couplings: Vec<f64>, planted: SpinConfig) -> Result<Self> {
        Self::with_meta(n_spins, couplings, planted, None)
    }

    fn with_meta(
        n_spins: usize,
        couplings: Vec<f64>,
        planted: SpinConfig,
        meta: Option<GeneratorMeta>,
    ) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::InvalidInput("instance needs at least one spin".into()));
        }
        if couplings.len() != n_spins * n_spins {
            return Err(Error::DimensionMismatch { expected: n_spins * n_spins, actual: couplings.len() });
        }
        if planted.len() != n_spins {
            return Err(Error::DimensionMismatch { expected: n_spins, actual: planted.len() });
        }
        for i in 0..n_spins {
            if couplings[i * n_spins + i] != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (couplings[i * n_spins + j], couplings[j * n_spins + i]);
                if !a.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite coupling at ({i},{j})")));
                }
                if a != b {
                    return Err(Error::InvalidInput(format!("asymmetric couplings at ({i},{j})")));
                }
            }
        }
        let mut inst = Self { n_spins, couplings, planted, ground_energy: 0.0, meta };
        inst.ground_energy = inst.energy_unchecked(inst.planted.spins());
        Ok(inst)
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// Row-major coupling matrix `w`.
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.couplings[i * self.n_spins..(i + 1) * self.n_spins]
    }

    pub fn planted(&self) -> &SpinConfig {
        &self.planted
    }

    pub fn ground_energy(&self) -> f64 {
        self.ground_energy
    }

    pub fn meta(&self) -> Option<&GeneratorMeta> {
        self.meta.as_ref()
    }

    /// `out = w * v`.
    pub fn mat_vec(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.couplings.chunks_exact(self.n_spins)) {
            *o = dot(row, v);
        }
    }

    /// Energy of a real-valued spin vector; callers guarantee the length.
    pub(crate) fn energy_of_f64(&self, s: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (row, &si) in self.couplings.chunks_exact(self.n_spins).zip(s) {
            acc += si * dot(row, s);
        }
        -0.5 * acc
    }

    fn energy_unchecked(&self, s: &[i8]) -> f64 {
        let sf: Vec<f64> = s.iter().map(|&v| f64::from(v)).collect();
        self.energy_of_f64(&sf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            n: self.n_spins,
            couplings: self.couplings.clone(),
            planted: self.planted.0.clone(),
            ground_energy: self.ground_energy,
            meta: FileMeta {
                m: self.meta.map(|m| m.m),
                seed: self.meta.map(|m| m.seed),
                planted_choice: self.meta.map(|m| m.planted_choice),
                coupling_scale: self.meta.map(|m| m.coupling_scale),
                format_version: FORMAT_VERSION.to_string(),
            },
        };
        let mut s = jsonfmt::to_string(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.meta.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format_version {}", file.meta.format_version)));
        }
        let meta = match (file.meta.m, file.meta.seed, file.meta.planted_choice, file.meta.coupling_scale) {
            (Some(m), Some(seed), Some(planted_choice), Some(coupling_scale)) => {
                Some(GeneratorMeta { m, seed, planted_choice, coupling_scale })
            }
            _ => None,
        };
        let inst = Self::with_meta(file.n, file.couplings, SpinConfig::new(file.planted)?, meta)?;
        if inst.ground_energy != file.ground_energy {
            return Err(Error::Format(format!(
                "stored ground_energy {} differs from energy(planted) {}",
                file.ground_energy, inst.ground_energy
            )));
        }
        Ok(inst)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    couplings: Vec<f64>,
    planted: Vec<i8>,
    ground_energy: f64,
    meta: FileMeta,
}

#[derive(Serialize, Deserialize)]
struct FileMeta {
    m: Option<usize>,
    seed: Option<u64>,
    planted_choice: Option<PlantedChoice>,
    #[serde(default)]
    coupling_scale: Option<f64>,
    format_version: String,
}

/// Four-lane dot product; the fixed lane order keeps results reproducible.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        lanes[0] += x[0] * y[0];
        lanes[1] += x[1] * y[1];
        lanes[2] += x[2] * y[2];
        lanes[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

pub fn energy(instance: &IsingInstance, s: &SpinConfig) -> Result<f64> {
    if s.len() != instance.n_spins {
        return Err(Error::DimensionMismatch { expected: instance.n_spins, actual: s.len() });
    }
    Ok(instance.energy_unchecked(s.spins()))
}

/// Generates a Wishart planted ensemble instance.
///
/// `m` standard normal columns are projected orthogonally to the planted vector
/// `t`, giving `Omega = (1/n) sum_k w_k w_k^T` with its diagonal removed. `Omega`
/// restricted to spin vectors equals a PSD form minus a constant, and `t` is in
/// its kernel, so `+t` and `-t` are certified ground states.
///
/// The couplings `w = -Omega` are then multiplied by a positive factor so that
/// the largest eigenvalue of `w` equals [`SPECTRAL_TARGET`]. The solver's
/// hyperparameters act on `alpha * w`, so a fixed spectral scale keeps one
/// parameter set meaningful across sizes and seeds; positive scaling leaves the
/// ground states unchanged.
pub fn generate_wishart(spec: &WishartSpec) -> Result<IsingInstance> {
    spec.validate()?;
    let n = spec.n_spins;
    let planted = match spec.planted_choice {
        PlantedChoice::AllOnes => SpinConfig::all_up(n),
        PlantedChoice::Random => {
            let mut rng = rng_from(derive_seed(spec.seed, 1));
            SpinConfig((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
        }
    };
    let t = planted.as_f64();
    let nf = n as f64;

    let mut rng = rng_from(derive_seed(spec.seed, 0));
    let mut gram = vec![0.0f64; n * n];
    let mut col = vec![0.0f64; n];
    for _ in 0..spec.m_columns {
        for c in col.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        let proj = col.iter().zip(&t).map(|(z, ti)| z * ti).sum::<f64>() / nf;
        for (c, ti) in col.iter_mut().zip(&t) {
            *c -= proj * ti;
        }
        for i in 0..n {
            for j in 0..=i {
                gram[i * n + j] += col[i] * col[j];
            }
        }
    }
    let mut w = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..i {
            let v = -gram[i * n + j] / nf;
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    let lambda_max = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &w))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let coupling_scale = if lambda_max > 0.0 { SPECTRAL_TARGET / lambda_max } else { 1.0 };
    for v in w.iter_mut() {
        *v *= coupling_scale;
    }
    let meta =
        GeneratorMeta { m: spec.m_columns, seed: spec.seed, planted_choice: spec.planted_choice, coupling_scale };
    IsingInstance::with_meta(n, w, planted, Some(meta))
}

/// Exhaustive ground-state search over all `2^n` configurations.
///
/// Spin `0` is pinned to `+1` (global flip symmetry) and the remaining spins are
/// walked in Gray-code order with O(n) local-field updates. The returned energy
/// is recomputed directly from the winning configuration.
pub fn brute_force_ground(instance: &IsingInstance) -> Result<(SpinConfig, f64)> {
    let n = instance.n_spins;
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::OracleTooLarge { n, limit: BRUTE_FORCE_LIMIT });
    }
    if n == 1 {
        let s = SpinConfig::all_up(1);
        let e = energy(instance, &s)?;
        return Ok((s, e));
    }
    let mut s = vec![1.0f64; n];
    // field[i] = sum_j w_ij s_j
    let mut field = vec![0.0; n];
    instance.mat_vec(&s, &mut field);
    let mut e = instance.energy_of_f64(&s);
    let mut best_e = e;
    let mut best = s.clone();
    let free = n - 1;
    for k in 1u64..(1u64 << free) {
        let bit = k.trailing_zeros() as usize + 1;
        let old = s[bit];
        // E = -1/2 s^T w s; flipping s_b changes E by 2 s_b field_b.
        e += 2.0 * old * field[bit];
        s[bit] = -old;
        let delta = -2.0 * old;
        let row = instance.row(bit);
        for (f, &wij) in field.iter_mut().zip(row) {
            *f += wij * delta;
        }
        if e < best_e {
            best_e = e;
            best.copy_from_slice(&s);
        }
    }
    let best = SpinConfig::from_signs(&best);
    let exact = energy(instance, &best)?;
    Ok((best, exact))
}

/// True iff `achieved` reaches the ground energy within `rel_tol * max(1, |E0|)`.
pub fn is_ground_hit(instance: &IsingInstance, achieved: f64, rel_tol: f64) -> bool {
    let g = instance.ground_energy;
    achieved <= g + rel_tol * g.abs().max(1.0)
}
