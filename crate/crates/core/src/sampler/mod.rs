//! Ask/tell search algorithms over box-bounded continuous spaces.
//!
//! Every algorithm works in coordinates normalized to the unit cube; points
//! handed to and from callers are in the original units.

mod cmaes;
mod gp;
mod grid;
mod tpe;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from;
use crate::{Error, Result};

pub use grid::grid_points;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl ParamRange {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Result<Self> {
        let name = name.into();
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidInput(format!("bad range for `{name}`: [{low}, {high}]")));
        }
        Ok(Self { name, low, high })
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    fn to_unit(&self, v: f64) -> f64 {
        (v - self.low) / self.width()
    }

    fn from_unit(&self, u: f64) -> f64 {
        (self.low + u * self.width()).clamp(self.low, self.high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    ranges: Vec<ParamRange>,
}

impl SearchSpace {
    pub fn new(ranges: Vec<ParamRange>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidInput("search space needs at least one parameter".into()));
        }
        for (i, r) in ranges.iter().enumerate() {
            ParamRange::new(r.name.clone(), r.low, r.high)?;
            if ranges[..i].iter().any(|o| o.name == r.name) {
                return Err(Error::InvalidInput(format!("duplicate parameter `{}`", r.name)));
            }
        }
        Ok(Self { ranges })
    }

    /// The five CACm tunables with their default intervals:
    /// beta1, beta2, gamma in [0, 2]; alpha, xi in [0, 0.3].
    pub fn cacm_default() -> Self {
        let r = |n: &str, hi: f64| ParamRange::new(n, 0.0, hi).expect("static range");
        Self::new(vec![r("beta1", 2.0), r("beta2", 2.0), r("alpha", 0.3), r("gamma", 2.0), r("xi", 0.3)])
            .expect("static space")
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[ParamRange] {
        &self.ranges
    }

    pub fn names(&self) -> Vec<String> {
        self.ranges.iter().map(|r| r.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.ranges.iter().position(|r| r.name == name)
    }

    /// One-dimensional subspace for a single parameter.
    pub fn subspace(&self, name: &str) -> Result<Self> {
        let i = self.index_of(name).ok_or_else(|| Error::InvalidInput(format!("unknown parameter `{name}`")))?;
        Self::new(vec![self.ranges[i].clone()])
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim() && self.ranges.iter().zip(point).all(|(r, &v)| r.contains(v))
    }

    pub fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: point.len() });
        }
        if let Some(v) = point.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate {v}")));
        }
        if !self.contains(point) {
            return Err(Error::InvalidInput(format!("point {point:?} outside the search box")));
        }
        Ok(())
    }

    pub(crate) fn to_unit(&self, point: &[f64]) -> Vec<f64> {
        self.ranges.iter().zip(point).map(|(r, &v)| r.to_unit(v)).collect()
    }

    pub(crate) fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.ranges.iter().zip(unit).map(|(r, &u)| r.from_unit(u)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Random,
    Grid,
    Tpe,
    Gp,
    Cmaes,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [Self::Tpe, Self::Gp, Self::Cmaes, Self::Random, Self::Grid];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Grid => "grid",
            Self::Tpe => "tpe",
            Self::Gp => "gp",
            Self::Cmaes => "cmaes",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "random" => Self::Random,
            "grid" => Self::Grid,
            "tpe" => Self::Tpe,
            "gp" => Self::Gp,
            "cmaes" | "cma-es" | "cma_es" => Self::Cmaes,
            other => return Err(Error::Usage(format!("unknown sampler `{other}`"))),
        })
    }
}

/// Per-parameter sampler choice; unmapped parameters use `default_kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioAssignment {
    pub mapping: BTreeMap<String, SamplerKind>,
    pub default_kind: SamplerKind,
}

impl PortfolioAssignment {
    pub fn uniform(kind: SamplerKind) -> Self {
        Self { mapping: BTreeMap::new(), default_kind: kind }
    }

    pub fn with(mut self, name: impl Into<String>, kind: SamplerKind) -> Self {
        self.mapping.insert(name.into(), kind);
        self
    }

    pub fn kind_for(&self, name: &str) -> SamplerKind {
        self.mapping.get(name).copied().unwrap_or(self.default_kind)
    }

    pub fn validate(&self, space: &SearchSpace) -> Result<()> {
        match self.mapping.keys().find(|k| space.index_of(k).is_none()) {
            Some(k) => Err(Error::InvalidInput(format!("assignment names unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub point: Vec<f64>,
    /// Objective value, lower is better; `+inf` for failed configurations.
    pub value: f64,
    pub p0: Option<f64>,
    pub sampler: SamplerKind,
    pub stage_label: String,
}

/// Total order on objective values: finite ascending, then `+inf`.
pub fn cmp_value(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Record with the lowest value; ties go to the lowest `trial_id`.
pub fn best_of(history: &[TrialRecord]) -> Result<&TrialRecord> {
    history
        .iter()
        .min_by(|a, b| cmp_value(a.value, b.value).then(a.trial_id.cmp(&b.trial_id)))
        .ok_or_else(|| Error::Usage("best_of called on an empty history".into()))
}

/// Tunable constants of the model-based samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub tpe_startup: usize,
    pub tpe_gamma: f64,
    pub tpe_candidates: usize,
    pub gp_startup: usize,
    pub gp_length_scale: f64,
    pub gp_noise: f64,
    pub gp_candidates: usize,
    pub cmaes_sigma0: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            tpe_startup: 10,
            tpe_gamma: 0.25,
            tpe_candidates: 24,
            gp_startup: 5,
            gp_length_scale: 0.2,
            gp_noise: 1e-6,
            gp_candidates: 1024,
            cmaes_sigma0: 0.3,
        }
    }
}

/// An observation in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Observation {
    pub unit: Vec<f64>,
    pub value: f64,
    pub injected: bool,
}

enum Engine {
    Random,
    Grid(grid::GridEngine),
    Tpe(tpe::TpeEngine),
    Gp(gp::GpEngine),
    Cmaes(cmaes::CmaesEngine),
}

/// Sequential ask/tell search state.
pub struct Sampler {
    kind: SamplerKind,
    space: SearchSpace,
    seed: u64,
    rng: ChaCha8Rng,
    observations: Vec<Observation>,
    pending: Option<Vec<f64>>,
    engine: Engine,
}

impl fmt::Debug for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sampler")
            .field("kind", &self.kind)
            .field("dim", &self.space.dim())
            .field("seed", &self.seed)
            .field("observations", &self.observations.len())
            .field("pending", &self.pending)
            .finish()
    }
}

impl Sampler {
    pub fn new(kind: SamplerKind, space: SearchSpace, seed: u64, budget_hint: usize) -> Result<Self> {
        Self::with_config(kind, space, seed, budget_hint, SamplerConfig::default())
    }

    pub fn with_config(
        kind: SamplerKind,
        space: SearchSpace,
        seed: u64,
        budget_hint: usize,
        config: SamplerConfig,
    ) -> Result<Self> {
        if budget_hint == 0 {
            return Err(Error::InvalidInput("budget_hint must be >= 1".into()));
        }
        let d = space.dim();
        let engine = match kind {
            SamplerKind::Random => Engine::Random,
            SamplerKind::Grid => Engine::Grid(grid::GridEngine::new(d, budget_hint)),
            SamplerKind::Tpe => Engine::Tpe(tpe::TpeEngine::new(d, &config)),
            SamplerKind::Gp => Engine::Gp(gp::GpEngine::new(d, &config)),
            SamplerKind::Cmaes => Engine::Cmaes(cmaes::CmaesEngine::new(d, config.cmaes_sigma0)),
        };
        Ok(Self { kind, space, seed, rng: rng_from(seed), observations: Vec::new(), pending: None, engine })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    /// Number of observations told or injected so far.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub fn ask(&mut self) -> Result<Vec<f64>> {
        if self.pending.is_some() {
            return Err(Error::Usage("ask called while a candidate is still outstanding".into()));
        }
        let d = self.space.dim();
        let unit = match &mut self.engine {
            Engine::Random => uniform_unit(&mut self.rng, d),
            Engine::Grid(g) => g.next(&mut self.rng),
            Engine::Tpe(t) => t.propose(&self.observations, &mut self.rng),
            Engine::Gp(g) => g.propose(&self.observations, &mut self.rng),
            Engine::Cmaes(c) => c.propose(&self.observations, &mut self.rng),
        };
        let point = self.space.from_unit(&unit);
        self.pending = Some(point.clone());
        Ok(point)
    }

    pub fn tell(&mut self, point: &[f64], value: f64) -> Result<()> {
        match &self.pending {
            None => return Err(Error::Usage("tell called without an outstanding ask".into())),
            Some(p) if p.as_slice() != point => {
                return Err(Error::Usage("told point differs from the outstanding ask".into()))
            }
            Some(_) => {}
        }
        check_value(value)?;
        self.pending = None;
        self.record(point, value, false);
        Ok(())
    }

    /// Adds an observation that was not produced by `ask`, e.g. a known-good
    /// starting configuration.
    pub fn inject(&mut self, point: &[f64], value: f64) -> Result<()> {
        if self.pending.is_some() {
            return Err(Error::Usage("cannot inject while a candidate is outstanding".into()));
        }
        self.space.check_point(point)?;
        check_value(value)?;
        self.record(point, value, true);
        Ok(())
    }

    fn record(&mut self, point: &[f64], value: f64, injected: bool) {
        let obs = Observation { unit: self.space.to_unit(point), value, injected };
        match &mut self.engine {
            Engine::Gp(g) => g.observe(&obs),
            Engine::Cmaes(c) => c.observe(&obs),
            Engine::Random | Engine::Grid(_) | Engine::Tpe(_) => {}
        }
        self.observations.push(obs);
    }

    /// Diagnostic: `true` when every numeric quantity the engine carries between
    /// asks (observed inputs, model factors, distribution parameters) is finite.
    /// Infinite objective values are allowed and not inspected.
    pub fn internals_finite(&self) -> bool {
        if !self.observations.iter().flat_map(|o| &o.unit).all(|v| v.is_finite()) {
            return false;
        }
        match &self.engine {
            Engine::Gp(g) => g.internals_finite(),
            Engine::Cmaes(c) => c.internals_finite(),
            _ => true,
        }
    }

    #[cfg(test)]
    pub(crate) fn gp_engine(&self) -> Option<&gp::GpEngine> {
        match &self.engine {
            Engine::Gp(g) => Some(g),
            _ => None,
        }
    }
}

fn check_value(value: f64) -> Result<()> {
    if value.is_nan() || value == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(format!("objective value {value} is not allowed")));
    }
    Ok(())
}

pub(crate) fn uniform_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// Indices of `obs` sorted by value (`+inf` last), ties by insertion order.
pub(crate) fn ranked(obs: &[Observation]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..obs.len()).collect();
    idx.sort_by(|&a, &b| cmp_value(obs[a].value, obs[b].value).then(a.cmp(&b)));
    idx
}
