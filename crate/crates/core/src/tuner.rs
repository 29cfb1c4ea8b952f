//! Tuning strategies: joint search, sequential per-parameter search (method A)
//! and sensitivity-ordered sequential search (method B).
//!
//! All strategies evaluate through an [`Objective`]. For the CACm objective the
//! same evaluation seed is reused for every trial of a study (common random
//! numbers), so the objective is a deterministic function within a study and
//! incumbents can be compared exactly.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cacm::{evaluate, CacmParams};
use crate::ising::IsingInstance;
use crate::sampler::{cmp_value, PortfolioAssignment, Sampler, SamplerKind, SearchSpace, TrialRecord};
use crate::seed::{derive_seed, stream};
use crate::{Error, Result};

/// Label used as `target_param` for joint stages.
pub const JOINT: &str = "joint";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub p0: Option<f64>,
}

/// A function to minimize over full-dimensional points of a [`TunableSet`].
pub trait Objective {
    fn evaluate(&self, point: &[f64]) -> Result<Evaluation>;

    /// Free-form description stored in the study config snapshot.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Adapts a plain function into an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn evaluate(&self, point: &[f64]) -> Result<Evaluation> {
        Ok(Evaluation { value: (self.0)(point), p0: None })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunableSet {
    pub names: Vec<String>,
    pub initial_values: Vec<f64>,
    pub space: SearchSpace,
}

impl TunableSet {
    pub fn new(space: SearchSpace, initial_values: Vec<f64>) -> Result<Self> {
        space.check_point(&initial_values)?;
        Ok(Self { names: space.names(), initial_values, space })
    }

    /// beta1, beta2, alpha, gamma, xi starting from the best-known parameters.
    pub fn cacm_default() -> Self {
        let p = CacmParams::KNOWN_BEST;
        Self::new(SearchSpace::cacm_default(), vec![p.beta1, p.beta2, p.alpha, p.gamma, p.xi])
            .expect("defaults lie inside the default space")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.space.index_of(name).ok_or_else(|| Error::InvalidInput(format!("unknown parameter `{name}`")))
    }
}

/// CACm evaluation with fixed `steps`/`dt` and common random numbers.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub instance: Arc<IsingInstance>,
    /// Non-tuned fields (`steps`, `dt`) and fallbacks for unbound parameters.
    pub base: CacmParams,
    pub runs_per_eval: usize,
    pub eval_seed: u64,
    pub space: SearchSpace,
}

impl ObjectiveSpec {
    pub fn new(instance: Arc<IsingInstance>, base: CacmParams, runs_per_eval: usize, eval_seed: u64) -> Self {
        Self { instance, base, runs_per_eval, eval_seed, space: SearchSpace::cacm_default() }
    }

    pub fn params_for(&self, point: &[f64]) -> Result<CacmParams> {
        self.space.check_point(point)?;
        let mut p = self.base;
        for (r, &v) in self.space.ranges().iter().zip(point) {
            p.set(&r.name, v)?;
        }
        Ok(p)
    }
}

impl Objective for ObjectiveSpec {
    fn evaluate(&self, point: &[f64]) -> Result<Evaluation> {
        let params = self.params_for(point)?;
        let r = evaluate(&self.instance, &params, self.runs_per_eval, self.eval_seed)?;
        Ok(Evaluation { value: r.tts, p0: Some(r.p0) })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "cacm",
            "n_spins": self.instance.n_spins(),
            "instance_meta": self.instance.meta(),
            "ground_energy": self.instance.ground_energy(),
            "steps": self.base.steps,
            "dt": self.base.dt,
            "runs_per_eval": self.runs_per_eval,
            "eval_seed": self.eval_seed,
        })
    }
}

pub fn objective(point: &[f64], spec: &ObjectiveSpec) -> Result<f64> {
    Ok(spec.evaluate(point)?.value)
}

/// Evaluation seed of a study with the given master seed.
pub fn eval_seed_for(master_seed: u64) -> u64 {
    derive_seed(master_seed, stream::EVAL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Conventional,
    A,
    B,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Conventional => "conventional",
            Self::A => "a",
            Self::B => "b",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" | "joint" => Ok(Self::Conventional),
            "a" | "method_a" => Ok(Self::A),
            "b" | "method_b" => Ok(Self::B),
            other => Err(Error::Usage(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StagePhase {
    Joint,
    /// Method B ranking pass; does not move the incumbent.
    Probe,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage_index: usize,
    pub phase: StagePhase,
    pub target_param: String,
    pub sampler: SamplerKind,
    pub trials: Vec<TrialRecord>,
    pub incumbent_before: Vec<f64>,
    pub incumbent_value_before: f64,
    pub incumbent_after: Vec<f64>,
    pub incumbent_value_after: f64,
    /// Best value among the stage's own trials.
    pub stage_best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub method: Method,
    pub budget: usize,
    pub y_initial: Option<usize>,
    /// Stage order of the sequential phase (after ranking, for method B).
    pub order: Vec<String>,
    pub assignment: PortfolioAssignment,
    pub tunables: TunableSet,
    pub master_seed: u64,
    pub rank_descending: bool,
    pub objective: serde_json::Value,
    /// Caller-supplied labels (e.g. bench cell and repetition).
    #[serde(default)]
    pub labels: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub config: StudyConfig,
    pub stages: Vec<StageRecord>,
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub best_p0: Option<f64>,
    /// Objective evaluations spent on stage trials.
    pub total_evaluations: usize,
    /// Evaluations outside the trial budget: the starting point and the final
    /// confirmation.
    pub extra_evaluations: usize,
    /// Budget left unused by floor division.
    pub discarded_trials: usize,
    pub baseline_value: f64,
    /// Method B ranking scores `E_i` in the default parameter order.
    pub probe_scores: Option<Vec<(String, f64)>>,
}

impl Study {
    pub fn trials(&self) -> impl Iterator<Item = (&StageRecord, &TrialRecord)> {
        self.stages.iter().flat_map(|s| s.trials.iter().map(move |t| (s, t)))
    }

    pub fn named_best(&self) -> Vec<(String, f64)> {
        self.config.tunables.names.iter().cloned().zip(self.best_params.iter().copied()).collect()
    }
}

struct Runner<'a> {
    objective: &'a dyn Objective,
    tunables: &'a TunableSet,
    assignment: &'a PortfolioAssignment,
    sampler_seed: u64,
    next_trial: usize,
    stages: Vec<StageRecord>,
    extra: usize,
}

impl<'a> Runner<'a> {
    fn new(
        objective: &'a dyn Objective,
        tunables: &'a TunableSet,
        assignment: &'a PortfolioAssignment,
        master_seed: u64,
    ) -> Result<Self> {
        assignment.validate(&tunables.space)?;
        if tunables.names != tunables.space.names() {
            return Err(Error::InvalidInput("tunable names must match the search space order".into()));
        }
        tunables.space.check_point(&tunables.initial_values)?;
        Ok(Self {
            objective,
            tunables,
            assignment,
            sampler_seed: derive_seed(master_seed, stream::SAMPLER),
            next_trial: 0,
            stages: Vec::new(),
            extra: 0,
        })
    }

    fn eval_extra(&mut self, point: &[f64]) -> Result<Evaluation> {
        self.extra += 1;
        self.objective.evaluate(point)
    }

    /// One stage over a single parameter, other coordinates fixed at `incumbent`.
    /// The incumbent moves only when a trial is strictly better (unless `probe`).
    fn single_param_stage(
        &mut self,
        name: &str,
        trials: usize,
        incumbent: &mut Vec<f64>,
        incumbent_value: &mut f64,
        phase: StagePhase,
    ) -> Result<()> {
        let i = self.tunables.index(name)?;
        let kind = self.assignment.kind_for(name);
        let stage_index = self.stages.len();
        let mut sampler = Sampler::new(
            kind,
            self.tunables.space.subspace(name)?,
            derive_seed(self.sampler_seed, stage_index as u64),
            trials,
        )?;
        sampler.inject(&[incumbent[i]], *incumbent_value)?;

        let label = format!("{stage_index}:{name}");
        let mut records = Vec::with_capacity(trials);
        let mut point = incumbent.clone();
        for _ in 0..trials {
            let x = sampler.ask()?;
            point[i] = x[0];
            let ev = self.objective.evaluate(&point)?;
            sampler.tell(&x, ev.value)?;
            records.push(TrialRecord {
                trial_id: self.next_trial,
                point: point.clone(),
                value: ev.value,
                p0: ev.p0,
                sampler: kind,
                stage_label: label.clone(),
            });
            self.next_trial += 1;
        }

        let before = incumbent.clone();
        let value_before = *incumbent_value;
        let stage_best = records.iter().min_by(|a, b| cmp_value(a.value, b.value).then(a.trial_id.cmp(&b.trial_id)));
        let stage_best_value = stage_best.map_or(f64::INFINITY, |r| r.value);
        if phase != StagePhase::Probe {
            if let Some(best) = stage_best {
                if cmp_value(best.value, *incumbent_value).is_lt() {
                    *incumbent = best.point.clone();
                    *incumbent_value = best.value;
                }
            }
        }
        self.stages.push(StageRecord {
            stage_index,
            phase,
            target_param: name.to_string(),
            sampler: kind,
            trials: records,
            incumbent_before: before,
            incumbent_value_before: value_before,
            incumbent_after: incumbent.clone(),
            incumbent_value_after: *incumbent_value,
            stage_best_value,
        });
        Ok(())
    }

    /// Method A body: one stage per parameter in `order`, each with `per_stage` trials.
    fn sequential(
        &mut self,
        order: &[String],
        per_stage: usize,
        start: Vec<f64>,
        start_value: f64,
    ) -> Result<(Vec<f64>, f64)> {
        let mut incumbent = start;
        let mut value = start_value;
        for name in order {
            self.single_param_stage(name, per_stage, &mut incumbent, &mut value, StagePhase::Sequential)?;
        }
        Ok((incumbent, value))
    }

    fn finish(
        self,
        config: StudyConfig,
        best_params: Vec<f64>,
        best: Evaluation,
        discarded_trials: usize,
        baseline_value: f64,
        probe_scores: Option<Vec<(String, f64)>>,
    ) -> Study {
        let total_evaluations = self.stages.iter().map(|s| s.trials.len()).sum();
        Study {
            config,
            stages: self.stages,
            best_params,
            best_value: best.value,
            best_p0: best.p0,
            total_evaluations,
            extra_evaluations: self.extra,
            discarded_trials,
            baseline_value,
            probe_scores,
        }
    }
}

fn check_order(order: &[String], tunables: &TunableSet) -> Result<()> {
    let mut sorted: Vec<&String> = order.iter().collect();
    sorted.sort();
    let mut names: Vec<&String> = tunables.names.iter().collect();
    names.sort();
    if sorted != names {
        return Err(Error::InvalidInput(format!("order {order:?} is not a permutation of {:?}", tunables.names)));
    }
    Ok(())
}

/// Options shared by the strategies.
#[derive(Debug, Clone, Default)]
pub struct StudyOptions {
    pub labels: serde_json::Map<String, serde_json::Value>,
    /// Rank method B parameters by descending `E_i` instead of ascending.
    pub rank_descending: bool,
}

/// Sequential per-parameter tuning with `floor(budget / n)` trials per stage.
pub fn method_a(
    budget: usize,
    tunables: &TunableSet,
    order: &[String],
    assignment: &PortfolioAssignment,
    objective: &dyn Objective,
    master_seed: u64,
) -> Result<Study> {
    method_a_with(budget, tunables, order, assignment, objective, master_seed, &StudyOptions::default())
}

pub fn method_a_with(
    budget: usize,
    tunables: &TunableSet,
    order: &[String],
    assignment: &PortfolioAssignment,
    objective: &dyn Objective,
    master_seed: u64,
    options: &StudyOptions,
) -> Result<Study> {
    let n = tunables.len();
    check_order(order, tunables)?;
    if budget < n {
        return Err(Error::InvalidInput(format!("budget {budget} leaves a zero-trial stage for {n} parameters")));
    }
    let per_stage = budget / n;
    let mut runner = Runner::new(objective, tunables, assignment, master_seed)?;
    let start = tunables.initial_values.clone();
    let baseline = runner.eval_extra(&start)?.value;
    let (best_params, _) = runner.sequential(order, per_stage, start, baseline)?;
    let best = runner.eval_extra(&best_params)?;
    let config = StudyConfig {
        method: Method::A,
        budget,
        y_initial: None,
        order: order.to_vec(),
        assignment: assignment.clone(),
        tunables: tunables.clone(),
        master_seed,
        rank_descending: false,
        objective: objective.describe(),
        labels: options.labels.clone(),
    };
    Ok(runner.finish(config, best_params, best, budget - per_stage * n, baseline, None))
}

/// Probe every parameter for `y_initial` trials from the initial values, rank
/// by best probe value, then run method A on the remaining budget.
pub fn method_b(
    budget: usize,
    y_initial: usize,
    tunables: &TunableSet,
    assignment: &PortfolioAssignment,
    objective: &dyn Objective,
    master_seed: u64,
) -> Result<Study> {
    method_b_with(budget, y_initial, tunables, assignment, objective, master_seed, &StudyOptions::default())
}

pub fn method_b_with(
    budget: usize,
    y_initial: usize,
    tunables: &TunableSet,
    assignment: &PortfolioAssignment,
    objective: &dyn Objective,
    master_seed: u64,
    options: &StudyOptions,
) -> Result<Study> {
    let n = tunables.len();
    if y_initial == 0 {
        return Err(Error::InvalidInput("y_initial must be >= 1".into()));
    }
    if budget <= n * y_initial {
        return Err(Error::InvalidInput(format!(
            "budget {budget} leaves no trials after the {n} x {y_initial} probe phase"
        )));
    }
    let remaining = budget - n * y_initial;
    if remaining < n {
        return Err(Error::InvalidInput(format!(
            "remaining budget {remaining} leaves a zero-trial stage for {n} parameters"
        )));
    }
    let mut runner = Runner::new(objective, tunables, assignment, master_seed)?;
    let start = tunables.initial_values.clone();
    let baseline = runner.eval_extra(&start)?.value;

    let mut scores = Vec::with_capacity(n);
    for name in &tunables.names {
        let mut probe_point = start.clone();
        let mut probe_value = baseline;
        runner.single_param_stage(name, y_initial, &mut probe_point, &mut probe_value, StagePhase::Probe)?;
        let e_i = runner.stages.last().expect("stage just pushed").stage_best_value;
        scores.push((name.clone(), e_i));
    }
    let order = rank_parameters(&scores, options.rank_descending);

    let per_stage = remaining / n;
    let (best_params, _) = runner.sequential(&order, per_stage, start, baseline)?;
    let best = runner.eval_extra(&best_params)?;
    let config = StudyConfig {
        method: Method::B,
        budget,
        y_initial: Some(y_initial),
        order,
        assignment: assignment.clone(),
        tunables: tunables.clone(),
        master_seed,
        rank_descending: options.rank_descending,
        objective: objective.describe(),
        labels: options.labels.clone(),
    };
    Ok(runner.finish(config, best_params, best, remaining - per_stage * n, baseline, Some(scores)))
}

/// Orders parameters by probe score, lowest first (or highest first when
/// `descending`); ties keep the input order.
pub fn rank_parameters(scores: &[(String, f64)], descending: bool) -> Vec<String> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = cmp_value(scores[a].1, scores[b].1);
        let ord = if descending { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    idx.into_iter().map(|i| scores[i].0.clone()).collect()
}

/// Joint search over all parameters with one sampler, seeded with the initial values.
pub fn conventional(
    budget: usize,
    tunables: &TunableSet,
    kind: SamplerKind,
    objective: &dyn Objective,
    master_seed: u64,
) -> Result<Study> {
    conventional_with(budget, tunables, kind, objective, master_seed, &StudyOptions::default())
}

pub fn conventional_with(
    budget: usize,
    tunables: &TunableSet,
    kind: SamplerKind,
    objective: &dyn Objective,
    master_seed: u64,
    options: &StudyOptions,
) -> Result<Study> {
    if budget == 0 {
        return Err(Error::InvalidInput("budget must be >= 1".into()));
    }
    let assignment = PortfolioAssignment::uniform(kind);
    let mut runner = Runner::new(objective, tunables, &assignment, master_seed)?;
    let start = tunables.initial_values.clone();
    let base_eval = runner.eval_extra(&start)?;
    let baseline = base_eval.value;

    let mut sampler = Sampler::new(kind, tunables.space.clone(), derive_seed(runner.sampler_seed, 0), budget)?;
    sampler.inject(&start, baseline)?;
    let mut records = Vec::with_capacity(budget);
    for trial_id in 0..budget {
        let x = sampler.ask()?;
        let ev = objective.evaluate(&x)?;
        sampler.tell(&x, ev.value)?;
        records.push(TrialRecord {
            trial_id,
            point: x,
            value: ev.value,
            p0: ev.p0,
            sampler: kind,
            stage_label: JOINT.to_string(),
        });
    }
    let stage_best = records
        .iter()
        .min_by(|a, b| cmp_value(a.value, b.value).then(a.trial_id.cmp(&b.trial_id)))
        .expect("budget >= 1");
    let stage_best_value = stage_best.value;
    let (best_params, best) = if cmp_value(stage_best.value, baseline).is_lt() {
        (stage_best.point.clone(), Evaluation { value: stage_best.value, p0: stage_best.p0 })
    } else {
        (start.clone(), base_eval)
    };
    runner.stages.push(StageRecord {
        stage_index: 0,
        phase: StagePhase::Joint,
        target_param: JOINT.to_string(),
        sampler: kind,
        trials: records,
        incumbent_before: start,
        incumbent_value_before: baseline,
        incumbent_after: best_params.clone(),
        incumbent_value_after: best.value,
        stage_best_value,
    });
    let config = StudyConfig {
        method: Method::Conventional,
        budget,
        y_initial: None,
        order: tunables.names.clone(),
        assignment: assignment.clone(),
        tunables: tunables.clone(),
        master_seed,
        rank_descending: false,
        objective: objective.describe(),
        labels: options.labels.clone(),
    };
    Ok(runner.finish(config, best_params, best, 0, baseline, None))
}

/// Ratio `conventional / proposed`; an infinite conventional value gives `+inf`.
pub fn speedup(conventional_tts: f64, proposed_tts: f64) -> Result<f64> {
    if conventional_tts.is_nan() || conventional_tts <= 0.0 {
        return Err(Error::InvalidInput(format!("conventional TTS must be > 0, got {conventional_tts}")));
    }
    if !(proposed_tts > 0.0 && proposed_tts.is_finite()) {
        return Err(Error::InvalidInput(format!("proposed TTS must be finite and > 0, got {proposed_tts}")));
    }
    Ok(conventional_tts / proposed_tts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{generate_wishart, WishartSpec};
    use std::cell::Cell;

    fn names() -> Vec<String> {
        TunableSet::cacm_default().names
    }

    fn quad(c: [f64; 5], w: [f64; 5]) -> impl Fn(&[f64]) -> f64 {
        move |p: &[f64]| p.iter().zip(c).zip(w).map(|((x, c), w)| w * (x - c).powi(2)).sum()
    }

    struct Counting<F> {
        f: F,
        calls: Cell<usize>,
    }

    impl<F: Fn(&[f64]) -> f64> Objective for Counting<F> {
        fn evaluate(&self, p: &[f64]) -> Result<Evaluation> {
            self.calls.set(self.calls.get() + 1);
            Ok(Evaluation { value: (self.f)(p), p0: None })
        }
    }

    fn assert_monotone(study: &Study) {
        let mut last = study.baseline_value;
        for s in &study.stages {
            assert!(cmp_value(s.incumbent_value_after, s.incumbent_value_before).is_le());
            assert!(cmp_value(s.incumbent_value_after, last).is_le());
            last = s.incumbent_value_after;
        }
    }

    #[test]
    fn method_a_accounting() {
        let t = TunableSet::cacm_default();
        let obj = Counting { f: quad([1.0; 5], [1.0; 5]), calls: Cell::new(0) };
        let s = method_a(103, &t, &names(), &PortfolioAssignment::uniform(SamplerKind::Random), &obj, 1).unwrap();
        assert_eq!(s.stages.len(), 5);
        assert!(s.stages.iter().all(|st| st.trials.len() == 20));
        assert_eq!(s.total_evaluations, 100);
        assert_eq!(s.discarded_trials, 3);
        assert_eq!(s.extra_evaluations, 2);
        assert_eq!(obj.calls.get(), 102);
        assert_monotone(&s);
        let ids: Vec<usize> = s.trials().map(|(_, t)| t.trial_id).collect();
        assert_eq!(ids, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn method_a_rejects_bad_inputs() {
        let t = TunableSet::cacm_default();
        let obj = FnObjective(quad([1.0; 5], [1.0; 5]));
        let a = PortfolioAssignment::uniform(SamplerKind::Grid);
        assert!(method_a(4, &t, &names(), &a, &obj, 0).is_err());
        let mut bad = names();
        bad[0] = "beta2".into();
        assert!(method_a(10, &t, &bad, &a, &obj, 0).is_err());
        assert!(method_a(10, &t, &names()[..4], &a, &obj, 0).is_err());
    }

    #[test]
    fn stage_with_only_worse_trials_keeps_value() {
        // Objective minimized exactly at the initial values: no trial can win.
        let t = TunableSet::cacm_default();
        let d = t.initial_values.clone();
        let obj = FnObjective(move |p: &[f64]| p.iter().zip(&d).map(|(x, c)| (x - c).abs()).sum::<f64>());
        let s = method_a(25, &t, &names(), &PortfolioAssignment::uniform(SamplerKind::Random), &obj, 9).unwrap();
        for st in &s.stages {
            assert_eq!(st.incumbent_after, st.incumbent_before);
        }
        assert_eq!(s.best_params, t.initial_values);
        assert_eq!(s.best_value, 0.0);
    }

    #[test]
    fn method_a_grid_separable_oracle() {
        let c = [1.0, 0.5, 0.15, 1.7, 0.05];
        let t = TunableSet::cacm_default();
        let obj = FnObjective(quad(c, [1.0; 5]));
        let s = method_a(50, &t, &names(), &PortfolioAssignment::uniform(SamplerKind::Grid), &obj, 3).unwrap();
        for (i, r) in t.space.ranges().iter().enumerate() {
            // Per-coordinate oracle: the 10-point lattice plus the starting value.
            let mut cands: Vec<f64> = (0..10).map(|j| r.low + r.width() * j as f64 / 9.0).collect();
            cands.push(t.initial_values[i]);
            let best = cands.iter().cloned().min_by(|a, b| (a - c[i]).abs().total_cmp(&(b - c[i]).abs())).unwrap();
            assert!((s.best_params[i] - best).abs() < 1e-12, "coord {i}: {} vs {best}", s.best_params[i]);
            assert!((s.best_params[i] - c[i]).abs() <= r.width() / 9.0);
        }
        assert_monotone(&s);
    }

    #[test]
    fn method_b_accounting_and_order() {
        let t = TunableSet::cacm_default();
        let obj = Counting { f: quad([1.0, 0.5, 0.15, 1.7, 0.05], [10.0, 5.0, 1.0, 0.1, 0.01]), calls: Cell::new(0) };
        let s = method_b(1000, 20, &t, &PortfolioAssignment::uniform(SamplerKind::Grid), &obj, 5).unwrap();
        let probes: Vec<_> = s.stages.iter().filter(|x| x.phase == StagePhase::Probe).collect();
        let seq: Vec<_> = s.stages.iter().filter(|x| x.phase == StagePhase::Sequential).collect();
        assert_eq!(probes.len(), 5);
        assert!(probes.iter().all(|p| p.trials.len() == 20));
        assert_eq!(seq.len(), 5);
        assert!(seq.iter().all(|p| p.trials.len() == 180));
        assert_eq!(s.total_evaluations, 1000);
        assert_eq!(obj.calls.get(), 1002);
        assert_eq!(seq.iter().map(|x| x.target_param.clone()).collect::<Vec<_>>(), s.config.order);
        assert_monotone(&s);
    }

    #[test]
    fn method_b_rejections() {
        let t = TunableSet::cacm_default();
        let obj = FnObjective(quad([1.0; 5], [1.0; 5]));
        let a = PortfolioAssignment::uniform(SamplerKind::Tpe);
        assert!(method_b(100, 20, &t, &a, &obj, 0).is_err());
        assert!(method_b(99, 20, &t, &a, &obj, 0).is_err());
        assert!(method_b(102, 20, &t, &a, &obj, 0).is_err());
        assert!(method_b(50, 0, &t, &a, &obj, 0).is_err());
        assert!(method_b(105, 20, &t, &a, &obj, 0).is_ok());
    }

    #[test]
    fn ranking_recovers_sensitivity() {
        // Improvement potential when moving coordinate i alone from D to c_i is
        // w_i (d_i - c_i)^2; with c_i on the 5-point probe lattice, the
        // potentials below are 10, 5, 1, 0.1 and 0.
        let t = TunableSet::cacm_default();
        let d = t.initial_values.clone();
        let c = [0.5, 1.0, 0.075, 1.5, d[4]];
        let pot = [10.0, 5.0, 1.0, 0.1, 0.0];
        let w: Vec<f64> = (0..5).map(|i| if pot[i] == 0.0 { 1.0 } else { pot[i] / (d[i] - c[i]).powi(2) }).collect();
        let w: [f64; 5] = w.try_into().unwrap();
        let obj = FnObjective(quad(c, w));
        let s = method_b(30, 5, &t, &PortfolioAssignment::uniform(SamplerKind::Grid), &obj, 0).unwrap();
        assert_eq!(s.config.order, names());

        // Reverse the potentials: order reverses.
        let c2 = [d[0], 1.0, 0.075, 1.5, 0.3];
        let pot2 = [0.0, 0.1, 1.0, 5.0, 10.0];
        let w2: Vec<f64> =
            (0..5).map(|i| if pot2[i] == 0.0 { 1.0 } else { pot2[i] / (d[i] - c2[i]).powi(2) }).collect();
        let w2: [f64; 5] = w2.try_into().unwrap();
        let s2 = method_b(30, 5, &t, &PortfolioAssignment::uniform(SamplerKind::Grid), &FnObjective(quad(c2, w2)), 0)
            .unwrap();
        let mut rev = names();
        rev.reverse();
        assert_eq!(s2.config.order, rev);
    }

    #[test]
    fn ranking_ties_and_direction() {
        let scores: Vec<(String, f64)> = names().into_iter().map(|n| (n, 2.0)).collect();
        assert_eq!(rank_parameters(&scores, false), names());
        assert_eq!(rank_parameters(&scores, true), names());
        let s = vec![("a".to_string(), 3.0), ("b".to_string(), f64::INFINITY), ("c".to_string(), 1.0)];
        assert_eq!(rank_parameters(&s, false), ["c", "a", "b"]);
        assert_eq!(rank_parameters(&s, true), ["b", "a", "c"]);
    }

    #[test]
    fn conventional_accounting() {
        let t = TunableSet::cacm_default();
        let obj = Counting { f: quad([1.0; 5], [1.0; 5]), calls: Cell::new(0) };
        let s = conventional(1, &t, SamplerKind::Random, &obj, 2).unwrap();
        assert_eq!(s.total_evaluations, 1);
        let start = quad([1.0; 5], [1.0; 5])(&t.initial_values);
        let one = s.stages[0].trials[0].value;
        assert_eq!(s.best_value, start.min(one));

        let s = conventional(100, &t, SamplerKind::Grid, &obj, 2).unwrap();
        assert_eq!(s.total_evaluations, 100);
        let pts: Vec<Vec<f64>> = s.stages[0].trials.iter().map(|x| x.point.clone()).collect();
        assert_eq!(pts, crate::sampler::grid_points(&t.space, 100));
        assert!(conventional(0, &t, SamplerKind::Grid, &obj, 2).is_err());
    }

    #[test]
    fn speedup_examples() {
        assert!((speedup(9277.0, 4048.0).unwrap() - 2.2918).abs() < 1e-4);
        assert_eq!(speedup(5.0, 5.0).unwrap(), 1.0);
        assert!(speedup(f64::INFINITY, 10.0).unwrap().is_infinite());
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn cacm_objective_is_deterministic() {
        let inst = Arc::new(generate_wishart(&WishartSpec::new(10, 7, 4)).unwrap());
        let spec = ObjectiveSpec::new(inst, CacmParams { steps: 100, ..CacmParams::KNOWN_BEST }, 20, eval_seed_for(1));
        let d = TunableSet::cacm_default().initial_values;
        assert_eq!(objective(&d, &spec).unwrap(), objective(&d, &spec).unwrap());
        assert!(objective(&[3.0, 1.0, 0.1, 1.0, 0.1], &spec).is_err());
        let p = spec.params_for(&[0.1, 0.2, 0.03, 0.4, 0.05]).unwrap();
        assert_eq!((p.beta1, p.beta2, p.alpha, p.gamma, p.xi, p.steps), (0.1, 0.2, 0.03, 0.4, 0.05, 100));
    }

    #[test]
    fn coupling_free_point_is_infinite() {
        // alpha = 0 removes the coupling; with the decay term the amplitudes only
        // shrink, so the sign pattern (and energy) never leaves the random start.
        // On a 40-spin instance a random start essentially never hits the ground.
        let inst = Arc::new(generate_wishart(&WishartSpec::new(40, 20, 4)).unwrap());
        let spec = ObjectiveSpec::new(inst, CacmParams { steps: 50, ..CacmParams::KNOWN_BEST }, 10, 3);
        let v = objective(&[1.0, 1.0, 0.0, 0.0, 0.0], &spec).unwrap();
        assert!(v.is_infinite());
    }
}
