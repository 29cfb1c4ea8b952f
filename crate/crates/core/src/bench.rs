//! Benchmark matrix: strategies x samplers x budgets x repetitions.
//!
//! Repetition `r` of every cell uses the master seed `derive_seed(plan.seed, r)`,
//! so cells are paired: the same repetition shares its evaluation seed across
//! strategies and samplers.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::cacm::CacmParams;
use crate::ising::IsingInstance;
use crate::sampler::{PortfolioAssignment, SamplerKind};
use crate::seed::derive_seed;
use crate::tuner::{
    conventional_with, eval_seed_for, method_a_with, method_b_with, Method, ObjectiveSpec, Study, StudyOptions,
    TunableSet,
};
use crate::{Error, Result};

pub const BENCH_COLUMNS: [&str; 8] = ["method", "sampler", "budget", "repetition", "tts", "p0_best", "evals", "seed"];
pub const SUMMARY_COLUMNS: [&str; 13] = [
    "method",
    "sampler",
    "budget",
    "repetitions",
    "failed",
    "finite",
    "mean_tts",
    "median_tts",
    "variance_tts",
    "speedup_ratio_of_means",
    "speedup_mean_of_ratios",
    "baseline_tts",
    "speedup_vs_baseline",
];

fn to_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV write");
    for row in rows {
        w.write_record(&row).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV fields are UTF-8")
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub instance: Arc<IsingInstance>,
    pub methods: Vec<Method>,
    pub samplers: Vec<SamplerKind>,
    pub budgets: Vec<usize>,
    pub repetitions: usize,
    pub y_initial: usize,
    pub runs_per_eval: usize,
    /// Fixed solver fields (`steps`, `dt`).
    pub base: CacmParams,
    pub seed: u64,
    pub tunables: TunableSet,
    pub order: Vec<String>,
    pub rank_descending: bool,
    /// Budgets of the conventional-search scaling series; empty disables it.
    pub scaling_budgets: Vec<usize>,
    pub scaling_sampler: SamplerKind,
}

impl BenchPlan {
    pub fn new(instance: Arc<IsingInstance>) -> Self {
        let tunables = TunableSet::cacm_default();
        Self {
            instance,
            methods: vec![Method::Conventional, Method::A, Method::B],
            samplers: SamplerKind::ALL.to_vec(),
            budgets: vec![100, 1000],
            repetitions: 10,
            y_initial: 20,
            runs_per_eval: crate::cacm::DEFAULT_RUNS,
            base: CacmParams::KNOWN_BEST,
            seed: 0,
            order: tunables.names.clone(),
            tunables,
            rank_descending: false,
            scaling_budgets: vec![100, 500, 1000],
            scaling_sampler: SamplerKind::Tpe,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidInput("repetitions must be >= 1".into()));
        }
        if self.budgets.iter().chain(&self.scaling_budgets).any(|&b| b == 0) {
            return Err(Error::InvalidInput("budgets must be positive".into()));
        }
        if self.methods.is_empty() || self.samplers.is_empty() || self.budgets.is_empty() {
            return Err(Error::InvalidInput("plan needs at least one method, sampler and budget".into()));
        }
        if self.runs_per_eval == 0 {
            return Err(Error::InvalidInput("runs_per_eval must be >= 1".into()));
        }
        self.base.validate()
    }

    /// Probe trials per parameter used for method B at `budget`: the configured
    /// `y_initial`, reduced so that probes take at most a tenth of the budget.
    pub fn effective_y(&self, budget: usize) -> usize {
        let n = self.tunables.len().max(1);
        self.y_initial.min((budget / (10 * n)).max(1))
    }

    fn rep_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, rep as u64)
    }

    fn matrix_jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &method in &self.methods {
            for &sampler in &self.samplers {
                for &budget in &self.budgets {
                    for repetition in 0..self.repetitions {
                        jobs.push(Job { method, sampler, budget, repetition, seed: self.rep_seed(repetition) });
                    }
                }
            }
        }
        jobs
    }

    fn scaling_jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &budget in &self.scaling_budgets {
            for repetition in 0..self.repetitions {
                jobs.push(Job {
                    method: Method::Conventional,
                    sampler: self.scaling_sampler,
                    budget,
                    repetition,
                    seed: self.rep_seed(repetition),
                });
            }
        }
        jobs
    }

    fn run_job(&self, job: &Job) -> Result<Study> {
        let objective =
            ObjectiveSpec::new(self.instance.clone(), self.base, self.runs_per_eval, eval_seed_for(job.seed));
        let mut labels = serde_json::Map::new();
        labels.insert("method".into(), job.method.as_str().into());
        labels.insert("sampler".into(), job.sampler.as_str().into());
        labels.insert("budget".into(), job.budget.into());
        labels.insert("repetition".into(), job.repetition.into());
        let options = StudyOptions { labels, rank_descending: self.rank_descending };
        let assignment = PortfolioAssignment::uniform(job.sampler);
        match job.method {
            Method::Conventional => {
                conventional_with(job.budget, &self.tunables, job.sampler, &objective, job.seed, &options)
            }
            Method::A => {
                method_a_with(job.budget, &self.tunables, &self.order, &assignment, &objective, job.seed, &options)
            }
            Method::B => method_b_with(
                job.budget,
                self.effective_y(job.budget),
                &self.tunables,
                &assignment,
                &objective,
                job.seed,
                &options,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Job {
    pub method: Method,
    pub sampler: SamplerKind,
    pub budget: usize,
    pub repetition: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub job: Job,
    pub study: std::result::Result<Study, String>,
}

impl JobOutcome {
    pub fn from_study(study: Study) -> Result<Self> {
        let labels = &study.config.labels;
        let get = |k: &str| labels.get(k).ok_or_else(|| Error::Format(format!("study lacks label `{k}`")));
        let method: Method = get("method")?.as_str().unwrap_or_default().parse()?;
        let sampler: SamplerKind = get("sampler")?.as_str().unwrap_or_default().parse()?;
        let budget = get("budget")?.as_u64().ok_or_else(|| Error::Format("bad budget label".into()))? as usize;
        let repetition =
            get("repetition")?.as_u64().ok_or_else(|| Error::Format("bad repetition label".into()))? as usize;
        let job = Job { method, sampler, budget, repetition, seed: study.config.master_seed };
        Ok(Self { job, study: Ok(study) })
    }

    pub fn file_name(&self) -> String {
        let j = &self.job;
        format!("{}_{}_{}_r{:03}.jsonl", j.method, j.sampler, j.budget, j.repetition)
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub matrix: Vec<JobOutcome>,
    pub scaling: Vec<JobOutcome>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.matrix.iter().chain(&self.scaling).filter(|o| o.study.is_err()).count()
    }
}

/// Runs every study of the plan. Studies run on the rayon pool; outputs are
/// ordered by (method, sampler, budget, repetition), not by completion.
pub fn run_bench(plan: &BenchPlan, progress: &(dyn Fn(&JobOutcome) + Sync)) -> Result<BenchReport> {
    plan.validate()?;
    let run = |jobs: Vec<Job>| -> Vec<JobOutcome> {
        jobs.par_iter()
            .map(|job| {
                let outcome = JobOutcome { job: *job, study: plan.run_job(job).map_err(|e| e.to_string()) };
                progress(&outcome);
                outcome
            })
            .collect()
    };
    Ok(BenchReport { matrix: run(plan.matrix_jobs()), scaling: run(plan.scaling_jobs()) })
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

/// One row per study, `BENCH_COLUMNS` columns.
pub fn rows_csv(outcomes: &[JobOutcome]) -> String {
    let mut sorted: Vec<&JobOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.job);
    let rows = sorted.into_iter().map(|o| {
        let j = &o.job;
        let (tts, p0, evals) = match &o.study {
            Ok(s) => {
                (fmt_value(s.best_value), s.best_p0.map(fmt_value).unwrap_or_default(), s.total_evaluations.to_string())
            }
            Err(_) => ("failed".into(), String::new(), String::new()),
        };
        [
            j.method.to_string(),
            j.sampler.to_string(),
            j.budget.to_string(),
            j.repetition.to_string(),
            tts,
            p0,
            evals,
            j.seed.to_string(),
        ]
    });
    to_csv(BENCH_COLUMNS, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: Method,
    pub sampler: SamplerKind,
    pub budget: usize,
    pub repetitions: usize,
    pub failed: usize,
    pub finite: usize,
    pub mean_tts: f64,
    pub median_tts: f64,
    pub variance_tts: f64,
    pub speedup_ratio_of_means: f64,
    pub speedup_mean_of_ratios: f64,
    pub baseline_tts: f64,
    pub speedup_vs_baseline: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Median with `+inf` values ranked last.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 || v[n / 2].is_infinite() {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn ratio(num: f64, den: f64) -> f64 {
    if den.is_finite() && den > 0.0 && num > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Per-cell statistics. Means and variances use finite TTS only (the count is
/// reported); medians rank `+inf` last. Speedups compare against the
/// conventional cell with the same sampler and budget, and against the
/// initial-parameter TTS measured inside each study.
pub fn summarize(outcomes: &[JobOutcome]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(Method, SamplerKind, usize), Vec<&JobOutcome>> = BTreeMap::new();
    for o in outcomes {
        cells.entry((o.job.method, o.job.sampler, o.job.budget)).or_default().push(o);
    }
    let by_rep = |cell: &[&JobOutcome]| -> BTreeMap<usize, f64> {
        cell.iter().filter_map(|o| o.study.as_ref().ok().map(|s| (o.job.repetition, s.best_value))).collect()
    };
    let mut out = Vec::new();
    for (&(method, sampler, budget), cell) in &cells {
        let values: Vec<f64> = cell.iter().filter_map(|o| o.study.as_ref().ok().map(|s| s.best_value)).collect();
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let baselines: Vec<f64> = cell
            .iter()
            .filter_map(|o| o.study.as_ref().ok().map(|s| s.baseline_value))
            .filter(|v| v.is_finite())
            .collect();
        let mean_tts = mean(&finite);
        let (ratio_of_means, mean_of_ratios) = match cells.get(&(Method::Conventional, sampler, budget)) {
            Some(conv) => {
                let conv_finite: Vec<f64> = conv
                    .iter()
                    .filter_map(|o| o.study.as_ref().ok().map(|s| s.best_value))
                    .filter(|v| v.is_finite())
                    .collect();
                let conv_reps = by_rep(conv);
                let mine = by_rep(cell);
                let ratios: Vec<f64> = mine
                    .iter()
                    .filter_map(|(r, &v)| conv_reps.get(r).map(|&c| ratio(c, v)))
                    .filter(|x| x.is_finite())
                    .collect();
                (ratio(mean(&conv_finite), mean_tts), mean(&ratios))
            }
            None => (f64::NAN, f64::NAN),
        };
        let baseline_tts = mean(&baselines);
        out.push(CellSummary {
            method,
            sampler,
            budget,
            repetitions: cell.len(),
            failed: cell.iter().filter(|o| o.study.is_err()).count(),
            finite: finite.len(),
            mean_tts,
            median_tts: median(&values),
            variance_tts: sample_variance(&finite),
            speedup_ratio_of_means: ratio_of_means,
            speedup_mean_of_ratios: mean_of_ratios,
            baseline_tts,
            speedup_vs_baseline: ratio(baseline_tts, mean_tts),
        });
    }
    out
}

pub fn summary_csv(cells: &[CellSummary]) -> String {
    let rows = cells.iter().map(|c| {
        [
            c.method.to_string(),
            c.sampler.to_string(),
            c.budget.to_string(),
            c.repetitions.to_string(),
            c.failed.to_string(),
            c.finite.to_string(),
            fmt_value(c.mean_tts),
            fmt_value(c.median_tts),
            fmt_value(c.variance_tts),
            fmt_value(c.speedup_ratio_of_means),
            fmt_value(c.speedup_mean_of_ratios),
            fmt_value(c.baseline_tts),
            fmt_value(c.speedup_vs_baseline),
        ]
    });
    to_csv(SUMMARY_COLUMNS, rows)
}
