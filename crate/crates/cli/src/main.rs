//! `cimtune` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cimtune::bench::{self, BenchPlan, JobOutcome};
use cimtune::cacm::{self, CacmParams};
use cimtune::ising::{self, IsingInstance, PlantedChoice, WishartSpec};
use cimtune::sampler::{PortfolioAssignment, SamplerKind};
use cimtune::study;
use cimtune::tuner::{self, Method, ObjectiveSpec, StudyOptions, TunableSet};

#[derive(Parser)]
#[command(name = "cimtune", version, about = "Simulated CIM-CACm solver, planted instances and hyperparameter tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Wishart planted-ensemble instance.
    Gen(GenArgs),
    /// Check an instance's planted ground state by exhaustive enumeration.
    Verify(VerifyArgs),
    /// Run the solver and print p0 and TTS.
    Solve(SolveArgs),
    /// Run one tuning study.
    Tune(TuneArgs),
    /// Run the strategy x sampler x budget benchmark matrix.
    Bench(BenchArgs),
    /// Recompute benchmark tables from stored study files.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 60)]
    n: usize,
    /// Wishart columns; defaults to ceil(0.7 n).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `all_ones` or `random`.
    #[arg(long, default_value = "all_ones")]
    planted: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = CacmParams::KNOWN_BEST.steps)]
    steps: usize,
    #[arg(long, default_value_t = CacmParams::KNOWN_BEST.dt)]
    dt: f64,
    /// Solver runs per evaluation.
    #[arg(long, default_value_t = cacm::DEFAULT_RUNS)]
    runs: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = CacmParams::KNOWN_BEST.beta1)]
    beta1: f64,
    #[arg(long, default_value_t = CacmParams::KNOWN_BEST.beta2)]
    beta2: f64,
    #[arg(long, default_value_t = CacmParams::KNOWN_BEST.alpha)]
    alpha: f64,
    #[arg(long, default_value_t = CacmParams::KNOWN_BEST.gamma)]
    gamma: f64,
    #[arg(long, default_value_t = CacmParams::KNOWN_BEST.xi)]
    xi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    instance: PathBuf,
    /// `conventional`, `a` or `b`.
    #[arg(long)]
    method: String,
    /// Default sampler for every parameter.
    #[arg(long, default_value = "tpe")]
    sampler: String,
    /// Per-parameter sampler override, `name=kind`; repeatable.
    #[arg(long = "assign", value_name = "NAME=KIND")]
    assign: Vec<String>,
    #[arg(long, default_value_t = 100)]
    budget: usize,
    /// Method B probe trials per parameter.
    #[arg(long = "y-initial", default_value_t = 20)]
    y_initial: usize,
    /// Method A stage order, comma separated.
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
    /// Rank method B parameters by descending probe score.
    #[arg(long)]
    descending: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Study JSONL output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "conventional,a,b")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "tpe,gp,cmaes,random,grid")]
    samplers: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long = "y-initial", default_value_t = 20)]
    y_initial: usize,
    #[arg(long)]
    descending: bool,
    /// Budgets of the conventional-search scaling series; `0` disables it.
    #[arg(long = "scaling-budgets", value_delimiter = ',', default_value = "100,500,1000")]
    scaling_budgets: Vec<usize>,
    #[arg(long = "scaling-sampler", default_value = "tpe")]
    scaling_sampler: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of study JSONL files (as written by `bench`).
    #[arg(long)]
    studies: PathBuf,
    /// Where to write `bench.csv` and `summary.csv`; prints the summary when absent.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<cimtune::Error> for Failure {
    fn from(e: cimtune::Error) -> Self {
        Self::Runtime(e.into())
    }
}

fn usage<T>(r: cimtune::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_instance(path: &Path) -> Result<Arc<IsingInstance>, Failure> {
    let inst = IsingInstance::load(path).with_context(|| format!("loading instance {}", path.display()))?;
    Ok(Arc::new(inst))
}

fn base_params(solver: &SolverArgs) -> Result<CacmParams, Failure> {
    let p = CacmParams { steps: solver.steps, dt: solver.dt, ..CacmParams::KNOWN_BEST };
    usage(p.validate())?;
    if solver.runs == 0 {
        return Err(Failure::Usage("--runs must be >= 1".into()));
    }
    Ok(p)
}

fn fmt_tts(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "inf".into()
    }
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let planted: PlantedChoice = usage(a.planted.parse())?;
    let spec = WishartSpec {
        planted_choice: planted,
        ..WishartSpec::new(a.n, a.m.unwrap_or(WishartSpec::default_m(a.n)), a.seed)
    };
    usage(spec.validate())?;
    let inst = ising::generate_wishart(&spec)?;
    inst.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let scale = inst.meta().map_or(1.0, |m| m.coupling_scale);
    println!(
        "n={} m={} ground_energy={:.17e} coupling_scale={scale:.17e}",
        inst.n_spins(),
        spec.m_columns,
        inst.ground_energy()
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let inst = load_instance(&a.instance)?;
    let (_, ground) = usage(ising::brute_force_ground(&inst))?;
    let planted = inst.ground_energy();
    let ok = (planted - ground).abs() <= 1e-9 * ground.abs().max(1.0);
    println!("planted_energy={planted:.17e} brute_force_minimum={ground:.17e} {}", if ok { "pass" } else { "FAIL" });
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow::anyhow!("planted state is not a ground state")))
    }
}

fn cmd_solve(a: SolveArgs) -> CmdResult {
    let inst = load_instance(&a.instance)?;
    let params = CacmParams {
        beta1: a.beta1,
        beta2: a.beta2,
        alpha: a.alpha,
        gamma: a.gamma,
        xi: a.xi,
        ..base_params(&a.solver)?
    };
    usage(params.validate())?;
    let r = cacm::evaluate(&inst, &params, a.solver.runs, a.seed)?;
    println!("runs={} hits={} p0={:.6} tts={}", r.runs, r.hits, r.p0, fmt_tts(r.tts));
    println!("mean_best_energy={:.12e} min_best_energy={:.12e}", r.mean_best_energy, r.min_best_energy);
    println!("diverged={}", r.diverged);
    Ok(())
}

fn parse_assignment(default: &str, assign: &[String], tunables: &TunableSet) -> Result<PortfolioAssignment, Failure> {
    let mut a = PortfolioAssignment::uniform(usage(default.parse())?);
    for item in assign {
        let (name, kind) =
            item.split_once('=').ok_or_else(|| Failure::Usage(format!("--assign expects name=kind, got `{item}`")))?;
        a = a.with(name.trim(), usage(kind.trim().parse())?);
    }
    usage(a.validate(&tunables.space))?;
    Ok(a)
}

fn cmd_tune(a: TuneArgs) -> CmdResult {
    let method: Method = usage(a.method.parse())?;
    let tunables = TunableSet::cacm_default();
    let assignment = parse_assignment(&a.sampler, &a.assign, &tunables)?;
    let order = if a.order.is_empty() { tunables.names.clone() } else { a.order.clone() };
    let base = base_params(&a.solver)?;
    let n = tunables.len();
    match method {
        Method::B if a.y_initial == 0 || a.budget <= n * a.y_initial || a.budget - n * a.y_initial < n => {
            return Err(Failure::Usage(format!(
                "method b needs budget > {n}*y_initial with at least {n} trials left; got budget {} and y_initial {}",
                a.budget, a.y_initial
            )));
        }
        Method::A if a.budget < n => {
            return Err(Failure::Usage(format!("method a needs budget >= {n}")));
        }
        _ if a.budget == 0 => return Err(Failure::Usage("--budget must be >= 1".into())),
        _ => {}
    }

    let inst = load_instance(&a.instance)?;
    let objective = ObjectiveSpec::new(inst, base, a.solver.runs, tuner::eval_seed_for(a.seed));
    let options = StudyOptions { rank_descending: a.descending, ..Default::default() };
    let s = match method {
        Method::Conventional => {
            tuner::conventional_with(a.budget, &tunables, assignment.default_kind, &objective, a.seed, &options)
        }
        Method::A => tuner::method_a_with(a.budget, &tunables, &order, &assignment, &objective, a.seed, &options),
        Method::B => tuner::method_b_with(a.budget, a.y_initial, &tunables, &assignment, &objective, a.seed, &options),
    };
    let s = usage(s)?;
    study::save_study(&s, &a.out).with_context(|| format!("writing {}", a.out.display()))?;

    println!("method={} budget={} trials={} seed={}", method, a.budget, s.total_evaluations, a.seed);
    if let Some(scores) = &s.probe_scores {
        let ranked: Vec<String> = scores.iter().map(|(n, v)| format!("{n}={}", fmt_tts(*v))).collect();
        println!("probe_scores {}", ranked.join(" "));
    }
    println!("stage  target  sampler  trials  incumbent_tts");
    for st in &s.stages {
        println!(
            "{:>5}  {:<6}  {:<7}  {:>6}  {}",
            st.stage_index,
            st.target_param,
            st.sampler,
            st.trials.len(),
            fmt_tts(st.incumbent_value_after)
        );
    }
    let best: Vec<String> = s.named_best().iter().map(|(n, v)| format!("{n}={v:.6}")).collect();
    println!("best {}", best.join(" "));
    println!("baseline_tts={} best_tts={}", fmt_tts(s.baseline_value), fmt_tts(s.best_value));
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = cimtune::Error>>(items: &[String]) -> Result<Vec<T>, Failure> {
    items.iter().map(|s| usage(s.trim().parse())).collect()
}

fn write_tables(dir: &Path, stem: &str, outcomes: &[JobOutcome]) -> anyhow::Result<String> {
    let rows = bench::rows_csv(outcomes);
    let summary = bench::summary_csv(&bench::summarize(outcomes));
    fs::write(dir.join(format!("{stem}.csv")), rows)?;
    fs::write(dir.join(format!("{stem}_summary.csv")), &summary)?;
    Ok(summary)
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let methods: Vec<Method> = parse_list(&a.methods)?;
    let samplers: Vec<SamplerKind> = parse_list(&a.samplers)?;
    let base = base_params(&a.solver)?;
    let inst = load_instance(&a.instance)?;
    let plan = BenchPlan {
        methods,
        samplers,
        budgets: a.budgets.clone(),
        repetitions: a.repetitions,
        y_initial: a.y_initial,
        runs_per_eval: a.solver.runs,
        base,
        seed: a.seed,
        rank_descending: a.descending,
        scaling_budgets: a.scaling_budgets.iter().copied().filter(|&b| b > 0).collect(),
        scaling_sampler: usage(a.scaling_sampler.parse())?,
        ..BenchPlan::new(inst.clone())
    };
    usage(plan.validate())?;

    let studies = a.out_dir.join("studies");
    let scaling_dir = a.out_dir.join("scaling");
    for d in [&studies, &scaling_dir] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let plan_json = serde_json::json!({
        "instance": a.instance.display().to_string(),
        "instance_meta": inst.meta(),
        "n": inst.n_spins(),
        "methods": plan.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "samplers": plan.samplers.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        "budgets": plan.budgets,
        "repetitions": plan.repetitions,
        "y_initial": plan.y_initial,
        "y_effective": plan.budgets.iter().map(|&b| plan.effective_y(b)).collect::<Vec<_>>(),
        "runs_per_eval": plan.runs_per_eval,
        "steps": plan.base.steps,
        "dt": plan.base.dt,
        "seed": plan.seed,
        "rank_descending": plan.rank_descending,
        "scaling_budgets": plan.scaling_budgets,
        "scaling_sampler": plan.scaling_sampler.as_str(),
    });
    fs::write(a.out_dir.join("plan.json"), serde_json::to_string_pretty(&plan_json).context("plan json")?)
        .context("writing plan.json")?;

    let progress = |o: &JobOutcome| {
        let j = &o.job;
        match &o.study {
            Ok(s) => eprintln!(
                "done {} {} budget={} rep={} tts={}",
                j.method,
                j.sampler,
                j.budget,
                j.repetition,
                fmt_tts(s.best_value)
            ),
            Err(e) => eprintln!("FAILED {} {} budget={} rep={}: {e}", j.method, j.sampler, j.budget, j.repetition),
        }
    };
    let report = bench::run_bench(&plan, &progress)?;
    for (dir, outcomes) in [(&studies, &report.matrix), (&scaling_dir, &report.scaling)] {
        for o in outcomes {
            if let Ok(s) = &o.study {
                study::save_study(s, dir.join(o.file_name()))?;
            }
        }
    }
    let summary = write_tables(&a.out_dir, "bench", &report.matrix)?;
    if !report.scaling.is_empty() {
        write_tables(&a.out_dir, "scaling", &report.scaling)?;
    }
    print!("{summary}");
    match report.failures() {
        0 => Ok(()),
        k => Err(Failure::Runtime(anyhow::anyhow!("{k} studies failed; see FAILED lines and `failed` CSV cells"))),
    }
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.studies)
        .with_context(|| format!("reading {}", a.studies.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Usage(format!("no .jsonl study files in {}", a.studies.display())));
    }
    let mut outcomes = Vec::with_capacity(paths.len());
    for p in &paths {
        let s = study::load_study(p).with_context(|| format!("reading {}", p.display()))?;
        outcomes.push(JobOutcome::from_study(s).with_context(|| format!("labels in {}", p.display()))?);
    }
    match &a.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            print!("{}", write_tables(dir, "bench", &outcomes)?);
        }
        None => print!("{}", bench::summary_csv(&bench::summarize(&outcomes))),
    }
    Ok(())
}
