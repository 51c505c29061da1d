use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use bbplan_core::metrics::{trivial_lower_bound, Evaluator, Objective, ScheduleEvaluator};
use bbplan_core::model::InstanceFile;
use bbplan_core::resources::{gen_problem3, Problem3Config, ResourceDispatcher, ResourcePool};
use bbplan_core::schedulers::heuristic_plan;
use bbplan_core::search::{run_algorithm, SearchConfig};
use bbplan_core::surrogate::{
    accuracy, generate_dataset, train, FeatureSpace, FeedForward, SurrogateEvaluator, TrainConfig, DEFAULT_WINDOW,
};
use bbplan_core::{instances, JobSet, Plan};
use bbplan_harness::config::{parse_budget, AbstractionKind, DispatcherKind, ExperimentConfig, Method, Variant};
use bbplan_harness::experiment::{build_hierarchy, check, make_oracle, summarise, summary_json, write_csv, Instance};
use bbplan_harness::render::{render_gantt, render_tree_density, GanttOptions};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "bbplan", about = "Monte-Carlo planning for black-box job-shop dispatchers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct InstanceArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Resource pool JSON; implies the resource-aware dispatcher.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value = "online")]
    dispatcher: String,
}

#[derive(clap::Args, Clone)]
struct SearchArgs {
    /// Search algorithm or baseline rule.
    #[arg(long, default_value = "mcts")]
    algo: String,
    /// Per committed job: `sims:N` or `time_ms:N`.
    #[arg(long, default_value = "sims:100")]
    budget: String,
    #[arg(long, default_value = "none")]
    enhancements: String,
    #[arg(long, default_value = "makespan")]
    objective: String,
    #[arg(long, default_value = "integrated")]
    abstraction: String,
    #[arg(long, default_value_t = 0.2)]
    abstraction_ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, default_value_t = 2)]
    nmcs_level: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance.
    Gen {
        #[arg(long, default_value = "1")]
        problem: String,
        #[arg(long, default_value_t = 200)]
        jobs: usize,
        #[arg(long, default_value_t = 10)]
        machines: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short = 'T', default_value_t = 0.2)]
        t: f64,
        #[arg(short = 'R', default_value_t = 0.8)]
        r: f64,
        #[arg(long)]
        out: PathBuf,
        /// Where problem 3 writes its resource pool.
        #[arg(long)]
        pool_out: Option<PathBuf>,
    },
    /// Search for a plan and write it as a JSON list of job ids.
    Plan {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the search tree width profile as SVG.
        #[arg(long)]
        tree_svg: Option<PathBuf>,
    },
    /// Dispatch a plan and write the schedule as CSV.
    Schedule {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resource log CSV (resource dispatcher only).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run an experiment configuration.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Directory for results.csv and summary.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Exit with an error when any `expect` line fails.
        #[arg(long)]
        check: bool,
        /// Full-size instances and ten seconds per step.
        #[arg(long)]
        full_scale: bool,
    },
    /// Draw a plan's schedule as an SVG Gantt chart.
    Gantt {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Mark the trivial lower bound.
        #[arg(long)]
        bound: bool,
        #[arg(long)]
        deadlines: bool,
    },
    #[command(subcommand)]
    Surrogate(SurrogateCommand),
    /// Print the option hierarchy built for an instance.
    Abstraction {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "integrated")]
        kind: String,
        #[arg(long, default_value = "sims:100")]
        budget: String,
        #[arg(long, default_value_t = 0.2)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum SurrogateCommand {
    /// Train a waiting-time model on random plans of an instance.
    Train {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 100)]
        plans: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report a model's accuracy on fresh random plans, or search with it.
    Eval {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        plans: usize,
        /// Accepted absolute error in time steps.
        #[arg(long, default_value_t = 5.0)]
        tolerance: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also plan with MCTS on the surrogate and report the true ratio.
        #[arg(long)]
        search_sims: Option<u64>,
    },
}

/// Model file: the feature layout together with the weights.
#[derive(Serialize, Deserialize)]
struct SurrogateFile {
    space: FeatureSpace,
    model: FeedForward,
}

fn read_instance(path: &Path) -> Result<(JobSet, Option<i64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: InstanceFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((file.to_jobs()?, file.known_optimum))
}

fn load(args: &InstanceArgs) -> Result<(Instance, DispatcherKind)> {
    let (jobs, optimum) = read_instance(&args.instance)?;
    let pool: Option<ResourcePool> = match &args.pool {
        Some(p) => Some(serde_json::from_str(&fs::read_to_string(p)?).context("parsing pool")?),
        None => None,
    };
    let kind = if pool.is_some() {
        DispatcherKind::Resource
    } else {
        args.dispatcher.parse().map_err(anyhow::Error::msg)?
    };
    let name = args.instance.file_stem().map_or("instance".into(), |s| s.to_string_lossy().into_owned());
    Ok((Instance { name, jobs: Arc::new(jobs), pool, optimum }, kind))
}

fn evaluator(inst: &Instance, kind: DispatcherKind, objective: Objective) -> Result<ScheduleEvaluator> {
    bbplan_harness::experiment::make_evaluator(inst, kind, objective)
}

fn read_plan(path: &Path, jobs: &JobSet) -> Result<Plan> {
    let ids: Vec<usize> = serde_json::from_str(&fs::read_to_string(path)?).context("parsing plan")?;
    let plan = Plan::new(ids)?;
    plan.ensure_complete(jobs)?;
    Ok(plan)
}

fn gen(problem: &str, jobs: usize, machines: usize, seed: u64, t: f64, r: f64, out: &Path, pool_out: Option<&Path>) -> Result<()> {
    let (set, optimum, pool) = match problem {
        "1" | "problem1" => {
            let p = instances::gen_problem1(jobs)?;
            (p.jobs, Some(p.optimum), None)
        }
        "2" | "problem2" => (instances::gen_demirkol(jobs, machines, seed, t, r)?, None, None),
        "3" | "problem3" => {
            let (set, pool) = gen_problem3(&Problem3Config { jobs, groups: machines, seed, ..Default::default() })?;
            (set, None, Some(pool))
        }
        other => bail!("unknown problem `{other}`"),
    };
    fs::write(out, serde_json::to_string_pretty(&InstanceFile::from_jobs(&set, optimum))?)?;
    if let Some(pool) = pool {
        let path = pool_out.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("pool.json"));
        fs::write(&path, serde_json::to_string_pretty(&pool)?)?;
        println!("wrote {} and {}", out.display(), path.display());
    } else {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn plan(inst_args: &InstanceArgs, s: &SearchArgs, out: Option<&Path>, tree_svg: Option<&Path>) -> Result<()> {
    let (inst, kind) = load(inst_args)?;
    let objective: Objective = s.objective.parse().map_err(anyhow::Error::msg)?;
    let ev = evaluator(&inst, kind, objective)?;
    let method: Method = s.algo.parse().map_err(anyhow::Error::msg)?;
    let budget = parse_budget(&s.budget).map_err(anyhow::Error::msg)?;
    let (plan, widths) = match method {
        Method::Baseline(rule) => (heuristic_plan(&inst.jobs, rule, s.seed)?, Vec::new()),
        Method::Search(algo) => {
            let variant: Variant = s.enhancements.parse().map_err(anyhow::Error::msg)?;
            let kind: AbstractionKind = s.abstraction.parse().map_err(anyhow::Error::msg)?;
            let h = if algo.is_hierarchical() {
                Some(build_hierarchy(kind, &inst.jobs, &ev, budget, s.abstraction_ratio, s.seed)?)
            } else {
                None
            };
            let cfg = SearchConfig {
                c: s.c,
                budget,
                enhancements: variant.enhancements,
                parallelism: variant.parallelism,
                seed: s.seed,
                ..Default::default()
            };
            let o = run_algorithm(algo, &ev, h.as_ref(), s.nmcs_level, &cfg)?;
            (o.plan, o.trace.widths)
        }
    };
    println!("objective {} ratio {:.4}", ev.objective(plan.as_slice()), ev.ratio(plan.as_slice()));
    if let Some(out) = out {
        fs::write(out, serde_json::to_string(plan.as_slice())?)?;
    }
    if let Some(svg) = tree_svg {
        fs::write(svg, render_tree_density(&widths))?;
    }
    Ok(())
}

fn schedule(args: &InstanceArgs, plan_path: &Path, out: &Path, log: Option<&Path>) -> Result<()> {
    let (inst, kind) = load(args)?;
    let plan = read_plan(plan_path, &inst.jobs)?;
    let schedule = if kind == DispatcherKind::Resource {
        let d = ResourceDispatcher::new(inst.pool.clone().unwrap_or_else(ResourcePool::unlimited));
        let (s, l) = d.dispatch(&inst.jobs, &plan)?;
        if let Some(log) = log {
            fs::write(log, l.to_csv())?;
        }
        s
    } else {
        make_oracle(kind, None).schedule(&inst.jobs, &plan)?
    };
    fs::write(out, bbplan_core::model::schedule_to_csv(&schedule))?;
    Ok(())
}

fn experiment(config: &Path, out: &Path, check_mode: bool, full_scale: bool) -> Result<bool> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: ExperimentConfig = text.parse()?;
    if full_scale {
        cfg = cfg.full_scale();
    }
    let rows = bbplan_harness::run_experiment(&cfg)?;
    fs::create_dir_all(out)?;
    write_csv(&rows, &out.join("results.csv"))?;
    let summaries = summarise(&rows);
    fs::write(out.join("summary.json"), summary_json(&summaries)?)?;
    for s in &summaries {
        let ci = s.ratio.ci95.map_or(String::new(), |c| format!(" ± {c:.4}"));
        println!("{:>8} {:<16} ratio {:.4}{ci}", s.algo, s.enhancements, s.ratio.mean);
    }
    let results = check(&cfg, &summaries);
    for r in &results {
        println!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.expectation);
    }
    Ok(!check_mode || results.iter().all(|r| r.passed))
}

fn gantt(args: &InstanceArgs, plan_path: &Path, out: &Path, bound: bool, deadlines: bool) -> Result<()> {
    let (inst, kind) = load(args)?;
    let plan = read_plan(plan_path, &inst.jobs)?;
    let s = make_oracle(kind, inst.pool.as_ref()).schedule(&inst.jobs, &plan)?;
    let opts = GanttOptions { bound: bound.then(|| trivial_lower_bound(&inst.jobs)), deadlines };
    fs::write(out, render_gantt(&s, &inst.jobs, &opts))?;
    Ok(())
}

fn surrogate(cmd: &SurrogateCommand) -> Result<()> {
    match cmd {
        SurrogateCommand::Train { instance, plans, epochs, lr, seed, out } => {
            let (inst, kind) = load(instance)?;
            let oracle = make_oracle(kind, inst.pool.as_ref());
            let space = FeatureSpace::for_jobs(&inst.jobs, DEFAULT_WINDOW);
            let data = generate_dataset(&inst.jobs, oracle.as_ref(), &space, *plans, *seed);
            let mut model = FeedForward::for_space(&space, *seed)?;
            let cfg = TrainConfig { epochs: *epochs, learning_rate: *lr, seed: *seed, ..Default::default() };
            let curve = train(&mut model, &data, &cfg)?;
            println!("loss {:.6} -> {:.6} over {} samples", curve[0], curve[curve.len() - 1], data.len());
            fs::write(out, serde_json::to_string(&SurrogateFile { space, model })?)?;
        }
        SurrogateCommand::Eval { instance, model, plans, tolerance, seed, search_sims } => {
            let (inst, kind) = load(instance)?;
            let file: SurrogateFile = serde_json::from_str(&fs::read_to_string(model)?).context("parsing model")?;
            file.model.validate()?;
            let oracle = make_oracle(kind, inst.pool.as_ref());
            let data = generate_dataset(&inst.jobs, oracle.as_ref(), &file.space, *plans, *seed);
            let acc = accuracy(&file.model, &data, tolerance / file.space.horizon);
            println!("mse {:.3e} r2 {:.4} within {tolerance} steps {:.1}%", acc.mse, acc.r2, 100.0 * acc.within);
            if let Some(sims) = search_sims {
                let reference = evaluator(&inst, kind, Objective::Makespan)?;
                let ev = SurrogateEvaluator::new(&reference, file.model, file.space)?;
                let cfg = SearchConfig { budget: bbplan_core::search::Budget::Simulations(*sims), seed: *seed, ..Default::default() };
                let o = bbplan_core::search::mcts_plan(&ev, &cfg)?;
                println!("surrogate-planned ratio {:.4}", reference.ratio(o.plan.as_slice()));
            }
        }
    }
    Ok(())
}

fn abstraction(args: &InstanceArgs, kind: &str, budget: &str, ratio: f64, seed: u64) -> Result<()> {
    let (inst, dispatcher) = load(args)?;
    let ev = evaluator(&inst, dispatcher, Objective::Makespan)?;
    let kind: AbstractionKind = kind.parse().map_err(anyhow::Error::msg)?;
    let budget = parse_budget(budget).map_err(anyhow::Error::msg)?;
    let h = build_hierarchy(kind, &inst.jobs, &ev, budget, ratio, seed)?;
    println!("{h}");
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { problem, jobs, machines, seed, t, r, out, pool_out } => {
            gen(&problem, jobs, machines, seed, t, r, &out, pool_out.as_deref())?
        }
        Command::Plan { instance, search, out, tree_svg } => plan(&instance, &search, out.as_deref(), tree_svg.as_deref())?,
        Command::Schedule { instance, plan, out, log } => schedule(&instance, &plan, &out, log.as_deref())?,
        Command::Experiment { config, out, check, full_scale } => return experiment(&config, &out, check, full_scale),
        Command::Gantt { instance, plan, out, bound, deadlines } => gantt(&instance, &plan, &out, bound, deadlines)?,
        Command::Surrogate(cmd) => surrogate(&cmd)?,
        Command::Abstraction { instance, kind, budget, ratio, seed } => abstraction(&instance, &kind, &budget, ratio, seed)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
