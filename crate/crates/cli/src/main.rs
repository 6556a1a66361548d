//! `spcc`: runs the distillation pipeline one stage at a time.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spcc::agent::{episode_setup, RandomAgent, Agent};
use spcc::branching::{
    choose_k, choose_k_by, derive_contexts, evaluate_grid, grid_conditions, kmeans, train_branches,
    BranchContext, BranchTrainConfig, BranchedPolicy, ClusterModel, GridConfig, GridResults, KRule,
};
use spcc::distill::{distill, DistillConfig};
use spcc::harness::{
    measure_efficiency, run_pipeline, run_trace, scenario_lossy_with, scenario_oscillating,
    scenario_sweep, Condition, Metrics, PipelineConfig, PolicyRef, MIN_DECISIONS,
};
use spcc::netsim::{ConfigRanges, Env, EnvConfig};
use spcc::symtree::PolicyTree;
use spcc::teacher::{collect_rollouts, train_teacher, RolloutDataset, TeacherPolicy, TrainConfig};
use spcc::Error;

#[derive(Parser)]
#[command(name = "spcc", version, about = "Symbolic distillation of rate-based congestion control")]
struct Cli {
    /// Seed for every random choice in the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the neural teacher with PPO.
    TrainTeacher {
        /// JSON training config; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON link ranges; the baseline ranges when omitted.
        #[arg(long)]
        ranges: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training curve and convergence summary.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Record deterministic teacher rollouts as CSV.
    Collect {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long, default_value_t = 80)]
        episodes: usize,
        #[arg(long)]
        ranges: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a policy tree from rollouts.
    Distill {
        #[arg(long)]
        rollouts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// JSON distillation config; the compact preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trailing episodes kept out of training for the report.
        #[arg(long, default_value_t = 0)]
        holdout_episodes: usize,
        /// Per-generation GP fitness log.
        #[arg(long)]
        fitness_log: Option<PathBuf>,
    },
    /// Evaluate the teacher over the regular grid of link conditions.
    Grid {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long, default_value_t = 3)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster grid returns and derive branch contexts.
    Cluster {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        /// Use this many clusters instead of choosing.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value_t = Rule::Elbow)]
        rule: Rule,
        /// Silhouette and elbow curves.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train, distill and package one branch per context.
    TrainBranches {
        #[arg(long)]
        contexts: PathBuf,
        /// Grid whose trajectories train the branch decider.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Baseline teacher to continue from.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a policy through an evaluation scenario.
    Trace {
        #[arg(long, value_enum)]
        policy: PolicyKind,
        /// Policy file (tree, teacher) or directory (branched).
        #[arg(long)]
        path: Option<PathBuf>,
        /// lossy, oscillating or sweep:<bandwidth|latency|queue|loss>
        #[arg(long)]
        scenario: String,
        /// Random loss of the lossy scenario.
        #[arg(long, default_value_t = 0.02)]
        loss: f64,
        /// Comma-separated sweep values; defaults per condition.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Measure FLOPs and per-decision runtime.
    Bench {
        #[arg(long, value_enum)]
        policy: PolicyKind,
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, default_value_t = MIN_DECISIONS)]
        decisions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage end to end, writing all artifacts to a directory.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Tree,
    Branched,
    Teacher,
    Aimd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Elbow,
    Silhouette,
}

enum Loaded {
    Tree(PolicyTree),
    Branched(BranchedPolicy),
    Teacher(TeacherPolicy),
    Aimd,
}

impl Loaded {
    fn load(kind: PolicyKind, path: Option<&Path>) -> anyhow::Result<Self> {
        let need = || path.context("--path is required for this policy");
        Ok(match kind {
            PolicyKind::Tree => Loaded::Tree(PolicyTree::parse(&fs::read_to_string(need()?)?)?),
            PolicyKind::Branched => Loaded::Branched(BranchedPolicy::load(need()?)?),
            PolicyKind::Teacher => Loaded::Teacher(TeacherPolicy::load(need()?)?),
            PolicyKind::Aimd => Loaded::Aimd,
        })
    }

    fn as_ref(&self) -> PolicyRef<'_> {
        match self {
            Loaded::Tree(t) => PolicyRef::Tree(t),
            Loaded::Branched(b) => PolicyRef::Branched(b),
            Loaded::Teacher(p) => PolicyRef::Teacher(p),
            Loaded::Aimd => PolicyRef::Aimd,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn read_json_or<T: serde::de::DeserializeOwned>(path: Option<&PathBuf>, default: T) -> anyhow::Result<T> {
    path.map_or(Ok(default), |p| read_json(p))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value).map_err(Error::from)?)?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Labels each grid point with the context whose return centroid is nearest.
fn labels_from_contexts(grid: &GridResults, contexts: &[BranchContext]) -> ClusterModel {
    let centroids: Vec<f64> = contexts.iter().map(|c| c.return_centroid).collect();
    let mut model = ClusterModel {
        k: contexts.len(),
        centroids,
        labels: Vec::new(),
        inertia: 0.0,
        silhouette: 0.0,
        inertia_history: Vec::new(),
    };
    model.labels = grid.points.iter().map(|p| model.predict(p.mean_return)).collect();
    model
}

/// Observation histories from random-action episodes, used as fixed
/// benchmark inputs.
fn bench_inputs(seed: u64) -> spcc::Result<Vec<Vec<f64>>> {
    let ranges = ConfigRanges::baseline();
    let env_config = EnvConfig::default();
    let mut rows = Vec::new();
    for e in 0..5 {
        let (network, env_seed) = episode_setup(&ranges, seed, e);
        let mut env = Env::new(network, env_config.clone(), env_seed)?;
        let mut agent = RandomAgent::new(env_seed);
        while !env.is_done() {
            rows.push(env.observation().features().to_vec());
            let a = agent.act(env.observation());
            env.step(a)?;
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SweepRow {
    condition: &'static str,
    value: f64,
    #[serde(flatten)]
    metrics: Metrics,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::TrainTeacher {
            config,
            ranges,
            out,
            report,
        } => {
            let config: TrainConfig = read_json_or(config.as_ref(), TrainConfig::default())?;
            let ranges = read_json_or(ranges.as_ref(), ConfigRanges::baseline())?;
            let trained = train_teacher(&ranges, &config, seed)?;
            trained.policy.save(&out)?;
            if let Some(r) = report {
                write_json(&r, &trained.report)?;
            }
            eprintln!(
                "trained return {:.3} vs random {:.3}",
                trained.report.final_return, trained.report.random_return
            );
        }
        Command::Collect {
            teacher,
            episodes,
            ranges,
            out,
        } => {
            let policy = TeacherPolicy::load(&teacher)?;
            let ranges = read_json_or(ranges.as_ref(), ConfigRanges::baseline())?;
            let env = EnvConfig {
                history_len: policy.history_len(),
                ..EnvConfig::default()
            };
            let data = collect_rollouts(&policy, &ranges, &env, episodes, seed)?;
            data.write_csv(create(&out)?)?;
        }
        Command::Distill {
            rollouts,
            out,
            report,
            config,
            holdout_episodes,
            fitness_log,
        } => {
            let config: DistillConfig = read_json_or(config.as_ref(), DistillConfig::compact())?;
            let data = RolloutDataset::load(&rollouts)?;
            let (train, holdout) = data.split_holdout(holdout_episodes);
            let held = (!holdout.is_empty()).then_some(&holdout);
            let d = distill(&train, held, &config, seed)?;
            fs::write(&out, d.tree.to_text())?;
            if let Some(r) = report {
                write_json(&r, &d.report)?;
            }
            if let Some(f) = fitness_log {
                d.write_fitness_log(create(&f)?)?;
            }
        }
        Command::Grid {
            teacher,
            episodes,
            out,
        } => {
            let policy = TeacherPolicy::load(&teacher)?;
            let config = GridConfig {
                episodes_per_config: episodes,
                env: EnvConfig {
                    history_len: policy.history_len(),
                    ..EnvConfig::default()
                },
                ..GridConfig::default()
            };
            let configs = grid_conditions(&ConfigRanges::baseline());
            let grid = evaluate_grid(|| &policy, &configs, &config, seed)?;
            write_json(&out, &grid)?;
        }
        Command::Cluster {
            grid,
            out,
            k_max,
            k,
            rule,
            report,
        } => {
            let grid: GridResults = read_json(&grid)?;
            let returns = grid.returns();
            let model = match k {
                Some(k) => kmeans(&returns, k, seed)?,
                None => {
                    let rule = match rule {
                        Rule::Elbow => KRule::Elbow,
                        Rule::Silhouette => KRule::Silhouette,
                    };
                    let sel = if matches!(rule, KRule::Elbow) {
                        choose_k(&returns, k_max, seed)?
                    } else {
                        choose_k_by(&returns, k_max, rule, seed)?
                    };
                    eprintln!(
                        "k = {} (elbow {}, silhouette {})",
                        sel.k, sel.elbow_k, sel.silhouette_k
                    );
                    if let Some(r) = &report {
                        write_json(r, &sel)?;
                    }
                    sel.model
                }
            };
            let contexts = derive_contexts(&grid, &model, &ConfigRanges::baseline())?;
            write_json(&out, &contexts)?;
        }
        Command::TrainBranches {
            contexts,
            grid,
            out_dir,
            teacher,
            config,
        } => {
            let contexts: Vec<BranchContext> = read_json(&contexts)?;
            let grid: GridResults = read_json(&grid)?;
            let config: BranchTrainConfig = read_json_or(config.as_ref(), PipelineConfig::default().branches)?;
            let base = teacher.map(|p| TeacherPolicy::load(&p)).transpose()?;
            let model = labels_from_contexts(&grid, &contexts);
            let (policy, reports) = train_branches(&contexts, &grid, &model, &config, base.as_ref(), seed)?;
            policy.save(&out_dir)?;
            write_json(&out_dir.join("report.json"), &reports)?;
        }
        Command::Trace {
            policy,
            path,
            scenario,
            loss,
            values,
            out,
            metrics,
        } => {
            let loaded = Loaded::load(policy, path.as_deref())?;
            let env = EnvConfig::default();
            if let Some(cond) = scenario.strip_prefix("sweep:") {
                let cond = Condition::parse(cond)?;
                let values = values.unwrap_or_else(|| cond.default_values());
                let mut w = csv::Writer::from_writer(create(&out)?);
                let mut rows = Vec::new();
                for (s, &v) in scenario_sweep(cond, &values)?.into_iter().zip(&values) {
                    let (_, m) = run_trace(&s.with_seed(seed), loaded.as_ref(), &env)?;
                    rows.push(SweepRow {
                        condition: cond.name(),
                        value: v,
                        metrics: m,
                    });
                }
                w.write_record([
                    "condition",
                    "value",
                    "mean_thpt",
                    "sum_thpt",
                    "delta_opt_sq",
                    "link_utilization",
                ])?;
                for r in &rows {
                    w.write_record([
                        r.condition.to_string(),
                        r.value.to_string(),
                        r.metrics.mean_thpt.to_string(),
                        r.metrics.sum_thpt.to_string(),
                        r.metrics.delta_opt_sq.to_string(),
                        r.metrics.link_utilization.to_string(),
                    ])?;
                }
                w.flush()?;
                if let Some(m) = metrics {
                    write_json(&m, &rows)?;
                }
            } else {
                let s = match scenario.as_str() {
                    "lossy" => scenario_lossy_with(loss)?,
                    "oscillating" => scenario_oscillating(),
                    other => bail!(Error::InvalidArgument(format!("unknown scenario {other:?}"))),
                };
                let (record, m) = run_trace(&s.with_seed(seed), loaded.as_ref(), &env)?;
                record.write_csv(create(&out)?)?;
                if let Some(p) = metrics {
                    write_json(&p, &m)?;
                }
                eprintln!(
                    "mean throughput {:.2} Mbps, utilization {:.3}, delta {:.2}",
                    m.mean_thpt, m.link_utilization, m.delta_opt_sq
                );
            }
        }
        Command::Bench {
            policy,
            path,
            decisions,
            out,
        } => {
            let loaded = Loaded::load(policy, path.as_deref())?;
            let inputs = bench_inputs(seed)?;
            let eff = measure_efficiency(loaded.as_ref(), &inputs, decisions)?;
            write_json(&out, &eff)?;
        }
        Command::Pipeline { config, out_dir } => {
            let mut config: PipelineConfig = read_json_or(config.as_ref(), PipelineConfig::default())?;
            config.seed = seed;
            let out = run_pipeline(&config)?;
            fs::create_dir_all(&out_dir)?;
            out.teacher.policy.save(&out_dir.join("teacher.txt"))?;
            write_json(&out_dir.join("teacher_report.json"), &out.teacher.report)?;
            out.train.save(&out_dir.join("rollouts_train.csv"))?;
            out.holdout.save(&out_dir.join("rollouts_holdout.csv"))?;
            fs::write(out_dir.join("baseline.tree"), out.distilled.tree.to_text())?;
            write_json(&out_dir.join("distill_report.json"), &out.distilled.report)?;
            out.distilled.write_fitness_log(create(&out_dir.join("fitness_log.csv"))?)?;
            write_json(&out_dir.join("grid.json"), &out.grid)?;
            write_json(&out_dir.join("clusters.json"), &out.selection)?;
            write_json(&out_dir.join("contexts.json"), &out.contexts)?;
            out.branched.save(&out_dir.join("branched"))?;
            write_json(&out_dir.join("branch_reports.json"), &out.branch_reports)?;
            write_json(&out_dir.join("times.json"), &out.times)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    message: String,
}

fn report(kind: &str, message: String) {
    let r = ErrorReport {
        error: kind.into(),
        message,
    };
    eprintln!("{}", serde_json::to_string(&r).unwrap_or_default());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim().to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<Error>())
                .map(Error::kind)
                .or_else(|| e.chain().find_map(|c| c.downcast_ref::<std::io::Error>()).map(|_| "io"))
                .unwrap_or("other");
            report(kind, format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
