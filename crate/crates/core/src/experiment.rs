//! Turns a [`RunConfig`] into tasks and backends, runs them, and writes
//! the run directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::baselines::{self, BaselineConfig, BaselineError, Selector};
use crate::config::{BackendConfig, BackendKind, ConfigError, Method, RunConfig};
use crate::game24::{self, Game24Task, LlmStepJudge, OracleStepJudge, StepJudge};
use crate::icrl::{run_problem, EpisodeLog, IcrlError};
use crate::metrics::{self, MetricsError};
use crate::policy::{
    estimate_tokens, BackendError, GenRequest, GenResponse, OpenAiConfig, OpenAiPolicy, Policy, RateLimiter, Script,
    ScriptedPolicy, DEFAULT_API_KEY_ENV,
};
use crate::task::{TaskKind, TaskRunner};
use crate::textworld::{self, EnvFactory, MiniLabFactory, StdioEnvFactory, TextWorldTask, WorldSpec};
use crate::writing::{self, alpaca_export, BaseAnswer, WritingTask};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Build(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Loop(#[from] IcrlError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("projected cost ${projected:.2} exceeds the cap of ${cap:.2}")]
    CostCap { projected: f64, cap: f64 },
    #[error("no problems selected")]
    NoProblems,
}

fn build_err(what: &str, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Build(format!("{what}: {e}"))
}

/// Stand-in used for dry runs so no network client is ever created.
struct Offline;

impl Policy for Offline {
    fn id(&self) -> &str {
        "offline"
    }

    fn generate(&self, _: &GenRequest) -> Result<GenResponse, BackendError> {
        Err(BackendError::Config("dry run: no backend".into()))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Builds the backend a config section describes. The OpenAI key is read
/// from `OPENAI_API_KEY` only.
pub fn build_backend(b: &BackendConfig, base_dir: &Path, seed: u64) -> Result<Arc<dyn Policy>, ExperimentError> {
    match b.backend {
        BackendKind::Scripted => {
            let path = resolve(base_dir, b.script.as_deref().expect("validated"));
            let script = Script::load(&path).map_err(|e| build_err(&format!("script {}", path.display()), e))?;
            let mut p = ScriptedPolicy::new(script).with_id(b.model.clone());
            if let Some(n) = b.context_limit {
                p = p.with_context_limit(n);
            }
            Ok(Arc::new(p))
        }
        BackendKind::Openai => {
            let mut cfg = OpenAiConfig::new(b.model.clone());
            cfg.timeout = Duration::from_secs(b.timeout_secs);
            cfg.max_retries = b.max_retries;
            cfg.context_limit = b.context_limit;
            cfg.seed = Some(seed);
            let limiter = Arc::new(RateLimiter::new(b.requests_per_minute));
            Ok(Arc::new(OpenAiPolicy::from_env(b.model.clone(), cfg, DEFAULT_API_KEY_ENV, limiter)?))
        }
        BackendKind::Oracle => Err(ExperimentError::Build("the oracle is not a generative backend".into())),
    }
}

fn keep<T>(items: Vec<T>, id: impl Fn(&T) -> &str, config: &RunConfig) -> Vec<T> {
    let mut items: Vec<T> = if config.problems.ids.is_empty() {
        items
    } else {
        items.into_iter().filter(|t| config.problems.ids.iter().any(|i| i == id(t))).collect()
    };
    if let Some(n) = config.problems.limit {
        items.truncate(n);
    }
    items
}

/// The tasks of a run, plus each problem's task text for exports.
pub fn build_tasks(
    config: &RunConfig,
    base_dir: &Path,
    judge: Option<Arc<dyn Policy>>,
) -> Result<Vec<Arc<dyn TaskRunner>>, ExperimentError> {
    let p = &config.problems;
    let tasks: Vec<Arc<dyn TaskRunner>> = match config.task {
        TaskKind::Game24 => {
            let problems = match &p.file {
                Some(f) => game24::load_problems(&resolve(base_dir, f)).map_err(|e| build_err("game24 problems", e))?,
                None => game24::builtin_problems(),
            };
            let step_judge: Arc<dyn StepJudge> = match (config.judge.backend, judge) {
                (BackendKind::Oracle, _) => Arc::new(OracleStepJudge),
                (_, Some(j)) => Arc::new(LlmStepJudge::new(j, config.judge.settings())),
                (_, None) => return Err(ExperimentError::Build("game24 needs a judge".into())),
            };
            keep(problems, |p| &p.problem_id, config)
                .into_iter()
                .map(|pr| Arc::new(Game24Task::new(pr, step_judge.clone())) as Arc<dyn TaskRunner>)
                .collect()
        }
        TaskKind::Writing => {
            let problems = match (&p.file, p.sample) {
                (Some(f), _) => writing::load_problems(&resolve(base_dir, f)).map_err(|e| build_err("writing problems", e))?,
                (None, Some(n)) => {
                    let pool = match &p.sentence_pool {
                        Some(f) => writing::parse_sentence_pool(&fs::read_to_string(resolve(base_dir, f))?),
                        None => writing::builtin_sentence_pool(),
                    };
                    writing::sample_problems(&pool, n, config.seed).map_err(|e| build_err("sentence pool", e))?
                }
                (None, None) => writing::builtin_problems(),
            };
            let base = match &p.base_answer {
                Some(f) => BaseAnswer::load(&resolve(base_dir, f)).map_err(|e| build_err("base answer", e))?,
                None => BaseAnswer::default(),
            };
            let judge = judge.ok_or_else(|| ExperimentError::Build("writing needs a judge".into()))?;
            keep(problems, |p| &p.problem_id, config)
                .into_iter()
                .map(|pr| {
                    WritingTask::new(pr, base.clone(), judge.clone(), config.judge.settings())
                        .map(|t| Arc::new(t) as Arc<dyn TaskRunner>)
                        .map_err(|e| build_err("writing task", e))
                })
                .collect::<Result<_, _>>()?
        }
        TaskKind::TextWorld => {
            let tw = &config.textworld;
            let mut factories: Vec<Arc<dyn EnvFactory>> = Vec::new();
            if !tw.command.is_empty() {
                let name = Path::new(&tw.command[0])
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "stdio".into());
                factories.push(Arc::new(StdioEnvFactory::new(name, tw.command.clone())));
            } else {
                for w in &tw.worlds {
                    let spec = textworld::builtin_world(w).map_err(|e| build_err("world", e))?;
                    factories.push(Arc::new(MiniLabFactory::new(spec)));
                }
                for f in &tw.world_files {
                    let spec = WorldSpec::load(&resolve(base_dir, f)).map_err(|e| build_err("world file", e))?;
                    factories.push(Arc::new(MiniLabFactory::new(spec)));
                }
            }
            let factories = keep(factories, |f| f.name(), config);
            factories
                .into_iter()
                .map(|f| {
                    TextWorldTask::new(f)
                        .map(|t| Arc::new(t.with_max_env_steps(tw.max_env_steps)) as Arc<dyn TaskRunner>)
                        .map_err(|e| build_err("environment", e))
                })
                .collect::<Result<_, _>>()?
        }
    };
    if tasks.is_empty() {
        return Err(ExperimentError::NoProblems);
    }
    Ok(tasks)
}

fn baseline_config(config: &RunConfig, parallel: bool) -> BaselineConfig {
    BaselineConfig {
        episodes: config.episodes,
        policy: config.policy.settings(),
        record_wall_time: config.record_wall_time,
        reflection_window: config.reflection_window,
        parallel_samples: parallel,
    }
}

/// All logs of one method on one problem.
pub fn run_method(config: &RunConfig, task: &dyn TaskRunner, policy: &dyn Policy) -> Result<Vec<EpisodeLog>, ExperimentError> {
    let bc = baseline_config(config, false);
    let mut logs = match config.method {
        Method::Icrl => run_problem(task, &config.loop_config(), policy)?,
        Method::Cot => vec![baselines::run_cot(task, policy, &bc, false)],
        Method::LongCot => vec![baselines::run_cot(task, policy, &bc, true)],
        Method::BestOfN => {
            let selector = if task.kind() == TaskKind::Game24 {
                Selector::GroundTruth
            } else {
                Selector::Reward
            };
            let result = baselines::run_best_of_n(task, policy, &bc, selector)?;
            match result.best {
                Some(i) => info!(problem = task.problem_id(), best = i, "best-of-n selection"),
                None => warn!(problem = task.problem_id(), "best-of-n: no valid candidate"),
            }
            result.logs
        }
        Method::SelfRefine => baselines::run_self_refine(task, policy, &bc)?,
        Method::Reflexion => baselines::run_reflexion(task, policy, &bc)?,
    };
    if let Some(label) = &config.label {
        for l in &mut logs {
            l.method = label.clone();
        }
    }
    Ok(logs)
}

/// Token and dollar projection for a run, made before any call. Every
/// response is assumed to use its full output budget, so this is an upper
/// estimate for ICRL's growing prompts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostProjection {
    pub problems: usize,
    pub policy_calls: u64,
    pub judge_calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Only calls to paid backends count.
    pub usd: f64,
}

pub fn project_cost(config: &RunConfig, tasks: &[Arc<dyn TaskRunner>]) -> CostProjection {
    let k = u64::from(config.episodes);
    let out = u64::from(config.policy.max_output_tokens);
    let judge_out = u64::from(config.judge.max_output_tokens);
    let mut p = CostProjection {
        problems: tasks.len(),
        ..CostProjection::default()
    };
    let (mut judge_in, mut judge_out_total) = (0u64, 0u64);
    for t in tasks {
        let task_tokens = estimate_tokens(t.task_text()) + t.system_text().map_or(0, estimate_tokens);
        // policy calls per episode and judge calls per policy response
        let (steps, judged) = match t.kind() {
            TaskKind::Game24 if config.judge.backend == BackendKind::Oracle => (1, 0),
            TaskKind::Game24 => (1, 4),
            TaskKind::Writing => (1, 1),
            TaskKind::TextWorld => (u64::from(config.textworld.max_env_steps).min(30), 0),
        };
        let cap = config.buffer_capacity.map_or(u64::MAX, |c| c as u64);
        let episodes: Vec<(u64, u64)> = match config.method {
            // (calls, prompt tokens per call)
            Method::Icrl => (0..k).map(|i| (steps, task_tokens + i.min(cap) * out * steps)).collect(),
            Method::Cot | Method::LongCot => vec![(steps, task_tokens)],
            Method::BestOfN => (0..k).map(|_| (steps, task_tokens)).collect(),
            Method::SelfRefine => (0..k)
                .map(|i| if i == 0 { (steps, task_tokens) } else { (2 * steps, task_tokens + 2 * i * out) })
                .collect(),
            Method::Reflexion => (0..k)
                .map(|i| {
                    let refl = i.min(config.reflection_window as u64) * out;
                    (if i + 1 < k { steps + 1 } else { steps }, task_tokens + refl + out)
                })
                .collect(),
        };
        for (calls, prompt) in episodes {
            p.policy_calls += calls;
            p.tokens_in += calls * prompt;
            p.tokens_out += calls * out;
            p.judge_calls += judged;
            judge_in += judged * (2 * out + 200);
            judge_out_total += judged * judge_out;
        }
    }
    let price = |b: &BackendConfig, tin: u64, tout: u64| {
        if b.backend == BackendKind::Openai {
            (tin as f64 * config.cost.usd_per_mtok_in + tout as f64 * config.cost.usd_per_mtok_out) / 1e6
        } else {
            0.0
        }
    };
    p.usd = price(&config.policy, p.tokens_in, p.tokens_out) + price(&config.judge, judge_in, judge_out_total);
    p.tokens_in += judge_in;
    p.tokens_out += judge_out_total;
    p
}

/// What `--dry-run` shows: the first prompt and the projected cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DryRun {
    pub method: String,
    pub problem_id: String,
    pub system_prompt: Option<String>,
    pub first_prompt: String,
    pub projection: CostProjection,
}

/// Builds tasks with an offline judge and renders the first prompt; no
/// backend is contacted.
pub fn dry_run(config: &RunConfig, base_dir: &Path) -> Result<DryRun, ExperimentError> {
    let offline: Arc<dyn Policy> = Arc::new(Offline);
    let tasks = build_tasks(config, base_dir, Some(offline))?;
    let first = &tasks[0];
    let first_prompt = match config.method {
        Method::LongCot => baselines::cot_prompt(first.as_ref(), true),
        // every other method opens with the bare task
        _ => first.task_text().to_string(),
    };
    Ok(DryRun {
        method: config.method_label(),
        problem_id: first.problem_id().to_string(),
        system_prompt: first.system_text().map(str::to_string),
        first_prompt,
        projection: project_cost(config, &tasks),
    })
}

/// A finished run.
pub struct RunOutput {
    pub logs: Vec<EpisodeLog>,
    pub instructions: HashMap<String, String>,
}

fn uses_paid_backend(config: &RunConfig) -> bool {
    config.policy.backend == BackendKind::Openai
        || (config.task != TaskKind::TextWorld && config.judge.backend == BackendKind::Openai)
}

/// Builds everything and runs every problem, `parallel` problems at a time.
/// Results keep problem order.
pub fn run(config: &RunConfig, base_dir: &Path, parallel: usize) -> Result<RunOutput, ExperimentError> {
    // the cap is checked before any client exists
    if let Some(cap) = config.cost.cap_usd {
        let projected = dry_run(config, base_dir)?.projection.usd;
        if uses_paid_backend(config) && projected > cap {
            return Err(ExperimentError::CostCap { projected, cap });
        }
    }
    let judge = match (config.task, config.judge.backend) {
        (TaskKind::TextWorld, _) | (_, BackendKind::Oracle) => None,
        _ => Some(build_backend(&config.judge, base_dir, config.seed)?),
    };
    let tasks = build_tasks(config, base_dir, judge)?;
    let policy = build_backend(&config.policy, base_dir, config.seed)?;
    info!(method = %config.method_label(), task = %config.task, problems = tasks.len(), "starting run");
    let one = |t: &Arc<dyn TaskRunner>| run_method(config, t.as_ref(), policy.as_ref());
    let per_problem: Vec<Result<Vec<EpisodeLog>, ExperimentError>> = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| build_err("thread pool", e))?;
        pool.install(|| tasks.par_iter().map(one).collect())
    } else {
        tasks.iter().map(one).collect()
    };
    let mut logs = Vec::new();
    for r in per_problem {
        logs.extend(r?);
    }
    let instructions = tasks
        .iter()
        .map(|t| (t.problem_id().to_string(), t.task_text().to_string()))
        .collect();
    Ok(RunOutput { logs, instructions })
}

/// Writes the run directory: config.toml (one per config), logs.jsonl,
/// summary.csv, costs.csv, curves.svg and, for writing, alpaca.json.
pub fn write_outputs(dir: &Path, configs: &[RunConfig], output: &RunOutput) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    for (i, c) in configs.iter().enumerate() {
        let name = if configs.len() == 1 {
            "config.toml".to_string()
        } else {
            format!("config.{}.toml", c.method_label())
        };
        let name = if i > 0 && name == "config.toml" { format!("config.{i}.toml") } else { name };
        fs::write(dir.join(name), c.to_toml())?;
    }
    metrics::write_jsonl(&output.logs, fs::File::create(dir.join("logs.jsonl"))?)?;
    let rows = metrics::summarize(&output.logs)?;
    metrics::write_summary_csv(&rows, fs::File::create(dir.join("summary.csv"))?)?;
    metrics::write_costs_csv(&metrics::cost_ledger(&output.logs), fs::File::create(dir.join("costs.csv"))?)?;
    let task = configs.first().map_or("", |c| c.task.name());
    let svg = metrics::render_svg(&metrics::curve_series(&rows), task, "episode", "metric")?;
    fs::write(dir.join("curves.svg"), svg)?;
    if configs.iter().any(|c| c.task == TaskKind::Writing) {
        let records = alpaca_export(&output.logs, &output.instructions);
        let json = serde_json::to_string_pretty(&records).map_err(|e| build_err("alpaca export", e))?;
        fs::write(dir.join("alpaca.json"), json + "\n")?;
    }
    Ok(())
}

/// Runs several configs (an ablation sweep) and merges their logs.
pub fn run_all(configs: &[RunConfig], base_dir: &Path, parallel: usize) -> Result<RunOutput, ExperimentError> {
    let mut merged = RunOutput {
        logs: Vec::new(),
        instructions: HashMap::new(),
    };
    for c in configs {
        let out = run(c, base_dir, parallel)?;
        merged.logs.extend(out.logs);
        merged.instructions.extend(out.instructions);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_toml(text).unwrap()
    }

    #[test]
    fn builds_shipped_problem_sets() {
        let dir = Path::new(".");
        let j: Arc<dyn Policy> = Arc::new(Offline);
        let g = build_tasks(&cfg("task = \"game24\"\n[judge]\nbackend = \"oracle\""), dir, None).unwrap();
        assert_eq!(g.len(), 20);
        let w = build_tasks(&cfg("task = \"writing\"\n[problems]\nlimit = 2"), dir, Some(j.clone())).unwrap();
        assert_eq!(w.len(), 2);
        let s = build_tasks(&cfg("task = \"writing\"\nseed = 4\n[problems]\nsample = 3"), dir, Some(j)).unwrap();
        assert_eq!(s[2].problem_id(), "writing-s003");
        let t = build_tasks(&cfg("task = \"textworld\"\n[problems]\nids = [\"boil-water\"]"), dir, None).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].system_text(), Some(textworld::system_text()));
        let none = build_tasks(&cfg("task = \"textworld\"\n[problems]\nids = [\"mars\"]"), dir, None);
        assert!(matches!(none, Err(ExperimentError::NoProblems)));
    }

    #[test]
    fn dry_run_never_builds_a_client() {
        // the default policy backend is openai; no key is needed to dry-run
        let d = dry_run(&cfg("task = \"game24\"\nepisodes = 3\n[judge]\nbackend = \"oracle\""), Path::new(".")).unwrap();
        assert!(d.first_prompt.starts_with(&game24::builtin_problems()[0].render_task()));
        assert_eq!(d.projection.problems, 20);
        assert_eq!(d.projection.policy_calls, 60);
        assert_eq!(d.projection.judge_calls, 0);
        assert!(d.projection.usd > 0.0);
        let long = dry_run(&cfg("task = \"game24\"\nmethod = \"long_cot\"\n[judge]\nbackend = \"oracle\""), Path::new(".")).unwrap();
        assert!(long.first_prompt.ends_with(baselines::long_cot_instruction().trim_end()));
    }

    #[test]
    fn projection_grows_with_context() {
        let icrl = cfg("task = \"game24\"\nepisodes = 10\n[judge]\nbackend = \"oracle\"");
        let short = cfg("task = \"game24\"\nepisodes = 10\nbuffer_capacity = 3\n[judge]\nbackend = \"oracle\"");
        let tasks = build_tasks(&icrl, Path::new("."), None).unwrap();
        assert!(project_cost(&icrl, &tasks).tokens_in > project_cost(&short, &tasks).tokens_in);
        let mut scripted = icrl.clone();
        scripted.policy.backend = BackendKind::Scripted;
        assert_eq!(project_cost(&scripted, &tasks).usd, 0.0);
    }

    #[test]
    fn cost_cap_aborts_before_any_call() {
        let c = cfg("task = \"game24\"\nepisodes = 50\n[judge]\nbackend = \"oracle\"\n[cost]\ncap_usd = 0.01");
        assert!(matches!(run(&c, Path::new("."), 1), Err(ExperimentError::CostCap { .. })));
    }
}
