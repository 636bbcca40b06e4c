//! Comparison methods run through the same tasks, policies and logs as the
//! ICRL loop: CoT, Long-CoT, Best-of-N, Self-Refine and Reflexion.

mod reflexion;
mod self_refine;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icrl::runner::elapsed_ms;
use crate::icrl::{EpisodeLog, InstructionKind, PromptBundle};
use crate::policy::{CallRole, GenSettings, Policy};
use crate::task::{PlayContext, TaskRunner};

pub use reflexion::{run_reflexion, sanitize_reflection, ReflectionBuffer, MAX_REFLECTION_CHARS};
pub use self_refine::run_self_refine;

const LONG_COT: &str = include_str!("../../templates/long_cot.txt");

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
}

/// Settings shared by every baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// Episodes (Self-Refine, Reflexion) or samples (Best-of-N).
    pub episodes: u32,
    pub policy: GenSettings,
    pub record_wall_time: bool,
    /// Reflections shown to Reflexion attempts.
    pub reflection_window: usize,
    /// Run Best-of-N samples on the rayon pool.
    pub parallel_samples: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            episodes: 1,
            policy: GenSettings::policy(),
            record_wall_time: false,
            reflection_window: 3,
            parallel_samples: false,
        }
    }
}

/// The Long-CoT instruction appended to the task text.
pub fn long_cot_instruction() -> &'static str {
    LONG_COT.trim_end()
}

pub fn cot_prompt(task: &dyn TaskRunner, long_variant: bool) -> String {
    if long_variant {
        format!("{}\n\n{}", task.task_text(), long_cot_instruction())
    } else {
        task.task_text().to_string()
    }
}

/// Plays one episode from `prompt` and logs it; backend errors give a
/// failed record.
pub(crate) fn play_logged(
    task: &dyn TaskRunner,
    policy: &dyn Policy,
    settings: &GenSettings,
    method: &str,
    episode: u32,
    prompt: &str,
    record_wall_time: bool,
) -> EpisodeLog {
    let start = Instant::now();
    let mut bundle = PromptBundle::plain(prompt);
    bundle.system_text = task.system_text().map(str::to_string);
    let ctx = PlayContext {
        episode,
        settings,
        role: CallRole::Policy,
    };
    let outcome = task.play(prompt, policy, ctx);
    let wall = elapsed_ms(start, record_wall_time);
    match outcome {
        Ok(played) => EpisodeLog::from_played(task, method, episode, InstructionKind::None, &bundle, &played, wall),
        Err(e) => EpisodeLog::failed(task, method, episode, InstructionKind::None, &bundle, &e, wall),
    }
}

/// Single pass on the bare task text (or with the Long-CoT instruction).
pub fn run_cot(task: &dyn TaskRunner, policy: &dyn Policy, config: &BaselineConfig, long_variant: bool) -> EpisodeLog {
    let method = if long_variant { "long_cot" } else { "cot" };
    play_logged(task, policy, &config.policy, method, 1, &cot_prompt(task, long_variant), config.record_wall_time)
}

/// What Best-of-N ranks candidates by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// The ground-truth evaluation r* (game24).
    GroundTruth,
    /// The observable reward r (writing, textworld).
    Reward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestOfN {
    /// One record per sample, episode = sample index.
    pub logs: Vec<EpisodeLog>,
    pub scores: Vec<Option<f64>>,
    /// 1-based index of the selected sample; `None` when no sample was usable.
    pub best: Option<usize>,
}

impl BestOfN {
    pub fn no_valid_candidate(&self) -> bool {
        self.best.is_none()
    }

    pub fn best_log(&self) -> Option<&EpisodeLog> {
        self.best.map(|i| &self.logs[i - 1])
    }
}

/// Score of one sample, or `None` when it cannot compete: the backend
/// failed, or the ground truth could not be parsed.
pub fn candidate_score(log: &EpisodeLog, selector: Selector) -> Option<f64> {
    if log.failed {
        return None;
    }
    match selector {
        Selector::Reward => Some(log.total_reward),
        Selector::GroundTruth => log
            .ground_truth
            .as_ref()
            .filter(|g| !g.label.starts_with("unparsable"))
            .map(|g| g.value),
    }
}

/// 1-based argmax, earliest index on ties; `None` if nothing scored.
pub fn select_best(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = *s {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i + 1, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// `config.episodes` independent single-pass samples of the bare task.
pub fn run_best_of_n(
    task: &dyn TaskRunner,
    policy: &dyn Policy,
    config: &BaselineConfig,
    selector: Selector,
) -> Result<BestOfN, BaselineError> {
    if config.episodes == 0 {
        return Err(BaselineError::ZeroCount("N"));
    }
    let prompt = cot_prompt(task, false);
    let sample = |i: u32| play_logged(task, policy, &config.policy, "best_of_n", i, &prompt, config.record_wall_time);
    let logs: Vec<EpisodeLog> = if config.parallel_samples {
        (1..=config.episodes).into_par_iter().map(sample).collect()
    } else {
        (1..=config.episodes).map(sample).collect()
    };
    let scores: Vec<Option<f64>> = logs.iter().map(|l| candidate_score(l, selector)).collect();
    let best = select_best(&scores);
    Ok(BestOfN { logs, scores, best })
}
