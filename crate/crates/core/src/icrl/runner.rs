use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::buffer::{AttemptRecord, ExperienceBuffer, PositionedReward};
use super::instruction::{select_instruction, InstructionKind, Schedule};
use super::prompt::{assemble_prompt, PromptBundle, PromptLayout};
use super::IcrlError;
use crate::policy::{estimate_tokens, BackendError, CallRole, GenSettings, Policy};
use crate::task::{GroundTruth, PlayContext, Played, TaskKind, TaskRunner, Usage};

/// Settings for one run of the episode loop on one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub episodes: u32,
    pub schedule: Schedule,
    pub buffer_capacity: Option<usize>,
    pub zero_rewards: bool,
    /// `None` uses the task's default order.
    pub layout: Option<PromptLayout>,
    pub policy: GenSettings,
    /// Method name written into every log record.
    pub method: String,
    /// When false, `wall_ms` is 0 so scripted runs are byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            episodes: 1,
            schedule: Schedule::Preset,
            buffer_capacity: None,
            zero_rewards: false,
            layout: None,
            policy: GenSettings::policy(),
            method: "icrl_preset".into(),
            record_wall_time: false,
        }
    }
}

/// One line of the run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub problem_id: String,
    pub episode: u32,
    pub instruction_kind: InstructionKind,
    pub prompt_chars: usize,
    pub response: String,
    pub rewards: Vec<PositionedReward>,
    pub total_reward: f64,
    pub ground_truth: Option<GroundTruth>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub wall_ms: u64,
    pub method: String,
    pub task: TaskKind,
    /// The value tracked by the experiment curves.
    pub metric: f64,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub policy_calls: u32,
    pub judge_calls: u32,
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    /// Attempts dropped from the buffer to fit the context window.
    #[serde(default)]
    pub evicted: usize,
}

impl EpisodeLog {
    /// Builds a record from a played episode.
    pub fn from_played(
        task: &dyn TaskRunner,
        method: &str,
        episode: u32,
        instruction_kind: InstructionKind,
        prompt: &PromptBundle,
        played: &Played,
        wall_ms: u64,
    ) -> Self {
        Self {
            problem_id: task.problem_id().to_string(),
            episode,
            instruction_kind,
            prompt_chars: prompt.user_text.chars().count(),
            response: played.response_text.clone(),
            rewards: played.rewards.clone(),
            total_reward: played.rewards.iter().map(|r| r.value).sum(),
            ground_truth: played.ground_truth.clone(),
            tokens_in: played.usage.tokens_in,
            tokens_out: played.usage.tokens_out,
            wall_ms,
            method: method.to_string(),
            task: task.kind(),
            metric: task.metric(played),
            prompt: prompt.user_text.clone(),
            system_prompt: prompt.system_text.clone(),
            policy_calls: played.usage.policy_calls,
            judge_calls: played.usage.judge_calls,
            failed: false,
            error: None,
            diagnostics: played.diagnostics.clone(),
            evicted: 0,
        }
    }

    /// Record for an episode whose backend gave up.
    pub fn failed(
        task: &dyn TaskRunner,
        method: &str,
        episode: u32,
        instruction_kind: InstructionKind,
        prompt: &PromptBundle,
        error: &BackendError,
        wall_ms: u64,
    ) -> Self {
        let mut log = Self::from_played(task, method, episode, instruction_kind, prompt, &Played::default(), wall_ms);
        log.metric = 0.0;
        log.failed = true;
        log.error = Some(error.to_string());
        log
    }

    pub fn usage(&self) -> Usage {
        Usage {
            tokens_in: self.tokens_in,
            tokens_out: self.tokens_out,
            policy_calls: self.policy_calls,
            judge_calls: self.judge_calls,
        }
    }
}

pub(crate) fn elapsed_ms(start: Instant, enabled: bool) -> u64 {
    if enabled {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

pub(crate) fn fits(bundle: &PromptBundle, policy: &dyn Policy, settings: &GenSettings) -> bool {
    match policy.context_limit() {
        None => true,
        Some(limit) => {
            let system = bundle.system_text.as_deref().map_or(0, estimate_tokens);
            let need = estimate_tokens(&bundle.user_text) + system + settings.max_output_tokens as u64;
            need <= limit as u64
        }
    }
}

/// Runs `config.episodes` episodes of the loop on one problem. Backend
/// failures mark their episode as failed and the loop moves on; only
/// structural errors abort.
pub fn run_problem(task: &dyn TaskRunner, config: &LoopConfig, policy: &dyn Policy) -> Result<Vec<EpisodeLog>, IcrlError> {
    if config.episodes == 0 {
        return Err(IcrlError::NoEpisodes);
    }
    let kind = task.kind();
    let layout = config
        .layout
        .clone()
        .unwrap_or_else(|| PromptLayout::default_for(kind));
    let mut buffer = ExperienceBuffer::with_capacity(config.buffer_capacity)?;
    let mut logs = Vec::with_capacity(config.episodes as usize);

    for k in 1..=config.episodes {
        let start = Instant::now();
        let mut evicted = 0usize;
        let (instruction, bundle, outcome) = loop {
            let instruction = select_instruction(config.schedule, k, buffer.len());
            let mut bundle = assemble_prompt(&buffer, task.task_text(), instruction, &layout, config.zero_rewards, kind)?;
            bundle.system_text = task.system_text().map(str::to_string);
            if !fits(&bundle, policy, &config.policy) && !buffer.is_empty() {
                buffer.evict_oldest();
                evicted += 1;
                continue;
            }
            let ctx = PlayContext {
                episode: k,
                settings: &config.policy,
                role: CallRole::Policy,
            };
            match task.play(&bundle.user_text, policy, ctx) {
                Err(BackendError::ContextOverflow(msg)) if !buffer.is_empty() => {
                    warn!(problem = task.problem_id(), episode = k, "context overflow, evicting oldest attempt: {msg}");
                    buffer.evict_oldest();
                    evicted += 1;
                }
                other => break (instruction, bundle, other),
            }
        };
        let wall_ms = elapsed_ms(start, config.record_wall_time);

        let mut log = match outcome {
            Ok(played) => {
                let mut record = AttemptRecord::new(k, played.response_text.clone(), played.rewards.clone());
                record.header = played.header.clone();
                record.outcome_note = played.outcome.clone();
                record.validate(kind)?;
                buffer.push(record)?;
                EpisodeLog::from_played(task, &config.method, k, instruction, &bundle, &played, wall_ms)
            }
            Err(e) => {
                warn!(problem = task.problem_id(), episode = k, "episode failed: {e}");
                EpisodeLog::failed(task, &config.method, k, instruction, &bundle, &e, wall_ms)
            }
        };
        if evicted > 0 {
            log.diagnostics.push(format!("evicted {evicted} attempt(s) to fit the context window"));
        }
        log.evicted = evicted;
        info!(
            problem = task.problem_id(),
            episode = k,
            instruction = %instruction,
            total_reward = log.total_reward,
            metric = log.metric,
            "episode done"
        );
        logs.push(log);
    }
    Ok(logs)
}
