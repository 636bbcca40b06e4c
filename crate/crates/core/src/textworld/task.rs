use std::sync::Arc;

use super::env::EnvFactory;
use super::world::{transcript, FAIL_STEPS_LINE, SUCCESS_LINE};
use super::{system_text, WorldError};
use crate::icrl::buffer::{PositionedReward, TERMINAL_LABEL};
use crate::policy::{BackendError, CallTag, Policy};
use crate::task::{GroundTruth, PlayContext, Played, TaskKind, TaskRunner, Usage};

/// Harness-side cap on actions per episode, for environments that never
/// terminate on their own.
pub const DEFAULT_MAX_ENV_STEPS: u32 = 100;

/// One environment played as an ICRL task: the policy is prompted once per
/// action, seeing the buffer plus the current attempt so far.
pub struct TextWorldTask {
    problem_id: String,
    factory: Arc<dyn EnvFactory>,
    task_text: String,
    max_env_steps: u32,
}

impl TextWorldTask {
    pub fn new(factory: Arc<dyn EnvFactory>) -> Result<Self, WorldError> {
        let desc = factory.describe()?;
        Ok(Self {
            problem_id: factory.name().to_string(),
            factory,
            task_text: desc.task_text,
            max_env_steps: DEFAULT_MAX_ENV_STEPS,
        })
    }

    pub fn with_max_env_steps(mut self, n: u32) -> Self {
        self.max_env_steps = n.max(1);
        self
    }
}

/// The first non-empty line of a reply, without list markers, `Action:`
/// style prefixes, backticks or quotes.
pub fn extract_action(reply: &str) -> String {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let mut s = line.trim_start_matches(['-', '*', '>', ' ']);
    for prefix in ["next action:", "action:"] {
        if s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
            s = &s[prefix.len()..];
        }
    }
    s.trim().trim_matches(['`', '"', '\'']).trim().to_string()
}

fn status_label(message: &str) -> &'static str {
    if message.starts_with(SUCCESS_LINE) {
        "success"
    } else if message.starts_with(FAIL_STEPS_LINE) {
        "fail_steps"
    } else if message.to_lowercase().contains("focus") {
        "fail_focus"
    } else {
        "ended"
    }
}

fn env_err(e: WorldError) -> BackendError {
    BackendError::Protocol(format!("environment: {e}"))
}

impl TaskRunner for TextWorldTask {
    fn kind(&self) -> TaskKind {
        TaskKind::TextWorld
    }

    fn problem_id(&self) -> &str {
        &self.problem_id
    }

    fn task_text(&self) -> &str {
        &self.task_text
    }

    fn system_text(&self) -> Option<&str> {
        Some(system_text())
    }

    fn play(&self, prompt: &str, policy: &dyn Policy, ctx: PlayContext<'_>) -> Result<Played, BackendError> {
        let mut env = self.factory.create().map_err(env_err)?;
        let mut chain: Vec<String> = Vec::new();
        let mut rewards = Vec::new();
        let mut usage = Usage::default();
        let mut diagnostics = Vec::new();
        let mut total = 0.0;
        let mut message = None;

        for i in 0..self.max_env_steps {
            let mut step_prompt = format!("{prompt}\n\nCurrent attempt {}:", ctx.episode);
            for (j, line) in chain.iter().enumerate() {
                step_prompt.push_str(if j == 0 { "\n" } else { "\n-> " });
                step_prompt.push_str(line);
            }
            step_prompt.push_str("\n\nRespond with the next action only.");
            let tag = CallTag::new(self.problem_id.clone(), ctx.episode, ctx.role);
            let req = ctx.settings.request(policy.id(), Some(system_text().to_string()), step_prompt, tag);
            let resp = policy.generate(&req)?;
            usage.add(Usage {
                tokens_in: resp.tokens_in,
                tokens_out: resp.tokens_out,
                policy_calls: 1,
                judge_calls: 0,
            });

            let action = extract_action(&resp.text);
            let step = env.step(&action).map_err(env_err)?;
            let line = transcript(&action, &step.observation, step.valid);
            rewards.push(PositionedReward::new(format!("step{}", i + 1), step.reward, line.clone()));
            chain.push(line);
            total = step.total;
            if step.done {
                message = Some(step.message.unwrap_or_else(|| "Episode ended.".to_string()));
                break;
            }
        }

        let (terminal, label) = match message {
            Some(m) => {
                let label = status_label(&m);
                (m, label)
            }
            None => {
                diagnostics.push(format!("stopped by the harness after {} actions", self.max_env_steps));
                (format!("Episode stopped after {} actions.", self.max_env_steps), "step_cap")
            }
        };
        rewards.push(PositionedReward::new(TERMINAL_LABEL, 0.0, terminal));

        Ok(Played {
            response_text: chain.join("\n"),
            rewards,
            header: None,
            outcome: Some(label.to_string()),
            ground_truth: Some(GroundTruth {
                value: total,
                label: label.to_string(),
            }),
            usage,
            diagnostics,
        })
    }

    fn metric(&self, played: &Played) -> f64 {
        played.ground_truth.as_ref().map_or(0.0, |g| g.value)
    }
}
