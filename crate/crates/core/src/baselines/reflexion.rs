use super::{play_logged, BaselineConfig, BaselineError};
use crate::icrl::EpisodeLog;
use crate::policy::{CallRole, CallTag, Policy};
use crate::task::TaskRunner;

const REFLECT: &str = include_str!("../../templates/reflexion_reflect.txt");
const HEADER: &str = include_str!("../../templates/reflexion_header.txt");

pub const MAX_REFLECTION_CHARS: usize = 1500;

/// Strips reflection tags, trims trailing whitespace, collapses blank-line
/// runs and caps the length.
pub fn sanitize_reflection(text: &str) -> String {
    let untagged = text.replace("<reflection>", "").replace("</reflection>", "");
    let mut lines: Vec<&str> = Vec::new();
    for line in untagged.lines().map(str::trim_end) {
        if line.is_empty() && lines.last().is_none_or(|l| l.is_empty()) {
            continue;
        }
        lines.push(line);
    }
    let joined = lines.join("\n");
    let trimmed = joined.trim();
    match trimmed.char_indices().nth(MAX_REFLECTION_CHARS) {
        Some((i, _)) => trimmed[..i].trim_end().to_string(),
        None => trimmed.to_string(),
    }
}

/// All reflections so far; prompts see only the newest `window`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectionBuffer {
    entries: Vec<String>,
    window: usize,
}

impl ReflectionBuffer {
    pub fn new(window: usize) -> Result<Self, BaselineError> {
        if window == 0 {
            return Err(BaselineError::ZeroCount("reflection window"));
        }
        Ok(Self {
            entries: Vec::new(),
            window,
        })
    }

    /// Adds a sanitized reflection; returns false if nothing was left.
    pub fn push(&mut self, text: &str) -> bool {
        let clean = sanitize_reflection(text);
        if clean.is_empty() {
            return false;
        }
        self.entries.push(clean);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn recent(&self) -> &[String] {
        &self.entries[self.entries.len().saturating_sub(self.window)..]
    }

    /// The attempt prompt: recent reflections, then the task.
    pub fn attempt_prompt(&self, task_text: &str) -> String {
        if self.entries.is_empty() {
            return task_text.to_string();
        }
        let blocks = self
            .recent()
            .iter()
            .map(|r| format!("<reflection>\n{r}\n</reflection>"))
            .collect::<Vec<_>>()
            .join("\n\n");
        format!("{}\n\n{blocks}\n\n{task_text}", HEADER.trim_end())
    }
}

pub fn render_reflect_prompt(task_text: &str, response: &str, score: f64) -> String {
    REFLECT
        .trim_end()
        .replace("{task}", task_text)
        .replace("{response}", response.trim_end())
        .replace("{score}", &format!("{score:.2}"))
}

/// Attempt, score with the task's observable reward, reflect. Attempt
/// prompts carry only the task and the recent reflections: never a reward
/// and never an earlier response. No reflection follows the final episode.
pub fn run_reflexion(task: &dyn TaskRunner, policy: &dyn Policy, config: &BaselineConfig) -> Result<Vec<EpisodeLog>, BaselineError> {
    if config.episodes == 0 {
        return Err(BaselineError::ZeroCount("episodes"));
    }
    let mut buffer = ReflectionBuffer::new(config.reflection_window)?;
    let mut logs = Vec::with_capacity(config.episodes as usize);
    for k in 1..=config.episodes {
        let prompt = buffer.attempt_prompt(task.task_text());
        let mut log = play_logged(task, policy, &config.policy, "reflexion", k, &prompt, config.record_wall_time);
        if !log.failed && k < config.episodes {
            let tag = CallTag::new(task.problem_id(), k, CallRole::Reflect);
            let text = render_reflect_prompt(task.task_text(), &log.response, log.total_reward);
            let req = config.policy.request(policy.id(), task.system_text().map(str::to_string), text, tag);
            match policy.generate(&req) {
                Ok(resp) => {
                    log.tokens_in += resp.tokens_in;
                    log.tokens_out += resp.tokens_out;
                    log.policy_calls += 1;
                    if !buffer.push(&resp.text) {
                        log.diagnostics.push("empty reflection discarded".into());
                    }
                }
                Err(e) => log.diagnostics.push(format!("reflection failed: {e}")),
            }
        }
        logs.push(log);
    }
    Ok(logs)
}
