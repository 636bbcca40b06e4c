use std::time::Instant;

use super::{play_logged, BaselineConfig, BaselineError};
use crate::icrl::runner::{elapsed_ms, fits};
use crate::icrl::{EpisodeLog, InstructionKind, PromptBundle};
use crate::policy::{BackendError, CallRole, CallTag, Policy};
use crate::task::TaskRunner;

const FEEDBACK: &str = include_str!("../../templates/self_refine_feedback.txt");
const REFINE: &str = include_str!("../../templates/self_refine_refine.txt");

struct Round {
    response: String,
    feedback: Option<String>,
}

fn render_history(task_text: &str, rounds: &[Round]) -> String {
    let mut out = task_text.to_string();
    for r in rounds {
        out.push_str(&format!("\n\n<response>\n{}\n</response>", r.response.trim_end()));
        if let Some(f) = &r.feedback {
            out.push_str(&format!("\n\n<feedback>\n{}\n</feedback>", f.trim_end()));
        }
    }
    out
}

fn with_instruction(task: &dyn TaskRunner, rounds: &[Round], instruction: &str) -> PromptBundle {
    let mut b = PromptBundle::plain(format!("{}\n\n{}", render_history(task.task_text(), rounds), instruction.trim_end()));
    b.system_text = task.system_text().map(str::to_string);
    b
}

/// Generate, then alternate feedback and refinement. Every response and
/// feedback stays in context (oldest rounds are dropped only when the
/// backend's window is exceeded); no reward is ever shown.
pub fn run_self_refine(task: &dyn TaskRunner, policy: &dyn Policy, config: &BaselineConfig) -> Result<Vec<EpisodeLog>, BaselineError> {
    if config.episodes == 0 {
        return Err(BaselineError::ZeroCount("episodes"));
    }
    const METHOD: &str = "self_refine";
    let mut logs = Vec::with_capacity(config.episodes as usize);
    let first = play_logged(task, policy, &config.policy, METHOD, 1, task.task_text(), config.record_wall_time);
    let mut rounds = Vec::new();
    if !first.failed {
        rounds.push(Round {
            response: first.response.clone(),
            feedback: None,
        });
    }
    logs.push(first);

    for k in 2..=config.episodes {
        let start = Instant::now();
        if rounds.is_empty() {
            // nothing to refine yet
            logs.push(play_logged(task, policy, &config.policy, METHOD, k, task.task_text(), config.record_wall_time));
            if let Some(l) = logs.last().filter(|l| !l.failed) {
                rounds.push(Round {
                    response: l.response.clone(),
                    feedback: None,
                });
            }
            continue;
        }

        let mut dropped = 0usize;
        let feedback = loop {
            let bundle = with_instruction(task, &rounds, FEEDBACK);
            if !fits(&bundle, policy, &config.policy) && rounds.len() > 1 {
                rounds.remove(0);
                dropped += 1;
                continue;
            }
            let tag = CallTag::new(task.problem_id(), k, CallRole::Feedback);
            let req = config.policy.request(policy.id(), bundle.system_text.clone(), bundle.user_text.clone(), tag);
            match policy.generate(&req) {
                Err(BackendError::ContextOverflow(_)) if rounds.len() > 1 => {
                    rounds.remove(0);
                    dropped += 1;
                }
                other => break other.map_err(|e| (bundle, e)),
            }
        };
        let feedback = match feedback {
            Ok(f) => f,
            Err((bundle, e)) => {
                let wall = elapsed_ms(start, config.record_wall_time);
                let mut log = EpisodeLog::failed(task, METHOD, k, InstructionKind::None, &bundle, &e, wall);
                log.evicted = dropped;
                logs.push(log);
                continue;
            }
        };
        rounds.last_mut().expect("non-empty").feedback = Some(feedback.text.clone());

        let mut log = loop {
            let bundle = with_instruction(task, &rounds, REFINE);
            if !fits(&bundle, policy, &config.policy) && rounds.len() > 1 {
                rounds.remove(0);
                dropped += 1;
                continue;
            }
            let log = play_logged(task, policy, &config.policy, METHOD, k, &bundle.user_text, config.record_wall_time);
            let overflow = log.error.as_deref().is_some_and(|e| e.starts_with("prompt exceeds the backend context"));
            if overflow && rounds.len() > 1 {
                rounds.remove(0);
                dropped += 1;
                continue;
            }
            break log;
        };
        log.tokens_in += feedback.tokens_in;
        log.tokens_out += feedback.tokens_out;
        log.policy_calls += 1;
        log.wall_ms = elapsed_ms(start, config.record_wall_time);
        if dropped > 0 {
            log.diagnostics.push(format!("dropped {dropped} oldest round(s) to fit the context window"));
        }
        log.evicted = dropped;
        if !log.failed {
            rounds.push(Round {
                response: log.response.clone(),
                feedback: None,
            });
        }
        logs.push(log);
    }
    Ok(logs)
}
