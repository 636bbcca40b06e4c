use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::expr::{parse_expr, parse_rational, Rational};
use super::judge::{format_remaining, StepJudge};
use super::solution::{check_response, extract_segments, Verdict};
use super::Game24Problem;
use crate::icrl::buffer::PositionedReward;
use crate::policy::{BackendError, CallRole, CallTag, Policy};
use crate::task::{GroundTruth, PlayContext, Played, TaskKind, TaskRunner, Usage};

/// A Game-of-24 problem with its step judge. Each episode is one policy
/// call; each of the four positions (Step1-3, Answer) gets a judge score.
pub struct Game24Task {
    problem: Game24Problem,
    task_text: String,
    judge: Arc<dyn StepJudge>,
}

impl Game24Task {
    pub fn new(problem: Game24Problem, judge: Arc<dyn StepJudge>) -> Self {
        let task_text = problem.render_task();
        Self {
            problem,
            task_text,
            judge,
        }
    }

    pub fn problem(&self) -> &Game24Problem {
        &self.problem
    }

    /// r*: 1 for a verified solution, 0 otherwise.
    pub fn ground_truth(&self, response: &str) -> GroundTruth {
        match check_response(response, &self.problem.inputs) {
            Ok(v) => GroundTruth {
                value: if v == Verdict::Valid24 { 1.0 } else { 0.0 },
                label: v.to_string(),
            },
            Err(e) => GroundTruth {
                value: 0.0,
                label: format!("unparsable: {e}"),
            },
        }
    }

    /// Step judge scores for the four positions of `response`.
    pub fn judge_response(&self, response: &str, episode: u32) -> Result<(Vec<PositionedReward>, Usage, Vec<String>), BackendError> {
        let mut rewards = Vec::with_capacity(4);
        let mut usage = Usage::default();
        let mut diagnostics = Vec::new();
        for (label, text) in extract_segments(response).positions() {
            let Some(text) = text else {
                diagnostics.push(format!("{label}: missing"));
                rewards.push(PositionedReward::new(label, 0.0, ""));
                continue;
            };
            let value = match remaining_after(&text) {
                None => {
                    diagnostics.push(format!("{label}: no remaining numbers to judge"));
                    0.0
                }
                Some(remaining) => {
                    let tag = CallTag::new(self.problem.problem_id.clone(), episode, CallRole::Judge);
                    let judged = self.judge.score(&text, &remaining, tag)?;
                    usage.add(judged.usage);
                    match judged.score {
                        Ok(s) => f64::from(s),
                        Err(e) => {
                            diagnostics.push(format!(
                                "{label} (left: {}): judge output unusable: {e}",
                                format_remaining(&remaining)
                            ));
                            0.0
                        }
                    }
                }
            };
            rewards.push(PositionedReward::new(label, value, text));
        }
        Ok((rewards, usage, diagnostics))
    }
}

fn left_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\(\s*left\s*:?\s*([^)]*)\)").unwrap())
}

/// The numbers a position leaves: the `(left: ...)` list of a step, or the
/// value of an answer line (stated after `=`, else computed).
fn remaining_after(text: &str) -> Option<Vec<Rational>> {
    if let Some(c) = left_re().captures(text) {
        let values = c[1]
            .split(|ch: char| ch.is_whitespace() || ch == ',')
            .filter(|t| !t.is_empty())
            .map(parse_rational)
            .collect::<Result<Vec<_>, _>>()
            .ok()?;
        return (!values.is_empty()).then_some(values);
    }
    let body = text.trim_start_matches("**Answer**:").trim();
    let (expr, stated) = match body.rsplit_once('=') {
        Some((e, v)) => (e, Some(v.trim().trim_end_matches('.'))),
        None => (body, None),
    };
    if let Some(v) = stated.and_then(|v| parse_rational(v).ok()) {
        return Some(vec![v]);
    }
    parse_expr(expr.trim()).ok()?.eval().ok().map(|v| vec![v])
}

impl TaskRunner for Game24Task {
    fn kind(&self) -> TaskKind {
        TaskKind::Game24
    }

    fn problem_id(&self) -> &str {
        &self.problem.problem_id
    }

    fn task_text(&self) -> &str {
        &self.task_text
    }

    fn play(&self, prompt: &str, policy: &dyn Policy, ctx: PlayContext<'_>) -> Result<Played, BackendError> {
        let req = ctx.settings.request(
            policy.id(),
            None,
            prompt.to_string(),
            CallTag::new(self.problem.problem_id.clone(), ctx.episode, ctx.role),
        );
        let resp = policy.generate(&req)?;
        let (rewards, judge_usage, diagnostics) = self.judge_response(&resp.text, ctx.episode)?;
        let mut usage = Usage {
            tokens_in: resp.tokens_in,
            tokens_out: resp.tokens_out,
            policy_calls: 1,
            judge_calls: 0,
        };
        usage.add(judge_usage);
        let ground_truth = self.ground_truth(&resp.text);
        Ok(Played {
            response_text: resp.text,
            rewards,
            header: Some(format!("**Input:** {}.", self.problem.input_text())),
            outcome: Some(ground_truth.label.clone()),
            ground_truth: Some(ground_truth),
            usage,
            diagnostics,
        })
    }

    fn metric(&self, played: &Played) -> f64 {
        played.ground_truth.as_ref().map_or(0.0, |g| g.value)
    }
}
