//! The 0-3 step judge: one call per step or answer line, asking whether 24
//! is still reachable from the numbers left.

use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::expr::{format_rational, Rational};
use super::oracle::reachable;
use super::solution::TARGET;
use super::Game24Error;
use crate::policy::{BackendError, CallTag, GenSettings, Policy};
use crate::task::Usage;

const STEP_JUDGE_TEMPLATE: &str = include_str!("../../templates/game24_step_judge.txt");

/// Fills the step-judge template. `remaining` is the multiset the step
/// leaves behind; a step with nothing left cannot be judged.
pub fn render_step_judge_prompt(step: &str, remaining: &[Rational]) -> Result<String, Game24Error> {
    if remaining.is_empty() {
        return Err(Game24Error::EmptyRemaining);
    }
    Ok(STEP_JUDGE_TEMPLATE.trim_end().replace("{step}", step.trim()))
}

fn score_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\*\*answer\*\*\s*:\s*\**\s*(-?\d+)").unwrap())
}

/// Last `**Answer**: n` in the judge output, with n in 0..=3.
pub fn parse_judge_score(text: &str) -> Result<u8, Game24Error> {
    let caps = score_re().captures_iter(text).last().ok_or(Game24Error::NoJudgeScore)?;
    let n: i64 = caps[1].parse().map_err(|_| Game24Error::NoJudgeScore)?;
    if (0..=3).contains(&n) {
        Ok(n as u8)
    } else {
        Err(Game24Error::JudgeScoreRange(n))
    }
}

/// A judged position: the score, or why none could be obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeScore {
    pub score: Result<u8, String>,
    pub usage: Usage,
}

pub trait StepJudge: Send + Sync {
    fn score(&self, step: &str, remaining: &[Rational], tag: CallTag) -> Result<JudgeScore, BackendError>;
}

/// The judge as a model call with the step-judge prompt.
pub struct LlmStepJudge {
    policy: Arc<dyn Policy>,
    settings: GenSettings,
}

impl LlmStepJudge {
    pub fn new(policy: Arc<dyn Policy>, settings: GenSettings) -> Self {
        Self { policy, settings }
    }
}

impl StepJudge for LlmStepJudge {
    fn score(&self, step: &str, remaining: &[Rational], tag: CallTag) -> Result<JudgeScore, BackendError> {
        let prompt = match render_step_judge_prompt(step, remaining) {
            Ok(p) => p,
            Err(e) => {
                return Ok(JudgeScore {
                    score: Err(e.to_string()),
                    usage: Usage::default(),
                })
            }
        };
        let req = self.settings.request(self.policy.id(), None, prompt, tag);
        let resp = self.policy.generate(&req)?;
        Ok(JudgeScore {
            score: parse_judge_score(&resp.text).map_err(|e| e.to_string()),
            usage: Usage {
                tokens_in: resp.tokens_in,
                tokens_out: resp.tokens_out,
                policy_calls: 0,
                judge_calls: 1,
            },
        })
    }
}

/// Exact stand-in for the model judge: 3 when 24 is still reachable from
/// the remaining numbers, 0 otherwise. No calls, no cost.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleStepJudge;

impl StepJudge for OracleStepJudge {
    fn score(&self, _step: &str, remaining: &[Rational], _tag: CallTag) -> Result<JudgeScore, BackendError> {
        let score = if remaining.is_empty() {
            Err(Game24Error::EmptyRemaining.to_string())
        } else if reachable(remaining, Rational::from_integer(TARGET)) {
            Ok(3)
        } else {
            Ok(0)
        };
        Ok(JudgeScore {
            score,
            usage: Usage::default(),
        })
    }
}

pub(crate) fn format_remaining(values: &[Rational]) -> String {
    values.iter().map(|v| format_rational(*v)).collect::<Vec<_>>().join(" ")
}
