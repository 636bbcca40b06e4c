//! Deterministic canned-response backend for offline runs and golden tests.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{estimate_tokens, BackendError, CallRole, FinishReason, GenRequest, GenResponse, Policy};
use crate::icrl::inspect;

#[derive(Debug, Error, PartialEq)]
pub enum ScriptError {
    #[error("no scripted response for problem {problem_id:?}, episode {episode}, role {role:?}, call {call}")]
    Missing {
        problem_id: String,
        episode: u32,
        role: CallRole,
        call: u32,
    },
    #[error("script exhausted after {0} steps")]
    Exhausted(usize),
    #[error("prompt check failed: {0}")]
    PredicateMismatch(String),
    #[error("cannot load script: {0}")]
    Load(String),
}

/// A check over the prompt a scripted response is about to answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PromptPredicate {
    Contains { text: String },
    NotContains { text: String },
    /// Exact number of occurrences of `text`.
    Count { text: String, n: usize },
    CountAtLeast { text: String, n: usize },
    /// Whole-prompt golden comparison.
    Equals { text: String },
    /// Exact number of attempt blocks that carry a rendered reward.
    RewardedAttempts { n: usize },
    /// At least `n` attempt blocks whose best rendered reward is `>= min_reward`.
    RewardedAttemptsAtLeast { n: usize, min_reward: f64 },
}

impl PromptPredicate {
    pub fn check(&self, prompt: &str) -> Result<(), String> {
        match self {
            PromptPredicate::Contains { text } => {
                ensure(prompt.contains(text.as_str()), || format!("expected prompt to contain {text:?}"))
            }
            PromptPredicate::NotContains { text } => ensure(!prompt.contains(text.as_str()), || {
                format!("expected prompt not to contain {text:?}")
            }),
            PromptPredicate::Count { text, n } => {
                let got = prompt.matches(text.as_str()).count();
                ensure(got == *n, || format!("expected {n} occurrences of {text:?}, found {got}"))
            }
            PromptPredicate::CountAtLeast { text, n } => {
                let got = prompt.matches(text.as_str()).count();
                ensure(got >= *n, || {
                    format!("expected at least {n} occurrences of {text:?}, found {got}")
                })
            }
            PromptPredicate::Equals { text } => match first_difference(text, prompt) {
                None => Ok(()),
                Some(diff) => Err(diff),
            },
            PromptPredicate::RewardedAttempts { n } => {
                let got = inspect::rewarded_attempts(prompt).len();
                ensure(got == *n, || format!("expected {n} rewarded attempt blocks, found {got}"))
            }
            PromptPredicate::RewardedAttemptsAtLeast { n, min_reward } => {
                let got = count_at_least(prompt, *min_reward);
                ensure(got >= *n, || {
                    format!("expected at least {n} attempt blocks with reward >= {min_reward}, found {got}")
                })
            }
        }
    }

    /// Non-failing form, used by rule matching.
    pub fn holds(&self, prompt: &str) -> bool {
        self.check(prompt).is_ok()
    }
}

fn count_at_least(prompt: &str, min_reward: f64) -> usize {
    inspect::rewarded_attempts(prompt)
        .iter()
        .filter(|rewards| rewards.iter().any(|&r| r >= min_reward))
        .count()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Character-level report of the first divergence between two texts.
pub(crate) fn first_difference(expected: &str, actual: &str) -> Option<String> {
    if expected == actual {
        return None;
    }
    let idx = expected
        .chars()
        .zip(actual.chars())
        .take_while(|(a, b)| a == b)
        .count();
    let prefix: String = expected.chars().take(idx).collect();
    let line = prefix.matches('\n').count() + 1;
    let col = prefix.chars().rev().take_while(|&c| c != '\n').count() + 1;
    let window = |s: &str| -> String {
        s.chars().skip(idx.saturating_sub(20)).take(60).collect::<String>()
    };
    Some(format!(
        "first difference at char {idx} (line {line}, column {col}); lengths {} vs {}\n  expected: {:?}\n  actual:   {:?}",
        expected.chars().count(),
        actual.chars().count(),
        window(expected),
        window(actual)
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub problem_id: String,
    pub episode: u32,
    #[serde(default)]
    pub role: CallRole,
    /// Zero-based index among calls sharing (problem, episode, role).
    #[serde(default)]
    pub call: u32,
    pub response: String,
    #[serde(default)]
    pub expect: Vec<PromptPredicate>,
}

/// Prompt-matched response: the first rule whose filters and predicates all
/// hold answers the call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default)]
    pub role: Option<CallRole>,
    #[serde(default)]
    pub problem_id: Option<String>,
    #[serde(default)]
    pub when: Vec<PromptPredicate>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, req: &GenRequest) -> bool {
        self.role.is_none_or(|r| r == req.tag.role)
            && self
                .problem_id
                .as_ref()
                .is_none_or(|p| *p == req.tag.problem_id)
            && self.when.iter().all(|p| p.holds(&req.user_text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceStep {
    pub response: String,
    #[serde(default)]
    pub expect: Vec<PromptPredicate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub sequence: Vec<SequenceStep>,
}

impl Script {
    /// Reads a `.toml` or `.json` script file.
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScriptError::Load(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| ScriptError::Load(e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| ScriptError::Load(e.to_string()))
        }
    }
}

/// Sequential script cursor: each step returns the next canned response
/// after checking its predicates against the prompt.
#[derive(Debug, Clone)]
pub struct ScriptCursor {
    steps: Vec<SequenceStep>,
    pos: usize,
}

impl ScriptCursor {
    pub fn new(steps: Vec<SequenceStep>) -> Self {
        Self { steps, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_exhausted(&self) -> bool {
        self.pos >= self.steps.len()
    }

    pub fn step(&mut self, prompt: &str) -> Result<GenResponse, ScriptError> {
        let step = self
            .steps
            .get(self.pos)
            .ok_or(ScriptError::Exhausted(self.steps.len()))?;
        for p in &step.expect {
            p.check(prompt)
                .map_err(|m| ScriptError::PredicateMismatch(format!("step {}: {m}", self.pos + 1)))?;
        }
        self.pos += 1;
        Ok(canned(prompt, &step.response))
    }
}

fn canned(prompt: &str, text: &str) -> GenResponse {
    GenResponse {
        text: text.to_string(),
        tokens_in: estimate_tokens(prompt),
        tokens_out: estimate_tokens(text),
        finish_reason: FinishReason::Stop,
    }
}

type CallKey = (String, u32, CallRole);

/// Canned responses looked up by (problem, episode, role, call index), then
/// by prompt-matching rules, then from a sequential cursor. A call nothing
/// answers is an error.
#[derive(Debug)]
pub struct ScriptedPolicy {
    id: String,
    entries: HashMap<(CallKey, u32), ScriptEntry>,
    rules: Vec<ScriptRule>,
    calls: Mutex<HashMap<CallKey, u32>>,
    cursor: Mutex<ScriptCursor>,
    context_limit: Option<usize>,
}

impl ScriptedPolicy {
    pub fn new(script: Script) -> Self {
        let entries = script
            .entries
            .into_iter()
            .map(|e| (((e.problem_id.clone(), e.episode, e.role), e.call), e))
            .collect();
        Self {
            id: "scripted".into(),
            entries,
            rules: script.rules,
            calls: Mutex::new(HashMap::new()),
            cursor: Mutex::new(ScriptCursor::new(script.sequence)),
            context_limit: None,
        }
    }

    pub fn from_rules(rules: Vec<ScriptRule>) -> Self {
        Self::new(Script {
            rules,
            ..Script::default()
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_context_limit(mut self, tokens: usize) -> Self {
        self.context_limit = Some(tokens);
        self
    }

    /// Forgets call counters and rewinds the sequence.
    pub fn reset(&self) {
        self.calls.lock().expect("poisoned").clear();
        let mut cursor = self.cursor.lock().expect("poisoned");
        cursor.pos = 0;
    }

    fn next_call_index(&self, key: &CallKey) -> u32 {
        let mut calls = self.calls.lock().expect("poisoned");
        let slot = calls.entry(key.clone()).or_insert(0);
        let idx = *slot;
        *slot += 1;
        idx
    }
}

impl Policy for ScriptedPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenRequest) -> Result<GenResponse, BackendError> {
        request.validate()?;
        let key = (
            request.tag.problem_id.clone(),
            request.tag.episode,
            request.tag.role,
        );
        let call = self.next_call_index(&key);
        if let Some(entry) = self.entries.get(&(key.clone(), call)) {
            for p in &entry.expect {
                p.check(&request.user_text).map_err(|m| {
                    ScriptError::PredicateMismatch(format!(
                        "{} episode {} {:?} call {call}: {m}",
                        entry.problem_id, entry.episode, entry.role
                    ))
                })?;
            }
            return Ok(canned(&request.user_text, &entry.response));
        }
        if let Some(rule) = self.rules.iter().find(|r| r.matches(request)) {
            return Ok(canned(&request.user_text, &rule.response));
        }
        let mut cursor = self.cursor.lock().expect("poisoned");
        if !cursor.is_exhausted() {
            return Ok(cursor.step(&request.user_text)?);
        }
        Err(ScriptError::Missing {
            problem_id: key.0,
            episode: key.1,
            role: key.2,
            call,
        }
        .into())
    }

    fn context_limit(&self) -> Option<usize> {
        self.context_limit
    }
}
