use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::constraints::{check_constraints, passage_text};
use super::{parse_coherence_score, render_coherence_prompt, render_writing_task, BaseAnswer, WritingError, WritingProblem};
use crate::icrl::buffer::PositionedReward;
use crate::icrl::EpisodeLog;
use crate::policy::{BackendError, CallRole, CallTag, GenSettings, Policy};
use crate::task::{PlayContext, Played, TaskKind, TaskRunner, Usage};

/// A writing problem with its coherence judge. One policy call and one
/// judge call per episode; the single reward is the judge's 1-10 score.
pub struct WritingTask {
    problem: WritingProblem,
    task_text: String,
    base: BaseAnswer,
    judge: Arc<dyn Policy>,
    judge_settings: GenSettings,
}

impl WritingTask {
    pub fn new(
        problem: WritingProblem,
        base: BaseAnswer,
        judge: Arc<dyn Policy>,
        judge_settings: GenSettings,
    ) -> Result<Self, WritingError> {
        let task_text = render_writing_task(&problem)?;
        Ok(Self {
            problem,
            task_text,
            base,
            judge,
            judge_settings,
        })
    }

    pub fn problem(&self) -> &WritingProblem {
        &self.problem
    }

    /// Judges `response`; an unusable verdict scores 0 with a diagnostic.
    pub fn judge_response(&self, response: &str, episode: u32) -> Result<(f64, Usage, Option<String>), BackendError> {
        let candidate = passage_text(response);
        let prompt = match render_coherence_prompt(candidate, &self.base) {
            Ok(p) => p,
            Err(e) => return Ok((0.0, Usage::default(), Some(format!("not judged: {e}")))),
        };
        let tag = CallTag::new(self.problem.problem_id.clone(), episode, CallRole::Judge);
        let req = self.judge_settings.request(self.judge.id(), None, prompt, tag);
        let resp = self.judge.generate(&req)?;
        let usage = Usage {
            tokens_in: resp.tokens_in,
            tokens_out: resp.tokens_out,
            policy_calls: 0,
            judge_calls: 1,
        };
        Ok(match parse_coherence_score(&resp.text) {
            Ok(s) => (f64::from(s), usage, None),
            Err(e) => (0.0, usage, Some(format!("judge output unusable: {e}"))),
        })
    }
}

impl TaskRunner for WritingTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Writing
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
        let (score, judge_usage, diagnostic) = self.judge_response(&resp.text, ctx.episode)?;
        let mut usage = Usage {
            tokens_in: resp.tokens_in,
            tokens_out: resp.tokens_out,
            policy_calls: 1,
            judge_calls: 0,
        };
        usage.add(judge_usage);
        let report = check_constraints(&resp.text, &self.problem);
        let mut diagnostics: Vec<String> = diagnostic.into_iter().collect();
        if !report.all_ok() {
            diagnostics.push(format!("format: {}", report.summary()));
        }
        Ok(Played {
            response_text: resp.text,
            rewards: vec![PositionedReward::new("passage", score, "")],
            header: None,
            outcome: Some(report.summary()),
            ground_truth: None,
            usage,
            diagnostics,
        })
    }
}

/// One instruction/output pair for external pairwise evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlpacaRecord {
    pub instruction: String,
    pub output: String,
    pub generator: String,
    pub problem_id: String,
    pub episode: u32,
    /// `final` (last episode) or `best` (highest judge reward, earliest on ties).
    pub selection: String,
}

/// Picks the final-episode and best-rewarded response per (method, problem).
/// `instructions` maps problem ids to their s_task; problems without one
/// are skipped. Failed episodes are never exported.
pub fn alpaca_export(logs: &[EpisodeLog], instructions: &HashMap<String, String>) -> Vec<AlpacaRecord> {
    let mut groups: BTreeMap<(&str, &str), Vec<&EpisodeLog>> = BTreeMap::new();
    for log in logs.iter().filter(|l| !l.failed && l.task == TaskKind::Writing) {
        groups.entry((&log.method, &log.problem_id)).or_default().push(log);
    }
    let mut out = Vec::new();
    for ((method, problem_id), mut group) in groups {
        let Some(instruction) = instructions.get(problem_id) else {
            continue;
        };
        group.sort_by_key(|l| l.episode);
        let last = group[group.len() - 1];
        let best = group
            .iter()
            .copied()
            .fold(group[0], |b, l| if l.total_reward > b.total_reward { l } else { b });
        for (selection, log) in [("final", last), ("best", best)] {
            out.push(AlpacaRecord {
                instruction: instruction.clone(),
                output: passage_text(&log.response).to_string(),
                generator: method.to_string(),
                problem_id: problem_id.to_string(),
                episode: log.episode,
                selection: selection.to_string(),
            });
        }
    }
    out
}
