//! The interface every task (Game of 24, creative writing, MiniLab) offers
//! to the episode loop and the baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::icrl::buffer::PositionedReward;
use crate::policy::{BackendError, GenSettings, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "game24")]
    Game24,
    #[serde(rename = "writing")]
    Writing,
    #[serde(rename = "textworld")]
    TextWorld,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Game24, TaskKind::Writing, TaskKind::TextWorld];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Game24 => "game24",
            TaskKind::Writing => "writing",
            TaskKind::TextWorld => "textworld",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown task {s:?} (expected game24, writing or textworld)"))
    }
}

/// Token and call accounting for one episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub policy_calls: u32,
    pub judge_calls: u32,
}

impl Usage {
    pub fn add(&mut self, other: Usage) {
        self.tokens_in += other.tokens_in;
        self.tokens_out += other.tokens_out;
        self.policy_calls += other.policy_calls;
        self.judge_calls += other.judge_calls;
    }
}

/// Ground-truth evaluation r* of an episode, kept apart from the reward the
/// loop feeds back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub value: f64,
    pub label: String,
}

/// Result of playing one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Played {
    pub response_text: String,
    pub rewards: Vec<PositionedReward>,
    pub header: Option<String>,
    pub outcome: Option<String>,
    pub ground_truth: Option<GroundTruth>,
    pub usage: Usage,
    pub diagnostics: Vec<String>,
}

/// Per-episode call context.
#[derive(Debug, Clone, Copy)]
pub struct PlayContext<'a> {
    pub episode: u32,
    pub settings: &'a GenSettings,
    /// Call role for the policy's own generations.
    pub role: crate::policy::CallRole,
}

/// A problem instance together with its reward function.
pub trait TaskRunner: Send + Sync {
    fn kind(&self) -> TaskKind;

    fn problem_id(&self) -> &str;

    /// s_task: the task description as shown to the policy.
    fn task_text(&self) -> &str;

    fn system_text(&self) -> Option<&str> {
        None
    }

    /// Runs one episode starting from the user prompt `prompt` and attaches
    /// rewards. Judge parse failures are not errors (reward 0 plus a
    /// diagnostic); backend failures are.
    fn play(&self, prompt: &str, policy: &dyn Policy, ctx: PlayContext<'_>) -> Result<Played, BackendError>;

    /// The scalar the experiment curves track for this episode.
    fn metric(&self, played: &Played) -> f64 {
        played.rewards.iter().map(|r| r.value).sum()
    }
}
