use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::IcrlError;
use crate::task::TaskKind;

/// A scalar reward attached to one position of a response: a solution step,
/// the answer line, a whole passage, or an environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionedReward {
    pub label: String,
    pub value: f64,
    /// The part of the response this reward follows.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub text: String,
}

impl PositionedReward {
    pub fn new(label: impl Into<String>, value: f64, text: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            value,
            text: text.into(),
        }
    }
}

pub const TERMINAL_LABEL: &str = "terminal";
pub const GAME24_POSITIONS: [&str; 4] = ["Step1", "Step2", "Step3", "Answer"];

/// One episode's response with its positioned rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub episode_index: u32,
    pub response_text: String,
    pub rewards: Vec<PositionedReward>,
    pub total_reward: f64,
    pub outcome_note: Option<String>,
    /// Context line rendered above the response (e.g. the Game-of-24 input).
    pub header: Option<String>,
}

impl AttemptRecord {
    pub fn new(episode_index: u32, response_text: impl Into<String>, rewards: Vec<PositionedReward>) -> Self {
        let total_reward = rewards.iter().map(|r| r.value).sum();
        Self {
            episode_index,
            response_text: response_text.into(),
            rewards,
            total_reward,
            outcome_note: None,
            header: None,
        }
    }

    pub fn with_header(mut self, header: impl Into<String>) -> Self {
        self.header = Some(header.into());
        self
    }

    pub fn with_outcome(mut self, note: impl Into<String>) -> Self {
        self.outcome_note = Some(note.into());
        self
    }

    /// Checks the reward positions against what the task declares.
    pub fn validate(&self, kind: TaskKind) -> Result<(), IcrlError> {
        let labels: Vec<&str> = self.rewards.iter().map(|r| r.label.as_str()).collect();
        let ok = match kind {
            TaskKind::Game24 => labels == GAME24_POSITIONS,
            TaskKind::Writing => labels.len() == 1,
            TaskKind::TextWorld => labels.last() == Some(&TERMINAL_LABEL),
        };
        if ok {
            Ok(())
        } else {
            Err(IcrlError::RewardPositions {
                kind,
                labels: labels.iter().map(|s| s.to_string()).collect(),
            })
        }
    }
}

/// Chronological store of past attempts. With a capacity it behaves as a
/// deque: pushing onto a full buffer drops the oldest entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperienceBuffer {
    entries: VecDeque<AttemptRecord>,
    capacity: Option<usize>,
}

impl ExperienceBuffer {
    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: Option<usize>) -> Result<Self, IcrlError> {
        if capacity == Some(0) {
            return Err(IcrlError::ZeroCapacity);
        }
        Ok(Self {
            entries: VecDeque::new(),
            capacity,
        })
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttemptRecord> {
        self.entries.iter()
    }

    /// Appends `attempt`, returning the evicted entry if the buffer was full.
    pub fn push(&mut self, attempt: AttemptRecord) -> Result<Option<AttemptRecord>, IcrlError> {
        if let Some(last) = self.entries.back() {
            if attempt.episode_index <= last.episode_index {
                return Err(IcrlError::NonMonotoneEpisode {
                    last: last.episode_index,
                    got: attempt.episode_index,
                });
            }
        }
        self.entries.push_back(attempt);
        match self.capacity {
            Some(cap) if self.entries.len() > cap => Ok(self.entries.pop_front()),
            _ => Ok(None),
        }
    }

    pub fn evict_oldest(&mut self) -> Option<AttemptRecord> {
        self.entries.pop_front()
    }
}
