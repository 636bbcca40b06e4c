//! The in-context RL loop: experience buffer, instructions, prompt
//! assembly and the per-problem episode runner.

pub mod buffer;
pub mod inspect;
pub mod instruction;
pub mod prompt;
pub mod runner;

use thiserror::Error;

use crate::task::TaskKind;

pub use buffer::{AttemptRecord, ExperienceBuffer, PositionedReward};
pub use instruction::{select_instruction, InstructionKind, Schedule};
pub use prompt::{assemble_prompt, render_attempt, PromptBundle, PromptLayout, Segment};
pub use runner::{run_problem, EpisodeLog, LoopConfig};

#[derive(Debug, Error, PartialEq)]
pub enum IcrlError {
    #[error("buffer capacity must be positive")]
    ZeroCapacity,
    #[error("episode index {got} does not follow {last}")]
    NonMonotoneEpisode { last: u32, got: u32 },
    #[error("{kind} attempt has reward positions {labels:?}")]
    RewardPositions { kind: TaskKind, labels: Vec<String> },
    #[error("prompt layout {0:?} is not a permutation of buffer, instruction, task")]
    Layout(Vec<prompt::Segment>),
    #[error("episode count must be at least 1")]
    NoEpisodes,
}
