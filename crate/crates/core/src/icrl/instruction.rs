use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const EXPLORATION: &str = include_str!("../../templates/exploration.txt");
const EXPLOITATION: &str = include_str!("../../templates/exploitation.txt");
const AUTONOMOUS: &str = include_str!("../../templates/autonomous.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionKind {
    None,
    Exploration,
    Exploitation,
    Autonomous,
}

impl InstructionKind {
    pub fn template(self) -> Option<&'static str> {
        match self {
            InstructionKind::None => None,
            InstructionKind::Exploration => Some(EXPLORATION.trim_end()),
            InstructionKind::Exploitation => Some(EXPLOITATION.trim_end()),
            InstructionKind::Autonomous => Some(AUTONOMOUS.trim_end()),
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            InstructionKind::None => "none",
            InstructionKind::Exploration => "exploration",
            InstructionKind::Exploitation => "exploitation",
            InstructionKind::Autonomous => "autonomous",
        }
    }
}

impl fmt::Display for InstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Which instruction each episode receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Exploitation on odd episodes, exploration on even ones.
    Preset,
    /// The combined instruction every episode; the model picks.
    Autonomous,
    ExplorationOnly,
    ExploitationOnly,
    /// No instruction at all.
    NoEe,
}

impl Schedule {
    pub const ALL: [Schedule; 5] = [
        Schedule::Preset,
        Schedule::Autonomous,
        Schedule::ExplorationOnly,
        Schedule::ExploitationOnly,
        Schedule::NoEe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Schedule::Preset => "preset",
            Schedule::Autonomous => "autonomous",
            Schedule::ExplorationOnly => "exploration_only",
            Schedule::ExploitationOnly => "exploitation_only",
            Schedule::NoEe => "no_ee",
        }
    }
}

impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Schedule::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown schedule {s:?}"))
    }
}

/// Picks the instruction for episode `episode_index` (1-based). An empty
/// buffer never gets an instruction: there is nothing to explore against
/// or exploit.
pub fn select_instruction(schedule: Schedule, episode_index: u32, buffer_len: usize) -> InstructionKind {
    if buffer_len == 0 {
        return InstructionKind::None;
    }
    match schedule {
        Schedule::Preset if episode_index.is_multiple_of(2) => InstructionKind::Exploration,
        Schedule::Preset => InstructionKind::Exploitation,
        Schedule::Autonomous => InstructionKind::Autonomous,
        Schedule::ExplorationOnly => InstructionKind::Exploration,
        Schedule::ExploitationOnly => InstructionKind::Exploitation,
        Schedule::NoEe => InstructionKind::None,
    }
}
