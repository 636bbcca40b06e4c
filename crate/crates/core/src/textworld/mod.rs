//! MiniLab, a small deterministic text environment, and the plumbing that
//! lets the ICRL loop play it (or an external environment over stdio).

mod adapter;
mod env;
mod parse;
mod render;
mod spec;
mod task;
mod world;

use thiserror::Error;

pub use adapter::{serve_stdio, AdapterRequest, AdapterResponse, StdioEnv, StdioEnvFactory};
pub use env::{EnvDescription, EnvFactory, EnvStep, Environment, MiniLabFactory};
pub use parse::{parse_action, Action, ParsedAction};
pub use render::render_trajectory;
pub use spec::{focus_mentions, Growth, Matter, ObjectSpec, Predicate, RoomSpec, SubgoalSpec, WorldSpec, ACTION_HELP, TOTAL_REWARD};
pub use task::{extract_action, TextWorldTask, DEFAULT_MAX_ENV_STEPS};
pub use world::{
    step_world, transcript, ActionOutcome, Location, MiniLab, ObjectState, Status, WorldState, FAIL_FOCUS_LINE,
    FAIL_STEPS_LINE, NOT_SURE, NO_MATCH, SUCCESS_LINE,
};

const TASK_TEMPLATE: &str = include_str!("../../templates/textworld_task.txt");
const SYSTEM_TEMPLATE: &str = include_str!("../../templates/textworld_system.txt");

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world spec field {field}: {reason}")]
    Spec { field: String, reason: String },
    #[error("io: {0}")]
    Io(String),
    #[error("episode already ended ({})", .0.name())]
    Terminated(Status),
    #[error("unknown world {0:?}")]
    UnknownWorld(String),
    #[error("environment: {0}")]
    Env(String),
}

/// The system prompt used for every textworld policy call.
pub fn system_text() -> &'static str {
    SYSTEM_TEMPLATE.trim_end()
}

pub fn render_environment_description(rooms: &str, actions: &str, task: &str) -> String {
    TASK_TEMPLATE
        .trim_end()
        .replace("{rooms}", rooms)
        .replace("{actions}", actions)
        .replace("{task}", task)
}

/// Worlds shipped with the crate.
pub const BUILTIN_WORLDS: &[(&str, &str)] = &[
    ("boil-water", include_str!("../../worlds/boil-water.toml")),
    ("find-highest-friction", include_str!("../../worlds/find-highest-friction.toml")),
    ("grow-plant", include_str!("../../worlds/grow-plant.toml")),
];

pub fn builtin_world(name: &str) -> Result<WorldSpec, WorldError> {
    let (_, text) = BUILTIN_WORLDS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| WorldError::UnknownWorld(name.to_string()))?;
    WorldSpec::from_toml(text)
}
