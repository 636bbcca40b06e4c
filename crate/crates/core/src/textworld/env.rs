use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::spec::WorldSpec;
use super::world::MiniLab;
use super::WorldError;

/// One step as seen by the harness, whatever the backing environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStep {
    pub observation: String,
    pub reward: f64,
    pub done: bool,
    pub total: f64,
    /// Terminal line (success or failure) once `done`.
    pub message: Option<String>,
    /// False for actions naming something out of reach.
    pub valid: bool,
}

/// What the agent is told about an environment before acting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvDescription {
    /// Fully rendered s_task.
    pub task_text: String,
    pub max_steps: Option<u32>,
}

pub trait Environment: Send {
    fn reset(&mut self) -> Result<(), WorldError>;
    fn step(&mut self, action: &str) -> Result<EnvStep, WorldError>;
}

/// Creates a fresh environment per episode.
pub trait EnvFactory: Send + Sync {
    fn name(&self) -> &str;
    fn describe(&self) -> Result<EnvDescription, WorldError>;
    fn create(&self) -> Result<Box<dyn Environment>, WorldError>;
}

impl Environment for MiniLab {
    fn reset(&mut self) -> Result<(), WorldError> {
        MiniLab::reset(self);
        Ok(())
    }

    fn step(&mut self, action: &str) -> Result<EnvStep, WorldError> {
        let out = MiniLab::step(self, action)?;
        let state = self.state();
        Ok(EnvStep {
            observation: out.observation,
            reward: f64::from(out.reward),
            done: out.terminated,
            total: f64::from(state.total_reward),
            message: state.status.terminal_line().map(str::to_string),
            valid: out.matched,
        })
    }
}

pub struct MiniLabFactory {
    spec: Arc<WorldSpec>,
}

impl MiniLabFactory {
    pub fn new(spec: WorldSpec) -> Self {
        Self { spec: Arc::new(spec) }
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }
}

impl EnvFactory for MiniLabFactory {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn describe(&self) -> Result<EnvDescription, WorldError> {
        Ok(EnvDescription {
            task_text: self.spec.render_task(),
            max_steps: Some(self.spec.max_steps),
        })
    }

    fn create(&self) -> Result<Box<dyn Environment>, WorldError> {
        Ok(Box::new(MiniLab::new(self.spec.clone())))
    }
}
