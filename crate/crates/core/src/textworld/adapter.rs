//! Newline-delimited JSON over stdio, so an external environment can stand
//! in for MiniLab.
//!
//! Requests are `{"action": "..."}` or `{"reset": true}`; every request gets
//! exactly one response line `{observation, reward, done, total, ...}`.
//! A reset response may carry `task`, `rooms`, `actions` and `max_steps`
//! describing the environment.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::env::{EnvDescription, EnvFactory, EnvStep, Environment};
use super::spec::{WorldSpec, ACTION_HELP};
use super::world::MiniLab;
use super::{render_environment_description, WorldError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reset: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdapterResponse {
    #[serde(default)]
    pub observation: String,
    #[serde(default)]
    pub reward: f64,
    #[serde(default)]
    pub done: bool,
    #[serde(default)]
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rooms: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AdapterResponse {
    fn error(msg: impl Into<String>) -> Self {
        Self {
            error: Some(msg.into()),
            ..Self::default()
        }
    }

    fn description(&self) -> Result<EnvDescription, WorldError> {
        let task = self
            .task
            .as_deref()
            .ok_or_else(|| WorldError::Env("reset response carries no task".into()))?;
        let task_text = match (&self.rooms, &self.actions) {
            (Some(r), Some(a)) => render_environment_description(r, a, task),
            _ => task.to_string(),
        };
        Ok(EnvDescription {
            task_text,
            max_steps: self.max_steps,
        })
    }
}

/// Serves one MiniLab world until `input` closes. Malformed requests get an
/// `error` response rather than ending the session.
pub fn serve_stdio(spec: WorldSpec, input: impl BufRead, mut output: impl Write) -> Result<(), WorldError> {
    let io = |e: std::io::Error| WorldError::Io(e.to_string());
    let rooms = spec.rooms.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ");
    let actions = ACTION_HELP.iter().map(|(a, d)| format!("{a}: {d}")).collect::<Vec<_>>().join("\n");
    let mut lab = MiniLab::new(Arc::new(spec));
    for line in input.lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<AdapterRequest>(&line) {
            Err(e) => AdapterResponse::error(format!("bad request: {e}")),
            Ok(req) if req.reset => {
                lab.reset();
                AdapterResponse {
                    task: Some(lab.spec().task.clone()),
                    rooms: Some(rooms.clone()),
                    actions: Some(actions.clone()),
                    max_steps: Some(lab.spec().max_steps),
                    valid: Some(true),
                    ..AdapterResponse::default()
                }
            }
            Ok(AdapterRequest { action: Some(a), .. }) => match Environment::step(&mut lab, &a) {
                Ok(s) => AdapterResponse {
                    observation: s.observation,
                    reward: s.reward,
                    done: s.done,
                    total: s.total,
                    message: s.message,
                    valid: Some(s.valid),
                    ..AdapterResponse::default()
                },
                Err(e) => AdapterResponse::error(e.to_string()),
            },
            Ok(_) => AdapterResponse::error("request needs `action` or `reset`"),
        };
        let text = serde_json::to_string(&resp).map_err(|e| WorldError::Env(e.to_string()))?;
        writeln!(output, "{text}").map_err(io)?;
        output.flush().map_err(io)?;
    }
    Ok(())
}

/// A child process speaking the adapter protocol.
pub struct StdioEnv {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl StdioEnv {
    pub fn spawn(command: &[String]) -> Result<Self, WorldError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| WorldError::Env("empty environment command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| WorldError::Env(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }

    fn call(&mut self, req: &AdapterRequest) -> Result<AdapterResponse, WorldError> {
        let text = serde_json::to_string(req).map_err(|e| WorldError::Env(e.to_string()))?;
        writeln!(self.stdin, "{text}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| WorldError::Env(format!("writing request: {e}")))?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| WorldError::Env(format!("reading response: {e}")))?;
        if n == 0 {
            return Err(WorldError::Env("environment closed its output".into()));
        }
        let resp: AdapterResponse =
            serde_json::from_str(line.trim()).map_err(|e| WorldError::Env(format!("bad response {line:?}: {e}")))?;
        match resp.error {
            Some(e) => Err(WorldError::Env(e)),
            None => Ok(resp),
        }
    }

    pub fn reset_with_description(&mut self) -> Result<EnvDescription, WorldError> {
        self.call(&AdapterRequest {
            reset: true,
            action: None,
        })?
        .description()
    }
}

impl Environment for StdioEnv {
    fn reset(&mut self) -> Result<(), WorldError> {
        self.call(&AdapterRequest {
            reset: true,
            action: None,
        })
        .map(|_| ())
    }

    fn step(&mut self, action: &str) -> Result<EnvStep, WorldError> {
        let r = self.call(&AdapterRequest {
            action: Some(action.to_string()),
            reset: false,
        })?;
        Ok(EnvStep {
            observation: r.observation,
            reward: r.reward,
            done: r.done,
            total: r.total,
            message: r.message,
            valid: r.valid.unwrap_or(true),
        })
    }
}

impl Drop for StdioEnv {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Spawns a fresh process per episode.
pub struct StdioEnvFactory {
    name: String,
    command: Vec<String>,
}

impl StdioEnvFactory {
    pub fn new(name: impl Into<String>, command: Vec<String>) -> Self {
        Self {
            name: name.into(),
            command,
        }
    }
}

impl EnvFactory for StdioEnvFactory {
    fn name(&self) -> &str {
        &self.name
    }

    fn describe(&self) -> Result<EnvDescription, WorldError> {
        StdioEnv::spawn(&self.command)?.reset_with_description()
    }

    fn create(&self) -> Result<Box<dyn Environment>, WorldError> {
        let mut env = StdioEnv::spawn(&self.command)?;
        env.reset()?;
        Ok(Box::new(env))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textworld::builtin_world;

    fn serve(lines: &[&str]) -> Vec<AdapterResponse> {
        let input = lines.join("\n");
        let mut out = Vec::new();
        serve_stdio(builtin_world("boil-water").unwrap(), input.as_bytes(), &mut out).unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    #[test]
    fn protocol_round_trip() {
        let r = serve(&[
            r#"{"reset": true}"#,
            r#"{"action": "teleport to bathroom"}"#,
            r#"{"action": "focus on water"}"#,
            "not json",
            r#"{}"#,
        ]);
        assert_eq!(r.len(), 5);
        let desc = r[0].description().unwrap();
        assert!(desc.task_text.starts_with("<Environment description>\nIn the environment, there are several rooms: "));
        assert_eq!(desc.max_steps, Some(11));
        assert_eq!((r[1].reward, r[1].total), (3.0, 3.0));
        assert_eq!(r[2].observation, "You focus on the water.");
        assert_eq!(r[2].total, 69.0);
        assert!(r[3].error.as_deref().unwrap().starts_with("bad request"));
        assert!(r[4].error.is_some());
    }

    #[test]
    fn minimal_response_parses() {
        let r: AdapterResponse = serde_json::from_str(r#"{"observation":"o","reward":1,"done":false,"total":1}"#).unwrap();
        assert_eq!(r.valid, None);
        assert_eq!(serde_json::to_string(&AdapterRequest { action: Some("wait".into()), reset: false }).unwrap(), r#"{"action":"wait"}"#);
    }

    #[test]
    fn stdio_env_against_shell_script() {
        // A fake environment that answers every request with the same step.
        let script = r#"while read line; do
case "$line" in
  *reset*) echo '{"observation":"","reward":0,"done":false,"total":0,"task":"Do the thing."}' ;;
  *) echo '{"observation":"ok","reward":5,"done":true,"total":5,"message":"Task Completed."}' ;;
esac
done"#;
        let factory = StdioEnvFactory::new("fake", vec!["sh".into(), "-c".into(), script.into()]);
        assert_eq!(factory.describe().unwrap().task_text, "Do the thing.");
        let mut env = factory.create().unwrap();
        let s = env.step("anything").unwrap();
        assert_eq!((s.observation.as_str(), s.reward, s.done, s.valid), ("ok", 5.0, true, true));
        assert_eq!(s.message.as_deref(), Some("Task Completed."));
    }

    #[test]
    fn missing_program_is_an_env_error() {
        let err = StdioEnv::spawn(&["/nonexistent/env-binary".into()]).err().unwrap();
        assert!(matches!(err, WorldError::Env(_)));
    }
}
