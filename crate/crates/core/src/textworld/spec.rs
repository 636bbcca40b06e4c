//! World specification files: rooms, objects, subgoals and limits.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::WorldError;

pub const TOTAL_REWARD: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub name: String,
    #[serde(default)]
    pub adjacent: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matter {
    Solid,
    Liquid,
    Gas,
}

impl Matter {
    pub fn name(self) -> &'static str {
        match self {
            Matter::Solid => "solid",
            Matter::Liquid => "liquid",
            Matter::Gas => "gas",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Growth {
    /// Stage names, first is the initial one.
    pub stages: Vec<String>,
    /// Object that must share the grower's container for it to grow.
    pub needs: String,
    /// Ticks of satisfied conditions per stage advance.
    pub ticks_per_stage: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    /// Name used in observations; defaults to `name`.
    #[serde(default)]
    pub display: Option<String>,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// A room, another object, or `inventory`.
    pub location: String,
    #[serde(default)]
    pub portable: bool,
    #[serde(default)]
    pub container: bool,
    #[serde(default)]
    pub activatable: bool,
    #[serde(default)]
    pub active: bool,
    /// Degrees added per tick to everything inside while active.
    #[serde(default)]
    pub heat_per_tick: i32,
    #[serde(default)]
    pub matter: Option<Matter>,
    #[serde(default)]
    pub temperature: Option<i32>,
    #[serde(default = "default_boil")]
    pub boiling_point: i32,
    #[serde(default)]
    pub freezing_point: i32,
    #[serde(default)]
    pub growth: Option<Growth>,
    #[serde(default)]
    pub description: Option<String>,
    /// Observation appended when something is moved into this object;
    /// `{object}` is replaced by the moved object's name.
    #[serde(default)]
    pub on_receive: Option<String>,
}

fn default_boil() -> i32 {
    100
}

impl ObjectSpec {
    pub fn display_name(&self) -> &str {
        self.display.as_deref().unwrap_or(&self.name)
    }
}

/// A condition over the world state. Each subgoal fires at most once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    AgentIn { room: String },
    Focused { object: String },
    /// `object` is inside `container`, directly or transitively.
    Inside { object: String, container: String },
    Matter { object: String, state: Matter },
    Active { object: String },
    /// `object` has reached growth stage `stage` or later.
    Stage { object: String, stage: String },
    InInventory { object: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgoalSpec {
    pub id: String,
    pub reward: u32,
    pub when: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub name: String,
    pub task: String,
    pub start_room: String,
    pub max_steps: u32,
    pub focus_budget: u32,
    pub focus_targets: Vec<String>,
    pub rooms: Vec<RoomSpec>,
    pub objects: Vec<ObjectSpec>,
    pub subgoals: Vec<SubgoalSpec>,
    /// An action sequence that completes every subgoal.
    #[serde(default)]
    pub reference_solution: Vec<String>,
}

/// Action templates as listed to the agent.
pub const ACTION_HELP: &[(&str, &str)] = &[
    ("teleport to LOC", "teleport to a location"),
    ("go to LOC", "move to an adjacent location"),
    ("look around", "describe the current room"),
    ("inventory", "list what you are carrying"),
    ("focus on OBJ", "signal intent on a task object"),
    ("pick up OBJ", "move an object to the inventory"),
    ("move OBJ to OBJ", "move an object into a container"),
    ("pour OBJ into OBJ", "pour a liquid or a container's contents into another container"),
    ("activate OBJ", "activate a device"),
    ("deactivate OBJ", "deactivate a device"),
    ("examine OBJ", "describe an object in detail"),
    ("use OBJ on OBJ", "use a device on an object"),
    ("wait", "take no action for one step"),
];

/// Counts `focus` as a word, case-insensitively.
pub fn focus_mentions(text: &str) -> u32 {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.eq_ignore_ascii_case("focus"))
        .count() as u32
}

fn spec_err(field: impl Into<String>, reason: impl Into<String>) -> WorldError {
    WorldError::Spec {
        field: field.into(),
        reason: reason.into(),
    }
}

impl WorldSpec {
    pub fn from_toml(text: &str) -> Result<Self, WorldError> {
        let mut spec: WorldSpec = toml::from_str(text).map_err(|e| spec_err("<file>", e.to_string()))?;
        spec.validate()?;
        spec.make_symmetric();
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn room_index(&self, name: &str) -> Option<usize> {
        self.rooms.iter().position(|r| r.name == name)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    fn make_symmetric(&mut self) {
        let mut edges: Vec<(String, String)> = Vec::new();
        for r in &self.rooms {
            for a in &r.adjacent {
                edges.push((a.clone(), r.name.clone()));
            }
        }
        for (from, to) in edges {
            let room = self.rooms.iter_mut().find(|r| r.name == from).expect("validated");
            if !room.adjacent.contains(&to) {
                room.adjacent.push(to);
            }
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.max_steps == 0 {
            return Err(spec_err("max_steps", "must be at least 1"));
        }
        let mentions = focus_mentions(&self.task);
        if self.focus_budget != mentions {
            return Err(spec_err(
                "focus_budget",
                format!("is {} but the task text mentions focus {mentions} time(s)", self.focus_budget),
            ));
        }

        let mut room_names = HashSet::new();
        for (i, r) in self.rooms.iter().enumerate() {
            if !room_names.insert(r.name.as_str()) {
                return Err(spec_err(format!("rooms[{i}].name"), format!("duplicate room {:?}", r.name)));
            }
        }
        for (i, r) in self.rooms.iter().enumerate() {
            for a in &r.adjacent {
                if !room_names.contains(a.as_str()) {
                    return Err(spec_err(format!("rooms[{i}].adjacent"), format!("unknown room {a:?}")));
                }
            }
        }
        if !room_names.contains(self.start_room.as_str()) {
            return Err(spec_err("start_room", format!("unknown room {:?}", self.start_room)));
        }

        let mut names: HashMap<String, usize> = HashMap::new();
        for (i, o) in self.objects.iter().enumerate() {
            if room_names.contains(o.name.as_str()) || names.insert(o.name.clone(), i).is_some() {
                return Err(spec_err(format!("objects[{i}].name"), format!("duplicate name {:?}", o.name)));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            let loc = o.location.as_str();
            if loc != "inventory" && !room_names.contains(loc) {
                match names.get(loc) {
                    None => {
                        return Err(spec_err(format!("objects[{i}].location"), format!("unknown location {loc:?}")))
                    }
                    Some(&p) if !self.objects[p].container => {
                        return Err(spec_err(format!("objects[{i}].location"), format!("{loc:?} is not a container")))
                    }
                    _ => {}
                }
            }
            if o.matter.is_some() && o.temperature.is_none() {
                return Err(spec_err(format!("objects[{i}].temperature"), "required when matter is set"));
            }
            if let Some(g) = &o.growth {
                if g.stages.len() < 2 || g.ticks_per_stage == 0 {
                    return Err(spec_err(format!("objects[{i}].growth"), "needs 2+ stages and ticks_per_stage >= 1"));
                }
                if !names.contains_key(&g.needs) {
                    return Err(spec_err(format!("objects[{i}].growth.needs"), format!("unknown object {:?}", g.needs)));
                }
            }
        }
        // containment must be a forest
        for (i, o) in self.objects.iter().enumerate() {
            let mut seen = HashSet::from([i]);
            let mut loc = o.location.as_str();
            while let Some(&p) = names.get(loc) {
                if !seen.insert(p) {
                    return Err(spec_err(format!("objects[{i}].location"), "containment cycle"));
                }
                loc = self.objects[p].location.as_str();
            }
        }

        for t in &self.focus_targets {
            if !names.contains_key(t) {
                return Err(spec_err("focus_targets", format!("unknown object {t:?}")));
            }
        }

        let total: u32 = self.subgoals.iter().map(|s| s.reward).sum();
        if total != TOTAL_REWARD {
            return Err(spec_err("subgoals", format!("rewards sum to {total}, expected {TOTAL_REWARD}")));
        }
        for (i, s) in self.subgoals.iter().enumerate() {
            let field = format!("subgoals[{i}].when");
            if s.reward == 0 {
                return Err(spec_err(format!("subgoals[{i}].reward"), "must be positive"));
            }
            let obj = |name: &str| -> Result<usize, WorldError> {
                names
                    .get(name)
                    .copied()
                    .ok_or_else(|| spec_err(field.clone(), format!("unknown object {name:?}")))
            };
            match &s.when {
                Predicate::AgentIn { room } => {
                    if !room_names.contains(room.as_str()) {
                        return Err(spec_err(field, format!("unknown room {room:?}")));
                    }
                }
                Predicate::Focused { object } | Predicate::InInventory { object } => {
                    obj(object)?;
                }
                Predicate::Inside { object, container } => {
                    obj(object)?;
                    if !self.objects[obj(container)?].container {
                        return Err(spec_err(field, format!("{container:?} is not a container")));
                    }
                }
                Predicate::Matter { object, .. } => {
                    if self.objects[obj(object)?].matter.is_none() {
                        return Err(spec_err(field, format!("{object:?} has no state of matter")));
                    }
                }
                Predicate::Active { object } => {
                    if !self.objects[obj(object)?].activatable {
                        return Err(spec_err(field, format!("{object:?} cannot be activated")));
                    }
                }
                Predicate::Stage { object, stage } => {
                    let ok = self.objects[obj(object)?]
                        .growth
                        .as_ref()
                        .is_some_and(|g| g.stages.contains(stage));
                    if !ok {
                        return Err(spec_err(field, format!("{object:?} has no growth stage {stage:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// The task description s_task for this world.
    pub fn render_task(&self) -> String {
        let rooms = self.rooms.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ");
        let actions = ACTION_HELP
            .iter()
            .map(|(a, d)| format!("{a}: {d}"))
            .collect::<Vec<_>>()
            .join("\n");
        super::render_environment_description(&rooms, &actions, &self.task)
    }
}
