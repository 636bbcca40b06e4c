//! MiniLab state and transition function.

use serde::{Deserialize, Serialize};

use super::parse::{parse_action, Action, ParsedAction};
use super::spec::{Matter, Predicate, WorldSpec};
use super::WorldError;

pub const NO_MATCH: &str = "No known action matches that input.";
pub const NOT_SURE: &str = "I'm not sure how to do that.";
pub const FAIL_STEPS_LINE: &str = "Task Failed. You have exceeded the maximum number of steps.";
pub const FAIL_FOCUS_LINE: &str = "Task Failed. Focus was used on the wrong object or too many times.";
pub const SUCCESS_LINE: &str = "Task Completed.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Success,
    FailSteps,
    FailFocus,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Success => "success",
            Status::FailSteps => "fail_steps",
            Status::FailFocus => "fail_focus",
        }
    }

    pub fn terminal_line(self) -> Option<&'static str> {
        match self {
            Status::Running => None,
            Status::Success => Some(SUCCESS_LINE),
            Status::FailSteps => Some(FAIL_STEPS_LINE),
            Status::FailFocus => Some(FAIL_FOCUS_LINE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Room(usize),
    Inside(usize),
    Inventory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub location: Location,
    pub active: bool,
    pub matter: Option<Matter>,
    pub temperature: Option<i32>,
    pub stage: usize,
    pub growth_progress: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent_room: usize,
    pub objects: Vec<ObjectState>,
    pub fired: Vec<bool>,
    pub focused: Vec<usize>,
    pub steps_taken: u32,
    pub focus_used: u32,
    pub status: Status,
    pub total_reward: u32,
}

/// What one step produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub observation: String,
    pub reward: u32,
    pub terminated: bool,
    /// False when the action named something out of reach; such
    /// observations are shown without the `Observation:` prefix.
    pub matched: bool,
}

impl ActionOutcome {
    /// `action -> Observation: ...` as it appears in trajectories.
    pub fn transcript(&self, action: &str) -> String {
        transcript(action, &self.observation, self.matched)
    }
}

pub fn transcript(action: &str, observation: &str, matched: bool) -> String {
    if matched {
        format!("{action} -> Observation: {observation}")
    } else {
        format!("{action} -> {observation}")
    }
}

impl WorldState {
    pub fn initial(spec: &WorldSpec) -> Self {
        let objects = spec
            .objects
            .iter()
            .map(|o| ObjectState {
                location: if o.location == "inventory" {
                    Location::Inventory
                } else if let Some(r) = spec.room_index(&o.location) {
                    Location::Room(r)
                } else {
                    Location::Inside(spec.object_index(&o.location).expect("validated location"))
                },
                active: o.active,
                matter: o.matter,
                temperature: o.temperature,
                stage: 0,
                growth_progress: 0,
            })
            .collect();
        Self {
            agent_room: spec.room_index(&spec.start_room).expect("validated start room"),
            objects,
            fired: vec![false; spec.subgoals.len()],
            focused: Vec::new(),
            steps_taken: 0,
            focus_used: 0,
            status: Status::Running,
            total_reward: 0,
        }
    }

    /// The room or inventory an object ultimately sits in.
    fn root(&self, obj: usize) -> Location {
        let mut loc = self.objects[obj].location;
        while let Location::Inside(p) = loc {
            loc = self.objects[p].location;
        }
        loc
    }

    fn reachable(&self, obj: usize) -> bool {
        match self.root(obj) {
            Location::Inventory => true,
            Location::Room(r) => r == self.agent_room,
            Location::Inside(_) => unreachable!(),
        }
    }

    /// Whether `obj` is inside `container`, directly or transitively.
    pub fn is_inside(&self, obj: usize, container: usize) -> bool {
        let mut loc = self.objects[obj].location;
        while let Location::Inside(p) = loc {
            if p == container {
                return true;
            }
            loc = self.objects[p].location;
        }
        false
    }

    fn contents(&self, container: usize) -> Vec<usize> {
        (0..self.objects.len())
            .filter(|&i| self.objects[i].location == Location::Inside(container))
            .collect()
    }

    fn holds(&self, spec: &WorldSpec, predicate: &Predicate) -> bool {
        let obj = |name: &str| spec.object_index(name).expect("validated subgoal");
        match predicate {
            Predicate::AgentIn { room } => Some(self.agent_room) == spec.room_index(room),
            Predicate::Focused { object } => self.focused.contains(&obj(object)),
            Predicate::Inside { object, container } => self.is_inside(obj(object), obj(container)),
            Predicate::Matter { object, state } => self.objects[obj(object)].matter == Some(*state),
            Predicate::Active { object } => self.objects[obj(object)].active,
            Predicate::Stage { object, stage } => {
                let i = obj(object);
                let want = spec.objects[i]
                    .growth
                    .as_ref()
                    .and_then(|g| g.stages.iter().position(|s| s == stage))
                    .expect("validated stage");
                self.objects[i].stage >= want
            }
            Predicate::InInventory { object } => self.objects[obj(object)].location == Location::Inventory,
        }
    }
}

fn name(spec: &WorldSpec, obj: usize) -> &str {
    spec.objects[obj].display_name()
}

fn list(spec: &WorldSpec, objs: &[usize]) -> String {
    if objs.is_empty() {
        "nothing".to_string()
    } else {
        objs.iter().map(|&o| format!("a {}", name(spec, o))).collect::<Vec<_>>().join(", ")
    }
}

fn describe(spec: &WorldSpec, state: &WorldState, obj: usize) -> String {
    let o = &spec.objects[obj];
    let mut text = o.description.clone().unwrap_or_else(|| format!("a {}", o.display_name()));
    if let Some(m) = state.objects[obj].matter {
        text.push_str(&format!(", which is {}", m.name()));
    }
    if let Some(g) = &o.growth {
        text.push_str(&format!(" (stage: {})", g.stages[state.objects[obj].stage]));
    }
    if o.activatable {
        text.push_str(if state.objects[obj].active { ", which is on" } else { ", which is off" });
    }
    if o.container {
        text.push_str(&format!(" (containing {})", list(spec, &state.contents(obj))));
    }
    text
}

fn apply(spec: &WorldSpec, state: &mut WorldState, action: Action) -> Result<String, String> {
    let out_of_reach = |o: usize, s: &WorldState| !s.reachable(o);
    Ok(match action {
        Action::Teleport(r) => {
            state.agent_room = r;
            format!("You teleport to the {}.", spec.rooms[r].name)
        }
        Action::GoTo(r) => {
            let here = &spec.rooms[state.agent_room];
            if r == state.agent_room {
                format!("You are already in the {}.", here.name)
            } else if here.adjacent.contains(&spec.rooms[r].name) {
                state.agent_room = r;
                format!("You move to the {}.", spec.rooms[r].name)
            } else {
                format!("You can't get to the {} from here.", spec.rooms[r].name)
            }
        }
        Action::Look => {
            let room = &spec.rooms[state.agent_room];
            let here: Vec<usize> = (0..state.objects.len())
                .filter(|&i| state.objects[i].location == Location::Room(state.agent_room))
                .collect();
            let seen = here.iter().map(|&o| describe(spec, state, o)).collect::<Vec<_>>().join(", ");
            format!(
                "This room is called the {}. In it, you see: {}. You also see doors to: {}.",
                room.name,
                if seen.is_empty() { "nothing" } else { &seen },
                room.adjacent.join(", ")
            )
        }
        Action::Inventory => {
            let held: Vec<usize> = (0..state.objects.len())
                .filter(|&i| state.objects[i].location == Location::Inventory)
                .collect();
            format!("In your inventory, you see: {}.", list(spec, &held))
        }
        Action::Focus(o) | Action::PickUp(o) | Action::Activate(o) | Action::Deactivate(o) | Action::Examine(o)
            if out_of_reach(o, state) =>
        {
            return Err(String::new())
        }
        Action::Move(a, b) | Action::Pour(a, b) if out_of_reach(a, state) || out_of_reach(b, state) => {
            return Err(String::new())
        }
        Action::Focus(o) => {
            state.focus_used += 1;
            if !spec.focus_targets.iter().any(|t| spec.object_index(t) == Some(o)) || state.focus_used > spec.focus_budget {
                state.status = Status::FailFocus;
            } else {
                state.focused.push(o);
            }
            format!("You focus on the {}.", name(spec, o))
        }
        Action::PickUp(o) => {
            let n = name(spec, o);
            if state.objects[o].location == Location::Inventory {
                format!("You already have the {n}.")
            } else if !spec.objects[o].portable {
                format!("You can't pick up the {n}.")
            } else {
                state.objects[o].location = Location::Inventory;
                format!("You move the {n} to the inventory.")
            }
        }
        Action::Move(a, b) => move_into(spec, state, &[a], b, "move"),
        Action::Pour(a, b) => {
            if spec.objects[a].container {
                let contents = state.contents(a);
                if contents.is_empty() {
                    format!("The {} is empty.", name(spec, a))
                } else {
                    move_into(spec, state, &contents, b, "pour")
                }
            } else if state.objects[a].matter == Some(Matter::Liquid) {
                move_into(spec, state, &[a], b, "pour")
            } else {
                format!("You can't pour the {}.", name(spec, a))
            }
        }
        Action::Activate(o) | Action::Deactivate(o) => {
            let on = matches!(action, Action::Activate(_));
            let (verb, n) = (if on { "activated" } else { "deactivated" }, name(spec, o));
            if !spec.objects[o].activatable {
                format!("You can't {} the {n}.", if on { "activate" } else { "deactivate" })
            } else if state.objects[o].active == on {
                format!("The {n} is already {verb}.")
            } else {
                state.objects[o].active = on;
                format!("The {n} is now {verb}.")
            }
        }
        Action::Examine(o) => describe(spec, state, o),
        Action::Wait => "Time passes.".to_string(),
    })
}

fn move_into(spec: &WorldSpec, state: &mut WorldState, objs: &[usize], dest: usize, verb: &str) -> String {
    let d = name(spec, dest);
    if !spec.objects[dest].container {
        return format!("You can't put things into the {d}.");
    }
    for &o in objs {
        let movable = spec.objects[o].portable || state.objects[o].matter == Some(Matter::Liquid);
        if o == dest || state.is_inside(dest, o) || !movable {
            return format!("You can't {verb} the {} into the {d}.", name(spec, o));
        }
    }
    for &o in objs {
        state.objects[o].location = Location::Inside(dest);
    }
    let moved = objs.iter().map(|&o| name(spec, o)).collect::<Vec<_>>().join(" and ");
    let mut text = if verb == "pour" {
        format!("You pour the {moved} into the {d}.")
    } else {
        format!("You move the {moved} to the {d}.")
    };
    if let Some(r) = &spec.objects[dest].on_receive {
        for &o in objs {
            text.push(' ');
            text.push_str(&r.replace("{object}", name(spec, o)));
        }
    }
    text
}

/// One tick of physics: heating, phase changes, growth. Returns event text.
fn tick(spec: &WorldSpec, state: &mut WorldState) -> Vec<String> {
    let mut events = Vec::new();
    for src in 0..state.objects.len() {
        let heat = spec.objects[src].heat_per_tick;
        if heat == 0 || !state.objects[src].active {
            continue;
        }
        for o in 0..state.objects.len() {
            if state.is_inside(o, src) {
                if let Some(t) = state.objects[o].temperature.as_mut() {
                    *t += heat;
                }
            }
        }
    }
    for (o, os) in state.objects.iter_mut().enumerate() {
        let (Some(m), Some(t)) = (os.matter, os.temperature) else {
            continue;
        };
        let spec_o = &spec.objects[o];
        let next = if t >= spec_o.boiling_point {
            Matter::Gas
        } else if t <= spec_o.freezing_point {
            Matter::Solid
        } else {
            Matter::Liquid
        };
        if next != m {
            os.matter = Some(next);
            let verb = match next {
                Matter::Gas => "boils into a gas",
                Matter::Solid => "freezes solid",
                Matter::Liquid => "becomes liquid",
            };
            events.push(format!("The {} {verb}.", spec_o.display_name()));
        }
    }
    for o in 0..state.objects.len() {
        let Some(g) = &spec.objects[o].growth else {
            continue;
        };
        if state.objects[o].stage + 1 >= g.stages.len() {
            continue;
        }
        let Location::Inside(parent) = state.objects[o].location else {
            continue;
        };
        let needs = spec.object_index(&g.needs).expect("validated growth");
        if state.objects[needs].location != Location::Inside(parent) {
            continue;
        }
        let os = &mut state.objects[o];
        os.growth_progress += 1;
        if os.growth_progress >= g.ticks_per_stage {
            os.growth_progress = 0;
            os.stage += 1;
            events.push(format!("The {} grows into a {}.", spec.objects[o].display_name(), g.stages[os.stage]));
        }
    }
    events
}

/// Applies one free-text action. Every action, matched or not, consumes a
/// step and a tick.
pub fn step_world(state: &WorldState, action_text: &str, spec: &WorldSpec) -> Result<(WorldState, ActionOutcome), WorldError> {
    if state.status != Status::Running {
        return Err(WorldError::Terminated(state.status));
    }
    let mut next = state.clone();
    let (mut observation, matched) = match parse_action(action_text, spec) {
        ParsedAction::NoMatch => (NO_MATCH.to_string(), true),
        ParsedAction::Unsupported => (NOT_SURE.to_string(), true),
        ParsedAction::Action(a) => match apply(spec, &mut next, a) {
            Ok(obs) => (obs, true),
            Err(_) => (
                format!("Your generated action \"{}\" cannot be matched to a valid action.", action_text.trim()),
                false,
            ),
        },
    };
    next.steps_taken += 1;

    let mut reward = 0;
    if next.status == Status::FailFocus {
        // absorbing: nothing fires on the failing step
    } else {
        let events = tick(spec, &mut next);
        if !events.is_empty() {
            observation.push(' ');
            observation.push_str(&events.join(" "));
        }
        for (i, goal) in spec.subgoals.iter().enumerate() {
            if !next.fired[i] && next.holds(spec, &goal.when) {
                next.fired[i] = true;
                reward += goal.reward;
            }
        }
        next.total_reward += reward;
        if next.fired.iter().all(|&f| f) {
            next.status = Status::Success;
        } else if next.steps_taken >= spec.max_steps {
            next.status = Status::FailSteps;
        }
    }
    let terminated = next.status != Status::Running;
    Ok((
        next,
        ActionOutcome {
            observation,
            reward,
            terminated,
            matched,
        },
    ))
}

/// A stateful MiniLab episode.
#[derive(Debug, Clone)]
pub struct MiniLab {
    spec: std::sync::Arc<WorldSpec>,
    state: WorldState,
}

impl MiniLab {
    pub fn new(spec: std::sync::Arc<WorldSpec>) -> Self {
        let state = WorldState::initial(&spec);
        Self { spec, state }
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = WorldState::initial(&self.spec);
    }

    pub fn step(&mut self, action: &str) -> Result<ActionOutcome, WorldError> {
        let (next, outcome) = step_world(&self.state, action, &self.spec)?;
        self.state = next;
        Ok(outcome)
    }
}
