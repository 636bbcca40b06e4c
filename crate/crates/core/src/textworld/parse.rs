//! Template matching from free-text actions to world actions.

use super::spec::WorldSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Teleport(usize),
    GoTo(usize),
    Look,
    Inventory,
    Focus(usize),
    PickUp(usize),
    Move(usize, usize),
    Pour(usize, usize),
    Activate(usize),
    Deactivate(usize),
    Examine(usize),
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedAction {
    Action(Action),
    /// No template starts the input.
    NoMatch,
    /// A known template whose slots do not bind, or an unsupported
    /// combination.
    Unsupported,
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
        .trim_end_matches(['.', '!'])
        .to_string()
}

fn strip_article(s: &str) -> &str {
    s.strip_prefix("the ").unwrap_or(s).trim()
}

fn room(spec: &WorldSpec, name: &str) -> Option<usize> {
    let name = strip_article(name);
    spec.rooms.iter().position(|r| r.name.eq_ignore_ascii_case(name))
}

pub(crate) fn object(spec: &WorldSpec, name: &str) -> Option<usize> {
    let name = strip_article(name);
    spec.objects.iter().position(|o| {
        o.name.eq_ignore_ascii_case(name)
            || o.display_name().eq_ignore_ascii_case(name)
            || o.aliases.iter().any(|a| a.eq_ignore_ascii_case(name))
    })
}

/// Splits `rest` at some occurrence of `sep` so both sides name objects.
fn two_objects(spec: &WorldSpec, rest: &str, sep: &str) -> Option<(usize, usize)> {
    rest.match_indices(sep).find_map(|(i, _)| {
        let a = object(spec, &rest[..i])?;
        let b = object(spec, &rest[i + sep.len()..])?;
        Some((a, b))
    })
}

fn bind<T>(slot: Option<T>, f: impl FnOnce(T) -> Action) -> ParsedAction {
    slot.map_or(ParsedAction::Unsupported, |v| ParsedAction::Action(f(v)))
}

/// Case-insensitive template match with slot binding against the world's
/// rooms and objects. Reachability is checked later, when stepping.
pub fn parse_action(text: &str, spec: &WorldSpec) -> ParsedAction {
    let t = normalize(text);
    match t.as_str() {
        "look around" | "look" => return ParsedAction::Action(Action::Look),
        "inventory" => return ParsedAction::Action(Action::Inventory),
        "wait" | "wait1" => return ParsedAction::Action(Action::Wait),
        _ => {}
    }
    let one_object: [(&str, fn(usize) -> Action); 7] = [
        ("focus on ", Action::Focus),
        ("pick up ", Action::PickUp),
        ("examine ", Action::Examine),
        ("look at ", Action::Examine),
        ("activate ", Action::Activate),
        ("deactivate ", Action::Deactivate),
        ("turn on ", Action::Activate),
    ];
    if let Some(rest) = t.strip_prefix("teleport to ") {
        return bind(room(spec, rest), Action::Teleport);
    }
    if let Some(rest) = t.strip_prefix("go to ") {
        return bind(room(spec, rest), Action::GoTo);
    }
    if let Some(rest) = t.strip_prefix("turn off ") {
        return bind(object(spec, rest), Action::Deactivate);
    }
    for (prefix, make) in one_object {
        if let Some(rest) = t.strip_prefix(prefix) {
            return bind(object(spec, rest), make);
        }
    }
    if let Some(rest) = t.strip_prefix("move ") {
        return bind(two_objects(spec, rest, " to "), |(a, b)| Action::Move(a, b));
    }
    if let Some(rest) = t.strip_prefix("pour ") {
        return bind(two_objects(spec, rest, " into "), |(a, b)| Action::Pour(a, b));
    }
    if t.starts_with("use ") {
        // recognised, but no device in MiniLab is used this way
        return ParsedAction::Unsupported;
    }
    ParsedAction::NoMatch
}
