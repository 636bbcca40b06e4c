//! Initial-prompt construction: attempt rendering and segment assembly.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::buffer::{AttemptRecord, ExperienceBuffer, TERMINAL_LABEL};
use super::instruction::InstructionKind;
use super::IcrlError;
use crate::task::TaskKind;
use crate::textworld::render_trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Buffer,
    Instruction,
    Task,
}

/// Order of the three prompt segments; always a permutation of all three.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct PromptLayout(Vec<Segment>);

impl PromptLayout {
    pub fn new(order: Vec<Segment>) -> Result<Self, IcrlError> {
        let mut sorted = order.clone();
        sorted.sort();
        if sorted != [Segment::Buffer, Segment::Instruction, Segment::Task] {
            return Err(IcrlError::Layout(order));
        }
        Ok(Self(order))
    }

    /// Buffer, then instruction, then task.
    pub fn buffer_first() -> Self {
        Self(vec![Segment::Buffer, Segment::Instruction, Segment::Task])
    }

    /// Task, then instruction, then buffer.
    pub fn task_first() -> Self {
        Self(vec![Segment::Task, Segment::Instruction, Segment::Buffer])
    }

    pub fn default_for(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Game24 | TaskKind::Writing => Self::buffer_first(),
            TaskKind::TextWorld => Self::task_first(),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.0
    }
}

impl TryFrom<Vec<Segment>> for PromptLayout {
    type Error = IcrlError;

    fn try_from(v: Vec<Segment>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PromptLayout> for Vec<Segment> {
    fn from(l: PromptLayout) -> Self {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: Option<String>,
    pub user_text: String,
    /// Byte range of each non-empty segment within `user_text`.
    pub segment_spans: BTreeMap<Segment, Range<usize>>,
}

impl PromptBundle {
    pub fn plain(user_text: impl Into<String>) -> Self {
        let user_text = user_text.into();
        let mut segment_spans = BTreeMap::new();
        segment_spans.insert(Segment::Task, 0..user_text.len());
        Self {
            system_text: None,
            user_text,
            segment_spans,
        }
    }

    pub fn segment(&self, segment: Segment) -> Option<&str> {
        self.segment_spans
            .get(&segment)
            .map(|r| &self.user_text[r.clone()])
    }
}

fn scalar(value: f64, zero_rewards: bool) -> String {
    format!("{:.2}", if zero_rewards { 0.0 } else { value })
}

/// Renders one buffer entry the way the task presents past attempts.
pub fn render_attempt(attempt: &AttemptRecord, kind: TaskKind, zero_rewards: bool) -> Result<String, IcrlError> {
    attempt.validate(kind)?;
    let out = match kind {
        TaskKind::Game24 => {
            let mut lines = vec!["<attempt>".to_string()];
            lines.extend(attempt.header.clone());
            lines.push("**Response:**".to_string());
            for r in &attempt.rewards {
                let text = if r.text.is_empty() {
                    format!("{}:", r.label)
                } else {
                    r.text.clone()
                };
                lines.push(format!("{text} <**Reward**: {}>", scalar(r.value, zero_rewards)));
            }
            lines.push("</attempt>".to_string());
            lines.join("\n")
        }
        TaskKind::Writing => {
            let mut lines = vec!["<attempt>".to_string()];
            lines.extend(attempt.header.clone());
            lines.push("**Response:**".to_string());
            lines.push(attempt.response_text.trim().to_string());
            lines.push(format!("Reward: {}", scalar(attempt.rewards[0].value, zero_rewards)));
            lines.push("</attempt>".to_string());
            lines.join("\n")
        }
        TaskKind::TextWorld => {
            let (terminal, steps) = attempt
                .rewards
                .split_last()
                .expect("validated: terminal entry present");
            debug_assert_eq!(terminal.label, TERMINAL_LABEL);
            let zeroed = |v: f64| if zero_rewards { 0 } else { v.round() as i64 };
            let steps: Vec<(String, i64)> = steps.iter().map(|r| (r.text.clone(), zeroed(r.value))).collect();
            render_trajectory(
                attempt.episode_index,
                &steps,
                &terminal.text,
                zeroed(terminal.value),
                zeroed(attempt.total_reward),
            )
        }
    };
    Ok(out)
}

fn render_buffer(buffer: &ExperienceBuffer, kind: TaskKind, zero_rewards: bool) -> Result<String, IcrlError> {
    if buffer.is_empty() {
        return Ok(String::new());
    }
    let blocks = buffer
        .iter()
        .map(|a| render_attempt(a, kind, zero_rewards))
        .collect::<Result<Vec<_>, _>>()?;
    let body = blocks.join("\n\n");
    Ok(match kind {
        TaskKind::TextWorld => format!("<Attempts>\n{body}\n</Attempts>"),
        _ => body,
    })
}

fn render_instruction(instruction: InstructionKind, kind: TaskKind) -> String {
    match (instruction.template(), kind) {
        (None, _) => String::new(),
        (Some(t), TaskKind::TextWorld) => format!("<Instruction>\n{t}\n</Instruction>"),
        (Some(t), _) => t.to_string(),
    }
}

/// Concatenates the non-empty segments in layout order, separated by a
/// blank line. With an empty buffer and no instruction the result is
/// exactly `task_text`.
pub fn assemble_prompt(
    buffer: &ExperienceBuffer,
    task_text: &str,
    instruction: InstructionKind,
    layout: &PromptLayout,
    zero_rewards: bool,
    kind: TaskKind,
) -> Result<PromptBundle, IcrlError> {
    let mut pieces = BTreeMap::new();
    pieces.insert(Segment::Buffer, render_buffer(buffer, kind, zero_rewards)?);
    pieces.insert(Segment::Instruction, render_instruction(instruction, kind));
    pieces.insert(Segment::Task, task_text.to_string());

    let mut user_text = String::new();
    let mut segment_spans = BTreeMap::new();
    for seg in layout.segments() {
        let piece = &pieces[seg];
        if piece.is_empty() {
            continue;
        }
        if !user_text.is_empty() {
            user_text.push_str("\n\n");
        }
        let start = user_text.len();
        user_text.push_str(piece);
        segment_spans.insert(*seg, start..user_text.len());
    }
    Ok(PromptBundle {
        system_text: None,
        user_text,
        segment_spans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icrl::buffer::{PositionedReward, GAME24_POSITIONS};
    use crate::icrl::inspect;

    fn game24_attempt(i: u32, values: [f64; 4]) -> AttemptRecord {
        let texts = [
            "Step1: 10 - 4 = 6 (left: 6 9 13)",
            "Step2: 13 - 6 = 7 (left: 7 9)",
            "Step3: 9 * 7 = 63 (left: 63)",
            "**Answer**: (13 - (10 - 4)) * 9  = 63",
        ];
        let rewards = GAME24_POSITIONS
            .iter()
            .zip(values)
            .zip(texts)
            .map(|((l, v), t)| PositionedReward::new(*l, v, t))
            .collect();
        AttemptRecord::new(i, texts.join("\n"), rewards).with_header("**Input:** 4 9 10 13.")
    }

    #[test]
    fn game24_block_matches_figure_layout() {
        let block = render_attempt(&game24_attempt(1, [3.0, 0.0, 0.0, 3.0]), TaskKind::Game24, false).unwrap();
        let expected = "<attempt>\n\
**Input:** 4 9 10 13.\n\
**Response:**\n\
Step1: 10 - 4 = 6 (left: 6 9 13) <**Reward**: 3.00>\n\
Step2: 13 - 6 = 7 (left: 7 9) <**Reward**: 0.00>\n\
Step3: 9 * 7 = 63 (left: 63) <**Reward**: 0.00>\n\
**Answer**: (13 - (10 - 4)) * 9  = 63 <**Reward**: 3.00>\n\
</attempt>";
        assert_eq!(block, expected);
    }

    #[test]
    fn zero_rewards_render_zeros() {
        let block = render_attempt(&game24_attempt(1, [3.0, 1.0, 0.0, 3.0]), TaskKind::Game24, true).unwrap();
        assert!(inspect::rendered_scalars(&block).iter().all(|&v| v == 0.0));
        assert_eq!(block.matches("<**Reward**: 0.00>").count(), 4);
    }

    #[test]
    fn reward_count_mismatch_is_structural_error() {
        let mut a = game24_attempt(1, [3.0, 0.0, 0.0, 3.0]);
        a.rewards.pop();
        assert!(matches!(
            render_attempt(&a, TaskKind::Game24, false),
            Err(IcrlError::RewardPositions { .. })
        ));
    }

    #[test]
    fn writing_block() {
        let a = AttemptRecord::new(1, "Plan: x\nPassage: y", vec![PositionedReward::new("passage", 7.0, "")]);
        let block = render_attempt(&a, TaskKind::Writing, false).unwrap();
        assert!(block.ends_with("Reward: 7.00\n</attempt>"));
    }

    #[test]
    fn textworld_block_totals() {
        let a = AttemptRecord::new(
            4,
            "teleport to bathroom\nfocus on water",
            vec![
                PositionedReward::new("step1", 3.0, "teleport to bathroom -> Observation: You teleport to the bathroom."),
                PositionedReward::new("step2", 66.0, "focus on water -> Observation: You focus on the water."),
                PositionedReward::new(TERMINAL_LABEL, 2.0, "Task Failed. You have exceeded the maximum number of steps."),
            ],
        );
        let block = render_attempt(&a, TaskKind::TextWorld, false).unwrap();
        assert!(block.starts_with("Attempt 4:\n"));
        assert!(block.ends_with("Total reward: 71"), "{block}");
        let zero = render_attempt(&a, TaskKind::TextWorld, true).unwrap();
        assert!(zero.ends_with("Total reward: 0"));
        assert!(inspect::rendered_scalars(&zero).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_context_is_identity() {
        let b = ExperienceBuffer::unbounded();
        let p = assemble_prompt(&b, "TASK", InstructionKind::None, &PromptLayout::buffer_first(), false, TaskKind::Game24).unwrap();
        assert_eq!(p.user_text, "TASK");
        assert_eq!(p.segment(Segment::Task), Some("TASK"));
        assert!(p.segment(Segment::Buffer).is_none());
    }

    #[test]
    fn segment_order_and_spans() {
        let mut b = ExperienceBuffer::unbounded();
        for i in 1..=3 {
            b.push(game24_attempt(i, [3.0, 0.0, 0.0, 0.0])).unwrap();
        }
        let p = assemble_prompt(&b, "TASK", InstructionKind::Exploitation, &PromptLayout::buffer_first(), false, TaskKind::Game24).unwrap();
        let buf = p.segment_spans[&Segment::Buffer].clone();
        let ins = p.segment_spans[&Segment::Instruction].clone();
        let task = p.segment_spans[&Segment::Task].clone();
        assert!(buf.end <= ins.start && ins.end <= task.start);
        assert_eq!(p.segment(Segment::Task), Some("TASK"));
        assert_eq!(inspect::rewarded_attempts(p.segment(Segment::Buffer).unwrap()).len(), 3);
        assert!(p.user_text.ends_with("achieve higher rewards.\n\nTASK"));
    }

    #[test]
    fn short_context_renders_newest() {
        let mut b = ExperienceBuffer::with_capacity(Some(3)).unwrap();
        for i in 1..=5 {
            b.push(game24_attempt(i, [3.0, 0.0, 0.0, 0.0])).unwrap();
        }
        let p = assemble_prompt(&b, "TASK", InstructionKind::None, &PromptLayout::buffer_first(), false, TaskKind::Game24).unwrap();
        assert_eq!(inspect::rewarded_attempts(&p.user_text).len(), 3);
    }

    #[test]
    fn layout_must_be_a_permutation() {
        assert!(PromptLayout::new(vec![Segment::Task, Segment::Task, Segment::Buffer]).is_err());
        assert!(PromptLayout::new(vec![Segment::Task, Segment::Buffer]).is_err());
        assert!(PromptLayout::new(vec![Segment::Instruction, Segment::Task, Segment::Buffer]).is_ok());
    }
}
