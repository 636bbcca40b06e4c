//! Step-by-step solution grammar and the rule-based verifier.
//!
//! A response is expected to contain three step lines of the form
//! `StepN: a op b = c (left: ...)` followed by an `Answer:` line holding an
//! expression over the four inputs. Markers are located anywhere in the text,
//! so single-line responses wrapped in `<answer>**Response** ... </answer>`
//! parse the same as the multi-line demonstration format.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::expr::{format_operand, format_rational, parse_expr, parse_rational, EvalError, ExprNode, Op, Rational};
use super::Game24Error;

pub const TARGET: i64 = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Game24Step {
    pub lhs: Rational,
    pub op: Op,
    pub rhs: Rational,
    pub result: Rational,
    /// The `left:` multiset as written by the model.
    pub remaining: Vec<Rational>,
    /// Canonical text of the step, from the marker through `(left: ...)`.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Game24Solution {
    pub steps: Vec<Game24Step>,
    pub answer_expr: ExprNode,
    pub answer_text: String,
}

/// The four reward positions of a solution, as raw text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Segments {
    pub steps: [Option<String>; 3],
    pub answer: Option<String>,
}

impl Segments {
    /// `(label, text)` pairs for Step1..Step3 and Answer.
    pub fn positions(&self) -> Vec<(String, Option<String>)> {
        let mut out: Vec<(String, Option<String>)> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("Step{}", i + 1), s.clone()))
            .collect();
        out.push(("Answer".to_string(), self.answer.clone()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum InvalidReason {
    MultisetMismatch,
    OperandNotAvailable { step: usize },
    StepArithmetic { step: usize },
    RemainingMismatch { step: usize },
    NotSingleRemaining,
    DivZero,
    Overflow,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidReason::MultisetMismatch => {
                write!(f, "answer does not use each input number exactly once")
            }
            InvalidReason::OperandNotAvailable { step } => {
                write!(f, "step {step} uses a number that is not available")
            }
            InvalidReason::StepArithmetic { step } => write!(f, "step {step} is arithmetically wrong"),
            InvalidReason::RemainingMismatch { step } => {
                write!(f, "step {step} lists the wrong remaining numbers")
            }
            InvalidReason::NotSingleRemaining => write!(f, "steps do not reduce to a single number"),
            InvalidReason::DivZero => write!(f, "division by zero"),
            InvalidReason::Overflow => write!(f, "arithmetic overflow"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid24,
    ValidButNot24 { value: Rational },
    Invalid(InvalidReason),
}

impl Verdict {
    pub fn is_success(&self) -> bool {
        matches!(self, Verdict::Valid24)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid24 => write!(f, "valid24"),
            Verdict::ValidButNot24 { value } => {
                write!(f, "valid_but_not_24 (value {})", format_rational(*value))
            }
            Verdict::Invalid(reason) => write!(f, "invalid ({reason})"),
        }
    }
}

fn step_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bstep\s*([1-9])\s*:").unwrap())
}

fn answer_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\**\banswer\b\**\s*:\s*\**").unwrap())
}

fn left_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\(\s*left\s*:?").unwrap())
}

/// Drops everything up to the last `</think>` so long reasoning traces do not
/// shadow the final answer.
fn final_section(text: &str) -> &str {
    match text.rfind("</think>") {
        Some(i) => &text[i + "</think>".len()..],
        None => text,
    }
}

struct Located<'a> {
    steps: [Option<&'a str>; 3],
    answer: Option<&'a str>,
}

fn locate(text: &str) -> Located<'_> {
    let markers: Vec<(usize, usize, usize)> = step_marker()
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(0)?;
            let n: usize = c[1].parse().ok()?;
            Some((m.start(), m.end(), n))
        })
        .collect();
    let mut chosen: [Option<(usize, usize)>; 3] = [None; 3];
    let mut cursor = 0;
    if let Some(first) = markers.iter().rposition(|m| m.2 == 1) {
        chosen[0] = Some((markers[first].0, markers[first].1));
        cursor = markers[first].1;
        for n in 2..=3 {
            if let Some(m) = markers.iter().find(|m| m.2 == n && m.0 >= cursor) {
                chosen[n - 1] = Some((m.0, m.1));
                cursor = m.1;
            }
        }
    }
    let answer_start = answer_marker()
        .find_iter(text)
        .filter(|m| m.start() >= cursor)
        .map(|m| (m.start(), m.end()))
        .next();

    // a segment runs to the next marker of any kind
    let mut boundaries: Vec<usize> = markers.iter().map(|m| m.0).collect();
    if let Some((s, _)) = answer_start {
        boundaries.push(s);
    }
    boundaries.sort_unstable();
    let next_boundary = |pos: usize| {
        boundaries
            .iter()
            .copied()
            .find(|&b| b > pos)
            .unwrap_or(text.len())
    };

    let mut steps = [None; 3];
    for (i, c) in chosen.iter().enumerate() {
        if let Some((start, _)) = c {
            steps[i] = Some(text[*start..next_boundary(*start)].trim());
        }
    }
    let answer = answer_start.map(|(_, body)| {
        let rest = &text[body..];
        let end = [rest.find('\n'), rest.find("</answer>")]
            .into_iter()
            .flatten()
            .min()
            .unwrap_or(rest.len());
        rest[..end].trim()
    });
    Located { steps, answer }
}

/// Splits a response into its Step1..Step3 and Answer texts without checking
/// any arithmetic. Missing positions are `None`.
pub fn extract_segments(text: &str) -> Segments {
    let text = final_section(text);
    let located = locate(text);
    let mut segments = Segments::default();
    for (i, raw) in located.steps.iter().enumerate() {
        segments.steps[i] = raw.map(|s| canonical_step_text(s).to_string());
    }
    segments.answer = located
        .answer
        .filter(|a| !a.trim_matches('*').trim().is_empty())
        .map(|a| format!("**Answer**: {}", a.trim_matches('*').trim()));
    segments
}

/// Cuts a step segment after its `(left: ...)` group, or at the first line
/// break when there is none.
fn canonical_step_text(raw: &str) -> &str {
    if let Some(m) = left_marker().find(raw) {
        if let Some(close) = raw[m.end()..].find(')') {
            return raw[..m.end() + close + 1].trim();
        }
    }
    raw.lines().next().unwrap_or("").trim()
}

fn parse_step(raw: &str) -> Result<Game24Step, Game24Error> {
    let text = canonical_step_text(raw).to_string();
    let body = step_marker()
        .find(&text)
        .map(|m| &text[m.end()..])
        .ok_or_else(|| Game24Error::malformed(&text, "missing step marker"))?;
    let left = left_marker()
        .find(body)
        .ok_or_else(|| Game24Error::malformed(&text, "missing (left: ...)"))?;
    let arithmetic = &body[..left.start()];
    let close = body[left.end()..]
        .find(')')
        .ok_or_else(|| Game24Error::malformed(&text, "unterminated (left: ...)"))?;
    let left_list = &body[left.end()..left.end() + close];

    let (lhs_text, result_text) = arithmetic
        .split_once('=')
        .ok_or_else(|| Game24Error::malformed(&text, "missing '='"))?;
    let lhs_expr = parse_expr(lhs_text.trim())?;
    let (op, lhs, rhs) = match &lhs_expr {
        ExprNode::Node { op, left, right } => match (left.as_literal(), right.as_literal()) {
            (Some(l), Some(r)) => (*op, l, r),
            _ => {
                return Err(Game24Error::malformed(
                    &text,
                    "a step must combine exactly two numbers",
                ))
            }
        },
        ExprNode::Leaf(_) => {
            return Err(Game24Error::malformed(&text, "a step needs an operator"))
        }
    };
    let result = parse_rational(result_text.trim().trim_end_matches('.'))?;
    let remaining = left_list
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(parse_rational)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Game24Step {
        lhs,
        op,
        rhs,
        result,
        remaining,
        text,
    })
}

fn parse_answer(raw: &str) -> Result<ExprNode, Game24Error> {
    let body = raw.trim_start_matches("**Answer**:").trim();
    let expr_text = body.split('=').next().unwrap_or("").trim().trim_end_matches('.');
    if expr_text.is_empty() {
        return Err(Game24Error::malformed(raw, "empty answer"));
    }
    parse_expr(expr_text)
}

/// Parses a full solution. `inputs` fixes the expected step count
/// (one fewer than the number of inputs).
pub fn parse_solution(text: &str, inputs: &[i64]) -> Result<Game24Solution, Game24Error> {
    let expected_steps = inputs.len().saturating_sub(1);
    if expected_steps != 3 {
        return Err(Game24Error::InputCount(inputs.len()));
    }
    let segments = extract_segments(text);
    let mut steps = Vec::with_capacity(3);
    for (i, seg) in segments.steps.iter().enumerate() {
        let seg = seg.as_deref().ok_or(Game24Error::MissingStep(i + 1))?;
        steps.push(parse_step(seg)?);
    }
    let answer_text = segments.answer.ok_or(Game24Error::MissingAnswer)?;
    let answer_expr = parse_answer(&answer_text)?;
    Ok(Game24Solution {
        steps,
        answer_expr,
        answer_text,
    })
}

fn sorted(mut v: Vec<Rational>) -> Vec<Rational> {
    v.sort();
    v
}

fn take(pool: &mut Vec<Rational>, value: Rational) -> bool {
    match pool.iter().position(|x| *x == value) {
        Some(i) => {
            pool.swap_remove(i);
            true
        }
        None => false,
    }
}

fn eval_reason(e: EvalError) -> InvalidReason {
    match e {
        EvalError::DivZero => InvalidReason::DivZero,
        EvalError::Overflow => InvalidReason::Overflow,
    }
}

/// Ground-truth check: the answer uses each input exactly once, every step
/// is exact and keeps a consistent `left:` multiset, and the answer
/// evaluates to exactly 24.
pub fn verify_solution(solution: &Game24Solution, inputs: &[i64]) -> Verdict {
    let input_set = sorted(inputs.iter().map(|&n| Rational::from_integer(n)).collect());
    if sorted(solution.answer_expr.leaves()) != input_set {
        return Verdict::Invalid(InvalidReason::MultisetMismatch);
    }

    let mut pool = input_set;
    for (i, step) in solution.steps.iter().enumerate() {
        let n = i + 1;
        if !take(&mut pool, step.lhs) || !take(&mut pool, step.rhs) {
            return Verdict::Invalid(InvalidReason::OperandNotAvailable { step: n });
        }
        let value = match step.op.apply(step.lhs, step.rhs) {
            Ok(v) => v,
            Err(e) => return Verdict::Invalid(eval_reason(e)),
        };
        if value != step.result {
            return Verdict::Invalid(InvalidReason::StepArithmetic { step: n });
        }
        pool.push(value);
        if sorted(pool.clone()) != sorted(step.remaining.clone()) {
            return Verdict::Invalid(InvalidReason::RemainingMismatch { step: n });
        }
    }
    if pool.len() != 1 {
        return Verdict::Invalid(InvalidReason::NotSingleRemaining);
    }

    match solution.answer_expr.eval() {
        Err(e) => Verdict::Invalid(eval_reason(e)),
        Ok(v) if v == Rational::from_integer(TARGET) => Verdict::Valid24,
        Ok(v) => Verdict::ValidButNot24 { value: v },
    }
}

/// Parses and verifies in one go; parse failures become `Invalid`-style
/// errors for callers that only need r*.
pub fn check_response(text: &str, inputs: &[i64]) -> Result<Verdict, Game24Error> {
    let solution = parse_solution(text, inputs)?;
    Ok(verify_solution(&solution, inputs))
}

fn format_left(values: &[Rational]) -> String {
    sorted(values.to_vec())
        .into_iter()
        .map(format_rational)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes the step-by-step solution text for an expression tree over
/// `inputs`, reducing internal nodes in post-order.
pub fn solution_text(expr: &ExprNode, inputs: &[i64]) -> Result<String, EvalError> {
    let mut pool: Vec<Rational> = inputs.iter().map(|&n| Rational::from_integer(n)).collect();
    let mut lines = Vec::new();
    reduce(expr, &mut pool, &mut lines)?;
    let value = expr.eval()?;
    lines.push(format!("Answer: {} = {}", expr, format_rational(value)));
    Ok(lines.join("\n"))
}

fn reduce(expr: &ExprNode, pool: &mut Vec<Rational>, lines: &mut Vec<String>) -> Result<Rational, EvalError> {
    match expr {
        ExprNode::Leaf(v) => Ok(*v),
        ExprNode::Node { op, left, right } => {
            let l = reduce(left, pool, lines)?;
            let r = reduce(right, pool, lines)?;
            let value = op.apply(l, r)?;
            take(pool, l);
            take(pool, r);
            pool.push(value);
            lines.push(format!(
                "Step{}: {} {} {} = {} (left: {})",
                lines.len() + 1,
                format_operand(l),
                op,
                format_operand(r),
                format_rational(value),
                format_left(pool)
            ));
            Ok(value)
        }
    }
}
