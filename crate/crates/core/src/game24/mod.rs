//! Game of 24: problems, the solution grammar, the exact verifier (r*),
//! the solvability oracle and the 0-3 step judge (r).

pub mod expr;
pub mod judge;
pub mod oracle;
pub mod solution;
mod task;

use std::path::Path;

use thiserror::Error;

pub use expr::{ExprNode, Op, Rational};
pub use judge::{parse_judge_score, render_step_judge_prompt, JudgeScore, LlmStepJudge, OracleStepJudge, StepJudge};
pub use oracle::{reachable, solvable_ints, solvable_oracle};
pub use solution::{check_response, parse_solution, solution_text, verify_solution, Game24Solution, Game24Step, Verdict};
pub use task::Game24Task;

const TASK_TEMPLATE: &str = include_str!("../../templates/game24_task.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Game24Error {
    #[error("malformed {text:?}: {reason}")]
    Malformed { text: String, reason: String },
    #[error("expected 4 input numbers, got {0}")]
    InputCount(usize),
    #[error("missing Step{0}")]
    MissingStep(usize),
    #[error("missing Answer line")]
    MissingAnswer,
    #[error("no `**Answer**: <score>` in judge output")]
    NoJudgeScore,
    #[error("judge score {0} outside 0..=3")]
    JudgeScoreRange(i64),
    #[error("a judged step needs at least one remaining number")]
    EmptyRemaining,
    #[error("cannot read problem file {0}")]
    Io(String),
    #[error("problem file line {line}: {reason}")]
    ProblemFile { line: usize, reason: String },
}

impl Game24Error {
    pub fn malformed(text: impl Into<String>, reason: impl Into<String>) -> Self {
        Game24Error::Malformed {
            text: text.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game24Problem {
    pub problem_id: String,
    pub inputs: [i64; 4],
}

impl Game24Problem {
    pub fn new(problem_id: impl Into<String>, inputs: [i64; 4]) -> Self {
        Self {
            problem_id: problem_id.into(),
            inputs,
        }
    }

    /// `4 9 10 13`
    pub fn input_text(&self) -> String {
        self.inputs.map(|n| n.to_string()).join(" ")
    }

    /// s_task: five worked demonstrations, the output-format instruction and
    /// this problem's input.
    pub fn render_task(&self) -> String {
        TASK_TEMPLATE.trim_end().replace("{input}", &self.input_text())
    }
}

/// Parses a problem list: one problem per line as four integers separated
/// by whitespace. Blank lines and `#` comments are skipped. Problem ids are
/// `game24-NNN` by position.
pub fn parse_problems(text: &str) -> Result<Vec<Game24Problem>, Game24Error> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Game24Error::ProblemFile {
                line: i + 1,
                reason: e.to_string(),
            })?;
        let inputs: [i64; 4] = nums.as_slice().try_into().map_err(|_| Game24Error::ProblemFile {
            line: i + 1,
            reason: format!("expected 4 numbers, got {}", nums.len()),
        })?;
        if inputs.iter().any(|&n| n <= 0) {
            return Err(Game24Error::ProblemFile {
                line: i + 1,
                reason: "numbers must be positive".into(),
            });
        }
        out.push(Game24Problem::new(format!("game24-{:03}", out.len() + 1), inputs));
    }
    Ok(out)
}

pub fn load_problems(path: &Path) -> Result<Vec<Game24Problem>, Game24Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Game24Error::Io(format!("{}: {e}", path.display())))?;
    parse_problems(&text)
}

/// The problem set shipped with the crate.
pub fn builtin_problems() -> Vec<Game24Problem> {
    parse_problems(include_str!("../../data/game24_problems.txt")).expect("shipped problems parse")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_problems_are_solvable() {
        let problems = builtin_problems();
        assert_eq!(problems.len(), 20);
        for p in &problems {
            assert!(solvable_ints(p.inputs).is_some(), "{:?}", p.inputs);
        }
    }

    #[test]
    fn task_text_ends_with_prompt_line() {
        let p = Game24Problem::new("p", [1, 8, 10, 11]);
        let text = p.render_task();
        assert!(text.ends_with("**Prompt**: Input: 1 8 10 11"));
        assert!(text.starts_with("<attempt>\nInput: 4 4 6 8\n"));
        assert_eq!(text.matches("<attempt>").count(), 5);
        assert!(text.contains("Whether it is correct or not, do not try again."));
    }

    #[test]
    fn demonstrations_verify() {
        let text = Game24Problem::new("p", [1, 1, 1, 1]).render_task();
        for block in text.split("<attempt>").skip(1) {
            let body = block.split("</attempt>").next().unwrap();
            let input_line = body.lines().find(|l| l.starts_with("Input:")).unwrap();
            let inputs: Vec<i64> = input_line[6..].split_whitespace().map(|t| t.parse().unwrap()).collect();
            assert_eq!(check_response(body, &inputs).unwrap(), Verdict::Valid24, "{body}");
        }
    }

    #[test]
    fn problem_file() {
        let ps = parse_problems("# header\n4 9 10 13\n\n1 1 1 1  # hard\n").unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].problem_id, "game24-001");
        assert_eq!(ps[1].inputs, [1, 1, 1, 1]);
        assert!(matches!(
            parse_problems("1 2 3"),
            Err(Game24Error::ProblemFile { line: 1, .. })
        ));
        assert!(parse_problems("1 2 x 4").is_err());
        assert!(parse_problems("0 2 3 4").is_err());
    }
}
