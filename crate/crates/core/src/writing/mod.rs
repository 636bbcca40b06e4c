//! Creative writing: a passage of four paragraphs with fixed end sentences,
//! rewarded by a pairwise coherence judge against one fixed base answer.

mod constraints;
mod task;

use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constraints::{check_constraints, ConstraintReport};
pub use task::{alpaca_export, AlpacaRecord, WritingTask};

const TASK_TEMPLATE: &str = include_str!("../../templates/writing_task.txt");
const JUDGE_TEMPLATE: &str = include_str!("../../templates/coherence_judge.txt");
const DEFAULT_BASE_ANSWER: &str = include_str!("../../data/base_answer.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WritingError {
    #[error("expected 4 end sentences, got {0}")]
    SentenceCount(usize),
    #[error("end sentence {0} is empty")]
    EmptySentence(usize),
    #[error("the candidate text is empty")]
    EmptyCandidate,
    #[error("no `Coherency score: <n>` in judge output")]
    NoScore,
    #[error("coherency score {0} outside 1..=10")]
    ScoreRange(i64),
    #[error("sentence pool has {0} sentences, need at least 4")]
    PoolTooSmall(usize),
    #[error("{0}")]
    Io(String),
    #[error("problem file line {line}: {reason}")]
    ProblemFile { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WritingProblem {
    pub problem_id: String,
    pub end_sentences: Vec<String>,
}

impl WritingProblem {
    pub fn new(problem_id: impl Into<String>, end_sentences: Vec<String>) -> Result<Self, WritingError> {
        let p = Self {
            problem_id: problem_id.into(),
            end_sentences,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), WritingError> {
        if self.end_sentences.len() != 4 {
            return Err(WritingError::SentenceCount(self.end_sentences.len()));
        }
        if let Some(i) = self.end_sentences.iter().position(|s| s.trim().is_empty()) {
            return Err(WritingError::EmptySentence(i + 1));
        }
        Ok(())
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// s_task with the four end sentences inlined, each collapsed to one line.
pub fn render_writing_task(problem: &WritingProblem) -> Result<String, WritingError> {
    problem.validate()?;
    let sentences = problem
        .end_sentences
        .iter()
        .map(|s| single_line(s))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(TASK_TEMPLATE.trim_end().replace("{sentences}", &sentences))
}

/// The single reference passage every candidate is compared against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseAnswer(String);

impl BaseAnswer {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into().trim().to_string())
    }

    pub fn load(path: &Path) -> Result<Self, WritingError> {
        std::fs::read_to_string(path)
            .map(Self::new)
            .map_err(|e| WritingError::Io(format!("{}: {e}", path.display())))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl Default for BaseAnswer {
    fn default() -> Self {
        Self::new(DEFAULT_BASE_ANSWER)
    }
}

pub fn render_coherence_prompt(candidate: &str, base: &BaseAnswer) -> Result<String, WritingError> {
    let candidate = candidate.trim();
    if candidate.is_empty() {
        return Err(WritingError::EmptyCandidate);
    }
    // base answer first so a candidate containing the slot name is inert
    Ok(JUDGE_TEMPLATE
        .trim_end()
        .replacen("{base_answer}", base.text(), 1)
        .replacen("{candidate}", candidate, 1))
}

fn score_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)coherency\s+score\s*:\s*\**\s*(-?\d+)").unwrap())
}

/// Last `Coherency score: n` in the judge output, n in 1..=10.
pub fn parse_coherence_score(text: &str) -> Result<u8, WritingError> {
    let caps = score_re().captures_iter(text).last().ok_or(WritingError::NoScore)?;
    let n: i64 = caps[1].parse().map_err(|_| WritingError::NoScore)?;
    if (1..=10).contains(&n) {
        Ok(n as u8)
    } else {
        Err(WritingError::ScoreRange(n))
    }
}

/// Problems file: one JSON object per line with `problem_id` and
/// `end_sentences`.
pub fn parse_problems(text: &str) -> Result<Vec<WritingProblem>, WritingError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: WritingProblem = serde_json::from_str(line).map_err(|e| WritingError::ProblemFile {
            line: i + 1,
            reason: e.to_string(),
        })?;
        p.validate().map_err(|e| WritingError::ProblemFile {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_problems(path: &Path) -> Result<Vec<WritingProblem>, WritingError> {
    let text = std::fs::read_to_string(path).map_err(|e| WritingError::Io(format!("{}: {e}", path.display())))?;
    parse_problems(&text)
}

/// The problems shipped with the crate.
pub fn builtin_problems() -> Vec<WritingProblem> {
    parse_problems(include_str!("../../data/writing_problems.jsonl")).expect("shipped problems parse")
}

/// The shipped end-sentence pool, one sentence per line.
pub fn builtin_sentence_pool() -> Vec<String> {
    parse_sentence_pool(include_str!("../../data/writing_sentences.txt"))
}

/// Non-empty, non-comment lines.
pub fn parse_sentence_pool(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Draws `count` problems of four distinct sentences each from `pool`.
pub fn sample_problems(pool: &[String], count: usize, seed: u64) -> Result<Vec<WritingProblem>, WritingError> {
    if pool.len() < 4 {
        return Err(WritingError::PoolTooSmall(pool.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let sentences = pool.choose_multiple(&mut rng, 4).cloned().collect();
            WritingProblem::new(format!("writing-s{:03}", i + 1), sentences)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_problem() -> WritingProblem {
        WritingProblem::new(
            "w",
            vec![
                "For some unfathomable reason, the response team didn't consider a lack of milk for my cereal as a proper emergency.".into(),
                "You realize you're not alone as you sit in your bedroom massaging your calves after a long day of playing tug-of-war with Grandpa Joe in the hospital.".into(),
                "He poured rocks in the dungeon of his mind.".into(),
                "I'm a living furnace.".into(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn task_text_matches_template() {
        let text = render_writing_task(&figure_problem()).unwrap();
        assert_eq!(
            text,
            "Prompt: Write a coherent passage of 4 short paragraphs. The end sentence of each paragraph must be: \
For some unfathomable reason, the response team didn't consider a lack of milk for my cereal as a proper emergency. \
You realize you're not alone as you sit in your bedroom massaging your calves after a long day of playing tug-of-war with Grandpa Joe in the hospital. \
He poured rocks in the dungeon of his mind. I'm a living furnace. Make a plan then write. \
Your output should be of the following format: Plan: Your plan here. Passage: Your passage here."
        );
    }

    #[test]
    fn sentence_count_is_checked() {
        assert_eq!(
            WritingProblem::new("w", vec!["a".into(), "b".into(), "c".into()]),
            Err(WritingError::SentenceCount(3))
        );
        assert!(WritingProblem::new("w", vec!["a".into(), " ".into(), "c".into(), "d".into()]).is_err());
    }

    #[test]
    fn newlines_are_collapsed() {
        let p = WritingProblem::new("w", vec!["one\ntwo.".into(), "b.".into(), "c.".into(), "d.".into()]).unwrap();
        assert!(render_writing_task(&p).unwrap().contains("must be: one two. b. c. d. Make"));
    }

    #[test]
    fn judge_prompt() {
        let base = BaseAnswer::default();
        assert!(base.text().starts_with("At dawn, golden light slips past pale curtains"));
        let p = render_coherence_prompt("My passage.", &base).unwrap();
        assert!(p.contains(&format!("**Base Answer:**\n{}\n", base.text())));
        assert!(p.contains("**TEXT:** My passage."));
        assert!(p.contains("Coherency score: <integer 1--10>."));
        assert_ne!(p, render_coherence_prompt("My passage!", &base).unwrap());
        assert_eq!(render_coherence_prompt("  ", &base), Err(WritingError::EmptyCandidate));
        assert!(render_coherence_prompt(base.text(), &base).is_ok());
    }

    #[test]
    fn scores() {
        assert_eq!(parse_coherence_score("Coherency score: 7"), Ok(7));
        assert_eq!(parse_coherence_score("Coherency score: 4 ... Coherency score: 8"), Ok(8));
        assert_eq!(parse_coherence_score("score: seven"), Err(WritingError::NoScore));
        assert_eq!(parse_coherence_score("Coherency score: 11"), Err(WritingError::ScoreRange(11)));
        assert_eq!(parse_coherence_score("Coherency score: 0"), Err(WritingError::ScoreRange(0)));
    }

    #[test]
    fn sampling_is_seeded() {
        let pool: Vec<String> = (0..10).map(|i| format!("Sentence {i}.")).collect();
        let a = sample_problems(&pool, 3, 7).unwrap();
        assert_eq!(a, sample_problems(&pool, 3, 7).unwrap());
        for p in &a {
            let mut s = p.end_sentences.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 4);
        }
        assert!(sample_problems(&pool[..3], 1, 0).is_err());
    }

    #[test]
    fn shipped_problem_file_loads() {
        let text = include_str!("../../data/writing_problems.jsonl");
        let ps = parse_problems(text).unwrap();
        assert!(ps.len() >= 3);
        assert_eq!(render_writing_task(&ps[0]).unwrap(), render_writing_task(&figure_problem()).unwrap());
    }
}
