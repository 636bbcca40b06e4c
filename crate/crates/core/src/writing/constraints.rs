use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::WritingProblem;

/// Format diagnostics for a response. Never feeds into rewards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub has_plan_and_passage: bool,
    pub paragraph_count: usize,
    pub paragraph_count_ok: bool,
    /// One flag per required end sentence, in order.
    pub end_sentences_ok: Vec<bool>,
}

impl ConstraintReport {
    pub fn all_ok(&self) -> bool {
        self.has_plan_and_passage && self.paragraph_count_ok && self.end_sentences_ok.iter().all(|&b| b)
    }

    pub fn summary(&self) -> String {
        format!(
            "plan+passage={} paragraphs={} end_sentences={}/{}",
            self.has_plan_and_passage,
            self.paragraph_count,
            self.end_sentences_ok.iter().filter(|&&b| b).count(),
            self.end_sentences_ok.len()
        )
    }
}

fn marker(name: &str) -> Regex {
    Regex::new(&format!(r"(?im)^\W*{name}\W*:")).unwrap()
}

fn plan_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| marker("plan"))
}

fn passage_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| marker("passage"))
}

fn blank_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t]*\n").unwrap())
}

/// The text after the `Passage:` marker, or the whole response.
pub(crate) fn passage_text(response: &str) -> &str {
    match passage_re().find_iter(response).last() {
        Some(m) => response[m.end()..].trim(),
        None => response.trim(),
    }
}

/// Unifies curly quotes and apostrophes, collapses whitespace and strips
/// trailing whitespace and quote marks.
fn normalize(s: &str) -> String {
    let unified: String = s
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{02BC}' | '`' => '\'',
            '\u{201C}' | '\u{201D}' | '\u{00AB}' | '\u{00BB}' => '"',
            c => c,
        })
        .collect();
    let collapsed = unified.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_whitespace() || c == '"' || c == '\'' || c == '*')
        .to_string()
}

fn paragraphs(passage: &str) -> Vec<&str> {
    let by_blank: Vec<&str> = blank_line_re()
        .split(passage)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();
    if by_blank.len() > 1 {
        return by_blank;
    }
    passage.lines().map(str::trim).filter(|p| !p.is_empty()).collect()
}

pub fn check_constraints(response: &str, problem: &WritingProblem) -> ConstraintReport {
    let has_plan_and_passage = match (plan_re().find(response), passage_re().find(response)) {
        (Some(p), Some(q)) => p.start() < q.start(),
        _ => false,
    };
    let paras = paragraphs(passage_text(response));
    let end_sentences_ok = problem
        .end_sentences
        .iter()
        .enumerate()
        .map(|(i, sentence)| {
            paras
                .get(i)
                .is_some_and(|p| normalize(p).ends_with(&normalize(sentence)))
        })
        .collect();
    ConstraintReport {
        has_plan_and_passage,
        paragraph_count: paras.len(),
        paragraph_count_ok: paras.len() == 4,
        end_sentences_ok,
    }
}
