//! Read-only helpers for checking assembled prompts: which attempt blocks
//! they contain and which reward scalars they render.

use std::sync::OnceLock;

use regex::Regex;

fn scalar_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)reward(?:\*\*)?\s*[:=]\s*(-?\d+(?:\.\d+)?)").unwrap())
}

fn attempt_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^Attempt \d+:$").unwrap())
}

/// Every rendered reward value (`<**Reward**: 3.00>`, `Reward: 7.00`,
/// `(reward=3)`, `Total reward: 71`).
pub fn rendered_scalars(text: &str) -> Vec<f64> {
    scalar_re()
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

/// Attempt blocks that carry at least one rendered reward, with their
/// scalars. Covers `<attempt>` ... `</attempt>` blocks and `Attempt N:`
/// trajectories. Few-shot demonstrations have no rewards and are skipped.
pub fn rewarded_attempts(text: &str) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed == "<attempt>" || attempt_header_re().is_match(trimmed) {
            if let Some(block) = current.take() {
                push_block(&mut out, &block);
            }
            current = Some(Vec::new());
            continue;
        }
        if let Some(block) = current.as_mut() {
            if trimmed == "</attempt>" || trimmed == "</Attempts>" {
                let block = current.take().unwrap_or_default();
                push_block(&mut out, &block);
                continue;
            }
            block.push(line);
            if trimmed.contains("Total reward:") {
                let block = current.take().unwrap_or_default();
                push_block(&mut out, &block);
            }
        }
    }
    if let Some(block) = current {
        push_block(&mut out, &block);
    }
    out
}

fn push_block(out: &mut Vec<Vec<f64>>, lines: &[&str]) {
    let scalars = rendered_scalars(&lines.join("\n"));
    if !scalars.is_empty() {
        out.push(scalars);
    }
}
