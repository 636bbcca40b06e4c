/// Renders a finished episode as a buffer block:
///
/// ```text
/// Attempt 3:
/// teleport to bathroom -> Observation: You teleport to the bathroom. (reward=3)
/// -> focus on water -> Observation: You focus on the water. (reward=66)
/// Task Failed. You have exceeded the maximum number of steps. (reward=0) Total reward: 69
/// ```
///
/// `steps` holds `(transcript, reward)` pairs where the transcript is
/// `action -> Observation: ...`.
pub fn render_trajectory(episode: u32, steps: &[(String, i64)], terminal_line: &str, terminal_reward: i64, total: i64) -> String {
    let mut lines = vec![format!("Attempt {episode}:")];
    for (i, (text, reward)) in steps.iter().enumerate() {
        let arrow = if i == 0 { "" } else { "-> " };
        lines.push(format!("{arrow}{text} (reward={reward})"));
    }
    lines.push(format!("{terminal_line} (reward={terminal_reward}) Total reward: {total}"));
    lines.join("\n")
}
