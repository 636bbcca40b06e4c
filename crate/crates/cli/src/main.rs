use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use icrl_core::config::{ablation_variants, RunConfig};
use icrl_core::experiment::{self, RunOutput};
use icrl_core::game24::{check_response, solution_text, solvable_ints};
use icrl_core::metrics::{self, format_pm};
use icrl_core::textworld::{self, serve_stdio, MiniLab, WorldSpec};
use tracing_subscriber::EnvFilter;

/// In-context reinforcement learning prompting harness.
#[derive(Parser)]
#[command(name = "icrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one task.
    Run(RunArgs),
    /// Run an ICRL config and its five ablations.
    Ablate(RunArgs),
    /// Check a Game of 24 response against its inputs.
    Verify24 {
        /// The four inputs, e.g. `4 9 10 13`.
        #[arg(num_args = 4, required = true)]
        inputs: Vec<i64>,
        /// Response file; stdin when absent or `-`.
        #[arg(long)]
        response: Option<PathBuf>,
    },
    /// Solve a Game of 24 instance, or print UNSOLVABLE.
    Solve24 {
        #[arg(num_args = 4, required = true)]
        inputs: Vec<i64>,
    },
    /// Play a MiniLab world on the terminal, or serve it over stdio.
    Sim {
        /// Shipped world name.
        #[arg(long, default_value = "boil-water", conflicts_with = "world_file")]
        world: String,
        #[arg(long)]
        world_file: Option<PathBuf>,
        /// Speak the JSON-lines protocol instead of plain text.
        #[arg(long)]
        json: bool,
    },
    /// Redraw summary.csv and curves.svg from a logs.jsonl file.
    Plot {
        logs: PathBuf,
        /// Output directory; next to the logs by default.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "")]
        title: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Dotted override, e.g. `--set policy.temperature=0.7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Problems run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Print the first prompt and the projected cost, then stop.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => run(args, false),
        Command::Ablate(args) => run(args, true),
        Command::Verify24 { inputs, response } => verify24(&inputs, response.as_deref()),
        Command::Solve24 { inputs } => solve24(&inputs),
        Command::Sim { world, world_file, json } => sim(&world, world_file.as_deref(), json),
        Command::Plot { logs, out, title } => plot(&logs, out.as_deref(), &title),
    }
}

fn run(args: RunArgs, ablate: bool) -> Result<()> {
    let base = RunConfig::load(&args.config, &args.overrides)?;
    let base_dir = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let configs = if ablate {
        let mut all = vec![base.clone()];
        all.extend(ablation_variants(&base));
        all
    } else {
        vec![base]
    };

    if args.dry_run {
        for c in &configs {
            let d = experiment::dry_run(c, &base_dir)?;
            println!("== {} on {} ({} problems) ==", d.method, c.task, d.projection.problems);
            if let Some(s) = &d.system_prompt {
                println!("--- system ---\n{s}");
            }
            println!("--- first prompt ({}) ---\n{}", d.problem_id, d.first_prompt);
            let p = &d.projection;
            println!(
                "--- projection ---\npolicy calls {}, judge calls {}, tokens in {}, tokens out {}, cost ${:.2}",
                p.policy_calls, p.judge_calls, p.tokens_in, p.tokens_out, p.usd
            );
            if let Some(cap) = c.cost.cap_usd {
                println!("cost cap ${cap:.2}: {}", if p.usd > cap { "EXCEEDED" } else { "ok" });
            }
        }
        return Ok(());
    }

    let output = experiment::run_all(&configs, &base_dir, args.parallel.max(1))?;
    experiment::write_outputs(&args.out, &configs, &output)?;
    print_summary(&output)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn print_summary(output: &RunOutput) -> Result<()> {
    let rows = metrics::summarize(&output.logs)?;
    let Some(last) = rows.iter().map(|r| r.episode).max() else {
        return Ok(());
    };
    println!("{:<28} {:<10} {:>8} {:>16}", "method", "task", "episodes", "best so far");
    for r in rows.iter().filter(|r| r.episode == last) {
        println!(
            "{:<28} {:<10} {:>8} {:>16}",
            r.method,
            r.task,
            r.episode,
            format_pm(100.0 * r.running_max_mean, 100.0 * r.stderr)
        );
    }
    let failed = output.logs.iter().filter(|l| l.failed).count();
    if failed > 0 {
        println!("{failed} episode(s) failed; see logs.jsonl");
    }
    Ok(())
}

fn verify24(inputs: &[i64], response: Option<&Path>) -> Result<()> {
    let text = match response {
        Some(p) if p != Path::new("-") => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    match check_response(&text, inputs) {
        Ok(v) => {
            println!("{v}");
            if !v.is_success() {
                std::process::exit(1);
            }
            Ok(())
        }
        Err(e) => {
            println!("unparsable ({e})");
            std::process::exit(2);
        }
    }
}

fn solve24(inputs: &[i64]) -> Result<()> {
    let arr: [i64; 4] = inputs.try_into().context("exactly four inputs")?;
    match solvable_ints(arr) {
        Some(expr) => println!("{}", solution_text(&expr, inputs)?),
        None => println!("UNSOLVABLE"),
    }
    Ok(())
}

fn load_world(name: &str, file: Option<&Path>) -> Result<WorldSpec> {
    Ok(match file {
        Some(f) => WorldSpec::load(f)?,
        None => textworld::builtin_world(name)?,
    })
}

fn sim(name: &str, file: Option<&Path>, json: bool) -> Result<()> {
    let spec = load_world(name, file)?;
    if json {
        serve_stdio(spec, io::stdin().lock(), io::stdout().lock())?;
        return Ok(());
    }
    println!("{}\n", spec.render_task());
    let mut lab = MiniLab::new(Arc::new(spec));
    let mut out = io::stdout().lock();
    write!(out, "> ")?;
    out.flush()?;
    for line in io::stdin().lock().lines() {
        let action = line?;
        if action.trim().is_empty() {
            write!(out, "> ")?;
            out.flush()?;
            continue;
        }
        let step = lab.step(action.trim())?;
        writeln!(out, "{}", step.observation)?;
        if step.reward != 0 {
            writeln!(out, "(reward {}, total {})", step.reward, lab.state().total_reward)?;
        }
        if step.terminated {
            if let Some(t) = lab.state().status.terminal_line() {
                writeln!(out, "{t}")?;
            }
            return Ok(());
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    Ok(())
}

fn plot(logs: &Path, out: Option<&Path>, title: &str) -> Result<()> {
    let file = fs::File::open(logs).with_context(|| format!("opening {}", logs.display()))?;
    let logs_vec = metrics::read_jsonl(io::BufReader::new(file))?;
    if logs_vec.is_empty() {
        bail!("{} holds no episodes", logs.display());
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| logs.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&dir)?;
    let rows = metrics::summarize(&logs_vec)?;
    metrics::write_summary_csv(&rows, fs::File::create(dir.join("summary.csv"))?)?;
    let title = if title.is_empty() { logs_vec[0].task.name() } else { title };
    fs::write(dir.join("curves.svg"), metrics::render_svg(&metrics::curve_series(&rows), title, "episode", "metric")?)?;
    println!("wrote {}", dir.display());
    Ok(())
}
