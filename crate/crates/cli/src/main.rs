use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cworld_core::cl::Method;
use cworld_core::env::resolve_sequence;
use cworld_core::metrics::{
    build_transfer_matrix, load_run, reference_curves, reference_transfer, summarize, to_csv, TransferMatrix,
};
use cworld_core::runner::{run_dir, run_dir_in, run_experiment, ExperimentConfig, OUTPUT_ROOT_VAR};

#[derive(Parser)]
#[command(name = "cworld", version, about = "Continual reinforcement learning on synthetic manipulation tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method on one sequence for every configured seed.
    Run {
        /// Experiment config (JSON). Without it, --sequence and --method are required.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        /// Preset name or suite file.
        #[arg(long)]
        sequence: Option<String>,
        /// Replaces the configured seeds; repeatable.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// One million steps per task and full-size networks.
        #[arg(long)]
        paper_scale: bool,
        /// Output directory; defaults to a hashed name under the output root.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root for default output directories.
        #[arg(long, env = OUTPUT_ROOT_VAR)]
        output_root: Option<PathBuf>,
    },
    /// Metric table (CSV) over finished result directories.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Single-task runs providing forward-transfer references.
        #[arg(long = "reference")]
        references: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise fine-tuning transfer matrix over a suite.
    TransferMatrix {
        /// Preset name or suite file.
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
        /// Base config for scale, seeds and flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        steps_per_task: Option<usize>,
    },
    /// Reference transfer of a sequence under a transfer matrix.
    Rt {
        #[arg(long)]
        matrix: PathBuf,
        /// Preset name, suite file, or comma-separated task names or indices.
        #[arg(long)]
        sequence: String,
        /// Repeats the sequence this many times.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::parse(&text)?)
}

fn parse_method(name: &str) -> Result<Method> {
    Method::parse(name).with_context(|| format!("unknown method `{name}`"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: Option<PathBuf>,
    method: Option<String>,
    sequence: Option<String>,
    seeds: Vec<u64>,
    paper_scale: bool,
    out: Option<PathBuf>,
    output_root: Option<PathBuf>,
) -> Result<bool> {
    let mut cfg = match (&config, &sequence, &method) {
        (Some(p), _, _) => read_config(p)?,
        (None, Some(s), Some(m)) => ExperimentConfig::new(s.clone(), parse_method(m)?),
        _ => bail!("either --config or both --sequence and --method are required"),
    };
    if let Some(s) = sequence {
        cfg.sequence = s;
    }
    if let Some(m) = method {
        cfg.method = parse_method(&m)?;
    }
    if !seeds.is_empty() {
        cfg.seeds = seeds;
    }
    if paper_scale {
        cfg = cfg.paper_scale();
    }
    if out.is_some() {
        cfg.output_dir = out;
    } else if let Some(root) = output_root {
        cfg.output_dir = Some(run_dir_in(&cfg, &root));
    }
    let manifest = run_experiment(&cfg)?;
    let dir = run_dir(&cfg);
    for s in &manifest.seeds {
        match &s.error {
            None => eprintln!("seed {}: ok", s.seed),
            Some(e) => eprintln!("seed {}: failed: {e}", s.seed),
        }
    }
    println!("{}", dir.display());
    Ok(manifest.all_completed())
}

fn cmd_summarize(dirs: &[PathBuf], references: &[PathBuf], out: &Path) -> Result<()> {
    let runs = dirs
        .iter()
        .map(|d| load_run(d).with_context(|| format!("loading {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Path> = references.iter().map(PathBuf::as_path).collect();
    let rows = summarize(&runs, &reference_curves(&refs)?)?;
    std::fs::write(out, to_csv(&rows)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn cmd_transfer_matrix(
    suite: &str,
    out: &Path,
    config: Option<PathBuf>,
    seeds: Vec<u64>,
    steps: Option<usize>,
) -> Result<bool> {
    let specs = resolve_sequence(suite)?;
    let mut cfg = match config {
        Some(p) => read_config(&p)?,
        None => ExperimentConfig::new(suite, Method::FineTune),
    };
    if !seeds.is_empty() {
        cfg.seeds = seeds;
    }
    if let Some(s) = steps {
        cfg.steps_per_task = s;
    }
    let run = build_transfer_matrix(&specs, &cfg)?;
    for f in &run.failures {
        eprintln!("failed: {f}");
    }
    std::fs::write(out, serde_json::to_string_pretty(&run.matrix)?)?;
    Ok(run.failures.is_empty())
}

fn sequence_indices(matrix: &TransferMatrix, sequence: &str) -> Result<Vec<usize>> {
    if let Ok(specs) = resolve_sequence(sequence) {
        let names: Vec<String> = specs.into_iter().map(|s| s.name).collect();
        return Ok(matrix.indices(&names)?);
    }
    sequence
        .split(',')
        .map(str::trim)
        .map(|tok| match tok.parse::<usize>() {
            Ok(i) => Ok(i),
            Err(_) => Ok(matrix.indices(&[tok.to_string()])?[0]),
        })
        .collect()
}

fn cmd_rt(matrix: &Path, sequence: &str, repeat: usize) -> Result<()> {
    let text = std::fs::read_to_string(matrix).with_context(|| format!("reading {}", matrix.display()))?;
    let m = TransferMatrix::parse(&text)?;
    let once = sequence_indices(&m, sequence)?;
    let seq: Vec<usize> = std::iter::repeat_n(once, repeat.max(1)).flatten().collect();
    println!("{:.4}", reference_transfer(&m, &seq)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            method,
            sequence,
            seeds,
            paper_scale,
            out,
            output_root,
        } => cmd_run(config, method, sequence, seeds, paper_scale, out, output_root),
        Command::Summarize { dirs, references, out } => cmd_summarize(&dirs, &references, &out).map(|()| true),
        Command::TransferMatrix {
            suite,
            out,
            config,
            seeds,
            steps_per_task,
        } => cmd_transfer_matrix(&suite, &out, config, seeds, steps_per_task),
        Command::Rt {
            matrix,
            sequence,
            repeat,
        } => cmd_rt(&matrix, &sequence, repeat).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
