use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lempc::harness::{run_stages, write_outputs, ExperimentConfig, ExperimentReport, Stages};

#[derive(Parser)]
#[command(name = "lempc", version, about = "Clustered kernel regression and learning economic MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate data and fit the clustered predictor.
    Learn(Common),
    /// Learning plus the prediction-error bound.
    Bounds(Common),
    /// Learning, bound and controller design.
    Control(Common),
    /// Everything up to the closed-loop runs.
    Simulate(Common),
    /// Learning plus the prediction benchmark against kinky inference.
    Bench(Common),
    /// Controller design plus the α sweep.
    Sweep(SweepArgs),
    /// The full pipeline.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Run the invariant suite only and write nothing.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated α values; overrides the config.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text).context("parsing the configuration")?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn print_checks(report: &ExperimentReport) {
    for c in &report.checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        let kind = if c.hard { "hard" } else { "soft" };
        println!("{status} [{kind}] {}: {}/{} failed ({})", c.name, c.failed, c.checked, c.detail);
    }
}

fn execute(common: &Common, stages: Stages, alphas: Option<Vec<f64>>) -> Result<ExitCode> {
    let mut config = load(common)?;
    if let Some(a) = alphas {
        let sweep = config
            .sweep
            .as_mut()
            .context("the configuration has no sweep section")?;
        sweep.alphas = a;
        config.validate()?;
    }
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let exp = run_stages(&config, stages)?;
    print_checks(&exp.report);
    if !common.check {
        match &config.output_dir {
            Some(dir) => {
                write_outputs(dir, &config, &exp)?;
                log::info!("wrote outputs to {}", dir.display());
            }
            None => println!("{}", serde_json::to_string_pretty(&exp.report)?),
        }
    }
    let hard = exp.report.hard_failures();
    if hard.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} hard invariant check(s) failed", hard.len());
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Learn(c) => execute(c, Stages::Learn, None),
        Command::Bounds(c) => execute(c, Stages::Bounds, None),
        Command::Control(c) => execute(c, Stages::Control, None),
        Command::Simulate(c) => execute(c, Stages::Simulate, None),
        Command::Bench(c) => execute(c, Stages::Bench, None),
        Command::Sweep(s) => execute(&s.common, Stages::Sweep, s.alphas.clone()),
        Command::Run(c) => execute(c, Stages::All, None),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
