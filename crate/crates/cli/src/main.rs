use std::error::Error as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rkhs_ci::io::{apply_overrides, parse_config, run, Command};

#[derive(Parser)]
#[command(name = "rkhs-ci", version, about = "Kernel estimators with asymptotic confidence sets")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model (fixed lambda or cross-validated) and write its coefficients
    Fit(Common),
    /// Confidence sets for the configured functionals
    Ci(Common),
    /// Monte-Carlo coverage study
    Simulate(Common),
    /// Pointwise intervals over a grid of points
    Band(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data CSV with header x1,...,xd,y (overrides [data] path)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (overrides [run] out)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Override a config value, e.g. --set kernel.gamma=0.5 or --set functional:f1.points=3
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Ci(c) => (Command::Ci, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Band(c) => (Command::Band, c),
    };
    match execute(command, opts) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command, opts: Common) -> rkhs_ci::Result<String> {
    let (text, origin) = match &opts.config {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|source| rkhs_ci::Error::Io { path: p.clone(), source })?,
            p.display().to_string(),
        ),
        None => (String::new(), "<command line>".to_string()),
    };
    let mut overrides = Vec::new();
    if let Some(d) = &opts.data {
        overrides.push(format!("data.path={}", d.display()));
    }
    if let Some(o) = &opts.out {
        overrides.push(format!("run.out={}", o.display()));
    }
    if let Some(s) = opts.seed {
        overrides.push(format!("run.seed={s}"));
    }
    if let Some(w) = opts.workers {
        overrides.push(format!("run.workers={w}"));
    }
    overrides.extend(opts.overrides);
    let text = if overrides.is_empty() { text } else { apply_overrides(&text, &overrides)? };
    let cfg = parse_config(&text, &origin, Some(command))?;
    Ok(run(&cfg)?.summary)
}
