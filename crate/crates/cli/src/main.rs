use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use chaosvws_core::harness::{exit_code, parse_key_values, run, Command, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "chaosvws",
    version,
    about = "Chaos-expansion weak and very weak solutions of parabolic SPDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Weak solution with a bounded potential.
    Solve,
    /// Very weak solution of a singular potential over an eps net.
    Vws,
    /// Mollified against smooth-potential solutions.
    Consistency,
    /// Two regularizing nets compared.
    Negligibility,
    /// Moderateness of the regularized potential net.
    Moderate,
    /// Realizations of a weak solution.
    Sample,
    /// The worked example with its default preset.
    Section6,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Vws => Command::Vws,
            Cmd::Consistency => Command::Consistency,
            Cmd::Negligibility => Command::Negligibility,
            Cmd::Moderate => Command::Moderate,
            Cmd::Sample => Command::Sample,
            Cmd::Section6 => Command::Section6,
        }
    }
}

#[derive(clap::Args)]
struct Overrides {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated eps values, strictly decreasing.
    #[arg(long, global = true)]
    eps: Option<String>,
    #[arg(long, global = true)]
    p: Option<u32>,
    #[arg(long, global = true)]
    m: Option<u32>,
    /// Number of noise variables K.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Maximal chaos order P.
    #[arg(long, global = true)]
    order: Option<u32>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let o = &cli.overrides;
    let mut map = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            parse_key_values(&text)?
        }
        None => Default::default(),
    };
    let mut set = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(key.to_string(), v);
        }
    };
    set("out", o.out.as_ref().map(|p| p.display().to_string()));
    set("seed", o.seed.map(|v| v.to_string()));
    set("eps", o.eps.clone());
    set("p", o.p.map(|v| v.to_string()));
    set("m", o.m.map(|v| v.to_string()));
    set("truncation.k", o.k.map(|v| v.to_string()));
    set("truncation.p", o.order.map(|v| v.to_string()));
    set("threads", o.threads.map(|v| v.to_string()));
    Ok(RunConfig::from_map(Some(cli.command.into()), &map)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<chaosvws_core::Error>()
                .map_or(1, exit_code);
            return ExitCode::from(code as u8);
        }
    };
    match run(&config) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "wrote {} artifacts to {}",
                summary.artifacts.len(),
                summary.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
