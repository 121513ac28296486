use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use delay_rc::runner::{self, load_config, Command, RunOptions};

/// Reservoir computing with delayed readouts.
#[derive(Parser, Debug)]
#[command(name = "delay-rc", version, about)]
struct Cli {
    /// What to run.
    #[arg(value_enum)]
    command: Cmd,
    /// TOML config, a run manifest to replay, or an embedded preset name.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory; defaults to the config's `out` or `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Generate,
    Train,
    Predict,
    Mc,
    Sweep,
    Dmi,
    Dimtest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Generate => Command::Generate,
            Cmd::Train => Command::Train,
            Cmd::Predict => Command::Predict,
            Cmd::Mc => Command::Mc,
            Cmd::Sweep => Command::Sweep,
            Cmd::Dmi => Command::Dmi,
            Cmd::Dimtest => Command::Dimtest,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.config, cli.seed).with_context(|| format!("loading config {}", cli.config.display()))?;
    let command = Command::from(cli.command);
    let opts = RunOptions {
        jobs: cli.jobs,
        out: cli.out.clone(),
    };
    let summary = runner::run(command, &cfg, &opts).with_context(|| format!("running `{command}`"))?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    for line in &summary.lines {
        println!("{line}");
    }
    println!(
        "wrote {} files to {}",
        summary.files.len() + 1,
        summary.out_dir.display()
    );
    Ok(())
}
