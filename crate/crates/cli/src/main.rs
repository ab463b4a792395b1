use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maxsum::config::{presets, Command};
use maxsum::runner::{run_path, RunOptions, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "maxsum", version, about = "Max-sum processes with renewal stopping: condition checks, sweeps and probes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML, or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check Conditions A-D against the model.
    Verify(Common),
    /// Distance sweeps over n against limit populations.
    Sweep(Common),
    /// J-modulus exceedance table and stopping-path inclusion.
    ProbeJ(Common),
    /// Risk reserve process identities.
    Risk(Common),
    /// Example wirings and their stopped pairs.
    Examples(Common),
    /// Every command listed in the configuration.
    Run(Common),
    /// Print the preset catalog as JSON.
    Presets,
}

fn run(c: Common, only: Option<Command>) -> ExitCode {
    if let Some(j) = c.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let opts = RunOptions { seed: c.seed, out: c.out, commands: only.map(|x| vec![x]) };
    let outcome = run_path(&c.config, &opts);
    for (name, pass) in &outcome.verdicts {
        println!("{name}: {}", if *pass { "PASS" } else { "FAIL" });
    }
    if let Some(dir) = &outcome.out_dir {
        println!("outputs: {}", dir.display());
    }
    if outcome.exit_code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("{}", outcome.message);
    }
    ExitCode::from(outcome.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Verify(c) => run(c, Some(Command::Verify)),
        Cmd::Sweep(c) => run(c, Some(Command::Sweep)),
        Cmd::ProbeJ(c) => run(c, Some(Command::ProbeJ)),
        Cmd::Risk(c) => run(c, Some(Command::Risk)),
        Cmd::Examples(c) => run(c, Some(Command::Examples)),
        Cmd::Run(c) => run(c, None),
        Cmd::Presets => match serde_json::to_string_pretty(&presets()) {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG as u8)
            }
        },
    }
}
