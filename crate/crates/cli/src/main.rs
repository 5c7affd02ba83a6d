use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stackcap_cli::config::Model;
use stackcap_cli::runner::{finish_failed, run_spectrum};
use stackcap_cli::{parse_config, reproduce, run_config, CliError, ExperimentConfig, Figure, RunManifest, Scale};

#[derive(Parser)]
#[command(name = "stackcap", version, about = "Charging dynamics of stack-electrode supercapacitors")]
struct Cli {
    /// Worker threads for sweep-type runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration of any model.
    Simulate(RunArgs),
    /// Charging timescale and spectrum of the circuit described by a configuration.
    Timescale(RunArgs),
    /// Charging timescale against the stack count (`timescale-sweep` configurations).
    Sweep(RunArgs),
    /// Composite fields against the field solver (`mae-compare` configurations).
    Compare(RunArgs),
    /// Regenerate the data behind a figure.
    Reproduce {
        figure: Figure,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(path: &Path, expect: Option<Model>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let cfg = parse_config(&text)?;
    if let Some(m) = expect {
        if cfg.model != m {
            return Err(CliError::Config(vec![format!(
                "model must be {:?} for this subcommand, got {:?}",
                m, cfg.model
            )]));
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure thread pool: {e}");
        }
    }
    let manifest: RunManifest = match cli.command {
        Command::Reproduce { figure, scale, out } => reproduce(figure, scale, &out),
        Command::Simulate(a) => run_with(&a, "simulate", None, false),
        Command::Timescale(a) => run_with(&a, "timescale", None, true),
        Command::Sweep(a) => run_with(&a, "sweep", Some(Model::TimescaleSweep), false),
        Command::Compare(a) => run_with(&a, "compare", Some(Model::MaeCompare), false),
    };
    if let Some(e) = &manifest.error {
        eprintln!("error [{}]: {}", e.code, e.message);
    }
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    ExitCode::from(manifest.exit_code as u8)
}

fn run_with(a: &RunArgs, command: &str, expect: Option<Model>, spectrum: bool) -> RunManifest {
    match load(&a.config, expect) {
        Ok(cfg) if spectrum => run_spectrum(&cfg, &a.out, command),
        Ok(cfg) => run_config(&cfg, &a.out, command),
        Err(e) => finish_failed(command, e, &a.out),
    }
}
