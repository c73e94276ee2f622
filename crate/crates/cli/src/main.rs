mod commands;
mod config;
mod error;
mod obj;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "origami", version, about = "Rigid origami kinematics and rigidity toolkit")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a pattern; summarize its constraint system.
    Validate { file: PathBuf },
    /// Rigidity report at a state (the pattern's initial state by default).
    Analyze {
        file: PathBuf,
        /// Comma-separated folding angles, one per inner crease.
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<String>,
    },
    /// Trace a folding motion by continuation.
    Track {
        file: PathBuf,
        /// Start state; defaults to the pattern's initial state.
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<String>,
        /// Initial tangent. Defaults to a column of the flex basis.
        #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["target", "compose"])]
        direction: Option<String>,
        /// Flex basis column used when no direction is given.
        #[arg(long, default_value_t = 0)]
        flex: usize,
        /// Follow the negated direction.
        #[arg(long)]
        reverse: bool,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Fold towards this state instead of along a direction.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "compose")]
        target: Option<String>,
        /// Compose the motion from single-vertex motions (forest patterns).
        #[arg(long)]
        compose: bool,
        /// Stop before the first sample whose panels cross.
        #[arg(long)]
        collisions: bool,
        /// Also write one OBJ per sample into this directory.
        #[arg(long)]
        obj_dir: Option<PathBuf>,
    },
    /// Export folded states as OBJ meshes.
    ExportObj {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true, conflicts_with = "path")]
        rho: Option<String>,
        /// Path JSON written by `track`; one numbered OBJ per sample.
        #[arg(long)]
        path: Option<PathBuf>,
    },
    /// Generic rigid-foldability from spanning tree packing.
    Generic {
        file: PathBuf,
        /// Write the dual graph in DOT format to this file.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Numeric cross-check with this many sampled realizations.
        #[arg(long, default_value_t = 0)]
        check: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classify a single vertex from its sector angles.
    SolveVertex {
        /// Comma-separated sector angles in cyclic order.
        #[arg(long, allow_hyphen_values = true)]
        alphas: String,
        /// States sampled by the numeric sweep for degree 4 and above.
        #[arg(long, default_value_t = 73)]
        samples: usize,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(&cli.config).and_then(|cfg| commands::run(&cli.command, &cfg));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            println!("{}", e.to_json());
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
