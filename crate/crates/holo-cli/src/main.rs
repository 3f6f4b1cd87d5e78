//! `holo`: train, synthesize, evaluate and analyze etendue-expanding
//! wavefront modulators for Fourier-holographic displays.
//!
//! Exit codes: 0 success, 1 input/configuration validation failure,
//! 2 runtime or numeric failure. Errors print one machine-readable JSON
//! line on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "holo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an expander from a config file (monochrome or trichromatic).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Warm-start expander artifact (required mode: as configured).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Solve an SLM pattern for one image against a trained expander.
    Synth {
        #[arg(long)]
        expander: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Output directory (defaults to `synth_out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional config for solve budget and cutoff overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a trained expander over a directory of test images.
    Eval {
        #[arg(long)]
        expander: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate an untrained reference mask (random or all-ones).
    Baseline {
        /// One of: random_amplitude, random_phase, random_complex, all_ones.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-phase spectrum diagnostics and the solve-loss bound report.
    Analyze {
        #[arg(long)]
        expander: PathBuf,
        /// Optional target image for the zero-phase bound check.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Report diffraction angles, etendue and the expansion ratio.
    Etendue {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, init } => commands::train(&config, init.as_deref()),
        Command::Synth { expander, image, out, config } => {
            commands::synth(&expander, &image, out.as_deref(), config.as_deref())
        }
        Command::Eval { expander, testset, out, config } => {
            commands::eval(&expander, &testset, out.as_deref(), config.as_deref())
        }
        Command::Baseline { kind, seed, config, out } => {
            commands::baseline(&kind, seed, &config, out.as_deref())
        }
        Command::Analyze { expander, image, out, config } => {
            commands::analyze(&expander, image.as_deref(), out.as_deref(), config.as_deref())
        }
        Command::Etendue { config } => commands::etendue(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.is_validation() { "validation" } else { "runtime" };
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": kind, "message": e.to_string()}})
            );
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
