//! Thin command-line front end over the library's experiment presets.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use mncomp::baselines::Scheme;
use mncomp::harness::{run_preset, Preset, PresetOptions};
use mncomp::scenario::load_config;

#[derive(Parser)]
#[command(name = "mncomp", about = "CoMP multi-numerology resource-allocation experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep preset and write <preset>.csv and <preset>.summary.json.
    Run {
        /// Scenario configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Sweep preset: convergence, rate-vs-power, outage-vs-qos,
        /// comp-vs-noncomp, mn-vs-sn, sf-vs-alpha, benchmark-compare.
        #[arg(long)]
        preset: String,
        /// Allocation scheme: full_cesp, relax_round, epa_cesp_sa,
        /// cesp_pa_gsa.
        #[arg(long, default_value = "full_cesp")]
        scheme: String,
        /// Restrict every user to its strongest BS.
        #[arg(long = "no-comp")]
        no_comp: bool,
        /// Collapse the grid to a single numerology.
        #[arg(long)]
        sn: bool,
        /// Number of seeds per sweep point.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Base seed override (defaults to the config's rng_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run {
            config,
            preset,
            scheme,
            no_comp,
            sn,
            seeds,
            seed,
            out,
        } => {
            let config = load_config(&config).map_err(|e| e.to_string())?;
            let preset = Preset::parse(&preset).ok_or_else(|| format!("unknown preset `{preset}`"))?;
            let scheme = Scheme::parse(&scheme).ok_or_else(|| format!("unknown scheme `{scheme}`"))?;
            let opts = PresetOptions {
                scheme,
                comp: !no_comp,
                multi_numerology: !sn,
                num_seeds: seeds,
                base_seed: seed,
            };
            let output = run_preset(preset, &config, &opts, &out).map_err(|e| e.to_string())?;
            println!(
                "wrote {} rows to {} and {}",
                output.rows.len(),
                output.csv_path.display(),
                output.summary_path.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            // machine-readable error record on stderr
            eprintln!("{}", serde_json::json!({ "error": message }));
            ExitCode::FAILURE
        }
    }
}
