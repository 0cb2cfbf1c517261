use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wpi_conv::config::{load_config, Preset, RunConfig, Stage, SweepParam};
use wpi_conv::pipeline::{self, RunOutcome, EXIT_ERROR};

#[derive(Parser)]
#[command(version, about = "Weak Poincaré rate functions for convolution measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stages listed in a config file.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set p=1.5` or `--set verify.n=10000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the rate stage for several values of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the built-in presets.
    Presets,
    /// Check a config file and build its models without running stages.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn report(out: &RunOutcome) -> ExitCode {
    for r in &out.records {
        let status = serde_json::to_value(r.status).unwrap();
        let stage = serde_json::to_value(r.stage).unwrap();
        println!(
            "{:<11} {:<8} {}",
            stage.as_str().unwrap_or("?"),
            status.as_str().unwrap_or("?"),
            r.detail
        );
    }
    println!("artifacts in {}", out.output_dir.display());
    ExitCode::from(out.exit_code as u8)
}

fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, ExitCode> {
    load_config(path, overrides).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_ERROR as u8)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => match load(&config, &overrides) {
            Ok(cfg) => report(&pipeline::run(&cfg)),
            Err(code) => code,
        },
        Command::Sweep {
            config,
            param,
            values,
            overrides,
        } => match load(&config, &overrides) {
            Ok(mut cfg) => {
                cfg.sweep.param = Some(param);
                cfg.sweep.values = values;
                cfg.stages = vec![Stage::Sweep];
                report(&pipeline::run(&cfg))
            }
            Err(code) => code,
        },
        Command::Presets => {
            for p in Preset::ALL {
                println!("{:<12} {}", p.name(), p.description());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config, overrides } => {
            let cfg = match load(&config, &overrides) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cfg.resolve() {
                Ok(setup) => {
                    println!(
                        "ok: {} (d = {}, case {:?}, r0 = {}, stages {:?})",
                        setup.label,
                        setup.model.dim(),
                        setup.drift.case,
                        setup.drift.r0,
                        Stage::closure(&cfg.stages)
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_ERROR as u8)
                }
            }
        }
    }
}
