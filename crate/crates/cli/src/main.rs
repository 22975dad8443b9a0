use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deferkit_cli::commands::{self, CliError, CliResult};
use deferkit_cli::config::{self, ExperimentConfig, Method};
use serde_json::json;

#[derive(Parser)]
#[command(name = "deferkit", version, about = "Adversarially robust learning-to-defer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config file (JSON).
    #[arg(long, short)]
    config: Option<String>,
    /// Start from a shipped preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Dotted-path override, e.g. `--set loss.gamma=0.5`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        config::resolve(self.preset.as_deref(), self.config.as_deref(), &self.overrides).map_err(CliError::config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved config with its hash.
    Config(ConfigArgs),
    /// List shipped presets.
    Presets,
    /// Generate the dataset and expert outputs.
    Gen(ConfigArgs),
    /// Train a deferral system and write its checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overrides `train.method`.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
    },
    /// Dump attacked inputs for every non-clean eval mode.
    Attack {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the metric report (JSON and CSV).
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the brute-force oracle suite (and a trained-policy check with --checkpoint).
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Summarize metric reports.
    Report {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directories to scan; defaults to the config's output directory.
        dirs: Vec<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "rerm" => Ok(Method::Rerm),
        "baseline" => Ok(Method::Baseline),
        _ => Err(format!("unknown method {s:?} (rerm or baseline)")),
    }
}

fn paths(p: &[PathBuf]) -> Vec<String> {
    p.iter().map(|p| p.display().to_string()).collect()
}

fn default_checkpoint(cfg: &ExperimentConfig, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| commands::checkpoint_path(cfg, cfg.train.method))
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    Ok(match cli.command {
        Command::Config(a) => {
            let cfg = a.resolve()?;
            json!({"config_hash": cfg.hash(), "config": cfg})
        }
        Command::Presets => json!({"presets": config::PRESETS}),
        Command::Gen(a) => {
            let cfg = a.resolve()?;
            json!({"config_hash": cfg.hash(), "files": paths(&commands::cmd_gen(&cfg)?)})
        }
        Command::Train { cfg, method } => {
            let cfg = cfg.resolve()?;
            let method = method.unwrap_or(cfg.train.method);
            json!({"config_hash": cfg.hash(), "files": paths(&commands::cmd_train(&cfg, method)?)})
        }
        Command::Attack { cfg, checkpoint } => {
            let cfg = cfg.resolve()?;
            let ck = default_checkpoint(&cfg, checkpoint);
            json!({"config_hash": cfg.hash(), "files": paths(&commands::cmd_attack(&cfg, &ck)?)})
        }
        Command::Eval { cfg, checkpoint } => {
            let cfg = cfg.resolve()?;
            let ck = default_checkpoint(&cfg, checkpoint);
            let (report, files) = commands::cmd_eval(&cfg, &ck)?;
            json!({"config_hash": cfg.hash(), "files": paths(&files), "report": report})
        }
        Command::Verify { cfg, checkpoint } => {
            let cfg = cfg.resolve()?;
            let (report, path) = commands::cmd_verify(&cfg, checkpoint.as_deref())?;
            if !report.all_passed() {
                let failed: Vec<String> = report.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.witness)).collect();
                return Err(CliError { kind: "verification", messages: failed });
            }
            json!({"config_hash": cfg.hash(), "files": [path.display().to_string()], "checks": report.checks.len(), "passed": true})
        }
        Command::Report { cfg, dirs } => {
            let cfg = cfg.resolve()?;
            let (md, files) = commands::cmd_report(&cfg, &dirs)?;
            eprint!("{md}");
            json!({"config_hash": cfg.hash(), "files": paths(&files)})
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("output serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
