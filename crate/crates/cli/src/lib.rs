//! Command-line front end for `fk_thermo`.
//!
//! `fk-thermo <command> --config <path> [--section.key=value ...] [flags]`
//! loads a sectioned config (see [`config`]), applies overrides, validates
//! everything, and writes deterministic JSON/CSV reports plus a `meta.json`
//! echo of the resolved configuration.
//!
//! Exit codes: 0 success, 1 a check or numerical consistency test failed,
//! 2 usage, configuration or input error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{dispatch, run_verify, CheckRecord, Command, VerifyReport};
pub use config::{parse_config, parse_config_with, ConfigError, RunConfig};

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] fk_thermo::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use fk_thermo::Error as E;
        match self {
            CliError::Core(
                E::Inconsistent { .. }
                | E::NonConvergence { .. }
                | E::PositivityViolation { .. }
                | E::DegenerateGap { .. }
                | E::SingularSystem,
            ) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fk-thermo", version, about = "Feynman-Kac thermodynamics on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides run.output).
    #[arg(long, short = 'o')]
    output: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Principal eigenpair, Gibbs density and drift.
    Eigen {
        #[command(flatten)]
        common: Common,
    },
    /// Feynman-Kac propagation of f by PDE or Monte Carlo.
    Propagate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        dt: Option<String>,
        /// pde or mc.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        paths: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        /// Start point for Monte Carlo and evaluation point for the PDE.
        #[arg(long)]
        x: Option<String>,
    },
    /// Simulate the Gibbs diffusion and compare its law with the target.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "T")]
        horizon: Option<String>,
        #[arg(long)]
        dt: Option<String>,
        #[arg(long)]
        paths: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        /// point:<x>, density:muV or density:<file.csv>.
        #[arg(long)]
        init: Option<String>,
        /// doob or g-spec.
        #[arg(long)]
        drift: Option<String>,
        /// Also write every path to paths.csv.
        #[arg(long)]
        write_paths: bool,
    },
    /// Entropy report for the drift of the [g] section.
    Entropy {
        #[command(flatten)]
        common: Common,
    },
    /// Maximize the pressure over K harmonics.
    Maximize {
        #[command(flatten)]
        common: Common,
        #[arg(long = "K")]
        k: Option<String>,
        #[arg(long)]
        lr: Option<String>,
        #[arg(long)]
        iters: Option<String>,
    },
    /// Run the invariant battery and write verify.json.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Add this amount to the eigenvalue seen by the pressure checks.
        #[arg(long, allow_hyphen_values = true)]
        perturb_eigenvalue: Option<String>,
    },
}

/// Splits `--section.key=value` (or `--section.key value`) overrides from
/// the arguments clap understands.
type Overrides = Vec<(String, String)>;

fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, value) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        if !name.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => iter
                .next()
                .ok_or_else(|| CliError::Usage(format!("override --{name} needs a value")))?,
        };
        overrides.push((name.to_string(), value));
    }
    Ok((rest, overrides))
}

fn flag(overrides: &mut Vec<(String, String)>, key: &str, value: Option<String>) {
    if let Some(v) = value {
        overrides.push((format!("run.{key}"), v));
    }
}

fn execute(args: Vec<String>) -> Result<Status, CliError> {
    let (rest, mut overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 {
                Ok(Status::Pass)
            } else {
                Err(CliError::Usage(String::new()))
            };
        }
    };
    let o = &mut overrides;
    let (command, common) = match cli.command {
        Sub::Eigen { common } => (Command::Eigen, common),
        Sub::Propagate {
            common,
            t,
            dt,
            method,
            paths,
            seed,
            x,
        } => {
            flag(o, "t", t);
            flag(o, "dt", dt);
            flag(o, "method", method);
            flag(o, "paths", paths);
            flag(o, "seed", seed);
            flag(o, "x", x);
            (Command::Propagate, common)
        }
        Sub::Simulate {
            common,
            horizon,
            dt,
            paths,
            seed,
            init,
            drift,
            write_paths,
        } => {
            flag(o, "T", horizon);
            flag(o, "dt", dt);
            flag(o, "paths", paths);
            flag(o, "seed", seed);
            flag(o, "init", init);
            flag(o, "drift", drift);
            if write_paths {
                flag(o, "write_paths", Some("true".into()));
            }
            (Command::Simulate, common)
        }
        Sub::Entropy { common } => (Command::Entropy, common),
        Sub::Maximize { common, k, lr, iters } => {
            flag(o, "K", k);
            flag(o, "lr", lr);
            flag(o, "iters", iters);
            (Command::Maximize, common)
        }
        Sub::Verify {
            common,
            perturb_eigenvalue,
        } => {
            flag(o, "perturb_eigenvalue", perturb_eigenvalue);
            (Command::Verify, common)
        }
    };
    if let Some(dir) = common.output {
        overrides.push(("run.output".into(), format!("\"{dir}\"")));
    }
    let text = std::fs::read_to_string(&common.config).map_err(|e| CliError::Input {
        path: common.config.clone(),
        message: e.to_string(),
    })?;
    let cfg = parse_config_with(&text, &overrides)?;
    dispatch(command, &cfg)
}

/// Runs the front end on `args` (program name first) and returns the exit code.
pub fn run<I>(args: I) -> u8
where
    I: IntoIterator<Item = String>,
{
    match execute(args.into_iter().collect()) {
        Ok(Status::Pass) => 0,
        Ok(Status::Fail) => 1,
        Err(CliError::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("fk-thermo: {msg}");
            }
            2
        }
        Err(e) => {
            eprintln!("fk-thermo: {e}");
            e.exit_code()
        }
    }
}
