//! Command-line driver for `jqfsim-core`: JSON run configs, bundled device profiles
//! and deterministic CSV/JSON result files.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use commands::Command;
pub use config::{ConfigError, Overrides, ProfileSource, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] jqfsim_core::Error),
    #[error("{0}")]
    Input(String),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(e) => e.kind(),
            CliError::Simulation(_) => "simulation",
            CliError::Input(_) => "input",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut e = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Config(c) = self {
            if let Some(f) = c.field() {
                e["field"] = Value::from(f);
            }
            if let ConfigError::UnknownKey { suggestion: Some(s), .. } = c {
                e["suggestion"] = Value::from(s.as_str());
            }
        }
        json!({ "error": e })
    }
}

/// Command-line values for the `fit` subcommand; they replace the config's.
#[derive(Clone, Debug, Default)]
pub struct FitArgs {
    pub input: Option<String>,
    pub model: Option<String>,
}

/// Resolves the config, runs `cmd` and writes its files; returns the output directory.
/// On failure the error JSON is also written to the output directory when one is known.
pub fn execute(
    cmd: Command,
    profile: Option<&str>,
    config: Option<&Path>,
    overrides: &Overrides,
    profiles: &ProfileSource,
    fit: Option<&FitArgs>,
) -> Result<PathBuf, CliError> {
    let mut dir = overrides.out.as_ref().map(PathBuf::from);
    let result = (|| -> Result<PathBuf, CliError> {
        let mut cfg = config::resolve(profile, config, overrides, profiles)?;
        dir = Some(PathBuf::from(&cfg.out));
        if let Some(f) = fit {
            if f.input.is_some() {
                cfg.fit.input = f.input.clone();
            }
            if f.model.is_some() {
                cfg.fit.model = f.model.clone();
            }
        }
        let artifact = commands::run(cmd, &cfg)?;
        let out = PathBuf::from(&cfg.out);
        output::write_artifact(&out, &artifact, &cfg)?;
        Ok(out)
    })();
    match (&result, &dir) {
        (Ok(d), _) => {
            let _ = std::fs::remove_file(d.join(output::ERROR_FILE));
        }
        (Err(e), Some(d)) => {
            let _ = std::fs::create_dir_all(d).and_then(|_| std::fs::write(d.join(output::ERROR_FILE), output::to_json(&e.to_json())));
        }
        _ => {}
    }
    result
}
