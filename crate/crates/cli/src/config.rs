//! Config-file defaults, applied beneath flags and environment variables.
//!
//! ```toml
//! service = "http://127.0.0.1:8080"
//!
//! [serve]
//! model = "model.json"
//! cache-dir = "cache"
//!
//! [train]
//! n-trees = 200
//! ```

use std::path::Path;

use clap::Command;

use crate::error::CliError;

fn scalar(key: &str, v: &toml::Value) -> Result<String, CliError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(CliError::config(format!("config key {key:?}: unsupported value {other}"))),
    }
}

fn apply(mut cmd: Command, table: &toml::Table, scope: &str) -> Result<Command, CliError> {
    for (key, value) in table {
        if value.is_table() {
            continue;
        }
        // keys are long flag names; snake_case spellings are accepted too
        let long = key.replace('_', "-");
        let id = cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(long.as_str()))
            .map(|a| a.get_id().to_string())
            .ok_or_else(|| CliError::config(format!("config: {scope} has no setting {key:?}")))?;
        let values: Vec<String> = match value {
            toml::Value::Array(items) => items.iter().map(|v| scalar(key, v)).collect::<Result<_, _>>()?,
            v => vec![scalar(key, v)?],
        };
        cmd = cmd.mut_arg(id, |a| a.default_values(values));
    }
    Ok(cmd)
}

/// Installs the file's values as argument defaults, so clap's own order
/// (command line, then environment, then default) gives the precedence.
pub fn with_file_defaults(mut cmd: Command, path: &Path) -> Result<Command, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    cmd = apply(cmd, &table, "the top level")?;
    for (name, value) in &table {
        let Some(sub) = value.as_table() else { continue };
        if cmd.find_subcommand(name).is_none() {
            return Err(CliError::config(format!("config: unknown command section [{name}]")));
        }
        let mut failure = None;
        cmd = cmd.mut_subcommand(name, |c| match apply(c.clone(), sub, &format!("[{name}]")) {
            Ok(c) => c,
            Err(e) => {
                failure = Some(e);
                c
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
    }
    Ok(cmd)
}

/// `--config` or `VS_CONFIG`, found before full parsing.
pub fn locate(args: &[std::ffi::OsString]) -> Option<std::path::PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(Into::into);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    std::env::var_os("VS_CONFIG").map(Into::into)
}
