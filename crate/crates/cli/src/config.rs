//! TOML defaults expressed as command-line flags.
//!
//! Top-level keys apply to every command; a table named after the subcommand
//! applies to that command only. Keys are long flag names with `-` or `_`.
//! The generated flags are placed before the user's own, and every
//! subcommand lets a later flag override an earlier one.

use std::ffi::OsString;
use std::path::Path;

use toml::Value;

use crate::error::CliError;

const SUBCOMMANDS: [&str; 5] = ["preprocess", "dca", "enrich", "simulate", "pipeline"];

/// Path given with `--config`, found before clap runs.
pub fn find_config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn scalar(key: &str, value: &Value) -> Result<Option<String>, CliError> {
    Ok(match value {
        Value::String(s) => Some(s.clone()),
        Value::Integer(i) => Some(i.to_string()),
        Value::Float(f) => Some(f.to_string()),
        Value::Boolean(_) => None,
        other => {
            return Err(CliError::Config(format!(
                "key '{key}' has unsupported value {other}"
            )))
        }
    })
}

fn push_flags(table: &toml::Table, out: &mut Vec<OsString>) -> Result<(), CliError> {
    for (key, value) in table {
        if key == "config" {
            return Err(CliError::Config(
                "config files cannot name another config".into(),
            ));
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Table(_) => {}
            Value::Boolean(true) => out.push(flag.into()),
            Value::Boolean(false) => {}
            Value::Array(items) => {
                for item in items {
                    if let Some(s) = scalar(key, item)? {
                        out.push(flag.clone().into());
                        out.push(s.into());
                    }
                }
            }
            v => {
                if let Some(s) = scalar(key, v)? {
                    out.push(flag.into());
                    out.push(s.into());
                }
            }
        }
    }
    Ok(())
}

/// Flags for `subcommand` read from a TOML file.
pub fn config_flags(path: &Path, subcommand: &str) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
    for (key, value) in &table {
        if value.is_table() && !SUBCOMMANDS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown config section [{key}]")));
        }
    }
    let mut flags = Vec::new();
    push_flags(&table, &mut flags)?;
    if let Some(Value::Table(section)) = table.get(subcommand) {
        push_flags(section, &mut flags)?;
    }
    Ok(flags)
}

/// Inserts config flags right after the subcommand name.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = find_config_path(&args) else {
        return Ok(args);
    };
    let Some(pos) = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let sub = args[pos].to_string_lossy().into_owned();
    let flags = config_flags(Path::new(&path), &sub)?;
    let mut merged = args[..=pos].to_vec();
    merged.extend(flags);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}
