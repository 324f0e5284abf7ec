use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::commands::Outcome;
use crate::config::{Command, ExperimentConfig};
use crate::CliError;

/// Dotted `key=value` lines for every leaf of a TOML document.
fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::Array(items) if items.iter().any(|v| v.is_table()) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), v, out);
            }
        }
        toml::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

pub fn manifest_text(cfg: &ExperimentConfig, command: Command, outcome: &Outcome, wall_seconds: f64) -> String {
    let mut m = String::new();
    let mut line = |k: &str, v: &str| writeln!(m, "{k}={v}").expect("writing to a string");
    line("tool", env!("CARGO_PKG_NAME"));
    line("tool_version", env!("CARGO_PKG_VERSION"));
    line("command", command.name());
    line("seed", &cfg.seed().to_string());
    line("workers", &cfg.workers().to_string());
    line("wall_time_seconds", &format!("{wall_seconds:.3}"));
    let echo: toml::Value = toml::Value::try_from(cfg).expect("config serializes");
    let mut pairs = Vec::new();
    flatten("config", &echo, &mut pairs);
    for (k, v) in pairs {
        line(&k, &v);
    }
    for (file, _) in &outcome.files {
        line("artifact", file);
    }
    for (name, pass) in &outcome.checks {
        line(&format!("check.{name}"), if *pass { "PASS" } else { "FAIL" });
    }
    for note in &outcome.notes {
        line("note", &note.replace('\n', " "));
    }
    let all = outcome.checks.iter().all(|c| c.1);
    line("status", if all { "PASS" } else { "FAIL" });
    m
}

pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    command: Command,
    outcome: &Outcome,
    wall_seconds: f64,
) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, contents) in &outcome.files {
        fs::write(dir.join(name), contents)?;
    }
    fs::write(dir.join("manifest.txt"), manifest_text(cfg, command, outcome, wall_seconds))?;
    Ok(())
}
