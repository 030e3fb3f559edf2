//! Merge a JSON config file into the argument list. Keys are long flag
//! names without the dashes. A nested object keyed by a subcommand name
//! applies only to that subcommand. Flags present on the command line win.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

const SUBCOMMANDS: [&str; 11] = [
    "gen-landscapes",
    "simulate",
    "encode",
    "trim",
    "split",
    "train",
    "protocol",
    "tune",
    "report",
    "gradcheck",
    "audit-params",
];

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn present(argv: &[String], flag: &str) -> bool {
    let long = format!("--{flag}");
    let eq = format!("{long}=");
    argv.iter().any(|a| *a == long || a.starts_with(&eq))
}

fn push_value(out: &mut Vec<String>, key: &str, v: &Value) -> Result<()> {
    match v {
        Value::Bool(true) => out.push(format!("--{key}")),
        Value::Bool(false) | Value::Null => {}
        Value::Number(n) => out.extend([format!("--{key}"), n.to_string()]),
        Value::String(s) => out.extend([format!("--{key}"), s.clone()]),
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|i| match i {
                    Value::Number(n) => Ok(n.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    other => bail!("config key `{key}`: unsupported list item {other}"),
                })
                .collect::<Result<_>>()?;
            if key == "inputs" {
                out.push(format!("--{key}"));
                out.extend(parts);
            } else {
                out.extend([format!("--{key}"), parts.join(",")]);
            }
        }
        Value::Object(_) => bail!("config key `{key}`: nested objects are only allowed under a subcommand name"),
    }
    Ok(())
}

fn inject(out: &mut Vec<String>, argv: &[String], map: &Map<String, Value>) -> Result<()> {
    for (key, v) in map {
        if SUBCOMMANDS.contains(&key.as_str()) || key == "config" || present(argv, key) {
            continue;
        }
        push_value(out, key, v)?;
    }
    Ok(())
}

/// Returns `argv` with config values appended for every flag not given.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let argv: Vec<String> = argv.into_iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&argv) else {
        return Ok(argv.into_iter().map(OsString::from).collect());
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
    let Value::Object(map) = value else {
        bail!("config {} must be a JSON object", path.display());
    };
    let sub = argv.iter().skip(1).find(|a| SUBCOMMANDS.contains(&a.as_str())).cloned();

    let mut extra = Vec::new();
    if let Some(Value::Object(section)) = sub.as_deref().and_then(|s| map.get(s)) {
        inject(&mut extra, &argv, section)?;
    }
    let mut top = map.clone();
    if let Some(Value::Object(section)) = sub.as_deref().and_then(|s| map.get(s)) {
        for k in section.keys() {
            top.remove(k);
        }
    }
    inject(&mut extra, &argv, &top)?;

    // Appended after the subcommand so both global and subcommand flags parse.
    let mut out = argv;
    out.extend(extra);
    Ok(out.into_iter().map(OsString::from).collect())
}
