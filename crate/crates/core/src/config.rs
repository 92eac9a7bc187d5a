//! TOML experiment configs: profiles, overrides and diagnostics.
//!
//! Resolution order, later wins: profile defaults, config file, `--set` overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::spec::{ExperimentSpec, RunInfo};

/// Named default sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small network and few realizations, minutes on a desktop.
    Desk,
    /// Full-size network and 2000 realizations.
    Paper,
}

impl Profile {
    pub fn spec(&self) -> ExperimentSpec {
        let mut s = ExperimentSpec::default();
        if *self == Profile::Desk {
            s.base.n0 = 100;
            s.base.n_neighbor = 100;
            s.base.l = 20;
            s.base.m = 16;
            s.realizations = 200;
        }
        s
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?}; expected desk or paper"))),
        }
    }
}

/// 1-based line and column of byte offset `pos`.
fn line_col(text: &str, pos: usize) -> (usize, usize) {
    let pos = pos.min(text.len());
    let before = &text[..pos];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Line declaring the dotted key `key` (e.g. `base.p_a`), if present.
pub fn locate_key(text: &str, key: &str) -> Option<usize> {
    let mut table = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[') {
            table = h.trim_end_matches(']').trim().to_string();
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim().trim_matches('"');
        let full = if table.is_empty() {
            k.to_string()
        } else {
            format!("{table}.{k}")
        };
        if full == key {
            return Some(i + 1);
        }
    }
    None
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// Applies one `key.path=value` override; values that are not TOML literals are taken as strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {assignment:?} has an empty key")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {assignment:?}: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Resolves config text into a validated spec.
///
/// `source` names the text in diagnostics.
pub fn resolve_str(text: &str, source: &str, profile: Profile, overrides: &[String]) -> Result<ExperimentSpec> {
    // schema check on the raw text for line-accurate messages
    if let Err(e) = toml::from_str::<ExperimentSpec>(text) {
        let loc = e
            .span()
            .map(|s| {
                let (l, c) = line_col(text, s.start);
                format!("{source}:{l}:{c}")
            })
            .unwrap_or_else(|| source.to_string());
        return Err(Error::Config(format!("{loc}: {}", e.message().trim())));
    }
    let user: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("{source}: {}", e.message().trim())))?;
    let mut table =
        toml::Table::try_from(profile.spec()).map_err(|e| Error::Config(format!("profile {profile}: {e}")))?;
    merge(&mut table, user);
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let spec = ExperimentSpec::deserialize(toml::Value::Table(table))
        .map_err(|e| Error::Config(format!("{source} with overrides: {}", e.message().trim())))?;
    if let Err(e) = spec.validate() {
        let name = match &e {
            Error::InvalidParameter { name, .. } => Some(*name),
            _ => None,
        };
        let from_override =
            name.is_some_and(|n| overrides.iter().any(|o| o.split('=').next().map(str::trim) == Some(n)));
        let loc = match name.and_then(|n| locate_key(text, n)) {
            Some(line) if !from_override => format!("{source}:{line}"),
            _ if from_override => format!("{source} (--set)"),
            _ => source.to_string(),
        };
        return Err(Error::Config(format!("{loc}: {e}")));
    }
    Ok(spec)
}

/// Reads and resolves a config file, recording provenance in `spec.run`.
pub fn load_config(path: &Path, profile: Profile, overrides: &[String]) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut spec = resolve_str(&text, &path.display().to_string(), profile, overrides)?;
    spec.run = Some(RunInfo {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        profile: profile.to_string(),
        config_path: path.display().to_string(),
        overrides: overrides.to_vec(),
    });
    Ok(spec)
}

/// Resolved spec as TOML.
pub fn to_toml(spec: &ExperimentSpec) -> Result<String> {
    toml::to_string_pretty(spec).map_err(|e| Error::Config(format!("serializing config: {e}")))
}
