//! Flat `key = value` configuration with per-command schemas.
//!
//! Values are kept as strings until a command asks for a typed value, so the
//! resolved file echoed into each output directory is exactly what was read.
//! A value containing commas is a grid axis for commands that support grids.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// One accepted key, its default, and a short description.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "{origin}:{}: expected key = value, got {raw:?}",
                i + 1
            ))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("{origin}:{}: empty key", i + 1)));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(CliError::Config(format!(
                "{origin}:{}: duplicate key {k:?}",
                i + 1
            )));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Fully resolved settings for one command, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    order: Vec<&'static str>,
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    pub fn defaults(schema: &[Key]) -> Self {
        Self {
            order: schema.iter().map(|k| k.name).collect(),
            values: schema
                .iter()
                .map(|k| (k.name, k.default.to_string()))
                .collect(),
        }
    }

    /// Overrides one key, rejecting names outside the schema.
    pub fn set(&mut self, name: &str, value: &str, origin: &str) -> Result<(), CliError> {
        let Some(&k) = self.order.iter().find(|k| **k == name) else {
            return Err(CliError::Config(format!(
                "unknown key {name:?} ({origin}); accepted keys: {}",
                self.order.join(", ")
            )));
        };
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let origin = path.display().to_string();
        for (k, v) in parse_kv(&text, &origin)? {
            self.set(&k, &v, &origin)?;
        }
        Ok(())
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("key {name:?} is not in the schema"))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(name);
        raw.parse()
            .map_err(|e| CliError::Config(format!("bad value {raw:?} for key {name:?}: {e}")))
    }

    /// Comma-separated list value.
    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(name)
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|e| {
                    CliError::Config(format!("bad list entry {s:?} for key {name:?}: {e}"))
                })
            })
            .collect()
    }

    /// `None` for the literal `none`.
    pub fn optional<T: FromStr>(&self, name: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(name) == "none" {
            Ok(None)
        } else {
            self.get(name).map(Some)
        }
    }

    /// Cartesian product over keys whose value is a comma list, varying the
    /// last such key fastest. Keys in `scalar_only` may not be lists.
    pub fn expand_grid(&self, scalar_only: &[&str]) -> Result<Vec<Settings>, CliError> {
        let mut cells = vec![self.clone()];
        for &k in &self.order {
            let raw = self.raw(k);
            if !raw.contains(',') {
                continue;
            }
            if scalar_only.contains(&k) {
                return Err(CliError::Config(format!(
                    "key {k:?} does not accept a list"
                )));
            }
            let opts: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).collect();
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    opts.iter().map(move |v| {
                        let mut c = c.clone();
                        c.values.insert(k, v.clone());
                        c
                    })
                })
                .collect();
        }
        Ok(cells)
    }

    /// Keys whose value is a comma list.
    pub fn grid_axes(&self) -> Vec<&'static str> {
        self.order
            .iter()
            .copied()
            .filter(|k| self.raw(k).contains(','))
            .collect()
    }

    /// The settings as a config file, headed by comment lines.
    pub fn render(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str("# ");
            s.push_str(h);
            s.push('\n');
        }
        for k in &self.order {
            s.push_str(&format!("{k} = {}\n", self.raw(k)));
        }
        s
    }
}
