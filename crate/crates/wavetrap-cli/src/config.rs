//! Flat key=value configuration, optionally seeded from a TOML file with the
//! same keys. Command-line values override file values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;

use crate::CliError;

/// Experiments exposed by the runner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    StationaryCheck,
    SpectralCheck,
    RotationCheck,
    ModulationCheck,
    ClassifyOde,
    SimulatePhysical,
    SimulateSelfsim,
    Trapping,
}

impl Command {
    /// Keys accepted by the command.
    pub fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            Command::StationaryCheck => &["p", "m", "n", "d", "trials", "seed"],
            Command::SpectralCheck => &["p", "n", "n_fine", "d", "trials", "seed"],
            Command::RotationCheck => &["m", "trials", "seed"],
            Command::ModulationCheck => &["p", "m", "n", "d", "eps", "seed"],
            Command::ClassifyOde => &["p", "mu", "xi0", "xi_max"],
            Command::SimulatePhysical => &["p", "m", "data", "d", "t_blowup", "x0", "nx", "half_width", "eta", "out"],
            Command::SimulateSelfsim => &["p", "m", "n", "eps", "s_len", "dt", "trials", "seed", "out"],
            Command::Trapping => &["p", "m", "n", "d", "theta", "eps", "s_len", "dt", "k0k1", "seed", "out"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::StationaryCheck => "stationary-check",
            Command::SpectralCheck => "spectral-check",
            Command::RotationCheck => "rotation-check",
            Command::ModulationCheck => "modulation-check",
            Command::ClassifyOde => "classify-ode",
            Command::SimulatePhysical => "simulate-physical",
            Command::SimulateSelfsim => "simulate-selfsim",
            Command::Trapping => "trapping",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw string settings. Lists are comma separated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut values = BTreeMap::new();
        for pair in pairs {
            let pair = pair.as_ref();
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected key=value, got `{pair}`")))?;
            if key.is_empty() {
                return Err(CliError::Usage(format!("empty key in `{pair}`")));
            }
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Reads a flat TOML table; arrays become comma-separated lists.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("config file: {e}")))?;
        let mut values = BTreeMap::new();
        for (key, value) in table {
            values.insert(key.clone(), toml_scalar(&key, &value)?);
        }
        Ok(Self { values })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// `other` wins on conflicts.
    pub fn merged(mut self, other: Settings) -> Self {
        self.values.extend(other.values);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!("unknown key `{k}` (accepted: {})", allowed.join(", ")))),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get_opt(key)?.unwrap_or(default))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.values.get(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn get_list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v.split(',').map(|item| parse_value(key, item.trim())).collect(),
        }
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Usage(format!("cannot parse `{value}` for key `{key}`")))
}

fn toml_scalar(key: &str, value: &toml::Value) -> Result<String, CliError> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(format!("{f:e}")),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, CliError> = items.iter().map(|v| toml_scalar(key, v)).collect();
            Ok(parts?.join(","))
        }
        _ => Err(CliError::Usage(format!("key `{key}` must be a scalar or a list"))),
    }
}

/// A command with its validated settings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub settings: Settings,
}

impl ExperimentConfig {
    pub fn new(command: Command, settings: Settings) -> Result<Self, CliError> {
        settings.check_keys(command.allowed_keys())?;
        Ok(Self { command, settings })
    }
}
