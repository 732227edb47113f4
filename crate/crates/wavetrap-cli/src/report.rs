//! Run reports: config echo, checks with measured values and tolerances,
//! fitted constants and written files.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One declared assertion.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub relation: Relation,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, tolerance, relation: Relation::AtMost }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, tolerance, relation: Relation::AtLeast }
    }

    /// NaN never passes.
    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.measured <= self.tolerance,
            Relation::AtLeast => self.measured >= self.tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub fits: Vec<(String, f64)>,
    pub series: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            command: config.command.name().to_string(),
            config: config.settings.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            checks: Vec::new(),
            fits: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn fit(&mut self, name: impl Into<String>, value: f64) {
        self.fits.push((name.into(), value));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    /// Line-oriented `kind key=value` text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command {}", self.command);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config {k}={v}");
        }
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            let verdict = if c.passed() { "pass" } else { "fail" };
            let _ = writeln!(out, "check {} measured={:.6e} {rel} tolerance={:.3e} {verdict}", c.name, c.measured, c.tolerance);
        }
        for (k, v) in &self.fits {
            let _ = writeln!(out, "fit {k}={v:.9e}");
        }
        for p in &self.series {
            let _ = writeln!(out, "series {}", p.display());
        }
        let _ = writeln!(out, "result {}", if self.passed() { "pass" } else { "fail" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_fails_both_relations() {
        assert!(!Check::at_most("x", f64::NAN, 1.0).passed());
        assert!(!Check::at_least("x", f64::NAN, 1.0).passed());
        assert!(Check::at_most("x", 1.0, 1.0).passed());
        assert!(Check::at_least("x", 2.0, 1.0).passed());
    }
}
