//! Run configuration, read from TOML. Unknown keys are rejected everywhere.

use crate::CliError;
use ipcc::sim::SimScenario;
use ipcc::{Coordinate, FitConfig, HazardSpec, ModelSpec, Restriction};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Simulate,
    Efficiency,
}

/// A: incident cases vs controls. B: all cases pooled vs controls. C: the
/// incident/prevalent model with the backward-time survival sub-model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardName {
    Exponential,
    Weibull,
    Piecewise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hazard: HazardName,
    /// Piecewise hazard only: interval starts, beginning at 0.
    pub breakpoints: Vec<f64>,
    /// Upper bound on backward times; required for `fit`.
    pub xi: f64,
    /// Covariates of the log odds ratio model, by column name; empty means all.
    pub incidence: Vec<String>,
    /// Covariates of the backward-time model, by column name; empty means all.
    pub survival: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hazard: HazardName::Weibull, breakpoints: vec![], xi: 0.0, incidence: vec![], survival: vec![] }
    }
}

impl ModelConfig {
    pub fn hazard_spec(&self) -> HazardSpec {
        match self.hazard {
            HazardName::Exponential => HazardSpec::Exponential,
            HazardName::Weibull => HazardSpec::Weibull,
            HazardName::Piecewise => HazardSpec::PiecewiseConstant { breakpoints: self.breakpoints.clone() },
        }
    }

    /// Resolves covariate names against the dataset columns.
    pub fn model_spec(&self, columns: &[String]) -> Result<ModelSpec, CliError> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(CliError::Config("model.xi must be set to a positive number".into()));
        }
        if self.hazard != HazardName::Piecewise && !self.breakpoints.is_empty() {
            return Err(CliError::Config("model.breakpoints only applies to hazard = \"piecewise\"".into()));
        }
        let resolve = |names: &[String], key: &str| -> Result<Vec<usize>, CliError> {
            if names.is_empty() {
                return Ok((0..columns.len()).collect());
            }
            names
                .iter()
                .map(|n| {
                    columns
                        .iter()
                        .position(|c| c == n)
                        .ok_or_else(|| CliError::Config(format!("model.{key}: no covariate column named {n:?}")))
                })
                .collect()
        };
        Ok(ModelSpec {
            incidence_covariates: resolve(&self.incidence, "incidence")?,
            survival_covariates: resolve(&self.survival, "survival")?,
            hazard: self.hazard_spec(),
            xi: self.xi,
        })
    }
}

/// One likelihood-ratio test of model C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrtConfig {
    pub label: String,
    /// Coordinates held fixed: `beta:<column>`, `zeta:<column>` (value 0 unless
    /// `=value` follows) or a hazard parameter such as `kappa_1=1`.
    pub fix: Vec<String>,
}

impl LrtConfig {
    pub fn restrictions(&self, spec: &ModelSpec, columns: &[String]) -> Result<Vec<Restriction>, CliError> {
        let bad = |m: String| CliError::Config(format!("report.lrt {:?}: {m}", self.label));
        self.fix
            .iter()
            .map(|item| {
                let (name, value) = match item.split_once('=') {
                    Some((n, v)) => {
                        let v: f64 = v.trim().parse().map_err(|_| bad(format!("{v:?} is not a number")))?;
                        (n.trim(), Some(v))
                    }
                    None => (item.trim(), None),
                };
                let position = |indices: &[usize], col: &str| indices.iter().position(|&j| columns[j] == col);
                let coordinate = if let Some(col) = name.strip_prefix("beta:") {
                    position(&spec.incidence_covariates, col).map(Coordinate::Beta)
                } else if let Some(col) = name.strip_prefix("zeta:") {
                    position(&spec.survival_covariates, col).map(Coordinate::Zeta)
                } else {
                    let k = spec.hazard.param_names().iter().position(|p| p == name);
                    if k.is_some() && value.is_none() {
                        return Err(bad(format!("hazard parameter {name} needs an explicit value")));
                    }
                    k.map(Coordinate::Hazard)
                };
                let coordinate = coordinate.ok_or_else(|| bad(format!("{name:?} is not a coordinate of model C")))?;
                Ok(Restriction { coordinate, value: value.unwrap_or(0.0) })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub models: Vec<Model>,
    pub sandwich: bool,
    pub jackknife: bool,
    pub jackknife_max_n: usize,
    pub lrt: Vec<LrtConfig>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            models: vec![Model::A, Model::B, Model::C],
            sandwich: true,
            jackknife: false,
            jackknife_max_n: ipcc::inference::JACKKNIFE_MAX_N,
            lrt: vec![],
        }
    }
}

/// Variants compared against `scenario` by the efficiency command: variant k
/// has `n1[k]` incident and `n2[k]` prevalent cases.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyConfig {
    pub n1: Vec<usize>,
    pub n2: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub scenario: SimScenario,
    #[serde(default)]
    pub efficiency: EfficiencyConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

/// Last line of the config block written at the top of every output file.
pub const HEADER_END: &str = "# end of config";

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub replications: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Reads the config embedded in the `# ` header block of an output file.
    pub fn from_header(text: &str) -> Result<Self, CliError> {
        let body: String = text
            .lines()
            .take_while(|l| l.starts_with('#') && *l != HEADER_END)
            .filter_map(|l| l.strip_prefix("# ").or_else(|| l.strip_prefix('#')))
            .skip_while(|l| !l.starts_with("command"))
            .map(|l| format!("{l}\n"))
            .collect();
        Self::from_toml(&body)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.scenario.seed = seed;
            self.fit.seed = seed;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        if let Some(k) = o.replications {
            self.scenario.replications = k;
        }
    }

    /// The resolved config as a comment block for the top of an output file.
    pub fn header(&self) -> String {
        let mut s = format!("# ipcc {} {}\n", env!("CARGO_PKG_VERSION"), self.command_name());
        // Where the files go and how many threads ran does not change them.
        let resolved = RunConfig { out: None, threads: None, ..self.clone() };
        for line in resolved.to_toml().lines() {
            if line.is_empty() {
                s.push_str("#\n");
            } else {
                s.push_str(&format!("# {line}\n"));
            }
        }
        s.push_str(HEADER_END);
        s.push('\n');
        s
    }

    fn command_name(&self) -> &'static str {
        match self.command {
            Command::Fit => "fit",
            Command::Simulate => "simulate",
            Command::Efficiency => "efficiency",
        }
    }
}
