//! Domain data model: subjects, datasets, model specifications and parameter vectors.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Sampling group of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupLabel {
    Control,
    IncidentCase,
    PrevalentCase,
}

impl GroupLabel {
    /// Integer code used by the CSV schema (0, 1, 2).
    pub fn code(self) -> u8 {
        match self {
            GroupLabel::Control => 0,
            GroupLabel::IncidentCase => 1,
            GroupLabel::PrevalentCase => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(GroupLabel::Control),
            1 => Some(GroupLabel::IncidentCase),
            2 => Some(GroupLabel::PrevalentCase),
            _ => None,
        }
    }

    pub fn is_case(self) -> bool {
        !matches!(self, GroupLabel::Control)
    }
}

/// One observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub group: GroupLabel,
    pub covariates: Vec<f64>,
    /// Time from diagnosis to sampling; present only for prevalent cases.
    pub backward_time: Option<f64>,
}

impl Subject {
    pub fn control(covariates: Vec<f64>) -> Self {
        Subject { group: GroupLabel::Control, covariates, backward_time: None }
    }

    pub fn incident(covariates: Vec<f64>) -> Self {
        Subject { group: GroupLabel::IncidentCase, covariates, backward_time: None }
    }

    pub fn prevalent(covariates: Vec<f64>, backward_time: f64) -> Self {
        Subject {
            group: GroupLabel::PrevalentCase,
            covariates,
            backward_time: Some(backward_time),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub covariate_names: Vec<String>,
}

/// Numbers of controls, incident cases and prevalent cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
}

impl GroupCounts {
    pub fn total(&self) -> usize {
        self.n0 + self.n1 + self.n2
    }
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, subjects: Vec<Subject>) -> Self {
        Dataset { subjects, covariate_names }
    }

    /// Builds a dataset with covariates named `x1..xd`.
    pub fn with_default_names(dim: usize, subjects: Vec<Subject>) -> Self {
        let names = (1..=dim).map(|j| format!("x{j}")).collect();
        Dataset { subjects, covariate_names: names }
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn max_backward_time(&self) -> Option<f64> {
        self.subjects
            .iter()
            .filter_map(|s| s.backward_time)
            .fold(None, |acc, a| Some(acc.map_or(a, |m: f64| m.max(a))))
    }

    /// Keeps the subjects whose group satisfies `keep`.
    pub fn filter_groups(&self, keep: impl Fn(GroupLabel) -> bool) -> Dataset {
        Dataset {
            subjects: self.subjects.iter().filter(|s| keep(s.group)).cloned().collect(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Adds `shift` to covariate column `column` of every subject.
    pub fn shift_covariate(&self, column: usize, shift: f64) -> Dataset {
        let mut out = self.clone();
        for s in &mut out.subjects {
            s.covariates[column] += shift;
        }
        out
    }
}

pub fn group_counts(data: &Dataset) -> GroupCounts {
    let mut c = GroupCounts::default();
    for s in &data.subjects {
        match s.group {
            GroupLabel::Control => c.n0 += 1,
            GroupLabel::IncidentCase => c.n1 += 1,
            GroupLabel::PrevalentCase => c.n2 += 1,
        }
    }
    c
}

/// Baseline hazard family of the backward-time survival sub-model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HazardSpec {
    Exponential,
    Weibull,
    /// Piecewise-constant hazard; `breakpoints` start at 0 and the last interval extends to ξ.
    PiecewiseConstant { breakpoints: Vec<f64> },
}

impl HazardSpec {
    pub fn n_params(&self) -> usize {
        match self {
            HazardSpec::Exponential => 1,
            HazardSpec::Weibull => 2,
            HazardSpec::PiecewiseConstant { breakpoints } => breakpoints.len(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            HazardSpec::Exponential => vec!["rate".into()],
            HazardSpec::Weibull => vec!["kappa_1".into(), "kappa_2".into()],
            HazardSpec::PiecewiseConstant { breakpoints } => {
                (1..=breakpoints.len()).map(|k| format!("lambda_{k}")).collect()
            }
        }
    }
}

/// Which covariates enter each sub-model, the hazard family and the backward-time bound ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub incidence_covariates: Vec<usize>,
    pub survival_covariates: Vec<usize>,
    pub hazard: HazardSpec,
    pub xi: f64,
}

impl ModelSpec {
    /// All `dim` covariates in both sub-models.
    pub fn full(dim: usize, hazard: HazardSpec, xi: f64) -> Self {
        ModelSpec {
            incidence_covariates: (0..dim).collect(),
            survival_covariates: (0..dim).collect(),
            hazard,
            xi,
        }
    }
}

/// θ = (α, ν, β, hazard parameters, ζ) on the natural scale.
///
/// `alpha` and `nu` are the sample-size-offset intercepts that the profile
/// likelihood is parameterized by; see [`ParamVector::alpha_star`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub alpha: f64,
    pub nu: f64,
    pub beta: Vec<f64>,
    pub hazard_params: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl ParamVector {
    /// α* = α − log(n₁/n₀).
    pub fn alpha_star(&self, counts: GroupCounts) -> f64 {
        self.alpha - (counts.n1 as f64 / counts.n0 as f64).ln()
    }

    /// ν* = ν − log(n₂/n₀).
    pub fn nu_star(&self, counts: GroupCounts) -> f64 {
        self.nu - (counts.n2 as f64 / counts.n0 as f64).ln()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite()
            && self.nu.is_finite()
            && self.beta.iter().chain(&self.hazard_params).chain(&self.zeta).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CovariateDimension { row: usize, expected: usize, found: usize },
    NonFiniteCovariate { row: usize, column: usize },
    MissingBackwardTime { row: usize },
    BackwardTimeOnNonPrevalent { row: usize },
    NegativeBackwardTime { row: usize, value: f64 },
    BackwardTimeExceedsXi { row: usize, value: f64, xi: f64 },
    NoControls,
    NoCases,
    CovariateIndexOutOfRange { index: usize, dim: usize },
    InvalidXi(f64),
    InvalidBreakpoints(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CovariateDimension { row, expected, found } => {
                write!(f, "row {row}: expected {expected} covariates, found {found}")
            }
            Violation::NonFiniteCovariate { row, column } => {
                write!(f, "row {row}: non-finite covariate in column {column}")
            }
            Violation::MissingBackwardTime { row } => {
                write!(f, "row {row}: prevalent case without backward time")
            }
            Violation::BackwardTimeOnNonPrevalent { row } => {
                write!(f, "row {row}: backward time on non-prevalent subject")
            }
            Violation::NegativeBackwardTime { row, value } => {
                write!(f, "row {row}: negative backward time {value}")
            }
            Violation::BackwardTimeExceedsXi { row, value, xi } => {
                write!(f, "row {row}: A exceeds ξ (A = {value}, ξ = {xi})")
            }
            Violation::NoControls => write!(f, "dataset has no controls"),
            Violation::NoCases => write!(f, "dataset has no cases"),
            Violation::CovariateIndexOutOfRange { index, dim } => {
                write!(f, "model covariate index {index} out of range for {dim} covariates")
            }
            Violation::InvalidXi(xi) => write!(f, "ξ must be positive and finite, got {xi}"),
            Violation::InvalidBreakpoints(msg) => write!(f, "invalid breakpoints: {msg}"),
        }
    }
}

/// Outcome of [`validate_dataset`]; empty means the dataset is usable under the spec.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Collects every invariant violation of `data` under `spec`.
pub fn validate_dataset(data: &Dataset, spec: &ModelSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let dim = data.dim();
    let xi = spec.xi;
    if !(xi.is_finite() && xi > 0.0) {
        violations.push(Violation::InvalidXi(xi));
    }
    for &index in spec.incidence_covariates.iter().chain(&spec.survival_covariates) {
        if index >= dim {
            violations.push(Violation::CovariateIndexOutOfRange { index, dim });
        }
    }
    if let HazardSpec::PiecewiseConstant { breakpoints } = &spec.hazard {
        if let Err(msg) = check_breakpoints(breakpoints, xi) {
            violations.push(Violation::InvalidBreakpoints(msg));
        }
    }
    for (i, s) in data.subjects.iter().enumerate() {
        // Rows are numbered from 1, like the data rows of the CSV.
        let row = i + 1;
        if s.covariates.len() != dim {
            violations.push(Violation::CovariateDimension {
                row,
                expected: dim,
                found: s.covariates.len(),
            });
        }
        for (column, v) in s.covariates.iter().enumerate() {
            if !v.is_finite() {
                violations.push(Violation::NonFiniteCovariate { row, column });
            }
        }
        match (s.group, s.backward_time) {
            (GroupLabel::PrevalentCase, None) => {
                violations.push(Violation::MissingBackwardTime { row })
            }
            (GroupLabel::PrevalentCase, Some(a)) => {
                if !(a >= 0.0) {
                    violations.push(Violation::NegativeBackwardTime { row, value: a });
                } else if a > xi {
                    violations.push(Violation::BackwardTimeExceedsXi { row, value: a, xi });
                }
            }
            (_, Some(_)) => violations.push(Violation::BackwardTimeOnNonPrevalent { row }),
            (_, None) => {}
        }
    }
    let counts = group_counts(data);
    if counts.n0 == 0 {
        violations.push(Violation::NoControls);
    }
    if counts.n1 + counts.n2 == 0 {
        violations.push(Violation::NoCases);
    }
    ValidationReport { violations }
}

pub(crate) fn check_breakpoints(breakpoints: &[f64], xi: f64) -> Result<(), String> {
    match breakpoints.first() {
        None => return Err("need at least one interval".into()),
        Some(&b) if b != 0.0 => return Err(format!("first breakpoint must be 0, got {b}")),
        _ => {}
    }
    if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
        return Err("breakpoints must be strictly increasing".into());
    }
    if let Some(&last) = breakpoints.last() {
        if last >= xi {
            return Err(format!("last breakpoint {last} must lie below ξ = {xi}"));
        }
    }
    Ok(())
}
