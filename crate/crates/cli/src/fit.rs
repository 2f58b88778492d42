//! `fit`: models A, B and C on a dataset, with sandwich and/or jackknife SEs.

use crate::config::{Model, RunConfig};
use crate::{csv_line, text_table, write_file, CliError};
use ipcc::estimation::{fit_logistic, pooled_cases};
use ipcc::inference::{jackknife_se, lrt_against, natural_vector, sandwich_for_fit, LrtResult};
use ipcc::io::{format_full, format_short, read_dataset};
use ipcc::{fit_ipcc, group_counts, validate_dataset, Dataset, FitResult, GroupCounts, GroupLabel, ModelSpec};
use std::path::{Path, PathBuf};

const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone)]
pub struct CoefficientRow {
    pub parameter: String,
    pub estimate: f64,
    pub se_sandwich: Option<f64>,
    pub se_jackknife: Option<f64>,
}

impl CoefficientRow {
    /// The jackknife SE when computed, else the sandwich SE.
    pub fn se(&self) -> Option<f64> {
        self.se_jackknife.or(self.se_sandwich)
    }

    pub fn ci(&self) -> Option<(f64, f64)> {
        self.se().map(|s| (self.estimate - Z_95 * s, self.estimate + Z_95 * s))
    }
}

#[derive(Debug, Clone)]
pub struct ModelReport {
    pub model: Model,
    pub counts: GroupCounts,
    pub loglik: f64,
    pub converged: bool,
    pub diagnostic: String,
    pub rows: Vec<CoefficientRow>,
    pub notes: Vec<String>,
    pub lrts: Vec<(String, Result<LrtResult, String>)>,
}

fn title(model: Model) -> &'static str {
    match model {
        Model::A => "Model A: incident cases vs controls (logistic regression)",
        Model::B => "Model B: incident and prevalent cases pooled vs controls (logistic regression)",
        Model::C => "Model C: incident and prevalent cases with backward-time model",
    }
}

fn natural_names(fit: &FitResult) -> Vec<String> {
    fit.names
        .iter()
        .map(|n| match n.as_str() {
            "alpha" => "alpha*".to_string(),
            "nu" => "nu*".to_string(),
            s => s.strip_prefix("log_").unwrap_or(s).to_string(),
        })
        .collect()
}

fn fit_one(model: Model, data: &Dataset, spec: &ModelSpec, config: &RunConfig) -> Result<ModelReport, CliError> {
    let report = &config.report;
    let (subset, fit, spec) = match model {
        Model::A | Model::B => {
            let subset = match model {
                Model::A => data.filter_groups(|g| g != GroupLabel::PrevalentCase),
                _ => pooled_cases(data),
            };
            let fit = fit_logistic(&subset, &spec.incidence_covariates, &config.fit)
                .map_err(|e| CliError::Failed(format!("model {model:?}: {e}")))?;
            let two_group = ModelSpec { survival_covariates: vec![], ..spec.clone() };
            (subset, fit, two_group)
        }
        Model::C => {
            let fit = fit_ipcc(data, spec, &config.fit).map_err(|e| CliError::Failed(format!("model C: {e}")))?;
            (data.clone(), fit, spec.clone())
        }
    };

    let mut notes = Vec::new();
    let estimates = natural_vector(&fit);
    let sandwich = if report.sandwich && fit.converged {
        match sandwich_for_fit(&fit, &subset, &spec) {
            Ok(c) => Some(c.natural_sd(&fit.layout, &fit.unconstrained)),
            Err(e) => {
                notes.push(format!("sandwich SEs unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let jackknife = if report.jackknife && fit.converged {
        match jackknife_se(&subset, &spec, &config.fit, &fit, report.jackknife_max_n) {
            Ok(j) => {
                if j.failures > 0 {
                    notes.push(format!("jackknife: {} of {} refits failed and were dropped", j.failures, j.n));
                }
                Some(j.se)
            }
            Err(e) => {
                notes.push(format!("jackknife SEs unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let rows = natural_names(&fit)
        .into_iter()
        .enumerate()
        .map(|(i, parameter)| CoefficientRow {
            parameter,
            estimate: estimates[i],
            se_sandwich: sandwich.as_ref().map(|s| s[i]),
            se_jackknife: jackknife.as_ref().map(|s| s[i]),
        })
        .collect();

    let mut lrts = Vec::new();
    if model == Model::C && fit.converged {
        for test in &report.lrt {
            let restrictions = test.restrictions(&spec, &data.covariate_names)?;
            let result = lrt_against(&fit, data, &spec, &config.fit, &restrictions).map_err(|e| e.to_string());
            lrts.push((test.label.clone(), result));
        }
    }
    Ok(ModelReport {
        model,
        counts: group_counts(&subset),
        loglik: fit.loglik,
        converged: fit.converged,
        diagnostic: fit.diagnostic.clone(),
        rows,
        notes,
        lrts,
    })
}

/// Fits the requested models; refuses model C without prevalent cases.
pub fn fit_models(data: &Dataset, config: &RunConfig) -> Result<Vec<ModelReport>, CliError> {
    let spec = config.model.model_spec(&data.covariate_names)?;
    let validation = validate_dataset(data, &spec);
    if !validation.is_ok() {
        let lines: Vec<String> = validation.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Input(lines.join("\n")));
    }
    let mut models = config.report.models.clone();
    models.sort();
    models.dedup();
    if models.contains(&Model::C) && group_counts(data).n2 == 0 {
        return Err(CliError::Input(
            "model C needs prevalent cases, but the data has none (n2 = 0); use model A, which is the same analysis".into(),
        ));
    }
    models.into_iter().map(|m| fit_one(m, data, &spec, config)).collect()
}

pub fn cmd_fit(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let input = config.input.as_ref().ok_or_else(|| CliError::Config("fit needs `input`".into()))?;
    let file = std::fs::File::open(input).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let data = read_dataset(file).map_err(|e| CliError::Input(e.to_string()))?;
    let reports = fit_models(&data, config)?;

    let header = config.header();
    let mut written = Vec::new();
    write_file(out, "coefficients.csv", &(header.clone() + &coefficients_csv(&reports)), &mut written)?;
    write_file(out, "lrt.csv", &(header.clone() + &lrt_csv(&reports)), &mut written)?;
    write_file(out, "report.txt", &(header + "\n" + &report_text(&reports)), &mut written)?;

    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("model {:?} did not converge: {}", r.model, r.diagnostic))
        .chain(reports.iter().flat_map(|r| {
            r.lrts.iter().filter_map(move |(l, res)| res.as_ref().err().map(|e| format!("model {:?} LRT {l:?}: {e}", r.model)))
        }))
        .collect();
    if failed.is_empty() {
        Ok(written)
    } else {
        Err(CliError::Failed(failed.join("\n")))
    }
}

fn opt_full(v: Option<f64>) -> String {
    v.map(format_full).unwrap_or_default()
}

fn opt_short(v: Option<f64>) -> String {
    v.map(format_short).unwrap_or_else(|| "-".into())
}

pub fn coefficients_csv(reports: &[ModelReport]) -> String {
    let mut s = csv_line(&["model", "parameter", "estimate", "se_sandwich", "se_jackknife", "ci_lower", "ci_upper"].map(String::from));
    for r in reports {
        for row in &r.rows {
            let ci = row.ci();
            s.push_str(&csv_line(&[
                format!("{:?}", r.model),
                row.parameter.clone(),
                format_full(row.estimate),
                opt_full(row.se_sandwich),
                opt_full(row.se_jackknife),
                opt_full(ci.map(|c| c.0)),
                opt_full(ci.map(|c| c.1)),
            ]));
        }
    }
    s
}

pub fn lrt_csv(reports: &[ModelReport]) -> String {
    let mut s = csv_line(&["model", "label", "statistic", "df", "p_value"].map(String::from));
    for r in reports {
        for (label, res) in &r.lrts {
            if let Ok(t) = res {
                s.push_str(&csv_line(&[
                    format!("{:?}", r.model),
                    label.clone(),
                    format_full(t.statistic),
                    t.df.to_string(),
                    format_full(t.p_value),
                ]));
            }
        }
    }
    s
}

pub fn report_text(reports: &[ModelReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(title(r.model));
        s.push('\n');
        let c = r.counts;
        s.push_str(&format!(
            "controls {}, incident {}, prevalent {}; log-likelihood {}; {}\n\n",
            c.n0,
            c.n1,
            c.n2,
            format_short(r.loglik),
            if r.converged { "converged".to_string() } else { format!("NOT CONVERGED ({})", r.diagnostic) }
        ));
        let rows: Vec<Vec<String>> = r
            .rows
            .iter()
            .map(|row| {
                let ci = row.ci();
                vec![
                    row.parameter.clone(),
                    format_short(row.estimate),
                    opt_short(row.se_sandwich),
                    opt_short(row.se_jackknife),
                    ci.map_or("-".into(), |(lo, hi)| format!("({}, {})", format_short(lo), format_short(hi))),
                ]
            })
            .collect();
        s.push_str(&text_table(&["parameter", "estimate", "SE sandwich", "SE jackknife", "95% CI"], &rows));
        for (label, res) in &r.lrts {
            match res {
                Ok(t) => s.push_str(&format!(
                    "LRT {label}: statistic {}, df {}, p = {}\n",
                    format_short(t.statistic),
                    t.df,
                    format_short(t.p_value)
                )),
                Err(e) => s.push_str(&format!("LRT {label}: failed: {e}\n")),
            }
        }
        for n in &r.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s.push('\n');
    }
    s
}
