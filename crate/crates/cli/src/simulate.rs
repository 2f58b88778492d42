//! `simulate` and `efficiency`.

use crate::config::RunConfig;
use crate::{csv_line, text_table, write_file, CliError};
use ipcc::io::{format_full, format_short};
use ipcc::sim::{efficiency_curve, run_scenario, EfficiencyRow, SimScenario, SimSummary};
use std::path::{Path, PathBuf};
use std::time::Instant;

fn failure(config: &RunConfig, out: &Path, message: String, written: &mut Vec<PathBuf>) -> CliError {
    let body = format!("{}\n{message}\n", config.header());
    if let Err(e) = write_file(out, "diagnostics.txt", &body, written) {
        return CliError::Failed(format!("{message} (writing diagnostics failed: {e})"));
    }
    CliError::Failed(message)
}

pub fn summary_csv(s: &SimSummary) -> String {
    let mut text = format!("# replications {}, converged {}\n", s.replications, s.converged);
    if s.single_fit {
        text.push_str("# single fit: SD_emp is undefined\n");
    }
    text.push_str(&csv_line(&["parameter", "truth", "mean", "sd_emp", "sd_asy"].map(String::from)));
    for j in 0..s.names.len() {
        text.push_str(&csv_line(&[
            s.names[j].clone(),
            format_full(s.truth[j]),
            format_full(s.mean[j]),
            format_full(s.sd_emp[j]),
            format_full(s.sd_asy[j]),
        ]));
    }
    text
}

pub fn replications_csv(s: &SimSummary) -> String {
    let mut head = vec!["replication".to_string(), "converged".into(), "loglik".into()];
    head.extend(s.names.iter().cloned());
    let mut text = csv_line(&head);
    for o in &s.outcomes {
        let mut row = vec![o.replication.to_string(), o.converged.to_string(), format_full(o.loglik)];
        row.extend(o.estimates.iter().map(|&v| format_full(v)));
        text.push_str(&csv_line(&row));
    }
    text
}

pub fn summary_text(s: &SimSummary, seconds: f64) -> String {
    let c = s.counts;
    let mut text = format!("controls {}, incident {}, prevalent {}\n", c.n0, c.n1, c.n2);
    text.push_str(&format!("{} of {} replications converged\n", s.converged, s.replications));
    if s.single_fit {
        text.push_str("single fit (K = 1): SD_emp is undefined\n");
    }
    text.push('\n');
    let rows: Vec<Vec<String>> = (0..s.names.len())
        .map(|j| {
            vec![
                s.names[j].clone(),
                format_short(s.truth[j]),
                format_short(s.mean[j]),
                format_short(s.sd_emp[j]),
                format_short(s.sd_asy[j]),
            ]
        })
        .collect();
    text.push_str(&text_table(&["parameter", "truth", "Est", "SD_emp", "SD_asy"], &rows));
    text.push_str(&format!("\nruntime {seconds:.1} s\n"));
    text
}

pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let start = Instant::now();
    let summary = match run_scenario(&config.scenario) {
        Ok(s) => s,
        Err(e) => return Err(failure(config, out, format!("scenario failed: {e}"), &mut written)),
    };
    let header = config.header();
    write_file(out, "summary.csv", &(header.clone() + &summary_csv(&summary)), &mut written)?;
    write_file(out, "replications.csv", &(header.clone() + &replications_csv(&summary)), &mut written)?;
    let elapsed = start.elapsed().as_secs_f64();
    write_file(out, "summary.txt", &(header + "\n" + &summary_text(&summary, elapsed)), &mut written)?;
    let failed: Vec<String> = summary
        .outcomes
        .iter()
        .filter(|o| !o.converged)
        .map(|o| format!("replication {}: {}", o.replication, o.diagnostic))
        .collect();
    if !failed.is_empty() {
        let body = format!("{}\n{}\n", config.header(), failed.join("\n"));
        write_file(out, "diagnostics.txt", &body, &mut written)?;
    }
    Ok(written)
}

/// The variant scenarios: the base with (n1, n2) replaced, each on its own seed.
pub fn variants(config: &RunConfig) -> Result<Vec<SimScenario>, CliError> {
    let e = &config.efficiency;
    if e.n1.len() != e.n2.len() || e.n1.is_empty() {
        return Err(CliError::Config("efficiency.n1 and efficiency.n2 must be non-empty and of equal length".into()));
    }
    Ok(e.n1
        .iter()
        .zip(&e.n2)
        .enumerate()
        .map(|(k, (&n1, &n2))| SimScenario { n1, n2, seed: config.scenario.seed + 1 + k as u64, ..config.scenario.clone() })
        .collect())
}

pub fn efficiency_csv(base: &SimSummary, rows: &[EfficiencyRow]) -> String {
    let head = ["variant", "n1", "n2", "proportion", "added_incident", "added_prevalent", "coordinate", "ratio"];
    let mut text = csv_line(&head.map(String::from));
    for r in rows {
        text.push_str(&csv_line(&[
            r.variant.to_string(),
            r.n1.to_string(),
            r.n2.to_string(),
            format_full(r.proportion),
            (r.n1 as i64 - base.counts.n1 as i64).to_string(),
            (r.n2 as i64 - base.counts.n2 as i64).to_string(),
            r.coordinate.clone(),
            format_full(r.ratio),
        ]));
    }
    text
}

pub fn cmd_efficiency(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let scenarios = variants(config)?;
    let start = Instant::now();
    let base = match run_scenario(&config.scenario) {
        Ok(s) => s,
        Err(e) => return Err(failure(config, out, format!("base scenario failed: {e}"), &mut written)),
    };
    let mut summaries = Vec::with_capacity(scenarios.len());
    for (k, scn) in scenarios.iter().enumerate() {
        match run_scenario(scn) {
            Ok(s) => summaries.push(s),
            Err(e) => return Err(failure(config, out, format!("variant {k} (n1 = {}, n2 = {}) failed: {e}", scn.n1, scn.n2), &mut written)),
        }
    }
    let rows = efficiency_curve(&base, &summaries);
    let header = config.header();
    write_file(out, "efficiency.csv", &(header.clone() + &efficiency_csv(&base, &rows)), &mut written)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.variant.to_string(), r.n1.to_string(), r.n2.to_string(), r.coordinate.clone(), format_short(r.ratio)])
        .collect();
    let text = format!(
        "{header}\nbase: controls {}, incident {}, prevalent {}\nratio = var(base) / var(variant)\n\n{}\nruntime {:.1} s\n",
        base.counts.n0,
        base.counts.n1,
        base.counts.n2,
        text_table(&["variant", "n1", "n2", "coordinate", "ratio"], &table),
        start.elapsed().as_secs_f64()
    );
    write_file(out, "efficiency.txt", &text, &mut written)?;
    Ok(written)
}
