//! Library side of the `ipcc` command-line tool: configuration, the three
//! commands, and their output files.

pub mod config;
pub mod fit;
pub mod simulate;

use config::{Command, Overrides, RunConfig};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    /// Non-convergence or a failed scenario; outputs may still have been written.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 2,
            _ => 1,
        }
    }
}

/// Loads, overrides and runs a configuration. Returns the files written.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let mut config = RunConfig::from_toml(&text)?;
    config.apply(overrides);
    run_config(&config)
}

pub fn run_config(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = config.threads {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    match config.command {
        Command::Fit => fit::cmd_fit(config, &out),
        Command::Simulate => simulate::cmd_simulate(config, &out),
        Command::Efficiency => simulate::cmd_efficiency(config, &out),
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    written.push(path);
    Ok(())
}

/// Joins CSV fields, quoting only where needed.
pub(crate) fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Left-aligned first column, right-aligned rest.
pub(crate) fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (j, c) in r.iter().enumerate().take(cols) {
            width[j] = width[j].max(c.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (j, c) in cells.iter().enumerate() {
            let pad = width[j] - c.chars().count();
            if j == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = fmt_row(header.to_vec());
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&fmt_row(r.iter().map(String::as_str).collect()));
    }
    out
}
