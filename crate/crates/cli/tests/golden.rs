mod common;

use common::{data_dir, ipcc, usrts_like_csv};
use ipcc_cli::config::RunConfig;

/// Set UPDATE_GOLDEN=1 to rewrite the expected files after an intended change.
fn check_golden(name: &str, actual: &str) {
    let path = data_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs from the golden copy");
}

#[test]
fn synthetic_dataset_is_reproducible() {
    check_golden("usrts_like.csv", &usrts_like_csv(2024, 240, 120, 90));
}

#[test]
fn fit_report_matches_golden() {
    let out = tempfile::tempdir().unwrap();
    let (code, _, err) = ipcc(
        &["--config", "usrts_like.toml", "--out", out.path().to_str().unwrap()],
        &data_dir(),
    );
    assert_eq!(code, 0, "{err}");
    let report = std::fs::read_to_string(out.path().join("report.txt")).unwrap();
    check_golden("usrts_like_report.txt", &report);
    let coefficients = std::fs::read_to_string(out.path().join("coefficients.csv")).unwrap();
    // Three coefficient blocks, each with the four genotype/exposure log odds ratios.
    for model in ["A", "B", "C"] {
        let rows = coefficients.lines().filter(|l| l.starts_with(&format!("{model},beta:"))).count();
        assert_eq!(rows, 4, "model {model}");
    }
    // The embedded header reproduces the run.
    let header = RunConfig::from_header(&coefficients).unwrap();
    assert_eq!(header.input.as_deref(), Some(std::path::Path::new("usrts_like.csv")));
    assert!(header.report.jackknife);
}
