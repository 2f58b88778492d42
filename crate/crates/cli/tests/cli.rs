mod common;

use common::{ipcc, usrts_like_csv};
use ipcc_cli::config::{Command, RunConfig};
use std::fs;
use std::path::Path;

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

fn fit_config(extra: &str) -> String {
    format!("command = \"fit\"\ninput = \"data.csv\"\n\n[model]\nhazard = \"exponential\"\nxi = 30.0\n{extra}")
}

#[test]
fn config_round_trips_through_toml() {
    let text = r#"
command = "efficiency"
threads = 2

[model]
hazard = "piecewise"
breakpoints = [0.0, 10.0, 30.0]
xi = 45.0
incidence = ["x1"]

[scenario]
n2 = 0
beta = [0.5, -0.25]
gen_family = { PiecewiseConstant = { breakpoints = [0.0, 10.0, 30.0] } }
gen_params = [0.025, 0.1, 0.25]
xi = 45.0
omitted = { loadings = [0.3, 0.2], noise_variance = 0.5, zeta = 0.7 }

[efficiency]
n1 = [500, 500]
n2 = [250, 1000]

[report]
lrt = [{ label = "x", fix = ["beta:x1", "lambda_1=0.1"] }]
"#;
    let config = RunConfig::from_toml(text).unwrap();
    assert_eq!(config.command, Command::Efficiency);
    let back = RunConfig::from_toml(&config.to_toml()).unwrap();
    assert_eq!(back, config);
    let header = RunConfig::from_header(&config.header()).unwrap();
    assert_eq!(header, RunConfig { threads: None, ..config });
}

#[test]
fn unknown_keys_are_rejected() {
    let err = RunConfig::from_toml("command = \"fit\"\n[model]\nxii = 3.0\n").unwrap_err();
    assert!(err.to_string().contains("xii"), "{err}");
    let err = RunConfig::from_toml("command = \"simulate\"\n[scenario]\nreplicatons = 3\n").unwrap_err();
    assert!(err.to_string().contains("replicatons"), "{err}");
}

#[test]
fn model_c_without_prevalent_cases_points_to_model_a() {
    let dir = tempfile::tempdir().unwrap();
    let csv: String = usrts_like_csv(1, 60, 40, 0);
    write(dir.path(), "data.csv", &csv);
    write(dir.path(), "run.toml", &fit_config("\n[report]\nmodels = [\"C\"]\n"));
    let (code, _, err) = ipcc(&["--config", "run.toml", "--out", "o"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("model A"), "{err}");
}

#[test]
fn backward_time_beyond_xi_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "group,backward_time,x\n0,,1\n1,,0\n2,31.5,1\n2,2.0,0\n";
    write(dir.path(), "data.csv", csv);
    write(dir.path(), "run.toml", &fit_config(""));
    let (code, _, err) = ipcc(&["--config", "run.toml", "--out", "o"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("A exceeds ξ") && err.contains("row 3"), "{err}");
}

#[test]
fn schema_violations_list_every_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "group,backward_time,x\n0,,1\n5,,0\n2,abc,1\n";
    write(dir.path(), "data.csv", csv);
    write(dir.path(), "run.toml", &fit_config(""));
    let (code, _, err) = ipcc(&["--config", "run.toml"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("row 2") && err.contains("row 3"), "{err}");
}

#[test]
fn non_convergence_exits_with_two_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "data.csv", &usrts_like_csv(3, 80, 40, 40));
    write(dir.path(), "run.toml", &fit_config("\n[fit]\nmax_iterations = 1\nn_restarts = 0\n\n[report]\nmodels = [\"C\"]\n"));
    let (code, _, err) = ipcc(&["--config", "run.toml", "--out", "o"], dir.path());
    assert_eq!(code, 2, "{err}");
    let report = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.contains("NOT CONVERGED"), "{report}");
}

#[test]
fn models_a_and_b_ignore_row_order() {
    let dir = tempfile::tempdir().unwrap();
    let csv = usrts_like_csv(5, 120, 60, 50);
    let mut lines: Vec<&str> = csv.lines().collect();
    let header = lines.remove(0);
    let mut shuffled = lines.clone();
    shuffled.reverse();
    shuffled.rotate_left(37);
    write(dir.path(), "data.csv", &csv);
    write(dir.path(), "shuffled.csv", &(format!("{header}\n{}\n", shuffled.join("\n"))));
    let models = "\n[report]\nmodels = [\"A\", \"B\"]\n";
    write(dir.path(), "a.toml", &fit_config(models));
    write(dir.path(), "b.toml", &fit_config(models).replace("data.csv", "shuffled.csv"));
    assert_eq!(ipcc(&["--config", "a.toml", "--out", "a"], dir.path()).0, 0);
    assert_eq!(ipcc(&["--config", "b.toml", "--out", "b"], dir.path()).0, 0);
    let estimates = |d: &str| -> Vec<f64> {
        fs::read_to_string(dir.path().join(d).join("coefficients.csv"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("model"))
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect()
    };
    let (a, b) = (estimates("a"), estimates("b"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

const SMALL_SCENARIO: &str = r#"command = "simulate"

[scenario]
n0 = 150
n1 = 150
n2 = 150
replications = 4
seed = 11
"#;

#[test]
fn simulate_is_deterministic_and_reproducible_from_its_header() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", SMALL_SCENARIO);
    assert_eq!(ipcc(&["--config", "sim.toml", "--out", "one"], dir.path()).0, 0);
    assert_eq!(ipcc(&["--config", "sim.toml", "--out", "two", "--threads", "1"], dir.path()).0, 0);
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("one/summary.csv"), read("two/summary.csv"));
    assert_eq!(read("one/replications.csv"), read("two/replications.csv"));

    // Rerun from the header block of the output.
    let summary = String::from_utf8(read("one/summary.csv")).unwrap();
    let config = RunConfig::from_header(&summary).unwrap();
    write(dir.path(), "again.toml", &config.to_toml());
    assert_eq!(ipcc(&["--config", "again.toml", "--out", "three"], dir.path()).0, 0);
    assert_eq!(read("one/summary.csv"), read("three/summary.csv"));

    // A different seed gives different numbers.
    assert_eq!(ipcc(&["--config", "sim.toml", "--out", "four", "--seed", "12"], dir.path()).0, 0);
    assert_ne!(read("one/summary.csv"), read("four/summary.csv"));
}

#[test]
fn single_replication_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", SMALL_SCENARIO);
    assert_eq!(ipcc(&["--config", "sim.toml", "--out", "o", "--replications", "1"], dir.path()).0, 0);
    let summary = fs::read_to_string(dir.path().join("o/summary.csv")).unwrap();
    assert!(summary.contains("# single fit"), "{summary}");
    let text = fs::read_to_string(dir.path().join("o/summary.txt")).unwrap();
    assert!(text.contains("single fit (K = 1)") && text.contains("runtime"), "{text}");
}

#[test]
fn table_1a_cell_recovers_the_prevalent_intercept() {
    let dir = tempfile::tempdir().unwrap();
    let config = "command = \"simulate\"\n\n[scenario]\nbeta = [0.0, 0.0]\nreplications = 200\nseed = 3\n";
    write(dir.path(), "sim.toml", config);
    let (code, _, err) = ipcc(&["--config", "sim.toml", "--out", "o"], dir.path());
    assert_eq!(code, 0, "{err}");
    let summary = fs::read_to_string(dir.path().join("o/summary.csv")).unwrap();
    let row: Vec<f64> = summary
        .lines()
        .find(|l| l.starts_with("nu*,"))
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    let (truth, mean, sd_emp) = (row[0], row[1], row[2]);
    assert!((truth + 0.473).abs() < 1e-3, "true ν* {truth}");
    assert!((mean + 0.473).abs() < 3.0 * sd_emp / 200f64.sqrt() + 1e-3, "mean ν̂* {mean}");
}

#[test]
fn efficiency_writes_one_block_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{}\n[efficiency]\nn1 = [150]\nn2 = [300]\n", SMALL_SCENARIO.replace("\"simulate\"", "\"efficiency\"").replace("n2 = 150", "n2 = 0"));
    write(dir.path(), "eff.toml", &config);
    let (code, _, err) = ipcc(&["--config", "eff.toml", "--out", "o"], dir.path());
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("o/efficiency.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    // β1, β2, the trace ratio and the determinant ratio.
    assert_eq!(rows.len(), 4, "{csv}");
    assert!(rows.iter().all(|r| r.starts_with("0,150,300,")), "{csv}");
    let generalized: f64 = rows[3].rsplit(',').next().unwrap().parse().unwrap();
    assert!(generalized > 1.0, "adding prevalent cases should help: {generalized}");
}

#[test]
fn mismatched_variant_lists_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "eff.toml", "command = \"efficiency\"\n[efficiency]\nn1 = [1, 2]\nn2 = [3]\n");
    let (code, _, err) = ipcc(&["--config", "eff.toml"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("equal length"), "{err}");
}
