use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adcomb::harness::output::read_series;

fn adcomb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adcomb")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const TINY: &str = r#"
preset = "experiment1"
horizon = 6
truth_replications = 40
algorithms = ["f-ts", "u-ucb"]
save_snapshots = true

[grid]
bid_min = 0.2
bid_max = 2.0
bid_count = 4
budget_max = 300.0
budget_count = 4
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let stdout = ok(&adcomb(&["run", "--config", &cfg, "--reps", "2", "--seed", "9", "--out", out.to_str().unwrap()]));
    assert!(stdout.contains("r* ="));

    let csv = out.join("results.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "run_id,replicate,t,algorithm,campaign,bid,budget,clicks,cost,revenue,r_mu,r_star,cum_regret");
    for algo in ["f-ts", "u-ucb"] {
        let all = text.lines().filter(|l| l.contains(&format!(",{algo},ALL,"))).count();
        assert_eq!(all, 2 * 6, "{algo}");
    }
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 6 * 5);
    let (algos, series) = read_series(fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(algos.len(), 2);
    assert_eq!(series.len(), 4);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(out.join("snapshots/f-ts-r1.json").exists());

    let table = dir.path().join("table.txt");
    let report = ok(&adcomb(&["report", csv.to_str().unwrap(), "--checkpoints", "3,6", "--out", table.to_str().unwrap()]));
    assert!(report.contains("f-ts") && report.contains("u-ucb") && report.contains("beta@6"));
    assert_eq!(fs::read_to_string(table).unwrap(), report);
}

#[test]
fn same_seed_same_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&adcomb(&["run", "--config", &cfg, "--reps", "2", "--out", out.to_str().unwrap()]));
        fs::read(out.join("results.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn malformed_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "preset = \"experiment1\"\nhorizon = 5\nhorizon_days = 3\n");
    let out = adcomb(&["run", "--config", &cfg]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("bad.toml"), "{err}");

    let cfg = write_config(dir.path(), "syntax.toml", "seed = 1\ndelta = \n");
    let out = adcomb(&["run", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let cfg = write_config(dir.path(), "range.toml", "preset = \"experiment1\"\ndelta = 2.0\n");
    let out = adcomb(&["run", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unknown_algorithm_is_rejected() {
    let out = adcomb(&["run", "--algo", "f-ts,greedy"]);
    assert!(!out.status.success());
}

#[test]
fn sweep_reports_every_grid_size() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
preset = "experiment2"
horizon = 3
truth_replications = 20
algorithms = ["f-ts"]

[sweep]
bid_counts = [3, 5]
budget_counts = [4]
fixed_count = 3
"#;
    let cfg = write_config(dir.path(), "sweep.toml", body);
    let out = dir.path().join("out");
    ok(&adcomb(&["sweep", "--config", &cfg, "--reps", "2", "--out", out.to_str().unwrap()]));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let sizes: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
    assert_eq!(sizes, vec![("bids", "3", "3"), ("bids", "5", "3"), ("budgets", "3", "4")]);
    for r in &rows {
        let v: f64 = r[5].parse().unwrap();
        assert!(v > 0.0 && v <= 1.0 + 1e-9, "V = {v}");
    }
    assert!(out.join("manifest.json").exists());
}

#[test]
fn random_settings_percentages_sum_to_100() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
preset = "experiment3"
horizon = 4
truth_replications = 20
algorithms = ["f-ts", "u-ts"]

[random_settings]
settings = 2
checkpoints = [2, 4]
"#;
    let cfg = write_config(dir.path(), "rs.toml", body);
    let out = dir.path().join("out");
    ok(&adcomb(&["random-settings", "--config", &cfg, "--reps", "3", "--out", out.to_str().unwrap()]));
    let text = fs::read_to_string(out.join("random_settings.csv")).unwrap();
    assert!(text.starts_with("setting,algorithm,replicates,regret,regret_sd,beta_2,beta_4"));
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for setting in ["1", "2"] {
        for col in [5, 6] {
            let sum: f64 = rows
                .iter()
                .filter(|r| r[0] == setting)
                .map(|r| r[col].parse::<f64>().unwrap())
                .sum();
            assert!((sum - 100.0).abs() < 1e-9, "setting {setting}: {sum}");
        }
    }
}
