use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Shrinks a synthetic preset to a few seconds of work.
const TINY: &[&str] = &[
    "--set",
    "dataset.synthetic.feature_dim=16",
    "--set",
    "dataset.synthetic.train_per_class=40",
    "--set",
    "dataset.synthetic.test_per_class=10",
    "--set",
    "experiment.plan.num_clients=8",
    "--set",
    "experiment.plan.num_rounds=3",
    "--set",
    "experiment.clients_per_round=3",
    "--set",
    "experiment.trials=2",
    "--set",
    "experiment.hyper.local_epochs=1",
];

fn tiny(cmd: &str, preset: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--preset", preset, "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    fedsim(&args)
}

fn value_after<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(str::trim))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(fedsim(&[]).status.code(), Some(2));
    assert_eq!(fedsim(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(fedsim(&["stats"]).status.code(), Some(2));
    assert_eq!(fedsim(&["run", "--preset", "no-such-preset"]).status.code(), Some(2));
    let bad_case = fedsim(&[
        "partition",
        "--preset",
        "iid-fedavg-synthetic",
        "--set",
        "experiment.plan.case.id=9Z",
    ]);
    assert_eq!(bad_case.status.code(), Some(2));
    let unknown_key = fedsim(&["partition", "--preset", "iid-fedavg-synthetic", "--set", "experiment.bogus=1"]);
    assert_eq!(unknown_key.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedsim(&[
        "run",
        "--preset",
        "iid-fedavg",
        "--set",
        "dataset.path=definitely-missing",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stats_for_three_labels() {
    let out = fedsim(&["stats", "--labels", "1,5,10", "--tau", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let var: f64 = value_after(&text, "label_variance").parse().unwrap();
    assert!((var - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(value_after(&text, "area_upper_bound(3)"), "7");
    assert_eq!(value_after(&text, "distinct_labels"), "3");
}

#[test]
fn stats_kl() {
    let same = stdout(&fedsim(&["stats", "--p", "0.25,0.75", "--q", "0.25,0.75"]));
    assert_eq!(value_after(&same, "kl_divergence").parse::<f64>().unwrap(), 0.0);

    let out = stdout(&fedsim(&["stats", "--p", "0.5,0.5", "--q", "0.9,0.1"]));
    let kl: f64 = value_after(&out, "kl_divergence").parse().unwrap();
    let expected = 0.5 * (0.5f64 / 0.9).log10() + 0.5 * (0.5f64 / 0.1).log10();
    assert!((kl - expected).abs() < 1e-8, "{kl} vs {expected}");
}

#[test]
fn partition_single_label_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedsim(&[
        "partition",
        "--preset",
        "cases-fedavg-synthetic",
        "--variant",
        "1A",
        "--set",
        "experiment.plan.num_clients=5",
        "--dump",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with("wrote")).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        // one major label, so zero variance and a single histogram bin
        assert_eq!(cols[2], "0");
        assert_eq!(cols[4].split(';').count(), 1);
    }
    assert!(dir.path().join("client_4.csv").exists());
}

#[test]
fn run_is_deterministic_and_report_matches() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = tiny("run", "cases-labelwise-synthetic", out, &["--seed", "5"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let variants = ["1A-fedavg_random", "1A-labelwise", "2A-fedavg_random", "3A-labelwise"];
    for v in variants {
        let ra = fs::read(a.join(v).join("rounds.csv")).unwrap();
        assert_eq!(ra, fs::read(b.join(v).join("rounds.csv")).unwrap(), "{v}");
        assert!(a.join(v).join("selected_evals.csv").exists());
    }

    let report = dir.path().join("report");
    let res = fedsim(&["report", a.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rebuilt = fs::read_to_string(report.join("summary.csv")).unwrap();
    let original = fs::read_to_string(a.join("summary.csv")).unwrap();
    let sorted = |s: &str| {
        let mut lines: Vec<String> = s.lines().map(String::from).collect();
        lines.sort();
        lines
    };
    assert_eq!(sorted(&rebuilt), sorted(&original));
    let svg = fs::read_to_string(report.join("curves.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("class=\"series\""));
}

#[test]
fn config_echo_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let res = tiny("run", "iid-fedavg-synthetic", &first, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let second = dir.path().join("second");
    let echo = first.join("config.json");
    let res = fedsim(&[
        "run",
        "--config",
        echo.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        fs::read(first.join("rounds.csv")).unwrap(),
        fs::read(second.join("rounds.csv")).unwrap()
    );
}

#[test]
fn single_point_sweep_has_undefined_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let res = tiny("sweep", "proportion-sweep-synthetic", dir.path(), &["--set", "sweep.p_biased=[0.3]"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("p_biased,iid_share,"));
    assert!(lines[1].starts_with("0.3,0.7,"));
    let r_row = lines.iter().find(|l| l.starts_with("pearson_r")).unwrap();
    assert!(r_row.contains("undefined"));
    assert!(dir.path().join("summary.csv").exists());
    assert!(dir.path().join("fedavg_random-p0.3").join("rounds.csv").exists());
}
