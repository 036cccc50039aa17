use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use driftlab::quadrature::linear_fit;
use driftlab::report::EstimateReport;
use driftlab_cli::RunManifest;

fn driftlab(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftlab"));
    cmd.args(args).env_remove("DRIFTLAB_OUT");
    if let Some(dir) = env_out {
        cmd.env("DRIFTLAB_OUT", dir);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUICK_CHAINS: &str = r#"
experiment = "quick-chains"
seed = 11
checks = ["chain", "parabolic-chain"]

[options.chain]
trials = 4
ladder = [0.0625]

[options.parabolic-chain]
trials = 3
ladder = [0.0625]
min_rho_cells = 1.0
"#;

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn empty_check_list_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "e.toml",
        "experiment = \"e\"\nseed = 1\nchecks = []\n",
    );
    let o = driftlab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no checks requested"));
}

#[test]
fn invalid_config_names_line_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "experiment = \"b\"\nseed = 1\nchecks = [\"harnack\"]\n[options.harnack]\nladder = [0.0625, -1.0]\n",
    );
    let o = driftlab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.toml:5"), "{err}");
    assert!(err.contains("`ladder`"), "{err}");
    // Nothing ran, so nothing was written.
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn resolution_too_coarse_for_the_domain_is_caught_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "experiment = \"c\"\nseed = 1\nchecks = [\"chain\", \"parabolic-chain\"]\n\n[options.parabolic-chain]\nladder = [0.125]\n",
    );
    let o = driftlab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c.toml:6"), "{}", stderr(&o));
    assert!(!tmp.path().join("reports").exists());
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.toml",
        "experiment = \"s\"\nchecks = [\"chain\"]\n",
    );
    let o = driftlab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn unknown_report_format_exits_2() {
    let o = driftlab(
        &["report", "--manifest", "nowhere.json", "--format", "xml"],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_manifest_exits_2() {
    let o = driftlab(
        &[
            "report",
            "--manifest",
            "/nonexistent/manifest.json",
            "--format",
            "csv",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_reports_summary_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", QUICK_CHAINS);
    let out = tmp.path().join("out");
    let o = driftlab(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            "2",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m.seed, 11);
    assert_eq!(m.jobs, 2);
    assert_eq!(m.config_sha256.len(), 64);
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    let checks: Vec<_> = m.reports.iter().map(|e| e.check.as_str()).collect();
    assert_eq!(checks, ["chain", "parabolic-chain"]);
    for e in &m.reports {
        let r: EstimateReport =
            serde_json::from_str(&fs::read_to_string(out.join(&e.report)).unwrap()).unwrap();
        assert_eq!(r.seed, 11);
        assert!(r.acceptable());
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next(),
        Some("check_id,seed,h,constant_name,value,verdict")
    );
    assert!(lines.all(|l| l.split(',').count() == 6 && l.contains(",11,")));
}

#[test]
fn output_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("env");
    let cfg_dir = tmp.path().join("cfg");
    let cli_dir = tmp.path().join("cli");
    let plain = write_config(tmp.path(), "p.toml", QUICK_CHAINS);
    let with_out = write_config(
        tmp.path(),
        "o.toml",
        &format!("out = {:?}\n{QUICK_CHAINS}", cfg_dir.to_str().unwrap()),
    );

    let o = driftlab(
        &["run", "--config", plain.to_str().unwrap()],
        Some(&env_dir),
    );
    assert!(o.status.success());
    assert!(env_dir.join("manifest.json").exists());

    let o = driftlab(
        &["run", "--config", with_out.to_str().unwrap()],
        Some(&env_dir),
    );
    assert!(o.status.success());
    assert!(cfg_dir.join("manifest.json").exists());

    let o = driftlab(
        &[
            "run",
            "--config",
            with_out.to_str().unwrap(),
            "--out",
            cli_dir.to_str().unwrap(),
        ],
        Some(&env_dir),
    );
    assert!(o.status.success());
    assert!(cli_dir.join("manifest.json").exists());
}

#[test]
fn failing_check_exits_1_with_report_path() {
    let tmp = tempfile::tempdir().unwrap();
    // Any Harnack constant exceeds 1, so this bound must fail.
    let cfg = write_config(
        tmp.path(),
        "f.toml",
        "experiment = \"f\"\nseed = 3\nchecks = [\"harnack\"]\n[options.harnack]\ntrials = 2\nladder = [0.125, 0.0625]\nbound = 1.0\n",
    );
    let o = driftlab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(1));
    let expected = tmp.path().join("reports").join("harnack.json");
    assert!(
        stderr(&o).contains(expected.to_str().unwrap()),
        "{}",
        stderr(&o)
    );
    assert!(expected.exists());
}

#[test]
fn counterexample_suite_is_an_expected_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "x.toml",
        r#"
experiment = "x"
seed = 5
suites = ["counterexample-radial"]

[options.harnack-counterexample]
quotient_ladder = [0.125, 0.0625]
residual_ladder = [0.125, 0.0625]
r_min = 0.5

[options.harnack-inward-radial]
trials = 2
ladder = [0.125, 0.0625]
slack = 0.25
"#,
    );
    let o = driftlab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(tmp.path());
    let cx = &m.reports[0];
    assert_eq!(cx.check, "harnack-counterexample");
    assert_eq!(
        (cx.verdict.as_str(), cx.expect_fail, cx.acceptable),
        ("fail", true, true)
    );
    assert_eq!(m.reports[1].verdict, "pass");
}

#[test]
fn reports_are_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "d.toml", QUICK_CHAINS);
    let runs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("run{i}"))).collect();
    for dir in &runs {
        let o = driftlab(
            &[
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ],
            None,
        );
        assert!(o.status.success());
        let o = driftlab(
            &[
                "report",
                "--manifest",
                dir.join("manifest.json").to_str().unwrap(),
                "--format",
                "json",
            ],
            None,
        );
        assert!(o.status.success());
    }
    for name in [
        "reports/chain.json",
        "reports/parabolic-chain.json",
        "summary.csv",
        "reports.json",
    ] {
        assert_eq!(
            fs::read(runs[0].join(name)).unwrap(),
            fs::read(runs[1].join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn plot_data_gives_one_file_per_report_and_the_holder_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "p.toml",
        r#"
experiment = "p"
seed = 9
checks = ["chain", "parabolic-chain", "oscillation-decay"]

[options.chain]
trials = 2
ladder = [0.0625]

[options.parabolic-chain]
trials = 2
ladder = [0.0625]
min_rho_cells = 1.0

[options.oscillation-decay]
trials = 3
ladder = [0.0625, 0.03125]
"#,
    );
    let o = driftlab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert!(o.status.code().is_some());
    let plots = tmp.path().join("plots");
    let o = driftlab(
        &[
            "report",
            "--manifest",
            tmp.path().join("manifest.json").to_str().unwrap(),
            "--format",
            "plot-data",
            "--out",
            plots.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut files: Vec<_> = fs::read_dir(plots.join("plot-data"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        ["chain.csv", "oscillation-decay.csv", "parabolic-chain.csv"]
    );

    // The (log rho, log osc) rows refit to the reported exponent.
    let mut rdr = csv::Reader::from_path(plots.join("plot-data/oscillation-decay.csv")).unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[0] == "holder" {
            assert_eq!((&rec[1], &rec[2]), ("log rho", "log osc"));
            xs.push(rec[3].parse::<f64>().unwrap());
            ys.push(rec[4].parse::<f64>().unwrap());
        }
    }
    assert!(xs.len() >= 3);
    let (slope, _, _) = linear_fit(&xs, &ys).unwrap();
    let report: EstimateReport = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("reports/oscillation-decay.json")).unwrap(),
    )
    .unwrap();
    let gamma = report.value("gamma", None).unwrap();
    assert!((slope - gamma).abs() < 1e-9, "{slope} vs {gamma}");
}
