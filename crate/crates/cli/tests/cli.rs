use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn snscp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snscp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn solve_writes_bounded_trace_and_point() {
    let dir = tempdir().unwrap();
    let out = snscp(
        &[
            "solve", "--k", "20", "--n", "50", "--b", "10", "--trace", "t.csv", "--point", "p.txt",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("status: converged"), "{text}");
    let trace = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let rows = trace.lines().count();
    assert!((2..=2001).contains(&rows), "{rows} rows");
    assert!(trace.starts_with("iter,residual,objective,violations,step,mu,direction"));
    assert!(dir.path().join("p.txt").exists());

    let check = snscp(
        &["check", "p.txt", "--k", "20", "--n", "50", "--b", "10"],
        dir.path(),
    );
    assert_eq!(check.status.code(), Some(0));
    let report = stdout(&check);
    assert!(
        report.contains("tau-stationary (tau = 0.75): satisfied"),
        "{report}"
    );
}

#[test]
fn malformed_config_exits_one() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "colour = red\n").unwrap();
    let out = snscp(&["solve", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    fs::write(dir.path().join("bad2.cfg"), "k = ten\n").unwrap();
    assert_eq!(
        snscp(&["solve", "--config", "bad2.cfg"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn config_entries_apply_and_flags_override() {
    let dir = tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# small run\nk = 3\nn = 20\nb = 10\ntrace = from_cfg.csv\npoint = p.txt\n",
    )
    .unwrap();
    let out = snscp(&["solve", "--config", "run.cfg", "--k", "4"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let trace = fs::read_to_string(dir.path().join("from_cfg.csv")).unwrap();
    assert!(trace.lines().count() >= 2);
    let point = fs::read_to_string(dir.path().join("p.txt")).unwrap();
    let x = point.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(x.split(',').count(), 4);
}

#[test]
fn unknown_flag_exits_one() {
    let dir = tempdir().unwrap();
    assert_eq!(
        snscp(&["solve", "--frobnicate"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(snscp(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn counterexample_preset_solves_and_checks() {
    let dir = tempdir().unwrap();
    let out = snscp(&["solve", "--preset", "counterexample"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("objective: 0.0"));

    fs::write(dir.path().join("ce.txt"), "# x\n1,1\n").unwrap();
    let check = snscp(
        &["check", "ce.txt", "--preset", "counterexample"],
        dir.path(),
    );
    assert_eq!(check.status.code(), Some(0));
    let report = stdout(&check);
    assert!(report.contains("BKKT: satisfied"), "{report}");
    assert!(report.contains("KKT: violated (residual 2.0"), "{report}");
}

#[test]
fn preset_conflicts_are_rejected() {
    let dir = tempdir().unwrap();
    let out = snscp(
        &["solve", "--preset", "counterexample", "--k", "3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_reports_missing_or_malformed_point_file() {
    let dir = tempdir().unwrap();
    assert_eq!(
        snscp(&["check", "absent.txt"], dir.path()).status.code(),
        Some(1)
    );
    fs::write(dir.path().join("short.txt"), "1,2\n").unwrap();
    assert_eq!(
        snscp(&["check", "short.txt"], dir.path()).status.code(),
        Some(1)
    );
    fs::write(dir.path().join("junk.txt"), "a,b\n").unwrap();
    assert_eq!(
        snscp(
            &["check", "junk.txt", "--preset", "counterexample"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn bounds_prints_reference_sizes_and_flags_vacuous_confidence() {
    let dir = tempdir().unwrap();
    let out = snscp(
        &["bounds", "--alpha", "0.05", "--s", "5", "--beta", "0.05"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("simplified 3429, exact 3426"), "{text}");

    let out = snscp(
        &["bounds", "--epsilon", "0.05", "--beta", "0.05"],
        dir.path(),
    );
    assert!(stdout(&out).contains(": 738"));

    let out = snscp(
        &[
            "bounds",
            "--nu",
            "0.99",
            "--alpha-star",
            "0.05",
            "--n",
            "100",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("vacuous (<0)"));

    let out = snscp(&["bounds"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("Usage"));
}

#[test]
fn bench_emits_one_row_per_sweep_value() {
    let dir = tempdir().unwrap();
    let out = snscp(
        &[
            "bench", "--sweep", "k=10,20", "--trials", "5", "--b", "10", "--n", "30", "--out",
            "b.csv",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "sweep_var,value,median_objective,median_time_s,median_iters,converged_frac"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("K,10.0,") && lines[2].starts_with("K,20.0,"));

    assert_eq!(
        snscp(&["bench", "--sweep", "q=1"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        snscp(
            &["bench", "--sweep", "k=2", "--preset", "counterexample"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn export_bip_writes_deterministic_lp() {
    let dir = tempdir().unwrap();
    let args = ["export-bip", "--k", "3", "--n", "8", "--seed", "4"];
    let a = snscp(&[&args[..], &["--out", "a.lp"]].concat(), dir.path());
    let b = snscp(&[&args[..], &["--out", "b.lp"]].concat(), dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let lp = fs::read(dir.path().join("a.lp")).unwrap();
    assert_eq!(lp, fs::read(dir.path().join("b.lp")).unwrap());
    assert!(String::from_utf8(lp).unwrap().contains("big_M = 10000.0"));

    let missing = snscp(
        &[&args[..], &["--out", "no/such/dir/x.lp"]].concat(),
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(snscp(&args, dir.path()).status.code(), Some(1));
}

#[test]
fn identical_flags_give_identical_traces() {
    let dir = tempdir().unwrap();
    let args = [
        "solve", "--k", "10", "--m", "3", "--n", "40", "--b", "10", "--seed", "7",
    ];
    for name in ["x.csv", "y.csv"] {
        let out = snscp(&[&args[..], &["--trace", name]].concat(), dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(
        fs::read(dir.path().join("x.csv")).unwrap(),
        fs::read(dir.path().join("y.csv")).unwrap()
    );
}
