use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use warpmatch::io::{save_csv_matrix, save_matrix};
use warpmatch::FeatureMatrix;

fn warpmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warpmatch"))
        .args(args)
        .env_remove("WARPMATCH_WORKERS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const QUICK: &[&str] = &[
    "--set", "classes=10", "--set", "rows=6", "--set", "cols=6", "--set", "channels=3",
    "--set", "seed=4", "--set", "max_iters=4", "--set", "epochs=5", "--set", "hidden=8",
];

#[test]
fn dpw_dist_of_a_file_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    save_csv_matrix(&FeatureMatrix::from_scalar_rows(&[[1.0, 5.0], [2.0, 7.0]]).unwrap(), &a).unwrap();
    let o = warpmatch(&["dpw", "dist", p(&a), p(&a)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0");
    let o = warpmatch(&["dpw", "dist", "--l1", p(&a), p(&a)]);
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn dpw_dist_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.fmx");
    let b = dir.path().join("b.fmx");
    save_matrix(&FeatureMatrix::zeros(2, 2, 1).unwrap(), &a).unwrap();
    save_matrix(&FeatureMatrix::zeros(2, 2, 3).unwrap(), &b).unwrap();
    assert_eq!(warpmatch(&["dpw", "dist", p(&a), p(&b)]).status.code(), Some(2));

    let bad = dir.path().join("bad.fmx");
    fs::write(&bad, b"FMX1\x02\x00").unwrap();
    let o = warpmatch(&["dpw", "dist", p(&a), p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte"));
    let missing = dir.path().join("missing.fmx");
    assert_eq!(warpmatch(&["dpw", "dist", p(&a), p(&missing)]).status.code(), Some(1));
}

#[test]
fn align_of_identical_two_by_two_is_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let out = dir.path().join("align.txt");
    save_csv_matrix(&FeatureMatrix::from_scalar_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(), &a).unwrap();
    let o = warpmatch(&["dpw", "align", p(&a), p(&a), "--out", p(&out)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["1,1,1,1,0", "1,2,1,2,0", "2,1,2,1,0", "2,2,2,2,0"]);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "seed = 1\nlearning_rat = 0.1\n").unwrap();
    let o = warpmatch(&["synth", "gen", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = warpmatch(&["synth", "gen", "--set", "bogus=1", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_then_match_run_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("task");
    let mut gen = vec!["synth", "gen", "--out", p(&data)];
    gen.extend_from_slice(QUICK);
    assert!(warpmatch(&gen).status.success());
    for f in ["seen.manifest", "emerging.manifest", "truth.csv", "config.resolved"] {
        assert!(data.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(data.join("truth.csv")).unwrap().lines().count(), 11);

    let seen = data.join("seen.manifest");
    let emerging = data.join("emerging.manifest");
    let run = |out: &Path, workers: &str, baseline: bool| {
        let mut args = vec![
            "--workers", workers, "match", "run", "--seen", p(&seen), "--emerging", p(&emerging), "--out", p(out),
        ];
        args.extend_from_slice(QUICK);
        if baseline {
            args.extend_from_slice(&["--baseline", "knn"]);
        }
        let o = warpmatch(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (out1, out2) = (dir.path().join("run1"), dir.path().join("run2"));
    run(&out1, "1", true);
    run(&out2, "2", false);

    let assignment = fs::read_to_string(out1.join("assignment.csv")).unwrap();
    let mut lines = assignment.lines();
    assert_eq!(lines.next(), Some("emerging_id,seen_id,rank1_distance"));
    assert_eq!(lines.count(), 10);
    assert_eq!(assignment, fs::read_to_string(out2.join("assignment.csv")).unwrap());
    for f in ["swim_trace.csv", "sloma_trace.csv", "adapter.lfa", "report.json", "report.csv", "config.resolved"] {
        assert!(out1.join(f).exists(), "{f}");
    }
    assert!(out1.join("baseline_report.json").exists());
    assert!(!out2.join("baseline_report.json").exists());
    assert_eq!(fs::read_to_string(out1.join("swim_trace.csv")).unwrap().lines().count(), 11);

    let o = warpmatch(&[
        "eval", "topk", "--seen", p(&seen), "--emerging", p(&emerging),
        "--adapter", p(&out1.join("adapter.lfa")), "--k", "3",
    ]);
    assert!(o.status.success());
    let summary = stdout(&o);
    assert!(summary.starts_with("metric,value\n"));
    assert_eq!(summary, fs::read_to_string(out1.join("report.csv")).unwrap().replace("k,5", "k,3"));
}

#[test]
fn workers_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    save_csv_matrix(&FeatureMatrix::from_scalar_rows(&[[1.0]]).unwrap(), &a).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_warpmatch"))
        .args(["dpw", "dist", p(&a), p(&a)])
        .env("WARPMATCH_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
