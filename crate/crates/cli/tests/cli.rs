use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--m",
    "4",
    "--n-train",
    "32",
    "--n-val",
    "8",
    "--n-test",
    "4",
];

fn eoslab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eoslab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("EOSLAB_OUT")
        .output()
        .expect("spawn eoslab")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = eoslab(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(out: &Path, args: &[&str]) -> i32 {
    eoslab(out, args).status.code().unwrap()
}

fn with(head: &[&str], tail: &[&str]) -> Vec<String> {
    head.iter()
        .chain(TINY)
        .chain(tail)
        .map(|s| s.to_string())
        .collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn generate_dyck_default_size_and_rerun_is_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "generate",
        "dyck",
        "--m",
        "4",
        "--n-val",
        "4",
        "--n-test",
        "2",
        "--condition",
        "+eos",
    ];
    ok(a.path(), &args);
    ok(b.path(), &args);
    let rel = "data/dyck-k2-m4-plus-eos-s0";
    assert_eq!(lines(&a.path().join(rel).join("train.txt")), 10_000);
    for f in ["train.txt", "val.txt", "test.txt"] {
        assert_eq!(
            fs::read(a.path().join(rel).join(f)).unwrap(),
            fs::read(b.path().join(rel).join(f)).unwrap()
        );
    }
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join(rel).join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "generate");
    assert_eq!(m["seed"], 0);
}

#[test]
fn generate_scan_counts() {
    let d = tempfile::tempdir().unwrap();
    let s = ok(d.path(), &["generate", "scan", "--cutoff", "22"]);
    assert!(s.contains("16990 train, 3920 test"), "{s}");
    let dir = d.path().join("data/scan-l22");
    assert_eq!(lines(&dir.join("train.txt")), 16990);
    assert_eq!(lines(&dir.join("test.txt")), 3920);
}

#[test]
fn dyck_pipeline_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path();
    ok(o, &refs(&with(&["generate", "dyck"], &["--seeds", "2"])));
    let s = ok(
        o,
        &refs(&with(
            &["train", "dyck"],
            &["--seeds", "2", "--max-epochs", "1"],
        )),
    );
    assert!(s.contains("+EOS          2"), "{s}");
    let runs: Vec<_> = fs::read_dir(o.join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 4);
    for r in runs {
        let r = r.unwrap().path();
        for f in ["checkpoint.json", "manifest.json", "run.jsonl"] {
            assert!(r.join(f).exists(), "{} lacks {f}", r.display());
        }
    }
    assert!(o.join("sweeps/dyck-k2-m4/manifest.json").exists());

    // a second invocation reuses the cached runs
    let again = ok(
        o,
        &refs(&with(
            &["train", "dyck"],
            &["--seeds", "2", "--max-epochs", "1"],
        )),
    );
    assert!(again.contains("+EOS          2"));

    let close = ok(o, &refs(&with(&["eval", "dyck-close"], &["--seeds", "2"])));
    assert!(close.lines().any(|l| l.starts_with("median")), "{close}");
    let ppl = ok(o, &refs(&with(&["eval", "dyck-ppl"], &["--seeds", "2"])));
    assert!(ppl.contains("+EOS OOD"));
    assert!(o.join("reports/dyck-close-k2-m4/report.json").exists());

    let pca = ok(
        o,
        &[
            "analyze",
            "pca",
            "--m",
            "4",
            "--samples",
            "5",
            "--condition",
            "-eos",
            "--label",
            "eos-plurality",
        ],
    );
    let dir = fs::read_dir(o.join("analysis"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("pca-"));
    let dir = dir.expect("pca output directory");
    let states: usize = pca
        .lines()
        .nth(1)
        .and_then(|l| l.split(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    // header plus one row per traced state
    assert_eq!(lines(&dir.join("states.csv")), states + 1);
    assert!(fs::read_to_string(dir.join("scatter.svg"))
        .unwrap()
        .starts_with("<svg"));

    let report = ok(o, &["report", "--cached-only"]);
    assert!(report.contains("Bracket-closing score"));
    assert!(o.join("reports/summary/manifest.json").exists());
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path();
    assert_eq!(code(o, &["frobnicate"]), 1);
    assert_eq!(
        code(
            o,
            &refs(&with(&["train", "dyck"], &["--condition", "bogus"]))
        ),
        1
    );
    assert_eq!(code(o, &["generate", "dyck", "--m", "1"]), 1);
    assert_eq!(code(o, &["--jobs", "0", "report"]), 1);
    // no generated dataset
    assert_eq!(
        code(
            o,
            &refs(&with(&["train", "dyck"], &["--condition", "-eos"]))
        ),
        2
    );
    // nothing trained yet
    assert_eq!(code(o, &refs(&with(&["eval", "dyck-close"], &[]))), 2);

    let cfg = o.join("bad.json");
    fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(code(o, &["--config", cfg.to_str().unwrap(), "report"]), 1);
    assert_eq!(code(o, &["--help"]), 0);
}

#[test]
fn eos_plurality_needs_a_plus_eos_run() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path();
    ok(
        o,
        &refs(&with(&["generate", "dyck"], &["--condition", "-eos"])),
    );
    ok(
        o,
        &refs(&with(
            &["train", "dyck"],
            &["--condition", "-eos", "--max-epochs", "1"],
        )),
    );
    let args = [
        "analyze",
        "pca",
        "--m",
        "4",
        "--samples",
        "3",
        "--condition",
        "-eos",
        "--label",
        "eos-plurality",
    ];
    assert_eq!(code(o, &args), 1);
    ok(
        o,
        &[
            "analyze",
            "pca",
            "--m",
            "4",
            "--samples",
            "3",
            "--condition",
            "-eos",
        ],
    );
}

#[test]
fn scan_train_and_oracle_eval() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path();
    ok(o, &["generate", "scan", "--cutoff", "22"]);
    let tiny = [
        "--cutoff",
        "22",
        "--hidden",
        "4",
        "--layers",
        "1",
        "--max-epochs",
        "1",
    ];
    let mut args = vec!["train", "scan"];
    args.extend(tiny);
    ok(o, &args);
    let s = ok(o, &["eval", "scan", "--cutoff", "22", "--mode", "oracle"]);
    assert!(s.contains("-EOS+Oracle"), "{s}");
    assert!(!s.contains("seed    +EOS "), "{s}");
}

#[test]
fn config_file_drives_each_stage() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("from-config");
    let cfg = serde_json::json!({
        "train": {
            "task": "dyck", "k": 2, "m": 4, "min_len": 88, "max_len": 116,
            "test_min": 950, "test_max": 1050, "n_train": 32, "n_val": 8, "n_test": 4,
            "condition": "-eos", "batch_size": 16, "learning_rate": 0.01, "max_epochs": 1,
            "patience": null, "converge_evals": 2, "clip_norm": 5.0, "seed": 0
        },
        "seeds": [3],
        "out": out,
    });
    let path = d.path().join("exp.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_eoslab"))
            .arg("--config")
            .arg(&path)
            .args(args)
            .env_remove("EOSLAB_OUT")
            .output()
            .unwrap();
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    };
    run(&["generate"]);
    assert!(out.join("data/dyck-k2-m4-minus-eos-s3/train.txt").exists());
    run(&["train"]);
    let s = run(&["eval", "dyck-close"]);
    assert!(s.lines().any(|l| l.starts_with('3')), "{s}");
}
