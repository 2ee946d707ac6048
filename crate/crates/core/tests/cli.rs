use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_chiral-ep");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn ep_locate_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ep-locate",
        "--out",
        &out_arg(dir.path()),
        "--set",
        "gamma1=6.2e-3",
        "--set",
        "ratio=0",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.ends_with("ep_locate.json")));

    let v = json(&dir.path().join("ep_locate.json"));
    let recs = v["records"].as_array().unwrap();
    assert_eq!(recs.len(), 4);
    for r in recs {
        assert!(r["delta"].as_f64().unwrap().abs() < 1e-12);
        assert!((r["omega12"].as_f64().unwrap().abs() - 1.55e-3).abs() < 1e-9);
    }
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["experiment"], "ep-locate");
}

#[test]
fn encircle_outputs_and_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# default loop around the lower EP\n[encircle]\ngamma1 = 1.5e-4\ngamma2 = 8.8e-5\nenantiomer = left\n",
    )
    .unwrap();
    let out = run(&[
        "encircle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = fs::read_to_string(dir.path().join("encircle_timeseries.csv")).unwrap();
    let mut lines = csv.split("\r\n").filter(|l| !l.is_empty());
    assert_eq!(
        lines.next().unwrap(),
        "tau,re_c1,im_c1,re_c2,im_c2,re_aplus,im_aplus,re_aminus,im_aminus,pop_plus_norm,pop_minus_norm,branch_label"
    );
    assert_eq!(lines.count(), 2048);

    let s = json(&dir.path().join("encircle_summary.json"));
    assert_eq!(s["enantiomer"], "left");
    assert!(["plus", "minus"].contains(&s["dominant_final_state"].as_str().unwrap()));
    let total =
        s["final_pop_plus_norm"].as_f64().unwrap() + s["final_pop_minus_norm"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(
        json(&dir.path().join("encircle_timeseries.json"))
            .as_array()
            .unwrap()
            .len(),
        2048
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path| {
        vec![
            "loop-sweep".to_string(),
            "--out".into(),
            out_arg(dir),
            "--seed".into(),
            "11".into(),
            "--set".into(),
            "gamma1=1.5e-4".into(),
            "--set".into(),
            "gamma2=8.8e-5".into(),
            "--set".into(),
            "loop_times=1e3,1e4".into(),
            "--set".into(),
            "samples=32".into(),
        ]
    };
    for dir in [a.path(), b.path()] {
        let argv = args(dir);
        let out = run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["loop_sweep.csv", "loop_sweep.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let csv = fs::read_to_string(a.path().join("loop_sweep.csv")).unwrap();
    assert!(csv.starts_with("loop_time,direction,enantiomer,initial,"));
    // 2 times x 2 directions x 2 enantiomers
    assert_eq!(csv.split("\r\n").filter(|l| !l.is_empty()).count(), 1 + 8);

    // Same directory twice: the manifest too is reproduced exactly.
    let first = fs::read(a.path().join("manifest.json")).unwrap();
    let argv = args(a.path());
    run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(first, fs::read(a.path().join("manifest.json")).unwrap());
}

#[test]
fn ratio_sweep_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ratio-sweep",
        "--out",
        &out_arg(dir.path()),
        "--format",
        "csv",
        "--set",
        "gamma1=6.2e-3",
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("ratio_sweep.csv")).unwrap();
    assert!(csv.starts_with("ratio,gamma2,enantiomer,branch,delta_ep,omega12_ep\r\n"));
    assert!(!dir.path().join("ratio_sweep.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "encircle",
        "--out",
        &out_arg(dir.path()),
        "--set",
        "gamma1=1e-4",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma2"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(
        &cfg,
        "[encircle]\ngamma1 = 1e-4\ngamma2 = 1e-4\ngamma1 = 2e-4\n",
    )
    .unwrap();
    let out = run(&[
        "encircle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lines 2 and 4"));

    let out = run(&["map", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ep-locate",
        "--out",
        &out_arg(dir.path()),
        "--set",
        "gamma1=0",
        "--set",
        "gamma2=0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["status"], "error");
    assert_eq!(m["error"]["exit_code"], 3);
}
