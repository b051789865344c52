use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varcert")).args(args).env_remove("VARCERT_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn sufficient_prints_verdict() {
    let p = corpus("example_5_1.json");
    let o = run(&["sufficient", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ABSOLUTE via theorem_4_4"), "{}", stdout(&o));
}

#[test]
fn json_report_is_deterministic_and_seed_sensitive() {
    let p = corpus("example_2_1.json");
    let a = run(&["sufficient", "--json", p.to_str().unwrap()]);
    let b = run(&["sufficient", "--json", p.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["verdict"], "ABSOLUTE");
    let c = Command::new(env!("CARGO_BIN_EXE_varcert"))
        .args(["sufficient", "--json", p.to_str().unwrap()])
        .env("VARCERT_SEED", "7")
        .output()
        .unwrap();
    let w: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    assert_eq!(w["seed"], 7);
}

#[test]
fn schema_error_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"schema_version": 1, "n": 1, "interval": [0, 1], "integrand": "dx^2"}"#).unwrap();
    let o = run(&["sufficient", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("boundary"));
}

#[test]
fn bad_q_exits_with_2() {
    let p = corpus("example_2_1.json");
    let o = run(&["sufficient", "--q", "t +", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn riccati_reports_conjugate_point() {
    let p = corpus("conjugate_fail.json");
    let o = run(&["riccati", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("blow-up at t = 0.5235"), "{out}");
    assert!(out.contains("NONE_CERTIFIED"));
}

#[test]
fn emit_csv_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = corpus("example_5_2.json");
    let q = dir.path().join("q.csv");
    let s = dir.path().join("s.csv");
    let o = run(&[
        "sufficient",
        p.to_str().unwrap(),
        "--emit-csv",
        &format!("q-solution={}", q.display()),
        "--emit-csv",
        &format!("increment-sweep={}", s.display()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let qt = std::fs::read_to_string(&q).unwrap();
    assert!(qt.starts_with("t,q11\n"));
    let st = std::fs::read_to_string(&s).unwrap();
    assert_eq!(st.lines().count(), 12);
    for l in st.lines().skip(1) {
        let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[1] - f[2]).abs() <= 1e-7, "{l}");
    }
}

#[test]
fn unknown_csv_kind_is_input_error() {
    let p = corpus("example_2_1.json");
    let o = run(&["sufficient", p.to_str().unwrap(), "--emit-csv", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_and_solve() {
    let p = corpus("example_5_1.json");
    let o = run(&["eval", "--t", "0.5", "--json", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - (0.25 * 0.5625 + 12.0 * 0.015625)).abs() < 1e-14);
    let p = corpus("affine_x.json");
    let o = run(&["solve", "--json", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // x'' = t/2, x(0) = x(1) = 0
    let x = v["samples"][5]["x"][0].as_f64().unwrap();
    assert!((x - (0.125 / 12.0 - 0.5 / 12.0)).abs() < 1e-8, "{x}");
}

#[test]
fn report_over_directory() {
    let dir = corpus("");
    let o = run(&["report", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.matches("expected verdict reproduced").count(), 7, "{out}");
}
