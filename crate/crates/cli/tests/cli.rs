use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fermidistill"));
    c.env_remove("FERMIDISTILL_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_half_identity(path: &Path, modes: usize) {
    let dim = 2 * modes;
    let entries: Vec<[f64; 2]> = (0..dim * dim)
        .map(|k| if k / dim == k % dim { [0.5, 0.0] } else { [0.0, 0.0] })
        .collect();
    let file = serde_json::json!({
        "modes": modes,
        "split_a": (0..modes).collect::<Vec<_>>(),
        "entries": entries,
    });
    std::fs::write(path, file.to_string()).unwrap();
}

#[test]
fn validate_half_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.json");
    write_half_identity(&path, 2);
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "valid");
}

#[test]
fn invalid_covariance_names_the_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"modes":1,"split_a":[0],"entries":[[0.5,0],[0,0],[0,0],[2,0]]}"#).unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("invalid:"));
    assert!(stdout(&o).contains("eigenvalues"));

    let o = run(&["protocol", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid covariance"));
}

#[test]
fn malformed_file_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("garbage.json");
    std::fs::write(&path, "not json").unwrap();
    assert_eq!(run(&["protocol", path.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["validate", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["protocol", "x.json", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["lattice", "sweep", "--L", "5:5:1", "--N", "1"]).status.code(), Some(2));
    assert_eq!(run(&["closed-form", "four-mode", "--nu", "0.1,0.2", "--sigma", "0.1"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn maximally_mixed_protocol_reports_insufficient_rank() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.json");
    write_half_identity(&path, 4);
    let o = run(&["protocol", path.to_str().unwrap(), "--m", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient rank"));
}

#[test]
fn four_mode_emit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("four.json");
    let o = run(&[
        "closed-form",
        "four-mode",
        "--nu",
        "0.3,-0.2,-0.4,0.5",
        "--sigma",
        "0.35",
        "--emit",
        state.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let closed: Value = serde_json::from_str(&stdout(&o)).unwrap();

    let o = run(&["protocol", state.to_str().unwrap(), "--m", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (fc, fr) = (closed["f"].as_f64().unwrap(), report["f"].as_f64().unwrap());
    assert!((fc - fr).abs() < 1e-10, "{fc} vs {fr}");
    let (pc, pr) = (closed["p"].as_f64().unwrap(), report["p"].as_f64().unwrap());
    assert!((pc - pr).abs() < 1e-10);
}

#[test]
fn oracle_on_emitted_state() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("four.json");
    run(&[
        "closed-form",
        "four-mode",
        "--nu",
        "0.6,0.1,-0.3,0.2",
        "--sigma",
        "0.25",
        "--emit",
        state.to_str().unwrap(),
    ]);
    let o = run(&["oracle", state.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["max_deviation"].as_f64().unwrap() < 1e-9);
    assert!(r["output_fidelity"].is_f64());
}

#[test]
fn sweep_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |out: &Path| {
        vec![
            "lattice".to_string(),
            "sweep".into(),
            "--L".into(),
            "40:200:40".into(),
            "--N".into(),
            "0,1,10".into(),
            "--no-timing".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    assert_eq!(bin().args(args(&a)).status().unwrap().code(), Some(0));
    assert_eq!(bin().args(args(&b)).arg("--jobs").arg("3").status().unwrap().code(), Some(0));
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);

    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "L,N,p,f,pf,rate,sigma_1,sigma_2,sigma_3,sigma_4,iters,wall_ms"
    );
    assert_eq!(lines.count(), 12);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("four.json");
    run(&[
        "closed-form",
        "four-mode",
        "--nu",
        "0.6,0.1,-0.3,0.2",
        "--sigma",
        "0.25",
        "--emit",
        state.to_str().unwrap(),
    ]);
    let path = state.to_str().unwrap();
    let flag = run(&["protocol", path, "--sample-suboptimal", "20", "--seed", "9"]);
    let env = bin()
        .args(["protocol", path, "--sample-suboptimal", "20"])
        .env("FERMIDISTILL_SEED", "9")
        .output()
        .unwrap();
    let other = run(&["protocol", path, "--sample-suboptimal", "20", "--seed", "10"]);
    assert_eq!(flag.stdout, env.stdout);
    assert_ne!(flag.stdout, other.stdout);
}

#[test]
fn fit_reads_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = run(&[
        "lattice",
        "sweep",
        "--L",
        "200:2000:200",
        "--N",
        "1,5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["lattice", "fit", "--input", csv.to_str().unwrap(), "--L-min", "600", "--N", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fits: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let fit = &fits[0];
    assert_eq!(fit["N"], 5);
    assert_eq!(fit["points_used"], 7);
    assert!(fit["a"].as_f64().unwrap() > 0.0);
    assert!(fit["b"].as_f64().unwrap() > 0.0);

    let o = run(&["lattice", "fit", "--input", csv.to_str().unwrap(), "--L-min", "1900"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fg_scan_csv() {
    let o = run(&["closed-form", "fg-scan", "--x", "-0.5:0.6:0.5", "--y", "0.2,-0.2", "--sigma", "0.3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,sigma,f,g,f_ge_g");
    assert_eq!(lines.len(), 7);
}

#[test]
fn two_mode_rejects_invalid_parameters() {
    let o = run(&["closed-form", "two-mode", "--a", "1", "--b", "1", "--c", "1", "--d", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["closed-form", "two-mode", "--a", "0.2", "--b", "-0.1", "--c", "0.5", "--d", "-0.4"]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["max_fidelity"]["value"].as_f64().unwrap() > 0.25);
}
