//! End-to-end checks of the command-line surface: exit codes, file
//! formats, and a full generate -> embed -> verify round trip.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wellsep"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wellsep-cli-{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn lp_prints_solution_and_exits_zero() {
    let out = bin().args(["lp", "--k", "3", "--gamma2", "0.12"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((json["optimum"].as_f64().unwrap() - 0.58).abs() < 1e-9);
}

#[test]
fn lp_rejects_bad_arguments_with_code_two() {
    let out = bin().args(["lp", "--k", "1", "--gamma2", "0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn factor_not_found_exits_one() {
    let dir = temp_dir("factor");
    let path = dir.join("c5.edges");
    fs::write(&path, "5 5\n0 1\n1 2\n2 3\n3 4\n0 4\n").unwrap();
    // C5 has no triangle factor.
    let out = bin()
        .args(["factor", "--graph", path.to_str().unwrap(), "--k", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generate_embed_verify_round_trip() {
    let dir = temp_dir("round-trip");
    let host_dir = dir.join("host");
    let h_dir = dir.join("h");
    let run_dir = dir.join("run");
    let spec = r#"{"ell":4,"m":50,"k":2,"gamma":0.1,"pattern":"Complete","d_pair":0.5,"v0_frac":0.01,"seed":11}"#;
    let out = bin()
        .args(["gen-host", "--params", spec, "--out", host_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // The host reports its size; H must match it (4*50 + 1% = 202).
    let hspec = r#"{"family":{"ComponentPaths":{"max_len":8}},"n":202,"seed":5}"#;
    let out = bin()
        .args(["gen-h", "--params", hspec, "--out", h_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = bin()
        .args([
            "embed",
            "--h",
            h_dir.join("h.edges").to_str().unwrap(),
            "--g",
            host_dir.join("host.edges").to_str().unwrap(),
            "--clusters",
            host_dir.join("clusters.json").to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            run_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir.join("embedding.json").exists());
    assert!(run_dir.join("record.json").exists());

    let out = bin()
        .args([
            "verify",
            "--h",
            h_dir.join("h.edges").to_str().unwrap(),
            "--g",
            host_dir.join("host.edges").to_str().unwrap(),
            "--embedding",
            run_dir.join("embedding.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());

    // Corrupt the embedding: verification must exit 1.
    let phi: Vec<usize> = serde_json::from_str(
        &fs::read_to_string(run_dir.join("embedding.json")).unwrap(),
    )
    .unwrap();
    let mut broken = phi.clone();
    broken[1] = broken[0];
    fs::write(run_dir.join("broken.json"), serde_json::to_string(&broken).unwrap()).unwrap();
    let out = bin()
        .args([
            "verify",
            "--h",
            h_dir.join("h.edges").to_str().unwrap(),
            "--g",
            host_dir.join("host.edges").to_str().unwrap(),
            "--embedding",
            run_dir.join("broken.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn brute_force_none_exits_one() {
    let dir = temp_dir("bf");
    fs::write(dir.join("k3.edges"), "3 3\n0 1\n0 2\n1 2\n").unwrap();
    fs::write(dir.join("c5.edges"), "5 5\n0 1\n1 2\n2 3\n3 4\n0 4\n").unwrap();
    let out = bin()
        .args([
            "brute-force",
            "--h",
            dir.join("k3.edges").to_str().unwrap(),
            "--g",
            dir.join("c5.edges").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn parse_error_names_line_and_exits_two() {
    let dir = temp_dir("parse");
    fs::write(dir.join("bad.edges"), "3 2\n0 1\n0 1\n").unwrap();
    let out = bin()
        .args(["factor", "--graph", dir.join("bad.edges").to_str().unwrap(), "--k", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let _ = fs::remove_dir_all(&dir);
}
