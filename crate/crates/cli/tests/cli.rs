use std::path::Path;
use std::process::{Command, Output};

use modmark_core::instance::InstanceFile;
use modmark_core::numsub::CMatrix;
use modmark_core::Channel;
use tempfile::TempDir;

fn modmark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modmark"))
        .args(args)
        .env_remove("MODMARK_TOL")
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_schur_round_trip() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("inst.json");
    let o = modmark(&[
        "gen",
        "--kind",
        "schur",
        "--dims",
        "2",
        "--seed",
        "7",
        "--params",
        r#"{"c":[[1,0.5],[0.5,1]]}"#,
        "-o",
        path_str(&file),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("modular"));
    let text = std::fs::read_to_string(&file).unwrap();
    let inst = InstanceFile::from_json(&text).unwrap();
    assert_eq!(inst.version, "1");
    assert_eq!(inst.metadata.seed, Some(7));
    // reserializing gives the same bytes
    assert_eq!(inst.to_json(), text);
    let ch = inst.to_channel().unwrap();
    assert!(ch.check_markov().is_markov());
}

#[test]
fn gen_requires_output() {
    let o = modmark(&["gen", "--kind", "identity", "--dims", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(
        modmark(&["gen", "--kind", "nope", "--dims", "2", "-o", "x.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(modmark(&["suite", "--dims", "2,x"]).status.code(), Some(2));
    assert_eq!(modmark(&["suite", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(modmark(&["bogus"]).status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("p.json");
    let o = modmark(&[
        "gen",
        "--kind",
        "schur",
        "--dims",
        "2",
        "--params",
        "{oops",
        "-o",
        path_str(&file),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_identity_passes_with_json() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("id.json");
    assert_eq!(
        modmark(&["gen", "--kind", "identity", "--dims", "3", "-o", path_str(&file)])
            .status
            .code(),
        Some(0)
    );
    let o = modmark(&["verify", path_str(&file)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("all checks pass"));

    let o = modmark(&[
        "verify",
        path_str(&file),
        "--json",
        "--s-range",
        "-0.5:0.5",
        "--t-samples",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], "modmark-report/1");
    assert_eq!(v["passed"], true);
    for key in [
        "flow_intertwine",
        "j_intertwine",
        "s_intertwine",
        "complex_power_intertwine",
        "petz_match",
    ] {
        let r = v["residuals"][key].as_f64().unwrap();
        assert!(r < 1e-12, "{key} = {r}");
        assert_eq!(v["verdicts"][key], true);
    }
    assert_eq!(v["instance"]["genspec"]["kind"], "identity");
}

#[test]
fn verify_bad_s_range() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("id.json");
    modmark(&["gen", "--kind", "identity", "--dims", "2", "-o", path_str(&file)]);
    assert_eq!(
        modmark(&["verify", path_str(&file), "--s-range", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        modmark(&["verify", path_str(&file), "--s-range", "1:-1"]).status.code(),
        Some(2)
    );
}

#[test]
fn malformed_and_inconsistent_files() {
    let dir = TempDir::new().unwrap();
    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{\"version\": \"1\"").unwrap();
    assert_eq!(modmark(&["verify", path_str(&junk)]).status.code(), Some(2));
    assert_eq!(
        modmark(&["verify", path_str(&dir.path().join("missing.json"))])
            .status
            .code(),
        Some(2)
    );

    let file = dir.path().join("id.json");
    modmark(&["gen", "--kind", "identity", "--dims", "2", "-o", path_str(&file)]);
    let mut inst = InstanceFile::from_json(&std::fs::read_to_string(&file).unwrap()).unwrap();
    inst.channel.superop.as_mut().unwrap().pop();
    let bad = dir.path().join("shape.json");
    std::fs::write(&bad, inst.to_json()).unwrap();
    assert_eq!(modmark(&["verify", path_str(&bad)]).status.code(), Some(4));
    assert_eq!(modmark(&["show", path_str(&bad)]).status.code(), Some(4));
}

#[test]
fn non_state_preserving_file_fails_verdict() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("id.json");
    modmark(&["gen", "--kind", "identity", "--dims", "2", "-o", path_str(&file)]);
    let inst = InstanceFile::from_json(&std::fs::read_to_string(&file).unwrap()).unwrap();
    let id = inst.to_channel().unwrap();
    // pinching in the Hadamard basis is ucp but moves a non-diagonal state
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = CMatrix::from_row_slice(2, 2, &[s.into(), s.into(), s.into(), (-s).into()]);
    let kraus: Vec<CMatrix> = (0..2)
        .map(|i| {
            let v = h.column(i).clone_owned();
            &v * v.adjoint()
        })
        .collect();
    let ch = Channel::from_kraus(&kraus, id.source(), id.target()).unwrap();
    let out = dir.path().join("pinch.json");
    std::fs::write(&out, InstanceFile::from_channel(&ch, Default::default()).to_json()).unwrap();
    let o = modmark(&["verify", path_str(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("not unital cp state-preserving"));
}

#[test]
fn tolerance_env_override() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("id.json");
    modmark(&["gen", "--kind", "identity", "--dims", "2", "-o", path_str(&file)]);
    let run = |tol: &str| {
        Command::new(env!("CARGO_BIN_EXE_modmark"))
            .args(["verify", path_str(&file), "--json"])
            .env("MODMARK_TOL", tol)
            .output()
            .unwrap()
    };
    let o = run("1e-6");
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["tolerances"]["kadison_norm"].as_f64(), Some(1e-6));
    assert_eq!(run("abc").status.code(), Some(2));
    assert_eq!(run("-1").status.code(), Some(2));
}

#[test]
fn suite_small_runs_and_persists() {
    let o = modmark(&["suite", "--trials", "1", "--dims", "2", "--kinds", "identity"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no unexpected failures"));

    let dir = TempDir::new().unwrap();
    let out = dir.path().join("corpus");
    let o = modmark(&[
        "suite",
        "--trials",
        "4",
        "--dims",
        "2+1",
        "--kinds",
        "scalar,auto",
        "--out",
        path_str(&out),
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["suite_summary"]["passed"], 4);
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), 4);
    for f in files {
        let o = modmark(&["verify", path_str(&f.unwrap().path())]);
        assert_eq!(o.status.code(), Some(0));
    }
}

#[test]
fn suite_negative_kind_reports_expected_failures() {
    let o = modmark(&["suite", "--trials", "3", "--kinds", "sp_ucp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("expected failures (3)"));
    assert!(text.contains("j_intertwine"));
}

#[test]
fn show_prints_instance() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("b.json");
    modmark(&[
        "gen",
        "--kind",
        "block",
        "--dims",
        "3",
        "--seed",
        "2",
        "-o",
        path_str(&file),
    ]);
    let o = modmark(&["show", path_str(&file)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("superoperator 9x9"));
    assert!(text.contains("block_expectation"));
}
