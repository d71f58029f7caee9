use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bvbfv"));
    c.env_remove("BVBFV_REPORT_DIR");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bvbfv-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_are_listed() {
    let o = bin().args(["presets", "list"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for name in ["flat", "conformal2d", "schwarzschild_isotropic", "flrw", "random_smooth"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn flat_adm_report() {
    let dir = scratch("adm");
    let sc = dir.join("flat.json");
    fs::write(&sc, r#"{"d": 3, "n": 8, "preset": "flat"}"#).unwrap();
    let o = bin().args(["adm", "report", "--scenario"]).arg(&sc).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for line in text.lines() {
        assert!(line.contains("max 0.000000e0"), "{line}");
    }
    assert!(text.starts_with("L_ADM\t"));
}

#[test]
fn reduce_is_idempotent_and_archives_feed_scenarios() {
    let dir = scratch("reduce");
    let sc = dir.join("s.json");
    fs::write(&sc, r#"{"d": 2, "n": 8, "preset": "random_smooth", "seed": 3, "ghosts": true}"#).unwrap();
    let a = dir.join("a.arch");
    let b = dir.join("b.arch");
    for out in [&a, &b] {
        let o = bin().args(["reduce", "--scenario"]).arg(&sc).arg("--out").arg(out).output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let bytes = fs::read(&a).unwrap();
    assert_eq!(&bytes[..4], b"BVFA");
    let back = gr_bvbfv::io::read_archive(&a).unwrap();
    assert_eq!(gr_bvbfv::io::encode_archive(&back), bytes);
}

#[test]
fn constraints_from_an_archive() {
    let dir = scratch("constraints");
    let spec = gr_bvbfv::presets::PresetSpec { d: 2, n: 8, seed: 1, ..Default::default() };
    let s = gr_bvbfv::presets::PresetRegistry::default().build("random_smooth", &spec).unwrap();
    gr_bvbfv::io::write_archive(&dir.join("pre.arch"), &s).unwrap();
    let sc = dir.join("arch.json");
    fs::write(&sc, r#"{"d": 2, "archive": "pre.arch"}"#).unwrap();
    let out = dir.join("c.txt");
    let o = bin().args(["constraints", "--scenario"]).arg(&sc).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text, stdout(&o));
    assert!(text.lines().any(|l| l.starts_with("H\t")));
    assert!(text.lines().any(|l| l.starts_with("G_beta1\t")));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = scratch("config");
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"d": 2}"#).unwrap();
    let o = bin().args(["adm", "report", "--scenario"]).arg(&bad).output().unwrap();
    assert_eq!(code(&o), 2);
    let d1 = dir.join("d1.json");
    fs::write(&d1, r#"{"d": 1, "preset": "flat"}"#).unwrap();
    let o = bin().args(["constraints", "--scenario"]).arg(&d1).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("d = 1"));
    let o = bin().args(["verify", "--suite", "classical", "--d", "1"]).output().unwrap();
    assert_eq!(code(&o), 2);
    let o = bin().args(["verify", "--suite", "nope"]).output().unwrap();
    assert_eq!(code(&o), 2);
    let o = bin().args(["verify", "--suite", "bv", "--tol-scale", "10"]).output().unwrap();
    assert_eq!(code(&o), 2);
    let o = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_writes_report_to_env_dir() {
    let dir = scratch("verify");
    let o = bin().args(["verify", "--suite", "bv"]).env("BVBFV_REPORT_DIR", &dir).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = fs::read_to_string(dir.join("bv_d2.txt")).unwrap();
    assert_eq!(text, stdout(&o));
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.contains("\tpass")));
}

#[test]
fn failed_checks_exit_1() {
    // tightening every tolerance a millionfold makes the Q² check fail
    let o = bin().args(["verify", "--suite", "bv", "--tol-scale", "1e-6"]).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
}
