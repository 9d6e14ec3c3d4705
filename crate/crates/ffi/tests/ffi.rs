use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use conelab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(conelab_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn cone_roundtrip() {
    let json = CString::new("preset:minkowski-strip").unwrap();
    let mut cone = ptr::null_mut();
    unsafe {
        assert_eq!(conelab_cone_from_json(json.as_ptr(), &mut cone), ConelabStatus::Ok);
        let (mut nt, mut nx) = (0, 0);
        assert_eq!(conelab_cone_dims(cone, &mut nt, &mut nx), ConelabStatus::Ok);
        assert_eq!((nt, nx), (201, 101));
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(conelab_cone_tau(cone, 0, 50, 200, 50, &mut lo, &mut hi), ConelabStatus::Ok);
        assert!((lo - 2.0).abs() < 1e-9 && hi >= lo - 1e-12);
        assert_eq!(conelab_cone_tau(cone, 100, 0, 0, 0, &mut lo, &mut hi), ConelabStatus::Ok);
        assert_eq!(lo, f64::NEG_INFINITY);
        let mut margin = 0.0;
        let mut verdict = ConelabVerdict::Fail;
        assert_eq!(conelab_cone_tcbb(cone, 0.0, 50, 0.02, 7, &mut margin, &mut verdict), ConelabStatus::Ok);
        assert_eq!(verdict, ConelabVerdict::Pass);
        conelab_cone_free(cone);
    }
}

#[test]
fn errors_are_reported() {
    let mut cone = ptr::null_mut();
    unsafe {
        assert_eq!(conelab_cone_from_json(ptr::null(), &mut cone), ConelabStatus::NullPointer);
        let bad = CString::new("{not json").unwrap();
        assert_eq!(conelab_cone_from_json(bad.as_ptr(), &mut cone), ConelabStatus::Parse);
        assert!(last_error().starts_with("PARSE"));
        let unknown = CString::new("preset:nope").unwrap();
        assert_eq!(conelab_cone_from_json(unknown.as_ptr(), &mut cone), ConelabStatus::InvalidInput);
        assert!(cone.is_null());
        conelab_cone_free(ptr::null_mut());
    }
}

#[test]
fn gh_between_spaces() {
    let a = CString::new(r#"{"segment": {"length": 1, "points": 2}}"#).unwrap();
    let b = CString::new(r#"{"n": 1, "base": 0, "dist": [0]}"#).unwrap();
    let (mut sa, mut sb) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(conelab_space_from_json(a.as_ptr(), &mut sa), ConelabStatus::Ok);
        assert_eq!(conelab_space_from_json(b.as_ptr(), &mut sb), ConelabStatus::Ok);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(conelab_gh(sa, sb, true, &mut lo, &mut hi), ConelabStatus::Ok);
        assert_eq!((lo, hi), (0.5, 0.5));
        conelab_space_free(sa);
        conelab_space_free(sb);
    }
}

#[test]
fn run_json_config() {
    let cfg = CString::new(r#"{"command": "tcbb", "cone": "preset:minkowski-strip", "K": 0, "samples": 40, "seed": 3}"#).unwrap();
    let mut report = ptr::null_mut();
    let mut code = -1;
    unsafe {
        assert_eq!(conelab_run_json(cfg.as_ptr(), &mut report, &mut code), ConelabStatus::Ok);
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        conelab_string_free(report);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["verdict"], "PASS");
        let cfg = CString::new(r#"{"command": "ot", "cone": "preset:minkowski-strip", "preset": "non-couplable", "seed": 1}"#).unwrap();
        assert_eq!(conelab_run_json(cfg.as_ptr(), &mut report, &mut code), ConelabStatus::Compute);
        assert!(last_error().starts_with("NOT_CAUSALLY_COUPLABLE"));
    }
}

#[test]
fn header_declares_api() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let h = std::fs::read_to_string(dir.join("include/conelab.h")).unwrap();
    for f in ["conelab_cone_from_json", "conelab_cone_tau", "conelab_gh", "conelab_run_json", "conelab_string_free"] {
        assert!(h.contains(f), "{f} missing from header");
    }
    assert!(h.contains("CONELAB_STATUS_OK = 0"));
}

/// Builds the static library into a private target directory, then
/// compiles and runs `tests/smoke.c` against it and the generated header.
#[test]
fn c_smoke_program() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let target = tmp.join("ffi-smoke");
    let built = Command::new(env!("CARGO"))
        .args(["build", "--release", "--lib", "--manifest-path"])
        .arg(dir.join("Cargo.toml"))
        .arg("--target-dir")
        .arg(&target)
        .status()
        .unwrap();
    assert!(built.success(), "static library build failed");
    let out = tmp.join("conelab_smoke");
    let status = Command::new(&cc)
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(target.join("release/libconelab_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
