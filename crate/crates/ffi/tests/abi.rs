use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use collidesim_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = cs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_config() -> *mut CsConfig {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(cs_config_new(&mut cfg), CsStatus::Ok);
        for (k, v) in [("model.m", "2"), ("dynamics.eps", "0.2"), ("dynamics.nu", "4")] {
            assert_eq!(cs_config_set(cfg, cstr(k).as_ptr(), cstr(v).as_ptr()), CsStatus::Ok);
        }
    }
    cfg
}

#[test]
fn exact_estimate_matches_oracle() {
    let cfg = small_config();
    unsafe {
        assert_eq!(cs_config_set(cfg, cstr("dynamics.backend").as_ptr(), cstr("exact").as_ptr()), CsStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(cs_estimate(cfg, &mut report), CsStatus::Ok);
        let mut summary = CsReportSummary::default();
        assert_eq!(cs_report_summary(report, &mut summary), CsStatus::Ok);

        let (mut lind, mut coll) = (0.0, 0.0);
        assert_eq!(cs_oracle(cfg, &mut lind, &mut coll), CsStatus::Ok);
        assert!((summary.mu - coll).abs() < 1e-10);
        assert!((coll - lind).abs() < 0.2);

        let mut total = 0usize;
        assert_eq!(cs_report_samples(report, ptr::null_mut(), 0, &mut total), CsStatus::Ok);
        assert_eq!(total as u64, summary.runs);
        let mut buf = vec![0.0; 3];
        assert_eq!(cs_report_samples(report, buf.as_mut_ptr(), 3, &mut total), CsStatus::Ok);
        assert!(buf.iter().all(|v| (v - summary.mu).abs() < 1e-10));

        cs_report_free(report);
        cs_config_free(cfg);
    }
}

#[test]
fn randomized_estimate_is_seed_deterministic() {
    let run = || unsafe {
        let cfg = small_config();
        for (k, v) in [("dynamics.backend", "qdrift"), ("execution.T", "30"), ("execution.seed", "11")] {
            assert_eq!(cs_config_set(cfg, cstr(k).as_ptr(), cstr(v).as_ptr()), CsStatus::Ok);
        }
        let mut report = ptr::null_mut();
        assert_eq!(cs_estimate(cfg, &mut report), CsStatus::Ok);
        let mut s = CsReportSummary::default();
        assert_eq!(cs_report_summary(report, &mut s), CsStatus::Ok);
        cs_report_free(report);
        cs_config_free(cfg);
        s
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.runs, 30);
    assert!(a.hoeffding_runs > 30);
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let cfg = small_config();
        assert_eq!(cs_config_set(cfg, cstr("model.colour").as_ptr(), cstr("red").as_ptr()), CsStatus::InvalidInput);
        assert!(last_error().contains("model.colour"));

        assert_eq!(cs_config_set(cfg, cstr("model.m").as_ptr(), cstr("5").as_ptr()), CsStatus::Ok);
        assert_eq!(cs_config_set(cfg, cstr("execution.dense_limit").as_ptr(), cstr("4").as_ptr()), CsStatus::Ok);
        let (mut l, mut c) = (0.0, 0.0);
        assert_eq!(cs_oracle(cfg, &mut l, &mut c), CsStatus::DenseLimit);
        assert!(last_error().contains("dense limit"));
        cs_config_free(cfg);

        let mut out = ptr::null_mut();
        assert_eq!(cs_config_load(ptr::null(), &mut out), CsStatus::NullPointer);
        assert_eq!(cs_config_load(cstr("/nonexistent/x.cfg").as_ptr(), &mut out), CsStatus::InvalidInput);
        assert_eq!(cs_estimate(ptr::null(), &mut out.cast()), CsStatus::NullPointer);
        assert_eq!(cs_validate(42), CsStatus::InvalidInput);
        assert_eq!(cs_validate(1), CsStatus::Ok);
        assert!(cs_last_error().is_null());
    }
}

#[test]
fn hash_and_file_loading() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    std::fs::write(&path, r#"{"model": {"m": 2}, "dynamics": {"eps": 0.2, "nu": 4}}"#).unwrap();
    unsafe {
        let mut loaded = ptr::null_mut();
        assert_eq!(cs_config_load(cstr(path.to_str().unwrap()).as_ptr(), &mut loaded), CsStatus::Ok);
        let built = small_config();
        let (mut a, mut b) = ([0 as std::ffi::c_char; 17], [0 as std::ffi::c_char; 17]);
        assert_eq!(cs_config_hash(loaded, a.as_mut_ptr(), a.len()), CsStatus::Ok);
        assert_eq!(cs_config_hash(built, b.as_mut_ptr(), b.len()), CsStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(CStr::from_ptr(a.as_ptr()).to_bytes().len(), 16);
        assert_eq!(cs_config_hash(built, b.as_mut_ptr(), 16), CsStatus::InvalidInput);
        cs_config_free(loaded);
        cs_config_free(built);
        cs_config_free(ptr::null_mut());
        cs_report_free(ptr::null_mut());
    }
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/collidesim.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["cs_last_error", "cs_config_new", "cs_estimate", "cs_oracle", "cs_validate", "CS_STATUS_DENSE_LIMIT"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include <stdio.h>\n#include \"collidesim.h\"\n\
         int main(void) { CsConfig *c = 0; CsReportSummary s; (void)s;\n\
         return cs_config_new(&c) == CS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .expect("a C compiler is available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
