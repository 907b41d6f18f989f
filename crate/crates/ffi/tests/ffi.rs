use std::ffi::{CStr, CString};
use std::ptr;

use shor_optics_ffi::*;

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { so_string_free(p) };
    s
}

fn last_error() -> String {
    take_string(so_last_error())
}

fn problem(n: u64, a: u64, bits: u32) -> *mut SoProblem {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { so_problem_new(n, a, bits, &mut p) }, SoStatus::Ok);
    p
}

fn state(json: &str) -> *mut SoState {
    let text = CString::new(json).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { so_state_from_json(text.as_ptr(), &mut s) }, SoStatus::Ok);
    s
}

#[test]
fn factor_fifteen_in_every_mode() {
    let p = problem(15, 11, 2);
    for (mode, res) in [(SoMode::Abstract, 0), (SoMode::Circuit, 0), (SoMode::Physical, 64)] {
        let mut run = ptr::null_mut();
        assert_eq!(unsafe { so_run_pipeline(p, mode, res, &mut run) }, SoStatus::Ok);
        let mut r = 0;
        assert_eq!(unsafe { so_run_order(run, &mut r) }, SoStatus::Ok);
        assert_eq!(r, 2);
        let (mut f1, mut f2) = (0, 0);
        assert_eq!(unsafe { so_run_factors(run, &mut f1, &mut f2) }, SoStatus::Ok);
        assert_eq!((f1, f2), (3, 5));
        let mut json = ptr::null_mut();
        assert_eq!(unsafe { so_run_report_json(run, &mut json) }, SoStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(report["readout"]["r"], 2);
        unsafe { so_run_free(run) };
    }
    unsafe { so_problem_free(p) };
}

#[test]
fn bad_base_reports_no_factors() {
    let p = problem(15, 14, 2);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { so_run_pipeline(p, SoMode::Abstract, 0, &mut run) }, SoStatus::Ok);
    let mut r = 0;
    assert_eq!(unsafe { so_run_order(run, &mut r) }, SoStatus::Ok);
    assert_eq!(r, 2);
    let (mut f1, mut f2) = (0, 0);
    assert_eq!(unsafe { so_run_factors(run, &mut f1, &mut f2) }, SoStatus::NoResult);
    assert!(!last_error().is_empty());
    unsafe { so_run_free(run) };
    unsafe { so_problem_free(p) };
}

#[test]
fn invalid_arguments_map_to_status_codes() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { so_problem_new(15, 5, 2, &mut p) }, SoStatus::Domain);
    assert!(p.is_null());
    assert!(last_error().contains("coprime"));

    assert_eq!(unsafe { so_problem_new(15, 11, 2, ptr::null_mut()) }, SoStatus::NullPointer);

    let p = problem(15, 7, 4);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { so_run_pipeline(p, SoMode::Circuit, 0, &mut run) }, SoStatus::Unsupported);
    unsafe { so_problem_free(p) };

    let bad = CString::new("{not json").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { so_state_from_json(bad.as_ptr(), &mut s) }, SoStatus::Json);

    let mut r = 0;
    assert_eq!(unsafe { so_run_order(ptr::null(), &mut r) }, SoStatus::NullPointer);

    let ok = problem(15, 11, 2);
    assert!(so_last_error().is_null());
    unsafe { so_problem_free(ok) };
}

#[test]
fn state_round_trip_and_dft() {
    let h_branch = state(r#"[{"l":1,"pol":"H","re":1.0,"im":0.0},{"l":2,"pol":"H","re":1.0,"im":0.0}]"#);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { so_state_apply_dft(h_branch, 2, &mut out) }, SoStatus::Ok);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { so_state_to_json(out, &mut json) }, SoStatus::Ok);
    let back = state(&take_string(json));

    let expected = state(r#"[{"l":1,"pol":"H","re":1.0,"im":0.0},{"l":2,"pol":"H","re":1.0,"im":0.0}]"#);
    let mut f = 0.0;
    assert_eq!(unsafe { so_state_fidelity(back, expected, &mut f) }, SoStatus::Ok);
    assert!((f - 1.0).abs() < 1e-12, "fidelity {f}");

    let orth = state(r#"[{"l":-1,"pol":"V","re":1.0,"im":0.0}]"#);
    assert_eq!(unsafe { so_state_fidelity(orth, expected, &mut f) }, SoStatus::Ok);
    assert!(f.abs() < 1e-12);

    for s in [h_branch, out, back, expected, orth] {
        unsafe { so_state_free(s) };
    }
}

#[test]
fn render_and_copy_image() {
    let s = state(r#"[{"l":1,"pol":"H","re":1.0,"im":0.0}]"#);
    let mut img = ptr::null_mut();
    assert_eq!(unsafe { so_render_state(s, 32, &mut img) }, SoStatus::Ok);
    let (mut w, mut h) = (0, 0);
    assert_eq!(unsafe { so_image_dims(img, &mut w, &mut h) }, SoStatus::Ok);
    assert_eq!((w, h), (32, 32));

    let mut small = vec![0.0; 10];
    assert_eq!(unsafe { so_image_copy(img, small.as_mut_ptr(), small.len()) }, SoStatus::BufferTooSmall);
    let mut buf = vec![-1.0; w * h];
    assert_eq!(unsafe { so_image_copy(img, buf.as_mut_ptr(), buf.len()) }, SoStatus::Ok);
    assert!(buf.iter().all(|&v| v >= 0.0));
    assert!(buf.iter().any(|&v| v > 0.0));

    unsafe { so_image_free(img) };
    unsafe { so_state_free(s) };
    unsafe { so_image_free(ptr::null_mut()) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/shor_optics.h")).unwrap();
    for name in [
        "so_last_error", "so_string_free", "so_problem_new", "so_problem_free", "so_run_pipeline", "so_run_order",
        "so_run_factors", "so_run_report_json", "so_run_free", "so_state_from_json", "so_state_to_json",
        "so_state_apply_dft", "so_state_fidelity", "so_state_free", "so_render_state", "so_image_dims",
        "so_image_copy", "so_image_free", "SO_STATUS_BUFFER_TOO_SMALL", "typedef struct SoRun SoRun",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
