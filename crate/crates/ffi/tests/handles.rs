use std::ffi::{c_char, CStr};
use std::path::Path;
use std::process::Command;
use std::ptr;

use higgs_torus_ffi::*;

fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { ht_string_free(p) };
    s
}

fn planted(sizes: &[usize], seed: u64) -> *mut HtDatum {
    let mut d = ptr::null_mut();
    let status = unsafe { ht_gen_planted(2, sizes.as_ptr(), sizes.len(), seed, &mut d) };
    assert_eq!(status, HtStatus::Ok);
    d
}

#[test]
fn planted_datum_is_polystable_with_flat_metric() {
    let d = planted(&[3, 2], 7);
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { ht_check_polystable(d, ptr::null(), &mut report) }, HtStatus::Ok);
    assert!(take_string(report).contains("\"verdict\": \"polystable\""));

    let mut levi = [0usize; 8];
    let mut len = 0;
    assert_eq!(unsafe { ht_levi_type(d, ptr::null(), levi.as_mut_ptr(), levi.len(), &mut len) }, HtStatus::Ok);
    assert_eq!(levi[..len].iter().sum::<usize>(), 5);

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ht_construct_metric(d, ptr::null(), &mut m) }, HtStatus::Ok);
    let (mut ym, mut flat) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { ht_ym_residual(d, m, ptr::null(), &mut ym, &mut flat) }, HtStatus::Ok);
    assert!(ym < 1e-6 && flat < 1e-6);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ht_metric_to_json(m, &mut json) }, HtStatus::Ok);
    let text = take_string(json);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ht_metric_from_json(text.as_ptr(), text.len(), ptr::null(), &mut back) }, HtStatus::Ok);

    unsafe {
        ht_metric_free(back);
        ht_metric_free(m);
        ht_datum_free(d);
    }
}

#[test]
fn datum_json_roundtrip() {
    let d = planted(&[2], 1);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ht_datum_to_json(d, &mut json) }, HtStatus::Ok);
    let text = take_string(json);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { ht_datum_from_json(text.as_ptr(), text.len(), ptr::null(), &mut e) }, HtStatus::Ok);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { ht_datum_to_json(e, &mut again) }, HtStatus::Ok);
    assert_eq!(take_string(again), text);
    unsafe {
        ht_datum_free(d);
        ht_datum_free(e);
    }
}

#[test]
fn nilpotent_flow_degenerates_and_check_is_negative() {
    let text = br#"{"dim":1,"blocks":[{"label":"E","rank":1,"slope":0,"multiplicity":2,"higgs":[[[[0,0],[1,0]],[[0,0],[0,0]]]]}]}"#;
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { ht_datum_from_json(text.as_ptr(), text.len(), ptr::null(), &mut d) }, HtStatus::Ok);
    assert_eq!(unsafe { ht_check_polystable(d, ptr::null(), ptr::null_mut()) }, HtStatus::Negative);
    assert_eq!(last_error_message().as_deref(), Some("fails_semisimplicity"));

    let mut m = ptr::null_mut();
    let mut verdict = HtFlowVerdict::Converged;
    let mut steps = 0;
    let status = unsafe { ht_flow_solve(d, ptr::null(), 50_000, &mut m, &mut verdict, &mut steps) };
    assert_eq!(status, HtStatus::Ok);
    assert_eq!(verdict, HtFlowVerdict::Degenerating);
    assert!(steps > 0);
    assert_eq!(unsafe { ht_construct_metric(d, ptr::null(), &mut ptr::null_mut()) }, HtStatus::Negative);
    unsafe {
        ht_metric_free(m);
        ht_datum_free(d);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut d = ptr::null_mut();
    let truncated = b"{\"dim\": 1, \"blocks\": [";
    assert_eq!(
        unsafe { ht_datum_from_json(truncated.as_ptr(), truncated.len(), ptr::null(), &mut d) },
        HtStatus::InvalidInput
    );
    assert!(last_error_message().unwrap().contains("parse error"));
    assert!(d.is_null());

    assert_eq!(unsafe { ht_check_polystable(ptr::null(), ptr::null(), ptr::null_mut()) }, HtStatus::NullPointer);

    let bad = HtTolerances { tau_rank: -1.0, ..ht_tolerances_default() };
    let p = planted(&[2], 3);
    assert_eq!(unsafe { ht_check_polystable(p, &bad, ptr::null_mut()) }, HtStatus::InvalidInput);
    assert_eq!(unsafe { ht_check_polystable(p, ptr::null(), ptr::null_mut()) }, HtStatus::Ok);
    assert!(ht_last_error().is_null());
    unsafe {
        ht_datum_free(p);
        ht_datum_free(ptr::null_mut());
        ht_metric_free(ptr::null_mut());
        ht_string_free(ptr::null_mut());
    }
}

#[test]
fn default_tolerances() {
    let t = ht_tolerances_default();
    assert_eq!((t.tau_commute, t.tau_rank, t.tau_cluster, t.kappa_max), (1e-9, 1e-10, 1e-7, 1e8));
}

#[test]
fn header_declares_the_interface_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/higgs_torus.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ht_datum_from_json",
        "ht_datum_to_json",
        "ht_gen_planted",
        "ht_check_polystable",
        "ht_levi_type",
        "ht_construct_metric",
        "ht_flow_solve",
        "ht_ym_residual",
        "ht_metric_from_json",
        "ht_metric_to_json",
        "ht_datum_free",
        "ht_metric_free",
        "ht_string_free",
        "ht_last_error",
        "typedef struct HtDatum HtDatum",
        "HT_STATUS_NULL_POINTER = 4",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax-check the header with the system C compiler when one exists.
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        return;
    };
    assert!(status.success());
}
