use std::ffi::{CStr, CString};
use std::io::Write;
use std::process::Command;
use std::ptr;

use medsft_ffi::*;

fn last_error() -> String {
    let p = medsft_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(medsft_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn ttest_known_value() {
    let a = [1.0, 2.0, 3.0];
    let b = [0.0; 3];
    let mut out = MedsftTTest::default();
    let s = unsafe { medsft_paired_ttest(a.as_ptr(), b.as_ptr(), 3, &mut out) };
    assert_eq!(s, MedsftStatus::Ok);
    assert!(medsft_last_error().is_null());
    assert!((out.t - 12f64.sqrt()).abs() < 1e-12);
    assert!((out.p - 0.0742).abs() < 5e-5);
    assert_eq!(out.n, 3);
}

#[test]
fn ttest_errors_set_message() {
    let a = [1.0];
    let mut out = MedsftTTest::default();
    let s = unsafe { medsft_paired_ttest(a.as_ptr(), a.as_ptr(), 1, &mut out) };
    assert_eq!(s, MedsftStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    let s = unsafe { medsft_paired_ttest(ptr::null(), a.as_ptr(), 2, &mut out) };
    assert_eq!(s, MedsftStatus::NullPointer);
    assert!(last_error().contains('a'));
}

#[test]
fn gap_and_win_rate() {
    let mut g = 0.0;
    assert_eq!(unsafe { medsft_gap_percent(85.1, 87.4, &mut g) }, MedsftStatus::Ok);
    assert!((g - -2.63).abs() < 1e-9);
    assert_eq!(unsafe { medsft_gap_percent(1.0, 0.01, &mut g) }, MedsftStatus::OutOfRange);

    let m = [80.0, 70.0, 90.0, 60.0];
    let h = [80.0, 75.0, 85.0, 61.0];
    let mut w = 0.0;
    assert_eq!(unsafe { medsft_win_rate(m.as_ptr(), h.as_ptr(), 4, &mut w) }, MedsftStatus::Ok);
    assert_eq!(w, 50.0);
    assert_eq!(unsafe { medsft_win_rate(m.as_ptr(), h.as_ptr(), 0, &mut w) }, MedsftStatus::InvalidArgument);
}

#[test]
fn select_mask_all_dims() {
    let scores = [10.0, 10.0, 10.0, 90.0, 90.0, 90.0, 90.0, 10.0, 90.0, 50.0, 50.0, 50.0];
    let mut mask = [9u8; 4];
    let mut th = [0.0; 3];
    let s = unsafe { medsft_select_mask(scores.as_ptr(), 4, 0.5, MedsftCombine::AllDims, mask.as_mut_ptr(), th.as_mut_ptr()) };
    assert_eq!(s, MedsftStatus::Ok);
    assert_eq!(th, [50.0, 10.0, 50.0]);
    assert_eq!(mask, [0, 1, 1, 1]);
    let s = unsafe { medsft_select_mask(scores.as_ptr(), 4, 0.0, MedsftCombine::AllDims, mask.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(s, MedsftStatus::InvalidArgument);
}

const RECORD: &str = r#"{"id":"r1","department":"surgery","turns":[{"role":"patient","text":"My knee hurts."},{"role":"doctor","text":"How long? Rest it."}],"source":"human"}"#;

#[test]
fn style_features_round_trip() {
    let input = CString::new(RECORD).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { medsft_style_features_json(input.as_ptr(), false, &mut out) };
    assert_eq!(s, MedsftStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { medsft_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["rounds"], 1);
    assert_eq!(v["question_pattern"], serde_json::json!([true]));

    let bad = CString::new("{not json").unwrap();
    let s = unsafe { medsft_style_features_json(bad.as_ptr(), false, &mut out) };
    assert_eq!(s, MedsftStatus::Parse);
}

#[test]
fn corpus_handle_lifecycle() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "{RECORD}").unwrap();
    writeln!(f, "garbage").unwrap();
    let path = CString::new(f.path().to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { medsft_corpus_open(path.as_ptr(), false, &mut h) }, MedsftStatus::Parse);
    assert!(last_error().contains("line 2"), "{}", last_error());
    assert_eq!(unsafe { medsft_corpus_open(path.as_ptr(), true, &mut h) }, MedsftStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { medsft_corpus_len(h, &mut n) }, MedsftStatus::Ok);
    assert_eq!(n, 1);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { medsft_corpus_record_json(h, 0, &mut s) }, MedsftStatus::Ok);
    assert!(unsafe { CStr::from_ptr(s) }.to_str().unwrap().contains("\"r1\""));
    unsafe { medsft_string_free(s) };
    assert_eq!(unsafe { medsft_corpus_record_json(h, 1, &mut s) }, MedsftStatus::OutOfRange);
    unsafe { medsft_corpus_free(h) };
    assert_eq!(unsafe { medsft_corpus_len(ptr::null(), &mut n) }, MedsftStatus::NullPointer);

    let missing = CString::new("/nonexistent/records.jsonl").unwrap();
    assert_eq!(unsafe { medsft_corpus_open(missing.as_ptr(), false, &mut h) }, MedsftStatus::Io);
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/medsft.h");
    let src = format!("#include \"{header}\"\nint main(void) {{ MedsftTTest t; (void)t; return medsft_version() == 0; }}\n");
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("check.c");
    std::fs::write(&c, src).unwrap();
    match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&c).status() {
        Ok(status) => assert!(status.success()),
        Err(e) => eprintln!("skipping: no C compiler ({e})"),
    }
}
