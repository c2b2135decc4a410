//! Drives the C entry points from Rust, checks the generated header and, when
//! a C compiler is around, builds and runs a small C client against the
//! static library.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use nrc_ffi::*;

fn synthetic(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/synthetic").join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        nrc_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn open(kind: NrcKind) -> *mut NrcBackend {
    let mut b = ptr::null_mut();
    let st = unsafe { nrc_fixture_open(synthetic("fixture.json").as_ptr(), kind, &mut b) };
    assert_eq!(st, NrcStatus::Ok, "{}", last_error());
    assert!(!b.is_null());
    b
}

const SYN_00: &str = r#"{"id":"syn-00","dataset":"synthetic","context":null,"question":"What do you use to cut paper?","choices":["scissors","spoons","pillows"],"gold":0,"concept":{"start":23,"end":28}}"#;

fn policy(metric: NrcMetric) -> NrcPolicy {
    NrcPolicy { metric, target: NrcTarget::Qa, remove_stopwords: false, delta_w: 0.0, rtd_original: false }
}

fn score(b: *const NrcBackend, json: &str, choice: usize, p: NrcPolicy) -> (NrcStatus, f64, bool) {
    let json = CString::new(json).unwrap();
    let (mut agg, mut hb) = (f64::NAN, false);
    let st = unsafe { nrc_score_choice(b, json.as_ptr(), choice, p, &mut agg, &mut hb) };
    (st, agg, hb)
}

#[test]
fn scores_planted_nrc_values() {
    let b = open(NrcKind::Rtd);
    // Eight question tokens at P(replaced) 0.2, one answer token at 0.05.
    let gold = (8.0 * -(0.2f64.ln()) - 0.05f64.ln()) / 9.0;
    let other = (8.0 * -(0.2f64.ln()) - 0.5f64.ln()) / 9.0;
    let (st, agg, hb) = score(b, SYN_00, 0, policy(NrcMetric::Nrc));
    assert_eq!(st, NrcStatus::Ok, "{}", last_error());
    assert!((agg - gold).abs() < 1e-12);
    assert!(hb);
    let (_, agg1, _) = score(b, SYN_00, 1, policy(NrcMetric::Nrc));
    assert!((agg1 - other).abs() < 1e-12);

    let mut kind = NrcKind::Clm;
    let mut forwards = 0u64;
    unsafe {
        assert_eq!(nrc_backend_kind(b, &mut kind), NrcStatus::Ok);
        assert_eq!(nrc_backend_forwards(b, &mut forwards), NrcStatus::Ok);
    }
    assert_eq!(kind, NrcKind::Rtd);
    assert_eq!(forwards, 2);

    let original = NrcPolicy { rtd_original: true, ..policy(NrcMetric::Nrc) };
    let (st, _, hb) = score(b, SYN_00, 0, original);
    assert_eq!(st, NrcStatus::Ok);
    assert!(!hb);
    unsafe { nrc_backend_free(b) };
}

#[test]
fn reports_errors_by_status() {
    let b = open(NrcKind::Rtd);
    let (st, _, _) = score(b, SYN_00, 0, policy(NrcMetric::PplMlm));
    assert_eq!(st, NrcStatus::WrongKind, "{}", last_error());
    assert!(last_error().contains("MLM"), "{}", last_error());

    let (st, _, _) = score(b, "{not json", 0, policy(NrcMetric::Nrc));
    assert_eq!(st, NrcStatus::Parse);

    let (st, _, _) = score(b, SYN_00, 7, policy(NrcMetric::Nrc));
    assert_ne!(st, NrcStatus::Ok);

    let clm_q = NrcPolicy { target: NrcTarget::Q, ..policy(NrcMetric::PplClm) };
    let clm = open(NrcKind::Clm);
    let (st, _, _) = score(clm, SYN_00, 0, clm_q);
    assert_ne!(st, NrcStatus::Ok);
    assert!(last_error().contains("Q-only"), "{}", last_error());

    let (st, _, _) = score(ptr::null(), SYN_00, 0, policy(NrcMetric::Nrc));
    assert_eq!(st, NrcStatus::NullPointer);

    let mut out = ptr::null_mut();
    let missing = CString::new("/nonexistent/fixture.json").unwrap();
    assert_eq!(unsafe { nrc_fixture_open(missing.as_ptr(), NrcKind::Rtd, &mut out) }, NrcStatus::Io);
    assert!(out.is_null());

    #[cfg(not(feature = "onnx"))]
    {
        let dir = CString::new("/tmp").unwrap();
        assert_eq!(unsafe { nrc_bundle_open(dir.as_ptr(), &mut out) }, NrcStatus::Unsupported);
    }

    unsafe {
        nrc_backend_free(b);
        nrc_backend_free(clm);
        nrc_backend_free(ptr::null_mut());
    }
}

#[test]
fn last_error_truncates_and_reports_full_length() {
    let (st, _, _) = score(ptr::null(), SYN_00, 0, policy(NrcMetric::Nrc));
    assert_eq!(st, NrcStatus::NullPointer);
    let full = unsafe { nrc_last_error(ptr::null_mut(), 0) };
    assert_eq!(full, "`backend` is null".len());
    let mut small = [1 as c_char; 4];
    unsafe { nrc_last_error(small.as_mut_ptr(), small.len()) };
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes(), b"`ba");
}

#[test]
fn aggregate_and_p_value() {
    let s = [1.0, 2.0, 4.0];
    let w = [1.0, 0.0, 3.0];
    let mut out = 0.0;
    assert_eq!(unsafe { nrc_aggregate(s.as_ptr(), w.as_ptr(), 3, &mut out) }, NrcStatus::Ok);
    assert_eq!(out, 13.0 / 4.0);
    let zero = [0.0; 3];
    assert_eq!(unsafe { nrc_aggregate(s.as_ptr(), zero.as_ptr(), 3, &mut out) }, NrcStatus::EmptyTarget);
    let neg = [1.0, -1.0, 1.0];
    assert_eq!(unsafe { nrc_aggregate(s.as_ptr(), neg.as_ptr(), 3, &mut out) }, NrcStatus::InvalidArgument);

    // Eight discordant pairs all favouring `a`.
    let a = [1u8; 8];
    let b = [0u8; 8];
    assert_eq!(unsafe { nrc_permutation_p_value(a.as_ptr(), b.as_ptr(), 8, 0, &mut out) }, NrcStatus::Ok);
    assert_eq!(out, 2.0 / 256.0);

    let a: Vec<u8> = (0..40).map(|i| u8::from(i % 3 != 0)).collect();
    let b: Vec<u8> = (0..40).map(|i| u8::from(i % 2 == 0)).collect();
    let (mut p1, mut p2) = (0.0, 0.0);
    unsafe {
        nrc_permutation_p_value(a.as_ptr(), b.as_ptr(), 40, 9, &mut p1);
        nrc_permutation_p_value(a.as_ptr(), b.as_ptr(), 40, 9, &mut p2);
    }
    assert_eq!(p1.to_bits(), p2.to_bits());
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(nrc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/nrc.h")
}

#[test]
fn header_declares_every_entry_point() {
    let h = std::fs::read_to_string(header()).unwrap();
    for f in [
        "nrc_fixture_open",
        "nrc_bundle_open",
        "nrc_backend_free",
        "nrc_backend_kind",
        "nrc_backend_forwards",
        "nrc_score_choice",
        "nrc_aggregate",
        "nrc_permutation_p_value",
        "nrc_last_error",
        "nrc_version",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(h.contains("typedef struct NrcBackend NrcBackend;"), "handle must stay opaque");
    assert!(h.contains("NRC_STATUS_OK = 0"));
    assert!(h.contains("NRC_STATUS_PANIC = 10"));
    assert!(h.starts_with("#ifndef NRC_H"));
}

const CLIENT: &str = r#"
#include <stdio.h>
#include "nrc.h"

int main(int argc, char **argv) {
    NrcBackend *b = NULL;
    if (nrc_fixture_open(argv[1], NRC_KIND_RTD, &b) != NRC_STATUS_OK) return 3;
    NrcPolicy p = { NRC_METRIC_NRC, NRC_TARGET_QA, false, 0.0, false };
    double agg = 0.0;
    bool hb = false;
    NrcStatus st = nrc_score_choice(b, argv[2], 0, p, &agg, &hb);
    uint64_t fw = 0;
    nrc_backend_forwards(b, &fw);
    nrc_backend_free(b);
    if (st != NRC_STATUS_OK) return 4;
    printf("%.6f %d %llu\n", agg, hb, (unsigned long long)fw);
    return 0;
}
"#;

fn cc() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().filter(|o| o.status.success()).map(|_| cc)
}

fn staticlib() -> Option<PathBuf> {
    // target/<profile>/deps/<this test> -> target/<profile>/libnrc_ffi.a
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libnrc_ffi.a");
    lib.exists().then_some(lib)
}

fn include_dir() -> PathBuf {
    header().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, CLIENT).unwrap();
    let o = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(include_dir())
        .arg(&src)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn c_client_links_against_staticlib() {
    let (Some(cc), Some(lib)) = (cc(), staticlib()) else {
        eprintln!("no C compiler or static library; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, CLIENT).unwrap();
    let o = Command::new(&cc)
        .arg("-I")
        .arg(include_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fixture = synthetic("fixture.json");
    let run = Command::new(&bin).arg(Path::new(fixture.to_str().unwrap())).arg(SYN_00).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let gold = (8.0 * -(0.2f64.ln()) - 0.05f64.ln()) / 9.0;
    assert_eq!(String::from_utf8_lossy(&run.stdout), format!("{gold:.6} 1 1\n"));
}
