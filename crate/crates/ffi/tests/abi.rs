use std::ffi::{CStr, CString};
use std::ptr;

use paritycode_ffi::*;

fn lhz(k: usize) -> *mut PcCode {
    let mut c = ptr::null_mut();
    assert_eq!(pc_lhz_layout(k, &mut c), PcStatus::Ok);
    assert!(!c.is_null());
    c
}

fn last_error() -> String {
    let p = pc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lhz_dimensions_and_distance() {
    let c = lhz(5);
    unsafe {
        assert_eq!(pc_code_n(c), 15);
        assert_eq!(pc_code_k(c), 5);
        assert_eq!(pc_code_num_stabilizers(c), 10);
        let mut d = 0;
        assert_eq!(pc_code_distance(c, &mut d), PcStatus::Ok);
        assert_eq!(d, 5);
        pc_code_free(c);
    }
}

#[test]
fn text_round_trip() {
    let c = lhz(4);
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(pc_code_to_text(c, &mut s), PcStatus::Ok);
        let mut c2 = ptr::null_mut();
        assert_eq!(pc_code_from_text(s, &mut c2), PcStatus::Ok);
        let mut s2 = ptr::null_mut();
        assert_eq!(pc_code_to_text(c2, &mut s2), PcStatus::Ok);
        assert_eq!(CStr::from_ptr(s), CStr::from_ptr(s2));
        pc_string_free(s);
        pc_string_free(s2);
        pc_code_free(c);
        pc_code_free(c2);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut c = ptr::null_mut();
    assert_eq!(pc_lhz_layout(1, &mut c), PcStatus::InvalidArgument);
    assert!(c.is_null());
    assert!(last_error().contains("k >= 2"));

    let bad = CString::new("not a code").unwrap();
    assert_eq!(unsafe { pc_code_from_text(bad.as_ptr(), &mut c) }, PcStatus::Parse);
    assert_eq!(unsafe { pc_code_from_text(ptr::null(), &mut c) }, PcStatus::NullPointer);
    assert_eq!(unsafe { pc_code_distance(ptr::null(), ptr::null_mut()) }, PcStatus::NullPointer);
    assert_eq!(unsafe { pc_code_n(ptr::null()) }, 0);
    // Freeing null is a no-op.
    unsafe {
        pc_code_free(ptr::null_mut());
        pc_string_free(ptr::null_mut());
        pc_bp_decoder_free(ptr::null_mut());
    }
}

#[test]
fn stabilizer_buffer_too_small_reports_length() {
    let c = lhz(4);
    unsafe {
        let mut len = 0;
        let mut buf = [0usize; 1];
        assert_eq!(pc_code_stabilizer(c, 0, buf.as_mut_ptr(), 1, &mut len), PcStatus::InvalidArgument);
        assert!(len >= 3);
        let mut buf = vec![0usize; len];
        assert_eq!(pc_code_stabilizer(c, 0, buf.as_mut_ptr(), len, &mut len), PcStatus::Ok);
        let n = pc_code_n(c);
        assert!(buf.iter().all(|&q| q < n));
        assert_eq!(
            pc_code_stabilizer(c, 99, buf.as_mut_ptr(), len, &mut len),
            PcStatus::InvalidArgument
        );
        pc_code_free(c);
    }
}

#[test]
fn single_flip_is_decoded() {
    let c = lhz(4);
    unsafe {
        let n = pc_code_n(c);
        let m = pc_code_num_stabilizers(c);
        let mut dec = ptr::null_mut();
        assert_eq!(pc_bp_decoder_new(c, 50, &mut dec), PcStatus::Ok);
        let priors = vec![0.05; n];
        for q in 0..n {
            let mut flips = vec![0u8; n];
            flips[q] = 1;
            let mut syn = vec![0u8; m];
            assert_eq!(pc_syndrome(c, flips.as_ptr(), n, syn.as_mut_ptr(), m), PcStatus::Ok);
            assert!(syn.contains(&1));
            let mut corr = vec![0u8; n];
            let mut conv = 0;
            assert_eq!(
                pc_bp_decode(dec, syn.as_ptr(), m, priors.as_ptr(), n, corr.as_mut_ptr(), &mut conv),
                PcStatus::Ok
            );
            assert_eq!(conv, 1);
            assert_eq!(corr, flips, "qubit {q}");
        }
        let mut syn = vec![0u8; m];
        assert_eq!(
            pc_syndrome(c, priors.as_ptr().cast(), n - 1, syn.as_mut_ptr(), m),
            PcStatus::InvalidArgument
        );
        pc_bp_decoder_free(dec);
        pc_code_free(c);
    }
}

#[test]
fn trials_are_seed_deterministic() {
    let c = lhz(3);
    unsafe {
        let mut a = PcTrialReport::default();
        let mut b = PcTrialReport::default();
        assert_eq!(pc_run_trials(c, 0.05, 0.01, 2000, 11, 0, 50, &mut a), PcStatus::Ok);
        assert_eq!(pc_run_trials(c, 0.05, 0.01, 2000, 11, 0, 50, &mut b), PcStatus::Ok);
        assert_eq!(a.trials, 2000);
        assert_eq!(a.logical_errors, b.logical_errors);
        assert!(a.logical_errors > 0 && a.logical_errors < 2000);
        assert_eq!(pc_run_trials(c, 0.05, 0.01, 10, 11, 7, 50, &mut a), PcStatus::InvalidArgument);
        assert_eq!(pc_run_trials(c, 1.5, 0.0, 10, 11, 1, 50, &mut a), PcStatus::InvalidArgument);
        pc_code_free(c);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/parity_code.h")).unwrap();
    for f in [
        "pc_last_error_message",
        "pc_lhz_layout",
        "pc_code_from_text",
        "pc_code_to_text",
        "pc_string_free",
        "pc_code_free",
        "pc_code_n",
        "pc_code_k",
        "pc_code_num_stabilizers",
        "pc_code_stabilizer",
        "pc_code_distance",
        "pc_syndrome",
        "pc_bp_decoder_new",
        "pc_bp_decode",
        "pc_bp_decoder_free",
        "pc_run_trials",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct PcCode PcCode;"));
    assert!(header.contains("PC_STATUS_OK = 0"));
}
