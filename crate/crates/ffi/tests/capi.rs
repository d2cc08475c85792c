use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use nena_ffi::*;

fn last_error() -> String {
    unsafe {
        let len = nena_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0u8; len + 1];
        nena_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len());
        String::from_utf8(buf[..len].to_vec()).unwrap()
    }
}

fn build(kind: NenaNetworkKind, who: &str, cond: NenaCondition, rows: &[[u8; 7]], window: usize) -> *mut NenaNetwork {
    let id = CString::new(who).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { nena_network_build(kind, id.as_ptr(), cond, rows.as_ptr() as *const u8, rows.len(), window, &mut out) };
    assert_eq!(st, NenaStatus::Ok, "{}", last_error());
    out
}

fn weight(n: *const NenaNetwork, i: usize, j: usize) -> f64 {
    let mut w = f64::NAN;
    assert_eq!(unsafe { nena_network_weight(n, i, j, &mut w) }, NenaStatus::Ok);
    w
}

#[test]
fn symmetric_network_counts_co_occurrences() {
    // alpha + correct twice, theta + alpha once
    let rows = [[0, 0, 1, 0, 0, 1, 0], [0, 0, 1, 0, 0, 1, 0], [0, 1, 1, 0, 0, 0, 0]];
    let n = build(NenaNetworkKind::Symmetric, "P01", NenaCondition::Feedback, &rows, 0);
    assert_eq!(weight(n, 2, 5), 2.0);
    assert_eq!(weight(n, 5, 2), 2.0);
    assert_eq!(weight(n, 1, 2), 1.0);
    assert_eq!(weight(n, 0, 1), 0.0);
    let mut count = 0;
    assert_eq!(unsafe { nena_network_update_count(n, &mut count) }, NenaStatus::Ok);
    assert_eq!(count, 3);
    unsafe { nena_network_free(n) };
}

#[test]
fn directed_network_points_from_ground_to_response() {
    // theta, then correct: one window with theta in the ground
    let rows = [[0, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1, 0]];
    let n = build(NenaNetworkKind::Directed, "P01", NenaCondition::Feedback, &rows, 2);
    assert_eq!(weight(n, 1, 5), 1.0);
    assert_eq!(weight(n, 5, 1), 0.0);
    unsafe { nena_network_free(n) };
}

#[test]
fn errors_set_status_and_message() {
    let mut out = ptr::null_mut();
    let st = unsafe {
        nena_network_build(
            NenaNetworkKind::Symmetric,
            ptr::null(),
            NenaCondition::Feedback,
            ptr::null(),
            0,
            0,
            &mut out,
        )
    };
    assert_eq!(st, NenaStatus::NullPointer);
    assert!(last_error().contains("participant"));
    assert!(out.is_null());

    let n = build(NenaNetworkKind::Symmetric, "P01", NenaCondition::Feedback, &[[1, 0, 0, 0, 0, 0, 0]], 0);
    let mut w = 0.0;
    assert_eq!(unsafe { nena_network_weight(n, 7, 0, &mut w) }, NenaStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    // a successful call clears the message
    assert_eq!(unsafe { nena_network_weight(n, 0, 0, &mut w) }, NenaStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { nena_network_free(n) };
    unsafe { nena_network_free(ptr::null_mut()) };
}

#[test]
fn truncated_error_message_is_terminated() {
    let a = [1.0];
    let mut d = 0.0;
    assert_ne!(unsafe { nena_cohens_d(a.as_ptr(), 1, a.as_ptr(), 1, &mut d) }, NenaStatus::Ok);
    let mut buf = [0x7f_u8; 8];
    let full = unsafe { nena_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len()) };
    assert!(full > 7);
    assert_eq!(buf[7], 0);
}

#[test]
fn band_shares_of_pure_alpha() {
    let fs = 256.0;
    let x: Vec<f64> = (0..256).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin()).collect();
    let mut s = [0.0; 5];
    assert_eq!(unsafe { nena_band_shares(x.as_ptr(), x.len(), fs, s.as_mut_ptr()) }, NenaStatus::Ok);
    assert!(s[2] > 0.9, "{s:?}");
    // the bands leave gaps (e.g. 7-8 Hz), so the shares need not sum to 1
    assert!(s.iter().sum::<f64>() <= 1.0 + 1e-12, "{s:?}");
    assert!(s[0] < 0.05 && s[3] < 0.05 && s[4] < 0.05, "{s:?}");

    let zeros = vec![0.0; 256];
    assert_eq!(
        unsafe { nena_band_shares(zeros.as_ptr(), zeros.len(), fs, s.as_mut_ptr()) },
        NenaStatus::NumericalError
    );
}

#[test]
fn t_test_and_effect_size() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 4.0, 6.0, 8.0, 10.0];
    let mut r = NenaTestReport::default();
    assert_eq!(
        unsafe { nena_welch_t_test(a.as_ptr(), a.len(), b.as_ptr(), b.len(), 0.05, &mut r) },
        NenaStatus::Ok
    );
    // hand computation: means 2.5 / 6, variances 5/3 / 10
    let se = (5.0 / 3.0 / 4.0 + 10.0 / 5.0_f64).sqrt();
    assert!((r.t_statistic - (2.5 - 6.0) / se).abs() < 1e-12);
    assert_eq!(r.first.n, 4);
    assert_eq!(r.second.n, 5);
    assert!(r.p_value > 0.0 && r.p_value < 1.0);

    let mut d = 0.0;
    assert_eq!(unsafe { nena_cohens_d(a.as_ptr(), 4, b.as_ptr(), 5, &mut d) }, NenaStatus::Ok);
    let pooled = ((3.0 * 5.0 / 3.0 + 4.0 * 10.0) / 7.0_f64).sqrt();
    assert!((d - (2.5 - 6.0) / pooled).abs() < 1e-12);
    assert!((d - r.cohens_d).abs() < 1e-15);

    let c = [1.0, 1.0];
    assert_eq!(
        unsafe { nena_welch_t_test(c.as_ptr(), 2, c.as_ptr(), 2, 0.05, &mut r) },
        NenaStatus::NumericalError
    );
}

#[test]
fn projection_of_handles() {
    let mk = |who: &str, k: u8| {
        let rows: Vec<[u8; 7]> = (0..6)
            .map(|i| {
                let mut r = [0u8; 7];
                r[(i as u8 % (k + 1)) as usize] = 1;
                r[5] = 1;
                r
            })
            .collect();
        build(NenaNetworkKind::Symmetric, who, NenaCondition::Feedback, &rows, 0)
    };
    let nets = [mk("A", 0), mk("B", 1), mk("C", 2), mk("D", 3)];
    let handles: Vec<*const NenaNetwork> = nets.iter().map(|&n| n as *const _).collect();
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { nena_projection_fit(handles.as_ptr(), handles.len(), NenaNormalization::EpochCount, &mut p) },
        NenaStatus::Ok,
        "{}",
        last_error()
    );
    let mut xy = [0.0; 2];
    let mut sum = [0.0; 2];
    for i in 0..4 {
        assert_eq!(unsafe { nena_projection_point(p, i, xy.as_mut_ptr()) }, NenaStatus::Ok);
        sum[0] += xy[0];
        sum[1] += xy[1];
    }
    // centred data project to a centred cloud
    assert!(sum[0].abs() < 1e-12 && sum[1].abs() < 1e-12);
    assert_eq!(unsafe { nena_projection_point(p, 4, xy.as_mut_ptr()) }, NenaStatus::InvalidArgument);
    let mut v = [0.0; 2];
    assert_eq!(unsafe { nena_projection_variance(p, v.as_mut_ptr()) }, NenaStatus::Ok);
    assert!(v[0] >= v[1] && v[0] + v[1] <= 1.0 + 1e-12);

    let mut q = ptr::null_mut();
    assert_eq!(
        unsafe { nena_projection_fit(handles.as_ptr(), 2, NenaNormalization::EpochCount, &mut q) },
        NenaStatus::InputError
    );
    unsafe {
        nena_projection_free(p);
        for n in nets {
            nena_network_free(n);
        }
    }
}

#[test]
fn pipeline_reports_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort.csv");
    std::fs::write(&cohort, "participant,eeg,trials\nP01,missing.csv,missing_trials.csv\n").unwrap();
    let c = CString::new(cohort.to_str().unwrap()).unwrap();
    let o = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let st = unsafe { nena_run_pipeline(c.as_ptr(), o.as_ptr(), ptr::null(), 1, false) };
    assert_eq!(st, NenaStatus::InputError);
    let msg = last_error();
    assert!(msg.contains("P01") && msg.contains("preprocess"), "{msg}");
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/capi-<hash>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libnena_ffi.a");
    let have_cc = Command::new("cc").arg("--version").output().is_ok();
    if !have_cc || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "nena.h"
int main(void) {
    double a[] = {1, 2, 3, 4}, b[] = {2, 4, 6, 8, 10};
    NenaTestReport r;
    if (nena_welch_t_test(a, 4, b, 5, 0.05, &r) != NENA_STATUS_OK) return 1;
    if (r.first.n != 4 || r.second.n != 5) return 2;
    if (nena_cohens_d(a, 1, b, 1, &r.cohens_d) == NENA_STATUS_OK) return 3;
    char msg[256];
    if (nena_last_error_message(msg, sizeof msg) == 0 || strlen(msg) == 0) return 4;
    unsigned char codes[2][7] = {{0,1,0,0,0,0,0},{0,0,0,0,0,1,0}};
    NenaNetwork *n = NULL;
    if (nena_network_build(NENA_NETWORK_KIND_DIRECTED, "P01", NENA_CONDITION_FEEDBACK, &codes[0][0], 2, 2, &n) != NENA_STATUS_OK) return 5;
    double w = 0;
    nena_network_weight(n, 1, 5, &w);
    nena_network_free(n);
    printf("%s %.1f\n", nena_version(), w);
    return w == 1.0 ? 0 : 6;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program failed: {:?}", out);
    assert!(String::from_utf8_lossy(&out.stdout).ends_with(" 1.0\n"));
}
