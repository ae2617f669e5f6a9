use std::ffi::{CStr, CString};
use std::ptr;

use lattice_sar_ffi::*;

fn last_error() -> String {
    let p = ls_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn simulate(scheme: &str, c: f64, side: usize, seed: u64) -> *mut LsDataset {
    let name = CString::new(scheme).unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe { ls_dataset_simulate(name.as_ptr(), c, side, 1, 1.0, seed, &mut ds) };
    assert_eq!(st, LsStatus::Ok);
    assert!(!ds.is_null());
    ds
}

#[test]
fn null_pointers_are_reported() {
    let name = CString::new("queen").unwrap();
    let st = unsafe { ls_dataset_simulate(name.as_ptr(), 0.5, 10, 1, 1.0, 0, ptr::null_mut()) };
    assert_eq!(st, LsStatus::NullPointer);
    assert!(last_error().contains("out"));
    let mut ds = ptr::null_mut();
    let st = unsafe { ls_dataset_simulate(ptr::null(), 0.5, 10, 1, 1.0, 0, &mut ds) };
    assert_eq!(st, LsStatus::NullPointer);
    assert!(ds.is_null());
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { ls_two_step_fit(ptr::null(), ptr::null(), &mut fit) }, LsStatus::NullPointer);
    assert_eq!(unsafe { ls_dataset_n(ptr::null()) }, 0);
    unsafe {
        ls_dataset_free(ptr::null_mut());
        ls_fit_free(ptr::null_mut());
    }
}

#[test]
fn invalid_strength_is_an_argument_error() {
    let name = CString::new("queen").unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe { ls_dataset_simulate(name.as_ptr(), 1.0, 10, 1, 1.0, 0, &mut ds) };
    assert_eq!(st, LsStatus::InvalidArgument);
    assert!(ds.is_null());
    assert!(last_error().contains("c must lie"));
    let bogus = CString::new("hexagonal").unwrap();
    assert_eq!(unsafe { ls_dataset_simulate(bogus.as_ptr(), 0.5, 10, 1, 1.0, 0, &mut ds) }, LsStatus::InvalidArgument);
}

#[test]
fn success_clears_last_error() {
    let name = CString::new("queen").unwrap();
    let mut ds = ptr::null_mut();
    unsafe { ls_dataset_simulate(name.as_ptr(), 2.0, 10, 1, 1.0, 0, &mut ds) };
    assert!(!ls_last_error().is_null());
    let ds = simulate("queen", 0.5, 10, 0);
    assert!(ls_last_error().is_null());
    unsafe { ls_dataset_free(ds) };
}

#[test]
fn simulate_fit_and_read_back() {
    let ds = simulate("ese", 0.7, 25, 11);
    unsafe {
        assert_eq!(ls_dataset_n(ds), 625);
        assert_eq!(ls_dataset_k(ds), 1);
        let mut y = vec![0.0; 625];
        assert_eq!(ls_dataset_y(ds, y.as_mut_ptr(), y.len()), LsStatus::Ok);
        assert!(y.iter().all(|v| v.is_finite()));
        assert_eq!(ls_dataset_y(ds, y.as_mut_ptr(), 10), LsStatus::InvalidArgument);

        let opts = ls_fit_options_default();
        assert_eq!(opts.m, 24);
        let mut fit = ptr::null_mut();
        assert_eq!(ls_two_step_fit(ds, &opts, &mut fit), LsStatus::Ok, "{}", last_error());
        assert_eq!(ls_fit_m(fit), 24);
        assert_eq!(ls_fit_k(fit), 1);

        let mut w = vec![0.0; 24];
        assert_eq!(ls_fit_weights(fit, w.as_mut_ptr(), w.len()), LsStatus::Ok);
        let mut beta = [0.0];
        assert_eq!(ls_fit_beta(fit, beta.as_mut_ptr(), 1), LsStatus::Ok);
        assert!((beta[0] - 1.0).abs() < 0.3, "beta = {}", beta[0]);

        let (mut c, mut l1) = (f64::NAN, f64::NAN);
        assert_eq!(ls_fit_scalars(fit, &mut c, ptr::null_mut(), &mut l1, ptr::null_mut()), LsStatus::Ok);
        let sum: f64 = w.iter().sum();
        assert!((c - sum).abs() < 1e-9 && c > 0.4 && c < 1.0, "c = {c}");
        assert!(l1 > 0.0);

        let mut r = f64::NAN;
        assert_eq!(ls_fit_rmse(fit, ds, &mut r), LsStatus::Ok);
        assert!(r > 0.5 && r < 1.5, "rmse = {r}");
        ls_fit_free(fit);
    }
    unsafe { ls_dataset_free(ds) };
}

#[test]
fn fixed_and_ml_fits() {
    let ds = simulate("queen", 0.5, 20, 3);
    let queen = CString::new("queen").unwrap();
    unsafe {
        let mut fit = ptr::null_mut();
        let mut opts = ls_fit_options_default();
        opts.m = 8;
        assert_eq!(ls_fixed_fit(ds, queen.as_ptr(), &opts, &mut fit), LsStatus::Ok, "{}", last_error());
        let mut w = vec![0.0; 8];
        ls_fit_weights(fit, w.as_mut_ptr(), 8);
        assert!(w.windows(2).all(|p| (p[0] - p[1]).abs() < 1e-12), "fixed pattern must be uniform: {w:?}");
        ls_fit_free(fit);

        let mut res = std::mem::zeroed::<LsMlResult>();
        let mut beta = [0.0];
        assert_eq!(ls_ml_fit(ds, queen.as_ptr(), 1, &mut res, beta.as_mut_ptr(), 1), LsStatus::Ok, "{}", last_error());
        assert!((res.c_hat - 0.5).abs() < 0.2, "c_hat = {}", res.c_hat);
        assert!(res.c_lower <= res.c_hat && res.c_hat <= res.c_upper);
        assert!(res.sigma2_hat > 0.0 && res.loglik.is_finite());
        assert_eq!(ls_ml_fit(ds, queen.as_ptr(), 1, &mut res, beta.as_mut_ptr(), 0), LsStatus::InvalidArgument);
    }
    unsafe { ls_dataset_free(ds) };
}

#[test]
fn dataset_from_arrays_and_csv() {
    let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let x = [1.0, 0.0, 0.5, 1.0, 2.0, 1.5, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let mut ds = ptr::null_mut();
    unsafe {
        assert_eq!(ls_dataset_new(2, 3, 2, y.as_ptr(), x.as_ptr(), &mut ds), LsStatus::Ok, "{}", last_error());
        assert_eq!(ls_dataset_n(ds), 6);
        assert_eq!(ls_dataset_k(ds), 2);
        ls_dataset_free(ds);
        let bad = [f64::NAN; 6];
        assert_eq!(ls_dataset_new(2, 3, 2, bad.as_ptr(), x.as_ptr(), &mut ds), LsStatus::Data);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    std::fs::write(&path, "row,col,y,x1\n0,0,1,2\n0,1,2,3\n1,0,3,4\n1,1,4,5\n").unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(ls_dataset_read_csv(cpath.as_ptr(), &mut ds), LsStatus::Ok, "{}", last_error());
        assert_eq!(ls_dataset_n(ds), 4);
        ls_dataset_free(ds);
    }
    std::fs::write(&path, "row,col,y,x1\n0,0,1,2\n0,1,oops,3\n").unwrap();
    assert_eq!(unsafe { ls_dataset_read_csv(cpath.as_ptr(), &mut ds) }, LsStatus::Data);
    assert!(last_error().contains("line 3"));
}

#[test]
fn metrics_match_direct_computation() {
    let a = [0.0, 0.3, 0.0, 0.2];
    let b = [0.1, 0.3, 0.0, 0.0];
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(ls_mae(a.as_ptr(), b.as_ptr(), 4, &mut v), LsStatus::Ok);
        assert!((v - 0.075).abs() < 1e-15);
        assert_eq!(ls_rmse(a.as_ptr(), b.as_ptr(), 4, &mut v), LsStatus::Ok);
        assert!((v - (0.05f64 / 4.0).sqrt()).abs() < 1e-15);
        let mut e = std::mem::zeroed::<LsWeightEval>();
        assert_eq!(ls_support_stats(b.as_ptr(), a.as_ptr(), 4, 0.0, &mut e), LsStatus::Ok);
        assert!((e.mae - 0.075).abs() < 1e-15);
        assert!((e.specificity - 0.5).abs() < 1e-15);
        assert!((e.sensitivity - 0.5).abs() < 1e-15);
        let zeros = [0.0; 4];
        ls_support_stats(zeros.as_ptr(), zeros.as_ptr(), 4, 0.0, &mut e);
        assert!(e.sensitivity.is_nan());
        assert_eq!(e.specificity, 1.0);
        assert_eq!(ls_support_stats(b.as_ptr(), a.as_ptr(), 4, -1.0, &mut e), LsStatus::InvalidArgument);
        assert_eq!(ls_mae(ptr::null(), b.as_ptr(), 4, &mut v), LsStatus::NullPointer);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lattice_sar.h")).unwrap();
    for name in [
        "ls_last_error",
        "ls_dataset_simulate",
        "ls_dataset_new",
        "ls_dataset_read_csv",
        "ls_dataset_free",
        "ls_two_step_fit",
        "ls_fixed_fit",
        "ls_fit_weights",
        "ls_fit_free",
        "ls_ml_fit",
        "ls_support_stats",
        "LS_STATUS_NULL_POINTER",
        "typedef struct LsDataset LsDataset",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
