use std::ffi::{CStr, CString};
use std::ptr;

use compjp_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(compjp_last_error_message()) }.to_str().unwrap().to_owned()
}

unsafe fn tiny() -> *mut CompjpConfig {
    let mut cfg = ptr::null_mut();
    let text = c("sites = 1\nues-per-bs = 2\ndrops = 2\nblocks = 4 # short\n");
    assert_eq!(compjp_config_parse(text.as_ptr(), &mut cfg), CompjpStatus::Ok);
    cfg
}

#[test]
fn run_and_read_back() {
    unsafe {
        let cfg = tiny();
        assert_eq!(compjp_config_set(cfg, c("ue_antennas").as_ptr(), c("2").as_ptr()), CompjpStatus::Ok);
        assert_eq!(compjp_config_validate(cfg), CompjpStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(compjp_run(cfg, &mut r), CompjpStatus::Ok, "{}", last_error());
        assert_eq!(last_error(), "");

        let mut cell = 0.0;
        assert_eq!(compjp_result_cell_rate(r, &mut cell), CompjpStatus::Ok);
        assert!(cell > 0.0);
        let (mut p5, mut p95) = (0.0, 0.0);
        compjp_result_ue_percentile(r, 0.05, &mut p5);
        compjp_result_ue_percentile(r, 0.95, &mut p95);
        assert!(0.0 <= p5 && p5 <= p95);

        let mut ranks = [0.0; COMPJP_MAX_RANK];
        assert_eq!(compjp_result_rank_distribution(r, ranks.as_mut_ptr(), ranks.len()), CompjpStatus::Ok);
        assert!((ranks.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut power = 0.0;
        compjp_result_max_power_ratio(r, &mut power);
        assert!(power <= 1.0 + 1e-9);

        assert_eq!(compjp_result_drop_count(r), 2);
        let mut m = CompjpDropMetrics::default();
        assert_eq!(compjp_result_drop_metrics(r, 1, &mut m), CompjpStatus::Ok);
        assert!(m.cell_rate > 0.0 && m.candidates > 0);
        assert_eq!(compjp_result_drop_metrics(r, 2, &mut m), CompjpStatus::InvalidArgument);
        assert!(last_error().contains("drop 2"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let cpath = c(path.to_str().unwrap());
        assert_eq!(compjp_result_write_csv(r, cpath.as_ptr()), CompjpStatus::Ok);
        let rows = compjp::results::load_results(&path).unwrap();
        assert_eq!(rows.len(), 1);

        compjp_result_free(r);
        compjp_config_free(cfg);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let cfg = compjp_config_new();
        assert_eq!(compjp_config_set(cfg, c("bogus").as_ptr(), c("1").as_ptr()), CompjpStatus::Config);
        assert!(!last_error().is_empty());
        assert_eq!(compjp_config_set(cfg, ptr::null(), c("1").as_ptr()), CompjpStatus::NullPointer);
        assert_eq!(compjp_config_set(cfg, c("blocks").as_ptr(), c("many").as_ptr()), CompjpStatus::Config);
        assert_eq!(compjp_config_set(cfg, c("csi").as_ptr(), c("estimated").as_ptr()), CompjpStatus::Ok);
        assert_eq!(compjp_config_validate(cfg), CompjpStatus::Config);
        let mut r = ptr::null_mut();
        assert_eq!(compjp_run(cfg, &mut r), CompjpStatus::Config);
        assert!(r.is_null());
        assert_eq!(compjp_run(ptr::null(), &mut r), CompjpStatus::NullPointer);
        compjp_config_free(cfg);
        compjp_config_free(ptr::null_mut());
        compjp_result_free(ptr::null_mut());
        assert_eq!(compjp_result_drop_count(ptr::null()), 0);

        let bad = [0xffu8, 0];
        let mut out = ptr::null_mut();
        assert_eq!(compjp_config_parse(bad.as_ptr().cast(), &mut out), CompjpStatus::InvalidArgument);
    }
}

#[test]
fn io_failure_is_reported() {
    unsafe {
        let cfg = tiny();
        let mut r = ptr::null_mut();
        assert_eq!(compjp_run(cfg, &mut r), CompjpStatus::Ok);
        let p = c("/nonexistent-dir/r.csv");
        assert_eq!(compjp_result_write_csv(r, p.as_ptr()), CompjpStatus::Io);
        assert!(last_error().contains("r.csv"));
        let mut v = 0.0;
        assert_eq!(compjp_result_ue_percentile(r, 1.5, &mut v), CompjpStatus::InvalidArgument);
        compjp_result_free(r);
        compjp_config_free(cfg);
    }
}

#[test]
fn helpers() {
    unsafe {
        let mut n = 0u64;
        assert_eq!(compjp_exhaustive_cluster_count(21, 3, &mut n), CompjpStatus::Ok);
        assert_eq!(n, 21 + 210 + 1330);
        assert_eq!(compjp_exhaustive_cluster_count(200, 100, &mut n), CompjpStatus::InvalidArgument);
        assert_eq!(compjp_exhaustive_cluster_count(3, 4, &mut n), CompjpStatus::Config);

        assert_eq!(compjp_antenna_gain_db(0.0, 70f64.to_radians(), 20.0), 0.0);
        assert!((compjp_antenna_gain_db(35f64.to_radians(), 70f64.to_radians(), 20.0) + 3.0).abs() < 1e-12);
        assert_eq!(compjp_antenna_gain_db(std::f64::consts::PI, 70f64.to_radians(), 20.0), -20.0);

        let mut ne = 0usize;
        assert_eq!(compjp_block_size(5.0, 43e-9, &mut ne), CompjpStatus::Ok);
        assert_eq!(ne, compjp::channel::block_size(5.0, 43e-9).unwrap());
        assert_eq!(compjp_block_size(0.0, 43e-9, &mut ne), CompjpStatus::Config);
    }
}
