use std::ffi::{CStr, CString};
use std::ptr;

use fedsel_ffi::*;

const TOML: &str = r#"
partition_spec = "builtin:table2"
total_rounds = 4
record_selection_time = false

[strategy]
kind = "cluster"
k = 3

[generator]
feature_dim = 8
"#;

fn last_error() -> String {
    let p = fedsel_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut FedselConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { fedsel_config_parse(text.as_ptr(), &mut cfg) }, FedselStatus::Ok);
    cfg
}

fn run(cfg: *const FedselConfig) -> *mut FedselResult {
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { fedsel_run(cfg, &mut res) }, FedselStatus::Ok);
    res
}

#[test]
fn run_and_read_back() {
    let cfg = config(TOML);
    let res = run(cfg);
    unsafe {
        assert_eq!(fedsel_result_num_rounds(res), 5);
        let mut needed = 0;
        assert_eq!(fedsel_result_accuracy(res, ptr::null_mut(), 0, &mut needed), FedselStatus::Ok);
        assert_eq!(needed, 5);
        let mut acc = vec![0.0; needed];
        let mut written = 0;
        assert_eq!(fedsel_result_accuracy(res, acc.as_mut_ptr(), acc.len(), &mut written), FedselStatus::Ok);
        assert!(acc.iter().all(|a| (0.0..=1.0).contains(a)));

        let mut small = [0.0; 2];
        assert_eq!(
            fedsel_result_accuracy(res, small.as_mut_ptr(), 2, &mut written),
            FedselStatus::BufferTooSmall
        );
        assert_eq!(written, 5);

        let mut ids = [0u32; 16];
        let mut counts = [0u64; 16];
        assert_eq!(
            fedsel_result_participation(res, ids.as_mut_ptr(), counts.as_mut_ptr(), 16, &mut written),
            FedselStatus::Ok
        );
        assert_eq!(written, 16);
        assert_eq!(ids.to_vec(), (1..=16).collect::<Vec<u32>>());
        // Bootstrap plus 3 cluster picks per round over 4 rounds.
        assert_eq!(counts.iter().sum::<u64>(), 16 + 4 * 3);

        let mut csv = ptr::null_mut();
        assert_eq!(fedsel_result_rounds_csv(res, &mut csv), FedselStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_string();
        fedsel_string_free(csv);
        assert!(text.starts_with("round,selected_ids,test_accuracy,test_loss,selection_time_s\n"));
        assert_eq!(text.lines().count(), 6);

        let tmp = tempfile::tempdir().unwrap();
        let dir = CString::new(tmp.path().to_str().unwrap()).unwrap();
        assert_eq!(fedsel_result_write_artifacts(res, dir.as_ptr()), FedselStatus::Ok);
        assert_eq!(std::fs::read_to_string(tmp.path().join("rounds.csv")).unwrap(), text);

        fedsel_result_free(res);
        fedsel_config_free(cfg);
    }
}

#[test]
fn seeded_runs_repeat_and_seeds_matter() {
    let cfg = config(TOML);
    let series = |cfg| unsafe {
        let res = run(cfg);
        let mut acc = vec![0.0; 5];
        let mut n = 0;
        fedsel_result_accuracy(res, acc.as_mut_ptr(), 5, &mut n);
        fedsel_result_free(res);
        acc
    };
    let a = series(cfg);
    assert_eq!(a, series(cfg));
    unsafe {
        assert_eq!(fedsel_config_set_seed(cfg, 99), FedselStatus::Ok);
        assert_eq!(fedsel_config_set_rounds(cfg, 4), FedselStatus::Ok);
        assert_eq!(fedsel_config_set_rounds(cfg, 0), FedselStatus::Config);
        assert_eq!(fedsel_config_set_seed(cfg, u64::MAX), FedselStatus::Config);
    }
    assert_ne!(a, series(cfg));
    unsafe { fedsel_config_free(cfg) };
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let bad = CString::new("partition_spec = \"builtin:table2\"\nnope = 1\n[strategy]\nkind = \"random\"\nn = 2\n").unwrap();
        assert_eq!(fedsel_config_parse(bad.as_ptr(), &mut cfg), FedselStatus::Config);
        assert!(last_error().contains("nope"));
        assert!(cfg.is_null());

        let missing = CString::new("/nonexistent/fedsel.toml").unwrap();
        assert_eq!(fedsel_config_load(missing.as_ptr(), &mut cfg), FedselStatus::Io);

        assert_eq!(fedsel_config_load(ptr::null(), &mut cfg), FedselStatus::NullPointer);
        assert_eq!(fedsel_run(ptr::null(), ptr::null_mut()), FedselStatus::NullPointer);
        assert_eq!(fedsel_result_num_rounds(ptr::null()), 0);

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            fedsel_config_parse(invalid.as_ptr().cast(), &mut cfg),
            FedselStatus::InvalidUtf8
        );

        fedsel_config_free(ptr::null_mut());
        fedsel_result_free(ptr::null_mut());
        fedsel_string_free(ptr::null_mut());

        assert_eq!(fedsel_config_parse(CString::new(TOML).unwrap().as_ptr(), &mut cfg), FedselStatus::Ok);
        assert!(fedsel_last_error().is_null());
        fedsel_config_free(cfg);
    }
}

#[test]
fn moving_average_and_version() {
    let series = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut out = [0.0; 5];
    unsafe {
        assert_eq!(fedsel_moving_average(series.as_ptr(), 5, 5, out.as_mut_ptr()), FedselStatus::Ok);
        assert_eq!(fedsel_moving_average(series.as_ptr(), 5, 0, out.as_mut_ptr()), FedselStatus::Config);
        assert_eq!(fedsel_moving_average(ptr::null(), 0, 3, ptr::null_mut()), FedselStatus::Ok);
        assert_eq!(fedsel_moving_average(ptr::null(), 3, 3, out.as_mut_ptr()), FedselStatus::NullPointer);
    }
    assert_eq!(out, [1.0, 1.5, 2.0, 2.5, 3.0]);
    let v = unsafe { CStr::from_ptr(fedsel_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
