use std::ffi::{CStr, CString};
use std::ptr;

use deferlab_ffi::*;

fn last_error() -> String {
    unsafe {
        let need = dl_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; need.max(1)];
        dl_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn small_dataset() -> *mut DlDataset {
    // humans are right exactly on the points with x0 > 0.5
    let x = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
    let y = [0usize, 1, 0, 1, 0, 1];
    let h = [1usize, 0, 1, 1, 0, 1];
    let mut ds = ptr::null_mut();
    let s = unsafe { dl_dataset_new(x.as_ptr(), 6, 1, y.as_ptr(), h.as_ptr(), 2, &mut ds) };
    assert_eq!(s, DlStatus::Ok);
    ds
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(dl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported_not_dereferenced() {
    unsafe {
        let mut ds = ptr::null_mut();
        let s = dl_dataset_new(ptr::null(), 2, 1, ptr::null(), ptr::null(), 2, &mut ds);
        assert_eq!(s, DlStatus::NullPointer);
        assert!(ds.is_null());
        assert!(last_error().contains("null"));
        let mut r = DlReport::default();
        assert_eq!(
            dl_evaluate(ptr::null(), ptr::null(), &mut r),
            DlStatus::NullPointer
        );
        assert_eq!(dl_dataset_len(ptr::null()), 0);
        dl_dataset_free(ptr::null_mut());
        dl_model_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_codes_and_clear_on_success() {
    unsafe {
        let x = [0.0, 1.0];
        let y = [0usize, 5];
        let h = [0usize, 0];
        let mut ds = ptr::null_mut();
        let s = dl_dataset_new(x.as_ptr(), 2, 1, y.as_ptr(), h.as_ptr(), 2, &mut ds);
        assert_eq!(s, DlStatus::InvalidArgument);
        assert!(!last_error().is_empty());

        let mut b = 0.0;
        assert_eq!(
            dl_generalization_bound(0.0, 1.0, 1.0, 2, 100, 0.5, 0.1, &mut b),
            DlStatus::Ok
        );
        assert_eq!(dl_last_error_message(ptr::null_mut(), 0), 0);
        assert!((b - 3.1138).abs() < 5e-5, "{b}");
        assert_eq!(
            dl_generalization_bound(0.0, 1.0, 1.0, 2, 100, 0.5, 0.9, &mut b),
            DlStatus::InvalidArgument
        );

        let missing = CString::new("/nonexistent/deferlab.csv").unwrap();
        assert_eq!(
            dl_dataset_read_csv(missing.as_ptr(), 0, &mut ds),
            DlStatus::Io
        );
        let method = CString::new("perceptron").unwrap();
        let d = small_dataset();
        let mut m = ptr::null_mut();
        assert_eq!(
            dl_train(d, d, method.as_ptr(), 1, 0, &mut m),
            DlStatus::InvalidArgument
        );
        dl_dataset_free(d);
    }
}

#[test]
fn truncated_error_buffer_stays_terminated() {
    unsafe {
        let mut b = 0.0;
        dl_generalization_bound(0.0, 1.0, 1.0, 2, 100, 0.5, 0.9, &mut b);
        let need = dl_last_error_message(ptr::null_mut(), 0);
        let mut buf = [1 as std::ffi::c_char; 8];
        assert_eq!(dl_last_error_message(buf.as_mut_ptr(), buf.len()), need);
        assert_eq!(buf[7], 0);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 7);
    }
}

#[test]
fn milp_on_small_data_is_exact_and_round_trips_through_a_file() {
    unsafe {
        let ds = small_dataset();
        assert_eq!(
            (
                dl_dataset_len(ds),
                dl_dataset_dim(ds),
                dl_dataset_num_classes(ds)
            ),
            (6, 1, 2)
        );
        let mut pair = ptr::null_mut();
        let mut status = DlMilpStatus::Infeasible;
        assert_eq!(
            dl_milp_solve(ds, 30.0, 0, &mut pair, &mut status),
            DlStatus::Ok
        );
        assert_eq!(status, DlMilpStatus::ProvenOptimal);
        let mut r = DlReport::default();
        assert_eq!(dl_evaluate(pair, ds, &mut r), DlStatus::Ok);
        // the human is wrong on the first three and no threshold fits 0,1,0
        assert!((r.system_accuracy - 5.0 / 6.0).abs() < 1e-12, "{r:?}");
        assert_eq!(r.n_points, 6);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("pair.txt").to_str().unwrap()).unwrap();
        assert_eq!(dl_model_write(pair, path.as_ptr()), DlStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(dl_model_read(path.as_ptr(), &mut back), DlStatus::Ok);
        let mut r2 = DlReport::default();
        dl_evaluate(back, ds, &mut r2);
        assert_eq!(r.system_accuracy, r2.system_accuracy);
        assert_eq!(dl_model_dim(back), 1);

        let mut deferred = -1;
        let mut label = usize::MAX;
        let x = [0.8];
        assert_eq!(
            dl_model_decide(back, x.as_ptr(), 1, &mut deferred, &mut label),
            DlStatus::Ok
        );
        assert!(deferred == 0 || deferred == 1);
        assert!(label < 2);
        let x2 = [0.8, 0.1];
        assert_eq!(
            dl_model_decide(back, x2.as_ptr(), 2, &mut deferred, &mut label),
            DlStatus::DimensionMismatch
        );

        dl_model_free(pair);
        dl_model_free(back);
        dl_dataset_free(ds);
    }
}

#[test]
fn synthetic_train_and_evaluate() {
    unsafe {
        let mut train = ptr::null_mut();
        let mut test = ptr::null_mut();
        let mut planted = ptr::null_mut();
        let s = dl_synthetic_generate(
            3,
            200,
            4,
            0.0,
            0.3,
            0.0,
            7,
            500,
            &mut train,
            &mut test,
            &mut planted,
        );
        assert_eq!(s, DlStatus::Ok, "{}", last_error());
        assert_eq!((dl_dataset_len(train), dl_dataset_len(test)), (200, 500));

        let mut r = DlReport::default();
        assert_eq!(dl_evaluate(planted, test, &mut r), DlStatus::Ok);
        assert!(r.system_accuracy > 0.99, "{r:?}");

        let method = CString::new("selective").unwrap();
        let mut sys = ptr::null_mut();
        let s = dl_train(train, test, method.as_ptr(), 20, 1, &mut sys);
        assert_eq!(s, DlStatus::Ok, "{}", last_error());
        assert_eq!(dl_evaluate(sys, test, &mut r), DlStatus::Ok);
        assert!((0.0..=1.0).contains(&r.system_accuracy));
        if r.coverage == 1.0 {
            assert!(r.human_accuracy_deferred.is_nan());
        }

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("model.txt").to_str().unwrap()).unwrap();
        assert_eq!(dl_model_write(sys, path.as_ptr()), DlStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(dl_model_read(path.as_ptr(), &mut back), DlStatus::Ok);
        let mut r2 = DlReport::default();
        dl_evaluate(back, test, &mut r2);
        assert_eq!(r.system_accuracy, r2.system_accuracy);

        for h in [sys, back, planted] {
            dl_model_free(h);
        }
        dl_dataset_free(train);
        dl_dataset_free(test);
    }
}
