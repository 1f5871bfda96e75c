use std::ffi::{CStr, CString};
use std::ptr;

use d2d_qgnn::checkpoint::Checkpoint;
use d2d_qgnn::graph::FeatureNorm;
use d2d_qgnn::qgnn::QgnnShape;
use d2d_qgnn::train::Model;
use d2d_qgnn_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(d2d_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn diag_channel(gains: &[f64], sigma2: f64) -> *mut D2dChannel {
    let n = (gains.len() as f64).sqrt() as usize;
    let im = vec![0.0; gains.len()];
    let mut ch = ptr::null_mut();
    let st = unsafe { d2d_channel_from_gains(n, gains.as_ptr(), im.as_ptr(), sigma2, ptr::null(), 1.0, &mut ch) };
    assert_eq!(st, D2dStatus::Ok, "{}", last_error());
    ch
}

#[test]
fn sinr_and_rate_match_hand_values() {
    let ch = diag_channel(&[1.0, 0.5, 0.5, 1.0], 0.1);
    let p = [1.0, 1.0];
    let mut gamma = [0.0; 2];
    let mut rate = 0.0;
    unsafe {
        assert_eq!(d2d_channel_pairs(ch), 2);
        assert_eq!(d2d_sinr(ch, p.as_ptr(), 2, gamma.as_mut_ptr()), D2dStatus::Ok);
        assert_eq!(d2d_sum_rate(ch, p.as_ptr(), 2, &mut rate), D2dStatus::Ok);
        d2d_channel_free(ch);
    }
    // 1 / (0.25 + 0.1)
    assert!((gamma[0] - 1.0 / 0.35).abs() < 1e-12);
    assert!((rate - 2.0 * (1.0 + 1.0 / 0.35f64).log2()).abs() < 1e-12);
}

#[test]
fn errors_carry_status_and_message() {
    let ch = diag_channel(&[1.0, 0.5, 0.5, 1.0], 0.1);
    let mut out = [0.0; 3];
    unsafe {
        let bad = [2.0, 0.0];
        assert_eq!(
            d2d_sinr(ch, bad.as_ptr(), 2, out.as_mut_ptr()),
            D2dStatus::InfeasiblePower
        );
        assert!(last_error().contains("p[0]"));

        let p = [0.5, 0.5];
        let three = [0.5; 3];
        assert_eq!(
            d2d_sinr(ch, three.as_ptr(), 3, out.as_mut_ptr()),
            D2dStatus::DimensionMismatch
        );
        assert_eq!(
            d2d_sinr(ptr::null(), p.as_ptr(), 2, out.as_mut_ptr()),
            D2dStatus::NullPointer
        );
        assert_eq!(last_error(), "ch is null");
        assert_eq!(d2d_sum_rate(ch, p.as_ptr(), 2, ptr::null_mut()), D2dStatus::NullPointer);

        let mut h = ptr::null_mut();
        assert_eq!(
            d2d_channel_generate(3, 10.0, 5.0, 2.0, 3.0, 0.01, 1.0, 1, 7, &mut h),
            D2dStatus::InvalidArgument
        );
        assert!(h.is_null());
        d2d_channel_free(ch);
        d2d_channel_free(ptr::null_mut());
        d2d_model_free(ptr::null_mut());
    }
}

#[test]
fn wmmse_through_the_abi() {
    let mut ch = ptr::null_mut();
    let mut p = [0.0; 4];
    let mut rate = 0.0;
    let mut full = 0.0;
    unsafe {
        assert_eq!(
            d2d_channel_generate(4, 100.0, 2.0, 10.0, 3.0, 0.01, 1.0, 1, 11, &mut ch),
            D2dStatus::Ok
        );
        assert_eq!(d2d_wmmse(ch, 100, 1e-6, p.as_mut_ptr(), 4, &mut rate), D2dStatus::Ok);
        assert_eq!(d2d_sum_rate(ch, [1.0; 4].as_ptr(), 4, &mut full), D2dStatus::Ok);
        assert_eq!(
            d2d_wmmse(ch, 0, 1e-6, p.as_mut_ptr(), 4, ptr::null_mut()),
            D2dStatus::InvalidArgument
        );
        d2d_channel_free(ch);
    }
    assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    assert!(rate >= full - 1e-12);
}

#[test]
fn model_checkpoint_loads_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let model = Model::qgnn(
        QgnnShape {
            features: 2,
            layers: 1,
            depth: 1,
            k: 2,
        },
        3,
    )
    .unwrap();
    Checkpoint::from_model(&model, FeatureNorm::default())
        .write(&path)
        .unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let mut m = ptr::null_mut();
    let mut ch = ptr::null_mut();
    let mut p = [0.0; 3];
    let mut again = [0.0; 3];
    unsafe {
        assert_eq!(
            d2d_model_load(cpath.as_ptr(), &mut m),
            D2dStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(d2d_model_num_params(m), model.num_params());
        assert_eq!(
            d2d_channel_generate(3, 100.0, 2.0, 10.0, 3.0, 0.01, 1.0, 1, 5, &mut ch),
            D2dStatus::Ok
        );
        assert_eq!(d2d_model_powers(m, ch, 9, p.as_mut_ptr(), 3), D2dStatus::Ok);
        assert_eq!(d2d_model_powers(m, ch, 9, again.as_mut_ptr(), 3), D2dStatus::Ok);
        assert_eq!(
            d2d_model_powers(m, ch, 9, p.as_mut_ptr(), 2),
            D2dStatus::DimensionMismatch
        );
        d2d_model_free(m);
        d2d_channel_free(ch);

        let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(d2d_model_load(missing.as_ptr(), &mut m), D2dStatus::Io);
        std::fs::write(&path, "{}").unwrap();
        assert_eq!(d2d_model_load(cpath.as_ptr(), &mut m), D2dStatus::Format);
        assert!(m.is_null());
    }
    assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(d2d_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/d2d_qgnn.h")).unwrap();
    for name in [
        "d2d_last_error",
        "d2d_version",
        "d2d_channel_generate",
        "d2d_channel_from_gains",
        "d2d_channel_pairs",
        "d2d_channel_free",
        "d2d_sinr",
        "d2d_sum_rate",
        "d2d_wmmse",
        "d2d_model_load",
        "d2d_model_num_params",
        "d2d_model_powers",
        "d2d_model_free",
        "D2D_STATUS_OK",
        "typedef struct D2dChannel D2dChannel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
