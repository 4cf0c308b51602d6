use std::ffi::{CStr, CString};
use std::ptr;

use cpl_ffi::*;

fn last_error() -> String {
    let p = cpl_last_error();
    assert!(!p.is_null(), "no error recorded");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalars_match_closed_forms() {
    let mut p = 0.0;
    assert_eq!(unsafe { cpl_pref_prob(1.0, 0.0, &mut p) }, CplStatus::Ok);
    assert!((p - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    assert!(cpl_last_error().is_null());

    assert_eq!(
        unsafe { cpl_opposite_sign_probability(0.5, &mut p) },
        CplStatus::Ok
    );
    assert!((p - 1.0 / 3.0).abs() < 1e-12, "{p}");

    assert_eq!(
        unsafe { cpl_opposite_sign_probability(1.5, &mut p) },
        CplStatus::InvalidArgument
    );
    assert!(last_error().contains("1.5"), "{}", last_error());
    assert_eq!(
        unsafe { cpl_pref_prob(0.0, 0.0, ptr::null_mut()) },
        CplStatus::NullPointer
    );
}

#[test]
fn fit_alpha_recovers_the_generating_weight() {
    let model = cpl_core::gaussian::DeltaModel::new(0.3, 0.25).unwrap();
    let (deltas, labels) = cpl_core::gaussian::labelled_deltas(&model, 20_000, 5).unwrap();
    let flat: Vec<f64> = deltas.iter().flatten().copied().collect();
    let mut alpha = f64::NAN;
    let s = unsafe { cpl_fit_alpha(flat.as_ptr(), labels.as_ptr(), labels.len(), &mut alpha) };
    assert_eq!(s, CplStatus::Ok);
    let direct = cpl_core::gaussian::fit_alpha(&deltas, &labels).unwrap();
    assert_eq!(alpha, direct);
    assert!((alpha - 0.25).abs() < 0.03, "{alpha}");
}

#[test]
fn dataset_and_model_handles_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let (mut train, mut val) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            cpl_dataset_generate(CplWorld::Confounded, 0.8, 0.0, 300, 1, 0, &mut train),
            CplStatus::Ok
        );
        assert_eq!(
            cpl_dataset_generate(CplWorld::Confounded, 0.8, 0.0, 120, 2, 0, &mut val),
            CplStatus::Ok
        );
        let (mut len, mut dim) = (0, 0);
        assert_eq!(cpl_dataset_len(train, &mut len), CplStatus::Ok);
        assert_eq!(cpl_dataset_dim(train, &mut dim), CplStatus::Ok);
        assert_eq!((len, dim), (300, 64));

        let path = CString::new(dir.path().join("val.jsonl").to_str().unwrap()).unwrap();
        assert_eq!(cpl_dataset_save(val, path.as_ptr()), CplStatus::Ok);
        let mut reloaded = ptr::null_mut();
        assert_eq!(
            cpl_dataset_load(path.as_ptr(), &mut reloaded),
            CplStatus::Ok
        );
        assert_eq!(cpl_dataset_len(reloaded, &mut len), CplStatus::Ok);
        assert_eq!(len, 120);

        let opts = CplTrainOptions {
            variant: CplVariant::Multihead,
            lambda: 0.0,
            epochs: 2,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 3,
        };
        let mut model = ptr::null_mut();
        assert_eq!(
            cpl_model_train(train, val, &opts, &mut model),
            CplStatus::Ok,
            "{}",
            last_error()
        );
        let mut acc = CplAccuracy::default();
        assert_eq!(
            cpl_model_accuracy(model, reloaded, CplSliceKind::All, 0, &mut acc),
            CplStatus::Ok
        );
        assert_eq!(acc.n, 120);
        assert!((0.0..=1.0).contains(&acc.mean));

        let ckpt = CString::new(dir.path().join("m.cplw").to_str().unwrap()).unwrap();
        assert_eq!(cpl_model_save(model, ckpt.as_ptr()), CplStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(cpl_model_load(ckpt.as_ptr(), &mut loaded), CplStatus::Ok);
        let e = vec![0.1; 64];
        let (mut r1, mut r2) = (0.0, 1.0);
        assert_eq!(
            cpl_model_reward(model, e.as_ptr(), 64, 1, &mut r1),
            CplStatus::Ok
        );
        assert_eq!(
            cpl_model_reward(loaded, e.as_ptr(), 64, 1, &mut r2),
            CplStatus::Ok
        );
        assert_eq!(r1, r2);
        assert_eq!(
            cpl_model_reward(loaded, e.as_ptr(), 63, 1, &mut r2),
            CplStatus::ShapeMismatch
        );

        let mut fresh = ptr::null_mut();
        assert_eq!(
            cpl_model_new(CplVariant::Base, 64, 0.0, 9, &mut fresh),
            CplStatus::Ok
        );
        let fresh_path = CString::new(dir.path().join("fresh.cplw").to_str().unwrap()).unwrap();
        assert_eq!(cpl_model_save(fresh, fresh_path.as_ptr()), CplStatus::Ok);
        let trained = cpl_core::models::TrainedModel::load(dir.path().join("fresh.cplw")).unwrap();
        assert_eq!(trained.seed, 9);

        for h in [train, val, reloaded] {
            cpl_dataset_free(h);
        }
        for m in [model, loaded, fresh] {
            cpl_model_free(m);
        }
        cpl_dataset_free(ptr::null_mut());
        cpl_model_free(ptr::null_mut());
    }
}

#[test]
fn missing_files_and_bad_configs_report_status() {
    unsafe {
        let mut d = ptr::null_mut();
        let p = CString::new("/nonexistent/x.jsonl").unwrap();
        assert_eq!(cpl_dataset_load(p.as_ptr(), &mut d), CplStatus::Io);
        assert!(d.is_null());
        assert!(last_error().contains("/nonexistent/x.jsonl"));

        let bad =
            CString::new("preset = \"confounded-desk\"\n[world]\ngrid = [0.5, 1.2]\n").unwrap();
        let mut report = ptr::null_mut();
        assert_eq!(
            cpl_config_validate(bad.as_ptr(), &mut report),
            CplStatus::Config
        );
        let text = CStr::from_ptr(report).to_string_lossy().into_owned();
        cpl_string_free(report);
        assert!(text.contains("world.grid[1]"), "{text}");
        assert!(last_error().contains("world.grid[1]"));

        let good = CString::new("preset = \"gaussian\"\n").unwrap();
        assert_eq!(
            cpl_config_validate(good.as_ptr(), ptr::null_mut()),
            CplStatus::Ok
        );
    }
}

#[test]
fn config_run_writes_outputs_and_returns_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new("preset = \"amce\"\nroot_seed = 4\n").unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut manifest = ptr::null_mut();
    let s = unsafe { cpl_config_run(cfg.as_ptr(), out.as_ptr(), 1, &mut manifest) };
    assert_eq!(s, CplStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(manifest) }
        .to_string_lossy()
        .into_owned();
    unsafe { cpl_string_free(manifest) };
    let m = cpl_core::runner::Manifest::from_json(&json).unwrap();
    assert_eq!(m.root_seed, 4);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("manifest.json"))
            .unwrap()
            .trim(),
        json.trim()
    );
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(cpl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
