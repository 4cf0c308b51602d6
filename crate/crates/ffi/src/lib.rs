//! C ABI over `cpl-core`.
//!
//! Every function returns a [`CplStatus`]; results come back through out
//! pointers, which are only written on success. After a failure,
//! [`cpl_last_error`] describes it. Datasets and models are opaque handles
//! owned by the caller and released with their `_free` function; strings
//! returned through `char **` are released with [`cpl_string_free`].
//! Panics never cross the boundary: they are caught and reported as
//! `CPL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cpl_core::config;
use cpl_core::error::Error;
use cpl_core::eval::{accuracy, SliceSpec};
use cpl_core::models::{train_run, RewardModel, RewardModelSpec, TrainConfig, Variant, Widths};
use cpl_core::runner::{self, RunOptions};
use cpl_core::worlds::io::{read_dataset, write_dataset};
use cpl_core::worlds::{ConfoundedWorld, Dataset, UltraFeedbackWorld};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CplStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    Format = 5,
    Config = 6,
    Runtime = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CplWorld {
    UltraFeedback = 0,
    Confounded = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CplVariant {
    Base = 0,
    Multihead = 1,
    Adversarial = 2,
}

/// Evaluation slice; `value` is the objective or prompt type for the last two.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CplSliceKind {
    All = 0,
    Consistent = 1,
    Inconsistent = 2,
    Objective = 3,
    PromptType = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CplAccuracy {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CplTrainOptions {
    pub variant: CplVariant,
    /// Gradient reversal strength; used by the adversarial variant.
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// Opaque dataset handle.
pub struct CplDataset(Dataset);

/// Opaque model handle.
pub struct CplModel {
    model: RewardModel,
    meta: serde_json::Value,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "?")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(CplStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_)
            | Error::NonFinite(_)
            | Error::Empty(_)
            | Error::Unattainable(_) => CplStatus::InvalidArgument,
            Error::ShapeMismatch(_) => CplStatus::ShapeMismatch,
            Error::File { .. } | Error::Io(_) => CplStatus::Io,
            Error::Format { .. } | Error::Json(_) => CplStatus::Format,
            Error::Config(_) => CplStatus::Config,
            Error::Divergence { .. } => CplStatus::Runtime,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CplStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CplStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CplStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CplStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    Ok(PathBuf::from(str_arg(p, what)?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CplStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "?"))
        .expect("nul bytes replaced")
        .into_raw()
}

impl From<CplVariant> for Variant {
    fn from(v: CplVariant) -> Self {
        match v {
            CplVariant::Base => Variant::Base,
            CplVariant::Multihead => Variant::Multihead,
            CplVariant::Adversarial => Variant::Adversarial,
        }
    }
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next `cpl_` call on the same thread.
#[no_mangle]
pub extern "C" fn cpl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cpl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a `cpl_` function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cpl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Probability that the response with reward `r` beats the one with `r_prime`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_pref_prob(r: f64, r_prime: f64, out: *mut f64) -> CplStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        *o = cpl_core::btl::pref_prob(r, r_prime)?;
        Ok(())
    })
}

/// Probability that two standard normals with correlation `rho` differ in sign.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_opposite_sign_probability(rho: f64, out: *mut f64) -> CplStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        *o = cpl_core::gaussian::opposite_sign_probability(rho)?;
        Ok(())
    })
}

/// Maximum-likelihood objective weight from `n` reward-difference pairs
/// (`deltas` holds `2n` values, row-major) and their labels.
///
/// # Safety
/// `deltas` must hold `2n` doubles and `labels` `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn cpl_fit_alpha(
    deltas: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> CplStatus {
    guard(|| {
        if deltas.is_null() || labels.is_null() {
            return Err(null("deltas or labels"));
        }
        let o = self::out(out, "out")?;
        let flat = std::slice::from_raw_parts(deltas, 2 * n);
        let pairs: Vec<[f64; 2]> = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        *o = cpl_core::gaussian::fit_alpha(&pairs, std::slice::from_raw_parts(labels, n))?;
        Ok(())
    })
}

/// Samples `n` comparisons. `rho` is the latent correlation for the
/// ultrafeedback world and the confounding strength for the confounded one;
/// `alpha` is ignored by the latter.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_dataset_generate(
    world: CplWorld,
    rho: f64,
    alpha: f64,
    n: usize,
    seed: u64,
    map_seed: u64,
    out: *mut *mut CplDataset,
) -> CplStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let data = match world {
            CplWorld::UltraFeedback => {
                UltraFeedbackWorld::new(rho, alpha, map_seed).sample(n, seed)?
            }
            CplWorld::Confounded => ConfoundedWorld::new(rho, map_seed).sample(n, seed)?,
        };
        *o = Box::into_raw(Box::new(CplDataset(data)));
        Ok(())
    })
}

/// Reads a JSONL dataset.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_dataset_load(
    path: *const c_char,
    out: *mut *mut CplDataset,
) -> CplStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        let o = self::out(out, "out")?;
        *o = Box::into_raw(Box::new(CplDataset(read_dataset(p)?)));
        Ok(())
    })
}

/// Writes a dataset as JSONL.
///
/// # Safety
/// `dataset` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cpl_dataset_save(
    dataset: *const CplDataset,
    path: *const c_char,
) -> CplStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        write_dataset(&d.0, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_dataset_len(dataset: *const CplDataset, out: *mut usize) -> CplStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        *self::out(out, "out")? = d.0.len();
        Ok(())
    })
}

/// Embedding dimension of the responses.
///
/// # Safety
/// `dataset` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_dataset_dim(dataset: *const CplDataset, out: *mut usize) -> CplStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        *self::out(out, "out")? = d.0.embedding_dim();
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cpl_dataset_free(dataset: *mut CplDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Untrained desk-sized model with weights drawn from `seed`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_model_new(
    variant: CplVariant,
    input_dim: usize,
    lambda: f64,
    seed: u64,
    out: *mut *mut CplModel,
) -> CplStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let spec =
            RewardModelSpec::new(variant.into(), input_dim, Widths::DESK, lambda).with_seed(seed);
        let model = RewardModel::new(spec)?;
        let meta = serde_json::json!({ "seed": seed, "best_epoch": 0, "history": [] });
        *o = Box::into_raw(Box::new(CplModel { model, meta }));
        Ok(())
    })
}

/// Trains a desk-sized model and keeps the epoch with the best validation
/// accuracy.
///
/// # Safety
/// Dataset handles must be live; `options` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cpl_model_train(
    train: *const CplDataset,
    validation: *const CplDataset,
    options: *const CplTrainOptions,
    out: *mut *mut CplModel,
) -> CplStatus {
    guard(|| {
        let train = train.as_ref().ok_or_else(|| null("train"))?;
        let validation = validation.as_ref().ok_or_else(|| null("validation"))?;
        let opts = options.as_ref().ok_or_else(|| null("options"))?;
        let o = self::out(out, "out")?;
        let spec = RewardModelSpec::new(
            opts.variant.into(),
            train.0.embedding_dim(),
            Widths::DESK,
            opts.lambda,
        );
        let cfg = TrainConfig {
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            learning_rate: opts.learning_rate,
            seeds: vec![opts.seed],
        };
        let run = train_run(&spec, &train.0, &validation.0, &cfg, opts.seed)?;
        let meta = serde_json::to_value(run.meta()).map_err(Error::from)?;
        *o = Box::into_raw(Box::new(CplModel {
            model: run.model,
            meta,
        }));
        Ok(())
    })
}

/// Reads a checkpoint and its JSON sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_model_load(path: *const c_char, out: *mut *mut CplModel) -> CplStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        let o = self::out(out, "out")?;
        let (model, meta) = RewardModel::load(p)?;
        *o = Box::into_raw(Box::new(CplModel { model, meta }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cpl_model_save(model: *const CplModel, path: *const c_char) -> CplStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        m.model.save(path_arg(path, "path")?, &m.meta)?;
        Ok(())
    })
}

/// Reward of one response embedding (`dim` doubles) under objective `c`.
///
/// # Safety
/// `model` must be live, `e` must hold `dim` doubles, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_model_reward(
    model: *const CplModel,
    e: *const f64,
    dim: usize,
    c: u8,
    out: *mut f64,
) -> CplStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if e.is_null() {
            return Err(null("e"));
        }
        let o = self::out(out, "out")?;
        *o = m.model.reward(std::slice::from_raw_parts(e, dim), c)?;
        Ok(())
    })
}

/// Pairwise accuracy on one slice of `dataset`.
///
/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpl_model_accuracy(
    model: *const CplModel,
    dataset: *const CplDataset,
    slice: CplSliceKind,
    value: u8,
    out: *mut CplAccuracy,
) -> CplStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let o = self::out(out, "out")?;
        let spec = match slice {
            CplSliceKind::All => SliceSpec::All,
            CplSliceKind::Consistent => SliceSpec::Consistent,
            CplSliceKind::Inconsistent => SliceSpec::Inconsistent,
            CplSliceKind::Objective => SliceSpec::Objective(value),
            CplSliceKind::PromptType => SliceSpec::PromptType(value),
        };
        let a = accuracy(&m.model, &d.0, &spec)?;
        *o = CplAccuracy {
            mean: a.mean,
            stderr: a.stderr,
            n: a.n,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cpl_model_free(model: *mut CplModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Checks a TOML study config. `report` (optional) receives the rendered
/// findings; free it with `cpl_string_free`. Returns `CPL_STATUS_CONFIG`
/// when the config has errors.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn cpl_config_validate(
    toml: *const c_char,
    report: *mut *mut c_char,
) -> CplStatus {
    guard(|| {
        let r = config::validate_str(str_arg(toml, "toml")?);
        if let Some(slot) = report.as_mut() {
            *slot = into_c_string(r.render());
        }
        if r.is_ok() {
            Ok(())
        } else {
            let errors: Vec<String> = r.errors().map(|f| f.to_string()).collect();
            Err(Fail(CplStatus::Config, errors.join("; ")))
        }
    })
}

/// Runs a TOML study config into `out_dir` with `jobs` workers (0 = one per
/// core). `manifest` (optional) receives the manifest JSON.
///
/// # Safety
/// `toml` and `out_dir` must be NUL-terminated strings; `manifest` may be null.
#[no_mangle]
pub unsafe extern "C" fn cpl_config_run(
    toml: *const c_char,
    out_dir: *const c_char,
    jobs: usize,
    manifest: *mut *mut c_char,
) -> CplStatus {
    guard(|| {
        let r = config::validate_str(str_arg(toml, "toml")?);
        let out_dir = path_arg(out_dir, "out_dir")?;
        if !r.is_ok() {
            let errors: Vec<String> = r.errors().map(|f| f.to_string()).collect();
            return Err(Fail(CplStatus::Config, errors.join("; ")));
        }
        let cfg = r.config.expect("valid reports carry a config");
        let outcome = runner::run(&cfg, &RunOptions { out_dir, jobs }).map_err(|e| {
            let msg = e.to_string();
            match Fail::from(e.source).0 {
                CplStatus::Config => Fail(CplStatus::Config, msg),
                _ => Fail(CplStatus::Runtime, msg),
            }
        })?;
        if let Some(slot) = manifest.as_mut() {
            *slot = into_c_string(outcome.manifest.to_json()?);
        }
        Ok(())
    })
}
