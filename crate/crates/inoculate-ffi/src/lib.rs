//! C ABI over the inoculate library.
//!
//! Conventions:
//! - every fallible call returns an [`InocStatus`]; `INOC_STATUS_OK` is 0 and
//!   the other values match the CLI exit codes (2 config, 3 data, 4 runtime,
//!   1 for null/invalid arguments at the boundary);
//! - results come back through out-pointers holding opaque handles that must
//!   be released with the matching `_free` function;
//! - on failure, `inoc_last_error` returns a thread-local message valid until
//!   the next failing call on the same thread.
//!
//! All handles are plain heap allocations and are safe to move between
//! threads, but a single handle must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use inoculate::corpus::{load_jsonl, write_jsonl, DatasetSplit};
use inoculate::model::{Checkpoint, FeatureConfig};
use inoculate::perturb::{transform_split, TransformKind, Transformation};
use inoculate::synthgen::{baseline_breakdown, gen_numeric, NumericCategoryCounts};
use inoculate::trainer::{evaluate, fine_tune, train, TrainConfig};
use inoculate::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InocStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, or otherwise malformed argument.
    InvalidArgument = 1,
    Config = 2,
    Data = 3,
    Runtime = 4,
}

/// Opaque handle to a labelled dataset split.
pub struct InocSplit(DatasetSplit);

/// Opaque handle to a trained model checkpoint.
pub struct InocCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(e: &Error) -> InocStatus {
    set_error(&e.to_string());
    match e.exit_code() {
        2 => InocStatus::Config,
        3 => InocStatus::Data,
        _ => InocStatus::Runtime,
    }
}

fn invalid(msg: &str) -> InocStatus {
    set_error(msg);
    InocStatus::InvalidArgument
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string or null.
unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, InocStatus> {
    if ptr.is_null() {
        return Err(invalid("path argument is null"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(invalid("path argument is not valid UTF-8")),
    }
}

/// Message from the most recent failing call on this thread. The pointer is
/// owned by the library and valid until the next failing call on the same
/// thread; never free it.
#[no_mangle]
pub extern "C" fn inoc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string; never free it.
#[no_mangle]
pub extern "C" fn inoc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a JSON Lines split from `path` into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_split_load(
    path: *const c_char,
    out: *mut *mut InocSplit,
) -> InocStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_jsonl(&path) {
        Ok(split) => {
            *out = Box::into_raw(Box::new(InocSplit(split)));
            InocStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Writes the split to `path` as JSON Lines.
///
/// # Safety
/// `split` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn inoc_split_write(
    split: *const InocSplit,
    path: *const c_char,
) -> InocStatus {
    let Some(split) = split.as_ref() else {
        return invalid("split handle is null");
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match write_jsonl(&split.0, &path) {
        Ok(()) => InocStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Number of examples in the split; 0 for a null handle.
///
/// # Safety
/// `split` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn inoc_split_len(split: *const InocSplit) -> usize {
    split.as_ref().map_or(0, |s| s.0.len())
}

/// Releases a split handle. Null is a no-op.
///
/// # Safety
/// `split` must be a handle returned by this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn inoc_split_free(split: *mut InocSplit) {
    if !split.is_null() {
        drop(Box::from_raw(split));
    }
}

/// Generates the numerical-reasoning dataset with its default category
/// counts (7596 examples) into `*out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_gen_numeric_default(
    seed: u64,
    out: *mut *mut InocSplit,
) -> InocStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    match gen_numeric(&NumericCategoryCounts::default(), seed) {
        Ok(split) => {
            *out = Box::into_raw(Box::new(InocSplit(split)));
            InocStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Accuracy of the 3-rule quantifier baseline over the split, in [0, 1].
///
/// # Safety
/// `split` must be a live handle and `out_acc` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_baseline_accuracy(
    split: *const InocSplit,
    out_acc: *mut f64,
) -> InocStatus {
    let Some(split) = split.as_ref() else {
        return invalid("split handle is null");
    };
    if out_acc.is_null() {
        return invalid("out_acc pointer is null");
    }
    *out_acc = baseline_breakdown(&split.0).accuracy();
    InocStatus::Ok
}

/// Applies a challenge transformation to every example of the split. `kind`
/// is one of: "word_overlap", "negation", "spelling_error",
/// "length_mismatch", "distractor".
///
/// # Safety
/// `split` must be a live handle, `kind` a valid NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_transform(
    split: *const InocSplit,
    kind: *const c_char,
    seed: u64,
    out: *mut *mut InocSplit,
) -> InocStatus {
    let Some(split) = split.as_ref() else {
        return invalid("split handle is null");
    };
    if kind.is_null() || out.is_null() {
        return invalid("kind/out pointer is null");
    }
    let Ok(kind_str) = CStr::from_ptr(kind).to_str() else {
        return invalid("kind is not valid UTF-8");
    };
    let Some(parsed) = TransformKind::parse(kind_str) else {
        return invalid(&format!("unknown transformation {kind_str:?}"));
    };
    match transform_split(&split.0, &Transformation::new(parsed, seed)) {
        Ok(t) => {
            *out = Box::into_raw(Box::new(InocSplit(t)));
            InocStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Trains a classifier from scratch with default hyperparameters, stopping
/// early on `dev`, and stores the checkpoint handle in `*out`.
///
/// # Safety
/// `train_split` and `dev` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_train(
    train_split: *const InocSplit,
    dev: *const InocSplit,
    seed: u64,
    out: *mut *mut InocCheckpoint,
) -> InocStatus {
    let (Some(train_split), Some(dev)) = (train_split.as_ref(), dev.as_ref()) else {
        return invalid("split handle is null");
    };
    if out.is_null() {
        return invalid("out pointer is null");
    }
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    match train(&cfg, &FeatureConfig::default(), &train_split.0, &dev.0) {
        Ok(ckpt) => {
            *out = Box::into_raw(Box::new(InocCheckpoint(ckpt)));
            InocStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Continues training `base` on `challenge_train`, validating on `dev`, and
/// stores the new checkpoint in `*out`. `base` is left untouched.
///
/// # Safety
/// All handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_fine_tune(
    base: *const InocCheckpoint,
    challenge_train: *const InocSplit,
    dev: *const InocSplit,
    lr: f64,
    max_epochs: usize,
    seed: u64,
    out: *mut *mut InocCheckpoint,
) -> InocStatus {
    let Some(base) = base.as_ref() else {
        return invalid("checkpoint handle is null");
    };
    let (Some(challenge_train), Some(dev)) = (challenge_train.as_ref(), dev.as_ref()) else {
        return invalid("split handle is null");
    };
    if out.is_null() {
        return invalid("out pointer is null");
    }
    let cfg = TrainConfig { initial_lr: lr, max_epochs, seed, ..TrainConfig::default() };
    let model_cfg = base.0.params.feature_config.clone();
    match fine_tune(&base.0, &challenge_train.0, &dev.0, &model_cfg, &cfg) {
        Ok(ckpt) => {
            *out = Box::into_raw(Box::new(InocCheckpoint(ckpt)));
            InocStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Accuracy of the checkpoint over the split, in [0, 1].
///
/// # Safety
/// `ckpt` and `split` must be live handles and `out_acc` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_evaluate(
    ckpt: *const InocCheckpoint,
    split: *const InocSplit,
    out_acc: *mut f64,
) -> InocStatus {
    let (Some(ckpt), Some(split)) = (ckpt.as_ref(), split.as_ref()) else {
        return invalid("handle is null");
    };
    if out_acc.is_null() {
        return invalid("out_acc pointer is null");
    }
    match evaluate(&ckpt.0, &split.0) {
        Ok(acc) => {
            *out_acc = acc;
            InocStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Writes the checkpoint to `path` in the library's binary format.
///
/// # Safety
/// `ckpt` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn inoc_checkpoint_save(
    ckpt: *const InocCheckpoint,
    path: *const c_char,
) -> InocStatus {
    let Some(ckpt) = ckpt.as_ref() else {
        return invalid("checkpoint handle is null");
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match ckpt.0.save(&path) {
        Ok(()) => InocStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Loads a checkpoint written by `inoc_checkpoint_save` into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn inoc_checkpoint_load(
    path: *const c_char,
    out: *mut *mut InocCheckpoint,
) -> InocStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match Checkpoint::load(&path) {
        Ok(ckpt) => {
            *out = Box::into_raw(Box::new(InocCheckpoint(ckpt)));
            InocStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a checkpoint handle. Null is a no-op.
///
/// # Safety
/// `ckpt` must be a handle returned by this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn inoc_checkpoint_free(ckpt: *mut InocCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

// Silence an unused warning: ptr is used by tests and keeps the import list
// honest when tests are disabled.
const _: *const u8 = ptr::null();
