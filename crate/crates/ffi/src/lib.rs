//! C ABI over `hierex`: load a checkpoint, extract from text or tokens, run
//! the gradient check.
//!
//! Every function returns an [`HxStatus`]. On failure a message is kept per
//! thread and can be read with [`hx_last_error`]. Strings handed out by the
//! library must be released with [`hx_string_free`]; models with
//! [`hx_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hierex::extract::{extract_line, extract_text};
use hierex::model::{toy_gradcheck, TaggerMode};
use hierex::train::{Checkpoint, CheckpointError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HxStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    BadCheckpoint = 4,
    BadInput = 5,
    Numeric = 6,
    Panic = 7,
}

/// Opaque loaded checkpoint.
pub struct HxModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: HxStatus, msg: impl Into<String>) -> HxStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> HxStatus) -> HxStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(HxStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, HxStatus> {
    if p.is_null() {
        return Err(fail(HxStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HxStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn hand_out(s: String, out: *mut *mut c_char) -> HxStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: callers check `out` for null before reaching here.
            unsafe { *out = c.into_raw() };
            HxStatus::Ok
        }
        Err(_) => fail(HxStatus::BadInput, "output contains a NUL byte"),
    }
}

/// Loads a checkpoint file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hx_model_load(path: *const c_char, out: *mut *mut HxModel) -> HxStatus {
    guard(|| {
        if out.is_null() {
            return fail(HxStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match read_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Checkpoint::load(Path::new(path)) {
            Ok(ck) => {
                *out = Box::into_raw(Box::new(HxModel { inner: ck }));
                HxStatus::Ok
            }
            Err(e @ CheckpointError::Io { .. }) => fail(HxStatus::Io, e.to_string()),
            Err(e) => fail(HxStatus::BadCheckpoint, e.to_string()),
        }
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` is null or came from [`hx_model_load`] and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn hx_model_free(model: *mut HxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Splits `text` into sentences, tokenizes, and writes the extraction record
/// as JSON to `*out_json`.
///
/// # Safety
/// `model` must be a live handle; `id` and `text` NUL-terminated strings;
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn hx_model_extract_text(
    model: *const HxModel,
    id: *const c_char,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> HxStatus {
    guard(|| {
        if model.is_null() || out_json.is_null() {
            return fail(HxStatus::NullArgument, "model or out_json is null");
        }
        *out_json = ptr::null_mut();
        let (id, text) = match (read_str(id, "id"), read_str(text, "text")) {
            (Ok(i), Ok(t)) => (i, t),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match extract_text(&(*model).inner, id, text) {
            Ok(rec) => hand_out(
                serde_json::to_string(&rec).expect("record serializes"),
                out_json,
            ),
            Err(e) => fail(HxStatus::BadInput, e.to_string()),
        }
    })
}

/// Extracts from a pre-tokenized JSON record
/// `{"id": ..., "sentences": [{"tokens": [...]}, ...]}`.
///
/// # Safety
/// As for [`hx_model_extract_text`].
#[no_mangle]
pub unsafe extern "C" fn hx_model_extract_tokens(
    model: *const HxModel,
    record_json: *const c_char,
    out_json: *mut *mut c_char,
) -> HxStatus {
    guard(|| {
        if model.is_null() || out_json.is_null() {
            return fail(HxStatus::NullArgument, "model or out_json is null");
        }
        *out_json = ptr::null_mut();
        let record = match read_str(record_json, "record_json") {
            Ok(r) => r,
            Err(s) => return s,
        };
        match extract_line(&(*model).inner, record, true) {
            Ok(rec) => hand_out(
                serde_json::to_string(&rec).expect("record serializes"),
                out_json,
            ),
            Err(e) => fail(HxStatus::BadInput, e.to_string()),
        }
    })
}

/// Number of trainable scalars in the model, or 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hx_model_param_count(model: *const HxModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.model.config.param_count()
}

/// Runs the toy gradient check in both tagger modes and writes the largest
/// relative error to `*out_max_rel`.
///
/// # Safety
/// `out_max_rel` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hx_gradcheck(
    seed: u64,
    eps: f64,
    sample: usize,
    out_max_rel: *mut f64,
) -> HxStatus {
    guard(|| {
        if out_max_rel.is_null() {
            return fail(HxStatus::NullArgument, "out_max_rel is null");
        }
        if !(eps.is_finite() && eps > 0.0) || sample == 0 {
            return fail(
                HxStatus::BadInput,
                "eps must be positive and sample at least 1",
            );
        }
        let mut worst = 0.0f64;
        for mode in [TaggerMode::Softmax, TaggerMode::Crf] {
            match toy_gradcheck(mode, seed, eps, sample) {
                Ok(r) => worst = worst.max(r.max_rel),
                Err(e) => return fail(HxStatus::Numeric, format!("{mode}: {e}")),
            }
        }
        *out_max_rel = worst;
        HxStatus::Ok
    })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn hx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn hx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
