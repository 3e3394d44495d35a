//! C ABI over the stackmix classifiers.
//!
//! All functions follow the same conventions:
//! - status codes from [`StackmixStatus`]; anything but `Ok` leaves a
//!   human-readable message retrievable with `stackmix_last_error`
//! - handles are opaque and must be released with `stackmix_free`
//! - handles are not thread-safe; guard shared use with a mutex
//!
//! Text fed to `stackmix_predict` runs through the same default
//! normalization pipeline the CLI uses before encoding.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use stackmix::dataio::encode;
use stackmix::ensemble::{is_ensemble_file, StackingEnsemble};
use stackmix::models::{argmax, Model};
use stackmix::textprep::{run_pipeline, PipelineConfig};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StackmixStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    LoadFailed = 3,
    PredictFailed = 4,
    BufferTooSmall = 5,
    IndexOutOfBounds = 6,
}

enum Loaded {
    Single(Model),
    Ensemble(StackingEnsemble),
}

/// Opaque handle to a loaded model or ensemble.
pub struct StackmixHandle {
    loaded: Loaded,
    pipeline: PipelineConfig,
}

impl StackmixHandle {
    fn labels(&self) -> &[String] {
        match &self.loaded {
            Loaded::Single(m) => &m.labels,
            Loaded::Ensemble(e) => e.labels(),
        }
    }

    fn reference_model(&self) -> &Model {
        match &self.loaded {
            Loaded::Single(m) => m,
            Loaded::Ensemble(e) => &e.base[0],
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: StackmixStatus, msg: impl Into<String>) -> StackmixStatus {
    set_error(msg);
    status
}

fn copy_to_buffer(s: &str, buf: *mut c_char, buf_len: usize) -> StackmixStatus {
    let bytes = s.as_bytes();
    if buf_len <= bytes.len() {
        return fail(
            StackmixStatus::BufferTooSmall,
            format!("need {} bytes, got {buf_len}", bytes.len() + 1),
        );
    }
    unsafe {
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    StackmixStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stackmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the most recent error message on this thread into `buf`
/// (NUL-terminated, truncation reported as `BufferTooSmall`).
#[no_mangle]
pub extern "C" fn stackmix_last_error(buf: *mut c_char, buf_len: usize) -> StackmixStatus {
    if buf.is_null() {
        return StackmixStatus::NullArgument;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let s = msg.to_str().unwrap_or("");
        let bytes = s.as_bytes();
        if buf_len <= bytes.len() {
            return StackmixStatus::BufferTooSmall;
        }
        unsafe {
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
            *buf.add(bytes.len()) = 0;
        }
        StackmixStatus::Ok
    })
}

/// Load a saved model or ensemble file; the format is detected from the
/// file's magic bytes. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stackmix_load(
    path: *const c_char,
    out: *mut *mut StackmixHandle,
) -> StackmixStatus {
    if path.is_null() || out.is_null() {
        return fail(StackmixStatus::NullArgument, "path and out must be non-null");
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => Path::new(s),
        Err(_) => return fail(StackmixStatus::InvalidUtf8, "path is not valid UTF-8"),
    };
    let pipeline = match PipelineConfig::default_pipeline() {
        Ok(p) => p,
        Err(e) => return fail(StackmixStatus::LoadFailed, e.to_string()),
    };
    let loaded = match is_ensemble_file(path) {
        Ok(true) => StackingEnsemble::load(path).map(Loaded::Ensemble),
        Ok(false) => Model::load(path).map(Loaded::Single),
        Err(e) => Err(e),
    };
    match loaded {
        Ok(loaded) => {
            let handle = Box::new(StackmixHandle { loaded, pipeline });
            *out = Box::into_raw(handle);
            StackmixStatus::Ok
        }
        Err(e) => fail(StackmixStatus::LoadFailed, e.to_string()),
    }
}

/// Release a handle returned by `stackmix_load`. A null handle is a no-op.
///
/// # Safety
/// `handle` must be null or a pointer from `stackmix_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stackmix_free(handle: *mut StackmixHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of output classes, or 0 if `handle` is null.
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stackmix_num_classes(handle: *const StackmixHandle) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).labels().len()
}

/// Copy the name of class `index` into `buf` as a NUL-terminated string.
///
/// # Safety
/// `handle` must be a live handle and `buf` writable for `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn stackmix_label_name(
    handle: *const StackmixHandle,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
) -> StackmixStatus {
    if handle.is_null() || buf.is_null() {
        return fail(StackmixStatus::NullArgument, "handle and buf must be non-null");
    }
    let labels = (*handle).labels();
    match labels.get(index) {
        Some(name) => copy_to_buffer(name, buf, buf_len),
        None => fail(
            StackmixStatus::IndexOutOfBounds,
            format!("class index {index} out of range ({} classes)", labels.len()),
        ),
    }
}

/// Classify one text. Writes the full probability row into `probs`
/// (`probs_len` must equal `stackmix_num_classes`) and the winning class
/// index into `label_index`.
///
/// # Safety
/// `handle` must be a live handle, `text` a valid NUL-terminated string,
/// `probs` writable for `probs_len` doubles, `label_index` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stackmix_predict(
    handle: *const StackmixHandle,
    text: *const c_char,
    probs: *mut f64,
    probs_len: usize,
    label_index: *mut usize,
) -> StackmixStatus {
    if handle.is_null() || text.is_null() || probs.is_null() || label_index.is_null() {
        return fail(StackmixStatus::NullArgument, "all arguments must be non-null");
    }
    let handle = &*handle;
    let num_classes = handle.labels().len();
    if probs_len != num_classes {
        return fail(
            StackmixStatus::BufferTooSmall,
            format!("probs_len {probs_len} != {num_classes} classes"),
        );
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(s) => s,
        Err(_) => return fail(StackmixStatus::InvalidUtf8, "text is not valid UTF-8"),
    };
    let result = (|| {
        let tokens = run_pipeline(text, &handle.pipeline)?;
        let reference = handle.reference_model();
        let encoded = vec![encode(&tokens, &reference.vocab, reference.config.max_len)?];
        let row = match &handle.loaded {
            Loaded::Single(m) => m.predict_proba(&encoded)?.remove(0),
            Loaded::Ensemble(e) => e.predict(&encoded)?.1.remove(0),
        };
        Ok::<Vec<f64>, stackmix::Error>(row)
    })();
    match result {
        Ok(row) => {
            std::ptr::copy_nonoverlapping(row.as_ptr(), probs, num_classes);
            *label_index = argmax(&row);
            StackmixStatus::Ok
        }
        Err(e) => fail(StackmixStatus::PredictFailed, e.to_string()),
    }
}
