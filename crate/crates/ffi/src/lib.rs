//! C ABI over the jingfang engine and its metric helpers.
//!
//! Every fallible function returns a [`JfStatus`]. On failure a message is
//! kept per thread and can be fetched with [`jf_last_error`]. Strings handed
//! out by the library are owned by the caller and must be released with
//! [`jf_string_free`]; handles are released with their own `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use jingfang::domain::MedicalRecord;
use jingfang::dsrs::rrf_fuse;
use jingfang::engine::{Engine, EngineError};
use jingfang::eval::bleu1;
use jingfang::syndrome::weighted_metrics;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Backend = 5,
    Failed = 6,
    Panic = 7,
}

/// Loaded engine: configuration, backends, prescription database.
pub struct JfEngine {
    inner: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(JfStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::Config(_) | EngineError::Domain(_) | EngineError::Io(_) => JfStatus::Config,
            EngineError::Gateway(_) => JfStatus::Backend,
            _ => JfStatus::Failed,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure(JfStatus::InvalidArgument, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> JfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside jingfang");
            JfStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(JfStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(JfStatus::InvalidUtf8, e.to_string()))
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(JfStatus::NullPointer, "null output pointer".into()));
    }
    let c = CString::new(s).map_err(invalid)?;
    *out = c.into_raw();
    Ok(())
}

fn parse_list(json: &str) -> Result<Vec<String>, Failure> {
    serde_json::from_str(json).map_err(|e| invalid(format!("expected a JSON array of strings: {e}")))
}

/// Library version, a static string; do not free.
#[no_mangle]
pub extern "C" fn jf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The caller
/// owns the copy and frees it with [`jf_string_free`].
#[no_mangle]
pub extern "C" fn jf_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed only once.
#[no_mangle]
pub unsafe extern "C" fn jf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an engine from a JSON configuration file.
///
/// # Safety
/// `config_path` must be a valid C string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn jf_engine_open(config_path: *const c_char, out: *mut *mut JfEngine) -> JfStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(JfStatus::NullPointer, "null output pointer".into()));
        }
        let path = read_str(config_path)?;
        let inner = Engine::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(JfEngine { inner }));
        Ok(())
    })
}

/// # Safety
/// `engine` must be null or a handle from [`jf_engine_open`], freed only once.
#[no_mangle]
pub unsafe extern "C" fn jf_engine_free(engine: *mut JfEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Number of prescriptions in the engine's database, or 0 for null.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jf_engine_prescription_count(engine: *const JfEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.inner.retriever.db().len())
}

/// Syndrome differentiation plus prescription retrieval for a medical
/// record given as JSON. Writes the diagnosis as JSON to `out_json`.
///
/// # Safety
/// `engine` must be a live handle, `record_json` a valid C string and
/// `out_json` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn jf_engine_diagnose(
    engine: *const JfEngine,
    record_json: *const c_char,
    out_json: *mut *mut c_char,
) -> JfStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| Failure(JfStatus::NullPointer, "null engine".into()))?;
        let record: MedicalRecord = serde_json::from_str(read_str(record_json)?).map_err(invalid)?;
        let diagnosis = engine.inner.diagnose(&record.finalize())?;
        write_string(out_json, serde_json::to_string(&diagnosis).map_err(invalid)?)
    })
}

/// Unigram BLEU with brevity penalty.
///
/// # Safety
/// Both strings must be valid C strings and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn jf_bleu1(candidate: *const c_char, reference: *const c_char, out: *mut f64) -> JfStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(JfStatus::NullPointer, "null output pointer".into()));
        }
        *out = bleu1(read_str(candidate)?, read_str(reference)?).map_err(invalid)?;
        Ok(())
    })
}

/// Reciprocal rank fusion of two ranked id lists (JSON arrays of strings).
/// Writes the fused hits as a JSON array.
///
/// # Safety
/// Inputs must be valid C strings and `out_json` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn jf_rrf_fuse(
    sparse_json: *const c_char,
    dense_json: *const c_char,
    k: f64,
    out_json: *mut *mut c_char,
) -> JfStatus {
    guard(|| {
        let sparse = parse_list(read_str(sparse_json)?)?;
        let dense = parse_list(read_str(dense_json)?)?;
        let fused = rrf_fuse(&sparse, &dense, k).map_err(invalid)?;
        write_string(out_json, serde_json::to_string(&fused).map_err(invalid)?)
    })
}

/// Support-weighted precision, recall and F1 over parallel label lists
/// (JSON arrays of strings). Writes the metrics as JSON.
///
/// # Safety
/// Inputs must be valid C strings and `out_json` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn jf_weighted_metrics(
    predictions_json: *const c_char,
    gold_json: *const c_char,
    out_json: *mut *mut c_char,
) -> JfStatus {
    guard(|| {
        let predictions = parse_list(read_str(predictions_json)?)?;
        let gold = parse_list(read_str(gold_json)?)?;
        let metrics = weighted_metrics(&predictions, &gold).map_err(invalid)?;
        write_string(out_json, serde_json::to_string(&metrics).map_err(invalid)?)
    })
}
