//! C ABI for tabfuzz.
//!
//! Every fallible function returns a [`TfStatus`]. On failure a message is
//! stored per thread and can be read with [`tf_last_error`]. Strings handed
//! out by the library must be released with [`tf_string_free`]; spec handles
//! with [`tf_spec_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tabfuzz::cli::{self, Failure};
use tabfuzz::evaluation::wasserstein_1d;
use tabfuzz::grammar::{parse_spec, Spec};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Grammar or constraint text failed to parse.
    Parse = 3,
    /// Invalid configuration, overrides or input schema.
    Config = 4,
    /// The operation ran and failed.
    Runtime = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// A parsed grammar with its constraints.
pub struct TfSpec {
    spec: Spec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: TfStatus, message: impl AsRef<str>) -> TfStatus {
    set_error(message.as_ref());
    status
}

fn from_failure(f: Failure) -> TfStatus {
    let status = if f.code == cli::EXIT_USAGE { TfStatus::Config } else { TfStatus::Runtime };
    fail(status, f.message)
}

/// Runs `body`, converting panics into [`TfStatus::Panic`] and clearing the
/// stored error on success.
fn guard(body: impl FnOnce() -> TfStatus) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => {
            if status == TfStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(TfStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `p` must be null or point to a nul-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, TfStatus> {
    if p.is_null() {
        return Err(fail(TfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(TfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn hand_out(text: String, out: *mut *mut c_char) -> TfStatus {
    match CString::new(text) {
        Ok(c) => {
            // SAFETY: callers check `out` for null before producing output.
            unsafe { *out = c.into_raw() };
            TfStatus::Ok
        }
        Err(_) => fail(TfStatus::Runtime, "output contains a nul byte"),
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses grammar and constraint text into a new handle.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_spec_parse(text: *const c_char, out: *mut *mut TfSpec) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return fail(TfStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_spec(text) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(TfSpec { spec }));
                TfStatus::Ok
            }
            Err(e) => fail(TfStatus::Parse, e.to_string()),
        }
    })
}

/// Releases a spec handle. Null is ignored.
///
/// # Safety
/// `spec` must be null or a handle from [`tf_spec_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_spec_free(spec: *mut TfSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Generates `count` rows satisfying the static constraints as CSV text
/// with a header. Free the result with [`tf_string_free`].
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_spec_fuzz_csv(spec: *const TfSpec, count: usize, seed: u64, out: *mut *mut c_char) -> TfStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            return fail(TfStatus::NullPointer, "spec or out is null");
        }
        *out = ptr::null_mut();
        match cli::fuzz_csv(&(*spec).spec, count, seed) {
            Ok(csv) => hand_out(csv, out),
            Err(f) => from_failure(f),
        }
    })
}

/// Number of column symbols in the grammar's row layout, or 0 when the grammar
/// has no row layout.
///
/// # Safety
/// `spec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tf_spec_column_count(spec: *const TfSpec) -> usize {
    if spec.is_null() {
        return 0;
    }
    tabfuzz::grammar::RowLayout::from_grammar(&(*spec).spec.grammar).map_or(0, |l| l.len())
}

/// First-order Wasserstein distance between two samples.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tf_wasserstein_1d(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut f64) -> TfStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(TfStatus::NullPointer, "a, b or out is null");
        }
        let a = std::slice::from_raw_parts(a, na);
        let b = std::slice::from_raw_parts(b, nb);
        match wasserstein_1d(a, b) {
            Ok(d) => {
                *out = d;
                TfStatus::Ok
            }
            Err(e) => fail(TfStatus::Runtime, e.to_string()),
        }
    })
}

/// Runs the full pipeline for a config file. `overrides` holds
/// `n_overrides` strings of the form `key=value`; it may be null when
/// `n_overrides` is 0.
///
/// # Safety
/// All pointers must be valid nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn tf_synth_run(config_path: *const c_char, overrides: *const *const c_char, n_overrides: usize) -> TfStatus {
    guard(|| {
        let config = match str_arg(config_path, "config_path") {
            Ok(c) => c,
            Err(s) => return s,
        };
        if overrides.is_null() && n_overrides > 0 {
            return fail(TfStatus::NullPointer, "overrides is null");
        }
        let mut sets = Vec::with_capacity(n_overrides);
        for i in 0..n_overrides {
            match str_arg(*overrides.add(i), "override") {
                Ok(s) => sets.push(s.to_string()),
                Err(s) => return s,
            }
        }
        match cli::synth_run(Path::new(config), &sets) {
            Ok(_) => TfStatus::Ok,
            Err(f) => from_failure(f),
        }
    })
}

/// Evaluates a synthetic CSV against an original CSV, writes the report
/// files to the config's output directory and returns the text report.
///
/// # Safety
/// Path arguments must be nul-terminated strings and `report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_evaluate(
    original: *const c_char,
    synthetic: *const c_char,
    config_path: *const c_char,
    report: *mut *mut c_char,
) -> TfStatus {
    guard(|| {
        if report.is_null() {
            return fail(TfStatus::NullPointer, "report is null");
        }
        *report = ptr::null_mut();
        let args = str_arg(original, "original").and_then(|o| {
            Ok((o, str_arg(synthetic, "synthetic")?, str_arg(config_path, "config_path")?))
        });
        let (o, s, c) = match args {
            Ok(a) => a,
            Err(status) => return status,
        };
        match cli::evaluate_files(Path::new(o), Path::new(s), Path::new(c)) {
            Ok(text) => hand_out(text, report),
            Err(f) => from_failure(f),
        }
    })
}
