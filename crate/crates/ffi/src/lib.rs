//! C ABI for the genret engine.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`GenretStatus`];
//! on failure a human-readable message is available from
//! [`genret_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary: they are reported as
//! `GENRET_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use genret::decoder::{DecoderSettings, Strategy, TemperatureSchedule};
use genret::pipeline::{build_index, Index, PipelineConfig};
use genret::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenretStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Integrity = 5,
    Contract = 6,
    Degenerate = 7,
    Conflict = 8,
    Config = 9,
    OutOfRange = 10,
    Panic = 99,
}

impl From<ErrorKind> for GenretStatus {
    fn from(kind: ErrorKind) -> Self {
        match kind {
            ErrorKind::Io => GenretStatus::Io,
            ErrorKind::Parse => GenretStatus::Parse,
            ErrorKind::Integrity => GenretStatus::Integrity,
            ErrorKind::Contract => GenretStatus::Contract,
            ErrorKind::Degenerate => GenretStatus::Degenerate,
            ErrorKind::Conflict => GenretStatus::Conflict,
            ErrorKind::Config => GenretStatus::Config,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenretStrategy {
    ReverseAnnealing = 0,
    Greedy = 1,
    Nucleus = 2,
    Beam = 3,
}

impl From<GenretStrategy> for Strategy {
    fn from(s: GenretStrategy) -> Self {
        match s {
            GenretStrategy::ReverseAnnealing => Strategy::ReverseAnnealing,
            GenretStrategy::Greedy => Strategy::Greedy,
            GenretStrategy::Nucleus => Strategy::Nucleus,
            GenretStrategy::Beam => Strategy::Beam,
        }
    }
}

impl From<Strategy> for GenretStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::ReverseAnnealing => GenretStrategy::ReverseAnnealing,
            Strategy::Greedy => GenretStrategy::Greedy,
            Strategy::Nucleus => GenretStrategy::Nucleus,
            Strategy::Beam => GenretStrategy::Beam,
        }
    }
}

/// Decoder choice and parameters; obtain defaults from
/// [`genret_decoder_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenretDecoderConfig {
    pub strategy: GenretStrategy,
    pub k: usize,
    pub slope: f64,
    pub midpoint: f64,
    pub t_max: f64,
    pub top_p: f64,
    pub width: usize,
}

impl From<&GenretDecoderConfig> for DecoderSettings {
    fn from(c: &GenretDecoderConfig) -> Self {
        DecoderSettings {
            strategy: c.strategy.into(),
            k: c.k,
            slope: c.slope,
            midpoint: c.midpoint,
            t_max: c.t_max,
            top_p: c.top_p,
            width: c.width,
        }
    }
}

/// A loaded index. Opaque to C.
pub struct GenretIndex {
    inner: Index,
}

/// A ranked list of documents for one query. Opaque to C.
pub struct GenretResults {
    doc_ids: Vec<CString>,
    logprobs: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(GenretStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.kind().into(), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus a thread-local
/// message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GenretStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GenretStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            GenretStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(GenretStatus::NullPointer, format!("{what} is NULL"))
}

/// # Safety
/// `p` must be NULL or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GenretStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message for the most recent failing call on this thread, or NULL. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn genret_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn genret_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn genret_decoder_config_default() -> GenretDecoderConfig {
    let d = DecoderSettings::default();
    GenretDecoderConfig {
        strategy: d.strategy.into(),
        k: d.k,
        slope: d.slope,
        midpoint: d.midpoint,
        t_max: d.t_max,
        top_p: d.top_p,
        width: d.width,
    }
}

/// Temperature at emission `i` of a `total`-step reverse-annealing schedule.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn genret_temperature(
    total: usize,
    slope: f64,
    midpoint: f64,
    t_max: f64,
    i: usize,
    out: *mut f64,
) -> GenretStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if i > total {
            return Err(Failure(GenretStatus::OutOfRange, format!("step {i} exceeds schedule length {total}")));
        }
        let schedule = TemperatureSchedule::new(total, slope, midpoint, t_max)?;
        *out = schedule.temperature(i);
        Ok(())
    })
}

/// Builds an index from a TOML config file and writes it to `out_dir`.
///
/// # Safety
/// Both arguments must be NULL or valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn genret_index_build(config_path: *const c_char, out_dir: *const c_char) -> GenretStatus {
    guard(|| {
        let config_path = read_str(config_path, "config_path")?;
        let out_dir = read_str(out_dir, "out_dir")?;
        let cfg = PipelineConfig::load(Path::new(config_path))?;
        build_index(&cfg)?.index.save(Path::new(out_dir))?;
        Ok(())
    })
}

/// Loads an index directory. On success `*out` receives a handle to be
/// released with [`genret_index_free`].
///
/// # Safety
/// `dir` must be NULL or a valid NUL-terminated string; `out` must be NULL or
/// point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn genret_index_open(dir: *const c_char, out: *mut *mut GenretIndex) -> GenretStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dir = read_str(dir, "dir")?;
        let inner = Index::load(Path::new(dir))?;
        *out = Box::into_raw(Box::new(GenretIndex { inner }));
        Ok(())
    })
}

/// Releases an index handle. NULL is ignored.
///
/// # Safety
/// `index` must be NULL or a handle from [`genret_index_open`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn genret_index_free(index: *mut GenretIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of documents in the index.
///
/// # Safety
/// `index` must be NULL or a live handle; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn genret_index_doc_count(index: *const GenretIndex, out: *mut usize) -> GenretStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = index.inner.assignment.len();
        Ok(())
    })
}

/// Decodes a ranked list for one query. `instruction` may be NULL to use the
/// index's own instruction; `config` may be NULL for the defaults. On success
/// `*out` receives a handle to be released with [`genret_results_free`].
///
/// # Safety
/// Pointers must be NULL or valid: strings NUL-terminated, `config` pointing
/// to an initialized struct, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genret_retrieve(
    index: *const GenretIndex,
    query_id: *const c_char,
    text: *const c_char,
    instruction: *const c_char,
    config: *const GenretDecoderConfig,
    seed: u64,
    out: *mut *mut GenretResults,
) -> GenretStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        let query_id = read_str(query_id, "query_id")?;
        let text = read_str(text, "text")?;
        let instruction = if instruction.is_null() {
            None
        } else {
            Some(read_str(instruction, "instruction")?)
        };
        let settings = match config.as_ref() {
            Some(c) => DecoderSettings::from(c),
            None => DecoderSettings::default(),
        };
        let ctx = index.inner.query_context(query_id, text, instruction);
        let retrieval = index.inner.retrieve(&ctx, &settings, seed)?;
        let mut doc_ids = Vec::with_capacity(retrieval.hits.len());
        let mut logprobs = Vec::with_capacity(retrieval.hits.len());
        for h in retrieval.hits {
            doc_ids.push(
                CString::new(h.doc_id)
                    .map_err(|_| Failure(GenretStatus::Integrity, "doc_id contains a NUL byte".into()))?,
            );
            logprobs.push(h.logprob);
        }
        *out = Box::into_raw(Box::new(GenretResults { doc_ids, logprobs }));
        Ok(())
    })
}

/// Number of ranked documents; 0 for NULL.
///
/// # Safety
/// `results` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn genret_results_len(results: *const GenretResults) -> usize {
    results.as_ref().map_or(0, |r| r.doc_ids.len())
}

/// Document id at rank `i` (0-based), or NULL when out of range. The string
/// is owned by `results`.
///
/// # Safety
/// `results` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn genret_results_doc_id(results: *const GenretResults, i: usize) -> *const c_char {
    results
        .as_ref()
        .and_then(|r| r.doc_ids.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Model log-probability of the docid at rank `i`.
///
/// # Safety
/// `results` must be NULL or a live handle; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn genret_results_logprob(results: *const GenretResults, i: usize, out: *mut f64) -> GenretStatus {
    guard(|| {
        let r = results.as_ref().ok_or_else(|| null("results"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = *r
            .logprobs
            .get(i)
            .ok_or_else(|| Failure(GenretStatus::OutOfRange, format!("rank {i} out of range ({})", r.logprobs.len())))?;
        Ok(())
    })
}

/// Releases a results handle. NULL is ignored.
///
/// # Safety
/// `results` must be NULL or a handle from [`genret_retrieve`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn genret_results_free(results: *mut GenretResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}
