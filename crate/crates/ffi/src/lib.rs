//! C ABI for the training laboratory: opaque handles for corpora and
//! trainers, integer status codes, and a thread-local last-error message.
//!
//! Every function returns `TW_OK` (0) on success. On failure it returns a
//! negative code and stores a message retrievable via `twgrpo_last_error`.
//! Out-parameters are only written on success. All handles must be released
//! with their matching `_free` function; strings returned through out
//! parameters must be released with `twgrpo_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use twgrpo::qai::{self, QARecord};
use twgrpo::env::{generate_corpus, TaskSpec};
use twgrpo::trainer::{TrainConfig, Trainer};
use twgrpo::vocab::Vocab;

pub const TW_OK: i32 = 0;
pub const TW_ERR: i32 = -1;
pub const TW_NULL_ARG: i32 = -2;
pub const TW_BAD_UTF8: i32 = -3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(err: impl std::fmt::Display) -> i32 {
    set_error(&err.to_string());
    TW_ERR
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn twgrpo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a pointer previously returned through an out
/// parameter of this library.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(TW_NULL_ARG);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        TW_BAD_UTF8
    })
}

fn string_out(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .unwrap_or_default()
        .into_raw()
}

pub struct TwCorpus {
    records: Vec<QARecord>,
}

pub struct TwTrainer {
    inner: Trainer,
}

/// Generate a synthetic corpus. `single_choice` forces one correct option
/// per record.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_corpus_generate(
    train: usize,
    eval: usize,
    n_options: usize,
    seed: u64,
    single_choice: bool,
    out: *mut *mut TwCorpus,
) -> i32 {
    if out.is_null() {
        set_error("null out pointer");
        return TW_NULL_ARG;
    }
    let spec = TaskSpec {
        n_options,
        train,
        eval,
        single_choice,
        ..TaskSpec::default()
    };
    match generate_corpus(&spec, seed) {
        Ok(records) => {
            *out = Box::into_raw(Box::new(TwCorpus { records }));
            TW_OK
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `path` must be a valid C string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_corpus_load(path: *const c_char, out: *mut *mut TwCorpus) -> i32 {
    if out.is_null() {
        set_error("null out pointer");
        return TW_NULL_ARG;
    }
    let path = match str_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match qai::load_corpus(Path::new(path)) {
        Ok(records) => {
            *out = Box::into_raw(Box::new(TwCorpus { records }));
            TW_OK
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `corpus` must be a live corpus handle; `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_corpus_save(corpus: *const TwCorpus, path: *const c_char) -> i32 {
    let Some(corpus) = corpus.as_ref() else {
        set_error("null corpus handle");
        return TW_NULL_ARG;
    };
    let path = match str_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match qai::save_corpus(Path::new(path), &corpus.records) {
        Ok(()) => TW_OK,
        Err(e) => fail(e),
    }
}

/// Invert a fraction of the records into multi-answer form, producing a
/// new corpus handle.
///
/// # Safety
/// `corpus` must be a live corpus handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_corpus_augment(
    corpus: *const TwCorpus,
    invert_prob: f64,
    drop_prob: f64,
    seed: u64,
    out: *mut *mut TwCorpus,
) -> i32 {
    let Some(corpus) = corpus.as_ref() else {
        set_error("null corpus handle");
        return TW_NULL_ARG;
    };
    if out.is_null() {
        set_error("null out pointer");
        return TW_NULL_ARG;
    }
    match qai::augment_dataset(&corpus.records, invert_prob, drop_prob, seed) {
        Ok(records) => {
            *out = Box::into_raw(Box::new(TwCorpus { records }));
            TW_OK
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `corpus` must be null or a live corpus handle.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_corpus_len(corpus: *const TwCorpus) -> usize {
    corpus.as_ref().map(|c| c.records.len()).unwrap_or(0)
}

/// # Safety
/// `corpus` must be null or a live handle; the handle is invalid after.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_corpus_free(corpus: *mut TwCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Build a trainer from a corpus and a TOML configuration string; pass an
/// empty string for defaults. Missing TOML fields take their defaults.
///
/// # Safety
/// `corpus` must be a live corpus handle; `config_toml` a valid C string;
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_new(
    corpus: *const TwCorpus,
    config_toml: *const c_char,
    out: *mut *mut TwTrainer,
) -> i32 {
    let Some(corpus) = corpus.as_ref() else {
        set_error("null corpus handle");
        return TW_NULL_ARG;
    };
    if out.is_null() {
        set_error("null out pointer");
        return TW_NULL_ARG;
    }
    let text = match str_arg(config_toml) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let config: TrainConfig = match toml::from_str(text) {
        Ok(c) => c,
        Err(e) => return fail(format!("malformed config: {e}")),
    };
    match Trainer::new(config, &corpus.records, Vocab::standard()) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TwTrainer { inner }));
            TW_OK
        }
        Err(e) => fail(e),
    }
}

/// Run the full configured number of steps, recording metrics rows.
///
/// # Safety
/// `trainer` must be a live trainer handle.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_run(trainer: *mut TwTrainer) -> i32 {
    let Some(trainer) = trainer.as_mut() else {
        set_error("null trainer handle");
        return TW_NULL_ARG;
    };
    match trainer.inner.train() {
        Ok(()) => TW_OK,
        Err(e) => fail(e),
    }
}

/// Take a single optimization step without touching the metrics table.
///
/// # Safety
/// `trainer` must be a live trainer handle.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_step(trainer: *mut TwTrainer) -> i32 {
    let Some(trainer) = trainer.as_mut() else {
        set_error("null trainer handle");
        return TW_NULL_ARG;
    };
    match trainer.inner.step_once() {
        Ok(_) => TW_OK,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `trainer` must be null or a live trainer handle.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_steps_taken(trainer: *const TwTrainer) -> u64 {
    trainer.as_ref().map(|t| t.inner.step).unwrap_or(0)
}

/// Greedy-decode accuracy and soft accuracy (percent) over the training
/// prompts.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_eval(
    trainer: *const TwTrainer,
    accuracy: *mut f64,
    soft_accuracy: *mut f64,
) -> i32 {
    let Some(trainer) = trainer.as_ref() else {
        set_error("null trainer handle");
        return TW_NULL_ARG;
    };
    if accuracy.is_null() || soft_accuracy.is_null() {
        set_error("null out pointer");
        return TW_NULL_ARG;
    }
    match trainer.inner.evaluate_train() {
        Ok((acc, soft)) => {
            *accuracy = acc;
            *soft_accuracy = soft;
            TW_OK
        }
        Err(e) => fail(e),
    }
}

/// Recorded metrics as a CSV string; release with `twgrpo_string_free`.
///
/// # Safety
/// `trainer` must be a live trainer handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_metrics_csv(
    trainer: *const TwTrainer,
    out: *mut *mut c_char,
) -> i32 {
    let Some(trainer) = trainer.as_ref() else {
        set_error("null trainer handle");
        return TW_NULL_ARG;
    };
    if out.is_null() {
        set_error("null out pointer");
        return TW_NULL_ARG;
    }
    match twgrpo::metrics::render_metrics(&trainer.inner.metrics) {
        Ok(text) => {
            *out = string_out(text);
            TW_OK
        }
        Err(e) => fail(e),
    }
}

/// Write parameter and optimizer state into `dir`.
///
/// # Safety
/// `trainer` must be a live trainer handle; `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_save_checkpoint(
    trainer: *const TwTrainer,
    dir: *const c_char,
) -> i32 {
    let Some(trainer) = trainer.as_ref() else {
        set_error("null trainer handle");
        return TW_NULL_ARG;
    };
    let dir = match str_arg(dir) {
        Ok(d) => d,
        Err(code) => return code,
    };
    match trainer.inner.save_checkpoint(Path::new(dir)) {
        Ok(()) => TW_OK,
        Err(e) => fail(e),
    }
}

/// Restore parameter and optimizer state from `dir`.
///
/// # Safety
/// `trainer` must be a live trainer handle; `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_load_checkpoint(
    trainer: *mut TwTrainer,
    dir: *const c_char,
) -> i32 {
    let Some(trainer) = trainer.as_mut() else {
        set_error("null trainer handle");
        return TW_NULL_ARG;
    };
    let dir = match str_arg(dir) {
        Ok(d) => d,
        Err(code) => return code,
    };
    match trainer.inner.load_checkpoint(Path::new(dir)) {
        Ok(()) => TW_OK,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `trainer` must be null or a live handle; the handle is invalid after.
#[no_mangle]
pub unsafe extern "C" fn twgrpo_trainer_free(trainer: *mut TwTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}
