//! C ABI for the drivecap pipeline.
//!
//! Conventions:
//! - Every fallible call returns a [`DcStatus`]; `DC_STATUS_OK` is 0.
//! - On failure a thread-local message is retrievable with
//!   [`dc_last_error_message`].
//! - Datasets travel behind the opaque [`DcDataset`] handle; free with
//!   [`dc_dataset_free`]. No other ownership crosses the boundary —
//!   strings in are NUL-terminated UTF-8 owned by the caller, text out is
//!   copied into caller buffers.
//! - Sentence arguments are space-separated token strings; caption
//!   arguments use the full `<START> ... <sep> ... <END>` syntax.
//!
//! The generated header lives at `include/drivecap.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use drivecap::error::Error;
use drivecap::harness::{self, TrainConfig};
use drivecap::metrics;
use drivecap::numerics::load_checkpoint;
use drivecap::synth::{self, DatasetSplits, SynthConfig};

/// Result codes. 0 is success; anything else is an error and
/// [`dc_last_error_message`] holds the detail.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    RuntimeError = 4,
}

/// The four corpus-level scores, as percentages.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DcScores {
    pub description_meteor: f64,
    pub explanation_meteor: f64,
    pub description_bleu: f64,
    pub explanation_bleu: f64,
}

/// Opaque dataset handle: the clips of every split plus the manifest.
pub struct DcDataset {
    splits: DatasetSplits,
    manifest: SynthConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let cstring = CString::new(message)
        .unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_for(error: &Error) -> DcStatus {
    match error {
        Error::Io { .. } | Error::Json { .. } => DcStatus::IoError,
        Error::Config { .. }
        | Error::BadRatios(_)
        | Error::EmptyDataset
        | Error::EmptyCorpus
        | Error::UnknownToken(_)
        | Error::CaptionTooLong { .. }
        | Error::BadCaption(_)
        | Error::DimMismatch(_)
        | Error::VocabMismatch { .. } => DcStatus::InvalidArgument,
        _ => DcStatus::RuntimeError,
    }
}

fn fail(error: Error) -> DcStatus {
    let status = status_for(&error);
    set_last_error(error.to_string());
    status
}

/// Runs a fallible body, translating panics and errors into status codes.
fn guarded(body: impl FnOnce() -> Result<DcStatus, Error>) -> DcStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(error)) => fail(error),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in drivecap".to_string());
            set_last_error(message);
            DcStatus::RuntimeError
        }
    }
}

fn null_arg(name: &str) -> DcStatus {
    set_last_error(format!("`{name}` must not be NULL"));
    DcStatus::NullPointer
}

/// # Safety
/// `ptr` must be a NUL-terminated UTF-8 string or NULL.
unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Error> {
    if ptr.is_null() {
        return Err(Error::config(name, "must not be NULL"));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Error::config(name, "must be valid UTF-8"))
}

fn tokens_of(sentence: &str) -> Vec<String> {
    drivecap::corpus::tokenize(sentence)
}

/// # Safety
/// Both arrays must hold `len` valid NUL-terminated UTF-8 strings.
unsafe fn sentence_corpus(
    items: *const *const c_char,
    len: usize,
    name: &str,
) -> Result<Vec<Vec<String>>, Error> {
    if items.is_null() {
        return Err(Error::config(name, "must not be NULL"));
    }
    let mut corpus = Vec::with_capacity(len);
    for i in 0..len {
        let ptr = unsafe { *items.add(i) };
        let text = unsafe { cstr_arg(ptr, name)? };
        corpus.push(tokens_of(text));
    }
    Ok(corpus)
}

/// Copies `text` into `buf` (capacity `cap`, NUL included) and stores the
/// required byte count (excluding NUL) in `out_len`.
unsafe fn copy_out(text: &str, buf: *mut c_char, cap: usize, out_len: *mut usize) -> DcStatus {
    if !out_len.is_null() {
        unsafe { *out_len = text.len() };
    }
    if buf.is_null() || cap < text.len() + 1 {
        set_last_error(format!("buffer of {cap} bytes cannot hold {} + NUL", text.len()));
        return DcStatus::InvalidArgument;
    }
    unsafe {
        std::ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        *buf.add(text.len()) = 0;
    }
    DcStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf`; returns the
/// message length in bytes (excluding NUL), or 0 when there is none.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be NULL to query length).
#[no_mangle]
pub unsafe extern "C" fn dc_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(message) = slot.as_ref() else {
            return 0;
        };
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Generates a synthetic dataset in memory.
///
/// # Safety
/// `out` must be a valid pointer to a `*mut DcDataset` slot.
#[no_mangle]
pub unsafe extern "C" fn dc_dataset_generate(
    n: usize,
    frames: usize,
    grid: usize,
    feat_dim: usize,
    max_len: usize,
    seed: u64,
    train_ratio: f64,
    validation_ratio: f64,
    test_ratio: f64,
    noise: f64,
    out: *mut *mut DcDataset,
) -> DcStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let manifest = SynthConfig {
            n,
            frames,
            grid,
            feat_dim,
            max_len,
            seed,
            ratios: [train_ratio, validation_ratio, test_ratio],
            noise,
        };
        let splits = synth::build_dataset(&manifest)?;
        let handle = Box::new(DcDataset { splits, manifest });
        unsafe { *out = Box::into_raw(handle) };
        Ok(DcStatus::Ok)
    })
}

/// Loads a dataset directory written by `dc_dataset_save` (or the CLI).
///
/// # Safety
/// `dir` must be a NUL-terminated UTF-8 path; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn dc_dataset_load(dir: *const c_char, out: *mut *mut DcDataset) -> DcStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let dir = unsafe { cstr_arg(dir, "dir")? };
        let (splits, manifest) = synth::load_dataset(Path::new(dir))?;
        let handle = Box::new(DcDataset { splits, manifest });
        unsafe { *out = Box::into_raw(handle) };
        Ok(DcStatus::Ok)
    })
}

/// Writes `dataset.jsonl` plus `manifest.json` into `dir`.
///
/// # Safety
/// `dataset` must come from this library; `dir` as in `dc_dataset_load`.
#[no_mangle]
pub unsafe extern "C" fn dc_dataset_save(dataset: *const DcDataset, dir: *const c_char) -> DcStatus {
    if dataset.is_null() {
        return null_arg("dataset");
    }
    guarded(|| {
        let dataset = unsafe { &*dataset };
        let dir = unsafe { cstr_arg(dir, "dir")? };
        synth::write_dataset(&dataset.splits, &dataset.manifest, Path::new(dir))?;
        Ok(DcStatus::Ok)
    })
}

/// Split sizes of a dataset handle.
///
/// # Safety
/// Pointers must be valid or NULL (NULL outputs are skipped).
#[no_mangle]
pub unsafe extern "C" fn dc_dataset_counts(
    dataset: *const DcDataset,
    out_train: *mut usize,
    out_validation: *mut usize,
    out_test: *mut usize,
) -> DcStatus {
    if dataset.is_null() {
        return null_arg("dataset");
    }
    let dataset = unsafe { &*dataset };
    unsafe {
        if !out_train.is_null() {
            *out_train = dataset.splits.train.len();
        }
        if !out_validation.is_null() {
            *out_validation = dataset.splits.validation.len();
        }
        if !out_test.is_null() {
            *out_test = dataset.splits.test.len();
        }
    }
    DcStatus::Ok
}

/// Copies the caption of clip `index` (storage order: train, validation,
/// test) into `buf`; `out_len` receives the byte length excluding NUL.
///
/// # Safety
/// `dataset` from this library; `buf`/`out_len` valid or NULL as above.
#[no_mangle]
pub unsafe extern "C" fn dc_dataset_caption(
    dataset: *const DcDataset,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    out_len: *mut usize,
) -> DcStatus {
    if dataset.is_null() {
        return null_arg("dataset");
    }
    let dataset = unsafe { &*dataset };
    let Some(clip) = dataset.splits.all().nth(index) else {
        set_last_error(format!(
            "clip index {index} out of range ({} clips)",
            dataset.splits.total()
        ));
        return DcStatus::InvalidArgument;
    };
    let caption = clip.caption.caption.to_string();
    unsafe { copy_out(&caption, buf, cap, out_len) }
}

/// Releases a dataset handle. NULL is a no-op.
///
/// # Safety
/// `dataset` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dc_dataset_free(dataset: *mut DcDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

/// Corpus-level BLEU over aligned single-reference corpora of
/// space-separated sentences, as a percentage.
///
/// # Safety
/// Arrays per [`sentence_corpus`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dc_corpus_bleu(
    candidates: *const *const c_char,
    references: *const *const c_char,
    len: usize,
    out: *mut f64,
) -> DcStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        if len == 0 {
            return Err(Error::config("len", "corpus must not be empty"));
        }
        let cands = unsafe { sentence_corpus(candidates, len, "candidates")? };
        let refs = unsafe { sentence_corpus(references, len, "references")? };
        unsafe { *out = metrics::corpus_bleu(&cands, &refs).score };
        Ok(DcStatus::Ok)
    })
}

/// Corpus-level METEOR (macro-average of sentence scores), percentage.
///
/// # Safety
/// As for [`dc_corpus_bleu`].
#[no_mangle]
pub unsafe extern "C" fn dc_corpus_meteor(
    candidates: *const *const c_char,
    references: *const *const c_char,
    len: usize,
    out: *mut f64,
) -> DcStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        if len == 0 {
            return Err(Error::config("len", "corpus must not be empty"));
        }
        let cands = unsafe { sentence_corpus(candidates, len, "candidates")? };
        let refs = unsafe { sentence_corpus(references, len, "references")? };
        unsafe { *out = metrics::corpus_meteor(&cands, &refs) };
        Ok(DcStatus::Ok)
    })
}

/// Sentence METEOR in [0, 1] for two space-separated sentences.
///
/// # Safety
/// Strings NUL-terminated UTF-8; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_meteor_sentence(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut f64,
) -> DcStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let cand = tokens_of(unsafe { cstr_arg(candidate, "candidate")? });
        let reference = tokens_of(unsafe { cstr_arg(reference, "reference")? });
        unsafe { *out = metrics::meteor_sentence(&cand, &reference).score };
        Ok(DcStatus::Ok)
    })
}

/// Splits full captions at `<sep>`/`<END>` and scores description and
/// explanation parts with both metrics.
///
/// # Safety
/// As for [`dc_corpus_bleu`]; `out` must point to a DcScores.
#[no_mangle]
pub unsafe extern "C" fn dc_score_parts(
    candidates: *const *const c_char,
    references: *const *const c_char,
    len: usize,
    out: *mut DcScores,
) -> DcStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        if len == 0 {
            return Err(Error::config("len", "corpus must not be empty"));
        }
        let cands = unsafe { sentence_corpus(candidates, len, "candidates")? };
        let refs = unsafe { sentence_corpus(references, len, "references")? };
        let scores = metrics::score_parts(&cands, &refs);
        unsafe {
            *out = DcScores {
                description_meteor: scores.description_meteor,
                explanation_meteor: scores.explanation_meteor,
                description_bleu: scores.description_bleu,
                explanation_bleu: scores.explanation_bleu,
            };
        }
        Ok(DcStatus::Ok)
    })
}

fn resolved_config(manifest: &SynthConfig, config_lines: Option<&str>) -> Result<TrainConfig, Error> {
    let mut cfg = TrainConfig::default();
    cfg.adopt_manifest(manifest);
    if let Some(lines) = config_lines {
        cfg.apply_lines(lines)?;
    }
    Ok(cfg)
}

/// Trains on a dataset directory and writes `model.cexp` plus
/// `loss_log.csv` into `out_dir`. `config_lines` may be NULL or hold
/// newline-separated `key = value` overrides (same keys as the CLI config
/// file).
///
/// # Safety
/// Paths NUL-terminated UTF-8; `config_lines` NULL or likewise.
#[no_mangle]
pub unsafe extern "C" fn dc_train(
    dataset_dir: *const c_char,
    out_dir: *const c_char,
    config_lines: *const c_char,
) -> DcStatus {
    guarded(|| {
        let dataset_dir = unsafe { cstr_arg(dataset_dir, "dataset_dir")? };
        let out_dir = Path::new(unsafe { cstr_arg(out_dir, "out_dir")? });
        let lines = if config_lines.is_null() {
            None
        } else {
            Some(unsafe { cstr_arg(config_lines, "config_lines")? })
        };
        let (splits, manifest) = synth::load_dataset(Path::new(dataset_dir))?;
        let cfg = resolved_config(&manifest, lines)?;
        let vocab = harness::build_vocab_for(&splits)?;
        let outcome = harness::train(&cfg, &splits, &vocab)?;
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        drivecap::numerics::save_checkpoint(&outcome.store, &outcome.adam, &out_dir.join("model.cexp"))?;
        harness::train::write_loss_log(&outcome.log, &out_dir.join("loss_log.csv"))?;
        Ok(DcStatus::Ok)
    })
}

/// Evaluates a checkpoint on one split ("train", "validation" or "test").
/// `out_dir` may be NULL (no files written); `out_scores` may be NULL.
///
/// # Safety
/// Pointer arguments as for [`dc_train`]; `out_scores` valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn dc_evaluate(
    checkpoint: *const c_char,
    dataset_dir: *const c_char,
    split: *const c_char,
    out_dir: *const c_char,
    config_lines: *const c_char,
    out_scores: *mut DcScores,
) -> DcStatus {
    guarded(|| {
        let checkpoint = unsafe { cstr_arg(checkpoint, "checkpoint")? };
        let dataset_dir = unsafe { cstr_arg(dataset_dir, "dataset_dir")? };
        let split = unsafe { cstr_arg(split, "split")? };
        let lines = if config_lines.is_null() {
            None
        } else {
            Some(unsafe { cstr_arg(config_lines, "config_lines")? })
        };
        let (splits, manifest) = synth::load_dataset(Path::new(dataset_dir))?;
        let mut cfg = resolved_config(&manifest, lines)?;
        let (store, _adam) = load_checkpoint(Path::new(checkpoint))?;
        // Model dims follow the checkpoint tensor shapes.
        cfg.d_h = store.get(drivecap::controller::names::LSTM_WH).shape()[0];
        cfg.d_p = store.get(drivecap::generator::names::POS_WH).shape()[1];
        cfg.d_e = store.get(drivecap::generator::names::EMBED).shape()[1];
        let clips = match split {
            "train" => &splits.train,
            "validation" | "val" => &splits.validation,
            "test" => &splits.test,
            other => return Err(Error::config("split", format!("unknown split `{other}`"))),
        };
        let vocab = harness::build_vocab_for(&splits)?;
        let report = harness::evaluate(&store, &cfg, clips, &vocab)?;
        if let Some(out_dir) = (!out_dir.is_null()).then(|| unsafe { cstr_arg(out_dir, "out_dir") }) {
            harness::eval::write_eval_outputs(&report, Path::new(out_dir?))?;
        }
        if !out_scores.is_null() {
            unsafe {
                *out_scores = DcScores {
                    description_meteor: report.scores.description_meteor,
                    explanation_meteor: report.scores.explanation_meteor,
                    description_bleu: report.scores.description_bleu,
                    explanation_bleu: report.scores.explanation_bleu,
                };
            }
        }
        Ok(DcStatus::Ok)
    })
}

/// Checks every loss component's gradients against central differences on
/// a small synthetic clip; writes the worst relative error to `out`.
///
/// # Safety
/// `config_lines` NULL or NUL-terminated UTF-8; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_gradcheck(config_lines: *const c_char, out: *mut f64) -> DcStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let mut cfg = TrainConfig::default();
        if !config_lines.is_null() {
            cfg.apply_lines(unsafe { cstr_arg(config_lines, "config_lines")? })?;
        }
        let report = harness::verify_gradients(&cfg)?;
        unsafe { *out = report.max_rel_err };
        Ok(DcStatus::Ok)
    })
}
