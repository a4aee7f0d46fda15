//! C ABI over the medsft statistics and corpus loaders.
//!
//! Every function returns a [`MedsftStatus`]. On failure the thread's last
//! error message is set and can be read with [`medsft_last_error`]. Strings
//! handed out by this library must be released with [`medsft_string_free`];
//! corpus handles with [`medsft_corpus_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use medsft::curation::{select_mask, Combine, SelectionPolicy};
use medsft::eval::{gap_percent, win_rate, MatchedPair, Metric, ScoredPair};
use medsft::ingest::{load_records, ParseMode};
use medsft::model::LengthBand;
use medsft::style::{extract_features, paired_ttest, NgramMode};
use medsft::{ConsultationRecord, Department, EvalScores, SoftSkillScores};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedsftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MedsftTTest {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedsftCombine {
    AllDims = 0,
    MeanDim = 1,
}

/// Records loaded from a corpus file.
pub struct MedsftCorpus {
    records: Vec<ConsultationRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Fallible = Result<(), (MedsftStatus, String)>;

fn guard(f: impl FnOnce() -> Fallible) -> MedsftStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MedsftStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MedsftStatus::Panic
        }
    }
}

fn null(name: &str) -> (MedsftStatus, String) {
    (MedsftStatus::NullPointer, format!("{name} is null"))
}

unsafe fn floats<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], (MedsftStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, (MedsftStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (MedsftStatus::InvalidUtf8, format!("{name}: {e}")))
}

fn out_string(s: String, out: *mut *mut c_char) -> Fallible {
    let c = CString::new(s).map_err(|e| (MedsftStatus::InvalidArgument, e.to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn medsft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Last error message on this thread, or NULL. Valid until the next call
/// into this library from the same thread.
#[no_mangle]
pub extern "C" fn medsft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn medsft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Paired t-test of `a` against `b` (differences `a - b`), two-sided.
///
/// # Safety
/// `a` and `b` must point to `n` doubles each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medsft_paired_ttest(a: *const f64, b: *const f64, n: usize, out: *mut MedsftTTest) -> MedsftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (a, b) = (floats(a, n, "a")?, floats(b, n, "b")?);
        let t = paired_ttest(a, b).map_err(|e| (MedsftStatus::InvalidArgument, e.to_string()))?;
        *out = MedsftTTest { mean_diff: t.mean_diff, sd_diff: t.sd_diff, t: t.t, p: t.p, n: t.n };
        Ok(())
    })
}

/// Relative gap `(model - human) / human` in percent, from one-decimal means.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medsft_gap_percent(model: f64, human: f64, out: *mut f64) -> MedsftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !model.is_finite() || !human.is_finite() {
            return Err((MedsftStatus::InvalidArgument, "scores must be finite".into()));
        }
        let g = gap_percent(model, human);
        if !g.is_finite() {
            return Err((MedsftStatus::OutOfRange, "human score rounds to zero".into()));
        }
        *out = g;
        Ok(())
    })
}

/// Percentage of pairs with `model[i] >= human[i]`.
///
/// # Safety
/// `model` and `human` must point to `n` doubles each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medsft_win_rate(model: *const f64, human: *const f64, n: usize, out: *mut f64) -> MedsftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (m, h) = (floats(model, n, "model")?, floats(human, n, "human")?);
        let pair = MatchedPair {
            model_record_id: String::new(),
            human_record_id: String::new(),
            department: Department::Others,
            length_band: LengthBand::Short,
        };
        let pairs: Vec<ScoredPair> = m
            .iter()
            .zip(h)
            .map(|(&a, &b)| ScoredPair {
                pair: pair.clone(),
                model: EvalScores::new(a, a, a, a),
                human: EvalScores::new(b, b, b, b),
                human_meta: None,
            })
            .collect();
        let w = win_rate(&pairs, Metric::Overall).map_err(|e| (MedsftStatus::InvalidArgument, e.to_string()))?;
        *out = w.percent();
        Ok(())
    })
}

/// Style features of one consultation record given as JSON. Writes a JSON
/// object to `*out`, to be released with [`medsft_string_free`].
///
/// # Safety
/// `record_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medsft_style_features_json(
    record_json: *const c_char,
    per_thousand_tokens: bool,
    out: *mut *mut c_char,
) -> MedsftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let src = text(record_json, "record_json")?;
        let loaded = medsft::ingest::parse_records(src.as_bytes(), ParseMode::Strict)
            .map_err(|e| (MedsftStatus::Parse, e.to_string()))?;
        let [record] = loaded.items.as_slice() else {
            return Err((MedsftStatus::InvalidArgument, format!("expected one record, got {}", loaded.items.len())));
        };
        let mode = if per_thousand_tokens { NgramMode::PerThousandTokens } else { NgramMode::Count };
        let json = serde_json::to_string(&extract_features(record, mode)).expect("features serialize");
        out_string(json, out)
    })
}

/// Keep mask for `n` score triples laid out row-major in `scores`
/// (professionalism, explainability, emotional support). `mask` receives
/// `n` bytes of 0/1; `thresholds`, if not NULL, receives 3 doubles.
///
/// # Safety
/// `scores` must hold `3 * n` doubles, `mask` room for `n` bytes and
/// `thresholds` (when given) room for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn medsft_select_mask(
    scores: *const f64,
    n: usize,
    quantile: f64,
    combine: MedsftCombine,
    mask: *mut u8,
    thresholds: *mut f64,
) -> MedsftStatus {
    guard(|| {
        if mask.is_null() && n > 0 {
            return Err(null("mask"));
        }
        let len = n.checked_mul(3).ok_or((MedsftStatus::OutOfRange, "n too large".to_string()))?;
        let flat = floats(scores, len, "scores")?;
        let rows: Vec<SoftSkillScores> = flat.chunks_exact(3).map(|c| SoftSkillScores::new(c[0], c[1], c[2])).collect();
        let combine = match combine {
            MedsftCombine::AllDims => Combine::AllDims,
            MedsftCombine::MeanDim => Combine::MeanDim,
        };
        let (keep, t) = select_mask(&rows, &SelectionPolicy { quantile, combine })
            .map_err(|e| (MedsftStatus::InvalidArgument, e.to_string()))?;
        let m = slice::from_raw_parts_mut(mask, n);
        for (dst, k) in m.iter_mut().zip(keep) {
            *dst = k as u8;
        }
        if !thresholds.is_null() {
            slice::from_raw_parts_mut(thresholds, 3).copy_from_slice(&t);
        }
        Ok(())
    })
}

/// Load a JSONL corpus of consultation records. In lenient mode malformed
/// lines are skipped.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medsft_corpus_open(path: *const c_char, lenient: bool, out: *mut *mut MedsftCorpus) -> MedsftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = text(path, "path")?;
        let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
        let loaded = load_records(Path::new(p), mode).map_err(|e| {
            let status = match e {
                medsft::ingest::IngestError::Io { .. } => MedsftStatus::Io,
                _ => MedsftStatus::Parse,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(MedsftCorpus { records: loaded.items }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medsft_corpus_len(corpus: *const MedsftCorpus, out: *mut usize) -> MedsftStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = c.records.len();
        Ok(())
    })
}

/// Record `index` as JSON, released with [`medsft_string_free`].
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medsft_corpus_record_json(
    corpus: *const MedsftCorpus,
    index: usize,
    out: *mut *mut c_char,
) -> MedsftStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = c
            .records
            .get(index)
            .ok_or_else(|| (MedsftStatus::OutOfRange, format!("index {index} >= {}", c.records.len())))?;
        out_string(serde_json::to_string(r).expect("record serializes"), out)
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from [`medsft_corpus_open`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn medsft_corpus_free(corpus: *mut MedsftCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}
