//! C ABI over `capt-bench`.
//!
//! Every fallible function returns a [`CaptStatus`]; on failure the message
//! is available from [`capt_last_error`] on the same thread. Strings handed
//! out by this library must be released with [`capt_string_free`], and
//! handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::Path;
use std::ptr;

use capt_bench::align::{align, EditCounts};
use capt_bench::corpus::Corpus;
use capt_bench::inference::load_raw;
use capt_bench::mdd_metrics::{flag_detected, mdd_counts, mdd_scores, MddCounts};
use capt_bench::parsing::{parse_apa, parse_mdd};
use capt_bench::phoneset::{PhoneInventory, PhoneSequence, TokenizeMode};
use capt_bench::prompts::{build_prompt, Task};
use capt_bench::report::{score, ScoreConfig};
use capt_bench::stats::{pcc, student_t_two_sided, StatsError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    UnknownPhone = 4,
    ParseFailure = 5,
    Io = 6,
    LengthMismatch = 7,
    TooFewSamples = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A phone inventory.
pub struct CaptInventory {
    inner: PhoneInventory,
}

/// A loaded `capt-corpus/1` file.
pub struct CaptCorpus {
    inner: Corpus,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptEditCounts {
    pub insertions: u64,
    pub deletions: u64,
    pub substitutions: u64,
    pub matches: u64,
    pub reference_len: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptMddCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaptMddScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: CaptMddCounts,
    pub degenerate: bool,
}

/// `r` is meaningful only when `has_r`, `p_value` only when `has_p`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaptCorrelation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub has_r: bool,
    pub has_p: bool,
    pub degenerate: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptApaScores {
    pub accuracy: u8,
    pub fluency: u8,
    pub prosodic: u8,
    pub total: u8,
}

impl From<EditCounts> for CaptEditCounts {
    fn from(c: EditCounts) -> Self {
        CaptEditCounts {
            insertions: c.insertions,
            deletions: c.deletions,
            substitutions: c.substitutions,
            matches: c.matches,
            reference_len: c.reference_len,
        }
    }
}

impl From<MddCounts> for CaptMddCounts {
    fn from(c: MddCounts) -> Self {
        CaptMddCounts {
            true_pos: c.tp,
            false_pos: c.fp,
            false_neg: c.fn_,
            true_neg: c.tn,
        }
    }
}

impl From<CaptMddCounts> for MddCounts {
    fn from(c: CaptMddCounts) -> Self {
        MddCounts {
            tp: c.true_pos,
            fp: c.false_pos,
            fn_: c.false_neg,
            tn: c.true_neg,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type FfiResult<T> = Result<T, (CaptStatus, String)>;

fn fail<T>(status: CaptStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err((status, msg.into()))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard<F: FnOnce() -> FfiResult<()> + UnwindSafe>(f: F) -> CaptStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(f) {
        Ok(Ok(())) => CaptStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside capt-bench");
            CaptStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(CaptStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(CaptStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(CaptStatus::NullPointer, format!("{name} is null")), Ok)
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .map_or_else(|| fail(CaptStatus::NullPointer, format!("{name} is null")), Ok)
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, name: &str) -> FfiResult<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(CaptStatus::NullPointer, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .or_else(|_| fail(CaptStatus::InvalidArgument, "string contains NUL"))
}

fn tokenize_strict(inv: &PhoneInventory, text: &str) -> FfiResult<PhoneSequence> {
    inv.tokenize_strict(text)
        .or_else(|e| fail(CaptStatus::UnknownPhone, e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn capt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn capt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn capt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in 46-phone inventory. Never null.
#[no_mangle]
pub extern "C" fn capt_inventory_default() -> *mut CaptInventory {
    Box::into_raw(Box::new(CaptInventory {
        inner: PhoneInventory::default_inventory(),
    }))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capt_inventory_load(path: *const c_char, out: *mut *mut CaptInventory) -> CaptStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = PhoneInventory::load(Path::new(path)).or_else(|e| fail(CaptStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(CaptInventory { inner }));
        Ok(())
    })
}

/// # Safety
/// `inv` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn capt_inventory_free(inv: *mut CaptInventory) {
    if !inv.is_null() {
        drop(Box::from_raw(inv));
    }
}

/// Number of phones including `<unk>`, or 0 for a null handle.
///
/// # Safety
/// `inv` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn capt_inventory_len(inv: *const CaptInventory) -> usize {
    inv.as_ref().map_or(0, |i| i.inner.len())
}

/// Normalizes `text` to space-separated inventory symbols. In lenient mode
/// unknown symbols become `<unk>` instead of failing.
///
/// # Safety
/// Pointers must be valid; `out_normalized` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn capt_tokenize(
    inv: *const CaptInventory,
    text: *const c_char,
    lenient: bool,
    out_normalized: *mut *mut c_char,
    out_len: *mut usize,
) -> CaptStatus {
    guard(|| {
        let inv = &ref_arg(inv, "inv")?.inner;
        let text = str_arg(text, "text")?;
        let out_normalized = out_arg(out_normalized, "out_normalized")?;
        let out_len = out_arg(out_len, "out_len")?;
        let mode = if lenient { TokenizeMode::Lenient } else { TokenizeMode::Strict };
        let seq = inv
            .tokenize(text, mode)
            .or_else(|e| fail(CaptStatus::UnknownPhone, e.to_string()))?
            .sequence;
        *out_len = seq.len();
        *out_normalized = to_c_string(seq.render())?;
        Ok(())
    })
}

/// Aligns two phone strings and reports the edit counts.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capt_align_phones(
    inv: *const CaptInventory,
    reference: *const c_char,
    hypothesis: *const c_char,
    out: *mut CaptEditCounts,
) -> CaptStatus {
    guard(|| {
        let inv = &ref_arg(inv, "inv")?.inner;
        let r = tokenize_strict(inv, str_arg(reference, "reference")?)?;
        let h = tokenize_strict(inv, str_arg(hypothesis, "hypothesis")?)?;
        *out_arg(out, "out")? = align(r.phones(), h.phones()).counts.into();
        Ok(())
    })
}

/// (I + D + S) / N.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capt_error_rate(counts: *const CaptEditCounts, out: *mut f64) -> CaptStatus {
    guard(|| {
        let c = ref_arg(counts, "counts")?;
        if c.reference_len == 0 {
            return fail(CaptStatus::InvalidArgument, "error rate undefined for an empty reference");
        }
        *out_arg(out, "out")? = (c.insertions + c.deletions + c.substitutions) as f64 / c.reference_len as f64;
        Ok(())
    })
}

/// Writes one detection flag per canonical phone into `out_flags`, which
/// holds `capacity` entries. `out_len` always receives the number needed.
///
/// # Safety
/// Pointers must be valid and `out_flags` must hold `capacity` bools.
#[no_mangle]
pub unsafe extern "C" fn capt_flag_detected(
    inv: *const CaptInventory,
    canonical: *const c_char,
    hypothesis: *const c_char,
    out_flags: *mut bool,
    capacity: usize,
    out_len: *mut usize,
) -> CaptStatus {
    guard(|| {
        let inv = &ref_arg(inv, "inv")?.inner;
        let c = tokenize_strict(inv, str_arg(canonical, "canonical")?)?;
        let h = tokenize_strict(inv, str_arg(hypothesis, "hypothesis")?)?;
        let flags = flag_detected(&c, &h);
        *out_arg(out_len, "out_len")? = flags.len();
        if flags.len() > capacity {
            return fail(
                CaptStatus::BufferTooSmall,
                format!("{} flags do not fit in {capacity}", flags.len()),
            );
        }
        if !flags.is_empty() {
            if out_flags.is_null() {
                return fail(CaptStatus::NullPointer, "out_flags is null");
            }
            std::slice::from_raw_parts_mut(out_flags, flags.len()).copy_from_slice(&flags);
        }
        Ok(())
    })
}

/// # Safety
/// `detected` and `truth` must each hold `n` bools.
#[no_mangle]
pub unsafe extern "C" fn capt_mdd_counts(
    detected: *const bool,
    truth: *const bool,
    n: usize,
    out: *mut CaptMddCounts,
) -> CaptStatus {
    guard(|| {
        let d = slice_arg(detected, n, "detected")?;
        let t = slice_arg(truth, n, "truth")?;
        let c = mdd_counts(d, t).or_else(|e| fail(CaptStatus::LengthMismatch, e.to_string()))?;
        *out_arg(out, "out")? = c.into();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capt_mdd_scores(counts: *const CaptMddCounts, out: *mut CaptMddScores) -> CaptStatus {
    guard(|| {
        let s = mdd_scores((*ref_arg(counts, "counts")?).into());
        *out_arg(out, "out")? = CaptMddScores {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            counts: s.counts.into(),
            degenerate: s.degenerate,
        };
        Ok(())
    })
}

/// Pearson correlation of two series of length `n`.
///
/// # Safety
/// `x` and `y` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn capt_pcc(x: *const f64, y: *const f64, n: usize, out: *mut CaptCorrelation) -> CaptStatus {
    guard(|| {
        let x = slice_arg(x, n, "x")?;
        let y = slice_arg(y, n, "y")?;
        let c = pcc(x, y).or_else(|e| {
            let status = match e {
                StatsError::LengthMismatch { .. } => CaptStatus::LengthMismatch,
                StatsError::TooFewSamples { .. } => CaptStatus::TooFewSamples,
            };
            fail(status, e.to_string())
        })?;
        *out_arg(out, "out")? = CaptCorrelation {
            r: c.r.unwrap_or(f64::NAN),
            p_value: c.p_value.unwrap_or(f64::NAN),
            n: c.n,
            has_r: c.r.is_some(),
            has_p: c.p_value.is_some(),
            degenerate: c.degenerate,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn capt_student_t_two_sided(t: f64, df: f64, out: *mut f64) -> CaptStatus {
    guard(|| {
        if df.is_nan() || df <= 0.0 || t.is_nan() {
            return fail(CaptStatus::InvalidArgument, "df must be positive and t a number");
        }
        *out_arg(out, "out")? = student_t_two_sided(t, df);
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capt_parse_apa(text: *const c_char, out: *mut CaptApaScores) -> CaptStatus {
    guard(|| {
        let s = parse_apa(str_arg(text, "text")?).or_else(|e| fail(CaptStatus::ParseFailure, e.to_string()))?;
        *out_arg(out, "out")? = CaptApaScores {
            accuracy: s.accuracy,
            fluency: s.fluency,
            prosodic: s.prosodic,
            total: s.total,
        };
        Ok(())
    })
}

/// Extracts the word and phoneme transcripts from an MDD response.
///
/// # Safety
/// Pointers must be valid; both outputs receive owned strings.
#[no_mangle]
pub unsafe extern "C" fn capt_parse_mdd(
    inv: *const CaptInventory,
    text: *const c_char,
    out_words: *mut *mut c_char,
    out_phones: *mut *mut c_char,
) -> CaptStatus {
    guard(|| {
        let inv = &ref_arg(inv, "inv")?.inner;
        let m = parse_mdd(str_arg(text, "text")?, inv).or_else(|e| fail(CaptStatus::ParseFailure, e.to_string()))?;
        let out_words = out_arg(out_words, "out_words")?;
        let out_phones = out_arg(out_phones, "out_phones")?;
        let words = to_c_string(m.word_transcript)?;
        match to_c_string(m.phoneme_transcript.render()) {
            Ok(phones) => {
                *out_words = words;
                *out_phones = phones;
                Ok(())
            }
            Err(e) => {
                drop(CString::from_raw(words));
                Err(e)
            }
        }
    })
}

/// Prompt for task `"apa"` or `"mdd"`, optionally prefixed by its control
/// token.
///
/// # Safety
/// Pointers must be valid; `out` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn capt_build_prompt(task: *const c_char, control_token: bool, out: *mut *mut c_char) -> CaptStatus {
    guard(|| {
        let task: Task = str_arg(task, "task")?
            .parse()
            .or_else(|e: String| fail(CaptStatus::InvalidArgument, e))?;
        *out_arg(out, "out")? = to_c_string(build_prompt(task, control_token))?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capt_corpus_load(path: *const c_char, out: *mut *mut CaptCorpus) -> CaptStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = Corpus::load(Path::new(str_arg(path, "path")?)).or_else(|e| fail(CaptStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(CaptCorpus { inner }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn capt_corpus_len(corpus: *const CaptCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.len())
}

/// # Safety
/// `corpus` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn capt_corpus_free(corpus: *mut CaptCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Scores a `capt-raw/1` file against a corpus and returns the
/// `capt-report/1` JSON.
///
/// # Safety
/// Pointers must be valid; `out_json` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn capt_score_files(
    corpus: *const CaptCorpus,
    raw_path: *const c_char,
    reproducible: bool,
    out_json: *mut *mut c_char,
) -> CaptStatus {
    guard(|| {
        let corpus = &ref_arg(corpus, "corpus")?.inner;
        let (header, raw) =
            load_raw(Path::new(str_arg(raw_path, "raw_path")?)).or_else(|e| fail(CaptStatus::Io, e.to_string()))?;
        let config = ScoreConfig {
            reproducible,
            ..ScoreConfig::default()
        };
        let report = score(corpus, &header, &raw, &config);
        *out_arg(out_json, "out_json")? = to_c_string(report.to_json())?;
        Ok(())
    })
}
