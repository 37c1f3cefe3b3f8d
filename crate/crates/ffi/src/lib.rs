//! C ABI over `discourse`: overlap metrics, teacher rewards, greedy
//! generation and corpus evaluation.
//!
//! Every entry point returns a [`DrStatus`]. On failure the message is kept
//! per thread and read with [`dr_last_error`]. Handles are opaque and owned by
//! the caller until passed to the matching `_free`. Strings are UTF-8 and
//! NUL-terminated; text is tokenized the same way as corpus files.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use discourse::checkpoint::Checkpoint;
use discourse::corpus::{load_lexicon, segment_ids, tokenize, EncodedRecipe, EventLexicon, Vocab};
use discourse::evaluation::{bleu, evaluate_corpus, rouge_l};
use discourse::generator::GeneratorParams;
use discourse::policy::{reward_absolute, reward_relative};
use discourse::teacher::{Teacher, TeacherKind};
use discourse::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Unreadable, malformed or empty input data.
    Data = 3,
    /// Corrupt checkpoint or one of the wrong model type.
    Checkpoint = 4,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 5,
    Panic = 6,
}

/// A trained ordering teacher with its vocabulary.
pub struct DrTeacher {
    teacher: Teacher,
    vocab: Vocab,
}

/// Generator parameters with their vocabulary.
pub struct DrGenerator {
    params: GeneratorParams,
    vocab: Vocab,
}

/// An event lexicon for action and state-change extraction.
pub struct DrLexicon {
    lexicon: EventLexicon,
}

/// Corpus scores in [0, 100].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DrScoreReport {
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub action_bleu1: f64,
    pub action_bleu4: f64,
    pub action_rouge_l: f64,
    pub state_bleu1: f64,
    pub state_bleu4: f64,
    pub state_rouge_l: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(DrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) | Error::EmptySentence => DrStatus::InvalidArgument,
            Error::Checkpoint(_) | Error::ChecksumMismatch { .. } => DrStatus::Checkpoint,
            _ => DrStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DrStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            DrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            DrStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(DrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or points to `n` string pointers valid for the call.
unsafe fn texts<'a>(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<&'a str>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure(DrStatus::NullPointer, format!("{what} is null")));
    }
    (0..n).map(|i| text(*p.add(i), what)).collect()
}

fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller passes a valid, writable pointer or null.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(DrStatus::NullPointer, "output pointer is null".into()))
}

fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: non-null handles come from the matching `_load`.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(DrStatus::NullPointer, format!("{what} handle is null")))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Smoothed BLEU-n of `candidate` against `reference`, in [0, 1].
///
/// # Safety
/// String arguments are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_bleu(candidate: *const c_char, reference: *const c_char, n: u32, out: *mut f64) -> DrStatus {
    guard(|| {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let c = tokenize(text(candidate, "candidate")?);
        let r = tokenize(text(reference, "reference")?);
        *out_ref(out)? = bleu(&c, &r, n as usize);
        Ok(())
    })
}

/// ROUGE-L F-measure of `candidate` against `reference`, in [0, 1].
///
/// # Safety
/// String arguments are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_rouge_l(candidate: *const c_char, reference: *const c_char, out: *mut f64) -> DrStatus {
    guard(|| {
        let c = tokenize(text(candidate, "candidate")?);
        let r = tokenize(text(reference, "reference")?);
        *out_ref(out)? = rouge_l(&c, &r);
        Ok(())
    })
}

/// # Safety
/// `path` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_teacher_load(path: *const c_char, out: *mut *mut DrTeacher) -> DrStatus {
    guard(|| {
        let slot = out_ref(out)?;
        *slot = ptr::null_mut();
        let ck = Checkpoint::load(Path::new(text(path, "path")?))?;
        let teacher = ck.teacher()?;
        *slot = Box::into_raw(Box::new(DrTeacher {
            teacher,
            vocab: ck.meta.vocab,
        }));
        Ok(())
    })
}

/// # Safety
/// `t` is null or a handle from [`dr_teacher_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_teacher_free(t: *mut DrTeacher) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// 0 for an absolute-order teacher, 1 for relative-order.
///
/// # Safety
/// `t` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_teacher_kind(t: *const DrTeacher, out: *mut u32) -> DrStatus {
    guard(|| {
        *out_ref(out)? = match handle(t, "teacher")?.teacher.kind {
            TeacherKind::Absolute => 0,
            TeacherKind::Relative => 1,
        };
        Ok(())
    })
}

fn doc(t: &DrTeacher, s: &str) -> discourse::corpus::SegmentedDoc {
    let ids = t.vocab.encode(&tokenize(s));
    segment_ids(&ids, t.vocab.delimiters())
}

/// Absolute-order reward of `generated` given `gold`, in [-2, 2].
///
/// # Safety
/// `t` is a live handle; strings are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_teacher_reward_absolute(
    t: *const DrTeacher,
    generated: *const c_char,
    gold: *const c_char,
    out: *mut f64,
) -> DrStatus {
    guard(|| {
        let t = handle(t, "teacher")?;
        let g = doc(t, text(generated, "generated")?);
        let y = doc(t, text(gold, "gold")?);
        *out_ref(out)? = reward_absolute(&t.teacher, &g, &y)?;
        Ok(())
    })
}

/// Relative-order reward of each generated sentence. Writes up to `cap`
/// values to `rewards` and the sentence count to `out_len`; returns
/// `BufferTooSmall` when `cap` is short.
///
/// # Safety
/// `t` is a live handle; strings are NUL-terminated; `rewards` has room for
/// `cap` doubles (or is null when `cap` is 0); `out_len` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_teacher_reward_relative(
    t: *const DrTeacher,
    generated: *const c_char,
    gold: *const c_char,
    l_min: usize,
    l_max: usize,
    rewards: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> DrStatus {
    guard(|| {
        let t = handle(t, "teacher")?;
        let len = out_ref(out_len)?;
        let g = doc(t, text(generated, "generated")?);
        let y = doc(t, text(gold, "gold")?);
        let r = reward_relative(&t.teacher, &g, &y, l_min, l_max)?;
        *len = r.len();
        if r.len() > cap {
            return Err(Failure(
                DrStatus::BufferTooSmall,
                format!("{} sentences but room for {cap}", r.len()),
            ));
        }
        if !r.is_empty() {
            if rewards.is_null() {
                return Err(Failure(DrStatus::NullPointer, "rewards is null".into()));
            }
            ptr::copy_nonoverlapping(r.as_ptr(), rewards, r.len());
        }
        Ok(())
    })
}

/// # Safety
/// `path` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_generator_load(path: *const c_char, out: *mut *mut DrGenerator) -> DrStatus {
    guard(|| {
        let slot = out_ref(out)?;
        *slot = ptr::null_mut();
        let ck = Checkpoint::load(Path::new(text(path, "path")?))?;
        let params = ck.generator()?;
        *slot = Box::into_raw(Box::new(DrGenerator {
            params,
            vocab: ck.meta.vocab,
        }));
        Ok(())
    })
}

/// # Safety
/// `g` is null or a handle from [`dr_generator_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_generator_free(g: *mut DrGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Greedy-decodes a recipe body for `title` and `n_ingredients` ingredient
/// phrases. The result is freed with [`dr_string_free`].
///
/// # Safety
/// `g` is a live handle; `title` and each ingredient are NUL-terminated;
/// `ingredients` holds `n_ingredients` pointers; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_generator_greedy(
    g: *const DrGenerator,
    title: *const c_char,
    ingredients: *const *const c_char,
    n_ingredients: usize,
    max_len: usize,
    out: *mut *mut c_char,
) -> DrStatus {
    guard(|| {
        let slot = out_ref(out)?;
        *slot = ptr::null_mut();
        let g = handle(g, "generator")?;
        if max_len == 0 {
            return Err(invalid("max_len must be positive"));
        }
        let recipe = EncodedRecipe {
            title: g.vocab.encode(&tokenize(text(title, "title")?)),
            ingredients: texts(ingredients, n_ingredients, "ingredient")?
                .into_iter()
                .map(|s| g.vocab.encode(&tokenize(s)))
                .filter(|p| !p.is_empty())
                .collect(),
            body: Vec::new(),
        };
        let ctx = g.params.encode(&recipe)?;
        let d = g.params.greedy_decode(&ctx, max_len);
        let s = CString::new(g.vocab.detokenize(d.body())).map_err(|_| invalid("generated text holds NUL"))?;
        *slot = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `path` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_lexicon_load(path: *const c_char, out: *mut *mut DrLexicon) -> DrStatus {
    guard(|| {
        let slot = out_ref(out)?;
        *slot = ptr::null_mut();
        let lexicon = load_lexicon(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(DrLexicon { lexicon }));
        Ok(())
    })
}

/// # Safety
/// `l` is null or a handle from [`dr_lexicon_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dr_lexicon_free(l: *mut DrLexicon) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Corpus-level word, action and state-change overlap of `n` generations
/// against `n` references.
///
/// # Safety
/// `l` is a live handle; `generated` and `gold` each hold `n` NUL-terminated
/// strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dr_evaluate(
    l: *const DrLexicon,
    generated: *const *const c_char,
    gold: *const *const c_char,
    n: usize,
    out: *mut DrScoreReport,
) -> DrStatus {
    guard(|| {
        let lex = handle(l, "lexicon")?;
        let out = out_ref(out)?;
        let gens: Vec<Vec<String>> = texts(generated, n, "generated")?.into_iter().map(tokenize).collect();
        let golds: Vec<Vec<String>> = texts(gold, n, "gold")?.into_iter().map(tokenize).collect();
        let r = evaluate_corpus(&gens, &golds, &lex.lexicon)?;
        let v = r.values().map(|x| x * 100.0);
        *out = DrScoreReport {
            bleu1: v[0],
            bleu4: v[1],
            rouge_l: v[2],
            action_bleu1: v[3],
            action_bleu4: v[4],
            action_rouge_l: v[5],
            state_bleu1: v[6],
            state_bleu4: v[7],
            state_rouge_l: v[8],
        };
        Ok(())
    })
}
