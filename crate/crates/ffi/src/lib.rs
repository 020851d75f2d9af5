//! C ABI over the `hyperdisc` core.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Fallible functions return an [`HdStatus`]
//! and write results through out-pointers. After a non-`Ok` status,
//! [`hd_last_error`] describes the failure on the calling thread.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hyperdisc::corpus::{parse_corpus, Corpus, Keywords};
use hyperdisc::hypergraph::{build_hypergraph, BuildOptions, Hypergraph, NodeId, NodeKind};
use hyperdisc::quantile::normal_quantile;
use hyperdisc::scoring::{combine_scores, van_der_waerden, FusionMethod, Provenance, ScoreTable};
use hyperdisc::social::{density_of_sets, SdMode};
use hyperdisc::transition::{transition_matrix, TransitionMatrix, TransitionOptions};
use hyperdisc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8 or an out-of-range enum value.
    InvalidArgument = 1,
    Parse = 2,
    Validation = 3,
    Domain = 4,
    Lookup = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdNodeKind {
    Author = 0,
    Material = 1,
    Property = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdFusionMethod {
    VdwZ = 0,
    Geometric = 1,
    Harmonic = 2,
    LinearLambda = 3,
}

pub struct HdCorpus(Corpus);
pub struct HdHypergraph(Hypergraph);
pub struct HdTransition(TransitionMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse { .. } => HdStatus::Parse,
            Error::Validation(_) | Error::Config(_) => HdStatus::Validation,
            Error::Domain(_) | Error::Diverged(_) => HdStatus::Domain,
            Error::Lookup(_) => HdStatus::Lookup,
            Error::Io(_) | Error::Json(_) => HdStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(HdStatus::InvalidArgument, msg.to_string())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{name} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(&format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn put<T>(out: *mut T, v: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    out.write(v);
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `hd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn hd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses JSON-lines records; `keywords` holds one property keyword per line.
///
/// # Safety
/// `jsonl` and `keywords` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_corpus_parse(jsonl: *const c_char, keywords: *const c_char, out: *mut *mut HdCorpus) -> HdStatus {
    guard(|| {
        let text = str_arg(jsonl, "jsonl")?;
        let kw = Keywords::parse(str_arg(keywords, "keywords")?.as_bytes())?;
        let corpus = parse_corpus(text.as_bytes(), kw)?;
        put(out, Box::into_raw(Box::new(HdCorpus(corpus))), "out")
    })
}

/// # Safety
/// `c` must be null or a handle from [`hd_corpus_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hd_corpus_free(c: *mut HdCorpus) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` must be a live corpus handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_corpus_len(c: *const HdCorpus, out: *mut usize) -> HdStatus {
    guard(|| put(out, handle(c, "corpus")?.0.len(), "out"))
}

/// # Safety
/// `c` must be a live corpus handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_hypergraph_build(c: *const HdCorpus, out: *mut *mut HdHypergraph) -> HdStatus {
    guard(|| {
        let h = build_hypergraph(&handle(c, "corpus")?.0, BuildOptions::default())?;
        put(out, Box::into_raw(Box::new(HdHypergraph(h))), "out")
    })
}

/// # Safety
/// `h` must be null or a live hypergraph handle.
#[no_mangle]
pub unsafe extern "C" fn hd_hypergraph_free(h: *mut HdHypergraph) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live hypergraph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_hypergraph_node_count(h: *const HdHypergraph, out: *mut usize) -> HdStatus {
    guard(|| put(out, handle(h, "hypergraph")?.0.node_count(), "out"))
}

/// # Safety
/// `h` must be a live hypergraph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_hypergraph_edge_count(h: *const HdHypergraph, out: *mut usize) -> HdStatus {
    guard(|| put(out, handle(h, "hypergraph")?.0.edge_count(), "out"))
}

/// Looks up a node by kind (an `HdNodeKind` value) and label. Returns `Lookup` when absent.
///
/// # Safety
/// `h` must be a live hypergraph handle, `label` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hd_hypergraph_find_node(
    h: *const HdHypergraph,
    kind: u32,
    label: *const c_char,
    out: *mut u32,
) -> HdStatus {
    guard(|| {
        let h = &handle(h, "hypergraph")?.0;
        let label = str_arg(label, "label")?;
        let kind = match kind {
            k if k == HdNodeKind::Author as u32 => NodeKind::Author,
            k if k == HdNodeKind::Material as u32 => NodeKind::Material,
            k if k == HdNodeKind::Property as u32 => NodeKind::Property,
            k => return Err(invalid(&format!("unknown node kind {k}"))),
        };
        let id = h.find(kind, label).ok_or_else(|| Failure(HdStatus::Lookup, format!("no {kind:?} node {label:?}")))?;
        put(out, id.0, "out")
    })
}

/// # Safety
/// `h` must be a live hypergraph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_transition_build(h: *const HdHypergraph, exclude_self: bool, out: *mut *mut HdTransition) -> HdStatus {
    guard(|| {
        let tm = transition_matrix(&handle(h, "hypergraph")?.0, TransitionOptions { exclude_self });
        put(out, Box::into_raw(Box::new(HdTransition(tm))), "out")
    })
}

/// # Safety
/// `t` must be null or a live transition handle.
#[no_mangle]
pub unsafe extern "C" fn hd_transition_free(t: *mut HdTransition) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Probability of reaching `target` from `source` in `steps` hops whose
/// intermediate nodes are all authors.
///
/// # Safety
/// `t` must be a live transition handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_transition_author_mediated(
    t: *const HdTransition,
    source: u32,
    target: u32,
    steps: usize,
    out: *mut f64,
) -> HdStatus {
    guard(|| {
        let p = handle(t, "transition")?.0.author_mediated_transition(NodeId(source), NodeId(target), steps)?;
        put(out, p, "out")
    })
}

/// Standard normal quantile; NaN outside [0, 1].
#[no_mangle]
pub extern "C" fn hd_normal_quantile(p: f64) -> f64 {
    normal_quantile(p)
}

fn label(i: usize) -> String {
    format!("{i:020}")
}

fn table(values: &[f64], provenance: Provenance) -> Result<ScoreTable, Failure> {
    Ok(ScoreTable::from_pairs(provenance, values.iter().enumerate().map(|(i, &v)| (label(i), v)))?)
}

fn write_back(t: &ScoreTable, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = t.get(&label(i)).expect("same candidates");
    }
}

/// Van der Waerden normal scores (average ranks for ties) of `n` values.
///
/// # Safety
/// `values` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn hd_van_der_waerden(values: *const f64, n: usize, out: *mut f64) -> HdStatus {
    guard(|| {
        let t = van_der_waerden(&table(slice_arg(values, n, "values")?, Provenance::ExternalPf)?)?;
        if n > 0 && out.is_null() {
            return Err(invalid("out is null"));
        }
        write_back(&t, std::slice::from_raw_parts_mut(out, n));
        Ok(())
    })
}

/// Fuses two aligned score vectors of length `n` with an `HdFusionMethod`. Larger fused values rank
/// first.
///
/// # Safety
/// `s1`, `s2` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn hd_combine_scores(
    s1: *const f64,
    s2: *const f64,
    n: usize,
    beta: f64,
    method: u32,
    out: *mut f64,
) -> HdStatus {
    guard(|| {
        let method = match method {
            m if m == HdFusionMethod::VdwZ as u32 => FusionMethod::VdwZ,
            m if m == HdFusionMethod::Geometric as u32 => FusionMethod::Geometric,
            m if m == HdFusionMethod::Harmonic as u32 => FusionMethod::Harmonic,
            m if m == HdFusionMethod::LinearLambda as u32 => FusionMethod::LinearLambda,
            m => return Err(invalid(&format!("unknown fusion method {m}"))),
        };
        let a = table(slice_arg(s1, n, "s1")?, Provenance::ExternalPf)?;
        let b = table(slice_arg(s2, n, "s2")?, Provenance::ExternalPf)?;
        let fused = combine_scores(&a, &b, beta, method)?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        write_back(&fused, std::slice::from_raw_parts_mut(out, n));
        Ok(())
    })
}

/// Social density of two author-id sets: |A∩B| / (|A|+|B|), or the Jaccard
/// index when `jaccard` is true. Duplicate ids are ignored; 0 when both are
/// empty.
///
/// # Safety
/// `a` must point to `na` ids and `b` to `nb` ids.
#[no_mangle]
pub unsafe extern "C" fn hd_social_density(a: *const u32, na: usize, b: *const u32, nb: usize, jaccard: bool, out: *mut f64) -> HdStatus {
    guard(|| {
        let a: BTreeSet<u32> = slice_arg(a, na, "a")?.iter().copied().collect();
        let b: BTreeSet<u32> = slice_arg(b, nb, "b")?.iter().copied().collect();
        let mode = if jaccard { SdMode::Jaccard } else { SdMode::SumDenominator };
        put(out, density_of_sets(&a, &b, mode), "out")
    })
}
