//! C ABI over the ncdstruct library.
//!
//! Matrices and trees are opaque handles created and destroyed through
//! this interface. Every fallible call returns an [`NcdStatus`] and writes
//! its result through an out-pointer; the message of the most recent
//! failure on the calling thread is available from [`ncd_last_error`].
//! Strings returned to the caller must be released with
//! [`ncd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ncdstruct::codec::CodecSpec;
use ncdstruct::dendro::{build_tree_agglomerative, refine_tree, UnrootedBinaryTree};
use ncdstruct::metrics::{clustering_error, dsc, ClusterAssignment};
use ncdstruct::{DistanceMatrix, Document, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcdStatus {
    Ok = 0,
    NullArgument = 1,
    Input = 2,
    CodecUnavailable = 3,
    InvalidSpec = 4,
    Undefined = 5,
    Domain = 6,
    Parse = 7,
    Io = 8,
    Other = 9,
    Panic = 10,
}

/// Opaque distance matrix.
pub struct NcdMatrix(DistanceMatrix);

/// Opaque unrooted binary tree.
pub struct NcdTree(UnrootedBinaryTree);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NcdStatus {
    match e {
        Error::InvalidSpec(_) => NcdStatus::InvalidSpec,
        Error::CodecUnavailable(_) => NcdStatus::CodecUnavailable,
        Error::Input(_) => NcdStatus::Input,
        Error::Parse { .. } => NcdStatus::Parse,
        Error::Undefined(_) => NcdStatus::Undefined,
        Error::Domain(_) => NcdStatus::Domain,
        Error::Io { .. } => NcdStatus::Io,
        _ => NcdStatus::Other,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NcdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NcdStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null argument: {what}"));
            NcdStatus::NullArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            NcdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::input(format!("{what} is not UTF-8"))))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &'static str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn string_list(p: *const *const c_char, n: usize, what: &'static str) -> Result<Vec<String>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    slice::from_raw_parts(p, n)
        .iter()
        .map(|&s| str_arg(s, what).map(str::to_string))
        .collect()
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail::Lib(Error::input("string contains a NUL byte")))
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ncd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ncd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// NCD of two byte strings under `codec` (e.g. "ppm:6", "lz", "bwt").
///
/// # Safety
/// Buffers must be valid for their lengths; `codec` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ncd_distance(
    x: *const u8,
    x_len: usize,
    y: *const u8,
    y_len: usize,
    codec: *const c_char,
    out: *mut f64,
) -> NcdStatus {
    guard(|| {
        let x = bytes_arg(x, x_len, "x")?;
        let y = bytes_arg(y, y_len, "y")?;
        let codec: CodecSpec = str_arg(codec, "codec")?.parse()?;
        let out = out_arg(out, "out")?;
        *out = ncdstruct::ncd(x, y, &codec)?;
        Ok(())
    })
}

/// Pairwise NCD matrix over `n` documents.
///
/// # Safety
/// `ids`, `bodies` and `lens` must each hold `n` valid entries.
#[no_mangle]
pub unsafe extern "C" fn ncd_matrix_build(
    ids: *const *const c_char,
    bodies: *const *const u8,
    lens: *const usize,
    n: usize,
    codec: *const c_char,
    out: *mut *mut NcdMatrix,
) -> NcdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let ids = string_list(ids, n, "ids")?;
        if n > 0 && (bodies.is_null() || lens.is_null()) {
            return Err(Fail::Null("bodies"));
        }
        let codec: CodecSpec = str_arg(codec, "codec")?.parse()?;
        let mut docs = Vec::with_capacity(n);
        for (i, id) in ids.into_iter().enumerate() {
            let len = *lens.add(i);
            let body = bytes_arg(*bodies.add(i), len, "bodies")?;
            docs.push(Document::new(id, "", body.to_vec()));
        }
        let m = ncdstruct::ncd_matrix(&docs, &codec)?;
        *out = Box::into_raw(Box::new(NcdMatrix(m)));
        Ok(())
    })
}

/// Parse a matrix from CSV text (`id,<ids>` header, one row per id).
///
/// # Safety
/// `csv` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ncd_matrix_from_csv(csv: *const c_char, out: *mut *mut NcdMatrix) -> NcdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(csv, "csv")?;
        let m = DistanceMatrix::from_csv(text.as_bytes())?;
        *out = Box::into_raw(Box::new(NcdMatrix(m)));
        Ok(())
    })
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn ncd_matrix_len(m: *const NcdMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// Entry `(i, j)`.
///
/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn ncd_matrix_get(m: *const NcdMatrix, i: usize, j: usize, out: *mut f64) -> NcdStatus {
    guard(|| {
        let m = m.as_ref().ok_or(Fail::Null("matrix"))?;
        let out = out_arg(out, "out")?;
        if i >= m.0.len() || j >= m.0.len() {
            return Err(Error::input(format!("index ({i},{j}) out of range")).into());
        }
        *out = m.0.get(i, j);
        Ok(())
    })
}

/// Id of row `i`, as a new string.
///
/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn ncd_matrix_id(m: *const NcdMatrix, i: usize, out: *mut *mut c_char) -> NcdStatus {
    guard(|| {
        let m = m.as_ref().ok_or(Fail::Null("matrix"))?;
        let out = out_arg(out, "out")?;
        let id = m
            .0
            .ids
            .get(i)
            .ok_or_else(|| Error::input(format!("row {i} out of range")))?;
        *out = into_c_string(id.clone())?;
        Ok(())
    })
}

/// Matrix as CSV text, as a new string.
///
/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn ncd_matrix_to_csv(m: *const NcdMatrix, out: *mut *mut c_char) -> NcdStatus {
    guard(|| {
        let m = m.as_ref().ok_or(Fail::Null("matrix"))?;
        let out = out_arg(out, "out")?;
        *out = into_c_string(m.0.to_csv())?;
        Ok(())
    })
}

/// Release a matrix. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ncd_matrix_free(m: *mut NcdMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Average-linkage tree, then `refine_iterations` seeded refinement steps.
///
/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn ncd_tree_build(
    m: *const NcdMatrix,
    refine_iterations: usize,
    seed: u64,
    out: *mut *mut NcdTree,
) -> NcdStatus {
    guard(|| {
        let m = m.as_ref().ok_or(Fail::Null("matrix"))?;
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = build_tree_agglomerative(&m.0)?;
        let t = refine_tree(&m.0, &t, refine_iterations, seed)?;
        *out = Box::into_raw(Box::new(NcdTree(t)));
        Ok(())
    })
}

/// Parse Newick text; a two-child root is suppressed.
///
/// # Safety
/// `newick` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ncd_tree_from_newick(newick: *const c_char, out: *mut *mut NcdTree) -> NcdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = UnrootedBinaryTree::from_newick(str_arg(newick, "newick")?)?;
        *out = Box::into_raw(Box::new(NcdTree(t)));
        Ok(())
    })
}

/// Canonical Newick text, as a new string.
///
/// # Safety
/// `t` must be a live tree handle.
#[no_mangle]
pub unsafe extern "C" fn ncd_tree_newick(t: *const NcdTree, out: *mut *mut c_char) -> NcdStatus {
    guard(|| {
        let t = t.as_ref().ok_or(Fail::Null("tree"))?;
        let out = out_arg(out, "out")?;
        *out = into_c_string(t.0.canonical_newick())?;
        Ok(())
    })
}

/// Internal nodes on the path between leaves `a` and `b`.
///
/// # Safety
/// `t` must be a live tree handle; ids must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ncd_tree_leaf_distance(
    t: *const NcdTree,
    a: *const c_char,
    b: *const c_char,
    out: *mut u32,
) -> NcdStatus {
    guard(|| {
        let t = t.as_ref().ok_or(Fail::Null("tree"))?;
        let out = out_arg(out, "out")?;
        *out = t.0.leaf_distance(str_arg(a, "a")?, str_arg(b, "b")?)?;
        Ok(())
    })
}

unsafe fn assignment(
    ids: *const *const c_char,
    classes: *const *const c_char,
    n: usize,
) -> Result<ClusterAssignment, Fail> {
    let ids = string_list(ids, n, "ids")?;
    let classes = string_list(classes, n, "classes")?;
    Ok(ClusterAssignment::from_pairs(ids.into_iter().zip(classes))?)
}

/// Dendrogram silhouette coefficient given each leaf's class.
///
/// # Safety
/// `t` must be a live tree handle; `ids` and `classes` hold `n` strings.
#[no_mangle]
pub unsafe extern "C" fn ncd_tree_dsc(
    t: *const NcdTree,
    ids: *const *const c_char,
    classes: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> NcdStatus {
    guard(|| {
        let t = t.as_ref().ok_or(Fail::Null("tree"))?;
        let out = out_arg(out, "out")?;
        *out = dsc(&t.0, &assignment(ids, classes, n)?)?;
        Ok(())
    })
}

/// Within-class path excess over the errorless minimum.
///
/// # Safety
/// `t` must be a live tree handle; `ids` and `classes` hold `n` strings.
#[no_mangle]
pub unsafe extern "C" fn ncd_tree_clustering_error(
    t: *const NcdTree,
    ids: *const *const c_char,
    classes: *const *const c_char,
    n: usize,
    out: *mut u64,
) -> NcdStatus {
    guard(|| {
        let t = t.as_ref().ok_or(Fail::Null("tree"))?;
        let out = out_arg(out, "out")?;
        *out = clustering_error(&t.0, &assignment(ids, classes, n)?)?;
        Ok(())
    })
}

/// Release a tree. Null is ignored.
///
/// # Safety
/// `t` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ncd_tree_free(t: *mut NcdTree) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
