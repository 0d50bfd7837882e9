//! C ABI over the superjet engine.
//!
//! Every fallible call returns an `int32_t` status: `SJ_OK` on success,
//! `SJ_CHECK_FAILED` when a report ran but some check failed, the small
//! `SJ_*` codes below for ABI misuse, and the engine's stable codes
//! (10..=39) otherwise. The message for the last failure on the calling
//! thread is available from `sj_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use superjet::cli::{self, CValue};
use superjet::parse::parse_poly;
use superjet::variational::{functional, schouten};
use superjet::{Ctx, DiffPoly, Error};

pub const SJ_OK: i32 = 0;
pub const SJ_CHECK_FAILED: i32 = 1;
pub const SJ_NULL_POINTER: i32 = 2;
pub const SJ_INVALID_UTF8: i32 = 3;
pub const SJ_PANIC: i32 = 4;

/// Jet superspace context.
pub struct SjContext {
    ctx: Ctx,
}

/// Differential polynomial bound to a context.
pub struct SjPoly {
    p: DiffPoly,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Fail {
    Code(i32, String),
    Engine(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<i32, Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(code)) => code,
        Ok(Err(Fail::Code(c, m))) => {
            set_error(m);
            c
        }
        Ok(Err(Fail::Engine(e))) => {
            set_error(e.to_string());
            e.code()
        }
        Err(_) => {
            set_error("internal panic".into());
            SJ_PANIC
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Code(SJ_NULL_POINTER, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail::Code(SJ_INVALID_UTF8, format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        Ok("")
    } else {
        text(s, what)
    }
}

fn csv(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Code(SJ_NULL_POINTER, "output pointer is null".into()));
    }
    *out = CString::new(s).map_err(|_| Fail::Code(SJ_INVALID_UTF8, "interior NUL".into()))?.into_raw();
    Ok(())
}

/// Message describing the last failure on this thread. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New context. `fields` and `params` are comma separated; `eps` gets
/// ε-weight −1.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sj_context_new(
    fields: *const c_char,
    params: *const c_char,
    max_level: u32,
    out: *mut *mut SjContext,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Code(SJ_NULL_POINTER, "out is null".into()));
        }
        let f = csv(text(fields, "fields")?);
        let p = csv(opt_text(params, "params")?);
        let ctx = cli::context(&f, &p, max_level as usize)?;
        *out = Box::into_raw(Box::new(SjContext { ctx }));
        Ok(SJ_OK)
    })
}

/// # Safety
/// `c` must come from `sj_context_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn sj_context_free(c: *mut SjContext) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Parse a polynomial in the text grammar.
///
/// # Safety
/// `c` must be a live context, `src` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_poly_parse(c: *const SjContext, src: *const c_char, out: *mut *mut SjPoly) -> i32 {
    guard(|| {
        if c.is_null() || out.is_null() {
            return Err(Fail::Code(SJ_NULL_POINTER, "context or out is null".into()));
        }
        let p = parse_poly(&(*c).ctx, text(src, "src")?)?;
        *out = Box::into_raw(Box::new(SjPoly { p }));
        Ok(SJ_OK)
    })
}

/// # Safety
/// `p` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sj_poly_free(p: *mut SjPoly) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Canonical text form; free with `sj_string_free`.
///
/// # Safety
/// `p` must be a live polynomial, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_poly_to_string(p: *const SjPoly, out: *mut *mut c_char) -> i32 {
    guard(|| {
        if p.is_null() {
            return Err(Fail::Code(SJ_NULL_POINTER, "poly is null".into()));
        }
        write_string(out, (*p).p.to_text())?;
        Ok(SJ_OK)
    })
}

/// Stable JSON form; free with `sj_string_free`.
///
/// # Safety
/// `p` must be a live polynomial, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_poly_to_json(p: *const SjPoly, out: *mut *mut c_char) -> i32 {
    guard(|| {
        if p.is_null() {
            return Err(Fail::Code(SJ_NULL_POINTER, "poly is null".into()));
        }
        write_string(out, (*p).p.to_json().to_string())?;
        Ok(SJ_OK)
    })
}

/// Schouten bracket of `∫p` and `∫q`; the result is a density representative.
///
/// # Safety
/// `p`, `q` must be live polynomials of the same context, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_schouten(p: *const SjPoly, q: *const SjPoly, out: *mut *mut SjPoly) -> i32 {
    guard(|| {
        if p.is_null() || q.is_null() || out.is_null() {
            return Err(Fail::Code(SJ_NULL_POINTER, "null argument".into()));
        }
        let r = schouten(&functional(&(*p).p), &functional(&(*q).p))?;
        *out = Box::into_raw(Box::new(SjPoly { p: r.rep().clone() }));
        Ok(SJ_OK)
    })
}

/// Whether `∫p` vanishes (p is a total derivative).
///
/// # Safety
/// `p` must be a live polynomial, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_functional_is_zero(p: *const SjPoly, out: *mut bool) -> i32 {
    guard(|| {
        if p.is_null() || out.is_null() {
            return Err(Fail::Code(SJ_NULL_POINTER, "null argument".into()));
        }
        *out = functional(&(*p).p).is_zero();
        Ok(SJ_OK)
    })
}

/// Run a command and return its JSON report (schema 1) in `json_out`.
///
/// `verb` is one of `kdv-super`, `wdvv-check`, `virasoro-ops`,
/// `virasoro-solve-1d`, `verify-example`, `scenario`. `arg` is the
/// Frobenius TOML text, the `c` value, the example name or the scenario
/// TOML text respectively (ignored for `kdv-super`). Returns `SJ_OK` when
/// every check passes and `SJ_CHECK_FAILED` otherwise; the report is
/// written in both cases.
///
/// # Safety
/// Strings must be NUL-terminated (`arg` may be null), `json_out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_run(verb: *const c_char, arg: *const c_char, cutoff: u32, json_out: *mut *mut c_char) -> i32 {
    guard(|| {
        let verb = text(verb, "verb")?;
        let arg = opt_text(arg, "arg")?;
        let cutoff = cutoff as usize;
        let rep = match verb {
            "kdv-super" => cli::run_kdv_super(),
            "wdvv-check" => cli::run_wdvv(arg, cutoff),
            "virasoro-ops" => cli::run_virasoro_ops(if arg.is_empty() { cli::B2_FROB } else { arg }, cutoff),
            "virasoro-solve-1d" => {
                let c: CValue = if arg.is_empty() { CValue::Symbolic } else { arg.parse()? };
                cli::run_virasoro_solve_1d(&c)
            }
            "verify-example" => cli::run_example(arg),
            "scenario" => cli::run_scenario(arg, Path::new(".")),
            v => return Err(Fail::Engine(Error::InvalidInput(format!("unknown verb `{v}`")))),
        }?;
        write_string(json_out, rep.to_json().to_string())?;
        Ok(if rep.ok() { SJ_OK } else { SJ_CHECK_FAILED })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn s(x: &str) -> CString {
        CString::new(x).unwrap()
    }

    #[test]
    fn bracket_roundtrip() {
        unsafe {
            let mut c = ptr::null_mut();
            assert_eq!(sj_context_new(s("u").as_ptr(), s("eps").as_ptr(), 2, &mut c), SJ_OK);
            let (mut p0, mut p1, mut r) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
            assert_eq!(sj_poly_parse(c, s("1/2*th1_0*th1_1").as_ptr(), &mut p0), SJ_OK);
            assert_eq!(
                sj_poly_parse(c, s("1/2*u1_0*th1_0*th1_1 + 1/16*eps^2*th1_0*th1_3").as_ptr(), &mut p1),
                SJ_OK
            );
            assert_eq!(sj_schouten(p1, p1, &mut r), SJ_OK);
            let mut z = false;
            assert_eq!(sj_functional_is_zero(r, &mut z), SJ_OK);
            assert!(z);
            let mut out = ptr::null_mut();
            assert_eq!(sj_poly_to_string(p0, &mut out), SJ_OK);
            assert_eq!(CStr::from_ptr(out).to_str().unwrap(), "1/2*s1_0_0*s1_0_1");
            sj_string_free(out);
            for h in [p0, p1, r] {
                sj_poly_free(h);
            }
            sj_context_free(c);
        }
    }

    #[test]
    fn error_codes() {
        unsafe {
            let mut c = ptr::null_mut();
            assert_eq!(sj_context_new(s("u").as_ptr(), ptr::null(), 1, &mut c), SJ_OK);
            let mut p = ptr::null_mut();
            let code = sj_poly_parse(c, s("u1_0 +* 2").as_ptr(), &mut p);
            assert_eq!(code, 13);
            assert!(!CStr::from_ptr(sj_last_error()).to_bytes().is_empty());
            assert_eq!(sj_poly_parse(ptr::null(), s("u1_0").as_ptr(), &mut p), SJ_NULL_POINTER);
            sj_context_free(c);
        }
    }

    #[test]
    fn run_reports() {
        unsafe {
            let mut out = ptr::null_mut();
            assert_eq!(sj_run(s("kdv-super").as_ptr(), ptr::null(), 4, &mut out), SJ_OK);
            let v = CStr::from_ptr(out).to_str().unwrap();
            assert!(v.contains("\"schema\":1"));
            sj_string_free(out);
            assert_eq!(sj_run(s("verify-example").as_ptr(), s("zzz").as_ptr(), 4, &mut out), 38);
        }
    }
}
