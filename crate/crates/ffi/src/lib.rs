//! C ABI over the core engines: opaque model handles, rational-string query
//! answers, and integer status codes matching the CLI exit codes.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::ptr;

use crl_core::dsl::{self, Model};
use crl_core::scm::Scm;
use crl_core::Error;

/// Success.
pub const CRL_OK: c_int = 0;
/// Generic failure (bad model, bad argument, guard exceeded, ...).
pub const CRL_ERR: c_int = 1;
/// Parse error; `crl_last_error` includes line and column.
pub const CRL_ERR_PARSE: c_int = 2;
/// Conditioning event has probability zero.
pub const CRL_ERR_ZERO_EVIDENCE: c_int = 3;
/// Query level unsupported by the model kind.
pub const CRL_ERR_UNSUPPORTED: c_int = 4;
/// Value system is singular.
pub const CRL_ERR_UNSOLVABLE: c_int = 5;
/// Policy depends on latent state.
pub const CRL_ERR_NOT_EXECUTABLE: c_int = 6;

/// Model kinds returned by `crl_model_kind`.
pub const CRL_KIND_CBN: c_int = 0;
pub const CRL_KIND_SCM: c_int = 1;
pub const CRL_KIND_DDN: c_int = 2;

/// An opaque parsed model.
pub struct CrlModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn status_of(e: &Error) -> c_int {
    match e {
        Error::Parse { .. } => CRL_ERR_PARSE,
        Error::ZeroEvidence | Error::ZeroMass => CRL_ERR_ZERO_EVIDENCE,
        Error::Unsupported(_) => CRL_ERR_UNSUPPORTED,
        Error::Unsolvable(_) => CRL_ERR_UNSOLVABLE,
        Error::NotExecutable(_) => CRL_ERR_NOT_EXECUTABLE,
        _ => CRL_ERR,
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(e: &Error) -> c_int {
    set_error(e.to_string());
    status_of(e)
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, c_int> {
    if p.is_null() {
        set_error("null pointer argument".into());
        return Err(CRL_ERR);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        CRL_ERR
    })
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn crl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent error on this thread; valid until the next
/// failing call, never freed by the caller.
#[no_mangle]
pub extern "C" fn crl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses model text into a handle. On success stores the handle in `out`
/// and returns `CRL_OK`; the handle must be released with `crl_model_free`.
/// `relax_a3` nonzero permits action-to-state edges within a slice.
#[no_mangle]
pub unsafe extern "C" fn crl_model_parse(
    text: *const c_char,
    relax_a3: c_int,
    out: *mut *mut CrlModel,
) -> c_int {
    if out.is_null() {
        set_error("null output pointer".into());
        return CRL_ERR;
    }
    *out = ptr::null_mut();
    let text = match read_str(text) {
        Ok(t) => t,
        Err(code) => return code,
    };
    match dsl::load_model(text, relax_a3 != 0) {
        Ok((_, model)) => {
            *out = Box::into_raw(Box::new(CrlModel { model }));
            CRL_OK
        }
        Err(e) => fail(&e),
    }
}

/// Releases a model handle. A null handle is a no-op.
#[no_mangle]
pub unsafe extern "C" fn crl_model_free(model: *mut CrlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Model kind (`CRL_KIND_*`), or a negative value on a null handle.
#[no_mangle]
pub unsafe extern "C" fn crl_model_kind(model: *const CrlModel) -> c_int {
    let Some(m) = model.as_ref() else {
        set_error("null model handle".into());
        return -1;
    };
    match m.model {
        Model::Cbn(_) => CRL_KIND_CBN,
        Model::Scm(_) => CRL_KIND_SCM,
        Model::Ddn(_) => CRL_KIND_DDN,
    }
}

/// Structural checks: acyclicity is implied by a successful parse; for
/// dynamic models the two-slice constraints were verified at parse time, so
/// a live handle always passes.
#[no_mangle]
pub unsafe extern "C" fn crl_model_check(model: *const CrlModel) -> c_int {
    if model.is_null() {
        set_error("null model handle".into());
        return CRL_ERR;
    }
    CRL_OK
}

/// Evaluates one probability query (same grammar as the CLI, e.g.
/// `P(SC=1 | CG=1, do(SH=1))`) and stores the exact rational answer as a
/// string in `out_value`; free it with `crl_string_free`. `canonical_scm`
/// nonzero consents to answering counterfactuals on a plain network via the
/// canonical structural conversion.
#[no_mangle]
pub unsafe extern "C" fn crl_query_eval(
    model: *const CrlModel,
    query: *const c_char,
    canonical_scm: c_int,
    out_value: *mut *mut c_char,
) -> c_int {
    if out_value.is_null() {
        set_error("null output pointer".into());
        return CRL_ERR;
    }
    *out_value = ptr::null_mut();
    let Some(m) = model.as_ref() else {
        set_error("null model handle".into());
        return CRL_ERR;
    };
    let query = match read_str(query) {
        Ok(q) => q,
        Err(code) => return code,
    };
    match answer(&m.model, query, canonical_scm != 0) {
        Ok(value) => {
            let c = CString::new(value).unwrap_or_default();
            *out_value = c.into_raw();
            CRL_OK
        }
        Err(e) => fail(&e),
    }
}

fn answer(model: &Model, query: &str, canonical_scm: bool) -> Result<String, Error> {
    let q = dsl::parse_query(query)?.to_query()?;
    let p = match model {
        Model::Scm(s) => s.query(&q)?,
        Model::Cbn(c) => {
            if q.potential.is_some() {
                convert(canonical_scm, c)?.query(&q)?
            } else {
                c.query(&q)?
            }
        }
        Model::Ddn(d) => {
            if q.potential.is_some() {
                convert(canonical_scm, d.as_cbn())?.query(&q)?
            } else {
                d.as_cbn().query(&q)?
            }
        }
    };
    Ok(p.to_string())
}

fn convert(consent: bool, cbn: &crl_core::cbn::Cbn) -> Result<Scm, Error> {
    if !consent {
        return Err(Error::Unsupported(
            "counterfactual queries require canonical_scm consent".into(),
        ));
    }
    Scm::from_cbn(cbn)
}

/// Frees a string returned by this library. A null pointer is a no-op.
#[no_mangle]
pub unsafe extern "C" fn crl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crl_core::fixtures;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn parse(text: &str) -> *mut CrlModel {
        let mut handle = ptr::null_mut();
        assert_eq!(
            crl_model_parse(cstr(text).as_ptr(), 0, &mut handle),
            CRL_OK
        );
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn roundtrip_query() {
        unsafe {
            let m = parse(fixtures::OFFLINE_CBN);
            assert_eq!(crl_model_kind(m), CRL_KIND_CBN);
            assert_eq!(crl_model_check(m), CRL_OK);
            let mut out = ptr::null_mut();
            let q = cstr("P(SC=1 | CG=1, do(SH=1))");
            assert_eq!(crl_query_eval(m, q.as_ptr(), 0, &mut out), CRL_OK);
            assert_eq!(CStr::from_ptr(out).to_str().unwrap(), "1/4");
            crl_string_free(out);
            crl_model_free(m);
        }
    }

    #[test]
    fn counterfactual_needs_consent() {
        unsafe {
            let m = parse(fixtures::OFFLINE_CBN);
            let q = cstr("P(SC[SH=1]=1 | CG=1, SH=0)");
            let mut out = ptr::null_mut();
            assert_eq!(
                crl_query_eval(m, q.as_ptr(), 0, &mut out),
                CRL_ERR_UNSUPPORTED
            );
            assert!(out.is_null());
            assert_eq!(crl_query_eval(m, q.as_ptr(), 1, &mut out), CRL_OK);
            assert_eq!(CStr::from_ptr(out).to_str().unwrap(), "0");
            crl_string_free(out);
            crl_model_free(m);
        }
    }

    #[test]
    fn error_codes_and_messages() {
        unsafe {
            let mut handle = ptr::null_mut();
            let bad = cstr("model cbn \"x\"\nvar X {0,1 role=state\n");
            assert_eq!(
                crl_model_parse(bad.as_ptr(), 0, &mut handle),
                CRL_ERR_PARSE
            );
            assert!(handle.is_null());
            let msg = CStr::from_ptr(crl_last_error()).to_str().unwrap();
            assert!(msg.contains("line 2"), "{msg}");

            let m = parse(fixtures::OFFLINE_CBN);
            let q = cstr("P(SC=1 | CG=0, SH=1)");
            let mut out = ptr::null_mut();
            assert_eq!(
                crl_query_eval(m, q.as_ptr(), 0, &mut out),
                CRL_ERR_ZERO_EVIDENCE
            );
            crl_model_free(m);
        }
    }

    #[test]
    fn null_handling() {
        unsafe {
            assert_eq!(crl_model_kind(ptr::null()), -1);
            crl_model_free(ptr::null_mut());
            crl_string_free(ptr::null_mut());
            let mut out = ptr::null_mut();
            assert_eq!(
                crl_model_parse(ptr::null(), 0, &mut out),
                CRL_ERR
            );
            assert!(!crl_version().is_null());
        }
    }
}
