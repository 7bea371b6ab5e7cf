//! C ABI over the kudos core.
//!
//! Every function returns a [`KudosStatus`]. Results come back through out
//! parameters; strings handed to the caller are NUL-terminated UTF-8 JSON
//! and must be released with [`kudos_string_free`]. After a non-OK status,
//! [`kudos_last_error`] describes the failure on the calling thread.
//!
//! A [`KudosLedger`] is an opaque handle. It may be shared between threads
//! and is released with [`kudos_ledger_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kudos::insights::{badge_payload, package_stats};
use kudos::ledger::{EventId, Ledger, LedgerError, ThanksDraft};
use kudos::scanner::{Scanner, SourceDocument};
use kudos::window::{parse_instant, TimeWindow};
use kudos::{Ecosystem, Language};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KudosStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Unsupported = 4,
    NotFound = 5,
    Conflict = 6,
    Storage = 7,
    Corrupt = 8,
    Panic = 9,
}

/// Opaque ledger handle.
pub struct KudosLedger {
    inner: Ledger,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(KudosStatus, String);

impl From<LedgerError> for Failure {
    fn from(e: LedgerError) -> Self {
        let status = match &e {
            LedgerError::Invalid(_) => KudosStatus::InvalidInput,
            LedgerError::NotFound(_) => KudosStatus::NotFound,
            LedgerError::Conflict(_) => KudosStatus::Conflict,
            LedgerError::Storage(_) => KudosStatus::Storage,
            LedgerError::Corrupt { .. } => KudosStatus::Corrupt,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KudosStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KudosStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            KudosStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or points to a NUL-terminated string.
unsafe fn arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(KudosStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(KudosStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` is null or points to a NUL-terminated string.
unsafe fn opt_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        arg(p, name).map(Some)
    }
}

/// # Safety
/// `out` is null or valid for a pointer write.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(KudosStatus::NullArgument, "out is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(KudosStatus::InvalidInput, "result contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string(value).map_err(|e| Failure(KudosStatus::InvalidInput, e.to_string()))
}

/// # Safety
/// `ledger` is null or a live handle from this library.
unsafe fn handle<'a>(ledger: *const KudosLedger) -> Result<&'a Ledger, Failure> {
    ledger
        .as_ref()
        .map(|l| &l.inner)
        .ok_or_else(|| Failure(KudosStatus::NullArgument, "ledger is null".into()))
}

/// Message for the most recent failure on this thread, or null. The caller
/// owns the returned string.
#[no_mangle]
pub extern "C" fn kudos_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn kudos_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scans `text` as `language` ("python", "javascript", "typescript") and
/// writes the anchors as a JSON array to `out_json`.
///
/// # Safety
/// String arguments are NUL-terminated; `out_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kudos_scan(language: *const c_char, text: *const c_char, out_json: *mut *mut c_char) -> KudosStatus {
    guard(|| {
        let language: Language = arg(language, "language")?
            .parse()
            .map_err(|e: kudos::language::UnsupportedLanguage| Failure(KudosStatus::Unsupported, e.to_string()))?;
        let doc = SourceDocument::new(language, arg(text, "text")?);
        put_string(out_json, to_json(&Scanner::new().scan(&doc))?)
    })
}

/// Opens (creating if needed) a ledger file.
///
/// # Safety
/// `path` is NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kudos_ledger_open(path: *const c_char, out: *mut *mut KudosLedger) -> KudosStatus {
    guard(|| {
        let path = arg(path, "path")?;
        if out.is_null() {
            return Err(Failure(KudosStatus::NullArgument, "out is null".into()));
        }
        let inner = Ledger::open(path)?;
        *out = Box::into_raw(Box::new(KudosLedger { inner }));
        Ok(())
    })
}

/// Creates a ledger that lives only in memory.
///
/// # Safety
/// `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kudos_ledger_open_memory(out: *mut *mut KudosLedger) -> KudosStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(KudosStatus::NullArgument, "out is null".into()));
        }
        *out = Box::into_raw(Box::new(KudosLedger { inner: Ledger::in_memory() }));
        Ok(())
    })
}

/// Releases a ledger handle. Null is ignored.
///
/// # Safety
/// `ledger` is null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn kudos_ledger_free(ledger: *mut KudosLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

/// Records a thanks given as a JSON object with the event fields except
/// `event_id`, and writes the new id to `out_event_id`.
///
/// # Safety
/// `ledger` is live; `draft_json` is NUL-terminated; `out_event_id` is valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn kudos_ledger_record(
    ledger: *const KudosLedger,
    draft_json: *const c_char,
    out_event_id: *mut *mut c_char,
) -> KudosStatus {
    guard(|| {
        let ledger = handle(ledger)?;
        let draft: ThanksDraft = serde_json::from_str(arg(draft_json, "draft_json")?)
            .map_err(|e| Failure(KudosStatus::InvalidInput, e.to_string()))?;
        let id = ledger.record_thanks(draft)?;
        put_string(out_event_id, id.0)
    })
}

/// Attaches a personal note to a recorded thanks.
///
/// # Safety
/// `ledger` is live; string arguments are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kudos_ledger_attach_note(
    ledger: *const KudosLedger,
    event_id: *const c_char,
    note: *const c_char,
) -> KudosStatus {
    guard(|| {
        let ledger = handle(ledger)?;
        let id = EventId(arg(event_id, "event_id")?.to_string());
        ledger.attach_note(&id, arg(note, "note")?)?;
        Ok(())
    })
}

/// Number of events in the ledger.
///
/// # Safety
/// `ledger` is live; `out_len` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kudos_ledger_len(ledger: *const KudosLedger, out_len: *mut usize) -> KudosStatus {
    guard(|| {
        let ledger = handle(ledger)?;
        if out_len.is_null() {
            return Err(Failure(KudosStatus::NullArgument, "out_len is null".into()));
        }
        *out_len = ledger.len();
        Ok(())
    })
}

/// # Safety
/// Arguments are null or NUL-terminated.
unsafe fn window(start: *const c_char, end: *const c_char) -> Result<TimeWindow, Failure> {
    let all = TimeWindow::all();
    let instant = |s: Option<&str>, default| match s {
        None => Ok(default),
        Some(s) => parse_instant(s).ok_or_else(|| Failure(KudosStatus::InvalidInput, format!("cannot parse instant {s:?}"))),
    };
    let start = instant(opt_arg(start, "start")?, all.start)?;
    let end = instant(opt_arg(end, "end")?, all.end)?;
    TimeWindow::new(start, end).map_err(|e| Failure(KudosStatus::InvalidInput, e.to_string()))
}

/// Thanked objects in `[start, end)` as a JSON array. Null bounds are open.
///
/// # Safety
/// `ledger` is live; `start` and `end` are null or NUL-terminated;
/// `out_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kudos_ledger_objects(
    ledger: *const KudosLedger,
    start: *const c_char,
    end: *const c_char,
    out_json: *mut *mut c_char,
) -> KudosStatus {
    guard(|| {
        let ledger = handle(ledger)?;
        let window = window(start, end)?;
        put_string(out_json, to_json(&ledger.aggregate_objects(&window))?)
    })
}

fn ecosystem(s: &str) -> Result<Ecosystem, Failure> {
    s.parse()
        .map_err(|e: kudos::language::UnknownEcosystem| Failure(KudosStatus::Unsupported, e.to_string()))
}

/// All-time statistics for a package as a JSON object.
///
/// # Safety
/// `ledger` is live; strings are NUL-terminated; `out_json` is valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn kudos_package_stats(
    ledger: *const KudosLedger,
    ecosystem_name: *const c_char,
    package: *const c_char,
    out_json: *mut *mut c_char,
) -> KudosStatus {
    guard(|| {
        let ledger = handle(ledger)?;
        let eco = ecosystem(arg(ecosystem_name, "ecosystem")?)?;
        let stats = package_stats(&ledger.snapshot(), eco, arg(package, "package")?, &TimeWindow::all());
        put_string(out_json, to_json(&stats)?)
    })
}

/// Badge endpoint document for a package.
///
/// # Safety
/// Same as [`kudos_package_stats`].
#[no_mangle]
pub unsafe extern "C" fn kudos_badge(
    ledger: *const KudosLedger,
    ecosystem_name: *const c_char,
    package: *const c_char,
    out_json: *mut *mut c_char,
) -> KudosStatus {
    guard(|| {
        let ledger = handle(ledger)?;
        let eco = ecosystem(arg(ecosystem_name, "ecosystem")?)?;
        put_string(out_json, to_json(&badge_payload(&ledger.snapshot(), eco, arg(package, "package")?))?)
    })
}
