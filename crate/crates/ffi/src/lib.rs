//! C ABI over the distribution-comparison core, so other languages can
//! build term distributions and run the TV / chi-squared comparison without
//! binding the whole pipeline.
//!
//! Conventions: distributions are opaque handles created by
//! `stv_distribution_new` and released by `stv_distribution_free`; every
//! fallible call returns an [`StvStatus`] and writes results through out
//! pointers; strings returned by the library are freed with
//! `stv_string_free`.

use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};

use styletv::stats::{
    chi2_upper_tail, chi_squared_homogeneity, merge_low_freq, top_n_diff, tv_distance, Stratum,
    TermDistribution,
};
use styletv::stimulus::StyleFamily;
use styletv::Error;

/// Result code of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    EmptyDistribution = 4,
    InsufficientData = 5,
}

fn status_of(error: &Error) -> StvStatus {
    match error {
        Error::InsufficientData(_) => StvStatus::InsufficientData,
        _ => StvStatus::InvalidArgument,
    }
}

/// Opaque term-count accumulator.
pub struct StvDistribution {
    counts: BTreeMap<String, u64>,
}

impl StvDistribution {
    fn build(&self, style: StyleFamily) -> Result<TermDistribution, Error> {
        TermDistribution::from_counts(
            Stratum {
                concept_id: "ffi".into(),
                style,
                model_id: "ffi".into(),
                font: None,
            },
            self.counts.clone(),
        )
    }
}

/// Creates an empty distribution handle. Never returns null.
#[no_mangle]
pub extern "C" fn stv_distribution_new() -> *mut StvDistribution {
    Box::into_raw(Box::new(StvDistribution {
        counts: BTreeMap::new(),
    }))
}

/// Releases a handle returned by `stv_distribution_new`. Null is a no-op.
///
/// # Safety
/// `dist` must be a pointer previously returned by `stv_distribution_new`
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stv_distribution_free(dist: *mut StvDistribution) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Adds `count` observations of `term` (UTF-8, NUL-terminated).
///
/// # Safety
/// `dist` must be a live handle; `term` must point to a NUL-terminated
/// string valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn stv_distribution_add_term(
    dist: *mut StvDistribution,
    term: *const c_char,
    count: u64,
) -> StvStatus {
    let Some(dist) = dist.as_mut() else {
        return StvStatus::NullPointer;
    };
    if term.is_null() {
        return StvStatus::NullPointer;
    }
    let Ok(term) = CStr::from_ptr(term).to_str() else {
        return StvStatus::InvalidUtf8;
    };
    if term.is_empty() {
        return StvStatus::InvalidArgument;
    }
    *dist.counts.entry(term.to_string()).or_default() += count;
    StvStatus::Ok
}

/// Total observation count across all terms.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stv_distribution_total(
    dist: *const StvDistribution,
    out: *mut u64,
) -> StvStatus {
    let Some(dist) = dist.as_ref() else {
        return StvStatus::NullPointer;
    };
    if out.is_null() {
        return StvStatus::NullPointer;
    }
    *out = dist.counts.values().sum();
    StvStatus::Ok
}

/// Total variation distance between two non-empty distributions, in [0, 1].
///
/// # Safety
/// `p` and `q` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stv_tv_distance(
    p: *const StvDistribution,
    q: *const StvDistribution,
    out: *mut f64,
) -> StvStatus {
    let (Some(p), Some(q)) = (p.as_ref(), q.as_ref()) else {
        return StvStatus::NullPointer;
    };
    if out.is_null() {
        return StvStatus::NullPointer;
    }
    let (Ok(p), Ok(q)) = (
        p.build(StyleFamily::Functional),
        q.build(StyleFamily::Decorative),
    ) else {
        return StvStatus::EmptyDistribution;
    };
    match tv_distance(&p, &q) {
        Ok(tv) => {
            *out = tv;
            StvStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Upper-tail probability of the chi-squared distribution.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stv_chi2_upper_tail(statistic: f64, df: u32, out: *mut f64) -> StvStatus {
    if out.is_null() {
        return StvStatus::NullPointer;
    }
    match chi2_upper_tail(statistic, df) {
        Ok(p) => {
            *out = p;
            StvStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Full two-style comparison: TV distance plus the tau-merged chi-squared
/// homogeneity test. Any out pointer may be null to skip that value.
///
/// # Safety
/// `functional` and `decorative` must be live handles; non-null out
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn stv_compare(
    functional: *const StvDistribution,
    decorative: *const StvDistribution,
    tau: u64,
    tv_out: *mut f64,
    chi2_out: *mut f64,
    df_out: *mut u32,
    p_value_out: *mut f64,
    k_effective_out: *mut usize,
) -> StvStatus {
    let (Some(f), Some(d)) = (functional.as_ref(), decorative.as_ref()) else {
        return StvStatus::NullPointer;
    };
    let (Ok(fd), Ok(dd)) = (
        f.build(StyleFamily::Functional),
        d.build(StyleFamily::Decorative),
    ) else {
        return StvStatus::EmptyDistribution;
    };
    let tv = match tv_distance(&fd, &dd) {
        Ok(tv) => tv,
        Err(e) => return status_of(&e),
    };
    let table = match merge_low_freq(fd.counts(), dd.counts(), tau) {
        Ok(table) => table,
        Err(e) => return status_of(&e),
    };
    let outcome = match chi_squared_homogeneity(&table) {
        Ok(outcome) => outcome,
        Err(e) => return status_of(&e),
    };
    if !tv_out.is_null() {
        *tv_out = tv;
    }
    if !chi2_out.is_null() {
        *chi2_out = outcome.statistic;
    }
    if !df_out.is_null() {
        *df_out = outcome.df;
    }
    if !p_value_out.is_null() {
        *p_value_out = outcome.p_value;
    }
    if !k_effective_out.is_null() {
        *k_effective_out = table.column_count();
    }
    StvStatus::Ok
}

fn join_terms(terms: &[String]) -> *mut c_char {
    let joined = terms.join("\n");
    CString::new(joined).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Terms in one top-N ranking but not the other, returned as two
/// newline-separated strings (empty string when the side is empty). Both
/// strings must be released with `stv_string_free`.
///
/// # Safety
/// Handles must be live; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn stv_top_n_diff(
    functional: *const StvDistribution,
    decorative: *const StvDistribution,
    n: usize,
    only_functional_out: *mut *mut c_char,
    only_decorative_out: *mut *mut c_char,
) -> StvStatus {
    let (Some(f), Some(d)) = (functional.as_ref(), decorative.as_ref()) else {
        return StvStatus::NullPointer;
    };
    if only_functional_out.is_null() || only_decorative_out.is_null() {
        return StvStatus::NullPointer;
    }
    let (Ok(fd), Ok(dd)) = (
        f.build(StyleFamily::Functional),
        d.build(StyleFamily::Decorative),
    ) else {
        return StvStatus::EmptyDistribution;
    };
    match top_n_diff(&fd, &dd, n) {
        Ok(diff) => {
            *only_functional_out = join_terms(&diff.only_functional);
            *only_decorative_out = join_terms(&diff.only_decorative);
            StvStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
