//! C ABI over the streaming sketches.
//!
//! Every sketch is an opaque handle created by an `lsk_*_new` function and
//! released by the matching `lsk_*_free`. Fallible calls return an
//! [`LskStatus`]; query results come back through out-pointers. Handles are
//! single-writer: never update one handle from two threads at once.
//! Matrices cross the boundary as row-major `double` buffers.

use std::ffi::c_char;

use lasketch::fd::{
    FrequentDirections, LearnedFrequentDirections, ProjectedSide, RobustLfd,
};
use lasketch::freq::{CountSketch, CsMode, Learned, MisraGries};
use lasketch::linalg::DenseMatrix;
use lasketch::oracle::{DirectionOracle, FrequencyOracle};
use lasketch::Error;

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LskStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A size, threshold or constant was out of range.
    InvalidArgument = 2,
    /// A row or query vector had the wrong length.
    DimensionMismatch = 3,
    /// A value was NaN or infinite.
    NonFinite = 4,
    /// An input matrix did not have full column rank / orthonormal columns.
    RankDeficient = 5,
    /// The output buffer was too small.
    BufferTooSmall = 6,
}

fn status_of(err: &Error) -> LskStatus {
    match err {
        Error::DimensionMismatch(_) => LskStatus::DimensionMismatch,
        Error::NonFinite(_) => LskStatus::NonFinite,
        Error::RankDeficient(_) => LskStatus::RankDeficient,
        _ => LskStatus::InvalidArgument,
    }
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn lsk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ── Misra-Gries ─────────────────────────────────────────────────────

pub struct LskMisraGries(MisraGries);

/// Creates a counter summary with `capacity` buckets and eviction threshold
/// `threshold` (pass `threshold == capacity` for the common configuration).
/// Returns null on invalid parameters.
#[no_mangle]
pub extern "C" fn lsk_mg_new(capacity: usize, threshold: usize) -> *mut LskMisraGries {
    match MisraGries::new(capacity, threshold) {
        Ok(mg) => Box::into_raw(Box::new(LskMisraGries(mg))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `handle` must come from [`lsk_mg_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lsk_mg_free(handle: *mut LskMisraGries) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// # Safety
/// `handle` must be a live handle from [`lsk_mg_new`].
#[no_mangle]
pub unsafe extern "C" fn lsk_mg_update(handle: *mut LskMisraGries, item: u64) -> LskStatus {
    let Some(mg) = (unsafe { handle.as_mut() }) else {
        return LskStatus::NullArgument;
    };
    mg.0.update(item);
    LskStatus::Ok
}

/// Estimated frequency; zero for absent elements or a null handle.
///
/// # Safety
/// `handle` must be a live handle from [`lsk_mg_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn lsk_mg_estimate(handle: *const LskMisraGries, item: u64) -> u64 {
    match unsafe { handle.as_ref() } {
        Some(mg) => mg.0.estimate(item),
        None => 0,
    }
}

/// Memory footprint in words (two per bucket).
///
/// # Safety
/// `handle` must be a live handle from [`lsk_mg_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn lsk_mg_space_words(handle: *const LskMisraGries) -> u64 {
    match unsafe { handle.as_ref() } {
        Some(mg) => 2 * mg.0.capacity() as u64,
        None => 0,
    }
}

// ── Learned Misra-Gries ─────────────────────────────────────────────

pub struct LskLearnedMisraGries(Learned<MisraGries>);

/// Creates a learned summary: the `ids_len` elements at `ids` are counted
/// exactly, everything else goes to an inner summary of `inner_capacity`
/// buckets. Returns null on invalid parameters or duplicate ids.
///
/// # Safety
/// `ids` must point to `ids_len` readable `uint64_t`s.
#[no_mangle]
pub unsafe extern "C" fn lsk_lmg_new(
    ids: *const u64,
    ids_len: usize,
    inner_capacity: usize,
) -> *mut LskLearnedMisraGries {
    if ids.is_null() && ids_len > 0 {
        return std::ptr::null_mut();
    }
    let ids = unsafe { std::slice::from_raw_parts(ids, ids_len) };
    let oracle = match FrequencyOracle::from_ids(ids.to_vec()) {
        Ok(o) => o,
        Err(_) => return std::ptr::null_mut(),
    };
    let inner = match MisraGries::with_capacity(inner_capacity) {
        Ok(mg) => mg,
        Err(_) => return std::ptr::null_mut(),
    };
    Box::into_raw(Box::new(LskLearnedMisraGries(Learned::new(&oracle, inner))))
}

/// # Safety
/// `handle` must come from [`lsk_lmg_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lsk_lmg_free(handle: *mut LskLearnedMisraGries) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// # Safety
/// `handle` must be a live handle from [`lsk_lmg_new`].
#[no_mangle]
pub unsafe extern "C" fn lsk_lmg_update(
    handle: *mut LskLearnedMisraGries,
    item: u64,
) -> LskStatus {
    let Some(lmg) = (unsafe { handle.as_mut() }) else {
        return LskStatus::NullArgument;
    };
    lmg.0.update(item);
    LskStatus::Ok
}

/// # Safety
/// `handle` must be a live handle from [`lsk_lmg_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn lsk_lmg_estimate(
    handle: *const LskLearnedMisraGries,
    item: u64,
) -> f64 {
    match unsafe { handle.as_ref() } {
        Some(lmg) => lmg.0.estimate(item),
        None => 0.0,
    }
}

// ── CountSketch ─────────────────────────────────────────────────────

pub struct LskCountSketch(CountSketch);

/// Creates a signed counter table with `rows × width` cells. Pass a
/// negative `truncate_c` for the plain median estimator; a non-negative
/// value floors estimates below `truncate_c·n/width` to zero.
#[no_mangle]
pub extern "C" fn lsk_cs_new(
    rows: usize,
    width: usize,
    seed: u64,
    truncate_c: f64,
) -> *mut LskCountSketch {
    let mode = if truncate_c < 0.0 {
        CsMode::Plain
    } else {
        CsMode::Truncated { c: truncate_c }
    };
    match CountSketch::new(rows, width, seed, mode) {
        Ok(cs) => Box::into_raw(Box::new(LskCountSketch(cs))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `handle` must come from [`lsk_cs_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lsk_cs_free(handle: *mut LskCountSketch) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// # Safety
/// `handle` must be a live handle from [`lsk_cs_new`].
#[no_mangle]
pub unsafe extern "C" fn lsk_cs_update(handle: *mut LskCountSketch, item: u64) -> LskStatus {
    let Some(cs) = (unsafe { handle.as_mut() }) else {
        return LskStatus::NullArgument;
    };
    cs.0.update(item);
    LskStatus::Ok
}

/// # Safety
/// `handle` must be a live handle from [`lsk_cs_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn lsk_cs_estimate(handle: *const LskCountSketch, item: u64) -> f64 {
    match unsafe { handle.as_ref() } {
        Some(cs) => cs.0.estimate(item),
        None => 0.0,
    }
}

// ── Frequent Directions ─────────────────────────────────────────────

pub struct LskFrequentDirections(FrequentDirections);

/// Creates a matrix sketch with `ell` row slots, shrink threshold `tau`
/// (`1 ≤ tau ≤ ell`) and row dimension `dim`. Returns null on invalid
/// parameters.
#[no_mangle]
pub extern "C" fn lsk_fd_new(ell: usize, tau: usize, dim: usize) -> *mut LskFrequentDirections {
    match FrequentDirections::new(ell, tau, dim) {
        Ok(fd) => Box::into_raw(Box::new(LskFrequentDirections(fd))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `handle` must come from [`lsk_fd_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lsk_fd_free(handle: *mut LskFrequentDirections) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Appends one row of length `len` (must equal the sketch dimension).
///
/// # Safety
/// `handle` must be live; `row` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn lsk_fd_update(
    handle: *mut LskFrequentDirections,
    row: *const f64,
    len: usize,
) -> LskStatus {
    let Some(fd) = (unsafe { handle.as_mut() }) else {
        return LskStatus::NullArgument;
    };
    if row.is_null() {
        return LskStatus::NullArgument;
    }
    let row = unsafe { std::slice::from_raw_parts(row, len) };
    match fd.0.update(row) {
        Ok(()) => LskStatus::Ok,
        Err(e) => status_of(&e),
    }
}

/// Direction-frequency estimate `‖Bx‖²` written to `out`.
///
/// # Safety
/// `handle` must be live; `x` must point to `len` readable doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsk_fd_query(
    handle: *const LskFrequentDirections,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> LskStatus {
    let Some(fd) = (unsafe { handle.as_ref() }) else {
        return LskStatus::NullArgument;
    };
    if x.is_null() || out.is_null() {
        return LskStatus::NullArgument;
    }
    let x = unsafe { std::slice::from_raw_parts(x, len) };
    match fd.0.query(x) {
        Ok(v) => {
            unsafe { *out = v };
            LskStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Number of (nonzero) rows the sketch currently holds.
///
/// # Safety
/// `handle` must be a live handle from [`lsk_fd_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn lsk_fd_result_rows(handle: *const LskFrequentDirections) -> usize {
    match unsafe { handle.as_ref() } {
        Some(fd) => fd.0.fill(),
        None => 0,
    }
}

/// Copies the current sketch rows (row-major, `rows × dim` doubles) into
/// `out`; `out_len` is the buffer capacity in doubles.
///
/// # Safety
/// `handle` must be live; `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lsk_fd_result_copy(
    handle: *const LskFrequentDirections,
    out: *mut f64,
    out_len: usize,
) -> LskStatus {
    let Some(fd) = (unsafe { handle.as_ref() }) else {
        return LskStatus::NullArgument;
    };
    if out.is_null() {
        return LskStatus::NullArgument;
    }
    let b = fd.0.result();
    let need = b.rows() * b.cols();
    if out_len < need {
        return LskStatus::BufferTooSmall;
    }
    let dst = unsafe { std::slice::from_raw_parts_mut(out, need) };
    dst.copy_from_slice(b.data());
    LskStatus::Ok
}

// ── Learned Frequent Directions ─────────────────────────────────────

pub struct LskLearnedFd(LearnedFrequentDirections);

fn oracle_from_raw(
    predictions: *const f64,
    dim: usize,
    k_h: usize,
) -> Option<DirectionOracle> {
    if predictions.is_null() {
        return None;
    }
    let data = unsafe { std::slice::from_raw_parts(predictions, dim * k_h) };
    let p = DenseMatrix::new(dim, k_h, data.to_vec()).ok()?;
    DirectionOracle::from_matrix(p).ok()
}

/// Creates a learned matrix sketch with `m` row slots from a row-major
/// `dim × k_h` matrix of orthonormal predicted directions (entry `(i, j)` at
/// `predictions[i*k_h + j]`). Requires `2·k_h < m`. Returns null on invalid
/// input.
///
/// # Safety
/// `predictions` must point to `dim·k_h` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn lsk_lfd_new(
    predictions: *const f64,
    dim: usize,
    k_h: usize,
    m: usize,
) -> *mut LskLearnedFd {
    let Some(oracle) = oracle_from_raw(predictions, dim, k_h) else {
        return std::ptr::null_mut();
    };
    match LearnedFrequentDirections::new(oracle, m, ProjectedSide::CovarianceTracker) {
        Ok(lfd) => Box::into_raw(Box::new(LskLearnedFd(lfd))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `handle` must come from [`lsk_lfd_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lsk_lfd_free(handle: *mut LskLearnedFd) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// # Safety
/// `handle` must be live; `row` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn lsk_lfd_update(
    handle: *mut LskLearnedFd,
    row: *const f64,
    len: usize,
) -> LskStatus {
    let Some(lfd) = (unsafe { handle.as_mut() }) else {
        return LskStatus::NullArgument;
    };
    if row.is_null() {
        return LskStatus::NullArgument;
    }
    let row = unsafe { std::slice::from_raw_parts(row, len) };
    match lfd.0.update(row) {
        Ok(()) => LskStatus::Ok,
        Err(e) => status_of(&e),
    }
}

/// # Safety
/// `handle` must be live; `x` must point to `len` readable doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsk_lfd_query(
    handle: *const LskLearnedFd,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> LskStatus {
    let Some(lfd) = (unsafe { handle.as_ref() }) else {
        return LskStatus::NullArgument;
    };
    if x.is_null() || out.is_null() {
        return LskStatus::NullArgument;
    }
    let x = unsafe { std::slice::from_raw_parts(x, len) };
    match lfd.0.query(x) {
        Ok(v) => {
            unsafe { *out = v };
            LskStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

// ── Robust learned Frequent Directions ──────────────────────────────

pub struct LskRobustLfd(RobustLfd);

/// Creates the gated robust sketch (plain + learned + residual estimator)
/// from the same prediction layout as [`lsk_lfd_new`].
///
/// # Safety
/// `predictions` must point to `dim·k_h` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn lsk_rlfd_new(
    predictions: *const f64,
    dim: usize,
    k_h: usize,
    m: usize,
) -> *mut LskRobustLfd {
    let Some(oracle) = oracle_from_raw(predictions, dim, k_h) else {
        return std::ptr::null_mut();
    };
    match RobustLfd::new(oracle, m, ProjectedSide::CovarianceTracker) {
        Ok(r) => Box::into_raw(Box::new(LskRobustLfd(r))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `handle` must come from [`lsk_rlfd_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lsk_rlfd_free(handle: *mut LskRobustLfd) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// # Safety
/// `handle` must be live; `row` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn lsk_rlfd_update(
    handle: *mut LskRobustLfd,
    row: *const f64,
    len: usize,
) -> LskStatus {
    let Some(r) = (unsafe { handle.as_mut() }) else {
        return LskStatus::NullArgument;
    };
    if row.is_null() {
        return LskStatus::NullArgument;
    }
    let row = unsafe { std::slice::from_raw_parts(row, len) };
    match r.0.update(row) {
        Ok(()) => LskStatus::Ok,
        Err(e) => status_of(&e),
    }
}

/// Gated direction-frequency estimate for a unit vector `x`.
///
/// # Safety
/// `handle` must be live; `x` must point to `len` readable doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsk_rlfd_query(
    handle: *const LskRobustLfd,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> LskStatus {
    let Some(r) = (unsafe { handle.as_ref() }) else {
        return LskStatus::NullArgument;
    };
    if x.is_null() || out.is_null() {
        return LskStatus::NullArgument;
    }
    let x = unsafe { std::slice::from_raw_parts(x, len) };
    match r.0.query(x) {
        Ok(v) => {
            unsafe { *out = v };
            LskStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        let ptr = lsk_version();
        let s = unsafe { std::ffi::CStr::from_ptr(ptr) };
        assert_eq!(s.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn mg_round_trip_through_the_abi() {
        let h = lsk_mg_new(2, 2);
        assert!(!h.is_null());
        unsafe {
            for item in [1u64, 1, 2, 3] {
                assert_eq!(lsk_mg_update(h, item), LskStatus::Ok);
            }
            assert_eq!(lsk_mg_estimate(h, 1), 1);
            assert_eq!(lsk_mg_estimate(h, 2), 0);
            assert_eq!(lsk_mg_estimate(h, 3), 0);
            assert_eq!(lsk_mg_space_words(h), 4);
            lsk_mg_free(h);
        }
    }

    #[test]
    fn mg_rejects_bad_parameters() {
        assert!(lsk_mg_new(0, 0).is_null());
        assert!(lsk_mg_new(4, 5).is_null());
        unsafe {
            assert_eq!(
                lsk_mg_update(std::ptr::null_mut(), 1),
                LskStatus::NullArgument
            );
            assert_eq!(lsk_mg_estimate(std::ptr::null(), 1), 0);
        }
    }

    #[test]
    fn lmg_counts_predictions_exactly() {
        let ids = [1u64, 2];
        let h = unsafe { lsk_lmg_new(ids.as_ptr(), ids.len(), 2) };
        assert!(!h.is_null());
        unsafe {
            for item in [1u64, 2, 1, 9, 9, 9] {
                lsk_lmg_update(h, item);
            }
            assert_eq!(lsk_lmg_estimate(h, 1), 2.0);
            assert_eq!(lsk_lmg_estimate(h, 2), 1.0);
            assert_eq!(lsk_lmg_estimate(h, 9), 3.0);
            lsk_lmg_free(h);
        }
    }

    #[test]
    fn cs_truncation_flag() {
        let plain = lsk_cs_new(3, 8, 7, -1.0);
        let floored = lsk_cs_new(3, 8, 7, 100.0);
        assert!(!plain.is_null() && !floored.is_null());
        unsafe {
            for _ in 0..32 {
                lsk_cs_update(plain, 1);
                lsk_cs_update(floored, 1);
            }
            // One distinct item: the plain estimate is exact, while the
            // aggressive floor (100·32/8 = 400) zeroes it.
            assert_eq!(lsk_cs_estimate(plain, 1), 32.0);
            assert_eq!(lsk_cs_estimate(floored, 1), 0.0);
            lsk_cs_free(plain);
            lsk_cs_free(floored);
        }
    }

    #[test]
    fn fd_update_query_result() {
        let d = 3usize;
        let h = lsk_fd_new(4, 2, d);
        assert!(!h.is_null());
        unsafe {
            let rows = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
            for r in &rows {
                assert_eq!(lsk_fd_update(h, r.as_ptr(), d), LskStatus::Ok);
            }
            assert_eq!(
                lsk_fd_update(h, [1.0f64].as_ptr(), 1),
                LskStatus::DimensionMismatch
            );
            let bad = [f64::NAN, 0.0, 0.0];
            assert_eq!(lsk_fd_update(h, bad.as_ptr(), d), LskStatus::NonFinite);

            let mut out = 0.0;
            let x = [0.0, 1.0, 0.0];
            assert_eq!(lsk_fd_query(h, x.as_ptr(), d, &mut out), LskStatus::Ok);
            assert!((out - 4.0).abs() < 1e-12);

            let rows_now = lsk_fd_result_rows(h);
            assert_eq!(rows_now, 2);
            let mut buf = vec![0.0; rows_now * d];
            assert_eq!(
                lsk_fd_result_copy(h, buf.as_mut_ptr(), buf.len()),
                LskStatus::Ok
            );
            assert_eq!(&buf[..3], &[1.0, 0.0, 0.0]);
            let mut tiny = vec![0.0; 1];
            assert_eq!(
                lsk_fd_result_copy(h, tiny.as_mut_ptr(), tiny.len()),
                LskStatus::BufferTooSmall
            );
            lsk_fd_free(h);
        }
    }

    #[test]
    fn lfd_and_robust_handles() {
        let d = 4usize;
        let k_h = 1usize;
        // e1 as the single predicted direction, row-major d×k_h.
        let p = [1.0, 0.0, 0.0, 0.0];
        unsafe {
            let lfd = lsk_lfd_new(p.as_ptr(), d, k_h, 6);
            assert!(!lfd.is_null());
            let row = [2.0, 1.0, 0.0, 0.0];
            assert_eq!(lsk_lfd_update(lfd, row.as_ptr(), d), LskStatus::Ok);
            let mut out = 0.0;
            let e1 = [1.0, 0.0, 0.0, 0.0];
            assert_eq!(lsk_lfd_query(lfd, e1.as_ptr(), d, &mut out), LskStatus::Ok);
            assert!((out - 4.0).abs() < 1e-9);
            lsk_lfd_free(lfd);

            let r = lsk_rlfd_new(p.as_ptr(), d, k_h, 6);
            assert!(!r.is_null());
            assert_eq!(lsk_rlfd_update(r, row.as_ptr(), d), LskStatus::Ok);
            let mut out = 0.0;
            assert_eq!(lsk_rlfd_query(r, e1.as_ptr(), d, &mut out), LskStatus::Ok);
            assert!((out - 4.0).abs() < 1e-9);
            // Non-unit query is rejected.
            let bad = [1.0, 1.0, 0.0, 0.0];
            assert_eq!(
                lsk_rlfd_query(r, bad.as_ptr(), d, &mut out),
                LskStatus::InvalidArgument
            );
            lsk_rlfd_free(r);
        }
        // Non-orthonormal predictions are rejected at construction.
        let skewed = [1.0, 1.0, 0.0, 0.0];
        unsafe {
            assert!(lsk_lfd_new(skewed.as_ptr(), d, k_h, 6).is_null());
        }
    }
}
