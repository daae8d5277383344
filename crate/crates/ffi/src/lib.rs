//! C ABI for `rjmf`.
//!
//! Objects cross the boundary as opaque pointers created by `rjmf_*_new`,
//! `rjmf_*_load` or a fitting call and released by the matching
//! `rjmf_*_free`. Every fallible function returns an [`RjmfStatus`]; on
//! failure [`rjmf_last_error`] describes the problem. Panics are caught and
//! reported as `RJMF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rjmf::anneal::{run_chain, AnnealSchedule, ChainResult, MoveKind, SamplerConfig};
use rjmf::eb::{AdamConfig, StepDirection};
use rjmf::ratings::{load_movielens, parse_movielens, rmse, split, Entry};
use rjmf::{Error, FactorState, HyperParams, SparseRatings};

/// Result codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RjmfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    DuplicateRating = 4,
    EmptyDataset = 5,
    UndefinedMetric = 6,
    InvalidArgument = 7,
    IndexOutOfRange = 8,
    SingularSystem = 9,
    NonFinite = 10,
    Io = 11,
    Panic = 12,
}

/// A parsed rating set.
pub struct RjmfRatings(SparseRatings);

/// User and item factor matrices.
pub struct RjmfModel(FactorState);

/// Outcome of one annealing chain.
pub struct RjmfChainResult(ChainResult);

/// Sampler settings passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RjmfSamplerParams {
    pub k_max: usize,
    /// 0 draws the starting dimension uniformly from 1..=k_max.
    pub initial_k: usize,
    pub step_scale: f64,
    /// Non-zero multiplies the within-move step by √T.
    pub scale_step_with_temperature: i32,
    pub t0: f64,
    pub cooling_beta: f64,
    pub tmin: f64,
    pub lambda1_init: f64,
    pub lambda2_init: f64,
    pub adam_alpha: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Non-zero selects the descent direction for the λ update.
    pub eb_descent: i32,
    pub freeze_tol: f64,
}

/// One iteration of a chain trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RjmfTraceRecord {
    pub iteration: usize,
    pub temperature: f64,
    pub k: usize,
    /// 0 birth, 1 death, 2 within.
    pub move_kind: i32,
    pub accepted: i32,
    pub train_loss: f64,
    /// NaN when the chain ran without a test set.
    pub test_rmse: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RjmfStatus {
    match e {
        Error::Parse { .. } => RjmfStatus::Parse,
        Error::DuplicateRating { .. } => RjmfStatus::DuplicateRating,
        Error::EmptyDataset => RjmfStatus::EmptyDataset,
        Error::UndefinedMetric(_) => RjmfStatus::UndefinedMetric,
        Error::InvalidArgument(_) => RjmfStatus::InvalidArgument,
        Error::IndexOutOfRange { .. } => RjmfStatus::IndexOutOfRange,
        Error::SingularSystem { .. } => RjmfStatus::SingularSystem,
        Error::NonFinite(_) => RjmfStatus::NonFinite,
        Error::Io(_) => RjmfStatus::Io,
    }
}

struct Failure(RjmfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RjmfStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RjmfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RjmfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside rjmf".to_string());
            RjmfStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rjmf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a MovieLens file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_ratings_load(
    path: *const c_char,
    out_ratings: *mut *mut RjmfRatings,
) -> RjmfStatus {
    guard(|| {
        let slot = out(out_ratings, "out_ratings")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(RjmfStatus::InvalidUtf8, "path is not UTF-8".into()))?;
        *slot = Box::into_raw(Box::new(RjmfRatings(load_movielens(path)?)));
        Ok(())
    })
}

/// Parses MovieLens text held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_ratings_parse(
    data: *const u8,
    len: usize,
    out_ratings: *mut *mut RjmfRatings,
) -> RjmfStatus {
    guard(|| {
        let slot = out(out_ratings, "out_ratings")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        *slot = Box::into_raw(Box::new(RjmfRatings(parse_movielens(bytes)?)));
        Ok(())
    })
}

/// Builds a rating set from dense 0-based indices.
///
/// # Safety
/// `users`, `items` and `values` must each point to `len` readable elements.
#[no_mangle]
pub unsafe extern "C" fn rjmf_ratings_from_triples(
    n_users: usize,
    n_items: usize,
    users: *const usize,
    items: *const usize,
    values: *const f64,
    len: usize,
    out_ratings: *mut *mut RjmfRatings,
) -> RjmfStatus {
    guard(|| {
        let slot = out(out_ratings, "out_ratings")?;
        if users.is_null() || items.is_null() || values.is_null() {
            return Err(null("triple array"));
        }
        let users = std::slice::from_raw_parts(users, len);
        let items = std::slice::from_raw_parts(items, len);
        let values = std::slice::from_raw_parts(values, len);
        let entries = (0..len)
            .map(|i| Entry {
                user: users[i],
                item: items[i],
                rating: values[i],
            })
            .collect();
        let r = SparseRatings::from_entries(n_users, n_items, entries)?;
        *slot = Box::into_raw(Box::new(RjmfRatings(r)));
        Ok(())
    })
}

/// # Safety
/// `ratings` must be NULL or a pointer obtained from this library.
#[no_mangle]
pub unsafe extern "C" fn rjmf_ratings_free(ratings: *mut RjmfRatings) {
    if !ratings.is_null() {
        drop(Box::from_raw(ratings));
    }
}

/// Number of ratings; 0 for NULL.
///
/// # Safety
/// `ratings` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rjmf_ratings_len(ratings: *const RjmfRatings) -> usize {
    ratings.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `ratings` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rjmf_ratings_n_users(ratings: *const RjmfRatings) -> usize {
    ratings.as_ref().map_or(0, |r| r.0.n_users())
}

/// # Safety
/// `ratings` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rjmf_ratings_n_items(ratings: *const RjmfRatings) -> usize {
    ratings.as_ref().map_or(0, |r| r.0.n_items())
}

/// Seeded uniform train/test partition.
///
/// # Safety
/// `ratings` must be a live handle; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_split(
    ratings: *const RjmfRatings,
    fraction: f64,
    seed: u64,
    out_train: *mut *mut RjmfRatings,
    out_test: *mut *mut RjmfRatings,
) -> RjmfStatus {
    guard(|| {
        let r = as_ref(ratings, "ratings")?;
        let train = out(out_train, "out_train")?;
        let test = out(out_test, "out_test")?;
        let s = split(&r.0, fraction, seed)?;
        *train = Box::into_raw(Box::new(RjmfRatings(s.train)));
        *test = Box::into_raw(Box::new(RjmfRatings(s.test)));
        Ok(())
    })
}

/// Fits ALS with fixed k and λ. An empty `test` may be passed as NULL.
///
/// # Safety
/// `train` must be a live handle, `test` NULL or a live handle, and
/// `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_als_fit(
    train: *const RjmfRatings,
    test: *const RjmfRatings,
    lambda1: f64,
    lambda2: f64,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    out_model: *mut *mut RjmfModel,
) -> RjmfStatus {
    guard(|| {
        let train = as_ref(train, "train")?;
        let slot = out(out_model, "out_model")?;
        let hp = HyperParams { lambda1, lambda2 };
        let empty;
        let test = match test.as_ref() {
            Some(t) => &t.0,
            None => {
                empty = split(&train.0, 1.0, 0)?.test;
                &empty
            }
        };
        let (state, _) = rjmf::als::als_fit(&train.0, test, &hp, k, seed, max_iters, tol)?;
        *slot = Box::into_raw(Box::new(RjmfModel(state)));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a pointer obtained from this library.
#[no_mangle]
pub unsafe extern "C" fn rjmf_model_free(model: *mut RjmfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Latent dimension; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rjmf_model_k(model: *const RjmfModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.k())
}

/// Predicted rating for dense indices (user, item).
///
/// # Safety
/// `model` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_model_predict(
    model: *const RjmfModel,
    user: usize,
    item: usize,
    out_value: *mut f64,
) -> RjmfStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let slot = out(out_value, "out_value")?;
        *slot = m.0.predict(user, item)?;
        Ok(())
    })
}

/// RMSE of `model` over `ratings`.
///
/// # Safety
/// Both handles must be live and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_model_rmse(
    model: *const RjmfModel,
    ratings: *const RjmfRatings,
    out_value: *mut f64,
) -> RjmfStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let r = as_ref(ratings, "ratings")?;
        let slot = out(out_value, "out_value")?;
        *slot = rmse(&m.0, &r.0)?;
        Ok(())
    })
}

/// Library defaults for the sampler.
#[no_mangle]
pub extern "C" fn rjmf_sampler_params_default() -> RjmfSamplerParams {
    let c = SamplerConfig::default();
    RjmfSamplerParams {
        k_max: c.k_max,
        initial_k: c.initial_k.unwrap_or(0),
        step_scale: c.step_scale,
        scale_step_with_temperature: c.scale_step_with_temperature as i32,
        t0: c.schedule.t0,
        cooling_beta: c.schedule.beta,
        tmin: c.schedule.tmin,
        lambda1_init: c.hyper_init.lambda1,
        lambda2_init: c.hyper_init.lambda2,
        adam_alpha: c.adam.alpha,
        adam_beta1: c.adam.beta1,
        adam_beta2: c.adam.beta2,
        adam_eps: c.adam.eps,
        eb_descent: (c.adam.direction == StepDirection::Descent) as i32,
        freeze_tol: c.freeze_tol,
    }
}

fn sampler_config(p: &RjmfSamplerParams) -> SamplerConfig {
    SamplerConfig {
        k_max: p.k_max,
        initial_k: (p.initial_k != 0).then_some(p.initial_k),
        step_scale: p.step_scale,
        scale_step_with_temperature: p.scale_step_with_temperature != 0,
        schedule: AnnealSchedule {
            t0: p.t0,
            beta: p.cooling_beta,
            tmin: p.tmin,
        },
        hyper_init: HyperParams {
            lambda1: p.lambda1_init,
            lambda2: p.lambda2_init,
        },
        adam: AdamConfig {
            alpha: p.adam_alpha,
            beta1: p.adam_beta1,
            beta2: p.adam_beta2,
            eps: p.adam_eps,
            direction: if p.eb_descent != 0 {
                StepDirection::Descent
            } else {
                StepDirection::Ascent
            },
        },
        freeze_tol: p.freeze_tol,
    }
}

/// Runs one annealing chain. `test` may be NULL.
///
/// # Safety
/// `params` and `train` must be valid, `test` NULL or a live handle, and
/// `out_result` writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_run_chain(
    params: *const RjmfSamplerParams,
    train: *const RjmfRatings,
    test: *const RjmfRatings,
    seed: u64,
    out_result: *mut *mut RjmfChainResult,
) -> RjmfStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        let train = as_ref(train, "train")?;
        let slot = out(out_result, "out_result")?;
        let empty;
        let test = match test.as_ref() {
            Some(t) => &t.0,
            None => {
                empty = split(&train.0, 1.0, 0)?.test;
                &empty
            }
        };
        let result = run_chain(&sampler_config(p), &train.0, test, seed)?;
        *slot = Box::into_raw(Box::new(RjmfChainResult(result)));
        Ok(())
    })
}

/// # Safety
/// `result` must be NULL or a pointer obtained from this library.
#[no_mangle]
pub unsafe extern "C" fn rjmf_chain_result_free(result: *mut RjmfChainResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of trace records; 0 for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rjmf_chain_result_len(result: *const RjmfChainResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.trace.len())
}

/// Copies trace record `index` into `out_record`.
///
/// # Safety
/// `result` must be a live handle and `out_record` writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_chain_result_record(
    result: *const RjmfChainResult,
    index: usize,
    out_record: *mut RjmfTraceRecord,
) -> RjmfStatus {
    guard(|| {
        let r = as_ref(result, "result")?;
        let slot = out(out_record, "out_record")?;
        let rec = r.0.trace.get(index).ok_or_else(|| {
            Failure(
                RjmfStatus::IndexOutOfRange,
                format!("record {index} out of range (size {})", r.0.trace.len()),
            )
        })?;
        *slot = RjmfTraceRecord {
            iteration: rec.iteration,
            temperature: rec.temperature,
            k: rec.k,
            move_kind: match rec.move_kind {
                MoveKind::Birth => 0,
                MoveKind::Death => 1,
                MoveKind::Within => 2,
            },
            accepted: rec.accepted as i32,
            train_loss: rec.train_loss,
            test_rmse: rec.test_rmse.unwrap_or(f64::NAN),
            lambda1: rec.lambda1,
            lambda2: rec.lambda2,
        };
        Ok(())
    })
}

/// Final hyperparameters and the freeze iteration (-1 if never frozen).
///
/// # Safety
/// `result` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_chain_result_hyper(
    result: *const RjmfChainResult,
    out_lambda1: *mut f64,
    out_lambda2: *mut f64,
    out_frozen_at: *mut i64,
) -> RjmfStatus {
    guard(|| {
        let r = as_ref(result, "result")?;
        let l1 = out(out_lambda1, "out_lambda1")?;
        let l2 = out(out_lambda2, "out_lambda2")?;
        let f = out(out_frozen_at, "out_frozen_at")?;
        *l1 = r.0.hyper.lambda1;
        *l2 = r.0.hyper.lambda2;
        *f = r.0.frozen_at.map_or(-1, |i| i as i64);
        Ok(())
    })
}

/// A copy of the lowest-loss state and its loss.
///
/// # Safety
/// `result` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rjmf_chain_result_best(
    result: *const RjmfChainResult,
    out_model: *mut *mut RjmfModel,
    out_loss: *mut f64,
) -> RjmfStatus {
    guard(|| {
        let r = as_ref(result, "result")?;
        let m = out(out_model, "out_model")?;
        let l = out(out_loss, "out_loss")?;
        *m = Box::into_raw(Box::new(RjmfModel(r.0.best_state.clone())));
        *l = r.0.best_loss;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let s = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(s, RjmfStatus::Panic);
        let msg = unsafe { CStr::from_ptr(rjmf_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "panic inside rjmf");
    }

    #[test]
    fn error_message_survives_interior_nul() {
        set_last_error("a\0b".into());
        let msg = unsafe { CStr::from_ptr(rjmf_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "a b");
    }

    #[test]
    fn params_round_trip_through_config() {
        let mut p = rjmf_sampler_params_default();
        p.initial_k = 4;
        p.eb_descent = 1;
        p.scale_step_with_temperature = 1;
        let c = sampler_config(&p);
        assert_eq!(c.initial_k, Some(4));
        assert_eq!(c.adam.direction, StepDirection::Descent);
        assert!(c.scale_step_with_temperature);
        assert_eq!(
            sampler_config(&rjmf_sampler_params_default()),
            SamplerConfig::default()
        );
    }
}
