//! Alternating regularized least squares.
//!
//! Each half-step solves, for every user (resp. item) independently, the
//! k×k ridge system `(V_κᵢᵀV_κᵢ + λ₁I)uᵢ = V_κᵢᵀm_κᵢ` by Cholesky. A half-step
//! is the exact minimizer of the regularized loss over one factor matrix,
//! so the loss never increases across iterations.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::factor::{init_factors, regularized_loss, FactorState, HyperParams};
use crate::ratings::{rmse, SparseRatings};

/// Relative pivot floor below which a Gram matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsRecord {
    pub iteration: usize,
    pub train_loss: f64,
    /// `None` when the test set is empty.
    pub test_rmse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlsTrace {
    pub records: Vec<AlsRecord>,
}

/// Solves `(Σ f fᵀ + ridge·I) x = Σ m f` over the observed `(other, m)` pairs.
fn ridge_solve(
    other: &Array2<f64>,
    observed: &[(usize, f64)],
    ridge: f64,
    kind: &'static str,
    index: usize,
) -> Result<Vec<f64>> {
    let k = other.ncols();
    if observed.is_empty() {
        return Ok(vec![0.0; k]);
    }
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for &(j, m) in observed {
        let f = other.row(j);
        for a in 0..k {
            rhs[a] += m * f[a];
            for b in 0..=a {
                gram[(a, b)] += f[a] * f[b];
            }
        }
    }
    for a in 0..k {
        gram[(a, a)] += ridge;
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let chol = gram
        .cholesky()
        .ok_or(Error::SingularSystem { kind, index })?;
    if chol
        .l_dirty()
        .diagonal()
        .iter()
        .any(|d| d * d <= PIVOT_TOL * scale)
    {
        return Err(Error::SingularSystem { kind, index });
    }
    Ok(chol.solve(&rhs).iter().copied().collect())
}

fn check_hp(hp: &HyperParams) -> Result<()> {
    if hp.lambda1 >= 0.0 && hp.lambda2 >= 0.0 && hp.lambda1.is_finite() && hp.lambda2.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!(
            "ALS needs finite non-negative lambdas, got {hp:?}"
        )))
    }
}

/// Re-solves every user row with the item factors held fixed. Users with no
/// ratings get a zero row.
pub fn update_users(
    state: &FactorState,
    hp: &HyperParams,
    train: &SparseRatings,
) -> Result<FactorState> {
    check_hp(hp)?;
    state.check_covers(train)?;
    let v = state.item_factors();
    let mut u = Array2::zeros(state.user_factors().raw_dim());
    for i in 0..train.n_users() {
        let row = ridge_solve(v, train.user_ratings(i), hp.lambda1, "user", i)?;
        u.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    FactorState::new(u, v.clone())
}

/// Re-solves every item row with the user factors held fixed. Items with no
/// ratings get a zero row.
pub fn update_items(
    state: &FactorState,
    hp: &HyperParams,
    train: &SparseRatings,
) -> Result<FactorState> {
    check_hp(hp)?;
    state.check_covers(train)?;
    let u = state.user_factors();
    let mut v = Array2::zeros(state.item_factors().raw_dim());
    for j in 0..train.n_items() {
        let row = ridge_solve(u, train.item_ratings(j), hp.lambda2, "item", j)?;
        v.row_mut(j).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    FactorState::new(u.clone(), v)
}

/// Runs ALS from `start` until the train loss changes by less than `tol`
/// between iterations or `max_iters` is reached.
pub fn als_fit_from(
    start: FactorState,
    train: &SparseRatings,
    test: &SparseRatings,
    hp: &HyperParams,
    max_iters: usize,
    tol: f64,
) -> Result<(FactorState, AlsTrace)> {
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tol must be positive, got {tol}")));
    }
    let mut state = start;
    let mut prev = regularized_loss(&state, hp, train)?.0;
    let mut trace = AlsTrace::default();
    for iteration in 1..=max_iters {
        state = update_users(&state, hp, train)?;
        state = update_items(&state, hp, train)?;
        let loss = regularized_loss(&state, hp, train)?.0;
        let test_rmse = if test.is_empty() {
            None
        } else {
            Some(rmse(&state, test)?)
        };
        trace.records.push(AlsRecord {
            iteration,
            train_loss: loss,
            test_rmse,
        });
        if (prev - loss).abs() < tol {
            break;
        }
        prev = loss;
    }
    Ok((state, trace))
}

/// [`als_fit_from`] starting at `init_factors(n, p, k, seed)`.
pub fn als_fit(
    train: &SparseRatings,
    test: &SparseRatings,
    hp: &HyperParams,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<(FactorState, AlsTrace)> {
    let start = init_factors(train.n_users(), train.n_items(), k, seed)?;
    als_fit_from(start, train, test, hp, max_iters, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::Entry;
    use ndarray::array;

    fn single(rating: f64) -> SparseRatings {
        SparseRatings::from_entries(
            1,
            1,
            vec![Entry {
                user: 0,
                item: 0,
                rating,
            }],
        )
        .unwrap()
    }

    #[test]
    fn scalar_least_squares() {
        let r = single(4.0);
        let s = FactorState::new(array![[0.0]], array![[1.0]]).unwrap();
        let hp = HyperParams {
            lambda1: 0.0,
            lambda2: 0.0,
        };
        let out = update_users(&s, &hp, &r).unwrap();
        assert!((out.user_factors()[[0, 0]] - 4.0).abs() < 1e-12);

        let s = FactorState::new(array![[2.0]], array![[0.0]]).unwrap();
        let out = update_items(&s, &hp, &r).unwrap();
        assert!((out.item_factors()[[0, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let r = single(4.0);
        let s = FactorState::new(array![[1.0, 2.0]], array![[1.0, -1.0]]).unwrap();
        let hp = HyperParams {
            lambda1: 1e12,
            lambda2: 1e12,
        };
        let u = update_users(&s, &hp, &r).unwrap();
        assert!(u.user_factors().iter().all(|x| x.abs() < 1e-9));
        let v = update_items(&s, &hp, &r).unwrap();
        assert!(v.item_factors().iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn unregularized_rank_deficient_system_is_singular() {
        // k = 2 but a single observation: Gram matrix has rank 1
        let r = single(3.0);
        let s = FactorState::new(array![[0.0, 0.0]], array![[1.0, 1.0]]).unwrap();
        let hp = HyperParams {
            lambda1: 0.0,
            lambda2: 0.0,
        };
        let err = update_users(&s, &hp, &r).unwrap_err();
        assert!(matches!(
            err,
            Error::SingularSystem {
                kind: "user",
                index: 0
            }
        ));
    }

    #[test]
    fn unrated_rows_become_zero() {
        let r = SparseRatings::from_entries(
            2,
            2,
            vec![Entry {
                user: 0,
                item: 0,
                rating: 2.0,
            }],
        )
        .unwrap();
        let s = FactorState::new(array![[1.0], [5.0]], array![[1.0], [7.0]]).unwrap();
        let hp = HyperParams {
            lambda1: 0.0,
            lambda2: 0.0,
        };
        let u = update_users(&s, &hp, &r).unwrap();
        assert_eq!(u.user_factors()[[1, 0]], 0.0);
        let v = update_items(&s, &hp, &r).unwrap();
        assert_eq!(v.item_factors()[[1, 0]], 0.0);
    }

    #[test]
    fn fit_validates_arguments() {
        let r = single(4.0);
        let hp = HyperParams::new(1.0, 1.0).unwrap();
        assert!(als_fit(&r, &r, &hp, 1, 0, 0, 1e-6).is_err());
        assert!(als_fit(&r, &r, &hp, 1, 0, 5, 0.0).is_err());
    }
}
