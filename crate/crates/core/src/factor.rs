//! Latent factor matrices, the regularized loss and its Boltzmann exponent.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::ratings::SparseRatings;

/// User factors `U` (n×k) and item factors `V` (p×k) sharing dimension k.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    u: Array2<f64>,
    v: Array2<f64>,
}

impl FactorState {
    pub fn new(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(invalid(format!(
                "user factors have {} columns, item factors {}",
                u.ncols(),
                v.ncols()
            )));
        }
        if u.ncols() == 0 {
            return Err(invalid("latent dimension must be at least 1"));
        }
        if !u.iter().chain(v.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("factor entry"));
        }
        // rows must be contiguous for the slice-based kernels
        Ok(FactorState {
            u: u.as_standard_layout().into_owned(),
            v: v.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(n_users: usize, n_items: usize, k: usize) -> Self {
        FactorState {
            u: Array2::zeros((n_users, k)),
            v: Array2::zeros((n_items, k)),
        }
    }

    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_users(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.v.nrows()
    }

    pub fn user_factors(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn item_factors(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn user_factors_mut(&mut self) -> &mut Array2<f64> {
        &mut self.u
    }

    pub fn item_factors_mut(&mut self) -> &mut Array2<f64> {
        &mut self.v
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.u, self.v)
    }

    pub(crate) fn user_row(&self, i: usize) -> &[f64] {
        self.u.row(i).to_slice().expect("standard layout")
    }

    pub(crate) fn item_row(&self, j: usize) -> &[f64] {
        self.v.row(j).to_slice().expect("standard layout")
    }

    /// Predicted rating u_iᵀv_j, unclipped.
    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.n_users() {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: user,
                size: self.n_users(),
            });
        }
        if item >= self.n_items() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: item,
                size: self.n_items(),
            });
        }
        Ok(dot(self.user_row(user), self.item_row(item)))
    }

    /// ‖U‖²_F
    pub fn frob_u(&self) -> f64 {
        self.u.iter().map(|x| x * x).sum()
    }

    /// ‖V‖²_F
    pub fn frob_v(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    pub(crate) fn check_covers(&self, ratings: &SparseRatings) -> Result<()> {
        if ratings.n_users() > self.n_users() {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: ratings.n_users() - 1,
                size: self.n_users(),
            });
        }
        if ratings.n_items() > self.n_items() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: ratings.n_items() - 1,
                size: self.n_items(),
            });
        }
        Ok(())
    }

    /// Σ_{(i,j)∈κ} (m_ij − u_iᵀv_j)². Assumes `check_covers` holds.
    pub(crate) fn squared_error(&self, ratings: &SparseRatings) -> f64 {
        let mut total = 0.0;
        for i in 0..ratings.n_users() {
            let row = self.user_row(i);
            for &(j, m) in ratings.user_ratings(i) {
                let r = m - dot(row, self.item_row(j));
                total += r * r;
            }
        }
        total
    }

    /// Data and regularizer terms of the loss for this state.
    pub fn energy(&self, ratings: &SparseRatings) -> Result<EnergyBreakdown> {
        if ratings.is_empty() {
            return Err(Error::UndefinedMetric("regularized loss"));
        }
        self.check_covers(ratings)?;
        Ok(EnergyBreakdown {
            sq_error_sum: self.squared_error(ratings),
            frob_u: self.frob_u(),
            frob_v: self.frob_v(),
            kappa_size: ratings.len(),
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularization weights λ₁ (users) and λ₂ (items).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl HyperParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(HyperParams { lambda1, lambda2 })
    }
}

/// The pieces the loss and the Boltzmann exponent are assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub sq_error_sum: f64,
    pub frob_u: f64,
    pub frob_v: f64,
    pub kappa_size: usize,
}

impl EnergyBreakdown {
    /// sq_error_sum + λ₁‖U‖² + λ₂‖V‖²
    pub fn bracket(&self, hp: &HyperParams) -> f64 {
        self.sq_error_sum + hp.lambda1 * self.frob_u + hp.lambda2 * self.frob_v
    }

    /// Regularized loss: the bracket averaged over the |κ| observed ratings.
    pub fn loss(&self, hp: &HyperParams) -> f64 {
        self.bracket(hp) / self.kappa_size as f64
    }

    pub fn mse(&self) -> f64 {
        self.sq_error_sum / self.kappa_size as f64
    }

    /// Log of the unnormalized Boltzmann density at temperature `t`.
    pub fn exponent(&self, hp: &HyperParams, t: f64) -> f64 {
        -self.bracket(hp) / (self.kappa_size as f64 * t)
    }
}

/// Regularized loss `(Σ(m_ij − u_iᵀv_j)² + λ₁‖U‖²_F + λ₂‖V‖²_F) / |κ|`.
pub fn regularized_loss(
    state: &FactorState,
    hp: &HyperParams,
    ratings: &SparseRatings,
) -> Result<(f64, EnergyBreakdown)> {
    let e = state.energy(ratings)?;
    Ok((e.loss(hp), e))
}

/// `−(Σ(m_ij − u_iᵀv_j)² + λ₁‖U‖²_F + λ₂‖V‖²_F) / (|κ|·T)`, the log of the
/// unnormalized Boltzmann posterior over (U, V).
pub fn boltzmann_exponent(
    state: &FactorState,
    hp: &HyperParams,
    ratings: &SparseRatings,
    temperature: f64,
) -> Result<f64> {
    check_temperature(temperature)?;
    Ok(state.energy(ratings)?.exponent(hp, temperature))
}

pub(crate) fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("temperature must be positive, got {t}")))
    }
}

/// Default per-entry standard deviation for [`init_factors`].
pub fn default_init_sd(k: usize) -> f64 {
    1.0 / (2.0 * k as f64).sqrt()
}

/// Random factors whose products u_iᵀv_j average 3: each entry is
/// Normal(√(3/k), 1/√(2k)). Deterministic in `seed`.
pub fn init_factors(n_users: usize, n_items: usize, k: usize, seed: u64) -> Result<FactorState> {
    init_factors_with_sd(n_users, n_items, k, default_init_sd(k), seed)
}

/// As [`init_factors`] with an explicit per-entry standard deviation.
/// `sd = 0` yields every entry exactly √(3/k).
pub fn init_factors_with_sd(
    n_users: usize,
    n_items: usize,
    k: usize,
    sd: f64,
    seed: u64,
) -> Result<FactorState> {
    if n_users == 0 || n_items == 0 || k == 0 {
        return Err(invalid(format!(
            "init_factors needs n, p, k >= 1 (got {n_users}, {n_items}, {k})"
        )));
    }
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(invalid(format!("init sd must be non-negative, got {sd}")));
    }
    let mean = (3.0 / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        mean + sd * z
    };
    let u = Array2::from_shape_fn((n_users, k), &mut draw);
    let v = Array2::from_shape_fn((n_items, k), &mut draw);
    Ok(FactorState { u, v })
}
