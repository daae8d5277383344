//! Empirical-Bayes adaptation of λ₁, λ₂ with Adam-scaled steps.
//!
//! After every sampler step the gradients
//! `H₁ = −‖U‖²_F / T` and `H₂ = −‖V‖²_F / T`
//! are fed through a per-coordinate Adam update,
//! `λ ← λ + α·m̂/(√v̂ + ε)` by default. Once two successive
//! hyperparameter values differ by less than the freeze tolerance in both
//! coordinates, adaptation stops for good.

use ndarray::Array2;

use crate::error::Result;
use crate::factor::{check_temperature, HyperParams};

/// Lower bound applied to λ after every update.
pub const LAMBDA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub direction: StepDirection,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            direction: StepDirection::Ascent,
        }
    }
}

/// Which way the Adam-scaled step moves λ relative to H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepDirection {
    /// λ ← λ + α·m̂/(√v̂ + ε): stochastic-approximation ascent along H.
    #[default]
    Ascent,
    /// λ ← λ − α·m̂/(√v̂ + ε): the textbook Adam minimization step.
    Descent,
}

impl StepDirection {
    fn sign(self) -> f64 {
        match self {
            StepDirection::Ascent => 1.0,
            StepDirection::Descent => -1.0,
        }
    }
}

/// Moment accumulators for the two hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamState {
    pub m1: f64,
    pub m2: f64,
    pub v1: f64,
    pub v2: f64,
    pub t: u64,
    pub config: AdamConfig,
    pub frozen: bool,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            m1: 0.0,
            m2: 0.0,
            v1: 0.0,
            v2: 0.0,
            t: 0,
            config,
            frozen: false,
        }
    }

    /// Bias-corrected first moments (m̂₁, m̂₂). Zero before the first step.
    pub fn m_hat(&self) -> (f64, f64) {
        if self.t == 0 {
            return (0.0, 0.0);
        }
        let c = 1.0 - self.config.beta1.powi(self.t as i32);
        (self.m1 / c, self.m2 / c)
    }

    /// Bias-corrected second moments (v̂₁, v̂₂). Zero before the first step.
    pub fn v_hat(&self) -> (f64, f64) {
        if self.t == 0 {
            return (0.0, 0.0);
        }
        let c = 1.0 - self.config.beta2.powi(self.t as i32);
        (self.v1 / c, self.v2 / c)
    }
}

/// H for λ₁: `−‖U‖²_F / T`.
pub fn grad_h_lambda1(u: &Array2<f64>, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    Ok(-u.iter().map(|x| x * x).sum::<f64>() / temperature)
}

/// H for λ₂: `−‖V‖²_F / T`.
pub fn grad_h_lambda2(v: &Array2<f64>, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    Ok(-v.iter().map(|x| x * x).sum::<f64>() / temperature)
}

/// One Adam step on (λ₁, λ₂) with gradients (h1, h2), moving each λ in the
/// configured [`StepDirection`] and flooring it at [`LAMBDA_FLOOR`]. A frozen
/// state is returned unchanged together with the unchanged hyperparameters.
pub fn adam_update(
    adam: &AdamState,
    hp: &HyperParams,
    h1: f64,
    h2: f64,
) -> (AdamState, HyperParams) {
    if adam.frozen {
        return (*adam, *hp);
    }
    let c = adam.config;
    let mut next = *adam;
    next.t += 1;
    next.m1 = c.beta1 * adam.m1 + (1.0 - c.beta1) * h1;
    next.m2 = c.beta1 * adam.m2 + (1.0 - c.beta1) * h2;
    next.v1 = c.beta2 * adam.v1 + (1.0 - c.beta2) * h1 * h1;
    next.v2 = c.beta2 * adam.v2 + (1.0 - c.beta2) * h2 * h2;
    let (m1, m2) = next.m_hat();
    let (v1, v2) = next.v_hat();
    let sign = c.direction.sign();
    let step = |lambda: f64, m: f64, v: f64| {
        (lambda + sign * c.alpha * m / (v.sqrt() + c.eps)).max(LAMBDA_FLOOR)
    };
    let hp_next = HyperParams {
        lambda1: step(hp.lambda1, m1, v1),
        lambda2: step(hp.lambda2, m2, v2),
    };
    (next, hp_next)
}

/// True when both hyperparameters moved by less than `tol`.
pub fn check_freeze(prev: &HyperParams, next: &HyperParams, tol: f64) -> bool {
    (next.lambda1 - prev.lambda1).abs() < tol && (next.lambda2 - prev.lambda2).abs() < tol
}

/// Adam state plus the freeze rule, driven once per sampler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalBayes {
    pub adam: AdamState,
    pub freeze_tol: f64,
}

impl EmpiricalBayes {
    pub fn new(config: AdamConfig, freeze_tol: f64) -> Self {
        EmpiricalBayes {
            adam: AdamState::new(config),
            freeze_tol,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.adam.frozen
    }

    /// Updates `hp` from the sampled factors at temperature `t`.
    pub fn step(
        &mut self,
        hp: &HyperParams,
        u: &Array2<f64>,
        v: &Array2<f64>,
        temperature: f64,
    ) -> Result<HyperParams> {
        if self.adam.frozen {
            return Ok(*hp);
        }
        let h1 = grad_h_lambda1(u, temperature)?;
        let h2 = grad_h_lambda2(v, temperature)?;
        let (adam, next) = adam_update(&self.adam, hp, h1, h2);
        self.adam = adam;
        if check_freeze(hp, &next, self.freeze_tol) {
            self.adam.frozen = true;
        }
        Ok(next)
    }
}
