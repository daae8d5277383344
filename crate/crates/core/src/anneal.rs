//! Simulated annealing over the Boltzmann posterior of (U, V) with
//! reversible-jump moves across the latent dimension.
//!
//! Every step draws a target dimension k′ uniformly from `1..=k_max`:
//!
//! * k′ > k: *birth*. Each user row is padded with Δ = k′ − k auxiliary
//!   draws from N(0, T/λ₁) (items: N(0, T/λ₂)) and rotated by the Helmert
//!   transform of size k′.
//! * k′ < k: *death*. Each row is rotated back by Aᵀ and truncated to k′;
//!   the discarded tails are scored under the same auxiliary density.
//! * k′ = k: *within*. Every entry gets a symmetric N(0, step²) kick.
//!
//! The candidate is accepted with probability min(1, α). Whatever the
//! outcome, λ₁ and λ₂ are then updated by [`EmpiricalBayes`] and the
//! temperature is multiplied by β.

use std::fmt;

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::eb::{AdamConfig, EmpiricalBayes};
use crate::error::{invalid, Error, Result};
use crate::factor::{check_temperature, init_factors, EnergyBreakdown, FactorState, HyperParams};
use crate::helmert::OrthogonalMap;
use crate::ratings::{rmse, SparseRatings};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Geometric cooling T_i = β·T_{i−1} from `t0` until the temperature
/// reaches `tmin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub beta: f64,
    pub tmin: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t0: 1.0,
            beta: 0.995,
            tmin: 1e-3,
        }
    }
}

impl AnnealSchedule {
    pub fn new(t0: f64, beta: f64, tmin: f64) -> Result<Self> {
        let s = AnnealSchedule { t0, beta, tmin };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(invalid(format!("t0 must be positive, got {}", self.t0)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!(
                "cooling beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.tmin.is_finite() && self.tmin > 0.0) {
            return Err(invalid(format!("tmin must be positive, got {}", self.tmin)));
        }
        Ok(())
    }

    /// Number of steps taken before the temperature drops to `tmin`.
    pub fn steps(&self) -> usize {
        let mut t = self.t0;
        let mut n = 0;
        while t > self.tmin {
            t *= self.beta;
            n += 1;
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Birth,
    Death,
    Within,
}

impl MoveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::Within => "within",
        }
    }
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A candidate state together with what is needed to score it.
#[derive(Debug, Clone)]
pub struct MoveProposal {
    pub kind: MoveKind,
    pub k_from: usize,
    pub k_to: usize,
    /// Σ log-density of the auxiliary coordinates (drawn for a birth,
    /// discarded by a death); 0 for within-moves.
    pub log_g: f64,
    pub candidate: FactorState,
}

/// One row of the chain trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainTraceRecord {
    pub iteration: usize,
    pub temperature: f64,
    pub k: usize,
    pub train_loss: f64,
    pub test_rmse: Option<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub accepted: bool,
    pub move_kind: MoveKind,
}

/// Uniform draw from `{1, …, k_max}`.
///
/// # Panics
/// If `k_max` is zero.
pub fn propose_dimension<R: Rng + ?Sized>(rng: &mut R, k_max: usize) -> usize {
    assert!(k_max >= 1, "k_max must be at least 1");
    rng.random_range(1..=k_max)
}

fn ln_normal(x: f64, sd: f64) -> f64 {
    -LN_SQRT_2PI - sd.ln() - 0.5 * (x / sd) * (x / sd)
}

/// Standard deviation of the auxiliary coordinates for regularizer `lambda`.
pub fn aux_sd(temperature: f64, lambda: f64) -> f64 {
    (temperature / lambda).sqrt()
}

fn check_aux(hp: &HyperParams, temperature: f64) -> Result<()> {
    check_temperature(temperature)?;
    if !(hp.lambda1 > 0.0 && hp.lambda2 > 0.0) {
        return Err(invalid("dimension moves need positive lambdas"));
    }
    Ok(())
}

/// Grows every row from k to `k_to` (see module docs).
pub fn propose_birth<R: Rng + ?Sized>(
    state: &FactorState,
    k_to: usize,
    hp: &HyperParams,
    temperature: f64,
    rng: &mut R,
) -> Result<MoveProposal> {
    propose_birth_with(state, k_to, hp, temperature, || StandardNormal.sample(rng))
}

/// [`propose_birth`] with the standard-normal draws supplied by `normal`.
/// Draws are consumed row by row, all user rows before all item rows.
pub fn propose_birth_with(
    state: &FactorState,
    k_to: usize,
    hp: &HyperParams,
    temperature: f64,
    mut normal: impl FnMut() -> f64,
) -> Result<MoveProposal> {
    let k = state.k();
    if k_to <= k {
        return Err(invalid(format!(
            "birth needs k' > k (k = {k}, k' = {k_to})"
        )));
    }
    check_aux(hp, temperature)?;
    let map = OrthogonalMap::new(k_to);
    let mut log_g = 0.0;
    let mut grow = |m: &Array2<f64>, sd: f64| {
        let mut out = Array2::zeros((m.nrows(), k_to));
        let mut buf = vec![0.0; k_to];
        for (row, mut dst) in m.rows().into_iter().zip(out.rows_mut()) {
            for (b, x) in buf.iter_mut().zip(row.iter()) {
                *b = *x;
            }
            for b in &mut buf[k..] {
                *b = sd * normal();
                log_g += ln_normal(*b, sd);
            }
            map.apply_into(&buf, dst.as_slice_mut().expect("standard layout"));
        }
        out
    };
    let u = grow(state.user_factors(), aux_sd(temperature, hp.lambda1));
    let v = grow(state.item_factors(), aux_sd(temperature, hp.lambda2));
    Ok(MoveProposal {
        kind: MoveKind::Birth,
        k_from: k,
        k_to,
        log_g,
        candidate: FactorState::new(u, v)?,
    })
}

/// Shrinks every row from k to `k_to` (see module docs).
pub fn propose_death(
    state: &FactorState,
    k_to: usize,
    hp: &HyperParams,
    temperature: f64,
) -> Result<MoveProposal> {
    let k = state.k();
    if k_to >= k || k_to == 0 {
        return Err(invalid(format!(
            "death needs 1 <= k' < k (k = {k}, k' = {k_to})"
        )));
    }
    check_aux(hp, temperature)?;
    let map = OrthogonalMap::new(k);
    let mut log_g = 0.0;
    let mut shrink = |m: &Array2<f64>, sd: f64| {
        let mut out = Array2::zeros((m.nrows(), k_to));
        let mut full = vec![0.0; k];
        for (row, mut dst) in m.rows().into_iter().zip(out.rows_mut()) {
            map.invert_into(row.as_slice().expect("standard layout"), &mut full);
            for t in &full[k_to..] {
                log_g += ln_normal(*t, sd);
            }
            dst.as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(&full[..k_to]);
        }
        out
    };
    let u = shrink(state.user_factors(), aux_sd(temperature, hp.lambda1));
    let v = shrink(state.item_factors(), aux_sd(temperature, hp.lambda2));
    Ok(MoveProposal {
        kind: MoveKind::Death,
        k_from: k,
        k_to,
        log_g,
        candidate: FactorState::new(u, v)?,
    })
}

/// Random-walk kick of every entry by `step_scale·N(0, 1)`.
pub fn propose_within<R: Rng + ?Sized>(
    state: &FactorState,
    step_scale: f64,
    rng: &mut R,
) -> Result<MoveProposal> {
    if !(step_scale.is_finite() && step_scale >= 0.0) {
        return Err(invalid(format!(
            "step_scale must be non-negative, got {step_scale}"
        )));
    }
    let mut candidate = state.clone();
    for x in candidate.user_factors_mut().iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *x += step_scale * z;
    }
    for x in candidate.item_factors_mut().iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *x += step_scale * z;
    }
    Ok(MoveProposal {
        kind: MoveKind::Within,
        k_from: state.k(),
        k_to: state.k(),
        log_g: 0.0,
        candidate,
    })
}

/// log J(k′→k⁰) − log J(k⁰→k′) for a move from `k_from` to `k_to`, where a
/// move up from a has mass (n − a)/n and a move down from a has (a − 1)/n,
/// with n = `k_max`.
pub fn log_move_ratio(k_from: usize, k_to: usize, k_max: usize) -> f64 {
    let up = |a: usize| ((k_max - a) as f64).ln();
    let down = |a: usize| ((a - 1) as f64).ln();
    match k_to.cmp(&k_from) {
        std::cmp::Ordering::Greater => down(k_to) - up(k_from),
        std::cmp::Ordering::Less => up(k_to) - down(k_from),
        std::cmp::Ordering::Equal => 0.0,
    }
}

fn log_ratio_from_exponents(
    exp_current: f64,
    exp_candidate: f64,
    proposal: &MoveProposal,
    k_max: usize,
) -> f64 {
    let delta = exp_candidate - exp_current;
    let j = log_move_ratio(proposal.k_from, proposal.k_to, k_max);
    match proposal.kind {
        MoveKind::Within => delta,
        MoveKind::Birth => delta + j - proposal.log_g,
        MoveKind::Death => delta + j + proposal.log_g,
    }
}

/// log α before clamping; accept when `ln(u) < min(0, log α)` for
/// u ~ Unif(0, 1).
pub fn acceptance_log_ratio(
    current: &FactorState,
    proposal: &MoveProposal,
    hp: &HyperParams,
    ratings: &SparseRatings,
    temperature: f64,
    k_max: usize,
) -> Result<f64> {
    check_temperature(temperature)?;
    if proposal.k_from.max(proposal.k_to) > k_max {
        return Err(invalid(format!(
            "move {}→{} exceeds k_max = {k_max}",
            proposal.k_from, proposal.k_to
        )));
    }
    let cur = current.energy(ratings)?.exponent(hp, temperature);
    let cand = proposal
        .candidate
        .energy(ratings)?
        .exponent(hp, temperature);
    Ok(log_ratio_from_exponents(cur, cand, proposal, k_max))
}

/// Everything `run_chain` needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub k_max: usize,
    /// Fixed starting dimension; drawn uniformly from `1..=k_max` when `None`.
    pub initial_k: Option<usize>,
    pub step_scale: f64,
    /// Multiply the within-move step by √T so proposals shrink as the chain cools.
    pub scale_step_with_temperature: bool,
    pub schedule: AnnealSchedule,
    pub hyper_init: HyperParams,
    pub adam: AdamConfig,
    pub freeze_tol: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            k_max: 50,
            initial_k: None,
            step_scale: 0.05,
            scale_step_with_temperature: false,
            schedule: AnnealSchedule::default(),
            hyper_init: HyperParams {
                lambda1: 30.0,
                lambda2: 30.0,
            },
            adam: AdamConfig::default(),
            freeze_tol: 1e-5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(invalid("k_max must be at least 1"));
        }
        if let Some(k) = self.initial_k {
            if k == 0 || k > self.k_max {
                return Err(invalid(format!("initial k {k} outside 1..={}", self.k_max)));
            }
        }
        if !(self.step_scale.is_finite() && self.step_scale >= 0.0) {
            return Err(invalid("step_scale must be non-negative"));
        }
        if !(self.freeze_tol > 0.0) {
            return Err(invalid("freeze_tol must be positive"));
        }
        HyperParams::new(self.hyper_init.lambda1, self.hyper_init.lambda2)?;
        self.schedule.validate()
    }
}

/// Mutable state of one annealing chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub state: FactorState,
    pub hp: HyperParams,
    pub temperature: f64,
    pub beta: f64,
    pub k_max: usize,
    pub step_scale: f64,
    pub scale_step_with_temperature: bool,
    pub eb: EmpiricalBayes,
    pub iteration: usize,
    energy: Option<EnergyBreakdown>,
}

impl Chain {
    pub fn new(
        state: FactorState,
        hp: HyperParams,
        temperature: f64,
        beta: f64,
        k_max: usize,
        step_scale: f64,
        eb: EmpiricalBayes,
    ) -> Result<Self> {
        check_temperature(temperature)?;
        if state.k() > k_max {
            return Err(invalid(format!(
                "state dimension {} exceeds k_max {k_max}",
                state.k()
            )));
        }
        Ok(Chain {
            state,
            hp,
            temperature,
            beta,
            k_max,
            step_scale,
            scale_step_with_temperature: false,
            eb,
            iteration: 0,
            energy: None,
        })
    }

    fn current_energy(&mut self, train: &SparseRatings) -> Result<EnergyBreakdown> {
        match self.energy {
            Some(e) => Ok(e),
            None => {
                let e = self.state.energy(train)?;
                self.energy = Some(e);
                Ok(e)
            }
        }
    }
}

/// One annealing step: propose, accept or reject, adapt λ, cool.
pub fn anneal_step<R: Rng + ?Sized>(
    chain: &mut Chain,
    train: &SparseRatings,
    test: &SparseRatings,
    rng: &mut R,
) -> Result<ChainTraceRecord> {
    let t = chain.temperature;
    check_temperature(t)?;
    let k = chain.state.k();
    let k_to = propose_dimension(rng, chain.k_max);
    let proposal = match k_to.cmp(&k) {
        std::cmp::Ordering::Greater => propose_birth(&chain.state, k_to, &chain.hp, t, rng)?,
        std::cmp::Ordering::Less => propose_death(&chain.state, k_to, &chain.hp, t)?,
        std::cmp::Ordering::Equal => {
            let step = if chain.scale_step_with_temperature {
                chain.step_scale * t.sqrt()
            } else {
                chain.step_scale
            };
            propose_within(&chain.state, step, rng)?
        }
    };

    let e_cur = chain.current_energy(train)?;
    let e_cand = proposal.candidate.energy(train)?;
    let log_alpha = log_ratio_from_exponents(
        e_cur.exponent(&chain.hp, t),
        e_cand.exponent(&chain.hp, t),
        &proposal,
        chain.k_max,
    );
    let u: f64 = rng.random();
    let accepted = u.ln() < log_alpha.min(0.0);
    let kind = proposal.kind;
    if accepted {
        if !proposal.candidate.is_finite() {
            return Err(Error::NonFinite("accepted candidate"));
        }
        chain.state = proposal.candidate;
        chain.energy = Some(e_cand);
    }

    let energy = chain.current_energy(train)?;
    chain.hp = chain.eb.step(
        &chain.hp,
        chain.state.user_factors(),
        chain.state.item_factors(),
        t,
    )?;

    let test_rmse = if test.is_empty() {
        None
    } else {
        Some(rmse(&chain.state, test)?)
    };
    let record = ChainTraceRecord {
        iteration: chain.iteration,
        temperature: t,
        k: chain.state.k(),
        train_loss: energy.loss(&chain.hp),
        test_rmse,
        lambda1: chain.hp.lambda1,
        lambda2: chain.hp.lambda2,
        accepted,
        move_kind: kind,
    };
    chain.temperature = t * chain.beta;
    chain.iteration += 1;
    Ok(record)
}

/// Outcome of [`run_chain`].
#[derive(Debug, Clone)]
pub struct ChainResult {
    pub initial_state: FactorState,
    pub final_state: FactorState,
    /// Lowest train-loss state visited (the initial state if no step ran).
    pub best_state: FactorState,
    pub best_loss: f64,
    /// Trace index of `best_state`; `None` when it is the initial state.
    pub best_iteration: Option<usize>,
    pub hyper: HyperParams,
    /// Iteration at which hyperparameter adaptation froze.
    pub frozen_at: Option<usize>,
    pub trace: Vec<ChainTraceRecord>,
}

/// Runs a full annealing chain: k⁰ ~ Unif{1..k_max} (unless fixed), factors
/// from `init_factors`, then [`anneal_step`] until T ≤ tmin.
pub fn run_chain(
    config: &SamplerConfig,
    train: &SparseRatings,
    test: &SparseRatings,
    seed: u64,
) -> Result<ChainResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k0 = match config.initial_k {
        Some(k) => k,
        None => propose_dimension(&mut rng, config.k_max),
    };
    let init_seed = rng.next_u64();
    let initial = init_factors(train.n_users(), train.n_items(), k0, init_seed)?;
    run_chain_from(config, initial, train, test, &mut rng)
}

/// As [`run_chain`] from an explicit starting state and generator.
pub fn run_chain_from<R: Rng + ?Sized>(
    config: &SamplerConfig,
    initial: FactorState,
    train: &SparseRatings,
    test: &SparseRatings,
    rng: &mut R,
) -> Result<ChainResult> {
    config.validate()?;
    let hp0 = config.hyper_init;
    let initial_loss = initial.energy(train)?.loss(&hp0);
    let mut chain = Chain::new(
        initial.clone(),
        hp0,
        config.schedule.t0,
        config.schedule.beta,
        config.k_max,
        config.step_scale,
        EmpiricalBayes::new(config.adam, config.freeze_tol),
    )?;
    chain.scale_step_with_temperature = config.scale_step_with_temperature;

    let mut best_state = initial.clone();
    let mut best_loss = initial_loss;
    let mut best_iteration = None;
    let mut frozen_at = None;
    let mut trace = Vec::with_capacity(config.schedule.steps());

    while chain.temperature > config.schedule.tmin {
        let rec = anneal_step(&mut chain, train, test, rng)?;
        if rec.train_loss < best_loss {
            best_loss = rec.train_loss;
            best_state = chain.state.clone();
            best_iteration = Some(rec.iteration);
        }
        if frozen_at.is_none() && chain.eb.is_frozen() {
            frozen_at = Some(rec.iteration);
        }
        trace.push(rec);
    }

    Ok(ChainResult {
        initial_state: initial,
        final_state: chain.state,
        best_state,
        best_loss,
        best_iteration,
        hyper: chain.hp,
        frozen_at,
        trace,
    })
}
