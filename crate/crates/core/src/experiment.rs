//! Experiment driver: configuration, artifacts and the synthetic fixture.
//!
//! [`run_experiment`] loads a MovieLens file, splits it, runs ALS or the
//! annealing sampler and writes, per chain,
//!
//! * `trace.csv`: one row per iteration with columns `iteration,
//!   temperature, k, move_kind, accepted, train_loss, test_rmse, lambda1,
//!   lambda2`;
//! * `smoothed.csv`: trailing-window means of the train loss and test RMSE;
//! * `summary.txt`: `key: value` lines of the [`SummaryReport`].
//!
//! With more than one chain the file stems get a `_chainN` suffix.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::als::als_fit;
use crate::anneal::{run_chain, AnnealSchedule, ChainTraceRecord, MoveKind, SamplerConfig};
use crate::eb::{AdamConfig, StepDirection};
use crate::error::{invalid, Error, Result};
use crate::factor::{default_init_sd, HyperParams};
use crate::ratings::{load_movielens, rmse, split, Entry, SparseRatings, MAX_RATING, MIN_RATING};

/// Trailing moving average. The first `window − 1` outputs average the
/// available prefix; the output has the input's length.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(invalid("smoothing window must be at least 1"));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Als,
    Rjmcmc,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "als" => Ok(Method::Als),
            "rjmcmc" => Ok(Method::Rjmcmc),
            _ => Err(invalid(format!(
                "unknown method {s:?} (expected als or rjmcmc)"
            ))),
        }
    }
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Als => "als",
            Method::Rjmcmc => "rjmcmc",
        }
    }
}

fn parse_direction(s: &str) -> Result<StepDirection> {
    match s {
        "ascent" => Ok(StepDirection::Ascent),
        "descent" => Ok(StepDirection::Descent),
        _ => Err(invalid(format!(
            "unknown eb direction {s:?} (expected ascent or descent)"
        ))),
    }
}

fn direction_str(d: StepDirection) -> &'static str {
    match d {
        StepDirection::Ascent => "ascent",
        StepDirection::Descent => "descent",
    }
}

/// Every knob of one experiment. Keys accepted by [`ExperimentConfig::set`]
/// are the field names.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_path: PathBuf,
    pub out_dir: PathBuf,
    pub split_fraction: f64,
    pub seed: u64,
    pub method: Method,
    /// Latent dimension for ALS.
    pub k: usize,
    pub als_max_iters: usize,
    pub als_tol: f64,
    pub k_max: usize,
    /// Fixed starting dimension for the sampler; uniform when `None`.
    pub initial_k: Option<usize>,
    pub lambda1_init: f64,
    pub lambda2_init: f64,
    pub adam_alpha: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub eb_direction: StepDirection,
    pub freeze_tol: f64,
    pub t0: f64,
    pub cooling_beta: f64,
    pub tmin: f64,
    pub step_scale: f64,
    pub scale_step_with_temperature: bool,
    pub smoothing_window: usize,
    pub chains: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let schedule = AnnealSchedule::default();
        let adam = AdamConfig::default();
        ExperimentConfig {
            data_path: PathBuf::from("u.data"),
            out_dir: PathBuf::from("out"),
            split_fraction: 0.8,
            seed: 1,
            method: Method::Rjmcmc,
            k: 2,
            als_max_iters: 100,
            als_tol: 1e-6,
            k_max: 50,
            initial_k: None,
            lambda1_init: 30.0,
            lambda2_init: 30.0,
            adam_alpha: adam.alpha,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            eb_direction: adam.direction,
            freeze_tol: 1e-5,
            t0: schedule.t0,
            cooling_beta: schedule.beta,
            tmin: schedule.tmin,
            step_scale: 0.05,
            scale_step_with_temperature: false,
            smoothing_window: 10,
            chains: 1,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("bad value {value:?} for {key}")))
}

impl ExperimentConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "data_path" => self.data_path = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "split_fraction" => self.split_fraction = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "method" => self.method = v.parse()?,
            "k" => self.k = parse_value(key, v)?,
            "als_max_iters" => self.als_max_iters = parse_value(key, v)?,
            "als_tol" => self.als_tol = parse_value(key, v)?,
            "k_max" => self.k_max = parse_value(key, v)?,
            "initial_k" => {
                self.initial_k = match v {
                    "" | "none" | "random" => None,
                    _ => Some(parse_value(key, v)?),
                }
            }
            "lambda1_init" => self.lambda1_init = parse_value(key, v)?,
            "lambda2_init" => self.lambda2_init = parse_value(key, v)?,
            "adam_alpha" => self.adam_alpha = parse_value(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, v)?,
            "adam_eps" => self.adam_eps = parse_value(key, v)?,
            "eb_direction" => self.eb_direction = parse_direction(v)?,
            "freeze_tol" => self.freeze_tol = parse_value(key, v)?,
            "t0" => self.t0 = parse_value(key, v)?,
            "cooling_beta" => self.cooling_beta = parse_value(key, v)?,
            "tmin" => self.tmin = parse_value(key, v)?,
            "step_scale" => self.step_scale = parse_value(key, v)?,
            "scale_step_with_temperature" => {
                self.scale_step_with_temperature = parse_value(key, v)?
            }
            "smoothing_window" => self.smoothing_window = parse_value(key, v)?,
            "chains" => self.chains = parse_value(key, v)?,
            other => return Err(invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Defaults overlaid with the file at `path`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_kv(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// The configuration rendered as `key = value` lines that
    /// [`ExperimentConfig::apply_kv`] reads back unchanged.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("data_path", self.data_path.display().to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("split_fraction", self.split_fraction.to_string());
        put("seed", self.seed.to_string());
        put("method", self.method.as_str().to_string());
        put("k", self.k.to_string());
        put("als_max_iters", self.als_max_iters.to_string());
        put("als_tol", self.als_tol.to_string());
        put("k_max", self.k_max.to_string());
        put(
            "initial_k",
            self.initial_k
                .map_or("random".to_string(), |k| k.to_string()),
        );
        put("lambda1_init", self.lambda1_init.to_string());
        put("lambda2_init", self.lambda2_init.to_string());
        put("adam_alpha", self.adam_alpha.to_string());
        put("adam_beta1", self.adam_beta1.to_string());
        put("adam_beta2", self.adam_beta2.to_string());
        put("adam_eps", self.adam_eps.to_string());
        put("eb_direction", direction_str(self.eb_direction).to_string());
        put("freeze_tol", self.freeze_tol.to_string());
        put("t0", self.t0.to_string());
        put("cooling_beta", self.cooling_beta.to_string());
        put("tmin", self.tmin.to_string());
        put("step_scale", self.step_scale.to_string());
        put(
            "scale_step_with_temperature",
            self.scale_step_with_temperature.to_string(),
        );
        put("smoothing_window", self.smoothing_window.to_string());
        put("chains", self.chains.to_string());
        s
    }

    pub fn hyper_init(&self) -> Result<HyperParams> {
        HyperParams::new(self.lambda1_init, self.lambda2_init)
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let cfg = SamplerConfig {
            k_max: self.k_max,
            initial_k: self.initial_k,
            step_scale: self.step_scale,
            scale_step_with_temperature: self.scale_step_with_temperature,
            schedule: AnnealSchedule {
                t0: self.t0,
                beta: self.cooling_beta,
                tmin: self.tmin,
            },
            hyper_init: self.hyper_init()?,
            adam: AdamConfig {
                alpha: self.adam_alpha,
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
                direction: self.eb_direction,
            },
            freeze_tol: self.freeze_tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return Err(invalid(format!(
                "split_fraction {} not in (0, 1]",
                self.split_fraction
            )));
        }
        if self.smoothing_window == 0 {
            return Err(invalid("smoothing_window must be at least 1"));
        }
        if self.chains == 0 {
            return Err(invalid("chains must be at least 1"));
        }
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !(self.adam_alpha >= 0.0
            && unit(self.adam_beta1)
            && unit(self.adam_beta2)
            && self.adam_eps > 0.0)
        {
            return Err(invalid(
                "adam needs alpha >= 0, beta1 and beta2 in [0, 1), eps > 0",
            ));
        }
        match self.method {
            Method::Als => {
                if self.k == 0 {
                    return Err(invalid("k must be at least 1"));
                }
                if self.als_max_iters == 0 || !(self.als_tol > 0.0) {
                    return Err(invalid("ALS needs als_max_iters >= 1 and als_tol > 0"));
                }
                self.hyper_init().map(|_| ())
            }
            Method::Rjmcmc => self.sampler_config().map(|_| ()),
        }
    }
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub method: Method,
    pub chain: usize,
    pub seed: u64,
    pub iterations: usize,
    /// Dimension of the lowest-train-cost state.
    pub selected_k: usize,
    pub train_loss_at_selected_k: f64,
    /// `None` when the test split is empty.
    pub test_rmse_at_selected_k: Option<f64>,
    pub final_k: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Iteration at which λ adaptation froze.
    pub frozen_at: Option<usize>,
    /// Dimension at the first iteration after which the smoothed test RMSE
    /// stays within 1% of its value there.
    pub stabilized_k: Option<usize>,
    /// (accepted, proposed) per move kind, sampler runs only.
    pub moves: Option<[(usize, usize); 3]>,
    pub wall_time_secs: f64,
}

impl SummaryReport {
    /// `key: value` lines, one per field.
    pub fn render(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_else(|| "none".to_string());
        let mut s = String::new();
        let _ = writeln!(s, "method: {}", self.method.as_str());
        let _ = writeln!(s, "chain: {}", self.chain);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "iterations: {}", self.iterations);
        let _ = writeln!(s, "selected_k: {}", self.selected_k);
        let _ = writeln!(
            s,
            "train_loss_at_selected_k: {}",
            fmt_sig(self.train_loss_at_selected_k)
        );
        let _ = writeln!(
            s,
            "test_rmse_at_selected_k: {}",
            opt(self.test_rmse_at_selected_k.map(fmt_sig))
        );
        let _ = writeln!(s, "final_k: {}", self.final_k);
        let _ = writeln!(s, "lambda1: {}", fmt_sig(self.lambda1));
        let _ = writeln!(s, "lambda2: {}", fmt_sig(self.lambda2));
        let _ = writeln!(s, "frozen: {}", self.frozen_at.is_some());
        let _ = writeln!(
            s,
            "frozen_at: {}",
            opt(self.frozen_at.map(|x| x.to_string()))
        );
        let _ = writeln!(
            s,
            "stabilized_k: {}",
            opt(self.stabilized_k.map(|x| x.to_string()))
        );
        if let Some(m) = self.moves {
            for (kind, (acc, prop)) in ["birth", "death", "within"].iter().zip(m) {
                let _ = writeln!(s, "{kind}_accepted: {acc}");
                let _ = writeln!(s, "{kind}_proposed: {prop}");
            }
        }
        let _ = writeln!(s, "wall_time_secs: {:.3}", self.wall_time_secs);
        s
    }
}

/// Formats `x` with 12 significant digits in positional notation, falling
/// back to scientific notation outside 1e-20 ..= 1e20.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000000000".to_string();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-20..=20).contains(&exp) {
        return sci;
    }
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = digits.chars().filter(|c| *c != '.').collect();
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else if (exp as usize) + 1 >= digits.len() {
        format!("{}{}", digits, "0".repeat(exp as usize + 1 - digits.len()))
    } else {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    };
    format!("{sign}{body}")
}

pub const TRACE_HEADER: &str =
    "iteration,temperature,k,move_kind,accepted,train_loss,test_rmse,lambda1,lambda2";

/// Writes the trace CSV. ALS rows leave `temperature` empty and use the
/// move kind `als`.
pub fn write_trace<W: Write>(rows: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            opt(r.temperature),
            r.k,
            r.move_kind,
            r.accepted as u8,
            fmt_sig(r.train_loss),
            opt(r.test_rmse),
            fmt_sig(r.lambda1),
            fmt_sig(r.lambda2),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// One CSV row, shared by ALS and sampler traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub temperature: Option<f64>,
    pub k: usize,
    pub move_kind: &'static str,
    pub accepted: bool,
    pub train_loss: f64,
    pub test_rmse: Option<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl From<&ChainTraceRecord> for TraceRow {
    fn from(r: &ChainTraceRecord) -> Self {
        TraceRow {
            iteration: r.iteration,
            temperature: Some(r.temperature),
            k: r.k,
            move_kind: r.move_kind.as_str(),
            accepted: r.accepted,
            train_loss: r.train_loss,
            test_rmse: r.test_rmse,
            lambda1: r.lambda1,
            lambda2: r.lambda2,
        }
    }
}

fn write_smoothed<W: Write>(rows: &[TraceRow], window: usize, mut out: W) -> Result<()> {
    let train: Vec<f64> = rows.iter().map(|r| r.train_loss).collect();
    let train = smooth(&train, window)?;
    let test = if rows.iter().all(|r| r.test_rmse.is_some()) {
        let t: Vec<f64> = rows.iter().filter_map(|r| r.test_rmse).collect();
        Some(smooth(&t, window)?)
    } else {
        None
    };
    writeln!(out, "iteration,k,train_loss_smoothed,test_rmse_smoothed")?;
    for (i, r) in rows.iter().enumerate() {
        let t = test.as_ref().map(|t| fmt_sig(t[i])).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.iteration, r.k, fmt_sig(train[i]), t)?;
    }
    out.flush()?;
    Ok(())
}

/// Index of the first point after which `series` stays within `rel` of its
/// value there.
pub fn stabilization_index(series: &[f64], rel: f64) -> Option<usize> {
    if series.is_empty() {
        return None;
    }
    // walk backwards keeping the range of the suffix
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut best = series.len() - 1;
    for i in (0..series.len()).rev() {
        lo = lo.min(series[i]);
        hi = hi.max(series[i]);
        let x = series[i].abs();
        if hi - series[i] <= rel * x && series[i] - lo <= rel * x {
            best = i;
        }
    }
    Some(best)
}

fn stabilized_k(rows: &[TraceRow], window: usize) -> Result<Option<usize>> {
    if rows.is_empty() || rows.iter().any(|r| r.test_rmse.is_none()) {
        return Ok(None);
    }
    let test: Vec<f64> = rows.iter().filter_map(|r| r.test_rmse).collect();
    let s = smooth(&test, window)?;
    Ok(stabilization_index(&s, 0.01).map(|i| rows[i].k))
}

fn artifact(dir: &Path, stem: &str, chain: usize, chains: usize, ext: &str) -> PathBuf {
    if chains == 1 {
        dir.join(format!("{stem}.{ext}"))
    } else {
        dir.join(format!("{stem}_chain{chain}.{ext}"))
    }
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    chain: usize,
    rows: &[TraceRow],
    report: &SummaryReport,
) -> Result<()> {
    let dir = &cfg.out_dir;
    let file = |stem: &str, ext: &str| -> Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(artifact(
            dir, stem, chain, cfg.chains, ext,
        ))?))
    };
    write_trace(rows, file("trace", "csv")?)?;
    write_smoothed(rows, cfg.smoothing_window, file("smoothed", "csv")?)?;
    let mut summary = file("summary", "txt")?;
    summary.write_all(report.render().as_bytes())?;
    summary.flush()?;
    Ok(())
}

fn run_als(
    cfg: &ExperimentConfig,
    train: &SparseRatings,
    test: &SparseRatings,
) -> Result<(Vec<TraceRow>, SummaryReport)> {
    let start = Instant::now();
    let hp = cfg.hyper_init()?;
    let (state, trace) = als_fit(
        train,
        test,
        &hp,
        cfg.k,
        cfg.seed,
        cfg.als_max_iters,
        cfg.als_tol,
    )?;
    let rows: Vec<TraceRow> = trace
        .records
        .iter()
        .map(|r| TraceRow {
            iteration: r.iteration,
            temperature: None,
            k: cfg.k,
            move_kind: "als",
            accepted: true,
            train_loss: r.train_loss,
            test_rmse: r.test_rmse,
            lambda1: hp.lambda1,
            lambda2: hp.lambda2,
        })
        .collect();
    let last = trace.records.last().expect("at least one ALS iteration");
    let report = SummaryReport {
        method: Method::Als,
        chain: 0,
        seed: cfg.seed,
        iterations: rows.len(),
        selected_k: cfg.k,
        train_loss_at_selected_k: last.train_loss,
        test_rmse_at_selected_k: if test.is_empty() {
            None
        } else {
            Some(rmse(&state, test)?)
        },
        final_k: state.k(),
        lambda1: hp.lambda1,
        lambda2: hp.lambda2,
        frozen_at: None,
        stabilized_k: stabilized_k(&rows, cfg.smoothing_window)?,
        moves: None,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((rows, report))
}

fn run_sampler(
    cfg: &ExperimentConfig,
    chain: usize,
    train: &SparseRatings,
    test: &SparseRatings,
) -> Result<(Vec<TraceRow>, SummaryReport)> {
    let start = Instant::now();
    let seed = cfg.seed.wrapping_add(chain as u64);
    let out = run_chain(&cfg.sampler_config()?, train, test, seed)?;
    let rows: Vec<TraceRow> = out.trace.iter().map(TraceRow::from).collect();
    let mut moves = [(0, 0); 3];
    for r in &out.trace {
        let slot = match r.move_kind {
            MoveKind::Birth => 0,
            MoveKind::Death => 1,
            MoveKind::Within => 2,
        };
        moves[slot].0 += r.accepted as usize;
        moves[slot].1 += 1;
    }
    let report = SummaryReport {
        method: Method::Rjmcmc,
        chain,
        seed,
        iterations: rows.len(),
        selected_k: out.best_state.k(),
        train_loss_at_selected_k: out.best_loss,
        test_rmse_at_selected_k: if test.is_empty() {
            None
        } else {
            Some(rmse(&out.best_state, test)?)
        },
        final_k: out.final_state.k(),
        lambda1: out.hyper.lambda1,
        lambda2: out.hyper.lambda2,
        frozen_at: out.frozen_at,
        stabilized_k: stabilized_k(&rows, cfg.smoothing_window)?,
        moves: Some(moves),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((rows, report))
}

/// Parse, split, fit and write artifacts into `config.out_dir`. Returns one
/// report per chain (ALS always runs a single chain).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SummaryReport>> {
    config.validate()?;
    let ratings = load_movielens(&config.data_path)?;
    let data = split(&ratings, config.split_fraction, config.seed)?;
    fs::create_dir_all(&config.out_dir)?;
    match config.method {
        Method::Als => {
            let cfg = ExperimentConfig {
                chains: 1,
                ..config.clone()
            };
            let (rows, report) = run_als(&cfg, &data.train, &data.test)?;
            write_artifacts(&cfg, 0, &rows, &report)?;
            Ok(vec![report])
        }
        Method::Rjmcmc => {
            let results: Vec<Result<SummaryReport>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..config.chains)
                    .map(|c| {
                        let data = &data;
                        scope.spawn(move || {
                            let (rows, report) = run_sampler(config, c, &data.train, &data.test)?;
                            write_artifacts(config, c, &rows, &report)?;
                            Ok(report)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chain thread panicked"))
                    .collect()
            });
            results.into_iter().collect()
        }
    }
}

/// Synthetic ratings plus the factors that generated them.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub ratings: SparseRatings,
    pub user_factors: Array2<f64>,
    pub item_factors: Array2<f64>,
}

/// Low-rank synthetic ratings. True factors have entries
/// Normal(√(3/k), 1/√(2k)) so products centre on 3; each cell is observed
/// with probability `density` and rated `clamp(u_iᵀv_j + N(0, noise_sd²), 1, 5)`.
pub fn gen_synthetic(
    n: usize,
    p: usize,
    k_true: usize,
    noise_sd: f64,
    density: f64,
    seed: u64,
) -> Result<SparseRatings> {
    Ok(gen_synthetic_with_truth(n, p, k_true, noise_sd, density, seed)?.ratings)
}

pub fn gen_synthetic_with_truth(
    n: usize,
    p: usize,
    k_true: usize,
    noise_sd: f64,
    density: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if n == 0 || p == 0 || k_true == 0 {
        return Err(invalid("gen_synthetic needs n, p, k_true >= 1"));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(invalid(format!("density {density} not in (0, 1]")));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(invalid(format!(
            "noise_sd must be non-negative, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = (3.0 / k_true as f64).sqrt();
    let sd = default_init_sd(k_true);
    let mut draw = |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        mean + sd * z
    };
    let u = Array2::from_shape_fn((n, k_true), &mut draw);
    let v = Array2::from_shape_fn((p, k_true), &mut draw);
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..p {
            if rng.random::<f64>() >= density {
                continue;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            let clean = u.row(i).dot(&v.row(j));
            entries.push(Entry {
                user: i,
                item: j,
                rating: (clean + noise_sd * z).clamp(MIN_RATING, MAX_RATING),
            });
        }
    }
    Ok(SyntheticData {
        ratings: SparseRatings::from_entries(n, p, entries)?,
        user_factors: u,
        item_factors: v,
    })
}
