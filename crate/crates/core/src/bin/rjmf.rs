use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rjmf::experiment::{gen_synthetic, run_experiment, ExperimentConfig};
use rjmf::ratings::write_movielens;

/// Matrix factorization by annealed reversible-jump sampling, with an ALS
/// baseline. Flags override values read from --config.
#[derive(Parser, Debug)]
#[command(name = "rjmf", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic low-rank rating file in MovieLens format.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    users: usize,
    #[arg(long, default_value_t = 20)]
    items: usize,
    #[arg(long, default_value_t = 2)]
    k_true: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// key = value file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// MovieLens u.data file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for trace.csv, smoothed.csv and summary.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// als or rjmcmc.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent sampler chains run concurrently (seeds seed, seed+1, ...).
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    split_fraction: Option<f64>,
    /// Latent dimension for ALS.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    als_max_iters: Option<usize>,
    #[arg(long)]
    als_tol: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Starting dimension for the sampler, or "random".
    #[arg(long)]
    initial_k: Option<String>,
    #[arg(long)]
    lambda1_init: Option<f64>,
    #[arg(long)]
    lambda2_init: Option<f64>,
    #[arg(long)]
    adam_alpha: Option<f64>,
    #[arg(long)]
    adam_beta1: Option<f64>,
    #[arg(long)]
    adam_beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    /// ascent or descent.
    #[arg(long)]
    eb_direction: Option<String>,
    #[arg(long)]
    freeze_tol: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    cooling_beta: Option<f64>,
    #[arg(long)]
    tmin: Option<f64>,
    #[arg(long)]
    step_scale: Option<f64>,
    #[arg(long)]
    scale_step_with_temperature: Option<bool>,
    #[arg(long)]
    smoothing_window: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        fn s<T: ToString>(x: &Option<T>) -> Option<String> {
            x.as_ref().map(|v| v.to_string())
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        vec![
            ("data_path", path(&self.data)),
            ("out_dir", path(&self.out)),
            ("method", s(&self.method)),
            ("seed", s(&self.seed)),
            ("chains", s(&self.chains)),
            ("split_fraction", s(&self.split_fraction)),
            ("k", s(&self.k)),
            ("als_max_iters", s(&self.als_max_iters)),
            ("als_tol", s(&self.als_tol)),
            ("k_max", s(&self.k_max)),
            ("initial_k", s(&self.initial_k)),
            ("lambda1_init", s(&self.lambda1_init)),
            ("lambda2_init", s(&self.lambda2_init)),
            ("adam_alpha", s(&self.adam_alpha)),
            ("adam_beta1", s(&self.adam_beta1)),
            ("adam_beta2", s(&self.adam_beta2)),
            ("adam_eps", s(&self.adam_eps)),
            ("eb_direction", s(&self.eb_direction)),
            ("freeze_tol", s(&self.freeze_tol)),
            ("t0", s(&self.t0)),
            ("cooling_beta", s(&self.cooling_beta)),
            ("tmin", s(&self.tmin)),
            ("step_scale", s(&self.step_scale)),
            (
                "scale_step_with_temperature",
                s(&self.scale_step_with_temperature),
            ),
            ("smoothing_window", s(&self.smoothing_window)),
        ]
    }

    fn config(&self) -> rjmf::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn synth(a: &SynthArgs) -> rjmf::Result<()> {
    let ratings = gen_synthetic(a.users, a.items, a.k_true, a.noise_sd, a.density, a.seed)?;
    write_movielens(&ratings, BufWriter::new(File::create(&a.out)?))?;
    eprintln!("wrote {} ratings to {}", ratings.len(), a.out.display());
    Ok(())
}

fn run(a: &RunArgs) -> rjmf::Result<()> {
    let cfg = a.config()?;
    let reports = run_experiment(&cfg)?;
    for r in &reports {
        if reports.len() > 1 {
            println!("# chain {}", r.chain);
        }
        print!("{}", r.render());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Some(Command::Synth(a)) => synth(a),
        None => run(&cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rjmf: {e}");
            ExitCode::FAILURE
        }
    }
}
