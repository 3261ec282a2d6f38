use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nlsic::experiment::{
    check_network, model_equalizer, run_sweep, train_equalizer, write_csv, EqualizerConfig, ExperimentConfig,
};
use nlsic::modem::draw_symbols;
use nlsic::nn::{load_checkpoint, save_checkpoint};
use nlsic::oracle::oracle_check;
use nlsic::rng;
use nlsic::sic::{evaluate_rates, RateReport};

/// SIC rate simulation for nonlinear channels with memory.
#[derive(Parser)]
#[command(name = "nlsic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one block and write symbols and receiver samples as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Transmit power in dB.
        #[arg(long)]
        snr: f64,
        /// Block length (defaults to the configured n).
        #[arg(long)]
        n: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train the stage networks at one SNR and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Warm-start from an existing checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Estimate SIC rates at one SNR.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snr: f64,
        /// Trained networks (required for the nn equalizer).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the configured SNR grid and write the rate CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Override the configured output path.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare forward-backward APPs with exhaustive enumeration.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { common, snr, n, output } => {
            let cfg = common.load()?;
            let channel = cfg.channel.build()?;
            let alphabet = cfg.alphabet_at(&channel, snr)?;
            let frame = draw_symbols(&alphabet, n.unwrap_or(cfg.n), rng::derive(cfg.seed, &[1]));
            let y = channel.simulate(&frame.x, rng::derive(cfg.seed, &[2]));
            let mut w = csv::Writer::from_writer(sink(output.as_deref())?);
            w.write_record(["position", "symbol", "x_re", "x_im", "sample", "y_re", "y_im"])?;
            let n_os = channel.n_os();
            for (i, z) in y.iter().enumerate() {
                let k = i / n_os;
                w.write_record([
                    k.to_string(),
                    frame.indices[k].to_string(),
                    frame.x[k].re.to_string(),
                    frame.x[k].im.to_string(),
                    (i % n_os).to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Command::Train { common, snr, checkpoint, init } => {
            let cfg = common.load()?;
            let EqualizerConfig::Nn(nn) = &cfg.equalizer else {
                bail!("training needs an nn equalizer section");
            };
            let channel = cfg.channel.build()?;
            let alphabet = cfg.alphabet_at(&channel, snr)?;
            let warm = match &init {
                Some(p) => Some(load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?.equalizer),
                None => None,
            };
            let ck = train_equalizer(&cfg, nn, &channel, &alphabet, snr, warm.as_ref(), |s, losses| {
                let first = losses.first().copied().unwrap_or(f64::NAN);
                let last = losses.last().copied().unwrap_or(f64::NAN);
                log(&format!("stage {s}: loss {first:.4} -> {last:.4} bits over {} iterations", losses.len()));
            })?;
            save_checkpoint(&checkpoint, &ck).with_context(|| format!("writing {}", checkpoint.display()))?;
        }
        Command::Evaluate { common, snr, checkpoint, output } => {
            let cfg = common.load()?;
            let channel = cfg.channel.build()?;
            let alphabet = cfg.alphabet_at(&channel, snr)?;
            let mc = cfg.monte_carlo(0, snr);
            let report = match model_equalizer(&cfg, &channel, &alphabet)? {
                Some(eq) => evaluate_rates(&channel, &alphabet, eq.as_ref(), cfg.stages, mc)?,
                None => {
                    let Some(path) = checkpoint else { bail!("the nn equalizer needs --checkpoint") };
                    let mut eq = load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))?.equalizer;
                    check_network(&cfg, &channel, &eq)?;
                    eq.alphabet = alphabet.clone();
                    evaluate_rates(&channel, &alphabet, &eq, cfg.stages, mc)?
                }
            };
            write_csv(&[RateReport { seed: cfg.seed, ..report }], sink(output.as_deref())?)?;
        }
        Command::Sweep { common, output } => {
            let cfg = common.load()?;
            let reports = run_sweep(&cfg, log)?;
            let path = output.or_else(|| cfg.output.clone());
            write_csv(&reports, sink(path.as_deref())?)?;
        }
        Command::OracleCheck { instances, seed, tolerance } => {
            let r = oracle_check(instances, seed)?;
            println!(
                "{} instances, {} stage passes, max |APP error| = {:.3e} (worst: {})",
                r.instances, r.stages_checked, r.max_abs_error, r.worst
            );
            if r.max_abs_error.is_nan() || r.max_abs_error > tolerance {
                bail!("oracle check failed: {:.3e} exceeds {tolerance:.1e}", r.max_abs_error);
            }
        }
    }
    Ok(())
}
