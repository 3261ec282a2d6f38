//! SIC partitioning, genie-aided stage orchestration and rate estimation.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::DiscreteChannel;
use crate::error::{Error, Result};
use crate::modem::{draw_symbols, Alphabet, Frame};
use crate::rng;

/// Probability floor applied to APP entries.
pub const APP_FLOOR: f64 = 1e-12;

/// Serial/parallel index map for `S` stages over a block of `n` symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SicPartition {
    stages: usize,
    n: usize,
}

impl SicPartition {
    pub fn new(n: usize, stages: usize) -> Result<Self> {
        if stages == 0 || !n.is_multiple_of(stages) {
            return Err(Error::NotDivisible { n, stages });
        }
        Ok(Self { stages, n })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Symbols per stage `N = n / S`.
    pub fn per_stage(&self) -> usize {
        self.n / self.stages
    }

    /// `kappa(s, t) = s + (t - 1) S`, all 1-based.
    pub fn kappa(&self, s: usize, t: usize) -> usize {
        s + (t - 1) * self.stages
    }

    /// 0-based block position of stage `s` (1-based), item `t` (0-based).
    pub fn position(&self, s: usize, t: usize) -> usize {
        (s - 1) + t * self.stages
    }

    /// Splits a block into the per-stage strings `V_1..V_S`.
    pub fn split<T: Clone>(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch(format!("block has {} symbols, partition expects {}", x.len(), self.n)));
        }
        Ok((1..=self.stages).map(|s| x.iter().skip(s - 1).step_by(self.stages).cloned().collect()).collect())
    }

    pub fn check_stage(&self, stage: usize) -> Result<()> {
        if stage == 0 || stage > self.stages {
            return Err(Error::InvalidStage { stage, stages: self.stages });
        }
        Ok(())
    }

    /// Genie knowledge for `stage`: true indices of earlier stages, None elsewhere.
    pub fn known_for_stage(&self, indices: &[usize], stage: usize) -> Vec<Option<usize>> {
        indices
            .iter()
            .enumerate()
            .map(|(p, &i)| if p % self.stages + 1 < stage { Some(i) } else { None })
            .collect()
    }
}

/// Splits `x` into `S` interleaved strings.
pub fn partition<T: Clone>(x: &[T], stages: usize) -> Result<Vec<Vec<T>>> {
    SicPartition::new(x.len(), stages)?.split(x)
}

/// Per-position PMFs over the alphabet for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AppMatrix {
    m: usize,
    q: Vec<f64>,
}

impl AppMatrix {
    /// Builds from a flat row-major `N x M` buffer of nonnegative weights;
    /// rows are floored at [`APP_FLOOR`] and renormalized.
    pub fn from_weights(m: usize, mut q: Vec<f64>) -> Result<Self> {
        if m == 0 || !q.len().is_multiple_of(m) {
            return Err(Error::Shape(format!("{} entries do not form rows of {m}", q.len())));
        }
        for row in q.chunks_mut(m) {
            let sum: f64 = row.iter().filter(|v| v.is_finite() && **v > 0.0).sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|v| *v = if v.is_finite() && *v > 0.0 { *v / sum } else { 0.0 });
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / m as f64);
            }
            let mut floored = 0.0;
            for v in row.iter_mut() {
                *v = v.max(APP_FLOOR);
                floored += *v;
            }
            row.iter_mut().for_each(|v| *v /= floored);
        }
        Ok(Self { m, q })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(1, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged APP rows".into()));
        }
        Self::from_weights(m, rows.concat())
    }

    pub fn uniform(len: usize, m: usize) -> Self {
        Self { m, q: vec![1.0 / m as f64; len * m] }
    }

    pub fn len(&self) -> usize {
        self.q.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn alphabet_size(&self) -> usize {
        self.m
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.q[t * self.m..(t + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.q.chunks(self.m)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// Sum of `log2 Q_t(v_t)` over the rows.
    pub fn log2_score(&self, truth: &[usize]) -> Result<f64> {
        if truth.len() != self.len() {
            return Err(Error::LengthMismatch(format!("{} APP rows, {} symbols", self.len(), truth.len())));
        }
        Ok(truth.iter().enumerate().map(|(t, &v)| self.row(t)[v].max(APP_FLOOR).log2()).sum())
    }
}

/// `m + mean log2 Q(true symbol)`, clamped to `[0, m]`.
pub fn estimate_rate(apps: &AppMatrix, truth: &[usize], bits: u32) -> Result<f64> {
    if apps.is_empty() {
        return Ok(0.0);
    }
    let mean = apps.log2_score(truth)? / apps.len() as f64;
    Ok((bits as f64 + mean).clamp(0.0, bits as f64))
}

/// Everything a stage equalizer sees for one block.
#[derive(Debug, Clone, Copy)]
pub struct StageInput<'a> {
    /// Aligned receiver samples, `N_os` per symbol.
    pub y: &'a [Complex64],
    /// Per-position known alphabet indices (earlier stages), None if unknown.
    pub known: &'a [Option<usize>],
    /// Current stage, 1-based.
    pub stage: usize,
    pub stages: usize,
    /// Seed for randomized equalizers.
    pub seed: u64,
}

impl StageInput<'_> {
    pub fn partition(&self) -> Result<SicPartition> {
        let p = SicPartition::new(self.known.len(), self.stages)?;
        p.check_stage(self.stage)?;
        Ok(p)
    }
}

/// An APP equalizer usable as one SIC stage.
pub trait StageEqualizer: Sync {
    fn name(&self) -> String;

    /// APPs of the stage-`s` symbols `V_s`, one row per `t`.
    fn stage_apps(&self, input: &StageInput<'_>) -> Result<AppMatrix>;

    /// Real multiplications per APP estimate for the given stage.
    fn multiplications_per_app(&self, stage: usize, stages: usize) -> f64;
}

/// Runs all stages on one block with genie-aided knowledge of earlier stages.
pub fn run_sic(
    y: &[Complex64],
    frame: &Frame,
    equalizer: &dyn StageEqualizer,
    stages: usize,
    seed: u64,
) -> Result<Vec<AppMatrix>> {
    let part = SicPartition::new(frame.len(), stages)?;
    (1..=stages)
        .map(|s| {
            let known = part.known_for_stage(&frame.indices, s);
            let input = StageInput { y, known: &known, stage: s, stages, seed: rng::derive(seed, &[s as u64]) };
            equalizer.stage_apps(&input)
        })
        .collect()
}

/// Monte-Carlo SIC rates at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub stage_rates: Vec<f64>,
    pub average: f64,
    pub snr_db: f64,
    pub modulation: String,
    pub m: usize,
    pub stages: usize,
    pub equalizer: String,
    pub n: usize,
    pub n_blk: usize,
    pub seed: u64,
    pub multiplications: Vec<f64>,
}

/// Block-level settings for [`evaluate_rates`].
#[derive(Debug, Clone, Copy)]
pub struct MonteCarlo {
    pub n: usize,
    pub n_blk: usize,
    pub seed: u64,
    pub snr_db: f64,
}

/// Simulates `n_blk` blocks, runs SIC and averages the per-stage rates.
/// Blocks run in parallel; the reduction order is fixed.
pub fn evaluate_rates(
    channel: &DiscreteChannel,
    alphabet: &Alphabet,
    equalizer: &dyn StageEqualizer,
    stages: usize,
    mc: MonteCarlo,
) -> Result<RateReport> {
    let part = SicPartition::new(mc.n, stages)?;
    let per_block: Vec<Vec<f64>> = (0..mc.n_blk)
        .into_par_iter()
        .map(|b| -> Result<Vec<f64>> {
            let frame = draw_symbols(alphabet, mc.n, rng::derive(mc.seed, &[1, b as u64]));
            let y = channel.simulate(&frame.x, rng::derive(mc.seed, &[2, b as u64]));
            let apps = run_sic(&y, &frame, equalizer, stages, rng::derive(mc.seed, &[3, b as u64]))?;
            let truth = part.split(&frame.indices)?;
            apps.iter().zip(&truth).map(|(a, v)| a.log2_score(v)).collect()
        })
        .collect::<Result<_>>()?;
    let bits = alphabet.bits_per_symbol() as f64;
    let symbols = (part.per_stage() * mc.n_blk) as f64;
    let stage_rates: Vec<f64> = (0..stages)
        .map(|s| {
            let total: f64 = per_block.iter().map(|b| b[s]).sum();
            if symbols == 0.0 {
                0.0
            } else {
                (bits + total / symbols).clamp(0.0, bits)
            }
        })
        .collect();
    let average = stage_rates.iter().sum::<f64>() / stages as f64;
    Ok(RateReport {
        average,
        snr_db: mc.snr_db,
        modulation: alphabet.family().to_string(),
        m: alphabet.size(),
        stages,
        equalizer: equalizer.name(),
        n: mc.n,
        n_blk: mc.n_blk,
        seed: mc.seed,
        multiplications: (1..=stages).map(|s| equalizer.multiplications_per_app(s, stages)).collect(),
        stage_rates,
    })
}
