//! Online training of one stage network and the SIC equalizer built on it.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inputs::known_values;
use super::{Adam, InputBuilder, Normalization, RnnModel, Topology};
use crate::channel::DiscreteChannel;
use crate::error::{Error, Result};
use crate::modem::{draw_symbols, Alphabet};
use crate::rng;
use crate::sic::{AppMatrix, SicPartition, StageEqualizer, StageInput};

/// Optimizer and data settings for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Adam step size.
    pub lr: f64,
    pub n_batch: usize,
    pub n_iter: usize,
    /// Serialized inputs per snippet; a multiple of `S - s + 1`.
    pub t_rnn: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Inputs used to estimate the normalization statistics.
    pub norm_samples: usize,
    /// Gradient partial sums reduced in fixed order.
    pub chunks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            n_batch: 128,
            n_iter: 10_000,
            t_rnn: 32,
            seed: 1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            norm_samples: 10_000,
            chunks: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, cycle: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.n_batch == 0 || self.t_rnn == 0 || self.chunks == 0 || self.norm_samples == 0 {
            return bad("batch size, T_RNN, chunks and normalization samples must be positive".into());
        }
        if !self.t_rnn.is_multiple_of(cycle) {
            return bad(format!("T_RNN = {} is not a multiple of the period {cycle}", self.t_rnn));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("Adam decay rates must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }
}

/// Trained model and per-iteration batch losses (bits).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RnnModel,
    pub losses: Vec<f64>,
}

/// Simulated data for a run of consecutive snippets.
struct Stream {
    y: Vec<Complex64>,
    values: Vec<Complex64>,
    indices: Vec<usize>,
    /// First symbol time of the usable region.
    t_start: usize,
}

struct Generator<'a> {
    channel: &'a DiscreteChannel,
    alphabet: &'a Alphabet,
    stages: usize,
    stage: usize,
    /// Guard symbol times on each side.
    pad_t: usize,
}

impl<'a> Generator<'a> {
    fn new(channel: &'a DiscreteChannel, alphabet: &'a Alphabet, topo: &Topology, stages: usize, stage: usize) -> Self {
        let pad_sym = topo.l_y.div_ceil(channel.n_os()) + channel.span() + topo.l_ic * stages + stages;
        Self { channel, alphabet, stages, stage, pad_t: pad_sym.div_ceil(stages) }
    }

    fn stream(&self, t_count: usize, seed: u64) -> Stream {
        let n = (t_count + 2 * self.pad_t) * self.stages;
        let frame = draw_symbols(self.alphabet, n, rng::derive(seed, &[0x7a1]));
        let y = self.channel.simulate(&frame.x, rng::derive(seed, &[0x7a2]));
        let values = frame.indices.iter().map(|&i| self.alphabet.symbols()[i]).collect();
        Stream { y, values, indices: frame.indices, t_start: self.pad_t }
    }

    fn labels(&self, s: &Stream, t0: usize, count: usize) -> Vec<usize> {
        (t0..t0 + count).map(|t| s.indices[t * self.stages + self.stage - 1]).collect()
    }
}

/// Trains the stage-`stage` network of an `stages`-stage SIC receiver.
///
/// `topology.cycle` must equal `S - s + 1`; `topology.period` is either the
/// same (time-varying) or 1 (classic). A compatible `warm` model seeds the
/// parameters; normalization is always re-estimated.
pub fn train_stage(
    channel: &DiscreteChannel,
    alphabet: &Alphabet,
    stages: usize,
    stage: usize,
    topology: &Topology,
    cfg: &TrainConfig,
    warm: Option<&RnnModel>,
) -> Result<TrainOutcome> {
    let cycle = stages.checked_sub(stage).map(|d| d + 1).filter(|_| stage >= 1).ok_or(Error::InvalidStage { stage, stages })?;
    topology.validate()?;
    if topology.cycle != cycle || (topology.period != cycle && topology.period != 1) {
        return Err(Error::Shape(format!(
            "stage {stage} of {stages} needs cycle {cycle} and period 1 or {cycle}, got {} and {}",
            topology.cycle, topology.period
        )));
    }
    if topology.m != alphabet.size() {
        return Err(Error::Shape(format!("topology has M = {} but the alphabet has {}", topology.m, alphabet.size())));
    }
    cfg.validate(cycle)?;
    let builder = InputBuilder::new(topology, channel.n_os(), stage, stages)?;
    let gen = Generator::new(channel, alphabet, topology, stages, stage);
    let dim = topology.input_dim();

    let mut model = match warm {
        Some(w) if w.topology == *topology => w.clone(),
        Some(_) => return Err(Error::Shape("warm-start model has a different topology".into())),
        None => RnnModel::random(topology.clone(), rng::derive(cfg.seed, &[0x1417]))?,
    };

    let norm_t = cfg.norm_samples.div_ceil(cycle);
    let s = gen.stream(norm_t, rng::derive(cfg.seed, &[0x0a5]));
    let raw = builder.build_range(&s.y, &s.values, topology.l_ic, s.t_start, norm_t)?;
    model.normalization = Normalization::fit(&raw, dim)?;

    let snip_t = cfg.t_rnn / cycle;
    let mut adam = Adam::with_rates(model.params.len(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut losses = Vec::with_capacity(cfg.n_iter);
    let chunk_len = cfg.n_batch.div_ceil(cfg.chunks);
    let scale = 1.0 / cfg.n_batch as f64;
    for iter in 0..cfg.n_iter {
        let s = gen.stream(snip_t * cfg.n_batch, rng::derive(cfg.seed, &[0x17e, iter as u64]));
        let parts: Vec<(f64, Vec<f64>)> = (0..cfg.n_batch)
            .collect::<Vec<_>>()
            .par_chunks(chunk_len)
            .map(|items| -> Result<(f64, Vec<f64>)> {
                let mut grad = vec![0.0; model.params.len()];
                let mut loss = 0.0;
                for &b in items {
                    let t0 = s.t_start + b * snip_t;
                    let mut x = builder.build_range(&s.y, &s.values, topology.l_ic, t0, snip_t)?;
                    model.normalization.apply(&mut x);
                    let tr = model.forward(&x)?;
                    loss += model.backward_from(&tr, &gen.labels(&s, t0, snip_t), scale, &mut grad)?;
                }
                Ok((loss, grad))
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0; model.params.len()];
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        loss *= scale;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged(iter));
        }
        losses.push(loss);
        adam.step(&mut model.params, &grad, cfg.lr);
    }
    Ok(TrainOutcome { model, losses })
}

/// SIC equalizer with one trained network per stage.
#[derive(Debug, Clone)]
pub struct NnEqualizer {
    pub alphabet: Alphabet,
    pub n_os: usize,
    /// Serialized inputs per evaluation chunk.
    pub t_rnn: usize,
    /// Models for stages `1..=S`.
    pub models: Vec<RnnModel>,
}

impl NnEqualizer {
    pub fn stages(&self) -> usize {
        self.models.len()
    }

    fn model(&self, stage: usize, stages: usize) -> Result<&RnnModel> {
        if stages != self.models.len() {
            return Err(Error::Shape(format!("equalizer holds {} stages, receiver uses {stages}", self.models.len())));
        }
        stage.checked_sub(1).and_then(|i| self.models.get(i)).ok_or(Error::InvalidStage { stage, stages })
    }
}

impl StageEqualizer for NnEqualizer {
    fn name(&self) -> String {
        "nn".into()
    }

    /// Runs the network over consecutive `T_RNN`-input chunks, each with zero
    /// initial states, as during training.
    fn stage_apps(&self, input: &StageInput<'_>) -> Result<AppMatrix> {
        let model = self.model(input.stage, input.stages)?;
        let topo = &model.topology;
        let builder = InputBuilder::new(topo, self.n_os, input.stage, input.stages)?;
        let part = SicPartition::new(input.known.len(), input.stages)?;
        let values = known_values(input.known, &self.alphabet)?;
        let chunk_t = (self.t_rnn / topo.cycle).max(1);
        let starts: Vec<usize> = (0..part.per_stage()).step_by(chunk_t).collect();
        let probs: Vec<Vec<f64>> = starts
            .par_iter()
            .map(|&t0| -> Result<Vec<f64>> {
                let count = chunk_t.min(part.per_stage() - t0);
                let mut x = builder.build_range(input.y, &values, topo.l_ic, t0, count)?;
                model.normalization.apply(&mut x);
                model.predict(&x)
            })
            .collect::<Result<_>>()?;
        AppMatrix::from_weights(topo.m, probs.concat())
    }

    fn multiplications_per_app(&self, stage: usize, stages: usize) -> f64 {
        self.model(stage, stages).map_or(f64::NAN, |m| m.topology.multiplications())
    }
}
