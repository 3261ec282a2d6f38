//! Experiment configuration, SNR sweeps and CSV output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{AnalogSpec, AuxChannel, DiscreteChannel, Nonlinearity, OutsidePolicy};
use crate::error::{Error, Result};
use crate::fba::{FbaEqualizer, FbaOptions, DEFAULT_STATE_CAP};
use crate::gibbs::{GibbsConfig, GibbsEqualizer};
use crate::modem::{calibrate_gain, db_to_linear, Alphabet, Family};
use crate::nn::{load_checkpoint, save_checkpoint, train_stage, Checkpoint, NnEqualizer, RnnModel, Topology, TrainConfig};
use crate::rng;
use crate::sic::{evaluate_rates, MonteCarlo, RateReport, StageEqualizer};

/// Symbols used to estimate the untracked-interference power.
const RESIDUAL_SAMPLES: usize = 20_000;

/// Channel section; defaults are the 30 km short-reach link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub symbol_rate: f64,
    pub n_sim: usize,
    pub n_os: usize,
    pub fiber_length: f64,
    pub beta2: f64,
    pub k_g: usize,
    pub k_h: usize,
    pub nonlinearity: Nonlinearity,
    pub noise_real: bool,
    /// Cut the transmit filter to this memory (in symbols).
    pub truncate: Option<usize>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let s = AnalogSpec::default();
        Self {
            symbol_rate: s.symbol_rate,
            n_sim: s.n_sim,
            n_os: s.n_os,
            fiber_length: s.fiber_length,
            beta2: s.beta2,
            k_g: s.k_g,
            k_h: s.k_h,
            nonlinearity: s.nonlinearity,
            noise_real: s.noise_real,
            truncate: None,
        }
    }
}

impl ChannelConfig {
    /// Analog parameters with unit noise variance.
    pub fn spec(&self) -> AnalogSpec {
        AnalogSpec {
            symbol_rate: self.symbol_rate,
            n_sim: self.n_sim,
            n_os: self.n_os,
            fiber_length: self.fiber_length,
            beta2: self.beta2,
            k_g: self.k_g,
            k_h: self.k_h,
            nonlinearity: self.nonlinearity,
            noise_sigma2: 1.0,
            noise_real: self.noise_real,
        }
    }

    pub fn build(&self) -> Result<DiscreteChannel> {
        let ch = DiscreteChannel::from_spec(&self.spec())?;
        match self.truncate {
            Some(k) => ch.truncated(k),
            None => Ok(ch),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationConfig {
    pub family: Family,
    pub m: usize,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self { family: Family::Pam, m: 4 }
    }
}

impl ModulationConfig {
    pub fn alphabet(&self) -> Result<Alphabet> {
        Alphabet::new(self.family, self.m)
    }
}

/// Auxiliary-channel settings shared by the trellis and sampling equalizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbaSettings {
    /// Working memory; full channel memory if absent.
    pub memory: Option<usize>,
    pub policy: OutsidePolicy,
    /// Add the untracked-interference power to the noise variance.
    pub matched_variance: bool,
    pub state_cap: usize,
    pub normalize: bool,
}

impl Default for FbaSettings {
    fn default() -> Self {
        Self { memory: None, policy: OutsidePolicy::Zero, matched_variance: false, state_cap: DEFAULT_STATE_CAP, normalize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSettings {
    pub memory: Option<usize>,
    pub policy: OutsidePolicy,
    pub matched_variance: bool,
    pub n_iter: usize,
    pub n_par: usize,
    pub burn_in: usize,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        let g = GibbsConfig::default();
        Self {
            memory: None,
            policy: OutsidePolicy::Zero,
            matched_variance: false,
            n_iter: g.n_iter,
            n_par: g.n_par,
            burn_in: g.burn_in,
        }
    }
}

impl GibbsSettings {
    pub fn sampler(&self) -> GibbsConfig {
        GibbsConfig { n_iter: self.n_iter, n_par: self.n_par, burn_in: self.burn_in }
    }
}

/// Network settings; defaults are the 4-PAM back-to-back parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnSettings {
    pub l_y: usize,
    pub l_ic: usize,
    pub hidden: Vec<usize>,
    /// Share one weight set across all phases.
    pub classic: bool,
    /// Start each SNR point from the previous point's weights.
    pub warm_start: bool,
    /// Directory of per-SNR checkpoints (loaded if present, written after
    /// training otherwise).
    pub checkpoint_dir: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for NnSettings {
    fn default() -> Self {
        Self {
            l_y: 32,
            l_ic: 16,
            hidden: vec![64],
            classic: false,
            warm_start: true,
            checkpoint_dir: None,
            train: TrainConfig::default(),
        }
    }
}

impl NnSettings {
    /// Topology of stage `stage` of `stages`; complex channel outputs or
    /// symbols use two real inputs each.
    pub fn topology(&self, alphabet: &Alphabet, real_output: bool, stage: usize, stages: usize) -> Topology {
        let cycle = stages - stage + 1;
        Topology {
            l_y: self.l_y,
            l_ic: self.l_ic,
            y_dims: if real_output { 1 } else { 2 },
            v_dims: if alphabet.is_complex() { 2 } else { 1 },
            hidden: self.hidden.clone(),
            m: alphabet.size(),
            period: if self.classic { 1 } else { cycle },
            cycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EqualizerConfig {
    Fba(FbaSettings),
    Gibbs(GibbsSettings),
    Nn(NnSettings),
}

impl Default for EqualizerConfig {
    fn default() -> Self {
        Self::Fba(FbaSettings { memory: Some(4), ..FbaSettings::default() })
    }
}

/// One experiment: channel, modulation, receiver and Monte-Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// SNR grid in dB (`SNR = P_tx`, unit noise variance).
    pub snr_db: Vec<f64>,
    /// Symbols per block.
    pub n: usize,
    pub n_blk: usize,
    /// SIC stages `S`.
    pub stages: usize,
    /// CSV destination; standard output if absent.
    pub output: Option<PathBuf>,
    pub channel: ChannelConfig,
    pub modulation: ModulationConfig,
    pub equalizer: EqualizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            snr_db: vec![],
            n: 6000,
            n_blk: 10,
            stages: 1,
            output: None,
            channel: ChannelConfig::default(),
            modulation: ModulationConfig::default(),
            equalizer: EqualizerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stages == 0 || self.n == 0 || !self.n.is_multiple_of(self.stages) {
            return bad(format!("n = {} must be a positive multiple of S = {}", self.n, self.stages));
        }
        if self.n_blk == 0 {
            return bad("n_blk must be positive".into());
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) || self.snr_db.windows(2).any(|w| w[0] >= w[1]) {
            return bad("the SNR grid must be finite and strictly increasing".into());
        }
        self.channel.spec().validate()?;
        let alphabet = self.modulation.alphabet()?;
        match &self.equalizer {
            EqualizerConfig::Fba(f) if f.state_cap == 0 => bad("state_cap must be positive".into()),
            EqualizerConfig::Gibbs(g) => g.sampler().validate(),
            EqualizerConfig::Nn(nn) => {
                for s in 1..=self.stages {
                    nn.topology(&alphabet, self.channel.noise_real, s, self.stages).validate()?;
                    nn.train.validate(self.stages - s + 1)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Alphabet scaled to `P_tx = snr_db`.
    pub fn alphabet_at(&self, channel: &DiscreteChannel, snr_db: f64) -> Result<Alphabet> {
        let a = self.modulation.alphabet()?;
        let gain = calibrate_gain(&a, channel, db_to_linear(snr_db))?;
        Ok(a.with_gain(gain))
    }

    /// Monte-Carlo settings of grid point `index`.
    pub fn monte_carlo(&self, index: usize, snr_db: f64) -> MonteCarlo {
        MonteCarlo { n: self.n, n_blk: self.n_blk, seed: rng::derive(self.seed, &[0x5eed, index as u64]), snr_db }
    }
}

fn aux_channel(
    channel: &DiscreteChannel,
    alphabet: &Alphabet,
    memory: Option<usize>,
    policy: OutsidePolicy,
    matched: bool,
    seed: u64,
) -> Result<AuxChannel> {
    let aux = AuxChannel::new(channel, alphabet, memory, policy)?;
    if matched {
        let extra = aux.residual_power(channel, alphabet, RESIDUAL_SAMPLES, rng::derive(seed, &[0x5e5]));
        aux.clone().with_sigma2(aux.sigma2() + extra)
    } else {
        Ok(aux)
    }
}

/// Builds the trellis or sampling equalizer for one operating point.
pub fn model_equalizer(
    cfg: &ExperimentConfig,
    channel: &DiscreteChannel,
    alphabet: &Alphabet,
) -> Result<Option<Box<dyn StageEqualizer>>> {
    Ok(match &cfg.equalizer {
        EqualizerConfig::Fba(f) => {
            let aux = aux_channel(channel, alphabet, f.memory, f.policy, f.matched_variance, cfg.seed)?;
            Some(Box::new(FbaEqualizer { aux, options: FbaOptions { normalize: f.normalize, state_cap: f.state_cap } }))
        }
        EqualizerConfig::Gibbs(g) => {
            let aux = aux_channel(channel, alphabet, g.memory, g.policy, g.matched_variance, cfg.seed)?;
            Some(Box::new(GibbsEqualizer { aux, config: g.sampler() }))
        }
        EqualizerConfig::Nn(_) => None,
    })
}

/// Trains all stage networks at one SNR, optionally warm-started.
pub fn train_equalizer(
    cfg: &ExperimentConfig,
    nn: &NnSettings,
    channel: &DiscreteChannel,
    alphabet: &Alphabet,
    snr_db: f64,
    warm: Option<&NnEqualizer>,
    mut progress: impl FnMut(usize, &[f64]),
) -> Result<Checkpoint> {
    let mut models: Vec<RnnModel> = Vec::with_capacity(cfg.stages);
    let mut train = Vec::with_capacity(cfg.stages);
    for s in 1..=cfg.stages {
        let topo = nn.topology(alphabet, channel.noise_real(), s, cfg.stages);
        let tc = TrainConfig { seed: rng::derive(nn.train.seed, &[s as u64]), ..nn.train.clone() };
        let init = warm.and_then(|w| w.models.get(s - 1)).filter(|m| m.topology == topo);
        let out = train_stage(channel, alphabet, cfg.stages, s, &topo, &tc, init)?;
        progress(s, &out.losses);
        models.push(out.model);
        train.push(Some(tc));
    }
    Ok(Checkpoint {
        equalizer: NnEqualizer { alphabet: alphabet.clone(), n_os: channel.n_os(), t_rnn: nn.train.t_rnn, models },
        snr_db: Some(snr_db),
        train,
    })
}

/// Checkpoint path of one SNR point inside `dir`.
pub fn checkpoint_path(dir: &Path, snr_db: f64) -> PathBuf {
    dir.join(format!("snr_{snr_db}.nlsic"))
}

/// Checks that a loaded network fits the experiment.
pub fn check_network(cfg: &ExperimentConfig, channel: &DiscreteChannel, eq: &NnEqualizer) -> Result<()> {
    if eq.stages() != cfg.stages || eq.n_os != channel.n_os() || eq.alphabet.size() != cfg.modulation.m || eq.alphabet.family() != cfg.modulation.family {
        return Err(Error::Checkpoint("checkpoint does not match the configured receiver".into()));
    }
    Ok(())
}

/// Runs every SNR point of the grid in order.
pub fn run_sweep(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<Vec<RateReport>> {
    cfg.validate()?;
    let channel = cfg.channel.build()?;
    let mut reports = Vec::with_capacity(cfg.snr_db.len());
    let mut previous: Option<NnEqualizer> = None;
    for (i, &snr) in cfg.snr_db.iter().enumerate() {
        let alphabet = cfg.alphabet_at(&channel, snr)?;
        let mc = cfg.monte_carlo(i, snr);
        let report = match &cfg.equalizer {
            EqualizerConfig::Nn(nn) => {
                let stored = nn.checkpoint_dir.as_ref().map(|d| checkpoint_path(d, snr));
                let eq = match stored.as_ref().filter(|p| p.exists()) {
                    Some(path) => {
                        log(&format!("loading {}", path.display()));
                        let mut eq = load_checkpoint(path)?.equalizer;
                        check_network(cfg, &channel, &eq)?;
                        eq.alphabet = alphabet.clone();
                        eq
                    }
                    None => {
                        let warm = if nn.warm_start { previous.as_ref() } else { None };
                        let ck = train_equalizer(cfg, nn, &channel, &alphabet, snr, warm, |s, losses| {
                            log(&format!("snr {snr} dB stage {s}: final loss {:.4}", losses.last().copied().unwrap_or(f64::NAN)))
                        })?;
                        if let Some(path) = &stored {
                            if let Some(dir) = path.parent() {
                                std::fs::create_dir_all(dir)?;
                            }
                            save_checkpoint(path, &ck)?;
                        }
                        ck.equalizer
                    }
                };
                let r = evaluate_rates(&channel, &alphabet, &eq, cfg.stages, mc)?;
                previous = Some(eq);
                r
            }
            _ => {
                let eq = model_equalizer(cfg, &channel, &alphabet)?.expect("model-based equalizer");
                evaluate_rates(&channel, &alphabet, eq.as_ref(), cfg.stages, mc)?
            }
        };
        let report = RateReport { seed: cfg.seed, ..report };
        log(&format!("snr {snr} dB: average rate {:.4} bpcu", report.average));
        reports.push(report);
    }
    Ok(reports)
}

/// Column names of the rate CSV.
pub const CSV_HEADER: [&str; 11] =
    ["snr_db", "modulation", "M", "S", "stage", "equalizer", "rate_bpcu", "n", "n_blk", "seed", "mmultiplications_per_app"];

/// Writes one row per stage plus an `avg` row per report.
pub fn write_csv(reports: &[RateReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        let mut row = |stage: String, rate: f64, mults: f64| {
            w.write_record([
                r.snr_db.to_string(),
                r.modulation.clone(),
                r.m.to_string(),
                r.stages.to_string(),
                stage,
                r.equalizer.clone(),
                format!("{rate:.6}"),
                r.n.to_string(),
                r.n_blk.to_string(),
                r.seed.to_string(),
                mults.to_string(),
            ])
        };
        for (s, rate) in r.stage_rates.iter().enumerate() {
            row((s + 1).to_string(), *rate, r.multiplications[s])?;
        }
        let mean_mults = r.multiplications.iter().sum::<f64>() / r.multiplications.len().max(1) as f64;
        row("avg".into(), r.average, mean_mults)?;
    }
    w.flush()?;
    Ok(())
}
