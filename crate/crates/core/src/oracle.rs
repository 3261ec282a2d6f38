//! Randomized comparison of the forward-backward recursions with exhaustive
//! enumeration on tiny channels.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{AuxChannel, DiscreteChannel, Nonlinearity};
use crate::error::Result;
use crate::fba::{brute_force_apps, run_fba_stage, FbaOptions};
use crate::modem::{calibrate_gain, db_to_linear, draw_symbols, Alphabet, Family};
use crate::rng;
use crate::sic::SicPartition;

/// Outcome of [`oracle_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub instances: usize,
    /// Stage passes compared.
    pub stages_checked: usize,
    pub max_abs_error: f64,
    /// Description of the instance with the largest error.
    pub worst: String,
}

/// One random tiny instance.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub alphabet: Alphabet,
    pub channel: DiscreteChannel,
    pub indices: Vec<usize>,
    pub y: Vec<Complex64>,
    pub stages: usize,
    pub snr_db: f64,
}

impl OracleInstance {
    /// 2-ASK or 4-PAM, memory 1..=3, `n <= 10`, `S` in {1, 2}, SNR in
    /// [-5, 15] dB, random real or complex transmit taps.
    pub fn random(seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, &[0x0ac1e]);
        let alphabet = if r.gen_bool(0.5) { Alphabet::new(Family::Ask, 2)? } else { Alphabet::new(Family::Pam, 4)? };
        let memory = r.gen_range(1..=3usize);
        let n_sim = 2;
        let n_os = if r.gen_bool(0.5) { 1 } else { 2 };
        let complex = r.gen_bool(0.5);
        let g: Vec<Complex64> = (0..memory * n_sim + 1)
            .map(|_| Complex64::new(r.gen_range(-1.0..1.0), if complex { r.gen_range(-1.0..1.0) } else { 0.0 }))
            .collect();
        let nl = if r.gen_bool(0.5) { Nonlinearity::Sld } else { Nonlinearity::Identity };
        let real_noise = nl == Nonlinearity::Sld || r.gen_bool(0.5);
        let h = vec![Complex64::new(1.0, 0.0)];
        let channel = DiscreteChannel::from_taps(g, h, n_sim, n_os, nl, 1.0, real_noise)?;
        let stages = r.gen_range(1..=2usize);
        // Keep exhaustive enumeration of 4-PAM blocks affordable.
        let max_n = if alphabet.size() == 2 { 10 } else { 8 };
        let n = stages * r.gen_range(1..=max_n / stages);
        let snr_db = r.gen_range(-5.0..15.0);
        let gain = calibrate_gain(&alphabet, &channel, db_to_linear(snr_db))?;
        let alphabet = alphabet.with_gain(gain);
        let frame = draw_symbols(&alphabet, n, rng::derive(seed, &[1]));
        let y = channel.simulate(&frame.x, rng::derive(seed, &[2]));
        Ok(Self { alphabet, channel, indices: frame.indices, y, stages, snr_db })
    }

    /// Largest per-entry APP difference over all stages.
    pub fn max_error(&self) -> Result<f64> {
        let aux = AuxChannel::exact(&self.channel, &self.alphabet)?;
        let part = SicPartition::new(self.indices.len(), self.stages)?;
        let mut worst: f64 = 0.0;
        for s in 1..=self.stages {
            let known = part.known_for_stage(&self.indices, s);
            let fba = run_fba_stage(&self.y, &known, s, self.stages, &aux, FbaOptions::default())?;
            let exact = brute_force_apps(&self.y, &known, s, self.stages, &aux)?;
            for (a, b) in fba.as_slice().iter().zip(exact.as_slice()) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    pub fn describe(&self) -> String {
        format!(
            "{} n={} S={} memory={} N_os={} {:?} snr={:.2} dB",
            self.alphabet.id(),
            self.indices.len(),
            self.stages,
            self.channel.ktilde(),
            self.channel.n_os(),
            self.channel.nonlinearity(),
            self.snr_db
        )
    }
}

/// Compares trellis APPs with exhaustive enumeration on `instances` random
/// instances derived from `seed`.
pub fn oracle_check(instances: usize, seed: u64) -> Result<OracleReport> {
    let mut report = OracleReport { instances, stages_checked: 0, max_abs_error: 0.0, worst: String::new() };
    for i in 0..instances {
        let inst = OracleInstance::random(rng::derive(seed, &[i as u64]))?;
        let err = inst.max_error()?;
        report.stages_checked += inst.stages;
        if err >= report.max_abs_error {
            report.max_abs_error = err;
            report.worst = inst.describe();
        }
    }
    Ok(report)
}
