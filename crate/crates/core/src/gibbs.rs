//! Bit-wise Gibbs sampling APP estimates over the truncated-memory likelihood.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::AuxChannel;
use crate::error::{Error, Result};
use crate::rng;
use crate::sic::{AppMatrix, SicPartition, StageEqualizer, StageInput};

/// Sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsConfig {
    /// Sweeps per chain, including burn-in.
    pub n_iter: usize,
    /// Independent chains.
    pub n_par: usize,
    /// Leading sweeps discarded from the counts.
    pub burn_in: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { n_iter: 125, n_par: 64, burn_in: 25 }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_par == 0 {
            return Err(Error::Config("Gibbs sampling needs at least one chain".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn-in {} must be below the sweep count {}",
                self.burn_in, self.n_iter
            )));
        }
        Ok(())
    }
}

/// Per-block sampler context: slot windows resolved to table indices.
struct Sampler<'a> {
    aux: &'a AuxChannel,
    y: &'a [Complex64],
    n: usize,
    m: usize,
    bits: u32,
    /// For each position, the slots whose window contains it and the weight
    /// of the position inside that slot's encoded window.
    touches: Vec<Vec<(usize, usize)>>,
    /// Encoded window contribution of out-of-block zeros per slot.
    zero_base: Vec<usize>,
}

impl<'a> Sampler<'a> {
    fn new(aux: &'a AuxChannel, y: &'a [Complex64], n: usize) -> Self {
        let m = aux.alphabet_size();
        let memory = aux.memory();
        let mut touches = vec![Vec::new(); n];
        let mut zero_base = vec![0; n];
        for (k, zb) in zero_base.iter_mut().enumerate() {
            for i in 0..=memory {
                let p = k as i64 + aux.offset() + i as i64;
                let w = (m + 1).pow((memory - i) as u32);
                if (0..n as i64).contains(&p) {
                    touches[p as usize].push((k, w));
                } else {
                    *zb += w * m;
                }
            }
        }
        Self { aux, y, n, m, bits: m.trailing_zeros(), touches, zero_base }
    }

    fn slot_index(&self, x: &[usize], k: usize) -> usize {
        let mut idx = self.zero_base[k];
        let memory = self.aux.memory();
        for i in 0..=memory {
            let p = k as i64 + self.aux.offset() + i as i64;
            if (0..self.n as i64).contains(&p) {
                idx += x[p as usize] * (self.m + 1).pow((memory - i) as u32);
            }
        }
        idx
    }

    fn slot_ll(&self, k: usize, idx: usize, mean: &mut [Complex64]) -> f64 {
        let n_os = self.aux.n_os();
        self.aux.mean_by_index(idx, mean);
        self.aux.slot_log_density(&self.y[k * n_os..(k + 1) * n_os], mean)
    }

    /// Runs one chain and returns symbol counts for `targets`.
    fn chain(&self, known: &[Option<usize>], targets: &[usize], cfg: &GibbsConfig, seed: u64, id: u64) -> Vec<u64> {
        let mut rng = rng::stream(seed, &[0x61bb5, id]);
        let m = self.m;
        let mut x: Vec<usize> = known.iter().map(|k| k.unwrap_or_else(|| rng.gen_range(0..m))).collect();
        let mut slot_idx: Vec<usize> = (0..self.n).map(|k| self.slot_index(&x, k)).collect();
        let free: Vec<usize> = (0..self.n).filter(|&p| known[p].is_none()).collect();
        let mut mean = vec![Complex64::new(0.0, 0.0); self.aux.n_os()];
        let mut counts = vec![0u64; targets.len() * m];
        for sweep in 0..cfg.n_iter {
            for &p in &free {
                for b in 0..self.bits {
                    let mask = 1 << (self.bits - 1 - b);
                    let d0 = x[p] & !mask;
                    let d1 = x[p] | mask;
                    let mut diff = 0.0;
                    for &(k, w) in &self.touches[p] {
                        let rest = slot_idx[k] - w * x[p];
                        diff += self.slot_ll(k, rest + w * d1, &mut mean) - self.slot_ll(k, rest + w * d0, &mut mean);
                    }
                    let p1 = if diff >= 0.0 { 1.0 / (1.0 + (-diff).exp()) } else { diff.exp() / (1.0 + diff.exp()) };
                    let d = if rng.gen::<f64>() < p1 { d1 } else { d0 };
                    if d != x[p] {
                        for &(k, w) in &self.touches[p] {
                            slot_idx[k] = slot_idx[k] - w * x[p] + w * d;
                        }
                        x[p] = d;
                    }
                }
            }
            if sweep >= cfg.burn_in {
                for (t, &p) in targets.iter().enumerate() {
                    counts[t * m + x[p]] += 1;
                }
            }
        }
        counts
    }
}

/// Gibbs-sampling APPs of the stage-`s` symbols; deterministic for a fixed seed.
pub fn run_gibbs_stage(
    y: &[Complex64],
    known: &[Option<usize>],
    stage: usize,
    stages: usize,
    aux: &AuxChannel,
    cfg: &GibbsConfig,
    seed: u64,
) -> Result<AppMatrix> {
    cfg.validate()?;
    let n = known.len();
    let part = SicPartition::new(n, stages)?;
    part.check_stage(stage)?;
    if y.len() != n * aux.n_os() {
        return Err(Error::LengthMismatch(format!("{} samples for {n} symbols", y.len())));
    }
    if (aux.alphabet_size() as f64 + 1.0).powi(aux.memory() as i32 + 1) > (1u64 << 62) as f64 {
        return Err(Error::TooLarge((aux.alphabet_size() as f64 + 1.0).powi(aux.memory() as i32 + 1)));
    }
    let sampler = Sampler::new(aux, y, n);
    let targets: Vec<usize> = (0..part.per_stage()).map(|t| part.position(stage, t)).collect();
    let per_chain: Vec<Vec<u64>> =
        (0..cfg.n_par).into_par_iter().map(|c| sampler.chain(known, &targets, cfg, seed, c as u64)).collect();
    let m = aux.alphabet_size();
    let mut total = vec![1.0; targets.len() * m];
    for counts in &per_chain {
        for (t, c) in total.iter_mut().zip(counts) {
            *t += *c as f64;
        }
    }
    AppMatrix::from_weights(m, total)
}

/// Gibbs-sampling stage equalizer.
#[derive(Debug, Clone)]
pub struct GibbsEqualizer {
    pub aux: AuxChannel,
    pub config: GibbsConfig,
}

impl StageEqualizer for GibbsEqualizer {
    fn name(&self) -> String {
        "gibbs".into()
    }

    fn stage_apps(&self, input: &StageInput<'_>) -> Result<AppMatrix> {
        run_gibbs_stage(input.y, input.known, input.stage, input.stages, &self.aux, &self.config, input.seed)
    }

    fn multiplications_per_app(&self, _stage: usize, _stages: usize) -> f64 {
        count_multiplications(self.aux.memory(), self.aux.alphabet_size(), &self.config)
    }
}

/// Sampler cost per APP estimate, `N~^2 m N_iter N_par`.
pub fn count_multiplications(memory: usize, m: usize, cfg: &GibbsConfig) -> f64 {
    let bits = m.trailing_zeros() as f64;
    (memory as f64).powi(2) * bits * cfg.n_iter as f64 * cfg.n_par as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DiscreteChannel, Nonlinearity};
    use crate::fba::brute_force_apps;
    use crate::modem::{draw_symbols, Alphabet, Family};

    fn setup(sigma2: f64) -> (AuxChannel, Vec<usize>, Vec<Complex64>) {
        let taps = [0.4, 1.0, -0.5].map(|t| Complex64::new(t, 0.0)).to_vec();
        let ch = DiscreteChannel::from_taps(taps, vec![Complex64::new(1.0, 0.0)], 1, 1, Nonlinearity::Identity, sigma2, true)
            .unwrap();
        let a = Alphabet::new(Family::Ask, 2).unwrap();
        let f = draw_symbols(&a, 8, 3);
        let y = ch.simulate(&f.x, 4);
        (AuxChannel::exact(&ch, &a).unwrap(), f.indices, y)
    }

    #[test]
    fn config_validation() {
        assert!(GibbsConfig { n_iter: 10, n_par: 0, burn_in: 1 }.validate().is_err());
        assert!(GibbsConfig { n_iter: 10, n_par: 1, burn_in: 10 }.validate().is_err());
        assert!(GibbsConfig::default().validate().is_ok());
    }

    #[test]
    fn deterministic_and_normalized() {
        let (aux, _, y) = setup(0.5);
        let cfg = GibbsConfig { n_iter: 50, n_par: 4, burn_in: 5 };
        let a = run_gibbs_stage(&y, &[None; 8], 1, 1, &aux, &cfg, 9).unwrap();
        let b = run_gibbs_stage(&y, &[None; 8], 1, 1, &aux, &cfg, 9).unwrap();
        assert_eq!(a, b);
        for row in a.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn burn_in_sweeps_are_discarded() {
        let (aux, _, y) = setup(0.5);
        let cfg = GibbsConfig { n_iter: 125, n_par: 1, burn_in: 25 };
        let apps = run_gibbs_stage(&y, &[None; 8], 1, 1, &aux, &cfg, 1).unwrap();
        // Counts plus add-1 smoothing: every row has total 100 + M.
        for row in apps.rows() {
            for v in row {
                let count = v * 102.0;
                assert!((count - count.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_likelihood_gives_uniform() {
        let (aux, _, y) = setup(1e8);
        let cfg = GibbsConfig { n_iter: 400, n_par: 8, burn_in: 20 };
        let apps = run_gibbs_stage(&y, &[None; 8], 1, 1, &aux, &cfg, 2).unwrap();
        for row in apps.rows() {
            assert!((row[0] - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn close_to_exact_with_side_information() {
        let (aux, idx, y) = setup(0.5);
        let part = SicPartition::new(8, 2).unwrap();
        let known = part.known_for_stage(&idx, 2);
        let exact = brute_force_apps(&y, &known, 2, 2, &aux).unwrap();
        let cfg = GibbsConfig { n_iter: 1000, n_par: 16, burn_in: 100 };
        let gs = run_gibbs_stage(&y, &known, 2, 2, &aux, &cfg, 5).unwrap();
        for (a, b) in gs.rows().zip(exact.rows()) {
            let tv: f64 = a.iter().zip(b).map(|(x, z)| (x - z).abs()).sum::<f64>() / 2.0;
            assert!(tv < 0.05, "tv = {tv}");
        }
    }

    #[test]
    fn counter() {
        let cfg = GibbsConfig { n_iter: 125, n_par: 64, burn_in: 25 };
        assert_eq!(count_multiplications(21, 4, &cfg), 441.0 * 2.0 * 125.0 * 64.0);
    }
}
