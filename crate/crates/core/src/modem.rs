//! Modulation alphabets, u.i.i.d. symbol sources and frames.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::DiscreteChannel;
use crate::error::{Error, Result};
use crate::rng;

/// Modulation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Unipolar `{0, 1, ..., M-1}`.
    Pam,
    /// Bipolar `{±1, ±3, ..., ±(M-1)}`.
    Ask,
    /// Star-QAM `{±a, ±ja | a = 1..M/4}`.
    Sqam,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Pam => "PAM",
            Family::Ask => "ASK",
            Family::Sqam => "SQAM",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pam" => Ok(Family::Pam),
            "ask" => Ok(Family::Ask),
            "sqam" => Ok(Family::Sqam),
            other => Err(Error::Config(format!("unknown modulation family `{other}`"))),
        }
    }
}

/// A finite symbol alphabet with a real gain applied at modulation time.
///
/// Symbols are stored unscaled with unit spacing. The symbol order is fixed,
/// and the bit label of symbol `i` is the natural binary representation of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    family: Family,
    bits: u32,
    symbols: Vec<Complex64>,
    gain: f64,
}

impl Alphabet {
    /// Builds the unscaled alphabet of `size` points with gain 1.
    pub fn new(family: Family, size: usize) -> Result<Self> {
        if size < 2 || !size.is_power_of_two() {
            return Err(Error::InvalidAlphabetSize(size));
        }
        let bits = size.trailing_zeros();
        let symbols = match family {
            Family::Pam => (0..size).map(|a| Complex64::new(a as f64, 0.0)).collect(),
            Family::Ask => (0..size)
                .map(|a| Complex64::new(2.0 * a as f64 - (size as f64 - 1.0), 0.0))
                .collect(),
            Family::Sqam => {
                if !size.is_multiple_of(4) {
                    return Err(Error::SqamSize(size));
                }
                let mut pts = Vec::with_capacity(size);
                for a in 1..=size / 4 {
                    let a = a as f64;
                    pts.push(Complex64::new(a, 0.0));
                    pts.push(Complex64::new(-a, 0.0));
                    pts.push(Complex64::new(0.0, a));
                    pts.push(Complex64::new(0.0, -a));
                }
                pts
            }
        };
        Ok(Self { family, bits, symbols, gain: 1.0 })
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Alphabet size `M`.
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    /// Bits per symbol `m = log2 M`.
    pub fn bits_per_symbol(&self) -> u32 {
        self.bits
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Unscaled symbol points in label order.
    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    /// Channel-input value of symbol `index` (gain applied).
    pub fn point(&self, index: usize) -> Complex64 {
        self.symbols[index] * self.gain
    }

    /// All channel-input values (gain applied).
    pub fn points(&self) -> Vec<Complex64> {
        self.symbols.iter().map(|&s| s * self.gain).collect()
    }

    /// True when any point has a nonzero imaginary part.
    pub fn is_complex(&self) -> bool {
        self.symbols.iter().any(|s| s.im != 0.0)
    }

    /// Mean of the unscaled symbols under the uniform distribution.
    pub fn mean(&self) -> Complex64 {
        self.symbols.iter().sum::<Complex64>() / self.size() as f64
    }

    /// `E|X|^2` of the unscaled symbols under the uniform distribution.
    pub fn mean_energy(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.size() as f64
    }

    /// Bit `bit` (0 = most significant) of the natural-binary label of `index`.
    pub fn label_bit(&self, index: usize, bit: u32) -> usize {
        (index >> (self.bits - 1 - bit)) & 1
    }

    /// Short identifier such as `4-PAM`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.size(), self.family)
    }
}

/// A block of channel-input symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Alphabet indices of the transmitted symbols.
    pub indices: Vec<usize>,
    /// Channel-input values (gain applied).
    pub x: Vec<Complex64>,
    /// Leading/trailing zeros in simulation samples; 0 until bound to a channel.
    pub guard: usize,
}

impl Frame {
    pub fn from_indices(alphabet: &Alphabet, indices: Vec<usize>) -> Self {
        let x = indices.iter().map(|&i| alphabet.point(i)).collect();
        Self { indices, x, guard: 0 }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Binds the frame to a channel's guard interval.
    pub fn with_guard(mut self, channel: &DiscreteChannel) -> Self {
        self.guard = channel.guard();
        self
    }
}

/// Draws `n` u.i.i.d. symbols; deterministic for a fixed seed.
pub fn draw_symbols(alphabet: &Alphabet, n: usize, seed: u64) -> Frame {
    let mut rng = rng::stream(seed, &[0xd7a5]);
    let indices = (0..n).map(|_| rng.gen_range(0..alphabet.size())).collect();
    Frame::from_indices(alphabet, indices)
}

/// Average transmit power per unit gain for u.i.i.d. symbols.
///
/// Uses the discrete-time surrogate of the power integral: the mean of
/// `|x(u T_sim)|^2` over all simulation samples of an infinitely long frame,
/// split into the variance term and the mean (DC) term.
pub fn unit_gain_power(alphabet: &Alphabet, channel: &DiscreteChannel) -> f64 {
    let g = channel.transmit_taps();
    let n_sim = channel.n_sim();
    let variance = alphabet.mean_energy() - alphabet.mean().norm_sqr();
    let energy: f64 = g.iter().map(|t| t.norm_sqr()).sum();
    let mut dc = 0.0;
    for phase in 0..n_sim {
        let s: Complex64 = g.iter().skip(phase).step_by(n_sim).sum();
        dc += s.norm_sqr();
    }
    (variance * energy + alphabet.mean().norm_sqr() * dc) / n_sim as f64
}

/// Returns the gain that makes the average transmit power equal `target_ptx`.
pub fn calibrate_gain(alphabet: &Alphabet, channel: &DiscreteChannel, target_ptx: f64) -> Result<f64> {
    if !(target_ptx > 0.0) {
        return Err(Error::Config(format!("target power must be positive, got {target_ptx}")));
    }
    let unit = unit_gain_power(alphabet, channel);
    if !(unit > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok((target_ptx / unit).sqrt())
}

/// Converts dB to linear power.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pam_ask_sqam_points() {
        let pam = Alphabet::new(Family::Pam, 4).unwrap();
        assert_eq!(pam.symbols(), &[c(0., 0.), c(1., 0.), c(2., 0.), c(3., 0.)]);
        assert_eq!(pam.gain(), 1.0);
        assert_eq!(pam.bits_per_symbol(), 2);

        let ask = Alphabet::new(Family::Ask, 2).unwrap();
        assert_eq!(ask.symbols(), &[c(-1., 0.), c(1., 0.)]);

        let sqam = Alphabet::new(Family::Sqam, 8).unwrap();
        assert_eq!(
            sqam.symbols(),
            &[c(1., 0.), c(-1., 0.), c(0., 1.), c(0., -1.), c(2., 0.), c(-2., 0.), c(0., 2.), c(0., -2.)]
        );
        assert!(sqam.is_complex());
        assert!(!ask.is_complex());
    }

    #[test]
    fn alphabet_errors() {
        assert!(matches!(Alphabet::new(Family::Pam, 3), Err(Error::InvalidAlphabetSize(3))));
        assert!(matches!(Alphabet::new(Family::Ask, 1), Err(Error::InvalidAlphabetSize(1))));
        assert!(matches!(Alphabet::new(Family::Sqam, 2), Err(Error::SqamSize(2))));
    }

    #[test]
    fn closed_form_energies() {
        assert_eq!(Alphabet::new(Family::Ask, 4).unwrap().mean_energy(), 5.0);
        assert_eq!(Alphabet::new(Family::Pam, 4).unwrap().mean_energy(), 3.5);
        assert_eq!(Alphabet::new(Family::Sqam, 8).unwrap().mean_energy(), 2.5);
    }

    #[test]
    fn labels_are_natural_binary() {
        let a = Alphabet::new(Family::Pam, 8).unwrap();
        assert_eq!((0..3).map(|b| a.label_bit(5, b)).collect::<Vec<_>>(), vec![1, 0, 1]);
    }

    #[test]
    fn draw_is_deterministic() {
        let a = Alphabet::new(Family::Pam, 4).unwrap();
        assert_eq!(draw_symbols(&a, 100, 3), draw_symbols(&a, 100, 3));
        assert_ne!(draw_symbols(&a, 100, 3), draw_symbols(&a, 100, 4));
        let one = draw_symbols(&a, 1, 9);
        assert_eq!(one.len(), 1);
        assert!(a.symbols().contains(&one.x[0]));
    }

    #[test]
    fn draw_frequencies_are_uniform() {
        // Chi-square goodness of fit at n = 1e6; every cell within 0.25 +- 0.002.
        let a = Alphabet::new(Family::Pam, 4).unwrap();
        let f = draw_symbols(&a, 1_000_000, 11);
        let mut counts = [0usize; 4];
        f.indices.iter().for_each(|&i| counts[i] += 1);
        let expected = 250_000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
        for &c in &counts {
            assert!((c as f64 / 1e6 - 0.25).abs() < 0.002);
        }
    }

    #[test]
    fn empirical_energy_matches_closed_form() {
        for (fam, size) in [(Family::Ask, 4), (Family::Pam, 4), (Family::Sqam, 8)] {
            let a = Alphabet::new(fam, size).unwrap();
            let f = draw_symbols(&a, 200_000, 5);
            let e = f.x.iter().map(|x| x.norm_sqr()).sum::<f64>() / f.len() as f64;
            assert!((e - a.mean_energy()).abs() < 0.05 * a.mean_energy(), "{fam}: {e}");
        }
    }
}
