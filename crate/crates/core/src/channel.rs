//! Oversampled nonlinear channel: filter synthesis, simulation and the
//! (possibly memory-truncated) Gaussian likelihood used by the equalizers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::{Alphabet, Frame};
use crate::rng;

/// Memoryless nonlinearity applied between the two filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Nonlinearity {
    /// Square-law detector `|x|^2`.
    Sld,
    /// Rapp power-amplifier model with smoothness `p`.
    Rapp { p: f64 },
    Identity,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(&self, z: Complex64) -> Complex64 {
        match *self {
            Nonlinearity::Sld => Complex64::new(z.norm_sqr(), 0.0),
            Nonlinearity::Rapp { p } => {
                let r = z.norm();
                if r == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let out = r / (1.0 + r.powf(2.0 * p)).powf(1.0 / (2.0 * p));
                z * (out / r)
            }
            Nonlinearity::Identity => z,
        }
    }
}

/// Applies `kind` to every sample.
pub fn apply_nonlinearity(z: &[Complex64], kind: Nonlinearity) -> Vec<Complex64> {
    z.iter().map(|&v| kind.apply(v)).collect()
}

/// Analog system parameters from which the discrete channel is synthesized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalogSpec {
    /// Symbol rate in Hz.
    pub symbol_rate: f64,
    pub n_sim: usize,
    pub n_os: usize,
    /// Fiber length in m.
    pub fiber_length: f64,
    /// Group-velocity dispersion in s^2/m.
    pub beta2: f64,
    pub k_g: usize,
    pub k_h: usize,
    pub nonlinearity: Nonlinearity,
    pub noise_sigma2: f64,
    pub noise_real: bool,
}

impl Default for AnalogSpec {
    fn default() -> Self {
        Self::fiber(30e3)
    }
}

impl AnalogSpec {
    /// Short-reach IM/DD link: 35 GBd, SLD, real post-detection noise.
    pub fn fiber(fiber_length: f64) -> Self {
        Self {
            symbol_rate: 35e9,
            n_sim: 2,
            n_os: 2,
            fiber_length,
            beta2: -2.168e-26,
            k_g: 151 * 2 + 1,
            k_h: 1,
            nonlinearity: Nonlinearity::Sld,
            noise_sigma2: 1.0,
            noise_real: true,
        }
    }

    /// Returns a copy with a different noise variance.
    pub fn with_sigma(mut self, sigma2: f64) -> Self {
        self.noise_sigma2 = sigma2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidChannel(m));
        if self.n_sim == 0 || self.n_os == 0 || !self.n_sim.is_multiple_of(self.n_os) {
            return bad(format!("N_sim = {} must be a positive multiple of N_os = {}", self.n_sim, self.n_os));
        }
        if self.k_g.is_multiple_of(2) || self.k_h.is_multiple_of(2) {
            return bad(format!("filter lengths must be odd, got K_g = {}, K_h = {}", self.k_g, self.k_h));
        }
        if !(self.symbol_rate > 0.0) {
            return bad("symbol rate must be positive".into());
        }
        if !(self.noise_sigma2 >= 0.0) {
            return bad("noise variance must be nonnegative".into());
        }
        if !self.fiber_length.is_finite() || !self.beta2.is_finite() {
            return bad("fiber parameters must be finite".into());
        }
        Ok(())
    }

    /// Accumulated dispersion phase coefficient in normalized frequency `f / B`.
    fn dispersion_phase(&self) -> f64 {
        0.5 * self.beta2 * (2.0 * PI * self.symbol_rate).powi(2) * self.fiber_length
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    for i in 0..order {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Samples `g(u T_sim)` for `u` in `[-K_g/2, K_g/2]`, where `g` is the
/// ideal lowpass of bandwidth `B` followed by the quadratic-phase fiber
/// response. The band integral uses composite Gauss-Legendre quadrature, so
/// the dispersion-free case reduces to `B sinc(B u T_sim)` to rounding error.
pub fn build_transmit_filter(spec: &AnalogSpec) -> Vec<Complex64> {
    let half = (spec.k_g / 2) as i64;
    let phi = spec.dispersion_phase();
    let panels = (2 * spec.k_g).max(64);
    let rule = gauss_legendre(8);
    let width = 1.0 / panels as f64;
    let mut nodes = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let lo = -0.5 + p as f64 * width;
        for &(x, w) in &rule {
            let nu = lo + 0.5 * width * (x + 1.0);
            let spectrum = Complex64::from_polar(0.5 * width * w, phi * nu * nu);
            nodes.push((nu, spectrum));
        }
    }
    (-half..=half)
        .map(|u| {
            let t = 2.0 * PI * u as f64 / spec.n_sim as f64;
            let s: Complex64 = nodes.iter().map(|&(nu, c)| c * Complex64::from_polar(1.0, t * nu)).sum();
            s * spec.symbol_rate
        })
        .collect()
}

/// Samples of the brickwall receive filter of bandwidth `2B`, scaled so the
/// single-tap case at `N_sim = 2` is the identity.
pub fn build_receive_filter(spec: &AnalogSpec) -> Vec<Complex64> {
    let half = (spec.k_h / 2) as i64;
    let scale = 2.0 / spec.n_sim as f64;
    (-half..=half)
        .map(|u| Complex64::new(scale * sinc(scale * u as f64), 0.0))
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Fraction of the transmit filter energy captured by the truncated taps.
pub fn captured_energy_fraction(spec: &AnalogSpec, taps: &[Complex64]) -> f64 {
    let t_sim = 1.0 / (spec.symbol_rate * spec.n_sim as f64);
    // The analog filter is an all-pass on a brickwall band: total energy is B.
    taps.iter().map(|g| g.norm_sqr()).sum::<f64>() * t_sim / spec.symbol_rate
}

/// Discrete oversampled channel.
///
/// Output slot `k` holds the `N_os` receiver samples taken at simulation
/// times `N_sim k + d l`, `l = 0..N_os`, so it is aligned with input symbol
/// `k` (the receiver offset `k0` is removed at simulation time). It depends on
/// the input symbols `k - past ..= k + future`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    g: Vec<Complex64>,
    h: Vec<Complex64>,
    n_sim: usize,
    n_os: usize,
    nonlinearity: Nonlinearity,
    noise_sigma2: f64,
    noise_real: bool,
    past: usize,
    future: usize,
    /// `coef[l][u'][i]`: weight of window symbol `i` in the pre-nonlinearity
    /// sum feeding receive tap `u'` of sample `l`.
    coef: Vec<Vec<Vec<Complex64>>>,
}

impl DiscreteChannel {
    pub fn from_spec(spec: &AnalogSpec) -> Result<Self> {
        spec.validate()?;
        Self::from_taps(
            build_transmit_filter(spec),
            build_receive_filter(spec),
            spec.n_sim,
            spec.n_os,
            spec.nonlinearity,
            spec.noise_sigma2,
            spec.noise_real,
        )
    }

    pub fn from_taps(
        g: Vec<Complex64>,
        h: Vec<Complex64>,
        n_sim: usize,
        n_os: usize,
        nonlinearity: Nonlinearity,
        noise_sigma2: f64,
        noise_real: bool,
    ) -> Result<Self> {
        if n_sim == 0 || n_os == 0 || !n_sim.is_multiple_of(n_os) {
            return Err(Error::InvalidChannel(format!(
                "N_sim = {n_sim} must be a positive multiple of N_os = {n_os}"
            )));
        }
        if g.len().is_multiple_of(2) || h.len().is_multiple_of(2) {
            return Err(Error::InvalidChannel(format!(
                "filter lengths must be odd, got K_g = {}, K_h = {}",
                g.len(),
                h.len()
            )));
        }
        if !(noise_sigma2 >= 0.0) {
            return Err(Error::InvalidChannel("noise variance must be nonnegative".into()));
        }
        let d = n_sim / n_os;
        let dg = (g.len() / 2) as i64;
        let dh = (h.len() / 2) as i64;
        let reach = (dg + dh) as usize;
        let past = reach / n_sim;
        let future = (reach + n_sim - d) / n_sim;
        let span = past + future + 1;
        let mut coef = vec![vec![vec![Complex64::new(0.0, 0.0); span]; h.len()]; n_os];
        for (l, per_l) in coef.iter_mut().enumerate() {
            let t = (d * l) as i64;
            for (j, per_u) in per_l.iter_mut().enumerate() {
                let up = j as i64 - dh;
                for (i, c) in per_u.iter_mut().enumerate() {
                    let r = i as i64 - past as i64;
                    let idx = t - up - n_sim as i64 * r + dg;
                    if (0..g.len() as i64).contains(&idx) {
                        *c = g[idx as usize];
                    }
                }
            }
        }
        Ok(Self { g, h, n_sim, n_os, nonlinearity, noise_sigma2, noise_real, past, future, coef })
    }

    /// Surrogate with the transmit filter cut to its central
    /// `memory * N_sim + 1` taps, so that `K~_g = memory`.
    pub fn truncated(&self, memory: usize) -> Result<Self> {
        let keep = memory * self.n_sim + 1;
        if keep > self.g.len() {
            return Err(Error::InvalidChannel(format!(
                "cannot truncate {} transmit taps to {keep}",
                self.g.len()
            )));
        }
        let c = self.g.len() / 2;
        let half = keep / 2;
        Self::from_taps(
            self.g[c - half..=c + half].to_vec(),
            self.h.clone(),
            self.n_sim,
            self.n_os,
            self.nonlinearity,
            self.noise_sigma2,
            self.noise_real,
        )
    }

    /// Returns a copy with a different noise variance.
    pub fn with_noise(mut self, sigma2: f64) -> Self {
        self.noise_sigma2 = sigma2;
        self
    }

    pub fn transmit_taps(&self) -> &[Complex64] {
        &self.g
    }

    pub fn receive_taps(&self) -> &[Complex64] {
        &self.h
    }

    pub fn n_sim(&self) -> usize {
        self.n_sim
    }

    pub fn n_os(&self) -> usize {
        self.n_os
    }

    /// Decimation factor `d = N_sim / N_os`.
    pub fn decimation(&self) -> usize {
        self.n_sim / self.n_os
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn noise_sigma2(&self) -> f64 {
        self.noise_sigma2
    }

    pub fn noise_real(&self) -> bool {
        self.noise_real
    }

    pub fn ktilde_g(&self) -> usize {
        (self.g.len() - 1) / self.n_sim
    }

    pub fn ktilde_h(&self) -> usize {
        (self.h.len() - 1) / self.n_sim
    }

    /// Total system memory `K~ = K~_g + K~_h`.
    pub fn ktilde(&self) -> usize {
        self.ktilde_g() + self.ktilde_h()
    }

    /// Receiver alignment offset `k0`.
    pub fn k0(&self) -> usize {
        let d = self.decimation();
        (self.g.len() / 2) / d + (self.h.len() / 2) / d
    }

    /// Guard zeros at each block end, in simulation samples.
    pub fn guard(&self) -> usize {
        self.g.len() / 2 + self.h.len() / 2
    }

    /// Number of earlier symbols a slot depends on.
    pub fn past(&self) -> usize {
        self.past
    }

    /// Number of later symbols a slot depends on.
    pub fn future(&self) -> usize {
        self.future
    }

    /// Symbol span `past + future` that one slot depends on. Equals `K~` for
    /// every filter layout in use; it can exceed `K~` by one when the filter
    /// half-lengths are not aligned to the symbol grid.
    pub fn span(&self) -> usize {
        self.past + self.future
    }

    pub(crate) fn coefficients(&self) -> &[Vec<Vec<Complex64>>] {
        &self.coef
    }

    fn slot_into(&self, window: impl Fn(usize) -> Complex64, out: &mut [Complex64]) {
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (hu, per_u) in self.h.iter().zip(&self.coef[l]) {
                let mut pre = Complex64::new(0.0, 0.0);
                for (i, c) in per_u.iter().enumerate() {
                    pre += c * window(i);
                }
                acc += hu * self.nonlinearity.apply(pre);
            }
            *o = acc;
        }
    }

    /// Noiseless receiver samples of one slot given its `span() + 1` window
    /// symbols, oldest first (gain applied).
    pub fn noiseless_mean(&self, window: &[Complex64]) -> Result<Vec<Complex64>> {
        if window.len() != self.span() + 1 {
            return Err(Error::LengthMismatch(format!(
                "window has {} symbols, channel needs {}",
                window.len(),
                self.span() + 1
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_os];
        self.slot_into(|i| window[i], &mut out);
        Ok(out)
    }

    /// Noiseless output of a whole block, `N_os` samples per symbol.
    pub fn noiseless(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len() as i64;
        let mut y = vec![Complex64::new(0.0, 0.0); self.n_os * x.len()];
        for (k, slot) in y.chunks_mut(self.n_os).enumerate() {
            let start = k as i64 - self.past as i64;
            self.slot_into(
                |i| {
                    let p = start + i as i64;
                    if (0..n).contains(&p) {
                        x[p as usize]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                },
                slot,
            );
        }
        y
    }

    /// Adds the channel's Gaussian noise in place.
    pub fn add_noise(&self, y: &mut [Complex64], seed: u64) {
        if self.noise_sigma2 == 0.0 {
            return;
        }
        let mut rng = rng::stream(seed, &[0x4015e]);
        if self.noise_real {
            let s = self.noise_sigma2.sqrt();
            for v in y.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                v.re += s * n;
            }
        } else {
            let s = (self.noise_sigma2 / 2.0).sqrt();
            for v in y.iter_mut() {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                *v += Complex64::new(s * a, s * b);
            }
        }
    }

    /// Simulates one block: upsample, filter, nonlinearity, filter, decimate,
    /// add noise. Returns `N_os * n` aligned samples.
    pub fn simulate_frame(&self, frame: &Frame, seed: u64) -> Result<Vec<Complex64>> {
        if frame.guard != 0 && frame.guard != self.guard() {
            return Err(Error::LengthMismatch(format!(
                "frame guard {} does not match channel guard {}",
                frame.guard,
                self.guard()
            )));
        }
        if frame.indices.len() != frame.x.len() {
            return Err(Error::LengthMismatch("frame indices and symbols differ in length".into()));
        }
        Ok(self.simulate(&frame.x, seed))
    }

    /// Simulates a raw symbol block (gain applied).
    pub fn simulate(&self, x: &[Complex64], seed: u64) -> Vec<Complex64> {
        let mut y = self.noiseless(x);
        self.add_noise(&mut y, seed);
        y
    }
}

/// Symbol assumed for positions the truncated likelihood does not track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutsidePolicy {
    /// Untracked symbols are zero.
    #[default]
    Zero,
    /// Untracked symbols equal the alphabet mean.
    Mean,
}

const MEAN_TABLE_CAP: usize = 1 << 22;

/// Gaussian auxiliary channel over a window of `memory + 1` consecutive
/// symbols. With full memory it is the true channel law.
///
/// Window symbols are given as digits in `0..=M`, where digit `M` is the
/// zero symbol used for positions outside the block. Slot `k` depends on
/// symbols `k + offset ..= k + lead`.
#[derive(Debug, Clone)]
pub struct AuxChannel {
    m: usize,
    n_os: usize,
    memory: usize,
    offset: i64,
    points: Vec<Complex64>,
    h: Vec<Complex64>,
    nonlinearity: Nonlinearity,
    coef: Vec<Vec<Vec<Complex64>>>,
    fill: Vec<Vec<Complex64>>,
    sigma2: f64,
    real: bool,
    log_norm: f64,
    table: Option<Vec<Complex64>>,
}

impl AuxChannel {
    /// Full-memory (exact) likelihood.
    pub fn exact(channel: &DiscreteChannel, alphabet: &Alphabet) -> Result<Self> {
        Self::new(channel, alphabet, None, OutsidePolicy::Zero)
    }

    /// Likelihood with memory `memory` (None = full), keeping the window of
    /// maximal tap energy.
    pub fn new(
        channel: &DiscreteChannel,
        alphabet: &Alphabet,
        memory: Option<usize>,
        policy: OutsidePolicy,
    ) -> Result<Self> {
        let span = channel.span();
        let memory = memory.unwrap_or(span).min(span);
        if !(channel.noise_sigma2() > 0.0) {
            return Err(Error::InvalidChannel("likelihood needs a positive noise variance".into()));
        }
        let coef_full = channel.coefficients();
        let energy: Vec<f64> = (0..=span)
            .map(|i| {
                coef_full
                    .iter()
                    .flat_map(|per_l| per_l.iter().zip(channel.receive_taps()))
                    .map(|(per_u, hu)| (per_u[i] * hu).norm_sqr())
                    .sum()
            })
            .collect();
        let start = best_window(&energy, memory + 1);
        let fill_symbol = match policy {
            OutsidePolicy::Zero => Complex64::new(0.0, 0.0),
            OutsidePolicy::Mean => alphabet.mean() * alphabet.gain(),
        };
        let coef = coef_full
            .iter()
            .map(|per_l| per_l.iter().map(|per_u| per_u[start..=start + memory].to_vec()).collect())
            .collect();
        let fill = coef_full
            .iter()
            .map(|per_l| {
                per_l
                    .iter()
                    .map(|per_u| {
                        per_u
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i < start || *i > start + memory)
                            .map(|(_, c)| c * fill_symbol)
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut points = alphabet.points();
        points.push(Complex64::new(0.0, 0.0));
        let sigma2 = channel.noise_sigma2();
        let real = channel.noise_real();
        let log_norm = if real { -0.5 * (2.0 * PI * sigma2).ln() } else { -(PI * sigma2).ln() };
        let mut aux = Self {
            m: alphabet.size(),
            n_os: channel.n_os(),
            memory,
            offset: start as i64 - channel.past() as i64,
            points,
            h: channel.receive_taps().to_vec(),
            nonlinearity: channel.nonlinearity(),
            coef,
            fill,
            sigma2,
            real,
            log_norm,
            table: None,
        };
        let entries = ((aux.m + 1) as f64).powi(memory as i32 + 1) * aux.n_os as f64;
        if entries <= MEAN_TABLE_CAP as f64 {
            let count = (aux.m + 1).pow(memory as u32 + 1);
            let mut table = vec![Complex64::new(0.0, 0.0); count * aux.n_os];
            let mut digits = vec![0usize; memory + 1];
            for (idx, out) in table.chunks_mut(aux.n_os).enumerate() {
                aux.decode(idx, &mut digits);
                aux.compute_mean(&digits, out);
            }
            aux.table = Some(table);
        }
        Ok(aux)
    }

    /// Alphabet size `M`; digit `M` denotes the zero symbol.
    pub fn alphabet_size(&self) -> usize {
        self.m
    }

    pub fn n_os(&self) -> usize {
        self.n_os
    }

    /// Working memory `N~`.
    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Offset of the oldest window symbol relative to the slot index.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Offset of the newest window symbol relative to the slot index.
    pub fn lead(&self) -> i64 {
        self.offset + self.memory as i64
    }

    /// Replaces the auxiliary noise variance.
    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidChannel("likelihood needs a positive noise variance".into()));
        }
        self.sigma2 = sigma2;
        self.log_norm = if self.real { -0.5 * (2.0 * PI * sigma2).ln() } else { -(PI * sigma2).ln() };
        Ok(self)
    }

    /// Mean squared error between the true noiseless output and this model's
    /// slot means, per real dimension for real noise and per complex sample
    /// otherwise, over `n` u.i.i.d. symbols.
    pub fn residual_power(&self, channel: &DiscreteChannel, alphabet: &Alphabet, n: usize, seed: u64) -> f64 {
        let frame = crate::modem::draw_symbols(alphabet, n, seed);
        let y = channel.noiseless(&frame.x);
        let mut digits = vec![0usize; self.memory + 1];
        let mut mean = vec![Complex64::new(0.0, 0.0); self.n_os];
        let mut acc = 0.0;
        for k in 0..n {
            for (i, d) in digits.iter_mut().enumerate() {
                let p = k as i64 + self.offset + i as i64;
                *d = if (0..n as i64).contains(&p) { frame.indices[p as usize] } else { self.m };
            }
            self.mean(&digits, &mut mean);
            for (a, b) in y[k * self.n_os..(k + 1) * self.n_os].iter().zip(&mean) {
                acc += if self.real { (a.re - b.re).powi(2) } else { (a - b).norm_sqr() };
            }
        }
        acc / (n * self.n_os).max(1) as f64
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Index of a digit window in base `M + 1`, newest digit least significant.
    pub fn encode(&self, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &d| acc * (self.m + 1) + d)
    }

    fn decode(&self, mut idx: usize, digits: &mut [usize]) {
        for d in digits.iter_mut().rev() {
            *d = idx % (self.m + 1);
            idx /= self.m + 1;
        }
    }

    fn compute_mean(&self, digits: &[usize], out: &mut [Complex64]) {
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for ((hu, per_u), fill) in self.h.iter().zip(&self.coef[l]).zip(&self.fill[l]) {
                let mut pre = *fill;
                for (c, &d) in per_u.iter().zip(digits) {
                    pre += c * self.points[d];
                }
                acc += hu * self.nonlinearity.apply(pre);
            }
            *o = acc;
        }
    }

    /// Noiseless slot samples computed without the lookup table.
    pub fn mean_direct(&self, digits: &[usize], out: &mut [Complex64]) {
        self.compute_mean(digits, out);
    }

    /// Noiseless slot samples for an encoded window (see [`Self::encode`]).
    #[inline]
    pub fn mean_by_index(&self, idx: usize, out: &mut [Complex64]) {
        match &self.table {
            Some(t) => out.copy_from_slice(&t[idx * self.n_os..(idx + 1) * self.n_os]),
            None => {
                let mut buf = [0usize; 64];
                let mut heap;
                let digits: &mut [usize] = if self.memory < buf.len() {
                    &mut buf[..=self.memory]
                } else {
                    heap = vec![0usize; self.memory + 1];
                    &mut heap
                };
                self.decode(idx, digits);
                self.compute_mean(digits, out);
            }
        }
    }

    /// Noiseless slot samples for a window of `memory + 1` digits, oldest first.
    pub fn mean(&self, digits: &[usize], out: &mut [Complex64]) {
        debug_assert_eq!(digits.len(), self.memory + 1);
        match &self.table {
            Some(t) => {
                let i = self.encode(digits) * self.n_os;
                out.copy_from_slice(&t[i..i + self.n_os]);
            }
            None => self.compute_mean(digits, out),
        }
    }

    /// Gaussian log-density of one slot's samples given their mean.
    #[inline]
    pub fn slot_log_density(&self, y: &[Complex64], mean: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        if self.real {
            for (a, b) in y.iter().zip(mean) {
                let e = a.re - b.re;
                acc += self.log_norm - e * e / (2.0 * self.sigma2);
            }
        } else {
            for (a, b) in y.iter().zip(mean) {
                acc += self.log_norm - (a - b).norm_sqr() / self.sigma2;
            }
        }
        acc
    }

    /// Log-likelihood of a slot given its window digits.
    pub fn slot_log_likelihood(&self, y: &[Complex64], digits: &[usize]) -> f64 {
        let mut mean = [Complex64::new(0.0, 0.0); 8];
        if self.n_os <= mean.len() {
            self.mean(digits, &mut mean[..self.n_os]);
            self.slot_log_density(y, &mean[..self.n_os])
        } else {
            let mut mean = vec![Complex64::new(0.0, 0.0); self.n_os];
            self.mean(digits, &mut mean);
            self.slot_log_density(y, &mean)
        }
    }
}

/// Start of the `len`-wide window with maximal energy; ties go to the window
/// whose center is closest to the energy centroid, then to the earlier one.
fn best_window(energy: &[f64], len: usize) -> usize {
    let total: f64 = energy.iter().sum();
    let centroid = if total > 0.0 {
        energy.iter().enumerate().map(|(i, e)| i as f64 * e).sum::<f64>() / total
    } else {
        (energy.len() - 1) as f64 / 2.0
    };
    let mut best = 0;
    let mut best_e = f64::NEG_INFINITY;
    for start in 0..=energy.len() - len {
        let e: f64 = energy[start..start + len].iter().sum();
        let tol = 1e-12 * total.max(f64::MIN_POSITIVE);
        let center = |s: usize| (s as f64 + (len - 1) as f64 / 2.0 - centroid).abs();
        if e > best_e + tol || ((e - best_e).abs() <= tol && center(start) < center(best) - 1e-12) {
            best = start;
            best_e = e;
        }
    }
    best
}
