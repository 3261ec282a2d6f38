//! Forward-backward APP computation with SIC side information, and the
//! exhaustive-enumeration oracle it is checked against.
//!
//! The trellis steps through the unknown block positions in order. The state
//! after position `p` holds the unknown symbols among the last `max(N~, 1)`
//! positions, newest digit least significant. A slot is scored at the step
//! that reveals its newest window symbol; slots whose newest symbol is a known
//! one are scored at the next unknown step (the SIC factor). For genie-aided
//! stages this is the collapsed periodic trellis with one step per `(j, t)`,
//! `j = s..S`.

use num_complex::Complex64;

use crate::channel::AuxChannel;
use crate::error::{Error, Result};
use crate::sic::{AppMatrix, SicPartition, StageEqualizer, StageInput};

/// Default bound on the number of trellis states.
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

/// Trellis bookkeeping for stage `s` of `S` with the working memory padded to
/// a multiple of `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub stage: usize,
    pub stages: usize,
    /// Working memory rounded up to a multiple of `S`.
    pub memory: usize,
}

impl StateSpace {
    pub fn new(stage: usize, stages: usize, memory: usize) -> Result<Self> {
        if stages == 0 || stage == 0 || stage > stages {
            return Err(Error::InvalidStage { stage, stages });
        }
        Ok(Self { stage, stages, memory: memory.div_ceil(stages) * stages })
    }

    /// Unknown symbols per state, `(S - s + 1) K / S`.
    pub fn unknown_memory(&self) -> usize {
        (self.stages - self.stage + 1) * self.memory / self.stages
    }

    /// Known symbols per state, `(s - 1) K / S`.
    pub fn known_memory(&self) -> usize {
        (self.stage - 1) * self.memory / self.stages
    }

    pub fn state_count(&self, m: usize) -> f64 {
        (m as f64).powi(self.unknown_memory() as i32)
    }

    /// Unknown and known parts of the state at `(j, t)`, as ascending 1-based
    /// block positions. Positions before the block start are omitted.
    pub fn partition(&self, j: usize, t: usize) -> (Vec<usize>, Vec<usize>) {
        let k = j as i64 + (t as i64 - 1) * self.stages as i64;
        let mut unknown = Vec::new();
        let mut known = Vec::new();
        for pos in (k - self.memory as i64 + 1)..=k {
            if pos < 1 {
                continue;
            }
            let p = pos as usize;
            if (p - 1) % self.stages + 1 < self.stage {
                known.push(p);
            } else {
                unknown.push(p);
            }
        }
        (unknown, known)
    }
}

/// `f_I`: `(1/M) p(y_slot | window)` when `next` extends `prev` by `v`, else 0.
///
/// Windows are the full `N~`-symbol states (known and unknown), oldest first,
/// as alphabet digits (digit `M` = zero symbol outside the block).
pub fn likelihood_f1(aux: &AuxChannel, y_slot: &[Complex64], prev: &[usize], next: &[usize], v: usize) -> f64 {
    let consistent = match (prev.len(), next.len()) {
        (_, 0) => false,
        (a, b) if a == b && a > 0 => prev[1..] == next[..b - 1] && next[b - 1] == v,
        (0, 1) => next[0] == v,
        _ => false,
    };
    if !consistent {
        return 0.0;
    }
    let mut window = prev.to_vec();
    window.push(v);
    let window = &window[window.len() - (aux.memory() + 1)..];
    aux.slot_log_likelihood(y_slot, window).exp() / aux.alphabet_size() as f64
}

/// `f_II`: product of slot likelihoods at the known-symbol slots; 1 when empty.
pub fn factor_f2(aux: &AuxChannel, slots: &[(&[Complex64], &[usize])]) -> f64 {
    slots.iter().map(|(y, w)| aux.slot_log_likelihood(y, w).exp()).product()
}

/// Options for [`run_fba_stage`].
#[derive(Debug, Clone, Copy)]
pub struct FbaOptions {
    /// Per-step sum normalization of the metrics.
    pub normalize: bool,
    pub state_cap: usize,
}

impl Default for FbaOptions {
    fn default() -> Self {
        Self { normalize: true, state_cap: DEFAULT_STATE_CAP }
    }
}

/// Which recursion cases fired during a stage pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FbaTrace {
    /// Transitions into a stage-`s` position (`j = s`).
    pub first_case: usize,
    /// Transitions into positions of later stages (`j > s`).
    pub second_case: usize,
    /// First-case transitions that scored known-symbol slots.
    pub nontrivial_f2: usize,
}

/// How one window symbol of a slot is resolved during a transition.
#[derive(Clone, Copy)]
enum Source {
    Prev(usize),
    New,
}

struct SlotPlan {
    kappa: usize,
    base: usize,
    terms: Vec<(usize, Source)>,
}

struct Step {
    pos: usize,
    /// Unknown positions held by the state after this step, ascending.
    held: Vec<usize>,
    slots: Vec<SlotPlan>,
    known_slots: usize,
}

struct Trellis<'a> {
    aux: &'a AuxChannel,
    y: &'a [Complex64],
    m: usize,
    steps: Vec<Step>,
    /// Slots scored after the last step, as a function of its state.
    tail: Vec<SlotPlan>,
}

fn pow(m: usize, e: usize) -> usize {
    m.pow(e as u32)
}

impl<'a> Trellis<'a> {
    fn build(aux: &'a AuxChannel, y: &'a [Complex64], known: &[Option<usize>], cap: usize) -> Result<Self> {
        let n = known.len();
        let m = aux.alphabet_size();
        if y.len() != n * aux.n_os() {
            return Err(Error::LengthMismatch(format!(
                "{} samples for {n} symbols at N_os = {}",
                y.len(),
                aux.n_os()
            )));
        }
        if let Some(bad) = known.iter().flatten().find(|&&d| d >= m) {
            return Err(Error::Config(format!("known symbol index {bad} outside alphabet of {m}")));
        }
        let memory = aux.memory();
        let span = memory.max(1);
        let lead = aux.lead();
        let unknown: Vec<usize> = (0..n).filter(|&p| known[p].is_none()).collect();
        let radix = m + 1;

        let plan = |q: i64, prev: &[usize], new: Option<usize>| -> Option<SlotPlan> {
            let kappa = q - lead;
            if kappa < 0 || kappa >= n as i64 {
                return None;
            }
            let mut base = 0;
            let mut terms = Vec::new();
            for i in 0..=memory {
                let pos = q - memory as i64 + i as i64;
                let w = pow(radix, memory - i);
                if pos < 0 || pos >= n as i64 {
                    base += w * m;
                    continue;
                }
                let pos = pos as usize;
                match known[pos] {
                    Some(d) => base += w * d,
                    None if Some(pos) == new => terms.push((w, Source::New)),
                    None => {
                        let k = prev.iter().position(|&p| p == pos).expect("window symbol missing from state");
                        terms.push((w, Source::Prev(k)));
                    }
                }
            }
            Some(SlotPlan { kappa: kappa as usize, base, terms })
        };

        let widest = (0..unknown.len())
            .map(|i| 1 + unknown[..i].iter().rev().take_while(|&&u| u + span > unknown[i]).count())
            .max()
            .unwrap_or(0);
        let states = (m as f64).powi(widest as i32);
        if states > cap as f64 || (radix as f64).powi(memory as i32 + 1) > (1u64 << 62) as f64 {
            return Err(Error::Infeasible { states, cap });
        }

        let mut steps = Vec::with_capacity(unknown.len());
        let mut held: Vec<usize> = Vec::new();
        let mut last: Option<usize> = None;
        for &p in &unknown {
            let mut next: Vec<usize> = held.iter().copied().filter(|&u| u + span > p).collect();
            next.push(p);
            let first_q = match last {
                Some(l) => l as i64 + 1,
                None => p as i64,
            };
            let mut slots = Vec::new();
            let mut known_slots = 0;
            for q in first_q..=p as i64 {
                if let Some(s) = plan(q, &held, Some(p)) {
                    if q < p as i64 {
                        known_slots += 1;
                    }
                    slots.push(s);
                }
            }
            steps.push(Step { pos: p, held: next.clone(), slots, known_slots });
            held = next;
            last = Some(p);
        }
        let mut tail = Vec::new();
        if let Some(l) = last {
            for q in (l as i64 + 1)..=(n as i64 - 1 + lead) {
                if let Some(s) = plan(q, &held, None) {
                    tail.push(s);
                }
            }
        }
        Ok(Self { aux, y, m, steps, tail })
    }

    fn prev_len(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.steps[i - 1].held.len()
        }
    }

    /// Log-likelihood of the slots scored at step `i` for every `(old, v)`,
    /// laid out as `old * M + v`.
    fn step_log_lik(&self, i: usize, out: &mut Vec<f64>) {
        let a = self.prev_len(i);
        let olds = pow(self.m, a);
        out.clear();
        out.resize(olds * self.m, 0.0);
        self.accumulate(&self.steps[i].slots, a, true, out);
    }

    fn tail_log_lik(&self, out: &mut Vec<f64>) {
        let a = self.steps.last().map_or(0, |s| s.held.len());
        out.clear();
        out.resize(pow(self.m, a), 0.0);
        self.accumulate(&self.tail, a, false, out);
    }

    fn accumulate(&self, slots: &[SlotPlan], a: usize, with_new: bool, out: &mut [f64]) {
        let m = self.m;
        let n_os = self.aux.n_os();
        let olds = pow(m, a);
        let vs = if with_new { m } else { 1 };
        let mut idx_old = vec![0usize; olds];
        let mut mean = vec![Complex64::new(0.0, 0.0); n_os];
        for slot in slots {
            let y = &self.y[slot.kappa * n_os..(slot.kappa + 1) * n_os];
            let mut w_new = 0;
            idx_old.iter_mut().for_each(|v| *v = slot.base);
            for &(w, src) in &slot.terms {
                match src {
                    Source::New => w_new = w,
                    Source::Prev(k) => {
                        let div = pow(m, a - 1 - k);
                        for (o, v) in idx_old.iter_mut().enumerate() {
                            *v += w * ((o / div) % m);
                        }
                    }
                }
            }
            for (o, &base) in idx_old.iter().enumerate() {
                for v in 0..vs {
                    self.aux.mean_by_index(base + w_new * v, &mut mean);
                    out[o * vs + v] += self.aux.slot_log_density(y, &mean);
                }
            }
        }
    }
}

fn to_weights(ll: &[f64], normalize: bool, out: &mut Vec<f64>) {
    let shift = if normalize { ll.iter().copied().fold(f64::NEG_INFINITY, f64::max) } else { 0.0 };
    let shift = if shift.is_finite() { shift } else { 0.0 };
    out.clear();
    out.extend(ll.iter().map(|&v| (v - shift).exp()));
}

fn normalize_in_place(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// APPs of the stage-`s` symbols via the forward-backward recursions.
pub fn run_fba_stage(
    y: &[Complex64],
    known: &[Option<usize>],
    stage: usize,
    stages: usize,
    aux: &AuxChannel,
    opts: FbaOptions,
) -> Result<AppMatrix> {
    run_fba_stage_traced(y, known, stage, stages, aux, opts).map(|(a, _)| a)
}

/// [`run_fba_stage`] that also reports which recursion cases fired.
pub fn run_fba_stage_traced(
    y: &[Complex64],
    known: &[Option<usize>],
    stage: usize,
    stages: usize,
    aux: &AuxChannel,
    opts: FbaOptions,
) -> Result<(AppMatrix, FbaTrace)> {
    let part = SicPartition::new(known.len(), stages)?;
    part.check_stage(stage)?;
    let trellis = Trellis::build(aux, y, known, opts.state_cap)?;
    let m = trellis.m;
    let steps = &trellis.steps;
    let is_target = |p: usize| p % stages + 1 == stage;

    let mut trace = FbaTrace::default();
    for st in steps {
        if is_target(st.pos) {
            trace.first_case += 1;
            if st.known_slots > 0 {
                trace.nontrivial_f2 += 1;
            }
        } else {
            trace.second_case += 1;
        }
    }

    // Forward pass; metrics kept only where an APP is read out.
    let mut ll = Vec::new();
    let mut lik = Vec::new();
    let mut alpha = vec![1.0];
    let mut stored: Vec<Option<Vec<f64>>> = vec![None; steps.len()];
    for (i, st) in steps.iter().enumerate() {
        trellis.step_log_lik(i, &mut ll);
        to_weights(&ll, opts.normalize, &mut lik);
        let keep = st.held.len() - 1;
        let modk = pow(m, keep);
        let mut next = vec![0.0; pow(m, st.held.len())];
        for (o, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let b = (o % modk) * m;
            for v in 0..m {
                next[b + v] += a * lik[o * m + v] / m as f64;
            }
        }
        if opts.normalize {
            normalize_in_place(&mut next);
        }
        if is_target(st.pos) {
            stored[i] = Some(next.clone());
        }
        alpha = next;
    }

    // Backward pass, starting from the trailing slots.
    let mut beta = Vec::new();
    trellis.tail_log_lik(&mut ll);
    to_weights(&ll, opts.normalize, &mut beta);
    if beta.is_empty() {
        beta.push(1.0);
    }
    if opts.normalize {
        normalize_in_place(&mut beta);
    }
    let mut rows = vec![0.0; part.per_stage() * m];
    for (i, st) in steps.iter().enumerate().rev() {
        if let Some(a) = &stored[i] {
            let t = st.pos / stages;
            let row = &mut rows[t * m..(t + 1) * m];
            for (h, (&fa, &fb)) in a.iter().zip(&beta).enumerate() {
                row[h % m] += fa * fb;
            }
        }
        trellis.step_log_lik(i, &mut ll);
        to_weights(&ll, opts.normalize, &mut lik);
        let keep = st.held.len() - 1;
        let modk = pow(m, keep);
        let olds = pow(m, trellis.prev_len(i));
        let mut prev = vec![0.0; olds];
        for (o, p) in prev.iter_mut().enumerate() {
            let b = (o % modk) * m;
            *p = (0..m).map(|v| beta[b + v] * lik[o * m + v]).sum::<f64>() / m as f64;
        }
        if opts.normalize {
            normalize_in_place(&mut prev);
        }
        beta = prev;
    }

    for t in 0..part.per_stage() {
        let p = part.position(stage, t);
        if let Some(d) = known[p] {
            let row = &mut rows[t * m..(t + 1) * m];
            row.iter_mut().enumerate().for_each(|(a, v)| *v = if a == d { 1.0 } else { 0.0 });
        }
    }
    Ok((AppMatrix::from_weights(m, rows)?, trace))
}

/// Exact conditional marginals of the stage-`s` symbols by enumerating every
/// assignment of the unknown symbols.
pub fn brute_force_apps(
    y: &[Complex64],
    known: &[Option<usize>],
    stage: usize,
    stages: usize,
    aux: &AuxChannel,
) -> Result<AppMatrix> {
    let n = known.len();
    let part = SicPartition::new(n, stages)?;
    part.check_stage(stage)?;
    let m = aux.alphabet_size();
    let n_os = aux.n_os();
    if y.len() != n * n_os {
        return Err(Error::LengthMismatch(format!("{} samples for {n} symbols", y.len())));
    }
    let unknown: Vec<usize> = (0..n).filter(|&p| known[p].is_none()).collect();
    let u = unknown.len();
    let candidates = (m as f64).powi(u as i32);
    if candidates > (1u64 << 24) as f64 {
        return Err(Error::TooLarge(candidates));
    }
    let slot_of: Vec<Option<usize>> = (0..n).map(|p| unknown.iter().position(|&q| q == p)).collect();

    // Per-slot tables over the unknown symbols inside each window.
    struct Slot {
        vars: Vec<usize>,
        table: Vec<f64>,
    }
    let memory = aux.memory();
    let mut slots = Vec::with_capacity(n);
    let mut mean = vec![Complex64::new(0.0, 0.0); n_os];
    for kappa in 0..n {
        let first = kappa as i64 + aux.offset();
        let window: Vec<Option<usize>> = (0..=memory as i64)
            .map(|i| {
                let p = first + i;
                if p < 0 || p >= n as i64 {
                    None
                } else {
                    Some(p as usize)
                }
            })
            .collect();
        let vars: Vec<usize> =
            window.iter().flatten().filter_map(|&p| slot_of[p]).collect::<Vec<_>>();
        let yk = &y[kappa * n_os..(kappa + 1) * n_os];
        let mut table = vec![0.0; pow(m, vars.len())];
        let mut digits = vec![0usize; memory + 1];
        for (c, entry) in table.iter_mut().enumerate() {
            let mut k = 0;
            for (i, w) in window.iter().enumerate() {
                digits[i] = match w {
                    None => m,
                    Some(p) => match known[*p] {
                        Some(d) => d,
                        None => {
                            let d = (c / pow(m, vars.len() - 1 - k)) % m;
                            k += 1;
                            d
                        }
                    },
                };
            }
            aux.mean_direct(&digits, &mut mean);
            *entry = aux.slot_log_density(yk, &mean);
        }
        slots.push(Slot { vars, table });
    }

    let total = |assign: &[usize]| -> f64 {
        slots
            .iter()
            .map(|s| {
                let idx = s.vars.iter().fold(0, |acc, &v| acc * m + assign[v]);
                s.table[idx]
            })
            .sum()
    };
    let odometer = |assign: &mut [usize]| {
        for d in assign.iter_mut().rev() {
            *d += 1;
            if *d < m {
                return;
            }
            *d = 0;
        }
    };
    let count = pow(m, u);
    let mut assign = vec![0usize; u];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..count {
        best = best.max(total(&assign));
        odometer(&mut assign);
    }
    let mut rows = vec![0.0; part.per_stage() * m];
    assign.iter_mut().for_each(|d| *d = 0);
    for _ in 0..count {
        let w = (total(&assign) - best).exp();
        for t in 0..part.per_stage() {
            let p = part.position(stage, t);
            let d = match known[p] {
                Some(d) => d,
                None => assign[slot_of[p].expect("unknown position")],
            };
            rows[t * m + d] += w;
        }
        odometer(&mut assign);
    }
    AppMatrix::from_weights(m, rows)
}

/// Forward-backward stage equalizer over a fixed auxiliary channel.
#[derive(Debug, Clone)]
pub struct FbaEqualizer {
    pub aux: AuxChannel,
    pub options: FbaOptions,
}

impl FbaEqualizer {
    pub fn new(aux: AuxChannel) -> Self {
        Self { aux, options: FbaOptions::default() }
    }
}

impl StageEqualizer for FbaEqualizer {
    fn name(&self) -> String {
        "fba".into()
    }

    fn stage_apps(&self, input: &StageInput<'_>) -> Result<AppMatrix> {
        run_fba_stage(input.y, input.known, input.stage, input.stages, &self.aux, self.options)
    }

    fn multiplications_per_app(&self, _stage: usize, _stages: usize) -> f64 {
        count_multiplications(self.aux.alphabet_size(), self.aux.memory())
    }
}

/// Trellis cost per APP estimate, `M^(N~ + 1)`.
pub fn count_multiplications(m: usize, memory: usize) -> f64 {
    (m as f64).powi(memory as i32 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DiscreteChannel, Nonlinearity, OutsidePolicy};
    use crate::modem::{draw_symbols, Alphabet, Family};

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn tiny(taps: &[f64], sigma2: f64, nl: Nonlinearity) -> DiscreteChannel {
        DiscreteChannel::from_taps(taps.iter().map(|&t| c(t)).collect(), vec![c(1.0)], 1, 1, nl, sigma2, true).unwrap()
    }

    #[test]
    fn worked_partition_example() {
        let sp = StateSpace::new(2, 3, 3).unwrap();
        assert_eq!(sp.unknown_memory(), 2);
        assert_eq!(sp.known_memory(), 1);
        assert_eq!(sp.partition(3, 1), (vec![2, 3], vec![1]));
        assert_eq!(sp.partition(1, 2), (vec![2, 3], vec![4]));
        assert_eq!(sp.partition(2, 2), (vec![3, 5], vec![4]));
        assert_eq!(sp.partition(3, 2), (vec![5, 6], vec![4]));
        assert_eq!(StateSpace::new(1, 2, 3).unwrap().memory, 4);
    }

    #[test]
    fn f1_and_f2() {
        let ch = tiny(&[0.0, 1.0, 0.5], 0.3, Nonlinearity::Identity);
        let alpha = Alphabet::new(Family::Ask, 2).unwrap();
        let aux = AuxChannel::exact(&ch, &alpha).unwrap();
        assert_eq!(aux.memory(), 2);
        // y_k = x_k + 0.5 x_{k-1}: window (x_{k-1}, x_k, x_{k+1}).
        let y = [c(0.7)];
        let got = likelihood_f1(&aux, &y, &[1, 0], &[0, 0], 0);
        let mean = -1.0 + 0.5;
        let want = 0.5 * (-(0.7f64 - mean).powi(2) / 0.6).exp() / (2.0 * std::f64::consts::PI * 0.3).sqrt();
        assert!((got - want).abs() < 1e-12);
        assert_eq!(likelihood_f1(&aux, &y, &[1, 0], &[1, 0], 0), 0.0);
        assert_eq!(factor_f2(&aux, &[]), 1.0);
        let one = factor_f2(&aux, &[(&y, &[1, 0, 1])]);
        assert!((one - 2.0 * want).abs() < 1e-12);
    }

    #[test]
    fn memoryless_apps_are_normalized_likelihoods() {
        let ch = tiny(&[1.0], 0.5, Nonlinearity::Identity);
        let alpha = Alphabet::new(Family::Ask, 2).unwrap();
        let aux = AuxChannel::exact(&ch, &alpha).unwrap();
        let y = vec![c(0.3), c(-1.2), c(2.0)];
        let known = vec![None; 3];
        let apps = run_fba_stage(&y, &known, 1, 1, &aux, FbaOptions::default()).unwrap();
        for (t, row) in apps.rows().enumerate() {
            let l0 = (-(y[t].re + 1.0).powi(2) / 1.0).exp();
            let l1 = (-(y[t].re - 1.0).powi(2) / 1.0).exp();
            assert!((row[1] - l1 / (l0 + l1)).abs() < 1e-12);
        }
    }

    fn instance(taps: &[f64], fam: Family, m: usize, n: usize, seed: u64) -> (AuxChannel, Vec<usize>, Vec<Complex64>) {
        let ch = tiny(taps, 0.4, Nonlinearity::Sld);
        let alpha = Alphabet::new(fam, m).unwrap().with_gain(0.8);
        let frame = draw_symbols(&alpha, n, seed);
        let y = ch.simulate(&frame.x, seed + 100);
        (AuxChannel::exact(&ch, &alpha).unwrap(), frame.indices, y)
    }

    #[test]
    fn matches_brute_force_for_every_stage() {
        let (aux, idx, y) = instance(&[0.3, 1.0, -0.6], Family::Ask, 2, 8, 1);
        for stages in [1, 2, 4] {
            let part = SicPartition::new(8, stages).unwrap();
            for s in 1..=stages {
                let known = part.known_for_stage(&idx, s);
                let fba = run_fba_stage(&y, &known, s, stages, &aux, FbaOptions::default()).unwrap();
                let bf = brute_force_apps(&y, &known, s, stages, &aux).unwrap();
                for (a, b) in fba.as_slice().iter().zip(bf.as_slice()) {
                    assert!((a - b).abs() < 1e-9, "S={stages} s={s}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn normalization_does_not_change_apps() {
        let (aux, idx, y) = instance(&[0.2, 0.9, 0.4], Family::Pam, 4, 6, 3);
        let part = SicPartition::new(6, 2).unwrap();
        for s in 1..=2 {
            let known = part.known_for_stage(&idx, s);
            let a = run_fba_stage(&y, &known, s, 2, &aux, FbaOptions::default()).unwrap();
            let raw = FbaOptions { normalize: false, ..Default::default() };
            let b = run_fba_stage(&y, &known, s, 2, &aux, raw).unwrap();
            for (x, z) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recursion_cases() {
        let (aux, idx, y) = instance(&[0.3, 1.0, -0.6], Family::Ask, 2, 12, 5);
        let part = SicPartition::new(12, 3).unwrap();
        let run = |s| {
            let known = part.known_for_stage(&idx, s);
            run_fba_stage_traced(&y, &known, s, 3, &aux, FbaOptions::default()).unwrap().1
        };
        let t1 = run(1);
        assert_eq!((t1.first_case, t1.second_case, t1.nontrivial_f2), (4, 8, 0));
        let t2 = run(2);
        assert_eq!((t2.first_case, t2.second_case), (4, 4));
        assert!(t2.nontrivial_f2 >= 3);
        let t3 = run(3);
        assert_eq!((t3.first_case, t3.second_case), (4, 0));
    }

    #[test]
    fn state_cap_is_enforced() {
        let (aux, _, y) = instance(&[0.3, 1.0, -0.6], Family::Pam, 4, 8, 2);
        let opts = FbaOptions { state_cap: 8, ..Default::default() };
        let err = run_fba_stage(&y, &[None; 8], 1, 1, &aux, opts).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn mismatched_memory_matches_brute_force_on_same_model() {
        let ch = tiny(&[0.1, 0.3, 1.0, -0.5, 0.05], 0.5, Nonlinearity::Sld);
        let alpha = Alphabet::new(Family::Pam, 2).unwrap();
        let aux = AuxChannel::new(&ch, &alpha, Some(2), OutsidePolicy::Mean).unwrap();
        let frame = draw_symbols(&alpha, 10, 4);
        let y = ch.simulate(&frame.x, 9);
        let part = SicPartition::new(10, 2).unwrap();
        for s in 1..=2 {
            let known = part.known_for_stage(&frame.indices, s);
            let a = run_fba_stage(&y, &known, s, 2, &aux, FbaOptions::default()).unwrap();
            let b = brute_force_apps(&y, &known, s, 2, &aux).unwrap();
            for (x, z) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - z).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn brute_force_single_free_symbol() {
        let ch = tiny(&[0.0, 1.0, 0.5], 0.3, Nonlinearity::Identity);
        let alpha = Alphabet::new(Family::Ask, 2).unwrap();
        let aux = AuxChannel::exact(&ch, &alpha).unwrap();
        let y = vec![c(0.9), c(-0.2), c(1.1)];
        let known = vec![Some(1), None, Some(0)];
        let apps = brute_force_apps(&y, &known, 2, 3, &aux).unwrap();
        let joint = |v: usize| {
            let x = [1.0, [-1.0, 1.0][v], -1.0];
            let m = [x[0], x[1] + 0.5 * x[0], x[2] + 0.5 * x[1]];
            (0..3).map(|k| -(y[k].re - m[k]).powi(2) / 0.6).sum::<f64>().exp()
        };
        let p1 = joint(1) / (joint(0) + joint(1));
        assert!((apps.row(0)[1] - p1).abs() < 1e-12);
    }

    #[test]
    fn counter() {
        assert_eq!(count_multiplications(4, 9), 1_048_576.0);
    }
}
