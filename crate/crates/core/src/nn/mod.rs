//! Periodically time-varying bidirectional RNN equalizer.
//!
//! Each recurrent layer has a forward and a backward path. Path cells cycle
//! through `period` weight phases; input `k` uses phase `k mod period` for its
//! input map and the phase of its predecessor (forward) or successor
//! (backward) for the state map. The softmax head reads every `cycle`-th
//! position, starting at 0.

mod adam;
mod checkpoint;
mod inputs;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use inputs::{build_inputs, InputBuilder, Normalization};
pub use train::{train_stage, NnEqualizer, TrainConfig, TrainOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Layer sizes and phase structure of one stage's network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    /// Channel-output window length `L_Y`.
    pub l_y: usize,
    /// Known-symbol window length `L_IC`.
    pub l_ic: usize,
    /// Real dimensions per channel output (1 real, 2 complex).
    pub y_dims: usize,
    /// Real dimensions per known symbol.
    pub v_dims: usize,
    /// Recurrent layer output sizes `l_2..l_L`, each even.
    pub hidden: Vec<usize>,
    /// Alphabet size `M`.
    pub m: usize,
    /// Number of weight phases (`S - s + 1`, or 1 for a classic RNN).
    pub period: usize,
    /// Inputs per symbol time `t` (`S - s + 1`).
    pub cycle: usize,
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Shape(m));
        if self.hidden.is_empty() {
            return bad("at least one recurrent layer is required".into());
        }
        if let Some(h) = self.hidden.iter().find(|&&h| h == 0 || h % 2 != 0) {
            return bad(format!("recurrent layer sizes must be even and positive, got {h}"));
        }
        if self.m < 2 || self.period == 0 || self.cycle == 0 {
            return bad("alphabet size, period and cycle must be positive".into());
        }
        if self.input_dim() == 0 {
            return bad("empty network input".into());
        }
        if !matches!(self.y_dims, 1 | 2) || !matches!(self.v_dims, 1 | 2) {
            return bad("input dimensions per value must be 1 or 2".into());
        }
        Ok(())
    }

    /// First-layer input size `l_1`.
    pub fn input_dim(&self) -> usize {
        self.l_y * self.y_dims + self.l_ic * self.v_dims
    }

    /// Layer sizes `(l_1, ..., l_L)`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.hidden.iter().copied()).collect()
    }

    fn block(&self, layer: usize) -> (usize, usize, usize) {
        let sizes = self.layer_sizes();
        let (inp, h) = (sizes[layer], sizes[layer + 1] / 2);
        (inp, h, h * inp + h + h * h + h)
    }

    pub fn param_count(&self) -> usize {
        let rec: usize = (0..self.hidden.len()).map(|i| 2 * self.period * self.block(i).2).sum();
        rec + self.m * self.hidden.last().copied().unwrap_or(0) + self.m
    }

    /// Real multiplications per APP estimate.
    pub fn multiplications(&self) -> f64 {
        count_multiplications(&self.layer_sizes(), self.m)
    }
}

/// `sum_i (l_i l_{i+1} + l_{i+1}^2 / 2) + l_L M`.
pub fn count_multiplications(sizes: &[usize], m: usize) -> f64 {
    let rec: f64 =
        sizes.windows(2).map(|w| (w[0] * w[1]) as f64 + (w[1] * w[1]) as f64 / 2.0).sum();
    rec + (*sizes.last().unwrap_or(&0) * m) as f64
}

/// Offsets of one cell's parameters in the flat vector.
#[derive(Debug, Clone, Copy)]
struct Cell {
    w_in: usize,
    b_in: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    /// `[layer][dir][phase]`
    cells: Vec<[Vec<Cell>; 2]>,
    dims: Vec<(usize, usize)>,
    w_out: usize,
    b_out: usize,
}

impl Layout {
    fn new(topo: &Topology) -> Self {
        let mut off = 0;
        let mut cells = Vec::new();
        let mut dims = Vec::new();
        for layer in 0..topo.hidden.len() {
            let (inp, h, size) = topo.block(layer);
            dims.push((inp, h));
            let mut per_dir: [Vec<Cell>; 2] = [Vec::new(), Vec::new()];
            for dir in per_dir.iter_mut() {
                for _ in 0..topo.period {
                    dir.push(Cell { w_in: off, b_in: off + h * inp, w: off + h * inp + h, b: off + h * inp + h + h * h });
                    off += size;
                }
            }
            cells.push(per_dir);
        }
        let w_out = off;
        let b_out = off + topo.m * topo.hidden.last().copied().unwrap_or(0);
        Self { cells, dims, w_out, b_out }
    }
}

/// A stage network: topology, flat parameters and input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub topology: Topology,
    pub params: Vec<f64>,
    pub normalization: Normalization,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[r] += sum_c W[r, c] x[c]` for row-major `W` of `out.len()` rows.
#[inline]
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out[c] += sum_r W[r, c] g[r]`.
#[inline]
fn matvec_t_add(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            axpy(gr, &w[r * cols..(r + 1) * cols], out);
        }
    }
}

/// `G[r, c] += g[r] x[c]`.
#[inline]
fn outer_add(g: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            axpy(gr, x, &mut out[r * cols..(r + 1) * cols]);
        }
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    len: usize,
    /// Per layer: inputs (`len x in`), forward and backward states (`len x h`).
    inputs: Vec<Vec<f64>>,
    hf: Vec<Vec<f64>>,
    hb: Vec<Vec<f64>>,
    /// Head input per output row (`rows x l_L`).
    head_in: Vec<f64>,
    /// Softmax outputs (`rows x M`).
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    /// Which recurrent units are active (positive), over all layers,
    /// directions and inputs.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.hf.iter().chain(&self.hb).flatten().map(|&v| v > 0.0).collect()
    }
}

impl RnnModel {
    /// Zero parameters and identity normalization.
    pub fn zeros(topology: Topology) -> Result<Self> {
        topology.validate()?;
        let params = vec![0.0; topology.param_count()];
        let normalization = Normalization::identity(topology.input_dim());
        Ok(Self { topology, params, normalization })
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn random(topology: Topology, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(topology)?;
        let layout = Layout::new(&model.topology);
        let mut rng = rng::stream(seed, &[0x1417]);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, p: &mut [f64]| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p[range] {
                *v = rng.gen_range(-a..a);
            }
        };
        for (layer, per_dir) in layout.cells.iter().enumerate() {
            let (inp, h) = layout.dims[layer];
            for dir in per_dir {
                for c in dir {
                    fill(c.w_in..c.b_in, inp, &mut model.params);
                    fill(c.b_in..c.w, inp, &mut model.params);
                    fill(c.w..c.b, h, &mut model.params);
                    fill(c.b..c.b + h, h, &mut model.params);
                }
            }
        }
        let last = *model.topology.hidden.last().expect("validated");
        let end = model.params.len();
        fill(layout.w_out..end, last, &mut model.params);
        Ok(model)
    }

    /// Expands a classic (single-phase) model to `period` tied phases.
    pub fn tied(&self, period: usize) -> Result<Self> {
        if self.topology.period != 1 {
            return Err(Error::Shape("only single-phase models can be tied".into()));
        }
        let mut topo = self.topology.clone();
        topo.period = period;
        let mut out = Self::zeros(topo)?;
        out.normalization = self.normalization.clone();
        let src = Layout::new(&self.topology);
        let dst = Layout::new(&out.topology);
        for (layer, (s_dirs, d_dirs)) in src.cells.iter().zip(&dst.cells).enumerate() {
            let (inp, h) = src.dims[layer];
            let size = h * inp + h + h * h + h;
            for dir in 0..2 {
                let s = s_dirs[dir][0].w_in;
                for d in &d_dirs[dir] {
                    let chunk = self.params[s..s + size].to_vec();
                    out.params[d.w_in..d.w_in + size].copy_from_slice(&chunk);
                }
            }
        }
        let head = self.params[src.w_out..].to_vec();
        out.params[dst.w_out..].copy_from_slice(&head);
        Ok(out)
    }

    fn check_inputs(&self, inputs: &[f64]) -> Result<usize> {
        let d = self.topology.input_dim();
        if !inputs.len().is_multiple_of(d) {
            return Err(Error::Shape(format!("{} input values are not a multiple of l_1 = {d}", inputs.len())));
        }
        Ok(inputs.len() / d)
    }

    /// Runs the network on `len` normalized inputs (row-major `len x l_1`).
    pub fn forward(&self, inputs: &[f64]) -> Result<ForwardTrace> {
        let len = self.check_inputs(inputs)?;
        let topo = &self.topology;
        let layout = Layout::new(topo);
        let p = &self.params;
        let period = topo.period;
        let phase = |k: i64| k.rem_euclid(period as i64) as usize;

        let mut cur = inputs.to_vec();
        let mut tr_inputs = Vec::with_capacity(topo.hidden.len());
        let mut tr_hf = Vec::with_capacity(topo.hidden.len());
        let mut tr_hb = Vec::with_capacity(topo.hidden.len());
        for (layer, cells) in layout.cells.iter().enumerate() {
            let (inp, h) = layout.dims[layer];
            let mut hf = vec![0.0; len * h];
            let mut hb = vec![0.0; len * h];
            let mut a = vec![0.0; h];
            for k in 0..len {
                let c = cells[0][phase(k as i64)];
                let prev = cells[0][phase(k as i64 - 1)];
                a.copy_from_slice(&p[c.b_in..c.b_in + h]);
                matvec_add(&p[c.w_in..c.b_in], &cur[k * inp..(k + 1) * inp], &mut a);
                axpy(1.0, &p[prev.b..prev.b + h], &mut a);
                if k > 0 {
                    let (done, rest) = hf.split_at_mut(k * h);
                    matvec_add(&p[prev.w..prev.b], &done[(k - 1) * h..], &mut a);
                    for (o, &v) in rest[..h].iter_mut().zip(&a) {
                        *o = v.max(0.0);
                    }
                } else {
                    for (o, &v) in hf[..h].iter_mut().zip(&a) {
                        *o = v.max(0.0);
                    }
                }
            }
            for k in (0..len).rev() {
                let c = cells[1][phase(k as i64)];
                let next = cells[1][phase(k as i64 + 1)];
                a.copy_from_slice(&p[c.b_in..c.b_in + h]);
                matvec_add(&p[c.w_in..c.b_in], &cur[k * inp..(k + 1) * inp], &mut a);
                axpy(1.0, &p[next.b..next.b + h], &mut a);
                if k + 1 < len {
                    let (head, later) = hb.split_at_mut((k + 1) * h);
                    matvec_add(&p[next.w..next.b], &later[..h], &mut a);
                    for (o, &v) in head[k * h..].iter_mut().zip(&a) {
                        *o = v.max(0.0);
                    }
                } else {
                    for (o, &v) in hb[k * h..].iter_mut().zip(&a) {
                        *o = v.max(0.0);
                    }
                }
            }
            let mut next = vec![0.0; len * 2 * h];
            for k in 0..len {
                next[k * 2 * h..k * 2 * h + h].copy_from_slice(&hf[k * h..(k + 1) * h]);
                next[k * 2 * h + h..(k + 1) * 2 * h].copy_from_slice(&hb[k * h..(k + 1) * h]);
            }
            tr_inputs.push(std::mem::replace(&mut cur, next));
            tr_hf.push(hf);
            tr_hb.push(hb);
        }

        let width = *topo.hidden.last().expect("validated");
        let m = topo.m;
        let rows: Vec<usize> = (0..len).step_by(topo.cycle).collect();
        let mut head_in = Vec::with_capacity(rows.len() * width);
        let mut probs = Vec::with_capacity(rows.len() * m);
        let mut logits = vec![0.0; m];
        for &k in &rows {
            let r = &cur[k * width..(k + 1) * width];
            head_in.extend_from_slice(r);
            logits.copy_from_slice(&p[layout.b_out..layout.b_out + m]);
            matvec_add(&p[layout.w_out..layout.b_out], r, &mut logits);
            let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - mx).exp()).sum();
            probs.extend(logits.iter().map(|v| (v - mx).exp() / z));
        }
        Ok(ForwardTrace { len, inputs: tr_inputs, hf: tr_hf, hb: tr_hb, head_in, probs })
    }

    /// Softmax rows for the inputs (`ceil(len / cycle) x M`).
    pub fn predict(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(inputs)?.probs)
    }

    /// Mean `-log2 Q(true symbol)` over the output rows.
    pub fn loss(&self, inputs: &[f64], truth: &[usize]) -> Result<f64> {
        let tr = self.forward(inputs)?;
        loss_of(&tr.probs, truth, self.topology.m)
    }

    /// Loss and its exact gradient with respect to the flat parameters.
    pub fn backward(&self, inputs: &[f64], truth: &[usize]) -> Result<(f64, Vec<f64>)> {
        let tr = self.forward(inputs)?;
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.backward_from(&tr, truth, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `scale` times the gradient of the loss to `grad`; returns the loss.
    pub fn backward_from(&self, tr: &ForwardTrace, truth: &[usize], scale: f64, grad: &mut [f64]) -> Result<f64> {
        let topo = &self.topology;
        let m = topo.m;
        let rows = tr.probs.len() / m;
        if truth.len() != rows {
            return Err(Error::Shape(format!("{rows} output rows but {} labels", truth.len())));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        let loss = loss_of(&tr.probs, truth, m)?;
        let layout = Layout::new(topo);
        let p = &self.params;
        let len = tr.len;
        let period = topo.period;
        let phase = |k: i64| k.rem_euclid(period as i64) as usize;
        let width = *topo.hidden.last().expect("validated");

        // Head.
        let mut d_cur = vec![0.0; len * width];
        let coef = scale / (rows as f64 * std::f64::consts::LN_2);
        let mut dl = vec![0.0; m];
        for (row, &v) in truth.iter().enumerate() {
            let k = row * topo.cycle;
            for (a, d) in dl.iter_mut().enumerate() {
                *d = coef * (tr.probs[row * m + a] - if a == v { 1.0 } else { 0.0 });
            }
            let r = &tr.head_in[row * width..(row + 1) * width];
            outer_add(&dl, r, &mut grad[layout.w_out..layout.b_out]);
            axpy(1.0, &dl, &mut grad[layout.b_out..layout.b_out + m]);
            matvec_t_add(&p[layout.w_out..layout.b_out], &dl, &mut d_cur[k * width..(k + 1) * width]);
        }

        // Recurrent layers, top to bottom.
        for layer in (0..layout.cells.len()).rev() {
            let (inp, h) = layout.dims[layer];
            let cells = &layout.cells[layer];
            let x = &tr.inputs[layer];
            let hf = &tr.hf[layer];
            let hb = &tr.hb[layer];
            let mut d_in = vec![0.0; len * inp];
            let mut carry = vec![0.0; h];
            let mut da = vec![0.0; h];
            for k in (0..len).rev() {
                let c = cells[0][phase(k as i64)];
                let prev = cells[0][phase(k as i64 - 1)];
                for i in 0..h {
                    let g = d_cur[k * 2 * h + i] + carry[i];
                    da[i] = if hf[k * h + i] > 0.0 { g } else { 0.0 };
                }
                outer_add(&da, &x[k * inp..(k + 1) * inp], &mut grad[c.w_in..c.b_in]);
                axpy(1.0, &da, &mut grad[c.b_in..c.b_in + h]);
                axpy(1.0, &da, &mut grad[prev.b..prev.b + h]);
                carry.iter_mut().for_each(|v| *v = 0.0);
                if k > 0 {
                    outer_add(&da, &hf[(k - 1) * h..k * h], &mut grad[prev.w..prev.b]);
                    matvec_t_add(&p[prev.w..prev.b], &da, &mut carry);
                }
                matvec_t_add(&p[c.w_in..c.b_in], &da, &mut d_in[k * inp..(k + 1) * inp]);
            }
            carry.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..len {
                let c = cells[1][phase(k as i64)];
                let next = cells[1][phase(k as i64 + 1)];
                for i in 0..h {
                    let g = d_cur[k * 2 * h + h + i] + carry[i];
                    da[i] = if hb[k * h + i] > 0.0 { g } else { 0.0 };
                }
                outer_add(&da, &x[k * inp..(k + 1) * inp], &mut grad[c.w_in..c.b_in]);
                axpy(1.0, &da, &mut grad[c.b_in..c.b_in + h]);
                axpy(1.0, &da, &mut grad[next.b..next.b + h]);
                carry.iter_mut().for_each(|v| *v = 0.0);
                if k + 1 < len {
                    outer_add(&da, &hb[(k + 1) * h..(k + 2) * h], &mut grad[next.w..next.b]);
                    matvec_t_add(&p[next.w..next.b], &da, &mut carry);
                }
                matvec_t_add(&p[c.w_in..c.b_in], &da, &mut d_in[k * inp..(k + 1) * inp]);
            }
            d_cur = d_in;
        }
        Ok(loss)
    }
}

fn loss_of(probs: &[f64], truth: &[usize], m: usize) -> Result<f64> {
    let rows = probs.len() / m;
    if truth.len() != rows {
        return Err(Error::Shape(format!("{rows} output rows but {} labels", truth.len())));
    }
    if rows == 0 {
        return Ok(0.0);
    }
    let total: f64 = truth.iter().enumerate().map(|(r, &v)| -probs[r * m + v].log2()).sum();
    Ok(total / rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn topo(hidden: Vec<usize>, period: usize, cycle: usize) -> Topology {
        Topology { l_y: 3, l_ic: 2, y_dims: 1, v_dims: 1, hidden, m: 4, period, cycle }
    }

    fn random_inputs(len: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[9]);
        (0..len * dim).map(|_| r.gen_range(-1.5..1.5)).collect()
    }

    #[test]
    fn counters_reproduce_table_values() {
        assert_eq!(count_multiplications(&[48, 64], 4), 5376.0);
        assert_eq!(count_multiplications(&[96, 128, 64], 4), 30976.0);
        assert_eq!(count_multiplications(&[1, 2], 4), 1.0 * 2.0 + 2.0 + 8.0);
        let t = Topology { l_y: 32, l_ic: 16, y_dims: 1, v_dims: 1, hidden: vec![64], m: 4, period: 2, cycle: 2 };
        assert_eq!(t.multiplications(), 5376.0);
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = RnnModel::zeros(topo(vec![4, 6], 2, 2)).unwrap();
        let probs = model.predict(&random_inputs(6, 5, 1)).unwrap();
        assert_eq!(probs.len(), 3 * 4);
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let model = RnnModel::random(topo(vec![6, 4], 3, 3), 2).unwrap();
        let probs = model.predict(&random_inputs(9, 5, 3)).unwrap();
        for row in probs.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn tied_phases_match_classic() {
        let classic = RnnModel::random(topo(vec![6, 4], 1, 3), 4).unwrap();
        let tied = classic.tied(3).unwrap();
        let x = random_inputs(12, 5, 5);
        let a = classic.predict(&x).unwrap();
        let b = tied.predict(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradient_matches_finite_differences() {
        let model = RnnModel::random(topo(vec![4, 6], 2, 2), 6).unwrap();
        let x = random_inputs(8, 5, 7);
        let truth = vec![0, 3, 1, 2];
        let (_, grad) = model.backward(&x, &truth).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..model.params.len() {
            let mut plus = model.clone();
            plus.params[i] += h;
            let mut minus = model.clone();
            minus.params[i] -= h;
            let fd = (plus.loss(&x, &truth).unwrap() - minus.loss(&x, &truth).unwrap()) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-7);
            worst = worst.max((fd - grad[i]).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradient_scales_linearly() {
        let model = RnnModel::random(topo(vec![4], 1, 1), 8).unwrap();
        let x = random_inputs(5, 5, 9);
        let truth = vec![1, 0, 2, 3, 1];
        let tr = model.forward(&x).unwrap();
        let mut g1 = vec![0.0; model.params.len()];
        let mut g3 = vec![0.0; model.params.len()];
        model.backward_from(&tr, &truth, 1.0, &mut g1).unwrap();
        model.backward_from(&tr, &truth, 3.0, &mut g3).unwrap();
        for (a, b) in g1.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_head_has_flat_bias_gradient() {
        let mut model = RnnModel::zeros(topo(vec![2], 1, 1)).unwrap();
        let layout = Layout::new(&model.topology);
        model.params[layout.b_out] = 60.0;
        let (_, grad) = model.backward(&random_inputs(3, 5, 1), &[0, 0, 0]).unwrap();
        assert!(grad[layout.b_out..].iter().all(|g| g.abs() < 1e-20));
    }

    #[test]
    fn phase_shift_by_period_preserves_outputs() {
        let mut model = RnnModel::random(topo(vec![6], 3, 3), 10).unwrap();
        let layout = Layout::new(&model.topology);
        for dir in &layout.cells[0] {
            for c in dir {
                model.params[c.w..c.b].iter_mut().for_each(|w| *w = 0.0);
            }
        }
        let x = random_inputs(12, 5, 11);
        let full = model.predict(&x).unwrap();
        let shifted = model.predict(&x[3 * 5..]).unwrap();
        assert_eq!(shifted.len(), full.len() - 4);
        for (a, b) in shifted.iter().zip(&full[4..]) {
            assert!((a - b).abs() < 1e-14);
        }
        let off = model.predict(&x[5..]).unwrap();
        assert!(off.iter().zip(&full[4..]).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn shape_errors() {
        let model = RnnModel::zeros(topo(vec![2], 1, 1)).unwrap();
        assert!(matches!(model.forward(&[0.0; 7]), Err(Error::Shape(_))));
        assert!(RnnModel::zeros(topo(vec![3], 1, 1)).is_err());
        assert!(matches!(model.backward(&[0.0; 10], &[0]), Err(Error::Shape(_))));
    }
}
