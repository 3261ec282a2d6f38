//! Serialized network inputs: channel-output windows plus nearby known symbols.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Topology;
use crate::error::{Error, Result};
use crate::modem::Alphabet;
use crate::sic::SicPartition;

/// Per-coordinate affine normalization `(r - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Unit-variance statistics of row-major samples; constant coordinates
    /// keep unit scale.
    pub fn fit(samples: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || !samples.len().is_multiple_of(dim) || samples.is_empty() {
            return Err(Error::Shape("normalization needs a non-empty row-major sample set".into()));
        }
        let rows = (samples.len() / dim) as f64;
        let mut mean = vec![0.0; dim];
        for row in samples.chunks(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows);
        let mut var = vec![0.0; dim];
        for row in samples.chunks(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / rows).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: &mut [f64]) {
        let d = self.dim();
        for row in rows.chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Builds the raw input vectors of one SIC stage.
#[derive(Debug, Clone)]
pub struct InputBuilder {
    l_y: usize,
    y_dims: usize,
    v_dims: usize,
    n_os: usize,
    stage: usize,
    stages: usize,
    /// Relative offsets of the known symbols per phase, ascending.
    ic_offsets: Vec<Vec<i64>>,
}

impl InputBuilder {
    pub fn new(topology: &Topology, n_os: usize, stage: usize, stages: usize) -> Result<Self> {
        if stage == 0 || stage > stages {
            return Err(Error::InvalidStage { stage, stages });
        }
        let cycle = stages - stage + 1;
        if topology.cycle != cycle {
            return Err(Error::Shape(format!("topology cycle {} but stage {stage} of {stages} needs {cycle}", topology.cycle)));
        }
        if n_os == 0 {
            return Err(Error::Shape("N_os must be positive".into()));
        }
        let ic_offsets = (0..cycle)
            .map(|j| closest_known(stage - 1 + j, stage, stages, if stage > 1 { topology.l_ic } else { 0 }))
            .collect();
        Ok(Self {
            l_y: topology.l_y,
            y_dims: topology.y_dims,
            v_dims: topology.v_dims,
            n_os,
            stage,
            stages,
            ic_offsets,
        })
    }

    pub fn cycle(&self) -> usize {
        self.stages - self.stage + 1
    }

    /// Known-symbol offsets of phase `j` (0-based, i.e. stage `s + j`).
    pub fn ic_offsets(&self, j: usize) -> &[i64] {
        &self.ic_offsets[j]
    }

    /// Appends the raw input of position `kappa` (0-based) and phase `j`.
    ///
    /// `values` holds the unscaled symbol value of every frame position; only
    /// positions of earlier stages are read. `l_ic_total` is the declared
    /// known-symbol window, padded with zeros past the selected offsets.
    fn push(&self, y: &[Complex64], values: &[Complex64], kappa: usize, j: usize, l_ic_total: usize, out: &mut Vec<f64>) {
        let delta = (self.l_y as i64 - 1) / 2;
        let nabla = self.l_y as i64 - 1 - delta;
        let centre = (self.n_os * kappa) as i64;
        for u in -delta..=nabla {
            let i = centre + u;
            let z = if (0..y.len() as i64).contains(&i) { y[i as usize] } else { Complex64::new(0.0, 0.0) };
            out.push(z.re);
            if self.y_dims == 2 {
                out.push(z.im);
            }
        }
        let offsets = &self.ic_offsets[j];
        for &d in offsets {
            let a = kappa as i64 + d;
            let z = if (0..values.len() as i64).contains(&a) { values[a as usize] } else { Complex64::new(0.0, 0.0) };
            out.push(z.re);
            if self.v_dims == 2 {
                out.push(z.im);
            }
        }
        for _ in offsets.len()..l_ic_total {
            out.extend(std::iter::repeat_n(0.0, self.v_dims));
        }
    }

    /// Raw inputs for symbol times `t0..t0 + count` in serialized order.
    pub fn build_range(
        &self,
        y: &[Complex64],
        values: &[Complex64],
        l_ic_total: usize,
        t0: usize,
        count: usize,
    ) -> Result<Vec<f64>> {
        let part = SicPartition::new(values.len(), self.stages)?;
        if y.len() != values.len() * self.n_os {
            return Err(Error::LengthMismatch(format!("{} samples for {} symbols", y.len(), values.len())));
        }
        if t0 + count > part.per_stage() {
            return Err(Error::Shape(format!("symbol times {t0}..{} exceed {}", t0 + count, part.per_stage())));
        }
        let width = self.l_y * self.y_dims + l_ic_total * self.v_dims;
        let mut out = Vec::with_capacity(count * self.cycle() * width);
        for t in t0..t0 + count {
            for j in 0..self.cycle() {
                self.push(y, values, part.position(self.stage + j, t), j, l_ic_total, &mut out);
            }
        }
        Ok(out)
    }
}

/// The `count` positions of stages below `stage` closest to a stage-`row + 1`
/// position (0-based row within the period), as ascending relative offsets.
/// Ties go to the smaller index.
fn closest_known(row: usize, stage: usize, stages: usize, count: usize) -> Vec<i64> {
    let known = |d: i64| ((row as i64 + d).rem_euclid(stages as i64) as usize) < stage - 1;
    let mut picked = Vec::with_capacity(count);
    let mut r = 1i64;
    while picked.len() < count {
        for d in [-r, r] {
            if picked.len() < count && known(d) {
                picked.push(d);
            }
        }
        r += 1;
    }
    picked.sort_unstable();
    picked
}

/// Raw (or normalized, if `normalization` is given) inputs of a whole block.
pub fn build_inputs(
    y: &[Complex64],
    known: &[Option<usize>],
    alphabet: &Alphabet,
    stage: usize,
    stages: usize,
    topology: &Topology,
    n_os: usize,
    normalization: Option<&Normalization>,
) -> Result<Vec<f64>> {
    let builder = InputBuilder::new(topology, n_os, stage, stages)?;
    let values = known_values(known, alphabet)?;
    let part = SicPartition::new(known.len(), stages)?;
    let mut rows = builder.build_range(y, &values, topology.l_ic, 0, part.per_stage())?;
    if let Some(norm) = normalization {
        if norm.dim() != topology.input_dim() {
            return Err(Error::Shape("normalization does not match the topology".into()));
        }
        norm.apply(&mut rows);
    }
    Ok(rows)
}

/// Unscaled symbol values of the known positions, zero elsewhere.
pub(crate) fn known_values(known: &[Option<usize>], alphabet: &Alphabet) -> Result<Vec<Complex64>> {
    known
        .iter()
        .map(|k| match k {
            Some(i) if *i < alphabet.size() => Ok(alphabet.symbols()[*i]),
            Some(i) => Err(Error::Shape(format!("symbol index {i} outside the alphabet"))),
            None => Ok(Complex64::new(0.0, 0.0)),
        })
        .collect()
}
