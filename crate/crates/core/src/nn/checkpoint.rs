//! Versioned binary checkpoints of a trained [`NnEqualizer`].
//!
//! Layout (little endian):
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `NLSICRNN` |
//! | 4 | `u32` format version |
//! | 4 | `u32` header length `H` |
//! | H | UTF-8 JSON header |
//! | per stage | `u64` parameter count `P`, then `P` `f64` values |
//!
//! Parameter blocks follow the flat order of [`RnnModel::params`]: for each
//! recurrent layer, forward then backward path, each phase in order holding
//! `W_in` (row-major, `l_{i+1}/2 x l_i`), `b_in`, `W` (row-major), `b`;
//! finally `W_out` (row-major, `M x l_L`) and `b_out`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Normalization, NnEqualizer, RnnModel, Topology, TrainConfig};
use crate::error::{Error, Result};
use crate::modem::{Alphabet, Family};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NLSICRNN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained equalizer with its provenance.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub equalizer: NnEqualizer,
    /// Training SNR, if known.
    pub snr_db: Option<f64>,
    /// Training settings per stage, if known.
    pub train: Vec<Option<TrainConfig>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    family: Family,
    m: usize,
    gain: f64,
    n_os: usize,
    t_rnn: usize,
    snr_db: Option<f64>,
    stages: Vec<StageHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageHeader {
    stage: usize,
    topology: Topology,
    /// Weight phases (repeats `topology.period` for readers of the header).
    phases: usize,
    normalization: Normalization,
    train: Option<TrainConfig>,
    param_count: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let eq = &self.equalizer;
        if !self.train.is_empty() && self.train.len() != eq.models.len() {
            return Err(bad("one training record per stage expected"));
        }
        let header = Header {
            family: eq.alphabet.family(),
            m: eq.alphabet.size(),
            gain: eq.alphabet.gain(),
            n_os: eq.n_os,
            t_rnn: eq.t_rnn,
            snr_db: self.snr_db,
            stages: eq
                .models
                .iter()
                .enumerate()
                .map(|(i, m)| StageHeader {
                    stage: i + 1,
                    topology: m.topology.clone(),
                    phases: m.topology.period,
                    normalization: m.normalization.clone(),
                    train: self.train.get(i).cloned().flatten(),
                    param_count: m.params.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let len = u32::try_from(json.len()).map_err(|_| bad("header too large"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        for m in &eq.models {
            w.write_all(&(m.params.len() as u64).to_le_bytes())?;
            for p in &m.params {
                w.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let alphabet = Alphabet::new(header.family, header.m)?.with_gain(header.gain);
        let mut models = Vec::with_capacity(header.stages.len());
        let mut train = Vec::with_capacity(header.stages.len());
        for (i, st) in header.stages.into_iter().enumerate() {
            if st.stage != i + 1 || st.phases != st.topology.period {
                return Err(bad(format!("inconsistent header for stage {}", i + 1)));
            }
            st.topology.validate()?;
            let expected = st.topology.param_count();
            let mut count = [0u8; 8];
            r.read_exact(&mut count)?;
            let count = u64::from_le_bytes(count) as usize;
            if count != expected || count != st.param_count {
                return Err(bad(format!("stage {} has {count} parameters, topology needs {expected}", i + 1)));
            }
            if st.normalization.dim() != st.topology.input_dim() || st.normalization.std.len() != st.topology.input_dim() {
                return Err(bad(format!("stage {} normalization does not match the topology", i + 1)));
            }
            let mut bytes = vec![0u8; count * 8];
            r.read_exact(&mut bytes)?;
            let params = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            models.push(RnnModel { topology: st.topology, params, normalization: st.normalization });
            train.push(st.train);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after the last parameter block"));
        }
        Ok(Self {
            equalizer: NnEqualizer { alphabet, n_os: header.n_os, t_rnn: header.t_rnn, models },
            snr_db: header.snr_db,
            train,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    checkpoint.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)?;
    Checkpoint::read_from(std::io::BufReader::new(file))
}
