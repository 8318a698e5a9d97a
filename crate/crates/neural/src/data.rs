//! Training data: belief-propagation regression samples for the pretrained
//! block, supervised (syndrome, logical label) batches, and the binary
//! dataset container.
//!
//! Dataset file, integers u32 little-endian:
//!
//! ```text
//! "TNDS" version kind L n
//! kind 0 (stage 0):    n × L²·3 input f32, then n × (L/2)²·2 target f32
//! kind 1 (supervised): per sample, packed syndrome bits then a label byte
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use tensornet::Tensor;
use toric_core::beliefprop::bp_run_log_odds;
use toric_core::rng::{domain, stream_rng};
use toric_core::{logical_parity, sample_errors, syndrome_of, ErrorRates, Lattice, LogicalParity, Syndrome};

use crate::model::encode_input;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNDS";
pub const VERSION: u32 = 1;
const KIND_STAGE0: u32 = 0;
const KIND_SUPERVISED: u32 = 1;

/// Inputs and handcrafted-BP targets, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage0Dataset {
    pub size: usize,
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
}

impl Stage0Dataset {
    pub fn input_len(&self) -> usize {
        self.size * self.size * 3
    }

    pub fn target_len(&self) -> usize {
        self.size * self.size / 2
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Batch tensors `(n, L, L, 3)` and `(n, L/2, L/2, 2)` for some samples.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let (a, b) = (self.input_len(), self.target_len());
        let mut x = Vec::with_capacity(indices.len() * a);
        let mut y = Vec::with_capacity(indices.len() * b);
        for &i in indices {
            x.extend_from_slice(&self.inputs[i * a..(i + 1) * a]);
            y.extend_from_slice(&self.targets[i * b..(i + 1) * b]);
        }
        let (l, h) = (self.size, self.size / 2);
        Ok((Tensor::new(vec![indices.len(), l, l, 3], x)?, Tensor::new(vec![indices.len(), h, h, 2], y)?))
    }

    /// The per-edge `k` of a sample, recovered from its input log-odds via
    /// `p = sigmoid(r)`, `k = -ln p`.
    pub fn edge_k(&self, sample: usize) -> Vec<f64> {
        let x = &self.inputs[sample * self.input_len()..(sample + 1) * self.input_len()];
        x.chunks_exact(3)
            .flat_map(|c| [c[1], c[2]])
            .map(|r| {
                let r = r as f64;
                // -ln sigmoid(r) = ln(1 + e^{-r})
                (-r).exp().ln_1p()
            })
            .collect()
    }
}

/// One regression sample: rate `e^{-k}` per edge with `k ~ U[k_min, k_max]`,
/// then `rounds` of handcrafted BP on the sampled syndrome.
pub fn stage0_sample<R: Rng + ?Sized>(lattice: Lattice, k_min: f64, k_max: f64, rounds: usize, rng: &mut R) -> Result<(Vec<f32>, Vec<f32>)> {
    let rates: Vec<f64> = (0..lattice.num_edges()).map(|_| (-rng.gen_range(k_min..k_max)).exp()).collect();
    let rates = ErrorRates::new(lattice, rates)?;
    let syndrome = syndrome_of(&sample_errors(&rates, rng));
    let log_odds = rates.log_odds_all();
    let marginals = bp_run_log_odds(&syndrome, &log_odds, rounds)?;
    let r: Vec<f32> = log_odds.iter().map(|&v| v as f32).collect();
    let mut input = Vec::with_capacity(lattice.num_plaquettes() * 3);
    encode_input(&syndrome, &r, &mut input)?;
    Ok((input, marginals.log_odds.iter().map(|&v| v as f32).collect()))
}

/// `n` samples, sample `i` drawn from its own stream so the result does not
/// depend on the thread count.
pub fn gen_stage0_dataset(size: usize, n: usize, k_min: f64, k_max: f64, rounds: usize, seed: u64) -> Result<Stage0Dataset> {
    let lattice = Lattice::new(size)?;
    lattice.coarse()?;
    let samples: Vec<(Vec<f32>, Vec<f32>)> = (0..n)
        .into_par_iter()
        .map(|i| stage0_sample(lattice, k_min, k_max, rounds, &mut stream_rng(seed, domain::STAGE0_DATA, i as u64)))
        .collect::<Result<_>>()?;
    let mut inputs = Vec::with_capacity(n * size * size * 3);
    let mut targets = Vec::with_capacity(n * size * size / 2);
    for (x, y) in samples {
        inputs.extend(x);
        targets.extend(y);
    }
    Ok(Stage0Dataset { size, inputs, targets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSample {
    pub syndrome: Syndrome,
    pub label: LogicalParity,
}

/// Sample `index` of a supervised stream.
pub fn supervised_sample(rates: &ErrorRates, seed: u64, stream: u64, index: u64) -> SupervisedSample {
    let mut rng = stream_rng(seed, stream, index);
    let errors = sample_errors(rates, &mut rng);
    SupervisedSample { syndrome: syndrome_of(&errors), label: logical_parity(&errors) }
}

/// Batch `batch` of an online stream: samples `batch·n .. batch·n + n`.
pub fn supervised_batch(rates: &ErrorRates, seed: u64, stream: u64, batch: usize, n: usize) -> Vec<SupervisedSample> {
    (0..n).map(|i| supervised_sample(rates, seed, stream, (batch * n + i) as u64)).collect()
}

pub fn gen_supervised_dataset(rates: &ErrorRates, n: usize, seed: u64) -> Vec<SupervisedSample> {
    (0..n)
        .into_par_iter()
        .map(|i| supervised_sample(rates, seed, domain::SUPERVISED_DATA, i as u64))
        .collect()
}

/// Each edge independently gets `rate` or 0 with probability ½, drawn once
/// from the noise-mask stream of `seed`.
pub fn half_noisy_rates(lattice: Lattice, rate: f64, seed: u64) -> Result<ErrorRates> {
    let mut rng = stream_rng(seed, domain::NOISE_MASK, 0);
    let rates = (0..lattice.num_edges()).map(|_| if rng.gen_bool(0.5) { rate } else { 0.0 }).collect();
    Ok(ErrorRates::new(lattice, rates)?)
}

fn header(kind: u32, size: usize, n: usize) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for v in [VERSION, kind, size as u32, n as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_header(buf: &[u8], kind: u32) -> Result<(usize, usize, &[u8])> {
    if buf.len() < 20 {
        return Err(Error::Dataset("truncated header".into()));
    }
    if &buf[..4] != MAGIC {
        return Err(Error::Dataset("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(Error::Dataset(format!("unsupported version {}", word(0))));
    }
    if word(1) != kind {
        return Err(Error::Dataset(format!("expected dataset kind {kind}, found {}", word(1))));
    }
    Ok((word(2) as usize, word(3) as usize, &buf[20..]))
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

pub fn stage0_to_bytes(d: &Stage0Dataset) -> Vec<u8> {
    let mut out = header(KIND_STAGE0, d.size, d.len());
    for v in d.inputs.iter().chain(&d.targets) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn stage0_from_bytes(buf: &[u8]) -> Result<Stage0Dataset> {
    let (size, n, body) = read_header(buf, KIND_STAGE0)?;
    let lattice = Lattice::new(size)?;
    lattice.coarse()?;
    let a = n * size * size * 3 * 4;
    let b = n * size * size / 2 * 4;
    if body.len() != a + b {
        return Err(Error::Dataset(format!("payload is {} bytes, expected {}", body.len(), a + b)));
    }
    Ok(Stage0Dataset { size, inputs: f32s(&body[..a]), targets: f32s(&body[a..]) })
}

pub fn supervised_to_bytes(size: usize, samples: &[SupervisedSample]) -> Vec<u8> {
    let mut out = header(KIND_SUPERVISED, size, samples.len());
    for s in samples {
        for chunk in s.syndrome.bits().chunks(8) {
            out.push(chunk.iter().enumerate().fold(0u8, |b, (i, &v)| b | (v as u8) << i));
        }
        out.push(s.label.z1 as u8 | (s.label.z2 as u8) << 1);
    }
    out
}

pub fn supervised_from_bytes(buf: &[u8]) -> Result<(usize, Vec<SupervisedSample>)> {
    let (size, n, body) = read_header(buf, KIND_SUPERVISED)?;
    let lattice = Lattice::new(size)?;
    let plaq = lattice.num_plaquettes();
    let per = plaq.div_ceil(8) + 1;
    if body.len() != n * per {
        return Err(Error::Dataset(format!("payload is {} bytes, expected {}", body.len(), n * per)));
    }
    let samples = body
        .chunks_exact(per)
        .map(|c| {
            let bits = (0..plaq).map(|p| c[p / 8] >> (p % 8) & 1 == 1).collect();
            let label = c[per - 1];
            Ok(SupervisedSample {
                syndrome: Syndrome::from_bits(lattice, bits)?,
                label: LogicalParity::new(label & 1 == 1, label & 2 == 2),
            })
        })
        .collect::<Result<_>>()?;
    Ok((size, samples))
}

pub fn save_stage0(d: &Stage0Dataset, path: &Path) -> Result<()> {
    fs::write(path, stage0_to_bytes(d))?;
    Ok(())
}

pub fn load_stage0(path: &Path) -> Result<Stage0Dataset> {
    stage0_from_bytes(&fs::read(path)?)
}
