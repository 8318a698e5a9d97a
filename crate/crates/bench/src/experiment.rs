//! Monte Carlo accuracy estimation with paired samples.
//!
//! Trial `i` of a run with seed `s` always draws its errors from stream
//! `(s, EVAL, i)`, so different decoders evaluated with the same seed see
//! identical syndromes.

use std::time::Instant;

use neural_decoder::DecoderModel;
use rayon::prelude::*;
use toric_core::oracle::exact_ml_decode;
use toric_core::rng::{domain, stream_rng};
use toric_core::{mwpm_decode, rg_decode, sample_errors, syndrome_of, logical_parity, EdgeWeights, ErrorRates, LogicalParity, Syndrome};

use crate::Result;

/// Trials decoded together by the neural decoder.
const NEURAL_CHUNK: usize = 64;

pub enum Decoder<'a> {
    BpRg,
    Mwpm(EdgeWeights),
    ExactMl,
    /// `input` overrides the per-edge log-odds fed to the network; by default
    /// the true rates are used.
    Neural { model: &'a DecoderModel, input: Option<Vec<f32>> },
}

impl Decoder<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Decoder::BpRg => "bp-rg",
            Decoder::Mwpm(EdgeWeights::Uniform) => "mwpm",
            Decoder::Mwpm(_) => "mwpm-weighted",
            Decoder::ExactMl => "exact-ml",
            Decoder::Neural { model, .. } if model.site_log_odds.is_some() => "neural-calibrated",
            Decoder::Neural { .. } => "neural",
        }
    }

    /// Hard decisions for a set of syndromes.
    pub fn decide(&self, syndromes: &[Syndrome], rates: &ErrorRates) -> Result<Vec<LogicalParity>> {
        let hard = |p: (f64, f64)| LogicalParity::new(p.0 > 0.5, p.1 > 0.5);
        match self {
            Decoder::BpRg => syndromes.par_iter().map(|s| Ok(hard(rg_decode(s, rates)?))).collect(),
            Decoder::ExactMl => syndromes.par_iter().map(|s| Ok(hard(exact_ml_decode(s, rates)?))).collect(),
            Decoder::Mwpm(w) => syndromes.par_iter().map(|s| Ok(mwpm_decode(s, w)?)).collect(),
            Decoder::Neural { model, input } => {
                let own: Vec<f32>;
                let r = match input {
                    Some(r) => r,
                    None => {
                        own = rates.log_odds_all().iter().map(|&v| v as f32).collect();
                        &own
                    }
                };
                let chunks: Vec<Vec<LogicalParity>> = syndromes
                    .par_chunks(NEURAL_CHUNK)
                    .map(|c| {
                        let probs = model.infer_batch(c, &[r])?;
                        Ok(probs.iter().map(|&(a, b)| hard((a as f64, b as f64))).collect())
                    })
                    .collect::<Result<_>>()?;
                Ok(chunks.concat())
            }
        }
    }
}

/// Syndromes and labels of trials `0..trials`.
pub fn paired_samples(rates: &ErrorRates, trials: usize, seed: u64) -> (Vec<Syndrome>, Vec<LogicalParity>) {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let e = sample_errors(rates, &mut stream_rng(seed, domain::EVAL, i as u64));
            (syndrome_of(&e), logical_parity(&e))
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRecord {
    pub decoder: String,
    pub size: usize,
    pub p: f64,
    pub trials: usize,
    pub acc_z1: f64,
    pub acc_z2: f64,
    /// Mean over the two logical qubits.
    pub acc_mean: f64,
    /// Both logical bits correct.
    pub acc_joint: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seconds: f64,
}

impl AccuracyRecord {
    pub fn from_counts(decoder: &str, size: usize, p: f64, trials: usize, hits: [usize; 3], seconds: f64) -> Self {
        let n = trials as f64;
        let acc_mean = (hits[0] + hits[1]) as f64 / (2.0 * n);
        let (ci_lo, ci_hi) = wilson_interval(acc_mean, trials);
        Self {
            decoder: decoder.to_string(),
            size,
            p,
            trials,
            acc_z1: hits[0] as f64 / n,
            acc_z2: hits[1] as f64 / n,
            acc_mean,
            acc_joint: hits[2] as f64 / n,
            ci_lo,
            ci_hi,
            seconds,
        }
    }

    /// Wilson intervals overlap.
    pub fn overlaps(&self, other: &AccuracyRecord) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

/// 95% Wilson score interval for a proportion `phat` over `n` trials.
pub fn wilson_interval(phat: f64, n: usize) -> (f64, f64) {
    const Z: f64 = 1.959963984540054;
    let n = n as f64;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = Z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `[z1 correct, z2 correct, both correct]` counts.
pub fn score(decisions: &[LogicalParity], labels: &[LogicalParity]) -> [usize; 3] {
    decisions.iter().zip(labels).fold([0; 3], |[a, b, c], (d, l)| {
        let (h1, h2) = (d.z1 == l.z1, d.z2 == l.z2);
        [a + h1 as usize, b + h2 as usize, c + (h1 && h2) as usize]
    })
}

/// Accuracy of one decoder on `trials` paired samples. `p` is the label
/// written to the record.
pub fn run_accuracy(decoder: &Decoder, rates: &ErrorRates, p: f64, trials: usize, seed: u64) -> Result<AccuracyRecord> {
    let start = Instant::now();
    let (syndromes, labels) = paired_samples(rates, trials, seed);
    let decisions = decoder.decide(&syndromes, rates)?;
    let hits = score(&decisions, &labels);
    let size = rates.lattice().size();
    Ok(AccuracyRecord::from_counts(decoder.name(), size, p, trials, hits, start.elapsed().as_secs_f64()))
}

/// Evaluates every decoder on the same samples, per grid point.
pub fn compare_decoders(decoders: &[Decoder], rates: &[(f64, ErrorRates)], trials: usize, seed: u64) -> Result<Vec<AccuracyRecord>> {
    let mut out = Vec::new();
    for (p, r) in rates {
        for d in decoders {
            out.push(run_accuracy(d, r, *p, trials, seed)?);
        }
    }
    Ok(out)
}

/// Effective threshold: where the accuracy curves of two lattice sizes
/// cross, by linear interpolation between adjacent grid points. Inputs are
/// `(p, accuracy)` on the same grid, sorted by `p`.
pub fn crossing(small: &[(f64, f64)], large: &[(f64, f64)]) -> Option<f64> {
    let diff: Vec<(f64, f64)> = small.iter().zip(large).map(|(&(p, a), &(_, b))| (p, b - a)).collect();
    for w in diff.windows(2) {
        let ((p0, d0), (p1, d1)) = (w[0], w[1]);
        if d0 == 0.0 {
            return Some(p0);
        }
        if d0 * d1 < 0.0 {
            return Some(p0 + (p1 - p0) * d0 / (d0 - d1));
        }
    }
    diff.last().filter(|d| d.1 == 0.0).map(|d| d.0)
}
