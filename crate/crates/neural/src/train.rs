//! The staged training pipeline: pretraining one belief-propagation block on
//! handcrafted BP targets, then the dense head, then the whole network, and
//! finally site-dependent rate calibration under inhomogeneous noise.
//!
//! Supervised stages draw fresh samples every batch from their own stream
//! domain, so a run is fully determined by the config.

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use tensornet::{cross_entropy, mse, Adam, Mode, Param, Sequential, Tensor};
use toric_core::rng::{domain, stream_rng};
use toric_core::{ErrorRates, Lattice};

use crate::config::TrainConfig;
use crate::data::{supervised_batch, Stage0Dataset, SupervisedSample};
use crate::model::{build_block, BlockRole, DecoderModel};
use crate::{Error, Result};

/// Batches used when scoring a validation split.
const EVAL_CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub batch: usize,
    pub loss: f64,
    pub lr: f64,
    pub stage: &'static str,
}

/// Per-batch training losses, written as `batch,loss,lr,stage`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, stage: &'static str, batch: usize, loss: f64, lr: f64) {
        self.rows.push(LogRow { batch, loss, lr, stage });
    }

    pub fn stage(&self, stage: &str) -> impl Iterator<Item = &LogRow> {
        let stage = stage.to_string();
        self.rows.iter().filter(move |r| r.stage == stage)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("batch,loss,lr,stage\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.batch, r.loss, r.lr, r.stage).unwrap();
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn diverged(stage: &'static str, batch: usize, loss: f64, cfg: &TrainConfig) -> Error {
    Error::Diverged { stage, batch, loss, config: cfg.to_text() }
}

/// Outcome of pretraining.
#[derive(Debug, Clone)]
pub struct Stage0Report {
    pub network: Sequential<f32>,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
    /// Fraction of validation coarse edges whose predicted log-odds sign
    /// matches handcrafted BP.
    pub sign_agreement: f64,
    pub train_samples: usize,
    pub val_samples: usize,
}

/// Mean squared error and sign agreement on a set of samples, in inference
/// mode.
pub fn stage0_score(net: &Sequential<f32>, data: &Stage0Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    let (mut se, mut agree, mut total) = (0.0f64, 0usize, 0usize);
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch(chunk)?;
        let pred = net.infer(&x)?;
        for (p, t) in pred.data().iter().zip(y.data()) {
            se += ((p - t) as f64).powi(2);
            agree += ((*p > 0.0) == (*t > 0.0)) as usize;
            total += 1;
        }
    }
    Ok((se / total as f64, agree as f64 / total as f64))
}

/// Regresses one block onto handcrafted BP coarse log-odds. The last
/// `stage0_holdout` fraction of the dataset is held out for validation.
pub fn train_stage0(cfg: &TrainConfig, data: &Stage0Dataset, log: &mut TrainLog) -> Result<Stage0Report> {
    let n = data.len();
    let n_val = (n as f64 * cfg.stage0_holdout).round() as usize;
    let n_train = n - n_val;
    if n_val == 0 || n_train < cfg.batch_size {
        return Err(Error::Config(format!("stage-0 dataset of {n} samples is too small to split")));
    }
    let val: Vec<usize> = (n_train..n).collect();
    let mut net = build_block(cfg.filters, &mut stream_rng(cfg.seed, domain::INIT, 0));
    let (initial_val_loss, _) = stage0_score(&net, data, &val)?;

    let mut adam = Adam::new();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut batch = 0;
    for epoch in 0..cfg.stage0_epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, domain::SHUFFLE, epoch as u64));
        for chunk in order.chunks_exact(cfg.batch_size) {
            let (x, y) = data.batch(chunk)?;
            net.zero_grad();
            let pred = net.forward(&x, Mode::Train)?;
            let (loss, grad) = mse(pred.data(), y.data());
            if !loss.is_finite() {
                return Err(diverged("stage0", batch, loss, cfg));
            }
            net.backward(&Tensor::new(pred.shape().to_vec(), grad)?)?;
            adam.step(&mut net.params_mut(), cfg.stage0_lr)?;
            log.push("stage0", batch, loss, cfg.stage0_lr);
            batch += 1;
        }
        info!("stage0 epoch {} done, last batch loss {:.4}", epoch + 1, log.rows.last().map_or(f64::NAN, |r| r.loss));
    }

    let (final_val_loss, sign_agreement) = stage0_score(&net, data, &val)?;
    if !final_val_loss.is_finite() {
        return Err(diverged("stage0", batch, final_val_loss, cfg));
    }
    Ok(Stage0Report { network: net, initial_val_loss, final_val_loss, sign_agreement, train_samples: n_train, val_samples: n_val })
}

/// Cross-entropy targets with the accumulated offsets folded into the labels.
fn toggled_targets(samples: &[SupervisedSample], offsets: &[toric_core::LogicalParity]) -> Vec<f32> {
    samples
        .iter()
        .zip(offsets)
        .flat_map(|(s, o)| {
            let t = s.label ^ *o;
            [t.z1 as u8 as f32, t.z2 as u8 as f32]
        })
        .collect()
}

/// One optimization step on a supervised batch; returns the loss.
fn supervised_step(
    model: &mut DecoderModel,
    samples: &[SupervisedSample],
    log_odds: &[f32],
    roles: &[BlockRole],
) -> Result<f64> {
    let syndromes: Vec<_> = samples.iter().map(|s| s.syndrome.clone()).collect();
    let input = model.encode_batch(&syndromes, &[log_odds])?;
    model.zero_grad();
    let trace = model.forward_train(&syndromes, &input, roles)?;
    let targets = toggled_targets(samples, &trace.offsets);
    let (loss, grad) = cross_entropy(trace.probs.data(), &targets);
    if !loss.is_finite() {
        return Err(Error::NonFinite);
    }
    let grad = Tensor::new(trace.probs.shape().to_vec(), grad)?;
    model.backward(trace, &grad)?;
    Ok(loss)
}

struct Stage<'a> {
    name: &'static str,
    rates: &'a ErrorRates,
    stream: u64,
    batches: usize,
    lr: f64,
    roles: Vec<BlockRole>,
    select: fn(&mut DecoderModel) -> Vec<&mut Param<f32>>,
}

/// Batches between progress messages of the supervised stages.
const PROGRESS_EVERY: usize = 500;

fn run_stage(model: &mut DecoderModel, cfg: &TrainConfig, stage: Stage, log: &mut TrainLog) -> Result<()> {
    let log_odds: Vec<f32> = stage.rates.log_odds_all().iter().map(|&v| v as f32).collect();
    let mut adam = Adam::new();
    for b in 0..stage.batches {
        let samples = supervised_batch(stage.rates, cfg.seed, stage.stream, b, cfg.batch_size);
        let loss = match supervised_step(model, &samples, &log_odds, &stage.roles) {
            Ok(l) => l,
            Err(Error::NonFinite) => return Err(diverged(stage.name, b, f64::NAN, cfg)),
            Err(e) => return Err(e),
        };
        adam.step(&mut (stage.select)(model), stage.lr)?;
        log.push(stage.name, b, loss, stage.lr);
        if (b + 1) % PROGRESS_EVERY == 0 {
            let recent: f64 = log.rows.iter().rev().take(PROGRESS_EVERY).map(|r| r.loss).sum::<f64>() / PROGRESS_EVERY as f64;
            info!("{} batch {}/{}: mean loss {recent:.4}", stage.name, b + 1, stage.batches);
        }
    }
    Ok(())
}

fn uniform_rates(model: &DecoderModel, p: f64) -> Result<ErrorRates> {
    Ok(ErrorRates::uniform(Lattice::new(model.size)?, p)?)
}

/// Every block of a fresh model starts from the pretrained network.
pub fn model_from_pretrained(cfg: &TrainConfig, pretrained: &Sequential<f32>) -> Result<DecoderModel> {
    DecoderModel::from_pretrained(cfg.size, cfg.filters, pretrained, &mut stream_rng(cfg.seed, domain::INIT, 1))
}

/// Trains only the dense head; the blocks run cache-free in inference mode.
pub fn train_dense(model: &mut DecoderModel, cfg: &TrainConfig, log: &mut TrainLog) -> Result<()> {
    let rates = uniform_rates(model, cfg.train_p)?;
    let stage = Stage {
        name: "dense",
        rates: &rates,
        stream: domain::DENSE_BATCH,
        batches: cfg.dense_batches,
        lr: cfg.dense_lr,
        roles: vec![BlockRole::Infer; model.blocks.len()],
        select: |m| m.head.params_mut(),
    };
    run_stage(model, cfg, stage, log)
}

/// Trains every block and the head together.
pub fn train_global(model: &mut DecoderModel, cfg: &TrainConfig, log: &mut TrainLog) -> Result<()> {
    let rates = uniform_rates(model, cfg.train_p)?;
    let stage = Stage {
        name: "global",
        rates: &rates,
        stream: domain::GLOBAL_BATCH,
        batches: cfg.global_batches,
        lr: cfg.global_lr,
        roles: vec![BlockRole::Cached(Mode::Train); model.blocks.len()],
        select: |m| {
            let mut p: Vec<&mut Param<f32>> = m.blocks.iter_mut().flat_map(|b| b.params_mut()).collect();
            p.extend(m.head.params_mut());
            p
        },
    };
    run_stage(model, cfg, stage, log)
}

/// `log(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Adapts a uniform-trained model to the site-dependent noise `rates`.
/// The first block is reset to the pretrained network and trained jointly
/// with one input log-odds variable per edge; everything else stays fixed,
/// including the batch-norm statistics of later blocks.
pub fn calibrate_site_rates(
    model: &mut DecoderModel,
    pretrained: &Sequential<f32>,
    rates: &ErrorRates,
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<()> {
    if rates.lattice().size() != model.size {
        return Err(Error::SizeMismatch { model: model.size, input: rates.lattice().size() });
    }
    model.blocks[0] = pretrained.clone();
    model.site_log_odds = Some(Param::new(vec![logit(cfg.calib_initial_p) as f32; rates.lattice().num_edges()]));
    let mut roles = vec![BlockRole::Cached(Mode::Frozen); model.blocks.len()];
    roles[0] = BlockRole::Cached(Mode::Train);
    let stage = Stage {
        name: "calibrate",
        rates,
        stream: domain::CALIBRATE_BATCH,
        batches: cfg.calib_batches,
        lr: cfg.calib_lr,
        roles,
        select: |m| {
            let mut p = m.blocks[0].params_mut();
            p.push(m.site_log_odds.as_mut().expect("set above"));
            p
        },
    };
    run_stage(model, cfg, stage, log)
}

/// Mean cross-entropy of the model on `n` fresh samples from `stream`.
pub fn heldout_loss(model: &DecoderModel, rates: &ErrorRates, log_odds: &[f32], seed: u64, stream: u64, n: usize) -> Result<f64> {
    let samples = supervised_batch(rates, seed, stream, 0, n);
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let syndromes: Vec<_> = chunk.iter().map(|s| s.syndrome.clone()).collect();
        let input = model.encode_batch(&syndromes, &[log_odds])?;
        let (probs, offsets) = model.infer_raw(&syndromes, &input)?;
        let (loss, _) = cross_entropy(probs.data(), &toggled_targets(chunk, &offsets));
        total += loss * chunk.len() as f64;
    }
    Ok(total / n as f64)
}
