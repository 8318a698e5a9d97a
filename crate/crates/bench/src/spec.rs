//! Experiment descriptions parsed from the same `key = value` text as the
//! training config.

use std::path::PathBuf;

use neural_decoder::config::parse_pairs;
use neural_decoder::data::half_noisy_rates;
use neural_decoder::train::logit;
use neural_decoder::{load_checkpoint, Checkpoint, DecoderModel};
use toric_core::{EdgeWeights, ErrorRates, Lattice};

use crate::experiment::{run_accuracy, AccuracyRecord, Decoder};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderId {
    BpRg,
    Neural,
    Mwpm,
    ExactMl,
}

impl std::str::FromStr for DecoderId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bp-rg" => Ok(Self::BpRg),
            "neural" => Ok(Self::Neural),
            "mwpm" => Ok(Self::Mwpm),
            "exact-ml" => Ok(Self::ExactMl),
            _ => Err(Error::Config(format!("unknown decoder {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    /// The same rate on every edge, one grid point per `ps` entry.
    Uniform,
    /// Each edge independently at `rate` or noiseless, fixed by `mask_seed`.
    HalfNoisy { rate: f64, mask_seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchingWeights {
    Unweighted,
    /// Edge weight `noisy` where the rate is positive, `quiet` elsewhere.
    TwoLevel { noisy: f64, quiet: f64 },
    /// `-log-odds` of each edge's rate.
    LogOdds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub decoders: Vec<DecoderId>,
    pub sizes: Vec<usize>,
    pub ps: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub checkpoints: Vec<PathBuf>,
    pub noise: Noise,
    pub matching: MatchingWeights,
    /// Feed the network this constant rate instead of the true rates.
    pub neural_input_p: Option<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            decoders: vec![DecoderId::Mwpm],
            sizes: vec![16],
            ps: vec![0.08],
            trials: 10_000,
            seed: 1,
            checkpoints: Vec::new(),
            noise: Noise::Uniform,
            matching: MatchingWeights::Unweighted,
            neural_input_p: None,
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad entry in {key}: {s}"))))
        .collect()
}

fn one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value for {key}: {v}")))
}

impl ExperimentSpec {
    /// Applies `pairs`; keys belonging to other consumers are ignored when
    /// `strict` is false.
    pub fn from_pairs(pairs: &[(String, String)], strict: bool) -> Result<Self> {
        let mut s = Self::default();
        let (mut noise_rate, mut mask_seed, mut half) = (0.16, 1, false);
        let (mut weights, mut noisy, mut quiet) = ("unweighted".to_string(), 1.0, 100.0);
        for (k, v) in pairs {
            match k.as_str() {
                "decoder" | "decoders" => {
                    s.decoders = v.split(',').map(|d| d.trim().parse()).collect::<Result<_>>()?;
                }
                "sizes" | "L" => s.sizes = list(k, v)?,
                "ps" | "p" => s.ps = list(k, v)?,
                "trials" => s.trials = one(k, v)?,
                "eval_seed" => s.seed = one(k, v)?,
                "checkpoint" | "checkpoints" => s.checkpoints = v.split(',').map(|p| PathBuf::from(p.trim())).collect(),
                "noise" => match v.as_str() {
                    "uniform" => half = false,
                    "half-noisy" => half = true,
                    _ => return Err(Error::Config(format!("unknown noise model {v}"))),
                },
                "noise_rate" => noise_rate = one(k, v)?,
                "mask_seed" => mask_seed = one(k, v)?,
                "matching_weights" => weights = v.clone(),
                "noisy_weight" => noisy = one(k, v)?,
                "quiet_weight" => quiet = one(k, v)?,
                "neural_input_p" => s.neural_input_p = Some(one(k, v)?),
                _ if strict => return Err(Error::Config(format!("unknown key: {k}"))),
                _ => {}
            }
        }
        if half {
            s.noise = Noise::HalfNoisy { rate: noise_rate, mask_seed };
        }
        s.matching = match weights.as_str() {
            "unweighted" => MatchingWeights::Unweighted,
            "two-level" => MatchingWeights::TwoLevel { noisy, quiet },
            "log-odds" => MatchingWeights::LogOdds,
            _ => return Err(Error::Config(format!("unknown matching_weights {weights}"))),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?, true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.decoders.is_empty() || self.sizes.is_empty() {
            return Err(Error::Config("need at least one decoder and one size".into()));
        }
        if let Some(p) = self.ps.iter().find(|p| !(**p > 0.0 && **p < 0.5)) {
            return Err(Error::Config(format!("p = {p} outside (0, 0.5)")));
        }
        if let Noise::HalfNoisy { rate, .. } = self.noise {
            if !(0.0..0.5).contains(&rate) {
                return Err(Error::Config(format!("noise_rate = {rate} outside [0, 0.5)")));
            }
        }
        for &l in &self.sizes {
            Lattice::new(l).map_err(|_| Error::Config(format!("invalid lattice size {l}")))?;
        }
        Ok(())
    }

    /// `(p label, rates)` grid points for one lattice size.
    pub fn grid(&self, size: usize) -> Result<Vec<(f64, ErrorRates)>> {
        let lattice = Lattice::new(size)?;
        match self.noise {
            Noise::Uniform => self.ps.iter().map(|&p| Ok((p, ErrorRates::uniform(lattice, p)?))).collect(),
            Noise::HalfNoisy { rate, mask_seed } => Ok(vec![(rate, half_noisy_rates(lattice, rate, mask_seed)?)]),
        }
    }

    pub fn edge_weights(&self, rates: &ErrorRates) -> EdgeWeights {
        match self.matching {
            MatchingWeights::Unweighted => EdgeWeights::Uniform,
            MatchingWeights::TwoLevel { noisy, quiet } => EdgeWeights::two_level(rates, noisy, quiet),
            MatchingWeights::LogOdds => EdgeWeights::from_log_odds(rates),
        }
    }

    /// Loads every listed decoder checkpoint.
    pub fn load_models(&self) -> Result<Vec<DecoderModel>> {
        self.checkpoints
            .iter()
            .map(|p| match load_checkpoint(p)? {
                Checkpoint::Decoder { model, .. } => Ok(model),
                Checkpoint::BpNetwork { .. } => Err(Error::Config(format!("{} holds a BP network, not a decoder", p.display()))),
            })
            .collect()
    }

    /// Runs every decoder at every size and grid point on paired samples.
    pub fn run(&self, models: &[DecoderModel]) -> Result<Vec<AccuracyRecord>> {
        let mut out = Vec::new();
        for &size in &self.sizes {
            for (p, rates) in self.grid(size)? {
                for id in &self.decoders {
                    let decoder = match id {
                        DecoderId::BpRg => Decoder::BpRg,
                        DecoderId::ExactMl => Decoder::ExactMl,
                        DecoderId::Mwpm => Decoder::Mwpm(self.edge_weights(&rates)),
                        DecoderId::Neural => {
                            let model = models.iter().find(|m| m.size == size).ok_or(Error::MissingCheckpoint(size))?;
                            let input = self
                                .neural_input_p
                                .map(|q| vec![logit(q) as f32; rates.lattice().num_edges()]);
                            Decoder::Neural { model, input }
                        }
                    };
                    out.push(run_accuracy(&decoder, &rates, p, self.trials, self.seed)?);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let s = ExperimentSpec::parse(
            "decoder = mwpm, bp-rg\nsizes = 8,16\nps = 0.06, 0.08\ntrials = 100\nnoise = half-noisy\nmatching_weights = two-level\n",
        )
        .unwrap();
        assert_eq!(s.decoders, vec![DecoderId::Mwpm, DecoderId::BpRg]);
        assert_eq!(s.sizes, vec![8, 16]);
        assert_eq!(s.noise, Noise::HalfNoisy { rate: 0.16, mask_seed: 1 });
        assert_eq!(s.matching, MatchingWeights::TwoLevel { noisy: 1.0, quiet: 100.0 });
        assert!(ExperimentSpec::parse("trials = 0").is_err());
        assert!(ExperimentSpec::parse("ps = 0.6").is_err());
        assert!(ExperimentSpec::parse("decoder = magic").is_err());
        assert!(ExperimentSpec::parse("sizes = 12").is_err());
        assert!(ExperimentSpec::parse("whatever = 1").is_err());
        assert!(ExperimentSpec::from_pairs(&[("whatever".into(), "1".into())], false).is_ok());
    }
}
