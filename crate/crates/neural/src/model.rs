//! The decoder network: a stack of renormalization blocks, each a
//! convolutional emulation of belief propagation followed by
//! post-processing, topped by a dense head.

use rand::Rng;
use tensornet::{BatchNorm, Conv, Dense, Layer, LeakyRelu, Mode, Param, Sequential, Sigmoid, Tensor};
use toric_core::{ErrorRates, Lattice, LogicalParity, Syndrome};

use crate::post::{postprocess, postprocess_backward, syndrome_value, PostCache};
use crate::{Error, Result};

pub const DEFAULT_FILTERS: usize = 64;
pub const HEAD_WIDTH: usize = 50;
/// Convolutions per block.
pub const BLOCK_CONVS: usize = 13;
/// 1-based positions of the 3×3 convolutions; position 1 is the 2×2
/// stride-2 reduction.
pub const WIDE_POSITIONS: [usize; 4] = [2, 5, 9, 13];
/// Batch normalization follows these convolutions.
pub const NORM_POSITIONS: [usize; 3] = [4, 8, 12];
/// Features entering the head: a 2×2 lattice with 3 channels.
pub const HEAD_INPUTS: usize = 12;

/// One belief-propagation network: `(l, l, 3)` to `(l/2, l/2, 2)`.
pub fn build_block<R: Rng + ?Sized>(filters: usize, rng: &mut R) -> Sequential<f32> {
    let mut layers = Vec::new();
    for pos in 1..=BLOCK_CONVS {
        let cin = if pos == 1 { 3 } else { filters };
        let cout = if pos == BLOCK_CONVS { 2 } else { filters };
        let conv = if pos == 1 {
            Conv::new(2, 2, cin, cout, rng)
        } else if WIDE_POSITIONS.contains(&pos) {
            Conv::new(3, 1, cin, cout, rng)
        } else {
            Conv::new(1, 1, cin, cout, rng)
        };
        layers.push(Layer::Conv(conv));
        if NORM_POSITIONS.contains(&pos) {
            layers.push(Layer::BatchNorm(BatchNorm::new(filters)));
        }
        if pos != BLOCK_CONVS {
            layers.push(Layer::LeakyRelu(LeakyRelu::new(LeakyRelu::<f32>::SLOPE)));
        }
    }
    Sequential::new(layers)
}

/// Four dense layers ending in two sigmoid probabilities.
pub fn build_head<R: Rng + ?Sized>(rng: &mut R) -> Sequential<f32> {
    let slope = LeakyRelu::<f32>::SLOPE;
    Sequential::new(vec![
        Layer::Dense(Dense::new(HEAD_INPUTS, HEAD_WIDTH, rng)),
        Layer::LeakyRelu(LeakyRelu::new(slope)),
        Layer::Dense(Dense::new(HEAD_WIDTH, HEAD_WIDTH, rng)),
        Layer::LeakyRelu(LeakyRelu::new(slope)),
        Layer::Dense(Dense::new(HEAD_WIDTH, HEAD_WIDTH, rng)),
        Layer::LeakyRelu(LeakyRelu::new(slope)),
        Layer::Dense(Dense::new(HEAD_WIDTH, 2, rng)),
        Layer::Sigmoid(Sigmoid::new()),
    ])
}

/// Network input for one sample: per plaquette `(y, x)` the syndrome as ±1,
/// then the log-odds of its top and left edges. With the edge layout
/// `(y·L + x)·2 + orientation`, channels 1–2 are the log-odds in edge order.
pub fn encode_input(syndrome: &Syndrome, log_odds: &[f32], out: &mut Vec<f32>) -> Result<()> {
    let lattice = syndrome.lattice();
    if log_odds.len() != lattice.num_edges() {
        return Err(toric_core::Error::LengthMismatch { expected: lattice.num_edges(), got: log_odds.len() }.into());
    }
    for (p, &bit) in syndrome.bits().iter().enumerate() {
        out.push(syndrome_value(bit));
        out.push(log_odds[2 * p]);
        out.push(log_odds[2 * p + 1]);
    }
    Ok(())
}

/// How a block takes part in a cached pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRole {
    /// Cache-free inference; gradients stop above this block.
    Infer,
    /// Cached forward in the given batch-norm mode.
    Cached(Mode),
}

/// Record of a cached forward pass.
pub struct Trace {
    roles: Vec<BlockRole>,
    posts: Vec<PostCache>,
    /// Raw head probabilities, `(n, 2)`, before offset toggling.
    pub probs: Tensor<f32>,
    /// Accumulated logical offsets per sample.
    pub offsets: Vec<LogicalParity>,
}

#[derive(Debug, Clone)]
pub struct DecoderModel {
    pub size: usize,
    pub filters: usize,
    pub blocks: Vec<Sequential<f32>>,
    pub head: Sequential<f32>,
    /// Trainable per-edge log-odds replacing the rate channels when present.
    pub site_log_odds: Option<Param<f32>>,
}

impl DecoderModel {
    /// Fresh model with independently initialized blocks.
    pub fn new<R: Rng + ?Sized>(size: usize, filters: usize, rng: &mut R) -> Result<Self> {
        let n = Self::block_count(size)?;
        let blocks = (0..n).map(|_| build_block(filters, rng)).collect();
        Ok(Self { size, filters, blocks, head: build_head(rng), site_log_odds: None })
    }

    /// Every block starts as a copy of the pretrained network.
    pub fn from_pretrained<R: Rng + ?Sized>(size: usize, filters: usize, pretrained: &Sequential<f32>, rng: &mut R) -> Result<Self> {
        let n = Self::block_count(size)?;
        Ok(Self { size, filters, blocks: vec![pretrained.clone(); n], head: build_head(rng), site_log_odds: None })
    }

    /// `log2(L) - 1` blocks take `L` down to 2.
    pub fn block_count(size: usize) -> Result<usize> {
        if size < 4 || !size.is_power_of_two() {
            return Err(toric_core::Error::InvalidLatticeSize(size).into());
        }
        Ok(size.trailing_zeros() as usize - 1)
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.size).expect("validated at construction")
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.num_params()).sum::<usize>()
            + self.head.num_params()
            + self.site_log_odds.as_ref().map_or(0, |p| p.len())
    }

    /// Convolution and dense layers.
    pub fn trainable_layer_count(&self) -> usize {
        self.blocks
            .iter()
            .chain(std::iter::once(&self.head))
            .map(|s| s.layers.iter().filter(|l| l.is_trainable_layer()).count())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        self.blocks.iter_mut().for_each(Sequential::zero_grad);
        self.head.zero_grad();
        if let Some(p) = &mut self.site_log_odds {
            p.zero_grad();
        }
    }

    /// Batch input tensor. Site variables, when present, override `log_odds`.
    pub fn encode_batch(&self, syndromes: &[Syndrome], log_odds: &[&[f32]]) -> Result<Tensor<f32>> {
        let l = self.size;
        let mut data = Vec::with_capacity(syndromes.len() * l * l * 3);
        for (i, s) in syndromes.iter().enumerate() {
            if s.lattice().size() != l {
                return Err(Error::SizeMismatch { model: l, input: s.lattice().size() });
            }
            let r = match &self.site_log_odds {
                Some(p) => &p.value[..],
                None => log_odds[i.min(log_odds.len() - 1)],
            };
            encode_input(s, r, &mut data)?;
        }
        Ok(Tensor::new(vec![syndromes.len(), l, l, 3], data)?)
    }

    /// Output of every block (after post-processing) and the head, cache-free.
    /// Returns the raw head probabilities and the accumulated offsets.
    pub fn infer_raw(&self, syndromes: &[Syndrome], input: &Tensor<f32>) -> Result<(Tensor<f32>, Vec<LogicalParity>)> {
        let mut h = input.clone();
        let mut s = syndromes.to_vec();
        let mut offsets = vec![LogicalParity::default(); syndromes.len()];
        for block in &self.blocks {
            let raw = block.infer(&h)?;
            let post = postprocess(&raw, &s)?;
            for (o, d) in offsets.iter_mut().zip(&post.offsets) {
                *o = *o ^ *d;
            }
            h = post.tensor;
            s = post.syndromes;
        }
        let n = syndromes.len();
        let probs = self.head.infer(&h.reshape(vec![n, HEAD_INPUTS])?)?;
        Ok((probs, offsets))
    }

    /// Raw output of every block, cache-free.
    pub fn block_outputs(&self, syndromes: &[Syndrome], input: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
        let mut h = input.clone();
        let mut s = syndromes.to_vec();
        let mut raws = Vec::new();
        for block in &self.blocks {
            let raw = block.infer(&h)?;
            let post = postprocess(&raw, &s)?;
            raws.push(raw);
            h = post.tensor;
            s = post.syndromes;
        }
        Ok(raws)
    }

    /// `(P(z1 = 1), P(z2 = 1))` for a batch, with the offsets folded in.
    pub fn infer_batch(&self, syndromes: &[Syndrome], log_odds: &[&[f32]]) -> Result<Vec<(f32, f32)>> {
        let input = self.encode_batch(syndromes, log_odds)?;
        let (probs, offsets) = self.infer_raw(syndromes, &input)?;
        Ok(offsets
            .iter()
            .enumerate()
            .map(|(i, o)| (toggle(probs.data()[2 * i], o.z1), toggle(probs.data()[2 * i + 1], o.z2)))
            .collect())
    }

    pub fn decode(&self, syndrome: &Syndrome, rates: &ErrorRates) -> Result<(f64, f64)> {
        let r: Vec<f32> = rates.log_odds_all().iter().map(|&v| v as f32).collect();
        let (a, b) = self.infer_batch(std::slice::from_ref(syndrome), &[&r])?[0];
        Ok((a as f64, b as f64))
    }

    /// Cached forward pass. Blocks after the last `Infer` block are cached;
    /// the head is always cached.
    pub fn forward_train(&mut self, syndromes: &[Syndrome], input: &Tensor<f32>, roles: &[BlockRole]) -> Result<Trace> {
        assert_eq!(roles.len(), self.blocks.len());
        let mut h = input.clone();
        let mut s = syndromes.to_vec();
        let mut offsets = vec![LogicalParity::default(); syndromes.len()];
        let mut posts = Vec::with_capacity(self.blocks.len());
        for (block, role) in self.blocks.iter_mut().zip(roles) {
            let raw = match role {
                BlockRole::Infer => block.infer(&h)?,
                BlockRole::Cached(mode) => block.forward(&h, *mode)?,
            };
            let post = postprocess(&raw, &s)?;
            for (o, d) in offsets.iter_mut().zip(&post.offsets) {
                *o = *o ^ *d;
            }
            posts.push(post.cache);
            h = post.tensor;
            s = post.syndromes;
        }
        let n = syndromes.len();
        let probs = self.head.forward(&h.reshape(vec![n, HEAD_INPUTS])?, Mode::Train)?;
        Ok(Trace { roles: roles.to_vec(), posts, probs, offsets })
    }

    /// Backpropagates `grad` (with respect to the raw head probabilities)
    /// through the head and every cached block. Returns the gradient of the
    /// model input when it was reached.
    pub fn backward(&mut self, trace: Trace, grad: &Tensor<f32>) -> Result<Option<Tensor<f32>>> {
        let n = trace.probs.batch();
        let g = self.head.backward(grad)?;
        let mut g = g.reshape(vec![n, 2, 2, 3])?;
        for k in (0..self.blocks.len()).rev() {
            if trace.roles[k] == BlockRole::Infer {
                return Ok(None);
            }
            let graw = postprocess_backward(&trace.posts[k], &g)?;
            g = self.blocks[k].backward(&graw)?;
        }
        if let Some(p) = &mut self.site_log_odds {
            for (i, v) in g.data().iter().enumerate() {
                let c = i % 3;
                if c > 0 {
                    p.grad[((i / 3) % (self.size * self.size)) * 2 + c - 1] += *v;
                }
            }
        }
        Ok(Some(g))
    }
}

/// `p` or `1 - p`.
#[inline]
pub fn toggle(p: f32, flip: bool) -> f32 {
    if flip {
        1.0 - p
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_census() {
        let b = build_block(8, &mut ChaCha8Rng::seed_from_u64(0));
        let convs: Vec<&Conv<f32>> = b.layers.iter().filter_map(|l| if let Layer::Conv(c) = l { Some(c) } else { None }).collect();
        assert_eq!(convs.len(), 13);
        assert_eq!(convs.iter().filter(|c| c.kernel == 3).count(), 4);
        assert_eq!((convs[0].kernel, convs[0].stride), (2, 2));
        assert!(convs[1..].iter().all(|c| c.stride == 1));
        assert_eq!(convs[12].out_channels, 2);
        assert_eq!(b.layers.iter().filter(|l| matches!(l, Layer::BatchNorm(_))).count(), 3);
        assert!(matches!(b.layers.last(), Some(Layer::Conv(_))));
    }

    #[test]
    fn block_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(DecoderModel::new(4, 4, &mut rng).unwrap().blocks.len(), 1);
        assert_eq!(DecoderModel::new(16, 4, &mut rng).unwrap().blocks.len(), 3);
        assert!(DecoderModel::new(2, 4, &mut rng).is_err());
        assert!(DecoderModel::new(12, 4, &mut rng).is_err());
    }

    #[test]
    fn encode_examples() {
        let lat = Lattice::new(4).unwrap();
        let r = vec![(0.09f32 / 0.91).ln(); 32];
        let mut v = Vec::new();
        encode_input(&Syndrome::zeros(lat), &r, &mut v).unwrap();
        assert!(v.chunks(3).all(|c| c[0] == 1.0 && (c[1] + 2.313).abs() < 1e-3 && c[1] == c[2]));
        let mut v = Vec::new();
        encode_input(&Syndrome::from_defects(lat, &[(1, 2), (2, 2)]), &r, &mut v).unwrap();
        let negatives: Vec<usize> = v.chunks(3).enumerate().filter(|(_, c)| c[0] < 0.0).map(|(i, _)| i).collect();
        assert_eq!(negatives, vec![lat.plaquette_index(1, 2), lat.plaquette_index(2, 2)]);
    }
}
