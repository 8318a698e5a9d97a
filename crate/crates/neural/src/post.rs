//! Post-processing between renormalization blocks: rescale the predicted
//! log-odds, remove complexity by flipping likely-flipped coarse edges, and
//! coarse-grain the syndrome.

use tensornet::Tensor;
use toric_core::{coarse_syndrome, logical_parity, syndrome_of, ErrorConfig, LogicalParity, Syndrome};

use crate::{Error, Result};

/// Largest log-odds magnitude after rescaling.
pub const RESCALE_TARGET: f32 = 7.0;
/// Below this maximum magnitude the rescale is skipped.
pub const RESCALE_GUARD: f32 = 1e-6;

/// Per-sample data the backward pass needs.
#[derive(Debug, Clone, Default)]
pub struct PostCache {
    dims: (usize, usize, usize),
    raw: Vec<f32>,
    /// `(max |r|, argmax)` for samples that were rescaled.
    scale: Vec<Option<(f32, usize)>>,
    /// `d r'' / d r'`, i.e. -1 where the rescaled value was positive.
    fold: Vec<f32>,
}

pub struct PostOutput {
    /// `(n, h, w, 3)`: syndrome as ±1, then the two coarse-edge log-odds.
    pub tensor: Tensor<f32>,
    /// Coarse syndromes after the flips.
    pub syndromes: Vec<Syndrome>,
    /// Logical parity of each sample's flips.
    pub offsets: Vec<LogicalParity>,
    pub cache: PostCache,
}

/// Rescales each sample's log-odds to a maximum magnitude of
/// [`RESCALE_TARGET`].
pub fn rescale(r: &mut [f32]) -> Option<(f32, usize)> {
    let (k, m) = r.iter().enumerate().fold((0, 0.0f32), |(k, m), (i, &v)| if v.abs() > m { (i, v.abs()) } else { (k, m) });
    if m < RESCALE_GUARD {
        return None;
    }
    let s = RESCALE_TARGET / m;
    r.iter_mut().for_each(|v| *v *= s);
    Some((m, k))
}

/// Syndrome channel value for a plaquette: the stabilizer expectation.
#[inline]
pub fn syndrome_value(defect: bool) -> f32 {
    if defect {
        -1.0
    } else {
        1.0
    }
}

/// `raw` is a block's `(n, h, w, 2)` output over the coarse lattice of the
/// fine syndromes `fine`.
pub fn postprocess(raw: &Tensor<f32>, fine: &[Syndrome]) -> Result<PostOutput> {
    let (n, h, w, c) = raw.dims4()?;
    assert_eq!(c, 2);
    if !raw.all_finite() {
        return Err(Error::NonFinite);
    }
    let per = h * w * 2;
    let mut out = Vec::with_capacity(n * h * w * 3);
    let mut syndromes = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut scale = Vec::with_capacity(n);
    let mut fold = Vec::with_capacity(n * per);
    for (b, s) in fine.iter().enumerate().take(n) {
        let mut r = raw.data()[b * per..(b + 1) * per].to_vec();
        scale.push(rescale(&mut r));
        let coarse = coarse_syndrome(s)?;
        let flips = ErrorConfig::from_bits(coarse.lattice(), r.iter().map(|&v| v > 0.0).collect())?;
        let cs = &coarse ^ &syndrome_of(&flips);
        offsets.push(logical_parity(&flips));
        for p in 0..h * w {
            out.push(syndrome_value(cs.bits()[p]));
            for o in 0..2 {
                let v = r[p * 2 + o];
                out.push(-v.abs());
                fold.push(if v > 0.0 { -1.0 } else { 1.0 });
            }
        }
        syndromes.push(cs);
    }
    Ok(PostOutput {
        tensor: Tensor::new(vec![n, h, w, 3], out)?,
        syndromes,
        offsets,
        cache: PostCache { dims: (n, h, w), raw: raw.data().to_vec(), scale, fold },
    })
}

/// Gradient with respect to the raw block output, given the gradient of the
/// post-processed tensor. The syndrome channel carries no gradient.
pub fn postprocess_backward(cache: &PostCache, grad: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (n, h, w) = cache.dims;
    grad.expect_shape(&[n, h, w, 3])?;
    let per = h * w * 2;
    let mut dr = vec![0.0f32; n * per];
    for b in 0..n {
        let g: Vec<f32> = (0..per)
            .map(|e| grad.data()[b * h * w * 3 + (e / 2) * 3 + 1 + e % 2] * cache.fold[b * per + e])
            .collect();
        let raw = &cache.raw[b * per..(b + 1) * per];
        let slot = &mut dr[b * per..(b + 1) * per];
        match cache.scale[b] {
            None => slot.copy_from_slice(&g),
            Some((m, k)) => {
                let s = RESCALE_TARGET / m;
                let dot: f32 = g.iter().zip(raw).map(|(a, b)| a * b).sum();
                for e in 0..per {
                    slot[e] = s * g[e];
                }
                slot[k] -= raw[k].signum() * s / m * dot;
            }
        }
    }
    Ok(Tensor::new(vec![n, h, w, 2], dr)?)
}
