//! Minimum-weight perfect-matching decoder on the dual lattice.
//!
//! Defects are paired by a blossom matching on the complete graph whose edge
//! weights are torus distances (uniform noise) or shortest weighted path
//! lengths (per-edge weights). The correction is the XOR of one path per
//! pair, and the decoder's answer is the logical parity of that correction.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::blossom::max_weight_matching;
use crate::toric::{logical_parity, ErrorConfig, ErrorRates, Lattice, LogicalParity, Syndrome};
use crate::{Error, Result};

/// Fixed-point resolution for real-valued edge weights.
pub const WEIGHT_SCALE: f64 = 1e6;

type Plaquette = (usize, usize);

pub fn torus_distance(a: Plaquette, b: Plaquette, l: usize) -> usize {
    let dx = a.0.abs_diff(b.0);
    let dy = a.1.abs_diff(b.1);
    dx.min(l - dx) + dy.min(l - dy)
}

/// Per-edge weight map of the matching metric.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeWeights {
    /// Every edge weighs 1; pairs use [`torus_distance`] and canonical paths.
    Uniform,
    /// Positive integer weights in units of `1 / WEIGHT_SCALE`.
    PerEdge(Vec<i64>),
}

impl EdgeWeights {
    /// Real weights, quantized to `1 / WEIGHT_SCALE` with a floor of one unit.
    pub fn per_edge(weights: &[f64]) -> Self {
        EdgeWeights::PerEdge(quantize(weights))
    }

    /// `noisy` on edges with a nonzero rate, `quiet` elsewhere.
    pub fn two_level(rates: &ErrorRates, noisy: f64, quiet: f64) -> Self {
        let w: Vec<f64> = rates.raw().iter().map(|&p| if p > 0.0 { noisy } else { quiet }).collect();
        Self::per_edge(&w)
    }

    /// `-log(p / (1 - p))` per edge; rates of ½ and above get the minimum weight.
    pub fn from_log_odds(rates: &ErrorRates) -> Self {
        let w: Vec<f64> = rates.log_odds_all().iter().map(|&r| (-r).max(0.0)).collect();
        Self::per_edge(&w)
    }
}

/// The four dual-lattice moves out of plaquette `p`: `(edge, neighbour)`.
fn dual_moves(lattice: &Lattice, p: usize) -> [(usize, usize); 4] {
    let (x, y) = lattice.plaquette_coord(p);
    let l = lattice.size();
    let (xi, yi) = (x as isize, y as isize);
    [
        (lattice.v(xi + 1, yi), lattice.plaquette_index((x + 1) % l, y)),
        (lattice.v(xi, yi), lattice.plaquette_index((x + l - 1) % l, y)),
        (lattice.h(xi, yi + 1), lattice.plaquette_index(x, (y + 1) % l)),
        (lattice.h(xi, yi), lattice.plaquette_index(x, (y + l - 1) % l)),
    ]
}

/// Dijkstra distances from `source` to every plaquette.
fn distances(lattice: &Lattice, source: usize, weights: &[i64]) -> Vec<i64> {
    let mut dist = vec![i64::MAX; lattice.num_plaquettes()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0;
    heap.push(Reverse((0i64, source)));
    while let Some(Reverse((d, p))) = heap.pop() {
        if d > dist[p] {
            continue;
        }
        for (edge, q) in dual_moves(lattice, p) {
            let nd = d + weights[edge];
            if nd < dist[q] {
                dist[q] = nd;
                heap.push(Reverse((nd, q)));
            }
        }
    }
    dist
}

/// Lexicographically smallest minimum-weight path (as a plaquette sequence,
/// parallel edges broken by edge index) from `from` to the source of
/// `dist_to_target`. Returns the edges crossed.
fn walk(lattice: &Lattice, from: usize, dist_to_target: &[i64], weights: &[i64]) -> Vec<usize> {
    let mut edges = Vec::new();
    let mut p = from;
    while dist_to_target[p] > 0 {
        let (edge, q) = dual_moves(lattice, p)
            .into_iter()
            .filter(|&(e, q)| dist_to_target[q] + weights[e] == dist_to_target[p])
            .min_by_key(|&(e, q)| (q, e))
            .expect("a tight edge leaves every non-target plaquette");
        edges.push(edge);
        p = q;
    }
    edges
}

/// Quantized weights with a floor of one unit, so every step makes progress.
fn quantize(weights: &[f64]) -> Vec<i64> {
    weights.iter().map(|&w| ((w * WEIGHT_SCALE).round() as i64).max(1)).collect()
}

/// Minimum-weight dual-lattice path between plaquettes `a` and `b`.
/// Returns the weight (in the caller's units) and the edges crossed.
pub fn weighted_path(lattice: &Lattice, a: Plaquette, b: Plaquette, weights: &[f64]) -> (f64, Vec<usize>) {
    let w = quantize(weights);
    let ia = lattice.plaquette_index(a.0, a.1);
    let dist = distances(lattice, lattice.plaquette_index(b.0, b.1), &w);
    (dist[ia] as f64 / WEIGHT_SCALE, walk(lattice, ia, &dist, &w))
}

/// A perfect matching of defects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Index pairs into the defect list, each with `first < second`, sorted.
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: i64,
}

/// Minimum-weight perfect matching on the complete graph over `n` vertices
/// with symmetric nonnegative weights `weight(i, j)`.
pub fn min_weight_matching(n: usize, weight: impl Fn(usize, usize) -> i64) -> Result<Matching> {
    if n % 2 == 1 {
        return Err(Error::OddDefects(n));
    }
    if n == 0 {
        return Ok(Matching { pairs: Vec::new(), total_weight: 0 });
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    let mut max_w = 0;
    for i in 0..n {
        for j in i + 1..n {
            let w = weight(i, j);
            max_w = max_w.max(w);
            edges.push((i, j, w));
        }
    }
    // maximum-cardinality max-weight on (C - w) is min-weight perfect on w
    let offset = max_w + 1;
    let flipped: Vec<(usize, usize, i64)> = edges.iter().map(|&(i, j, w)| (i, j, offset - w)).collect();
    let mates = max_weight_matching(n, &flipped, true);
    let mut pairs = Vec::with_capacity(n / 2);
    let mut total = 0;
    for (i, m) in mates.iter().enumerate() {
        let j = m.expect("complete graph on an even vertex set has a perfect matching");
        if i < j {
            pairs.push((i, j));
            total += weight(i, j);
        }
    }
    Ok(Matching { pairs, total_weight: total })
}

/// Correction chosen by the matching decoder.
pub fn mwpm_correction(syndrome: &Syndrome, weights: &EdgeWeights) -> Result<ErrorConfig> {
    let lattice = syndrome.lattice();
    let defects = syndrome.defects();
    let mut correction = ErrorConfig::zeros(lattice);
    match weights {
        EdgeWeights::Uniform => {
            let l = lattice.size();
            let m = min_weight_matching(defects.len(), |i, j| {
                torus_distance(defects[i], defects[j], l) as i64
            })?;
            for (i, j) in m.pairs {
                for e in lattice.canonical_path(defects[i], defects[j]) {
                    correction.flip(e);
                }
            }
        }
        EdgeWeights::PerEdge(w) => {
            if w.len() != lattice.num_edges() {
                return Err(Error::LengthMismatch { expected: lattice.num_edges(), got: w.len() });
            }
            if let Some(&bad) = w.iter().find(|&&x| x <= 0) {
                return Err(Error::NonPositiveWeight(bad));
            }
            let idx: Vec<usize> = defects.iter().map(|&(x, y)| lattice.plaquette_index(x, y)).collect();
            let dist: Vec<Vec<i64>> = idx.iter().map(|&p| distances(&lattice, p, w)).collect();
            let m = min_weight_matching(defects.len(), |i, j| dist[j][idx[i]])?;
            for (i, j) in m.pairs {
                for e in walk(&lattice, idx[i], &dist[j], w) {
                    correction.flip(e);
                }
            }
        }
    }
    Ok(correction)
}

/// Logical parity asserted by the matching decoder.
pub fn mwpm_decode(syndrome: &Syndrome, weights: &EdgeWeights) -> Result<LogicalParity> {
    Ok(logical_parity(&mwpm_correction(syndrome, weights)?))
}
