//! Belief propagation on 2×2 unit cells and the renormalization-group
//! decoder built from it.
//!
//! The factor graph has one factor per unit cell and one variable per coarse
//! edge; each variable holds the joint state `(x(e_i), x(e_j))` of the two
//! fine edges forming the coarse edge. A cell factor sums over the four
//! interior edges of the cell and enforces all four plaquette checks.
//!
//! A message from cell `c` to neighbour `n` is a distribution over the four
//! joint states of the shared coarse edge. It carries the prior of that coarse
//! edge, so the edge marginal is `m(c→n) · m(n→c) / prior`.
//!
//! Joint states are indexed `x_i | x_j << 1`.

use std::sync::OnceLock;

use crate::toric::{coarse_syndrome, CoarseEdgeMap, ErrorConfig, ErrorRates, Lattice, Syndrome};
use crate::toric::{logical_parity, syndrome_of, LogicalParity};
use crate::{Error, Result};

pub const DEFAULT_ROUNDS: usize = 7;

/// Coarse log-odds are clamped to `[-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP]`.
pub const LOG_ODDS_CLAMP: f64 = 30.0;

/// Four nonnegative reals `m(x_i, x_j)`, normalized to sum 1 after each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMessage(pub [f64; 4]);

impl CellMessage {
    pub const UNIFORM: CellMessage = CellMessage([0.25; 4]);

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    fn normalized(mut self) -> Result<Self> {
        let total = self.sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::NonFiniteMessage);
        }
        for v in &mut self.0 {
            *v /= total;
        }
        Ok(self)
    }
}

/// Sides of a unit cell, in message-array order.
pub const TOP: usize = 0;
pub const LEFT: usize = 1;
pub const BOTTOM: usize = 2;
pub const RIGHT: usize = 3;

#[inline]
fn opposite(side: usize) -> usize {
    (side + 2) % 4
}

/// `(p(0), p(1))` for an edge with log-odds `r`.
#[inline]
pub fn prior_from_log_odds(r: f64) -> [f64; 2] {
    [1.0 / (1.0 + r.exp()), 1.0 / (1.0 + (-r).exp())]
}

#[inline]
fn pair_prior(a: [f64; 2], b: [f64; 2]) -> [f64; 4] {
    [a[0] * b[0], a[1] * b[0], a[0] * b[1], a[1] * b[1]]
}

// Local bit layout of a cell configuration (12 bits):
//   0,1 top pair   2,3 left pair   4,5 bottom pair   6,7 right pair
//   8 h(2X,2Y+1)   9 h(2X+1,2Y+1)  10 v(2X+1,2Y)     11 v(2X+1,2Y+1)
// Plaquette checks, local syndrome bit order (2X,2Y) (2X+1,2Y) (2X,2Y+1) (2X+1,2Y+1):
const CHECKS: [u16; 4] = [
    1 << 0 | 1 << 8 | 1 << 2 | 1 << 10,
    1 << 1 | 1 << 9 | 1 << 10 | 1 << 6,
    1 << 8 | 1 << 4 | 1 << 3 | 1 << 11,
    1 << 9 | 1 << 5 | 1 << 11 | 1 << 7,
];

/// For every local syndrome, all `(boundary, interior)` configurations that
/// satisfy the four checks.
fn valid_configs() -> &'static [Vec<(u8, u8)>; 16] {
    static TABLE: OnceLock<[Vec<(u8, u8)>; 16]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table: [Vec<(u8, u8)>; 16] = Default::default();
        for cfg in 0u16..4096 {
            let mut s = 0usize;
            for (k, mask) in CHECKS.iter().enumerate() {
                if (cfg & mask).count_ones() % 2 == 1 {
                    s |= 1 << k;
                }
            }
            table[s].push(((cfg & 0xff) as u8, (cfg >> 8) as u8));
        }
        table
    })
}

/// Cell factor with the interior edges summed out: weight of each boundary
/// configuration compatible with `local_syndrome`.
pub fn cell_factor(local_syndrome: u8, interior_priors: &[[f64; 2]; 4]) -> Vec<(u8, f64)> {
    let mut weights = [0.0f64; 256];
    for &(boundary, interior) in &valid_configs()[local_syndrome as usize] {
        let mut w = 1.0;
        for (k, prior) in interior_priors.iter().enumerate() {
            w *= prior[((interior >> k) & 1) as usize];
        }
        weights[boundary as usize] += w;
    }
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(b, &w)| (b as u8, w))
        .collect()
}

/// Outgoing messages of one cell given its factor, the pair priors of its four
/// coarse edges and the four incoming messages (indexed by side).
pub fn cell_update(
    factor: &[(u8, f64)],
    side_priors: &[[f64; 4]; 4],
    incoming: &[CellMessage; 4],
) -> Result<[CellMessage; 4]> {
    let mut out = [[0.0f64; 4]; 4];
    let [mt, ml, mb, mr] = incoming.map(|m| m.0);
    for &(b, w) in factor {
        let at = (b & 3) as usize;
        let al = ((b >> 2) & 3) as usize;
        let ab = ((b >> 4) & 3) as usize;
        let ar = ((b >> 6) & 3) as usize;
        let (it, il, ib, ir) = (mt[at], ml[al], mb[ab], mr[ar]);
        let tb = it * ib;
        let lr = il * ir;
        out[TOP][at] += w * il * ib * ir;
        out[LEFT][al] += w * it * ib * ir;
        out[BOTTOM][ab] += w * lr * it;
        out[RIGHT][ar] += w * tb * il;
    }
    let mut result = [CellMessage::UNIFORM; 4];
    for side in 0..4 {
        let mut m = out[side];
        for a in 0..4 {
            m[a] *= side_priors[side][a];
        }
        result[side] = CellMessage(m).normalized()?;
    }
    Ok(result)
}

/// Full message-passing state for one syndrome.
#[derive(Debug, Clone)]
pub struct BpState {
    map: CoarseEdgeMap,
    /// Pair prior per coarse edge.
    edge_priors: Vec<[f64; 4]>,
    factors: Vec<Vec<(u8, f64)>>,
    /// `messages[c][side]` is what cell `c` sends through `side`.
    messages: Vec<[CellMessage; 4]>,
}

impl BpState {
    /// Initial state with uniform messages; `log_odds` holds one prior per
    /// fine edge.
    pub fn new(syndrome: &Syndrome, log_odds: &[f64]) -> Result<Self> {
        let fine = syndrome.lattice();
        if log_odds.len() != fine.num_edges() {
            return Err(Error::LengthMismatch { expected: fine.num_edges(), got: log_odds.len() });
        }
        let map = fine.coarse_edge_map()?;
        let coarse = map.coarse();
        let priors: Vec<[f64; 2]> = log_odds.iter().map(|&r| prior_from_log_odds(r)).collect();
        let edge_priors =
            map.pairs().iter().map(|&(a, b)| pair_prior(priors[a], priors[b])).collect();
        let n_cells = coarse.num_plaquettes();
        let mut factors = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            let (cx, cy) = coarse.plaquette_coord(c);
            let (x, y) = (2 * cx as isize, 2 * cy as isize);
            let interior = [
                fine.h(x, y + 1),
                fine.h(x + 1, y + 1),
                fine.v(x + 1, y),
                fine.v(x + 1, y + 1),
            ];
            let interior_priors = interior.map(|e| priors[e]);
            let (ux, uy) = (2 * cx, 2 * cy);
            let local = syndrome.get(ux, uy) as u8
                | (syndrome.get(ux + 1, uy) as u8) << 1
                | (syndrome.get(ux, uy + 1) as u8) << 2
                | (syndrome.get(ux + 1, uy + 1) as u8) << 3;
            factors.push(cell_factor(local, &interior_priors));
        }
        Ok(Self {
            map,
            edge_priors,
            factors,
            messages: vec![[CellMessage::UNIFORM; 4]; n_cells],
        })
    }

    pub fn coarse(&self) -> Lattice {
        self.map.coarse()
    }

    pub fn messages(&self) -> &[[CellMessage; 4]] {
        &self.messages
    }

    /// Neighbouring cell through `side`.
    fn neighbor(&self, c: usize, side: usize) -> usize {
        let coarse = self.coarse();
        let (x, y) = coarse.plaquette_coord(c);
        let l = coarse.size();
        let (nx, ny) = match side {
            TOP => (x, (y + l - 1) % l),
            LEFT => ((x + l - 1) % l, y),
            BOTTOM => (x, (y + 1) % l),
            _ => ((x + 1) % l, y),
        };
        coarse.plaquette_index(nx, ny)
    }

    /// Coarse edge on `side` of cell `c`.
    fn side_edge(&self, c: usize, side: usize) -> usize {
        let coarse = self.coarse();
        let (x, y) = coarse.plaquette_coord(c);
        let (x, y) = (x as isize, y as isize);
        match side {
            TOP => coarse.h(x, y),
            LEFT => coarse.v(x, y),
            BOTTOM => coarse.h(x, y + 1),
            _ => coarse.v(x + 1, y),
        }
    }

    /// One synchronous round. Returns the largest absolute change of any
    /// message entry.
    pub fn step(&mut self) -> Result<f64> {
        let mut next = Vec::with_capacity(self.messages.len());
        for c in 0..self.messages.len() {
            let mut incoming = [CellMessage::UNIFORM; 4];
            let mut side_priors = [[0.0; 4]; 4];
            for side in 0..4 {
                incoming[side] = self.messages[self.neighbor(c, side)][opposite(side)];
                side_priors[side] = self.edge_priors[self.side_edge(c, side)];
            }
            next.push(cell_update(&self.factors[c], &side_priors, &incoming)?);
        }
        let mut delta = 0.0f64;
        for (old, new) in self.messages.iter().zip(&next) {
            for side in 0..4 {
                for a in 0..4 {
                    delta = delta.max((old[side].0[a] - new[side].0[a]).abs());
                }
            }
        }
        self.messages = next;
        Ok(delta)
    }

    /// Edge marginals from the current messages.
    pub fn marginals(&self) -> CoarseMarginals {
        let coarse = self.coarse();
        let mut joint = Vec::with_capacity(coarse.num_edges());
        for ce in 0..coarse.num_edges() {
            let c = ce / 2;
            let side = if ce % 2 == 0 { TOP } else { LEFT };
            let other = self.neighbor(c, side);
            let a = self.messages[c][side].0;
            let b = self.messages[other][opposite(side)].0;
            let prior = self.edge_priors[ce];
            let mut p = [0.0; 4];
            for s in 0..4 {
                p[s] = if prior[s] > 0.0 { a[s] * b[s] / prior[s] } else { 0.0 };
            }
            let total: f64 = p.iter().sum();
            for v in &mut p {
                *v /= total;
            }
            joint.push(p);
        }
        CoarseMarginals::from_joint(coarse, joint)
    }
}

/// `bp_round` as a pure function of the state.
pub fn bp_round(state: &BpState) -> Result<BpState> {
    let mut next = state.clone();
    next.step()?;
    Ok(next)
}

/// Per-coarse-edge joint distribution and its parity log-odds.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMarginals {
    pub lattice: Lattice,
    pub joint: Vec<[f64; 4]>,
    /// `log(P(x_i + x_j = 1) / P(x_i + x_j = 0))`, clamped.
    pub log_odds: Vec<f64>,
}

impl CoarseMarginals {
    pub fn from_joint(lattice: Lattice, joint: Vec<[f64; 4]>) -> Self {
        let log_odds = joint
            .iter()
            .map(|p| {
                let odd = p[1] + p[2];
                let even = p[0] + p[3];
                (odd.ln() - even.ln()).clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP)
            })
            .collect();
        Self { lattice, joint, log_odds }
    }

    /// `P(x(e) = 1)` of coarse edge `e`.
    pub fn p_error(&self, e: usize) -> f64 {
        self.joint[e][1] + self.joint[e][2]
    }
}

/// Coarse edges flipped by [`remove_complexity`] and the resulting logical
/// offset.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRecord {
    pub flips: ErrorConfig,
    pub logical: LogicalParity,
}

impl FlipRecord {
    /// Syndrome of the coarse problem after the flips are applied.
    pub fn apply_to_syndrome(&self, coarse: &Syndrome) -> Syndrome {
        coarse ^ &syndrome_of(&self.flips)
    }

    pub fn is_empty(&self) -> bool {
        self.flips.weight() == 0
    }
}

/// Applies X to every coarse edge more likely flipped than not, swapping its
/// probabilities. The flip is applied to the first component edge, so the
/// joint distribution is relabelled `P(x_i, x_j) -> P(1 - x_i, x_j)`.
pub fn remove_complexity(m: &CoarseMarginals) -> (CoarseMarginals, FlipRecord) {
    let mut out = m.clone();
    let mut flips = ErrorConfig::zeros(m.lattice);
    for e in 0..m.log_odds.len() {
        if m.log_odds[e] > 0.0 {
            out.log_odds[e] = -m.log_odds[e];
            let p = m.joint[e];
            out.joint[e] = [p[1], p[0], p[3], p[2]];
            flips.flip(e);
        }
    }
    let logical = logical_parity(&flips);
    (out, FlipRecord { flips, logical })
}

pub fn bp_run(syndrome: &Syndrome, rates: &ErrorRates, rounds: usize) -> Result<CoarseMarginals> {
    bp_run_log_odds(syndrome, &rates.log_odds_all(), rounds)
}

pub fn bp_run_log_odds(
    syndrome: &Syndrome,
    log_odds: &[f64],
    rounds: usize,
) -> Result<CoarseMarginals> {
    if rounds == 0 {
        return Err(Error::NoRounds);
    }
    let mut state = BpState::new(syndrome, log_odds)?;
    for _ in 0..rounds {
        state.step()?;
    }
    Ok(state.marginals())
}

/// Class probabilities `P(z1, z2)` of a 2×2 problem by enumerating all 256
/// configurations; index `z1 | z2 << 1`.
pub fn terminal_class_probabilities(syndrome: &Syndrome, log_odds: &[f64]) -> Result<[f64; 4]> {
    let lattice = syndrome.lattice();
    if lattice.size() != 2 {
        return Err(Error::InvalidLatticeSize(lattice.size()));
    }
    let mut checks = [0u8; 4];
    for (p, check) in checks.iter_mut().enumerate() {
        let (x, y) = lattice.plaquette_coord(p);
        for e in lattice.plaquette_edges(x, y) {
            *check |= 1 << e;
        }
    }
    let l1: u8 = lattice.loop_l1().fold(0, |m, e| m | 1 << e);
    let l2: u8 = lattice.loop_l2().fold(0, |m, e| m | 1 << e);
    let target: Vec<bool> = syndrome.bits().to_vec();
    let mut logw = Vec::with_capacity(32);
    for cfg in 0u16..256 {
        let cfg = cfg as u8;
        if checks.iter().zip(&target).all(|(&c, &t)| ((cfg & c).count_ones() % 2 == 1) == t) {
            let w: f64 = (0..8).filter(|k| cfg >> k & 1 == 1).map(|k| log_odds[k]).sum();
            let class = ((cfg & l1).count_ones() % 2) as usize
                | (((cfg & l2).count_ones() % 2) as usize) << 1;
            logw.push((class, w));
        }
    }
    let max = logw.iter().map(|&(_, w)| w).fold(f64::NEG_INFINITY, f64::max);
    let mut probs = [0.0; 4];
    for (class, w) in logw {
        probs[class] += (w - max).exp();
    }
    let total: f64 = probs.iter().sum();
    Ok(probs.map(|p| p / total))
}

/// Renormalization-group decoding: belief propagation, complexity removal
/// and coarse-graining until a 2×2 lattice remains, then exact enumeration.
/// Returns `(P(z1 = 1), P(z2 = 1))`.
pub fn rg_decode(syndrome: &Syndrome, rates: &ErrorRates) -> Result<(f64, f64)> {
    rg_decode_with_rounds(syndrome, &rates.log_odds_all(), DEFAULT_ROUNDS)
}

pub fn rg_decode_with_rounds(
    syndrome: &Syndrome,
    log_odds: &[f64],
    rounds: usize,
) -> Result<(f64, f64)> {
    if syndrome.lattice().size() < 4 {
        return Err(Error::CannotCoarsen(syndrome.lattice().size()));
    }
    let mut s = syndrome.clone();
    let mut r = log_odds.to_vec();
    let mut offset = LogicalParity::default();
    while s.lattice().size() > 2 {
        let marginals = bp_run_log_odds(&s, &r, rounds)?;
        let (flipped, record) = remove_complexity(&marginals);
        s = record.apply_to_syndrome(&coarse_syndrome(&s)?);
        offset = offset ^ record.logical;
        r = flipped.log_odds;
    }
    let probs = terminal_class_probabilities(&s, &r)?;
    let mut p1 = probs[1] + probs[3];
    let mut p2 = probs[2] + probs[3];
    if offset.z1 {
        p1 = 1.0 - p1;
    }
    if offset.z2 {
        p2 = 1.0 - p2;
    }
    Ok((p1, p2))
}
