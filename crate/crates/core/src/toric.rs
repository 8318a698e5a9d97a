//! The L×L periodic toric code under bit-flip noise.
//!
//! Qubits live on edges. Plaquette `(x, y)` owns two of its four edges: its
//! top edge (horizontal, orientation 0) and its left edge (vertical,
//! orientation 1), so each edge is addressed by the plaquette that owns it.
//! Edge index is `(y * L + x) * 2 + orientation`; `y` grows downward.
//!
//! Plaquette `(x, y)` has edges `h(x, y)`, `h(x, y+1)`, `v(x, y)`, `v(x+1, y)`.
//! Site `(x, y)` is the top-left corner of plaquette `(x, y)`.
//!
//! The two logical parities are read off fixed loops: `l1` is the row of
//! horizontal edges `h(x, 0)` and `l2` is the column of vertical edges
//! `v(0, y)`.

use std::ops::BitXor;

use rand::Rng;

use crate::{Error, Result};

/// Smallest rate used when a probability must be turned into log-odds.
pub const RATE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Horizontal = 0,
    Vertical = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeCoord {
    pub x: usize,
    pub y: usize,
    pub orientation: Orientation,
}

/// Geometry of an L×L periodic lattice, L a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    size: usize,
}

impl Lattice {
    /// Lattice of side `size`. Sizes below 4 are allowed down to 2 so that the
    /// terminal 2×2 stage of a renormalization can be described, but
    /// coarse-graining requires at least 4.
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 || !size.is_power_of_two() {
            return Err(Error::InvalidLatticeSize(size));
        }
        Ok(Self { size })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn distance(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        2 * self.size * self.size
    }

    #[inline]
    pub fn num_plaquettes(&self) -> usize {
        self.size * self.size
    }

    #[inline]
    fn wrap(&self, v: isize) -> usize {
        v.rem_euclid(self.size as isize) as usize
    }

    #[inline]
    pub fn plaquette_index(&self, x: usize, y: usize) -> usize {
        y * self.size + x
    }

    #[inline]
    pub fn plaquette_coord(&self, p: usize) -> (usize, usize) {
        (p % self.size, p / self.size)
    }

    /// Horizontal edge on top of plaquette `(x, y)`, coordinates taken mod L.
    #[inline]
    pub fn h(&self, x: isize, y: isize) -> usize {
        (self.wrap(y) * self.size + self.wrap(x)) * 2
    }

    /// Vertical edge left of plaquette `(x, y)`, coordinates taken mod L.
    #[inline]
    pub fn v(&self, x: isize, y: isize) -> usize {
        (self.wrap(y) * self.size + self.wrap(x)) * 2 + 1
    }

    pub fn edge_index(&self, c: EdgeCoord) -> usize {
        (c.y * self.size + c.x) * 2 + c.orientation as usize
    }

    pub fn edge_coord(&self, e: usize) -> EdgeCoord {
        let owner = e / 2;
        EdgeCoord {
            x: owner % self.size,
            y: owner / self.size,
            orientation: if e % 2 == 0 {
                Orientation::Horizontal
            } else {
                Orientation::Vertical
            },
        }
    }

    /// The four edges of plaquette `(x, y)`: top, bottom, left, right.
    pub fn plaquette_edges(&self, x: usize, y: usize) -> [usize; 4] {
        let (x, y) = (x as isize, y as isize);
        [self.h(x, y), self.h(x, y + 1), self.v(x, y), self.v(x + 1, y)]
    }

    /// The two plaquettes bordering edge `e`.
    pub fn edge_plaquettes(&self, e: usize) -> [usize; 2] {
        let c = self.edge_coord(e);
        let (x, y) = (c.x as isize, c.y as isize);
        match c.orientation {
            Orientation::Horizontal => [
                self.plaquette_index(c.x, c.y),
                self.plaquette_index(c.x, self.wrap(y - 1)),
            ],
            Orientation::Vertical => [
                self.plaquette_index(c.x, c.y),
                self.plaquette_index(self.wrap(x - 1), c.y),
            ],
        }
    }

    /// The four edges meeting at site `(x, y)`; an X-type star stabilizer.
    pub fn star_edges(&self, x: usize, y: usize) -> [usize; 4] {
        let (x, y) = (x as isize, y as isize);
        [self.h(x - 1, y), self.h(x, y), self.v(x, y - 1), self.v(x, y)]
    }

    /// Edges of `l1` (row 0 of horizontal edges).
    pub fn loop_l1(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.size).map(move |x| self.h(x as isize, 0))
    }

    /// Edges of `l2` (column 0 of vertical edges).
    pub fn loop_l2(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.size).map(move |y| self.v(0, y as isize))
    }

    /// Error pattern with zero syndrome crossing `l1` once and `l2` never:
    /// the column of horizontal edges `h(0, y)`.
    pub fn logical_x1(&self) -> ErrorConfig {
        let mut c = ErrorConfig::zeros(*self);
        for y in 0..self.size {
            c.bits[self.h(0, y as isize)] = true;
        }
        c
    }

    /// Error pattern with zero syndrome crossing `l2` once and `l1` never:
    /// the row of vertical edges `v(x, 0)`.
    pub fn logical_x2(&self) -> ErrorConfig {
        let mut c = ErrorConfig::zeros(*self);
        for x in 0..self.size {
            c.bits[self.v(x as isize, 0)] = true;
        }
        c
    }

    /// The lattice of 2×2 unit cells.
    pub fn coarse(&self) -> Result<Lattice> {
        if self.size < 4 {
            return Err(Error::CannotCoarsen(self.size));
        }
        Lattice::new(self.size / 2)
    }

    /// Which pairs of edges form each coarse edge; see [`CoarseEdgeMap`].
    pub fn coarse_edge_map(&self) -> Result<CoarseEdgeMap> {
        let coarse = self.coarse()?;
        let mut pairs = Vec::with_capacity(coarse.num_edges());
        for cy in 0..coarse.size as isize {
            for cx in 0..coarse.size as isize {
                pairs.push((self.h(2 * cx, 2 * cy), self.h(2 * cx + 1, 2 * cy)));
                pairs.push((self.v(2 * cx, 2 * cy), self.v(2 * cx, 2 * cy + 1)));
            }
        }
        Ok(CoarseEdgeMap { fine: *self, coarse, pairs })
    }

    /// Torus displacement from `a` to `b` along one axis: the shorter wrap
    /// direction, ties resolved toward increasing coordinate.
    pub fn signed_delta(&self, from: usize, to: usize) -> isize {
        let l = self.size as isize;
        let d = (to as isize - from as isize).rem_euclid(l);
        if 2 * d <= l {
            d
        } else {
            d - l
        }
    }

    /// Canonical dual-lattice path between plaquettes `a` and `b`: the
    /// horizontal leg first, then the vertical leg, each along the shorter wrap
    /// direction. Returns the edges crossed.
    pub fn canonical_path(&self, a: (usize, usize), b: (usize, usize)) -> Vec<usize> {
        let dx = self.signed_delta(a.0, b.0);
        let dy = self.signed_delta(a.1, b.1);
        let mut edges = Vec::with_capacity((dx.unsigned_abs() + dy.unsigned_abs()) as usize);
        let (mut x, mut y) = (a.0 as isize, a.1 as isize);
        for _ in 0..dx.abs() {
            if dx > 0 {
                edges.push(self.v(x + 1, y));
                x += 1;
            } else {
                edges.push(self.v(x, y));
                x -= 1;
            }
        }
        for _ in 0..dy.abs() {
            if dy > 0 {
                edges.push(self.h(x, y + 1));
                y += 1;
            } else {
                edges.push(self.h(x, y));
                y -= 1;
            }
        }
        edges
    }
}

/// One bit per edge: `true` where an X error happened.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErrorConfig {
    lattice: Lattice,
    bits: Vec<bool>,
}

impl ErrorConfig {
    pub fn zeros(lattice: Lattice) -> Self {
        Self { lattice, bits: vec![false; lattice.num_edges()] }
    }

    pub fn from_bits(lattice: Lattice, bits: Vec<bool>) -> Result<Self> {
        check_len(lattice.num_edges(), bits.len())?;
        Ok(Self { lattice, bits })
    }

    pub fn from_edges(lattice: Lattice, edges: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::zeros(lattice);
        for e in edges {
            c.bits[e] ^= true;
        }
        c
    }

    #[inline]
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, e: usize) -> bool {
        self.bits[e]
    }

    #[inline]
    pub fn flip(&mut self, e: usize) {
        self.bits[e] ^= true;
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn xor_assign(&mut self, other: &ErrorConfig) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a ^= *b;
        }
    }
}

impl BitXor for &ErrorConfig {
    type Output = ErrorConfig;

    fn bitxor(self, rhs: &ErrorConfig) -> ErrorConfig {
        let mut out = self.clone();
        out.xor_assign(rhs);
        out
    }
}

/// One bit per plaquette, `true` where `<B_p> = -1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syndrome {
    lattice: Lattice,
    bits: Vec<bool>,
}

impl Syndrome {
    pub fn zeros(lattice: Lattice) -> Self {
        Self { lattice, bits: vec![false; lattice.num_plaquettes()] }
    }

    pub fn from_bits(lattice: Lattice, bits: Vec<bool>) -> Result<Self> {
        check_len(lattice.num_plaquettes(), bits.len())?;
        Ok(Self { lattice, bits })
    }

    /// Syndrome with defects at the given plaquette coordinates toggled.
    pub fn from_defects(lattice: Lattice, defects: &[(usize, usize)]) -> Self {
        let mut s = Self::zeros(lattice);
        for &(x, y) in defects {
            s.bits[lattice.plaquette_index(x, y)] ^= true;
        }
        s
    }

    #[inline]
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[self.lattice.plaquette_index(x, y)]
    }

    pub fn is_zero(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn parity(&self) -> bool {
        self.bits.iter().fold(false, |acc, &b| acc ^ b)
    }

    /// Coordinates of all defects, in plaquette-index order.
    pub fn defects(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(p, _)| self.lattice.plaquette_coord(p))
            .collect()
    }

    pub fn xor_assign(&mut self, other: &Syndrome) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a ^= *b;
        }
    }
}

impl BitXor for &Syndrome {
    type Output = Syndrome;

    fn bitxor(self, rhs: &Syndrome) -> Syndrome {
        let mut out = self.clone();
        out.xor_assign(rhs);
        out
    }
}

/// Parities of the error along `l1` and `l2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LogicalParity {
    pub z1: bool,
    pub z2: bool,
}

impl LogicalParity {
    pub const fn new(z1: bool, z2: bool) -> Self {
        Self { z1, z2 }
    }
}

impl BitXor for LogicalParity {
    type Output = LogicalParity;

    fn bitxor(self, rhs: Self) -> Self {
        Self { z1: self.z1 ^ rhs.z1, z2: self.z2 ^ rhs.z2 }
    }
}

/// Physical error rate per edge. Values are stored as given (0 and 1 are
/// legal for sampling) and clamped to `[RATE_FLOOR, 1 - RATE_FLOOR]` whenever
/// a decoder reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRates {
    lattice: Lattice,
    rates: Vec<f64>,
}

impl ErrorRates {
    pub fn uniform(lattice: Lattice, p: f64) -> Result<Self> {
        Self::new(lattice, vec![p; lattice.num_edges()])
    }

    pub fn new(lattice: Lattice, rates: Vec<f64>) -> Result<Self> {
        check_len(lattice.num_edges(), rates.len())?;
        if let Some(&bad) = rates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidRate(bad));
        }
        Ok(Self { lattice, rates })
    }

    #[inline]
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    /// Raw rates as used for sampling.
    #[inline]
    pub fn raw(&self) -> &[f64] {
        &self.rates
    }

    #[inline]
    pub fn clamped(&self, e: usize) -> f64 {
        self.rates[e].clamp(RATE_FLOOR, 1.0 - RATE_FLOOR)
    }

    /// `log(p / (1 - p))` of the clamped rate.
    pub fn log_odds(&self, e: usize) -> f64 {
        let p = self.clamped(e);
        (p / (1.0 - p)).ln()
    }

    pub fn log_odds_all(&self) -> Vec<f64> {
        (0..self.rates.len()).map(|e| self.log_odds(e)).collect()
    }
}

/// Pairs of fine edges forming each coarse edge of the 2×2-cell lattice.
///
/// Cell `(X, Y)` covers plaquettes `2X..2X+2 × 2Y..2Y+2`. Its top coarse edge
/// is `{h(2X, 2Y), h(2X+1, 2Y)}` and its left coarse edge is
/// `{v(2X, 2Y), v(2X, 2Y+1)}`; these get the coarse indices of `H(X, Y)` and
/// `V(X, Y)`. The remaining four edges of a cell are interior.
#[derive(Debug, Clone)]
pub struct CoarseEdgeMap {
    fine: Lattice,
    coarse: Lattice,
    pairs: Vec<(usize, usize)>,
}

impl CoarseEdgeMap {
    pub fn fine(&self) -> Lattice {
        self.fine
    }

    pub fn coarse(&self) -> Lattice {
        self.coarse
    }

    /// Component edges `(e_i, e_j)` of coarse edge `ce`.
    #[inline]
    pub fn pair(&self, ce: usize) -> (usize, usize) {
        self.pairs[ce]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Draws each edge independently with its raw rate.
pub fn sample_errors<R: Rng + ?Sized>(rates: &ErrorRates, rng: &mut R) -> ErrorConfig {
    let bits = rates.rates.iter().map(|&p| rng.gen::<f64>() < p).collect();
    ErrorConfig { lattice: rates.lattice, bits }
}

pub fn syndrome_of(config: &ErrorConfig) -> Syndrome {
    let lattice = config.lattice;
    let l = lattice.size();
    let mut bits = vec![false; lattice.num_plaquettes()];
    for y in 0..l {
        for x in 0..l {
            bits[lattice.plaquette_index(x, y)] =
                lattice.plaquette_edges(x, y).iter().fold(false, |acc, &e| acc ^ config.bits[e]);
        }
    }
    Syndrome { lattice, bits }
}

pub fn logical_parity(config: &ErrorConfig) -> LogicalParity {
    let lattice = config.lattice;
    LogicalParity {
        z1: lattice.loop_l1().fold(false, |acc, e| acc ^ config.bits[e]),
        z2: lattice.loop_l2().fold(false, |acc, e| acc ^ config.bits[e]),
    }
}

/// XOR of the four plaquette bits of each 2×2 cell.
pub fn coarse_syndrome(s: &Syndrome) -> Result<Syndrome> {
    let fine = s.lattice;
    let coarse = fine.coarse()?;
    let mut bits = vec![false; coarse.num_plaquettes()];
    for cy in 0..coarse.size() {
        for cx in 0..coarse.size() {
            bits[coarse.plaquette_index(cx, cy)] = s.get(2 * cx, 2 * cy)
                ^ s.get(2 * cx + 1, 2 * cy)
                ^ s.get(2 * cx, 2 * cy + 1)
                ^ s.get(2 * cx + 1, 2 * cy + 1);
        }
    }
    Ok(Syndrome { lattice: coarse, bits })
}

/// Error value of each coarse edge: XOR of its two component edges.
pub fn coarse_error_parity(config: &ErrorConfig, map: &CoarseEdgeMap) -> Result<ErrorConfig> {
    if config.lattice != map.fine {
        return Err(Error::LengthMismatch {
            expected: map.fine.num_edges(),
            got: config.bits.len(),
        });
    }
    let bits = map.pairs.iter().map(|&(a, b)| config.bits[a] ^ config.bits[b]).collect();
    Ok(ErrorConfig { lattice: map.coarse, bits })
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::LengthMismatch { expected, got })
    } else {
        Ok(())
    }
}
