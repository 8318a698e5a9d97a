//! Exact maximum-likelihood decoding by enumerating every error consistent
//! with a syndrome. Feasible for `L <= 4`.

use crate::toric::{logical_parity, ErrorConfig, ErrorRates, Lattice, Syndrome};
use crate::{Error, Result};

/// Largest lattice the enumeration accepts.
pub const MAX_EXACT_SIZE: usize = 4;

fn mask_of(edges: impl IntoIterator<Item = usize>) -> u32 {
    edges.into_iter().fold(0, |m, e| m ^ (1 << e))
}

/// Some error with the given syndrome: canonical paths joining consecutive
/// defect pairs.
pub fn pure_error(syndrome: &Syndrome) -> Result<ErrorConfig> {
    let lattice = syndrome.lattice();
    let defects = syndrome.defects();
    if defects.len() % 2 == 1 {
        return Err(Error::OddDefects(defects.len()));
    }
    let mut e = ErrorConfig::zeros(lattice);
    for pair in defects.chunks(2) {
        for edge in lattice.canonical_path(pair[0], pair[1]) {
            e.flip(edge);
        }
    }
    Ok(e)
}

/// Posterior `P(z1, z2 | syndrome)` of the error's logical parity, indexed
/// `z1 | z2 << 1`.
pub fn exact_class_probabilities(syndrome: &Syndrome, rates: &ErrorRates) -> Result<[f64; 4]> {
    let lattice = syndrome.lattice();
    let l = lattice.size();
    if l > MAX_EXACT_SIZE {
        return Err(Error::LatticeTooLarge(l));
    }
    if rates.lattice() != lattice {
        return Err(Error::LengthMismatch { expected: lattice.num_edges(), got: rates.raw().len() });
    }
    let e0 = pure_error(syndrome)?;
    let base = logical_parity(&e0);
    let e0_mask = mask_of((0..lattice.num_edges()).filter(|&e| e0.get(e)));

    // log P(x) = const + sum of log-odds over set bits, tabulated per byte
    let r = rates.log_odds_all();
    let nbytes = lattice.num_edges().div_ceil(8);
    let mut tables = vec![[0.0f64; 256]; nbytes];
    for (b, table) in tables.iter_mut().enumerate() {
        for (v, slot) in table.iter_mut().enumerate() {
            *slot = (0..8)
                .filter(|k| v >> k & 1 == 1)
                .map(|k| r.get(8 * b + k).copied().unwrap_or(0.0))
                .sum();
        }
    }
    let log_weight = |m: u32| -> f64 {
        tables.iter().enumerate().map(|(b, t)| t[(m >> (8 * b) & 0xff) as usize]).sum()
    };

    let stars: Vec<u32> = (0..l * l - 1)
        .map(|s| mask_of(lattice.star_edges(s % l, s / l)))
        .collect();
    let x1 = mask_of((0..lattice.num_edges()).filter(|&e| lattice.logical_x1().get(e)));
    let x2 = mask_of((0..lattice.num_edges()).filter(|&e| lattice.logical_x2().get(e)));
    let logicals = [0, x1, x2, x1 ^ x2];

    let mut logw: [Vec<f64>; 4] = Default::default();
    let mut current = e0_mask;
    for i in 0u64..1 << stars.len() {
        if i > 0 {
            current ^= stars[i.trailing_zeros() as usize];
        }
        for (c, &lm) in logicals.iter().enumerate() {
            logw[c].push(log_weight(current ^ lm));
        }
    }
    let max = logw.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let sums: Vec<f64> = logw.iter().map(|v| v.iter().map(|w| (w - max).exp()).sum()).collect();
    let total: f64 = sums.iter().sum();
    let mut probs = [0.0; 4];
    for (c, s) in sums.iter().enumerate() {
        let parity = c ^ (base.z1 as usize | (base.z2 as usize) << 1);
        probs[parity] = s / total;
    }
    Ok(probs)
}

/// Exact `(P(z1 = 1), P(z2 = 1))` given the syndrome.
pub fn exact_ml_decode(syndrome: &Syndrome, rates: &ErrorRates) -> Result<(f64, f64)> {
    let p = exact_class_probabilities(syndrome, rates)?;
    Ok((p[1] + p[3], p[2] + p[3]))
}

/// Number of independent stabilizer generators on an `L × L` torus.
pub fn independent_stars(lattice: &Lattice) -> usize {
    lattice.num_plaquettes() - 1
}
