use std::collections::VecDeque;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toric_core::matching::{mwpm_correction, weighted_path};
use toric_core::{
    min_weight_matching, mwpm_decode, sample_errors, syndrome_of, torus_distance, EdgeWeights,
    ErrorRates, Lattice, LogicalParity, Syndrome,
};

/// Minimum perfect-matching weight by dynamic programming over subsets.
fn dp_min_matching(n: usize, w: &[Vec<i64>]) -> i64 {
    let full = (1usize << n) - 1;
    let mut dp = vec![i64::MAX; 1 << n];
    dp[0] = 0;
    for mask in 0..=full {
        if dp[mask] == i64::MAX {
            continue;
        }
        let Some(i) = (0..n).find(|&i| mask >> i & 1 == 0) else { continue };
        for j in i + 1..n {
            if mask >> j & 1 == 0 {
                let next = mask | 1 << i | 1 << j;
                dp[next] = dp[next].min(dp[mask] + w[i][j]);
            }
        }
    }
    dp[full]
}

#[test]
fn blossom_matches_subset_dp() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..400 {
        let n = 2 * rng.gen_range(1..=7);
        let mut w = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                // mix of narrow and wide ranges to provoke ties and blossoms
                let v = if trial % 2 == 0 { rng.gen_range(0..6) } else { rng.gen_range(0..1000) };
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        let m = min_weight_matching(n, |i, j| w[i][j]).unwrap();
        let mut seen = vec![false; n];
        for &(i, j) in &m.pairs {
            assert!(!seen[i] && !seen[j]);
            seen[i] = true;
            seen[j] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(m.total_weight, dp_min_matching(n, &w), "trial {trial}");
    }
}

#[test]
fn blossom_matches_dp_on_torus_defects() {
    let lat = Lattice::new(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = 2 * rng.gen_range(1..=7);
        let pts: Vec<(usize, usize)> = (0..n).map(|_| (rng.gen_range(0..16), rng.gen_range(0..16))).collect();
        let w: Vec<Vec<i64>> = pts
            .iter()
            .map(|&a| pts.iter().map(|&b| torus_distance(a, b, lat.size()) as i64).collect())
            .collect();
        let m = min_weight_matching(n, |i, j| w[i][j]).unwrap();
        assert_eq!(m.total_weight, dp_min_matching(n, &w));
    }
}

fn bfs_distance(l: usize, a: (usize, usize), b: (usize, usize)) -> usize {
    let mut dist = vec![usize::MAX; l * l];
    let mut queue = VecDeque::new();
    dist[a.1 * l + a.0] = 0;
    queue.push_back(a);
    while let Some((x, y)) = queue.pop_front() {
        let d = dist[y * l + x];
        for (nx, ny) in [((x + 1) % l, y), ((x + l - 1) % l, y), (x, (y + 1) % l), (x, (y + l - 1) % l)] {
            if dist[ny * l + nx] == usize::MAX {
                dist[ny * l + nx] = d + 1;
                queue.push_back((nx, ny));
            }
        }
    }
    dist[b.1 * l + b.0]
}

proptest! {
    #[test]
    fn torus_distance_equals_bfs(ax in 0usize..8, ay in 0usize..8, bx in 0usize..8, by in 0usize..8) {
        prop_assert_eq!(torus_distance((ax, ay), (bx, by), 8), bfs_distance(8, (ax, ay), (bx, by)));
    }

    #[test]
    fn torus_distance_is_a_metric(
        a in (0usize..16, 0usize..16),
        b in (0usize..16, 0usize..16),
        c in (0usize..16, 0usize..16),
    ) {
        prop_assert_eq!(torus_distance(a, b, 16), torus_distance(b, a, 16));
        prop_assert!(torus_distance(a, c, 16) <= torus_distance(a, b, 16) + torus_distance(b, c, 16));
    }

    #[test]
    fn canonical_path_has_torus_length(a in (0usize..8, 0usize..8), b in (0usize..8, 0usize..8)) {
        let lat = Lattice::new(8).unwrap();
        let path = lat.canonical_path(a, b);
        prop_assert_eq!(path.len(), torus_distance(a, b, 8));
        let e = toric_core::ErrorConfig::from_edges(lat, path);
        let s = syndrome_of(&e);
        let expect = if a == b { vec![] } else { let mut v = vec![a, b]; v.sort_by_key(|&(x, y)| (y, x)); v };
        prop_assert_eq!(s.defects(), expect);
    }
}

/// Minimum path weight between two plaquettes by exhaustive search over
/// simple dual-lattice paths (with branch-and-bound).
fn exhaustive_min_path(lat: &Lattice, a: usize, b: usize, w: &[f64]) -> f64 {
    fn moves(lat: &Lattice, p: usize) -> Vec<(usize, usize)> {
        let (x, y) = lat.plaquette_coord(p);
        let l = lat.size();
        let (xi, yi) = (x as isize, y as isize);
        vec![
            (lat.v(xi + 1, yi), lat.plaquette_index((x + 1) % l, y)),
            (lat.v(xi, yi), lat.plaquette_index((x + l - 1) % l, y)),
            (lat.h(xi, yi + 1), lat.plaquette_index(x, (y + 1) % l)),
            (lat.h(xi, yi), lat.plaquette_index(x, (y + l - 1) % l)),
        ]
    }
    fn go(lat: &Lattice, p: usize, b: usize, w: &[f64], acc: f64, seen: &mut [bool], best: &mut f64) {
        if acc >= *best {
            return;
        }
        if p == b {
            *best = acc;
            return;
        }
        for (e, q) in moves(lat, p) {
            if !seen[q] {
                seen[q] = true;
                go(lat, q, b, w, acc + w[e], seen, best);
                seen[q] = false;
            }
        }
    }
    let mut seen = vec![false; lat.num_plaquettes()];
    seen[a] = true;
    let mut best = f64::INFINITY;
    go(lat, a, b, w, 0.0, &mut seen, &mut best);
    best
}

#[test]
fn weighted_path_detours_around_quiet_wall() {
    let lat = Lattice::new(4).unwrap();
    let mut w = vec![1.0; lat.num_edges()];
    // the direct step from (1,1) to (2,1) crosses v(2,1); make it expensive
    w[lat.v(2, 1)] = 100.0;
    let (d, path) = weighted_path(&lat, (1, 1), (2, 1), &w);
    assert_eq!(d, 3.0);
    assert_eq!(path.len(), 3);
    assert!(!path.contains(&lat.v(2, 1)));
    let ia = lat.plaquette_index(1, 1);
    let ib = lat.plaquette_index(2, 1);
    assert_eq!(exhaustive_min_path(&lat, ia, ib, &w), 3.0);
}

#[test]
fn weighted_path_matches_exhaustive_search_for_log_odds_weights() {
    let lat = Lattice::new(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let rates: Vec<f64> = (0..lat.num_edges()).map(|_| rng.gen_range(0.01..0.3)).collect();
        let rates = ErrorRates::new(lat, rates).unwrap();
        let w: Vec<f64> = rates.log_odds_all().iter().map(|r| -r).collect();
        let a = rng.gen_range(0..16);
        let b = rng.gen_range(0..16);
        let (d, path) = weighted_path(&lat, lat.plaquette_coord(a), lat.plaquette_coord(b), &w);
        let exact = exhaustive_min_path(&lat, a, b, &w);
        assert!((d - exact).abs() < 1e-5, "{d} vs {exact}");
        let along: f64 = path.iter().map(|&e| w[e]).sum();
        assert!((along - exact).abs() < 1e-5);
    }
}

#[test]
fn weighted_path_is_deterministic_under_ties() {
    let lat = Lattice::new(8).unwrap();
    let w = vec![1.0; lat.num_edges()];
    let (_, p1) = weighted_path(&lat, (0, 0), (3, 3), &w);
    let (_, p2) = weighted_path(&lat, (0, 0), (3, 3), &w);
    assert_eq!(p1, p2);
}

#[test]
fn correction_is_always_syndrome_consistent() {
    let lat = Lattice::new(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mask: Vec<f64> = (0..lat.num_edges()).map(|_| if rng.gen::<bool>() { 0.16 } else { 0.0 }).collect();
    let rates = ErrorRates::new(lat, mask).unwrap();
    let weights = [EdgeWeights::Uniform, EdgeWeights::two_level(&rates, 1.0, 100.0)];
    for t in 0..100 {
        let s = syndrome_of(&sample_errors(&rates, &mut ChaCha8Rng::seed_from_u64(100 + t)));
        for w in &weights {
            assert_eq!(syndrome_of(&mwpm_correction(&s, w).unwrap()), s);
        }
    }
}

#[test]
fn adjacent_pair_is_corrected_without_logical_error() {
    let lat = Lattice::new(8).unwrap();
    let s = Syndrome::from_defects(lat, &[(3, 3), (4, 3)]);
    assert_eq!(mwpm_decode(&s, &EdgeWeights::Uniform).unwrap(), LogicalParity::default());
}
