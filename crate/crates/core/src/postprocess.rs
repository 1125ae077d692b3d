//! Post-processing of noisy grids: non-negativity (Norm-Sub) and cross-grid
//! attribute consistency, alternated.

use crate::grids::GridSet;

/// Norm-Sub: zero out negatives, then shift all positive entries by the same
/// amount so the vector sums to 1; repeat until non-negative.
///
/// A vector with no positive mass after the first zeroing falls back to
/// uniform so that downstream pipelines stay total.
pub fn norm_sub(freqs: &mut [f64]) {
    if freqs.is_empty() {
        return;
    }
    // Each pass either finishes or zeroes at least one more entry.
    for _ in 0..=freqs.len() {
        for f in freqs.iter_mut() {
            if *f < 0.0 {
                *f = 0.0;
            }
        }
        let positives = freqs.iter().filter(|f| **f > 0.0).count();
        if positives == 0 {
            let u = 1.0 / freqs.len() as f64;
            freqs.iter_mut().for_each(|f| *f = u);
            return;
        }
        let surplus = freqs.iter().sum::<f64>() - 1.0;
        let shift = surplus / positives as f64;
        let mut clean = true;
        for f in freqs.iter_mut() {
            if *f > 0.0 {
                *f -= shift;
                if *f < 0.0 {
                    clean = false;
                }
            }
        }
        if clean {
            return;
        }
    }
}

/// Sum of frequencies of the cells of one grid whose subdomain for
/// `attribute` falls in coarse chunk `chunk` (1-based, chunk width
/// `c / chunks`), together with the number of contributing cells.
fn chunk_aggregate(set: &GridSet, grid: GridRef, attribute: usize, chunk: u32) -> (f64, usize) {
    match grid {
        GridRef::OneD(i) => {
            let g = &set.grids_1d[i];
            let per_chunk = (g.granularity / set.g2) as usize;
            let start = (chunk - 1) as usize * per_chunk;
            let sum = g.freqs[start..start + per_chunk].iter().sum();
            (sum, per_chunk)
        }
        GridRef::TwoD(i) => {
            let g = &set.grids_2d[i];
            let gran = g.granularity;
            let axis_first = g.attributes.0 == attribute;
            let mut sum = 0.0;
            for other in 1..=gran {
                let (sj, sk) = if axis_first {
                    (chunk, other)
                } else {
                    (other, chunk)
                };
                sum += g.freq(sj, sk);
            }
            (sum, gran as usize)
        }
    }
}

fn chunk_shift(set: &mut GridSet, grid: GridRef, attribute: usize, chunk: u32, delta: f64) {
    match grid {
        GridRef::OneD(i) => {
            let g = &mut set.grids_1d[i];
            let per_chunk = (g.granularity / set.g2) as usize;
            let start = (chunk - 1) as usize * per_chunk;
            for f in &mut g.freqs[start..start + per_chunk] {
                *f += delta;
            }
        }
        GridRef::TwoD(i) => {
            let g = &mut set.grids_2d[i];
            let gran = g.granularity;
            let axis_first = g.attributes.0 == attribute;
            for other in 1..=gran {
                let (sj, sk) = if axis_first {
                    (chunk, other)
                } else {
                    (other, chunk)
                };
                let idx = (g.flatten(sj, sk) - 1) as usize;
                g.freqs[idx] += delta;
            }
        }
    }
}

#[derive(Clone, Copy)]
enum GridRef {
    OneD(usize),
    TwoD(usize),
}

fn grids_touching(set: &GridSet, attribute: usize) -> Vec<GridRef> {
    let mut out = Vec::new();
    for (i, g) in set.grids_1d.iter().enumerate() {
        if g.attribute == attribute {
            out.push(GridRef::OneD(i));
        }
    }
    for (i, g) in set.grids_2d.iter().enumerate() {
        if g.attributes.0 == attribute || g.attributes.1 == attribute {
            out.push(GridRef::TwoD(i));
        }
    }
    out
}

/// Force every grid touching `attribute` to agree on the attribute's coarse
/// marginal. For each chunk the consensus is the inverse-cell-count weighted
/// average of the per-grid aggregates; each grid then spreads its correction
/// evenly over the contributing cells.
pub fn attribute_consistency(set: &mut GridSet, attribute: usize) {
    let grids = grids_touching(set, attribute);
    if grids.len() < 2 {
        return;
    }
    for chunk in 1..=set.g2 {
        let parts: Vec<(f64, usize)> = grids
            .iter()
            .map(|&g| chunk_aggregate(set, g, attribute, chunk))
            .collect();
        let weight_sum: f64 = parts.iter().map(|(_, s)| 1.0 / *s as f64).sum();
        let consensus: f64 =
            parts.iter().map(|(p, s)| p / *s as f64).sum::<f64>() / weight_sum;
        for (&g, &(p, s)) in grids.iter().zip(&parts) {
            let delta = (consensus - p) / s as f64;
            if delta != 0.0 {
                chunk_shift(set, g, attribute, chunk, delta);
            }
        }
    }
}

/// Alternate a consistency pass over all attributes (ascending index) with
/// Norm-Sub on every grid, `rounds` times. The final step is Norm-Sub, so the
/// output grids are non-negative distributions.
pub fn full_postprocess(set: &mut GridSet, rounds: usize) {
    for _ in 0..rounds.max(1) {
        for a in 0..set.d {
            attribute_consistency(set, a);
        }
        for g in &mut set.grids_1d {
            norm_sub(&mut g.freqs);
        }
        for g in &mut set.grids_2d {
            norm_sub(&mut g.freqs);
        }
    }
}

/// Largest cross-grid disagreement: `max` over attributes and chunks of the
/// spread of the per-grid aggregates.
pub fn consistency_residual(set: &GridSet) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..set.d {
        let grids = grids_touching(set, a);
        if grids.len() < 2 {
            continue;
        }
        for chunk in 1..=set.g2 {
            let vals: Vec<f64> = grids
                .iter()
                .map(|&g| chunk_aggregate(set, g, a, chunk).0)
                .collect();
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// Convenience for tests and pipelines with a single grid family.
pub fn is_distribution(freqs: &[f64], tol: f64) -> bool {
    freqs.iter().all(|&f| f >= 0.0) && (freqs.iter().sum::<f64>() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{Grid1D, Grid2D, GridMode};

    #[test]
    fn norm_sub_single_pass() {
        let mut f = vec![0.5, 0.6, -0.1];
        norm_sub(&mut f);
        assert!((f[0] - 0.45).abs() < 1e-12);
        assert!((f[1] - 0.55).abs() < 1e-12);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn norm_sub_needs_two_passes() {
        let mut f = vec![1.5, 0.01, -0.51];
        norm_sub(&mut f);
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert_eq!(&f[1..], &[0.0, 0.0]);
    }

    #[test]
    fn norm_sub_fixed_point_and_idempotence() {
        let mut f = vec![0.25, 0.5, 0.25];
        norm_sub(&mut f);
        assert_eq!(f, vec![0.25, 0.5, 0.25]);

        let mut g = vec![0.9, -0.3, 0.2, 0.35];
        norm_sub(&mut g);
        let snapshot = g.clone();
        norm_sub(&mut g);
        for (a, b) in g.iter().zip(&snapshot) {
            assert!((a - b).abs() < 1e-12, "not idempotent: {snapshot:?} -> {g:?}");
        }
        assert!(is_distribution(&g, 1e-9));
    }

    #[test]
    fn norm_sub_all_negative_falls_back_to_uniform() {
        let mut f = vec![-0.2, -0.5, -0.1, -0.3];
        norm_sub(&mut f);
        assert_eq!(f, vec![0.25; 4]);
    }

    /// d = 3, g1 = 8, g2 = 2, attribute 0: one 1-D grid (4 cells per chunk)
    /// and two 2-D grids (2 cells per chunk); weights are (0.2, 0.4, 0.4).
    fn three_grid_set() -> GridSet {
        let c = 8;
        GridSet {
            mode: GridMode::Hdg,
            d: 3,
            c,
            g1: 8,
            g2: 2,
            grids_1d: (0..3)
                .map(|attribute| Grid1D {
                    attribute,
                    granularity: 8,
                    c,
                    freqs: vec![1.0 / 8.0; 8],
                })
                .collect(),
            grids_2d: vec![
                Grid2D {
                    attributes: (0, 1),
                    granularity: 2,
                    c,
                    freqs: vec![0.25; 4],
                },
                Grid2D {
                    attributes: (0, 2),
                    granularity: 2,
                    c,
                    freqs: vec![0.25; 4],
                },
                Grid2D {
                    attributes: (1, 2),
                    granularity: 2,
                    c,
                    freqs: vec![0.25; 4],
                },
            ],
        }
    }

    #[test]
    fn consistency_weighted_average_hand_example() {
        let mut set = three_grid_set();
        // Attribute 0, chunk 1 aggregates: 0.30 (1-D), 0.24, 0.26 (2-D).
        // Consensus with weights (0.2, 0.4, 0.4) is 0.26, so the 1-D grid's
        // four contributing cells each shift by -0.01.
        set.grids_1d[0].freqs = vec![0.075, 0.075, 0.075, 0.075, 0.7 / 4.0, 0.7 / 4.0, 0.7 / 4.0, 0.7 / 4.0];
        set.grids_2d[0].freqs = vec![0.12, 0.12, 0.38, 0.38]; // chunk1 = 0.24
        set.grids_2d[1].freqs = vec![0.13, 0.13, 0.37, 0.37]; // chunk1 = 0.26
        attribute_consistency(&mut set, 0);
        for i in 0..4 {
            assert!(
                (set.grids_1d[0].freqs[i] - 0.065).abs() < 1e-12,
                "cell {i}: {}",
                set.grids_1d[0].freqs[i]
            );
        }
        // All aggregates agree afterwards.
        let a0: f64 = set.grids_1d[0].freqs[..4].iter().sum();
        let a1 = set.grids_2d[0].freq(1, 1) + set.grids_2d[0].freq(1, 2);
        let a2 = set.grids_2d[1].freq(1, 1) + set.grids_2d[1].freq(1, 2);
        assert!((a0 - 0.26).abs() < 1e-12);
        assert!((a1 - 0.26).abs() < 1e-12);
        assert!((a2 - 0.26).abs() < 1e-12);
    }

    #[test]
    fn consistency_is_a_fixed_point_when_grids_agree() {
        let mut set = three_grid_set();
        let before = set.clone();
        for a in 0..3 {
            attribute_consistency(&mut set, a);
        }
        for (g, h) in set.grids_1d.iter().zip(&before.grids_1d) {
            assert_eq!(g.freqs, h.freqs);
        }
        for (g, h) in set.grids_2d.iter().zip(&before.grids_2d) {
            assert_eq!(g.freqs, h.freqs);
        }
    }

    #[test]
    fn consistency_preserves_mass_of_normalized_grids() {
        let mut set = three_grid_set();
        // Perturb but keep each grid summing to 1.
        set.grids_1d[0].freqs = vec![0.2, 0.05, 0.05, 0.2, 0.1, 0.1, 0.15, 0.15];
        set.grids_2d[0].freqs = vec![0.4, 0.1, 0.3, 0.2];
        set.grids_2d[2].freqs = vec![0.15, 0.35, 0.25, 0.25];
        for a in 0..3 {
            attribute_consistency(&mut set, a);
        }
        for g in &set.grids_1d {
            assert!((g.freqs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for g in &set.grids_2d {
            assert!((g.freqs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_pass_on_normalized_grids_reaches_agreement() {
        let mut set = three_grid_set();
        set.grids_1d[1].freqs = vec![0.3, 0.0, 0.1, 0.1, 0.2, 0.1, 0.1, 0.1];
        set.grids_2d[0].freqs = vec![0.4, 0.1, 0.3, 0.2];
        set.grids_2d[1].freqs = vec![0.05, 0.45, 0.3, 0.2];
        for a in 0..3 {
            attribute_consistency(&mut set, a);
        }
        assert!(
            consistency_residual(&set) <= 1e-9,
            "residual {}",
            consistency_residual(&set)
        );
    }

    #[test]
    fn single_grid_consistency_is_noop_and_postprocess_reduces_to_norm_sub() {
        let c = 4;
        let mut set = GridSet {
            mode: GridMode::Tdg,
            d: 2,
            c,
            g1: 2,
            g2: 2,
            grids_1d: vec![],
            grids_2d: vec![Grid2D {
                attributes: (0, 1),
                granularity: 2,
                c,
                freqs: vec![0.5, 0.6, -0.1, 0.0],
            }],
        };
        full_postprocess(&mut set, 1);
        let mut expect = vec![0.5, 0.6, -0.1, 0.0];
        norm_sub(&mut expect);
        assert_eq!(set.grids_2d[0].freqs, expect);
    }
}
