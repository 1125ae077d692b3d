//! Interval hierarchies with branching factor `b`: canonical minimal-cover
//! decomposition and constrained inference for consistency within a noisy
//! hierarchy.

use serde::{Deserialize, Serialize};

use crate::data::Interval;
use crate::error::{Error, Result};

/// A complete hierarchy of intervals over `[1, c]`: level 0 is the whole
/// domain, each node splits into `b` equal children, leaves are singletons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy1D {
    pub branching: u32,
    /// Leaf level; there are `height + 1` levels in total.
    pub height: u32,
    /// Domain size, padded up to a power of `branching`.
    pub c: u32,
}

/// One node: `level` in `[0, height]` and 0-based `index` in `[0, b^level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HierNode {
    pub level: u32,
    pub index: u32,
}

impl Hierarchy1D {
    /// Build over a domain of at least `c` values, padding `c` up to the
    /// next power of `branching`.
    pub fn new(c: u32, branching: u32) -> Result<Self> {
        if branching < 2 {
            return Err(Error::InvalidParameter("branching must be >= 2".into()));
        }
        let mut padded = 1u32;
        let mut height = 0u32;
        while padded < c {
            padded = padded.checked_mul(branching).ok_or_else(|| {
                Error::InvalidParameter(format!("domain {c} too large for branching {branching}"))
            })?;
            height += 1;
        }
        Ok(Self {
            branching,
            height,
            c: padded,
        })
    }

    pub fn nodes_at(&self, level: u32) -> u32 {
        self.branching.pow(level)
    }

    /// Width (in values) of a node at `level`.
    pub fn node_len(&self, level: u32) -> u32 {
        self.c / self.nodes_at(level)
    }

    pub fn node_interval(&self, node: HierNode) -> Interval {
        let w = self.node_len(node.level);
        Interval {
            lo: node.index * w + 1,
            hi: (node.index + 1) * w,
        }
    }

    /// Canonical minimal cover of `interval`: take a node whenever it is
    /// fully contained, otherwise recurse into the children it intersects.
    /// Uses at most `2 (b - 1) log_b c` nodes, pairwise disjoint.
    pub fn decompose(&self, interval: Interval) -> Vec<HierNode> {
        let mut out = Vec::new();
        self.decompose_into(HierNode { level: 0, index: 0 }, interval, &mut out);
        out
    }

    fn decompose_into(&self, node: HierNode, target: Interval, out: &mut Vec<HierNode>) {
        let span = self.node_interval(node);
        if target.overlap(span) == 0 {
            return;
        }
        if target.lo <= span.lo && span.hi <= target.hi {
            out.push(node);
            return;
        }
        debug_assert!(node.level < self.height, "leaves are singletons");
        for child in 0..self.branching {
            self.decompose_into(
                HierNode {
                    level: node.level + 1,
                    index: node.index * self.branching + child,
                },
                target,
                out,
            );
        }
    }

    /// Leaf-level 0-based index of a value.
    pub fn leaf_of(&self, v: u32) -> u32 {
        v - 1
    }

    /// 0-based node index holding `v` at `level`.
    pub fn node_of(&self, v: u32, level: u32) -> u32 {
        (v - 1) / self.node_len(level)
    }
}

/// Constrained inference over one noisy hierarchy stack `levels[l][i]`
/// (level `l` has `b^l` nodes, all estimates equal variance): first replace
/// each node by the inverse-variance blend of its own estimate and its
/// children's, then push consistency down so every parent equals the sum of
/// its children.
pub fn constrained_inference(levels: &mut [Vec<f64>], branching: u32) {
    let h = levels.len() - 1;
    let b = branching as f64;
    // Bottom-up weighted averaging; height k node weight is
    // (b^(k+1) - b^k) / (b^(k+1) - 1).
    let mut z = levels.to_vec();
    for l in (0..h).rev() {
        let k = (h - l) as i32;
        let w = (b.powi(k + 1) - b.powi(k)) / (b.powi(k + 1) - 1.0);
        for i in 0..z[l].len() {
            let child_sum: f64 = (0..branching as usize)
                .map(|t| z[l + 1][i * branching as usize + t])
                .sum();
            z[l][i] = w * levels[l][i] + (1.0 - w) * child_sum;
        }
    }
    // Top-down mean consistency.
    levels[0][0] = z[0][0];
    for l in 1..=h {
        for i in 0..z[l].len() {
            let parent = i / branching as usize;
            let sibling_sum: f64 = (0..branching as usize)
                .map(|t| z[l][parent * branching as usize + t])
                .sum();
            levels[l][i] = z[l][i] + (levels[l - 1][parent] - sibling_sum) / b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;
    use rand::Rng;

    #[test]
    fn decompose_matches_hand_cover() {
        let h = Hierarchy1D::new(16, 4).unwrap();
        assert_eq!(h.height, 2);
        let cover = h.decompose(Interval { lo: 2, hi: 9 });
        // {2}, {3}, {4}, [5,8], {9}
        assert_eq!(cover.len(), 5);
        let spans: Vec<(u32, u32)> = cover
            .iter()
            .map(|&n| {
                let iv = h.node_interval(n);
                (iv.lo, iv.hi)
            })
            .collect();
        assert!(spans.contains(&(5, 8)));
        assert!(spans.contains(&(2, 2)));
        assert!(spans.contains(&(9, 9)));
    }

    #[test]
    fn decompose_full_domain_is_root() {
        let h = Hierarchy1D::new(16, 4).unwrap();
        let cover = h.decompose(Interval { lo: 1, hi: 16 });
        assert_eq!(cover, vec![HierNode { level: 0, index: 0 }]);
    }

    #[test]
    fn decompose_is_minimal_exact_and_disjoint() {
        let h = Hierarchy1D::new(64, 4).unwrap();
        let bound = (2 * (4 - 1) * 3) as usize; // 2 (b-1) log_b c
        let mut rng = stream_rng(&[77]);
        for _ in 0..1000 {
            let lo = rng.random_range(1..=64u32);
            let hi = rng.random_range(lo..=64u32);
            let iv = Interval { lo, hi };
            let cover = h.decompose(iv);
            assert!(cover.len() <= bound, "{} nodes for [{lo},{hi}]", cover.len());
            let mut covered = [false; 64];
            for node in cover {
                let span = h.node_interval(node);
                for v in span.lo..=span.hi {
                    assert!(!covered[(v - 1) as usize], "overlap at {v}");
                    covered[(v - 1) as usize] = true;
                }
            }
            for v in 1..=64u32 {
                assert_eq!(covered[(v - 1) as usize], iv.contains(v));
            }
        }
    }

    #[test]
    fn padding_to_power_of_branching() {
        let h = Hierarchy1D::new(32, 4).unwrap();
        assert_eq!(h.c, 64);
        assert_eq!(h.height, 3);
    }

    #[test]
    fn constrained_inference_enforces_parent_child_sums() {
        let b = 4u32;
        let h = 2usize;
        let mut rng = stream_rng(&[13]);
        let mut levels: Vec<Vec<f64>> = (0..=h)
            .map(|l| {
                (0..(b as usize).pow(l as u32))
                    .map(|_| rng.random::<f64>())
                    .collect()
            })
            .collect();
        constrained_inference(&mut levels, b);
        for l in 0..h {
            for i in 0..levels[l].len() {
                let child_sum: f64 = (0..b as usize)
                    .map(|t| levels[l + 1][i * b as usize + t])
                    .sum();
                assert!(
                    (levels[l][i] - child_sum).abs() < 1e-9,
                    "level {l} node {i}: {} vs {child_sum}",
                    levels[l][i]
                );
            }
        }
    }

    #[test]
    fn constrained_inference_is_noop_on_consistent_input() {
        let b = 2u32;
        let leaves = vec![0.1, 0.2, 0.3, 0.4];
        let mid = vec![0.3, 0.7];
        let root = vec![1.0];
        let mut levels = vec![root.clone(), mid.clone(), leaves.clone()];
        constrained_inference(&mut levels, b);
        for (got, want) in levels[2].iter().zip(&leaves) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in levels[1].iter().zip(&mid) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
