//! Pairwise hierarchy baseline: one user group per attribute pair, each
//! building a 2-D hierarchy whose levels are estimated by sub-groups. Noisy
//! hierarchies are made self-consistent by constrained inference along each
//! axis, then mutually consistent across pairs at leaf resolution.

use rand::seq::SliceRandom;

use crate::data::{stream, Dataset, Interval, RangeQuery};
use crate::error::{Error, Result};
use crate::estimate::{answer_lambda, scaling_tolerance};
use crate::freq_oracle::{olh_aggregate_keyed, olh_perturb_keyed, OlhParams};
use crate::grids::{assign_groups, attribute_pairs, Grid2D, GridMode, GridSet};
use crate::postprocess::attribute_consistency;
use crate::seed::{derive_seed, fold_key, stream_rng, user_hash_seed};

use super::hierarchy::{constrained_inference, Hierarchy1D};

const INNER_STREAM: u64 = 0x4C48;

/// One attribute pair's 2-D hierarchy: `tables[l1 * (h + 1) + l2]` holds the
/// `b^l1 x b^l2` (row-major) frequencies of the 2-D intervals at that level
/// combination.
pub struct PairHierarchy {
    pub attributes: (usize, usize),
    tables: Vec<Vec<f64>>,
}

pub struct LhioModel {
    d: usize,
    hierarchy: Hierarchy1D,
    pairs: Vec<PairHierarchy>,
    tol: f64,
}

impl LhioModel {
    pub fn build(
        dataset: &Dataset,
        epsilon: f64,
        branching: u32,
        seed: u64,
        postprocess_rounds: usize,
    ) -> Result<(Self, usize)> {
        let d = dataset.attributes();
        if d < 2 {
            return Err(Error::InvalidParameter("needs d >= 2".into()));
        }
        let hierarchy = Hierarchy1D::new(dataset.domain().size(), branching)?;
        let per_attr = hierarchy.height as usize + 1;
        let sub_groups = per_attr * per_attr;
        let pair_list = attribute_pairs(d);
        let outer = assign_groups(
            dataset.n(),
            pair_list.len(),
            derive_seed(&[seed, stream::GROUPS]),
        )?;
        let params = OlhParams::new(dataset.domain().size(), epsilon)?;
        let mut pairs = Vec::with_capacity(pair_list.len());
        let mut reports_total = 0usize;
        for (pi, (&(j, k), members)) in pair_list.iter().zip(outer.members().iter()).enumerate() {
            if members.len() < sub_groups {
                return Err(Error::InvalidParameter(format!(
                    "pair group of {} users cannot fill {sub_groups} level groups",
                    members.len()
                )));
            }
            let chunks = split_members(members, sub_groups, derive_seed(&[seed, INNER_STREAM, pi as u64]));
            let mut tables = Vec::with_capacity(sub_groups);
            for (flat, chunk) in chunks.iter().enumerate() {
                let (l1, l2) = ((flat / per_attr) as u32, (flat % per_attr) as u32);
                let mut reports = Vec::with_capacity(chunk.len());
                for &u in chunk {
                    let n1 = hierarchy.node_of(dataset.value(u, j), l1) as u64;
                    let n2 = hierarchy.node_of(dataset.value(u, k), l2) as u64;
                    let mut rng = stream_rng(&[seed, stream::REPORTS, u as u64]);
                    reports.push(olh_perturb_keyed(
                        fold_key(&[n1, n2]),
                        &params,
                        user_hash_seed(seed, u),
                        &mut rng,
                    )?);
                }
                reports_total += reports.len();
                let cols = hierarchy.nodes_at(l2);
                let domain = hierarchy.nodes_at(l1) * cols;
                let est = olh_aggregate_keyed(&reports, &params, domain, |v| {
                    fold_key(&[((v - 1) / cols) as u64, ((v - 1) % cols) as u64])
                })?;
                tables.push(est.values);
            }
            pairs.push(PairHierarchy {
                attributes: (j, k),
                tables,
            });
        }

        let mut model = Self {
            d,
            hierarchy,
            pairs,
            tol: scaling_tolerance(dataset.n()),
        };
        model.enforce_consistency(postprocess_rounds);
        Ok((model, reports_total))
    }

    /// Constrained inference along each axis of every pair hierarchy, then
    /// cross-pair attribute consistency on the leaf tables, then an exact
    /// rebuild of the coarser levels from the adjusted leaves.
    ///
    /// Only the consistency half of the grid post-processing runs here: at
    /// leaf resolution the per-cell noise dwarfs the per-cell signal, and a
    /// non-negativity sweep would wipe out the accuracy that constrained
    /// inference moved into the leaves.
    fn enforce_consistency(&mut self, rounds: usize) {
        for pair in &mut self.pairs {
            axis1_inference(&mut pair.tables, &self.hierarchy);
            axis2_inference(&mut pair.tables, &self.hierarchy);
        }
        let c = self.hierarchy.c;
        let mut set = GridSet {
            mode: GridMode::Tdg,
            d: self.d,
            c,
            g1: c,
            g2: c,
            grids_1d: vec![],
            grids_2d: self
                .pairs
                .iter()
                .map(|p| Grid2D {
                    attributes: p.attributes,
                    granularity: c,
                    c,
                    freqs: p.leaf_table().to_vec(),
                })
                .collect(),
        };
        for _ in 0..rounds.max(1) {
            for a in 0..self.d {
                attribute_consistency(&mut set, a);
            }
        }
        for (pair, grid) in self.pairs.iter_mut().zip(set.grids_2d) {
            let leaf_index = pair.tables.len() - 1;
            pair.tables[leaf_index] = grid.freqs;
            rebuild_from_leaves(&mut pair.tables, &self.hierarchy);
        }
    }

    pub fn pair_hierarchies(&self) -> &[PairHierarchy] {
        &self.pairs
    }

    pub fn hierarchy(&self) -> &Hierarchy1D {
        &self.hierarchy
    }

    fn pair_answer(&self, j: usize, k: usize, rows: Interval, cols: Interval) -> f64 {
        let pi = attribute_pairs(self.d)
            .iter()
            .position(|&p| p == (j, k))
            .expect("valid pair");
        let pair = &self.pairs[pi];
        let per_attr = self.hierarchy.height as usize + 1;
        let mut sum = 0.0;
        for n1 in self.hierarchy.decompose(rows) {
            for n2 in self.hierarchy.decompose(cols) {
                let table = &pair.tables[n1.level as usize * per_attr + n2.level as usize];
                let width = self.hierarchy.nodes_at(n2.level);
                sum += table[(n1.index * width + n2.index) as usize];
            }
        }
        sum
    }

    pub fn answer(&self, query: &RangeQuery) -> Result<f64> {
        for p in query.predicates() {
            if p.attribute >= self.d {
                return Err(Error::InvalidParameter(format!(
                    "query attribute {} out of range",
                    p.attribute + 1
                )));
            }
        }
        let full = Interval {
            lo: 1,
            hi: self.hierarchy.c,
        };
        match query.predicates() {
            [single] => {
                let a = single.attribute;
                let partner = if a == 0 { 1 } else { 0 };
                let (j, k) = (a.min(partner), a.max(partner));
                let (rows, cols) = if j == a {
                    (single.interval, full)
                } else {
                    (full, single.interval)
                };
                Ok(self.pair_answer(j, k, rows, cols))
            }
            [a, b] => Ok(self.pair_answer(a.attribute, b.attribute, a.interval, b.interval)),
            preds => {
                let mut pair_answers = Vec::new();
                for (t1, p1) in preds.iter().enumerate() {
                    for p2 in preds.iter().skip(t1 + 1) {
                        let f = self
                            .pair_answer(p1.attribute, p2.attribute, p1.interval, p2.interval)
                            .clamp(0.0, 1.0);
                        pair_answers.push(f);
                    }
                }
                answer_lambda(&pair_answers, preds.len(), self.tol)
            }
        }
    }
}

impl PairHierarchy {
    pub fn leaf_table(&self) -> &[f64] {
        &self.tables[self.tables.len() - 1]
    }

    pub fn table(&self, l1: u32, l2: u32, per_attr: usize) -> &[f64] {
        &self.tables[l1 as usize * per_attr + l2 as usize]
    }
}

/// Shuffle a member list and cut it into `k` near-equal chunks.
fn split_members(members: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut shuffled = members.to_vec();
    shuffled.shuffle(&mut stream_rng(&[seed]));
    let base = members.len() / k;
    let extra = members.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut pos = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        out.push(shuffled[pos..pos + size].to_vec());
        pos += size;
    }
    out
}

/// Constrained inference over attribute 1: for every fixed level and node of
/// attribute 2, the stack of tables along attribute 1 forms one noisy 1-D
/// hierarchy.
fn axis1_inference(tables: &mut [Vec<f64>], hierarchy: &Hierarchy1D) {
    let h = hierarchy.height;
    let per_attr = h as usize + 1;
    let b = hierarchy.branching;
    for l2 in 0..=h {
        let cols = hierarchy.nodes_at(l2);
        for k2 in 0..cols {
            let mut stack: Vec<Vec<f64>> = (0..=h)
                .map(|l1| {
                    let t = &tables[l1 as usize * per_attr + l2 as usize];
                    (0..hierarchy.nodes_at(l1))
                        .map(|i1| t[(i1 * cols + k2) as usize])
                        .collect()
                })
                .collect();
            constrained_inference(&mut stack, b);
            for l1 in 0..=h {
                let t = &mut tables[l1 as usize * per_attr + l2 as usize];
                for i1 in 0..hierarchy.nodes_at(l1) {
                    t[(i1 * cols + k2) as usize] = stack[l1 as usize][i1 as usize];
                }
            }
        }
    }
}

fn axis2_inference(tables: &mut [Vec<f64>], hierarchy: &Hierarchy1D) {
    let h = hierarchy.height;
    let per_attr = h as usize + 1;
    let b = hierarchy.branching;
    for l1 in 0..=h {
        for i1 in 0..hierarchy.nodes_at(l1) {
            let mut stack: Vec<Vec<f64>> = (0..=h)
                .map(|l2| {
                    let t = &tables[l1 as usize * per_attr + l2 as usize];
                    let cols = hierarchy.nodes_at(l2);
                    (0..cols).map(|i2| t[(i1 * cols + i2) as usize]).collect()
                })
                .collect();
            constrained_inference(&mut stack, b);
            for l2 in 0..=h {
                let t = &mut tables[l1 as usize * per_attr + l2 as usize];
                let cols = hierarchy.nodes_at(l2);
                for i2 in 0..cols {
                    t[(i1 * cols + i2) as usize] = stack[l2 as usize][i2 as usize];
                }
            }
        }
    }
}

/// Recompute every non-leaf table as exact block sums of the leaf table.
fn rebuild_from_leaves(tables: &mut [Vec<f64>], hierarchy: &Hierarchy1D) {
    let h = hierarchy.height;
    let per_attr = h as usize + 1;
    let c = hierarchy.c;
    let leaves = tables[per_attr * per_attr - 1].clone();
    for l1 in 0..=h {
        let rows = hierarchy.nodes_at(l1);
        let row_w = c / rows;
        for l2 in 0..=h {
            if l1 == h && l2 == h {
                continue;
            }
            let cols = hierarchy.nodes_at(l2);
            let col_w = c / cols;
            let t = &mut tables[l1 as usize * per_attr + l2 as usize];
            for i1 in 0..rows {
                for i2 in 0..cols {
                    let mut sum = 0.0;
                    for r in i1 * row_w..(i1 + 1) * row_w {
                        for cc in i2 * col_w..(i2 + 1) * col_w {
                            sum += leaves[(r * c + cc) as usize];
                        }
                    }
                    t[(i1 * cols + i2) as usize] = sum;
                }
            }
        }
    }
}
