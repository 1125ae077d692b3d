//! Hierarchy-based baseline over the full attribute set: one user group per
//! combination of per-attribute hierarchy levels, each reporting its
//! multi-attribute interval at that combination through OLH.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::data::{stream, Dataset, Interval, RangeQuery};
use crate::error::{Error, Result};
use crate::freq_oracle::{olh_estimate_single, olh_perturb_keyed, OlhParams, OlhReport};
use crate::seed::{derive_seed, fold_key, stream_rng, user_hash_seed};

use super::hierarchy::{HierNode, Hierarchy1D};

/// Default branching factor used by the experiments.
pub const DEFAULT_BRANCHING: u32 = 4;

pub struct HioModel {
    d: usize,
    hierarchy: Hierarchy1D,
    params: OlhParams,
    /// Reports per flat level id (mixed radix over per-attribute levels).
    level_reports: Vec<Vec<OlhReport>>,
    /// Interval-frequency estimates are computed on demand; a query only
    /// touches a tiny slice of the (potentially enormous) level tables.
    cache: Mutex<HashMap<(u32, u64), f64>>,
}

impl HioModel {
    /// Split users into `(h + 1)^d` groups, one per level combination, and
    /// collect one OLH report each. Returns the model and the report count.
    pub fn build(
        dataset: &Dataset,
        epsilon: f64,
        branching: u32,
        seed: u64,
    ) -> Result<(Self, usize)> {
        let d = dataset.attributes();
        let hierarchy = Hierarchy1D::new(dataset.domain().size(), branching)?;
        let per_attr = hierarchy.height as usize + 1;
        let m = per_attr
            .checked_pow(d as u32)
            .filter(|&m| m <= dataset.n())
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "{per_attr}^{d} level groups exceed {} users",
                    dataset.n()
                ))
            })?;
        let assignment =
            crate::grids::assign_groups(dataset.n(), m, derive_seed(&[seed, stream::GROUPS]))?;
        let params = OlhParams::new(dataset.domain().size(), epsilon)?;
        let mut level_reports = Vec::with_capacity(m);
        let mut reports_total = 0usize;
        for (flat, group) in assignment.members().iter().enumerate() {
            let levels = decode_levels(flat, d, per_attr);
            let mut reports = Vec::with_capacity(group.len());
            for &u in group {
                let parts: Vec<u64> = (0..d)
                    .map(|t| hierarchy.node_of(dataset.value(u, t), levels[t]) as u64)
                    .collect();
                let mut rng = stream_rng(&[seed, stream::REPORTS, u as u64]);
                reports.push(olh_perturb_keyed(
                    fold_key(&parts),
                    &params,
                    user_hash_seed(seed, u),
                    &mut rng,
                )?);
            }
            reports_total += reports.len();
            level_reports.push(reports);
        }
        Ok((
            Self {
                d,
                hierarchy,
                params,
                level_reports,
                cache: Mutex::new(HashMap::new()),
            },
            reports_total,
        ))
    }

    pub fn hierarchy(&self) -> &Hierarchy1D {
        &self.hierarchy
    }

    /// Expand the query to all attributes (full domain where unspecified),
    /// decompose each interval into its minimal hierarchy cover, and sum the
    /// estimated frequencies over all cover combinations.
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
        let covers: Vec<Vec<HierNode>> = (0..self.d)
            .map(|t| self.hierarchy.decompose(query.interval_of(t).unwrap_or(full)))
            .collect();
        let mut sum = 0.0;
        let mut choice = vec![0usize; self.d];
        loop {
            let nodes: Vec<HierNode> = choice.iter().zip(&covers).map(|(&i, c)| c[i]).collect();
            sum += self.interval_frequency(&nodes);
            // Advance the mixed-radix choice vector.
            let mut t = 0;
            loop {
                if t == self.d {
                    return Ok(sum);
                }
                choice[t] += 1;
                if choice[t] < covers[t].len() {
                    break;
                }
                choice[t] = 0;
                t += 1;
            }
        }
    }

    fn interval_frequency(&self, nodes: &[HierNode]) -> f64 {
        let per_attr = self.hierarchy.height as usize + 1;
        let flat = nodes
            .iter()
            .fold(0usize, |acc, n| acc * per_attr + n.level as usize);
        let key = fold_key(&nodes.iter().map(|n| n.index as u64).collect::<Vec<u64>>());
        if let Some(&f) = self.cache.lock().unwrap().get(&(flat as u32, key)) {
            return f;
        }
        let f = olh_estimate_single(&self.level_reports[flat], &self.params, key);
        self.cache.lock().unwrap().insert((flat as u32, key), f);
        f
    }
}

/// Decode a flat group id into per-attribute levels. The flat id is built
/// most-significant-attribute-first, matching `interval_frequency`.
fn decode_levels(mut flat: usize, d: usize, per_attr: usize) -> Vec<u32> {
    let mut levels = vec![0u32; d];
    for t in (0..d).rev() {
        levels[t] = (flat % per_attr) as u32;
        flat /= per_attr;
    }
    levels
}
