//! Per-attribute square-wave baseline: each user group reports one attribute
//! through the square-wave mechanism, EM reconstructs each marginal, and a
//! query is answered by the product of its 1-D interval masses. Correlations
//! between attributes are ignored by construction.

use crate::data::{stream, Dataset, RangeQuery};
use crate::error::{Error, Result};
use crate::freq_oracle::{sw_em_reconstruct, sw_perturb, SwParams};
use crate::grids::assign_groups;
use crate::seed::{derive_seed, stream_rng};

const EM_MAX_ITERS: usize = 1000;
const EM_TOL: f64 = 1e-9;

pub struct MswModel {
    /// Reconstructed marginal distribution per attribute.
    marginals: Vec<Vec<f64>>,
}

impl MswModel {
    pub fn build(dataset: &Dataset, epsilon: f64, seed: u64) -> Result<(Self, usize)> {
        let d = dataset.attributes();
        let c = dataset.domain().size();
        let params = SwParams::new(epsilon)?;
        let assignment = assign_groups(dataset.n(), d, derive_seed(&[seed, stream::GROUPS]))?;
        let mut marginals = Vec::with_capacity(d);
        let mut reports_total = 0usize;
        for (attribute, group) in assignment.members().iter().enumerate() {
            let reports: Vec<f64> = group
                .iter()
                .map(|&u| {
                    // Map value v in [1, c] to its bucket center in [0, 1].
                    let v = (dataset.value(u, attribute) as f64 - 0.5) / c as f64;
                    let mut rng = stream_rng(&[seed, stream::REPORTS, u as u64]);
                    sw_perturb(v, &params, &mut rng)
                })
                .collect::<Result<_>>()?;
            reports_total += reports.len();
            marginals.push(sw_em_reconstruct(
                &reports,
                &params,
                c as usize,
                EM_MAX_ITERS,
                EM_TOL,
            )?);
        }
        Ok((Self { marginals }, reports_total))
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    /// Product of the queried attributes' interval masses.
    pub fn answer(&self, query: &RangeQuery) -> Result<f64> {
        let mut product = 1.0;
        for p in query.predicates() {
            let m = self.marginals.get(p.attribute).ok_or_else(|| {
                Error::InvalidParameter(format!("query attribute {} out of range", p.attribute + 1))
            })?;
            let mass: f64 = m[(p.interval.lo - 1) as usize..p.interval.hi as usize]
                .iter()
                .sum();
            product *= mass;
        }
        Ok(product)
    }
}

/// Non-private benchmark: the uniform guess
/// `prod_t (r_t - l_t + 1) / c` over the queried attributes.
pub fn uni_answer(query: &RangeQuery, c: u32) -> f64 {
    query
        .predicates()
        .iter()
        .map(|p| p.interval.len() as f64 / c as f64)
        .product()
}
