//! Pairwise-marginal baseline: every attribute pair's full joint is
//! collected by one user group through OLH (no binning), post-processed for
//! non-negativity and cross-table consistency, and queried by summing the
//! covered marginal cells.
//!
//! This is exactly the pairwise-grid pipeline at full resolution, so it
//! shares that implementation.

use crate::data::{Dataset, RangeQuery};
use crate::error::Result;
use crate::estimate::{GridOptions, TdgModel};
use crate::grids::{GranularityPlan, GridMode, GridSet, DEFAULT_ALPHA1, DEFAULT_ALPHA2};

pub struct CalmModel {
    inner: TdgModel,
}

impl CalmModel {
    pub fn build(
        dataset: &Dataset,
        epsilon: f64,
        seed: u64,
        options: &GridOptions,
    ) -> Result<(Self, usize)> {
        let c = dataset.domain().size();
        let plan = GranularityPlan {
            mode: GridMode::Tdg,
            g1: c,
            g2: c,
            alpha1: DEFAULT_ALPHA1,
            alpha2: DEFAULT_ALPHA2,
        };
        let (inner, reports) = TdgModel::build_with_plan(dataset, &plan, epsilon, seed, options)?;
        Ok((Self { inner }, reports))
    }

    pub fn tables(&self) -> &GridSet {
        &self.inner.grids
    }

    pub fn answer(&self, query: &RangeQuery) -> Result<f64> {
        self.inner.answer(query)
    }

    pub fn from_parts(grids: GridSet, n: usize, options: &GridOptions) -> Self {
        Self {
            inner: TdgModel::from_parts(grids, n, options),
        }
    }
}
