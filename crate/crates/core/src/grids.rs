//! Grid construction: granularity selection, user-group division, and
//! frequency collection over grid cells via optimized local hashing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{stream, Dataset};
use crate::error::{Error, Result};
use crate::freq_oracle::{olh_aggregate_keyed, olh_perturb, OlhParams, OlhReport};
use crate::seed::{derive_seed, stream_rng, user_hash_seed};

/// Which grid family an approach builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// Pairwise 2-D grids only.
    Tdg,
    /// 1-D grids for every attribute plus pairwise 2-D grids.
    Hdg,
}

/// Chosen granularities plus the guideline constants that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GranularityPlan {
    pub mode: GridMode,
    /// Cells per 1-D grid (power of two, at most `c`).
    pub g1: u32,
    /// Cells per axis of a 2-D grid (power of two, at most `c`).
    pub g2: u32,
    pub alpha1: f64,
    pub alpha2: f64,
}

pub const DEFAULT_ALPHA1: f64 = 0.7;
pub const DEFAULT_ALPHA2: f64 = 0.03;

/// Number of user groups an approach needs.
pub fn group_count(mode: GridMode, d: usize) -> usize {
    let pairs = d * (d - 1) / 2;
    match mode {
        GridMode::Tdg => pairs,
        GridMode::Hdg => d + pairs,
    }
}

/// Round to the power of two with the smallest absolute distance, ties
/// upward, clamped to `[1, c]`.
pub fn round_to_power_of_two(x: f64, c: u32) -> u32 {
    if !x.is_finite() || x <= 1.0 {
        return 1;
    }
    let lo = 1u64 << x.log2().floor() as u32;
    let hi = lo << 1;
    let g = if (x - lo as f64) < (hi as f64 - x) {
        lo
    } else {
        hi
    };
    (g.min(c as u64) as u32).max(1)
}

/// Granularity guideline: balances noise error (grows with cell count)
/// against the non-uniformity error of partially covered cells.
///
/// With `n/m` users per group,
/// `g1 = cbrt(n1 (e^eps - 1)^2 alpha1^2 / (2 m1 e^eps))` and
/// `g2 = sqrt(2 alpha2 (e^eps - 1) sqrt(n2 / (m2 e^eps)))`,
/// each rounded to the nearest power of two (linear distance, ties up) and
/// clamped to `[1, c]`.
pub fn choose_granularities(
    n: usize,
    d: usize,
    epsilon: f64,
    alpha1: f64,
    alpha2: f64,
    c: u32,
    mode: GridMode,
) -> GranularityPlan {
    let users_per_group = n as f64 / group_count(mode, d) as f64;
    let ee = epsilon.exp();
    let g1_raw = (users_per_group * (ee - 1.0).powi(2) * alpha1 * alpha1 / (2.0 * ee)).cbrt();
    let g2_raw = (2.0 * alpha2 * (ee - 1.0) * (users_per_group / ee).sqrt()).sqrt();
    GranularityPlan {
        mode,
        g1: round_to_power_of_two(g1_raw, c),
        g2: round_to_power_of_two(g2_raw, c),
        alpha1,
        alpha2,
    }
}

/// Assignment of users to `m` near-equal groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAssignment {
    group_of_user: Vec<u32>,
    m: usize,
}

impl GroupAssignment {
    pub fn groups(&self) -> usize {
        self.m
    }

    pub fn group_of(&self, user: usize) -> usize {
        self.group_of_user[user] as usize
    }

    /// Users in each group, in ascending user order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.m];
        for (u, &g) in self.group_of_user.iter().enumerate() {
            out[g as usize].push(u);
        }
        out
    }
}

/// Randomly permute users and split into `m` near-equal contiguous chunks;
/// the first `n mod m` groups take one extra user.
pub fn assign_groups(n: usize, m: usize, seed: u64) -> Result<GroupAssignment> {
    if m < 1 {
        return Err(Error::InvalidParameter("need m >= 1 groups".into()));
    }
    if m > n {
        return Err(Error::InvalidParameter(format!(
            "cannot split {n} users into {m} groups"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(&[seed, stream::GROUPS]));
    let base = n / m;
    let extra = n % m;
    let mut group_of_user = vec![0u32; n];
    let mut pos = 0usize;
    for g in 0..m {
        let size = base + usize::from(g < extra);
        for &u in &perm[pos..pos + size] {
            group_of_user[u] = g as u32;
        }
        pos += size;
    }
    Ok(GroupAssignment { group_of_user, m })
}

/// 1-based cell id of value `v` in a 1-D grid with `g` cells over `[1, c]`:
/// `ceil(v * g / c)`.
pub fn cell_index_1d(v: u32, g: u32, c: u32) -> u32 {
    (v as u64 * g as u64).div_ceil(c as u64) as u32
}

/// A 1-D grid: `g` equal cells tiling `[1, c]` with estimated frequencies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid1D {
    pub attribute: usize,
    pub granularity: u32,
    pub c: u32,
    /// `freqs[s - 1]` is the estimate for cell `s` in `[1, g]`.
    pub freqs: Vec<f64>,
}

impl Grid1D {
    pub fn cell_of(&self, v: u32) -> u32 {
        cell_index_1d(v, self.granularity, self.c)
    }

    /// Cell width in domain values.
    pub fn cell_len(&self) -> u32 {
        self.c / self.granularity
    }

    /// Value interval `[lo, hi]` covered by 1-based cell `s`.
    pub fn cell_range(&self, s: u32) -> (u32, u32) {
        let w = self.cell_len();
        ((s - 1) * w + 1, s * w)
    }
}

/// A 2-D grid over an attribute pair `(j, k)` with `g x g` equal cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid2D {
    /// Attribute pair, `attributes.0 < attributes.1`.
    pub attributes: (usize, usize),
    pub granularity: u32,
    pub c: u32,
    /// Row-major: `freqs[(sj - 1) * g + (sk - 1)]` for per-axis cells
    /// `(sj, sk)` in `[1, g]^2`.
    pub freqs: Vec<f64>,
}

impl Grid2D {
    pub fn cell_len(&self) -> u32 {
        self.c / self.granularity
    }

    /// Per-axis 1-based cell indices of a 2-D value.
    pub fn cell_of(&self, vj: u32, vk: u32) -> (u32, u32) {
        (
            cell_index_1d(vj, self.granularity, self.c),
            cell_index_1d(vk, self.granularity, self.c),
        )
    }

    /// Row-major flattened 1-based cell id.
    pub fn flatten(&self, sj: u32, sk: u32) -> u32 {
        (sj - 1) * self.granularity + sk
    }

    pub fn freq(&self, sj: u32, sk: u32) -> f64 {
        self.freqs[(self.flatten(sj, sk) - 1) as usize]
    }

    /// Value interval covered by per-axis cell index `s`.
    pub fn cell_range(&self, s: u32) -> (u32, u32) {
        let w = self.cell_len();
        ((s - 1) * w + 1, s * w)
    }
}

/// All grids one approach collected, plus the shape they share.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSet {
    pub mode: GridMode,
    pub d: usize,
    pub c: u32,
    pub g1: u32,
    pub g2: u32,
    pub grids_1d: Vec<Grid1D>,
    pub grids_2d: Vec<Grid2D>,
}

impl GridSet {
    /// Index into `grids_2d` for the pair `(j, k)` with `j < k`.
    pub fn pair_index(&self, j: usize, k: usize) -> usize {
        debug_assert!(j < k && k < self.d);
        // Lexicographic position of (j, k) among all pairs.
        let before: usize = (0..j).map(|a| self.d - 1 - a).sum();
        before + (k - j - 1)
    }

    pub fn grid_2d(&self, j: usize, k: usize) -> &Grid2D {
        &self.grids_2d[self.pair_index(j, k)]
    }
}

/// All attribute pairs `(j, k)` with `j < k`, in lexicographic order.
pub fn attribute_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(d * (d - 1) / 2);
    for j in 0..d {
        for k in j + 1..d {
            out.push((j, k));
        }
    }
    out
}

/// Build the raw (pre-post-processing) grids for a dataset: users are split
/// into one group per grid, and each user reports the cell holding their
/// value(s) through OLH with the full privacy budget.
///
/// Returns the grids and the total number of reports collected (exactly one
/// per user).
pub fn build_grids(
    dataset: &Dataset,
    plan: &GranularityPlan,
    epsilon: f64,
    seed: u64,
) -> Result<(GridSet, usize)> {
    let d = dataset.attributes();
    let c = dataset.domain().size();
    if d < 2 {
        return Err(Error::InvalidParameter("grids need d >= 2".into()));
    }
    if plan.g1 > c || plan.g2 > c || !c.is_multiple_of(plan.g1) || !c.is_multiple_of(plan.g2) {
        return Err(Error::InvalidParameter(format!(
            "granularities ({}, {}) must divide c = {c}",
            plan.g1, plan.g2
        )));
    }
    let m = group_count(plan.mode, d);
    let assignment = assign_groups(dataset.n(), m, derive_seed(&[seed, stream::GROUPS]))?;
    let members = assignment.members();
    if members.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidParameter(format!(
            "a user group is empty: n = {} across m = {m} groups",
            dataset.n()
        )));
    }

    let mut reports_total = 0usize;
    let mut grids_1d = Vec::new();
    let mut grids_2d = Vec::new();
    let mut group_iter = members.iter();

    if plan.mode == GridMode::Hdg {
        let params = OlhParams::new(plan.g1, epsilon)?;
        for attribute in 0..d {
            let group = group_iter.next().expect("group per grid");
            let reports = collect_reports(group, seed, &params, |u| {
                cell_index_1d(dataset.value(u, attribute), plan.g1, c)
            })?;
            reports_total += reports.len();
            let est = olh_aggregate_keyed(&reports, &params, plan.g1, |s| s as u64)?;
            grids_1d.push(Grid1D {
                attribute,
                granularity: plan.g1,
                c,
                freqs: est.values,
            });
        }
    }

    let params2 = OlhParams::new(plan.g2 * plan.g2, epsilon)?;
    for (j, k) in attribute_pairs(d) {
        let group = group_iter.next().expect("group per grid");
        let g = plan.g2;
        let reports = collect_reports(group, seed, &params2, |u| {
            let sj = cell_index_1d(dataset.value(u, j), g, c);
            let sk = cell_index_1d(dataset.value(u, k), g, c);
            (sj - 1) * g + sk
        })?;
        reports_total += reports.len();
        let est = olh_aggregate_keyed(&reports, &params2, g * g, |s| s as u64)?;
        grids_2d.push(Grid2D {
            attributes: (j, k),
            granularity: g,
            c,
            freqs: est.values,
        });
    }

    debug_assert_eq!(reports_total, dataset.n());
    Ok((
        GridSet {
            mode: plan.mode,
            d,
            c,
            g1: plan.g1,
            g2: plan.g2,
            grids_1d,
            grids_2d,
        },
        reports_total,
    ))
}

/// One OLH report per group member; the report value is `cell(u)` in the
/// grid's flattened cell domain.
fn collect_reports(
    group: &[usize],
    seed: u64,
    params: &OlhParams,
    cell: impl Fn(usize) -> u32,
) -> Result<Vec<OlhReport>> {
    group
        .iter()
        .map(|&u| {
            let mut rng = stream_rng(&[seed, stream::REPORTS, u as u64]);
            olh_perturb(cell(u), params, user_hash_seed(seed, u), &mut rng)
        })
        .collect()
}
