//! Query answering: response-matrix construction by iterative scaling,
//! 2-D answering in uniform and matrix modes, and weighted-update estimation
//! of higher-dimensional answers from pairwise ones.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Interval, RangeQuery};
use crate::error::{Error, Result};
use crate::grids::{
    attribute_pairs, build_grids, choose_granularities, GranularityPlan, Grid1D, Grid2D, GridMode,
    GridSet, DEFAULT_ALPHA1, DEFAULT_ALPHA2,
};
use crate::postprocess::full_postprocess;

/// Hard cap on scaling sweeps; converged runs stop far earlier.
pub const MAX_SWEEPS: usize = 1000;

/// Convergence threshold for the iterative-scaling loops: change per sweep
/// must drop below `min(1e-7, 1/n)`.
pub fn scaling_tolerance(n: usize) -> f64 {
    (1.0 / n as f64).min(1e-7)
}

/// Estimated joint frequencies of one attribute pair at full resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseMatrix {
    /// Attribute pair, `attributes.0 < attributes.1`.
    pub attributes: (usize, usize),
    pub c: u32,
    /// Row-major: `entries[(bj - 1) * c + (bk - 1)]` estimates the frequency
    /// of the 2-D value `(bj, bk)`.
    pub entries: Vec<f64>,
}

impl ResponseMatrix {
    pub fn get(&self, bj: u32, bk: u32) -> f64 {
        self.entries[((bj - 1) * self.c + (bk - 1)) as usize]
    }

    /// Sum of entries over a value rectangle.
    pub fn rectangle_sum(&self, rows: Interval, cols: Interval) -> f64 {
        let mut sum = 0.0;
        for bj in rows.lo..=rows.hi {
            let base = ((bj - 1) * self.c) as usize;
            for bk in cols.lo..=cols.hi {
                sum += self.entries[base + (bk - 1) as usize];
            }
        }
        sum
    }
}

/// Build the response matrix for a pair from its two 1-D grids and the 2-D
/// grid by iterative scaling: starting uniform, repeatedly rescale the block
/// of entries covered by each grid cell so it sums to the cell's frequency,
/// until the total entry change in a sweep falls below `tol`.
///
/// Inputs are expected to be post-processed (non-negative); zero-mass blocks
/// are left untouched.
pub fn build_response_matrix(
    g_j: &Grid1D,
    g_k: &Grid1D,
    g_jk: &Grid2D,
    tol: f64,
) -> Result<ResponseMatrix> {
    build_response_matrix_with_stats(g_j, g_k, g_jk, tol).map(|(m, _)| m)
}

/// [`build_response_matrix`] plus the number of sweeps it took to converge
/// (equals [`MAX_SWEEPS`] when the change never dropped below `tol`).
pub fn build_response_matrix_with_stats(
    g_j: &Grid1D,
    g_k: &Grid1D,
    g_jk: &Grid2D,
    tol: f64,
) -> Result<(ResponseMatrix, usize)> {
    let c = g_jk.c;
    if g_j.c != c || g_k.c != c {
        return Err(Error::InvalidParameter(
            "grids disagree on domain size".into(),
        ));
    }
    for f in g_j
        .freqs
        .iter()
        .chain(g_k.freqs.iter())
        .chain(g_jk.freqs.iter())
    {
        if !f.is_finite() {
            return Err(Error::InvalidParameter(
                "non-finite grid frequency".into(),
            ));
        }
    }
    let mut entries = vec![1.0 / (c as f64 * c as f64); (c * c) as usize];
    let mut scratch = entries.clone();
    let mut sweeps = MAX_SWEEPS;
    for sweep in 0..MAX_SWEEPS {
        scratch.copy_from_slice(&entries);
        // 1-D cells constrain row/column bands; 2-D cells constrain blocks.
        for (s, &f) in g_j.freqs.iter().enumerate() {
            let (lo, hi) = g_j.cell_range(s as u32 + 1);
            scale_block(&mut entries, c, lo, hi, 1, c, f);
        }
        for (s, &f) in g_k.freqs.iter().enumerate() {
            let (lo, hi) = g_k.cell_range(s as u32 + 1);
            scale_block(&mut entries, c, 1, c, lo, hi, f);
        }
        let g = g_jk.granularity;
        for sj in 1..=g {
            let (rlo, rhi) = g_jk.cell_range(sj);
            for sk in 1..=g {
                let (clo, chi) = g_jk.cell_range(sk);
                scale_block(&mut entries, c, rlo, rhi, clo, chi, g_jk.freq(sj, sk));
            }
        }
        let change: f64 = entries
            .iter()
            .zip(&scratch)
            .map(|(a, b)| (a - b).abs())
            .sum();
        if change < tol {
            sweeps = sweep + 1;
            break;
        }
    }
    Ok((
        ResponseMatrix {
            attributes: g_jk.attributes,
            c,
            entries,
        },
        sweeps,
    ))
}

fn scale_block(entries: &mut [f64], c: u32, rlo: u32, rhi: u32, clo: u32, chi: u32, target: f64) {
    let mut sum = 0.0;
    for r in rlo..=rhi {
        let base = ((r - 1) * c) as usize;
        for col in clo..=chi {
            sum += entries[base + (col - 1) as usize];
        }
    }
    if sum == 0.0 {
        return;
    }
    let factor = target / sum;
    for r in rlo..=rhi {
        let base = ((r - 1) * c) as usize;
        for col in clo..=chi {
            entries[base + (col - 1) as usize] *= factor;
        }
    }
}

/// How partially covered cells contribute to a 2-D answer.
#[derive(Clone, Copy)]
pub enum PartialCellMode<'a> {
    /// Assume values inside a cell are uniform: add the covered fraction of
    /// the cell's frequency.
    Uniform,
    /// Add the matching response-matrix entries.
    Matrix(&'a ResponseMatrix),
}

/// Answer a 2-D rectangle query on one grid. Fully covered cells contribute
/// their frequency; partially covered cells contribute per `mode`.
pub fn answer_2d(
    grid: &Grid2D,
    rows: Interval,
    cols: Interval,
    mode: PartialCellMode<'_>,
) -> f64 {
    let g = grid.granularity;
    let cell_area = (grid.cell_len() as u64 * grid.cell_len() as u64) as f64;
    let mut answer = 0.0;
    for sj in 1..=g {
        let (rlo, rhi) = grid.cell_range(sj);
        let row_cover = rows.overlap(Interval { lo: rlo, hi: rhi });
        if row_cover == 0 {
            continue;
        }
        for sk in 1..=g {
            let (clo, chi) = grid.cell_range(sk);
            let col_cover = cols.overlap(Interval { lo: clo, hi: chi });
            if col_cover == 0 {
                continue;
            }
            let covered = row_cover as u64 * col_cover as u64;
            if covered == cell_area as u64 {
                answer += grid.freq(sj, sk);
            } else {
                match mode {
                    PartialCellMode::Uniform => {
                        answer += grid.freq(sj, sk) * covered as f64 / cell_area;
                    }
                    PartialCellMode::Matrix(m) => {
                        answer += m.rectangle_sum(
                            Interval {
                                lo: rows.lo.max(rlo),
                                hi: rows.hi.min(rhi),
                            },
                            Interval {
                                lo: cols.lo.max(clo),
                                hi: cols.hi.min(chi),
                            },
                        );
                    }
                }
            }
        }
    }
    answer
}

/// Answer a 1-D interval on a 1-D grid, uniform within partial cells.
pub fn answer_1d(grid: &Grid1D, interval: Interval) -> f64 {
    let mut answer = 0.0;
    for (s, &f) in grid.freqs.iter().enumerate() {
        let (lo, hi) = grid.cell_range(s as u32 + 1);
        let cover = interval.overlap(Interval { lo, hi });
        if cover == grid.cell_len() {
            answer += f;
        } else if cover > 0 {
            answer += f * cover as f64 / grid.cell_len() as f64;
        }
    }
    answer
}

/// The weighted-update state for a `lambda`-dimensional query: one entry per
/// combination of interval/complement choices across the queried attributes.
/// Bit `t` of an entry's index set means attribute position `t` takes the
/// complement; index 0 is the all-interval entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerVector {
    pub lambda: usize,
    pub entries: Vec<f64>,
}

impl AnswerVector {
    fn uniform(lambda: usize) -> Self {
        let size = 1usize << lambda;
        Self {
            lambda,
            entries: vec![1.0 / size as f64; size],
        }
    }
}

/// One pairwise constraint: entries where positions `t1` and `t2` both take
/// the plain interval must sum to `target`.
#[derive(Debug, Clone, Copy)]
pub struct PairConstraint {
    pub t1: usize,
    pub t2: usize,
    /// Complement pattern: bit 0 / bit 1 select the complement of `t1` /
    /// `t2`. Zero for the plain constraints.
    pub pattern: u8,
    pub target: f64,
}

/// Run weighted update over the constraint set until the total entry change
/// in a sweep is below `tol`. Entries stay non-negative for non-negative
/// targets; subsets currently summing to zero are skipped.
pub fn weighted_update(lambda: usize, constraints: &[PairConstraint], tol: f64) -> AnswerVector {
    let mut z = AnswerVector::uniform(lambda);
    let size = z.entries.len();
    for _ in 0..MAX_SWEEPS {
        let mut change = 0.0;
        for con in constraints {
            let want1 = (con.pattern & 1) as usize;
            let want2 = ((con.pattern >> 1) & 1) as usize;
            let mut sum = 0.0;
            for m in 0..size {
                if (m >> con.t1) & 1 == want1 && (m >> con.t2) & 1 == want2 {
                    sum += z.entries[m];
                }
            }
            if sum == 0.0 {
                continue;
            }
            let factor = con.target / sum;
            if factor == 1.0 {
                continue;
            }
            for m in 0..size {
                if (m >> con.t1) & 1 == want1 && (m >> con.t2) & 1 == want2 {
                    let new = z.entries[m] * factor;
                    change += (new - z.entries[m]).abs();
                    z.entries[m] = new;
                }
            }
        }
        if change < tol {
            break;
        }
    }
    z
}

/// Estimate a `lambda > 2` answer from its pairwise answers, given in
/// lexicographic order of attribute-position pairs. Returns the all-interval
/// entry of the converged weighted-update vector.
pub fn answer_lambda(pair_answers: &[f64], lambda: usize, tol: f64) -> Result<f64> {
    if lambda <= 2 {
        return Err(Error::InvalidParameter(
            "answer_lambda needs lambda > 2; use answer_2d".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = position_pairs(lambda);
    if pair_answers.len() != pairs.len() {
        return Err(Error::LengthMismatch(format!(
            "expected {} pair answers, got {}",
            pairs.len(),
            pair_answers.len()
        )));
    }
    let constraints: Vec<PairConstraint> = pairs
        .iter()
        .zip(pair_answers)
        .map(|(&(t1, t2), &target)| PairConstraint {
            t1,
            t2,
            pattern: 0,
            target,
        })
        .collect();
    Ok(weighted_update(lambda, &constraints, tol).entries[0])
}

fn position_pairs(lambda: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..lambda {
        for b in a + 1..lambda {
            out.push((a, b));
        }
    }
    out
}

/// Options shared by the grid pipelines.
#[derive(Debug, Clone, Copy)]
pub struct GridOptions {
    /// Override the guideline's granularities.
    pub granularity_override: Option<(u32, u32)>,
    /// Post-processing rounds.
    pub rounds: usize,
    /// Feed all interval/complement combinations of each pair into the
    /// weighted update (needs 1-D answers); off by default.
    pub alg2_full_constraints: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            granularity_override: None,
            rounds: 3,
            alg2_full_constraints: false,
        }
    }
}

/// Pairwise-grids pipeline: coarse 2-D grids, uniform within cells.
pub struct TdgModel {
    pub grids: GridSet,
    tol: f64,
    alg2_full_constraints: bool,
}

/// Hybrid pipeline: 1-D and 2-D grids combined through response matrices.
pub struct HdgModel {
    pub grids: GridSet,
    pub matrices: Vec<ResponseMatrix>,
    tol: f64,
    alg2_full_constraints: bool,
}

fn make_plan(
    dataset: &Dataset,
    epsilon: f64,
    mode: GridMode,
    options: &GridOptions,
) -> GranularityPlan {
    let mut plan = choose_granularities(
        dataset.n(),
        dataset.attributes(),
        epsilon,
        DEFAULT_ALPHA1,
        DEFAULT_ALPHA2,
        dataset.domain().size(),
        mode,
    );
    if let Some((g1, g2)) = options.granularity_override {
        plan.g1 = g1;
        plan.g2 = g2;
    }
    plan
}

impl TdgModel {
    /// Build, post-process, and return the model plus the report count.
    pub fn build(
        dataset: &Dataset,
        epsilon: f64,
        seed: u64,
        options: &GridOptions,
    ) -> Result<(Self, usize)> {
        let plan = make_plan(dataset, epsilon, GridMode::Tdg, options);
        Self::build_with_plan(dataset, &plan, epsilon, seed, options)
    }

    pub fn build_with_plan(
        dataset: &Dataset,
        plan: &GranularityPlan,
        epsilon: f64,
        seed: u64,
        options: &GridOptions,
    ) -> Result<(Self, usize)> {
        let (mut grids, reports) = build_grids(dataset, plan, epsilon, seed)?;
        full_postprocess(&mut grids, options.rounds);
        Ok((
            Self {
                grids,
                tol: scaling_tolerance(dataset.n()),
                alg2_full_constraints: options.alg2_full_constraints,
            },
            reports,
        ))
    }

    pub fn answer(&self, query: &RangeQuery) -> Result<f64> {
        answer_with_grids(&self.grids, None, query, self.tol, self.alg2_full_constraints)
    }

    /// Rehydrate from checkpointed grids; `n` is the population the grids
    /// were built from (sets the scaling tolerance).
    pub fn from_parts(grids: GridSet, n: usize, options: &GridOptions) -> Self {
        Self {
            grids,
            tol: scaling_tolerance(n),
            alg2_full_constraints: options.alg2_full_constraints,
        }
    }
}

impl HdgModel {
    pub fn build(
        dataset: &Dataset,
        epsilon: f64,
        seed: u64,
        options: &GridOptions,
    ) -> Result<(Self, usize)> {
        let plan = make_plan(dataset, epsilon, GridMode::Hdg, options);
        Self::build_with_plan(dataset, &plan, epsilon, seed, options)
    }

    pub fn build_with_plan(
        dataset: &Dataset,
        plan: &GranularityPlan,
        epsilon: f64,
        seed: u64,
        options: &GridOptions,
    ) -> Result<(Self, usize)> {
        let (mut grids, reports) = build_grids(dataset, plan, epsilon, seed)?;
        full_postprocess(&mut grids, options.rounds);
        let tol = scaling_tolerance(dataset.n());
        let matrices = build_all_matrices(&grids, tol)?;
        Ok((
            Self {
                grids,
                matrices,
                tol,
                alg2_full_constraints: options.alg2_full_constraints,
            },
            reports,
        ))
    }

    pub fn answer(&self, query: &RangeQuery) -> Result<f64> {
        answer_with_grids(
            &self.grids,
            Some(&self.matrices),
            query,
            self.tol,
            self.alg2_full_constraints,
        )
    }

    /// Rehydrate from checkpointed grids and matrices.
    pub fn from_parts(
        grids: GridSet,
        matrices: Vec<ResponseMatrix>,
        n: usize,
        options: &GridOptions,
    ) -> Self {
        Self {
            grids,
            matrices,
            tol: scaling_tolerance(n),
            alg2_full_constraints: options.alg2_full_constraints,
        }
    }
}

/// Response matrices for every attribute pair of a hybrid grid set, in
/// lexicographic pair order.
pub fn build_all_matrices(grids: &GridSet, tol: f64) -> Result<Vec<ResponseMatrix>> {
    use rayon::prelude::*;
    let pairs = attribute_pairs(grids.d);
    pairs
        .par_iter()
        .map(|&(j, k)| {
            build_response_matrix(
                &grids.grids_1d[j],
                &grids.grids_1d[k],
                grids.grid_2d(j, k),
                tol,
            )
        })
        .collect()
}

/// Shared answer dispatch over a (post-processed) grid set. `matrices` is
/// present for the hybrid pipeline and absent for the pairwise one.
pub fn answer_with_grids(
    grids: &GridSet,
    matrices: Option<&[ResponseMatrix]>,
    query: &RangeQuery,
    tol: f64,
    full_constraints: bool,
) -> Result<f64> {
    let d = grids.d;
    for p in query.predicates() {
        if p.attribute >= d {
            return Err(Error::InvalidParameter(format!(
                "query attribute {} out of range (d = {d})",
                p.attribute + 1
            )));
        }
        if p.interval.hi > grids.c {
            return Err(Error::InvalidParameter(format!(
                "query interval exceeds domain [1, {}]",
                grids.c
            )));
        }
    }
    match query.predicates() {
        [single] => Ok(answer_single(grids, matrices, single.attribute, single.interval)),
        [a, b] => Ok(answer_pair(
            grids,
            matrices,
            (a.attribute, a.interval),
            (b.attribute, b.interval),
        )),
        preds => {
            let lambda = preds.len();
            let mut plain = Vec::new();
            let mut constraints = Vec::new();
            for (t1, p1) in preds.iter().enumerate() {
                for (t2, p2) in preds.iter().enumerate().skip(t1 + 1) {
                    let f_jk = answer_pair(
                        grids,
                        matrices,
                        (p1.attribute, p1.interval),
                        (p2.attribute, p2.interval),
                    )
                    .clamp(0.0, 1.0);
                    plain.push(f_jk);
                    if full_constraints {
                        let f_j =
                            answer_single(grids, matrices, p1.attribute, p1.interval).clamp(0.0, 1.0);
                        let f_k =
                            answer_single(grids, matrices, p2.attribute, p2.interval).clamp(0.0, 1.0);
                        constraints.extend_from_slice(&[
                            PairConstraint { t1, t2, pattern: 0b00, target: f_jk },
                            PairConstraint {
                                t1,
                                t2,
                                pattern: 0b01,
                                target: (f_k - f_jk).clamp(0.0, 1.0),
                            },
                            PairConstraint {
                                t1,
                                t2,
                                pattern: 0b10,
                                target: (f_j - f_jk).clamp(0.0, 1.0),
                            },
                            PairConstraint {
                                t1,
                                t2,
                                pattern: 0b11,
                                target: (1.0 - f_j - f_k + f_jk).clamp(0.0, 1.0),
                            },
                        ]);
                    }
                }
            }
            if full_constraints {
                Ok(weighted_update(lambda, &constraints, tol).entries[0])
            } else {
                answer_lambda(&plain, lambda, tol)
            }
        }
    }
}

/// 1-D answer: the hybrid pipeline reads its (finest) 1-D grid; the pairwise
/// pipeline widens to the lowest-index pair with the partner at full domain.
fn answer_single(
    grids: &GridSet,
    matrices: Option<&[ResponseMatrix]>,
    attribute: usize,
    interval: Interval,
) -> f64 {
    if let Some(g1) = grids.grids_1d.iter().find(|g| g.attribute == attribute) {
        return answer_1d(g1, interval);
    }
    let partner = if attribute == 0 { 1 } else { 0 };
    let full = Interval { lo: 1, hi: grids.c };
    answer_pair(grids, matrices, (attribute, interval), (partner, full))
}

fn answer_pair(
    grids: &GridSet,
    matrices: Option<&[ResponseMatrix]>,
    a: (usize, Interval),
    b: (usize, Interval),
) -> f64 {
    let ((j, rows), (k, cols)) = if a.0 < b.0 { (a, b) } else { (b, a) };
    let grid = grids.grid_2d(j, k);
    let mode = match matrices {
        Some(ms) => PartialCellMode::Matrix(&ms[grids.pair_index(j, k)]),
        None => PartialCellMode::Uniform,
    };
    answer_2d(grid, rows, cols, mode)
}
