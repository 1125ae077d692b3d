//! Experiment harness: configuration, deterministic execution of the
//! evaluation protocol, MAE computation, and machine-readable results.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{uni_answer, CalmModel, HioModel, LhioModel, MswModel, DEFAULT_BRANCHING};
use crate::data::{
    generate_queries, generate_synthetic, ingest_csv_path, true_answer, Dataset, QueryWorkload,
    SyntheticDist,
};
use crate::error::{Error, Result};
use crate::estimate::{GridOptions, HdgModel, TdgModel};
use crate::seed::derive_seed;

/// Where the experiment's records come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    /// Equicorrelated synthetic records.
    Synthetic {
        dist: SyntheticDist,
        n: usize,
        d: usize,
        c: u32,
        covariance: f64,
    },
    /// Raw numeric CSV, min-max scaled and binned into `[1, c]`.
    Csv { path: String, c: u32 },
    /// Pre-binned records (header row, comma-separated integers in `[1, c]`).
    Records { path: String, c: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Hdg,
    Tdg,
    Calm,
    Hio,
    Lhio,
    Msw,
    Uni,
}

impl Approach {
    pub const ALL: [Approach; 7] = [
        Approach::Hdg,
        Approach::Tdg,
        Approach::Calm,
        Approach::Hio,
        Approach::Lhio,
        Approach::Msw,
        Approach::Uni,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Approach::Hdg => "hdg",
            Approach::Tdg => "tdg",
            Approach::Calm => "calm",
            Approach::Hio => "hio",
            Approach::Lhio => "lhio",
            Approach::Msw => "msw",
            Approach::Uni => "uni",
        }
    }

    /// Stable id used in seed derivation.
    fn id(&self) -> u64 {
        match self {
            Approach::Hdg => 1,
            Approach::Tdg => 2,
            Approach::Calm => 3,
            Approach::Hio => 4,
            Approach::Lhio => 5,
            Approach::Msw => 6,
            Approach::Uni => 7,
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("unknown approach {s:?}")))
    }
}

fn default_rounds() -> usize {
    3
}

fn default_branching() -> u32 {
    DEFAULT_BRANCHING
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub approaches: Vec<Approach>,
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<usize>,
    pub omega: f64,
    pub query_count: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Override the guideline's `(g1, g2)`.
    #[serde(default)]
    pub granularity_override: Option<(u32, u32)>,
    #[serde(default)]
    pub alg2_full_constraints: bool,
    #[serde(default = "default_rounds")]
    pub postprocess_rounds: usize,
    /// Branching factor for the hierarchy baselines.
    #[serde(default = "default_branching")]
    pub branching: u32,
    /// Results are also written here when set.
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::InvalidParameter("repeats must be >= 1".into()));
        }
        if self.epsilons.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        if self.approaches.is_empty() || self.lambdas.is_empty() || self.epsilons.is_empty() {
            return Err(Error::InvalidParameter(
                "approaches, lambdas, and epsilons must be non-empty".into(),
            ));
        }
        Ok(())
    }

    fn grid_options(&self) -> GridOptions {
        GridOptions {
            granularity_override: self.granularity_override,
            rounds: self.postprocess_rounds,
            alg2_full_constraints: self.alg2_full_constraints,
        }
    }
}

/// MAE samples for one (approach, lambda, epsilon) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub approach: Approach,
    pub lambda: usize,
    pub epsilon: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    /// Per-repeat MAE samples, in repeat order.
    pub maes: Vec<f64>,
    /// Wall-clock seconds spent answering this cell, summed over repeats.
    pub answer_seconds: f64,
}

/// Build timing for one (approach, epsilon), summed over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildTiming {
    pub approach: Approach,
    pub epsilon: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub n: usize,
    pub d: usize,
    pub c: u32,
    pub repeats: usize,
    pub seed: u64,
    pub cells: Vec<CellResult>,
    pub build_times: Vec<BuildTiming>,
    /// Reports collected per (approach, epsilon, repeat); the harness checks
    /// each equals `n` (one report per user).
    pub reports_per_build: usize,
}

/// Mean absolute error between matched estimate/truth slices.
pub fn mae(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimates vs {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("mae over empty slices".into()));
    }
    let sum: f64 = estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| (e - t).abs())
        .sum();
    Ok(sum / estimates.len() as f64)
}

/// Materialize the dataset for a config (deterministic for synthetic specs).
pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    match spec {
        DatasetSpec::Synthetic {
            dist,
            n,
            d,
            c,
            covariance,
        } => generate_synthetic(*dist, *n, *d, *c, *covariance, derive_seed(&[seed, 0xDA7A])),
        DatasetSpec::Csv { path, c } => ingest_csv_path(path, *c),
        DatasetSpec::Records { path, c } => Dataset::read_records_path(path, *c),
    }
}

/// A built model ready to answer queries.
enum Model {
    Hdg(HdgModel),
    Tdg(TdgModel),
    Calm(CalmModel),
    Hio(HioModel),
    Lhio(LhioModel),
    Msw(MswModel),
    Uni,
}

impl Model {
    fn answer(&self, query: &crate::data::RangeQuery, c: u32) -> Result<f64> {
        match self {
            Model::Hdg(m) => m.answer(query),
            Model::Tdg(m) => m.answer(query),
            Model::Calm(m) => m.answer(query),
            Model::Hio(m) => m.answer(query),
            Model::Lhio(m) => m.answer(query),
            Model::Msw(m) => m.answer(query),
            Model::Uni => Ok(uni_answer(query, c)),
        }
    }
}

/// Build one approach's model from approach-scoped report randomness.
fn build_model(
    approach: Approach,
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<(Model, usize)> {
    let options = config.grid_options();
    match approach {
        Approach::Hdg => {
            let (m, r) = HdgModel::build(dataset, epsilon, seed, &options)?;
            Ok((Model::Hdg(m), r))
        }
        Approach::Tdg => {
            let (m, r) = TdgModel::build(dataset, epsilon, seed, &options)?;
            Ok((Model::Tdg(m), r))
        }
        Approach::Calm => {
            let (m, r) = CalmModel::build(dataset, epsilon, seed, &options)?;
            Ok((Model::Calm(m), r))
        }
        Approach::Hio => {
            let (m, r) = HioModel::build(dataset, epsilon, config.branching, seed)?;
            Ok((Model::Hio(m), r))
        }
        Approach::Lhio => {
            let (m, r) = LhioModel::build(
                dataset,
                epsilon,
                config.branching,
                seed,
                config.postprocess_rounds,
            )?;
            Ok((Model::Lhio(m), r))
        }
        Approach::Msw => {
            let (m, r) = MswModel::build(dataset, epsilon, seed)?;
            Ok((Model::Msw(m), r))
        }
        Approach::Uni => Ok((Model::Uni, dataset.n())),
    }
}

struct RepeatOutput {
    /// `maes[approach][lambda][epsilon]`.
    maes: Vec<Vec<Vec<f64>>>,
    answer_secs: Vec<Vec<Vec<f64>>>,
    build_secs: Vec<Vec<f64>>,
}

/// Run the full protocol: for each repeat, draw a fresh workload per query
/// dimension, rebuild every approach per epsilon from approach-scoped report
/// randomness, answer the shared workloads, and aggregate MAE across
/// repeats. Deterministic end-to-end for a fixed config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset, config.seed)?;
    let d = dataset.attributes();
    let c = dataset.domain().size();
    for &lambda in &config.lambdas {
        if lambda < 1 || lambda > d {
            return Err(Error::InvalidParameter(format!(
                "lambda {lambda} outside [1, {d}]"
            )));
        }
    }

    use rayon::prelude::*;
    let repeat_outputs: Vec<Result<RepeatOutput>> = (0..config.repeats)
        .into_par_iter()
        .map(|repeat| run_repeat(config, &dataset, repeat))
        .collect();

    let mut per_repeat = Vec::with_capacity(config.repeats);
    for out in repeat_outputs {
        per_repeat.push(out?);
    }

    let mut cells = Vec::new();
    let mut build_times = Vec::new();
    for (ai, &approach) in config.approaches.iter().enumerate() {
        for (li, &lambda) in config.lambdas.iter().enumerate() {
            for (ei, &epsilon) in config.epsilons.iter().enumerate() {
                let maes: Vec<f64> = per_repeat.iter().map(|r| r.maes[ai][li][ei]).collect();
                let answer_seconds: f64 =
                    per_repeat.iter().map(|r| r.answer_secs[ai][li][ei]).sum();
                let mean = maes.iter().sum::<f64>() / maes.len() as f64;
                let var = if maes.len() > 1 {
                    maes.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
                        / (maes.len() - 1) as f64
                } else {
                    0.0
                };
                cells.push(CellResult {
                    approach,
                    lambda,
                    epsilon,
                    mae_mean: mean,
                    mae_std: var.sqrt(),
                    maes,
                    answer_seconds,
                });
            }
        }
        for (ei, &epsilon) in config.epsilons.iter().enumerate() {
            build_times.push(BuildTiming {
                approach,
                epsilon,
                seconds: per_repeat.iter().map(|r| r.build_secs[ai][ei]).sum(),
            });
        }
    }
    Ok(ExperimentResult {
        n: dataset.n(),
        d,
        c,
        repeats: config.repeats,
        seed: config.seed,
        cells,
        build_times,
        reports_per_build: dataset.n(),
    })
}

fn run_repeat(config: &ExperimentConfig, dataset: &Dataset, repeat: usize) -> Result<RepeatOutput> {
    let d = dataset.attributes();
    let c = dataset.domain().size();
    let repeat_seed = config.seed.wrapping_add(repeat as u64);

    // Shared workloads: identical queries for every approach in this repeat.
    let mut workloads: Vec<(QueryWorkload, Vec<f64>)> = Vec::with_capacity(config.lambdas.len());
    for &lambda in &config.lambdas {
        let wl = generate_queries(
            d,
            c,
            lambda,
            config.omega,
            config.query_count,
            derive_seed(&[repeat_seed, 0x574C, lambda as u64]),
        )?;
        let truths: Vec<f64> = wl.queries.iter().map(|q| true_answer(dataset, q)).collect();
        workloads.push((wl, truths));
    }

    let mut maes = vec![vec![vec![0.0; config.epsilons.len()]; config.lambdas.len()];
        config.approaches.len()];
    let mut answer_secs = maes.clone();
    let mut build_secs = vec![vec![0.0; config.epsilons.len()]; config.approaches.len()];

    for (ai, &approach) in config.approaches.iter().enumerate() {
        for (ei, &epsilon) in config.epsilons.iter().enumerate() {
            let approach_seed =
                derive_seed(&[repeat_seed, approach.id(), epsilon.to_bits(), 0x4250]);
            let t0 = Instant::now();
            let (model, reports) = build_model(approach, dataset, epsilon, approach_seed, config)
                .map_err(|e| {
                    e.with_context(format!(
                        "{} build (repeat {repeat}, epsilon {epsilon})",
                        approach.name()
                    ))
                })?;
            build_secs[ai][ei] += t0.elapsed().as_secs_f64();
            // One perturbed report per user, no exceptions.
            if reports != dataset.n() {
                return Err(Error::InvalidParameter(format!(
                    "{} emitted {reports} reports for {} users",
                    approach.name(),
                    dataset.n()
                )));
            }
            for (li, (wl, truths)) in workloads.iter().enumerate() {
                let t1 = Instant::now();
                let estimates: Vec<f64> = wl
                    .queries
                    .iter()
                    .map(|q| model.answer(q, c))
                    .collect::<Result<_>>()
                    .map_err(|e| {
                        e.with_context(format!("{} answer (repeat {repeat})", approach.name()))
                    })?;
                answer_secs[ai][li][ei] += t1.elapsed().as_secs_f64();
                maes[ai][li][ei] = mae(&estimates, truths)?;
            }
        }
    }
    Ok(RepeatOutput {
        maes,
        answer_secs,
        build_secs,
    })
}

/// Output format for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Json,
    Csv,
}

impl std::str::FromStr for EmitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(EmitFormat::Json),
            "csv" => Ok(EmitFormat::Csv),
            other => Err(Error::InvalidParameter(format!(
                "unknown format {other:?} (expected json or csv)"
            ))),
        }
    }
}

/// Serialize a result with stable field and row ordering.
pub fn emit<W: Write>(result: &ExperimentResult, format: EmitFormat, mut w: W) -> Result<()> {
    match format {
        EmitFormat::Json => {
            serde_json::to_writer_pretty(&mut w, result)?;
            writeln!(w)?;
        }
        EmitFormat::Csv => {
            writeln!(
                w,
                "approach,lambda,epsilon,mae_mean,mae_std,answer_seconds"
            )?;
            for cell in &result.cells {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    cell.approach.name(),
                    cell.lambda,
                    cell.epsilon,
                    cell.mae_mean,
                    cell.mae_std,
                    cell.answer_seconds
                )?;
            }
        }
    }
    Ok(())
}
