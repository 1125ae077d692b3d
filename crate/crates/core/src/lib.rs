//! Answering multi-dimensional range queries under local differential
//! privacy.
//!
//! The pipeline: local frequency oracles collect cell frequencies of 1-D and
//! 2-D grids from disjoint user groups ([`grids`]), post-processing removes
//! negativity and cross-grid inconsistency ([`postprocess`]), and query
//! answering combines grids through response matrices and weighted-update
//! estimation ([`estimate`]). [`baselines`] holds the comparison approaches
//! and [`harness`] the benchmark protocol around them.

pub mod baselines;
pub mod data;
pub mod error;
pub mod estimate;
pub mod freq_oracle;
pub mod grids;
pub mod harness;
pub mod postprocess;
pub mod seed;

pub use data::{
    generate_queries, generate_synthetic, ingest_csv, ingest_csv_path, parse_predicate,
    true_answer, Dataset, Interval, OrdinalDomain, Predicate, QueryWorkload, RangeQuery, Record,
    SyntheticDist,
};
pub use error::{Error, Result};
pub use estimate::{
    answer_2d, answer_lambda, build_response_matrix, AnswerVector, GridOptions, HdgModel,
    PartialCellMode, ResponseMatrix, TdgModel,
};
pub use freq_oracle::{
    grr_aggregate, grr_perturb, grr_variance, olh_aggregate, olh_perturb, olh_variance,
    predicted_squared_error, sw_em_reconstruct, sw_perturb, FrequencyEstimate, GrrParams,
    OlhParams, OlhReport, SwParams,
};
pub use grids::{
    assign_groups, build_grids, cell_index_1d, choose_granularities, GranularityPlan, Grid1D,
    Grid2D, GridMode, GridSet, GroupAssignment,
};
pub use harness::{
    emit, load_dataset, mae, run_experiment, Approach, CellResult, DatasetSpec, EmitFormat,
    ExperimentConfig, ExperimentResult,
};
pub use postprocess::{attribute_consistency, consistency_residual, full_postprocess, norm_sub};
