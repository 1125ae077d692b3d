//! `ldp-range`: generate datasets, run benchmark experiments, answer ad-hoc
//! queries against cached grids, and render result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ldp_range_core::baselines::{uni_answer, CalmModel, HioModel, LhioModel, MswModel};
use ldp_range_core::harness::{emit, EmitFormat};
use ldp_range_core::{
    generate_synthetic, ingest_csv_path, parse_predicate, run_experiment, true_answer, Approach,
    Dataset, ExperimentConfig, ExperimentResult, GridOptions, GridSet, HdgModel, RangeQuery,
    ResponseMatrix, SyntheticDist, TdgModel,
};

#[derive(Parser)]
#[command(
    name = "ldp-range",
    version,
    about = "Multi-dimensional range queries under local differential privacy"
)]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as a record file.
    Synth {
        /// Marginal distribution: normal or laplace.
        #[arg(long, default_value = "normal")]
        dist: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// Attribute domain size (power of two).
        #[arg(long)]
        c: u32,
        /// Pairwise covariance in [0, 1].
        #[arg(long, default_value_t = 0.8)]
        covariance: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write results here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// json or csv.
        #[arg(long, default_value = "json")]
        format: String,
    },

    /// Answer one ad-hoc range query, optionally against cached grids.
    Answer {
        /// Record file (header row, comma-separated integers in [1, c]).
        #[arg(long)]
        dataset: PathBuf,
        /// Treat --dataset as raw numeric CSV and bin it into [1, c].
        #[arg(long)]
        ingest: bool,
        #[arg(long)]
        c: u32,
        /// hdg, tdg, calm, hio, lhio, msw, or uni.
        #[arg(long, default_value = "hdg")]
        approach: String,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Query as `attr:lo-hi` predicates joined by ';', attributes
        /// 1-based, e.g. "1:5-10;3:1-32".
        #[arg(long)]
        query: String,
        /// Grid cache path: loaded when present, written after a build
        /// (hdg/tdg/calm only).
        #[arg(long)]
        grids: Option<PathBuf>,
        /// Override the granularity guideline.
        #[arg(long)]
        g1: Option<u32>,
        #[arg(long)]
        g2: Option<u32>,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        /// Branching factor for hio/lhio.
        #[arg(long, default_value_t = 4)]
        branching: u32,
        /// Use all interval/complement constraints when combining pairwise
        /// answers for queries over more than two attributes.
        #[arg(long)]
        full_constraints: bool,
    },

    /// Render a results JSON file as an aligned table or CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// table or csv.
        #[arg(long, default_value = "table")]
        format: String,
    },
}

/// Checkpointed grids for `answer --grids`.
#[derive(Serialize, Deserialize)]
struct GridCache {
    approach: Approach,
    epsilon: f64,
    seed: u64,
    n: usize,
    grids: GridSet,
    matrices: Vec<ResponseMatrix>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("building thread pool")?;
    }
    match cli.command {
        Command::Synth {
            dist,
            n,
            d,
            c,
            covariance,
            seed,
            out,
        } => synth(&dist, n, d, c, covariance, seed, out.as_deref()),
        Command::Run {
            config,
            out,
            format,
        } => run(&config, out.as_deref(), &format),
        Command::Answer {
            dataset,
            ingest,
            c,
            approach,
            epsilon,
            seed,
            query,
            grids,
            g1,
            g2,
            rounds,
            branching,
            full_constraints,
        } => answer(AnswerArgs {
            dataset,
            ingest,
            c,
            approach,
            epsilon,
            seed,
            query,
            grids,
            g1,
            g2,
            rounds,
            branching,
            full_constraints,
        }),
        Command::Report { results, format } => render_report(&results, &format),
    }
}

fn synth(
    dist: &str,
    n: usize,
    d: usize,
    c: u32,
    covariance: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let dist = match dist.to_ascii_lowercase().as_str() {
        "normal" => SyntheticDist::Normal,
        "laplace" => SyntheticDist::Laplace,
        other => bail!("unknown distribution {other:?} (expected normal or laplace)"),
    };
    let dataset = generate_synthetic(dist, n, d, c, covariance, seed)?;
    match out {
        Some(path) => {
            let file = File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            dataset.write_records(BufWriter::new(file))?;
            eprintln!("wrote {} records to {}", dataset.n(), path.display());
        }
        None => dataset.write_records(std::io::stdout().lock())?,
    }
    Ok(())
}

fn run(config_path: &Path, out: Option<&Path>, format: &str) -> Result<()> {
    let format: EmitFormat = format.parse()?;
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&text).context("parsing config")?;
    let result = run_experiment(&config)?;
    let target = out
        .map(Path::to_path_buf)
        .or_else(|| config.output.as_ref().map(PathBuf::from));
    match target {
        Some(path) => {
            let file = File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            emit(&result, format, BufWriter::new(file))?;
            eprintln!("results written to {}", path.display());
        }
        None => emit(&result, format, std::io::stdout().lock())?,
    }
    Ok(())
}

struct AnswerArgs {
    dataset: PathBuf,
    ingest: bool,
    c: u32,
    approach: String,
    epsilon: f64,
    seed: u64,
    query: String,
    grids: Option<PathBuf>,
    g1: Option<u32>,
    g2: Option<u32>,
    rounds: usize,
    branching: u32,
    full_constraints: bool,
}

fn answer(args: AnswerArgs) -> Result<()> {
    let approach: Approach = args.approach.parse()?;
    let dataset = if args.ingest {
        ingest_csv_path(&args.dataset, args.c)?
    } else {
        Dataset::read_records_path(&args.dataset, args.c)?
    };
    let query = parse_query(&args.query)?;
    let options = GridOptions {
        granularity_override: match (args.g1, args.g2) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => bail!("--g1 and --g2 must be given together"),
        },
        rounds: args.rounds,
        alg2_full_constraints: args.full_constraints,
    };

    if args.grids.is_some() && !matches!(approach, Approach::Hdg | Approach::Tdg | Approach::Calm)
    {
        bail!("--grids caching is only available for hdg, tdg, and calm");
    }

    let estimate = match approach {
        Approach::Hdg | Approach::Tdg | Approach::Calm => {
            answer_grid_approach(approach, &dataset, &args, &options, &query)?
        }
        Approach::Hio => {
            let (model, _) = HioModel::build(&dataset, args.epsilon, args.branching, args.seed)?;
            model.answer(&query)?
        }
        Approach::Lhio => {
            let (model, _) = LhioModel::build(
                &dataset,
                args.epsilon,
                args.branching,
                args.seed,
                args.rounds,
            )?;
            model.answer(&query)?
        }
        Approach::Msw => {
            let (model, _) = MswModel::build(&dataset, args.epsilon, args.seed)?;
            model.answer(&query)?
        }
        Approach::Uni => uni_answer(&query, dataset.domain().size()),
    };

    let truth = true_answer(&dataset, &query);
    let out = serde_json::json!({
        "approach": approach.name(),
        "epsilon": args.epsilon,
        "query": args.query,
        "estimate": estimate,
        "truth": truth,
        "abs_error": (estimate - truth).abs(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn answer_grid_approach(
    approach: Approach,
    dataset: &Dataset,
    args: &AnswerArgs,
    options: &GridOptions,
    query: &RangeQuery,
) -> Result<f64> {
    // Reuse a compatible cache when present; otherwise build and checkpoint.
    if let Some(path) = args.grids.as_ref().filter(|p| p.exists()) {
        let cache: GridCache = serde_json::from_reader(
            File::open(path).with_context(|| format!("opening {}", path.display()))?,
        )?;
        if cache.approach != approach
            || cache.epsilon != args.epsilon
            || cache.seed != args.seed
            || cache.n != dataset.n()
        {
            bail!(
                "grid cache {} was built for {}, epsilon {}, seed {}, n {}",
                path.display(),
                cache.approach.name(),
                cache.epsilon,
                cache.seed,
                cache.n
            );
        }
        eprintln!("answering from cached grids in {}", path.display());
        return match approach {
            Approach::Hdg => {
                HdgModel::from_parts(cache.grids, cache.matrices, cache.n, options).answer(query)
            }
            Approach::Tdg => TdgModel::from_parts(cache.grids, cache.n, options).answer(query),
            Approach::Calm => CalmModel::from_parts(cache.grids, cache.n, options).answer(query),
            _ => unreachable!("cache gate"),
        }
        .map_err(Into::into);
    }

    let (estimate, cache) = match approach {
        Approach::Hdg => {
            let (model, _) = HdgModel::build(dataset, args.epsilon, args.seed, options)?;
            let est = model.answer(query)?;
            (est, (model.grids, model.matrices))
        }
        Approach::Tdg => {
            let (model, _) = TdgModel::build(dataset, args.epsilon, args.seed, options)?;
            let est = model.answer(query)?;
            (est, (model.grids, Vec::new()))
        }
        Approach::Calm => {
            let (model, _) = CalmModel::build(dataset, args.epsilon, args.seed, options)?;
            let est = model.answer(query)?;
            let grids = model.tables().clone();
            (est, (grids, Vec::new()))
        }
        _ => unreachable!("cache gate"),
    };
    if let Some(path) = &args.grids {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer(
            BufWriter::new(file),
            &GridCache {
                approach,
                epsilon: args.epsilon,
                seed: args.seed,
                n: dataset.n(),
                grids: cache.0,
                matrices: cache.1,
            },
        )?;
        eprintln!("grids checkpointed to {}", path.display());
    }
    Ok(estimate)
}

fn parse_query(text: &str) -> Result<RangeQuery> {
    let predicates = text
        .split(';')
        .map(|part| parse_predicate(part.trim()).map_err(Into::into))
        .collect::<Result<Vec<_>>>()?;
    RangeQuery::new(predicates).map_err(Into::into)
}

fn render_report(path: &Path, format: &str) -> Result<()> {
    let result: ExperimentResult = serde_json::from_reader(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    )?;
    match format {
        "csv" => emit(&result, EmitFormat::Csv, std::io::stdout().lock())?,
        "table" => {
            let mut out = std::io::stdout().lock();
            writeln!(
                out,
                "n = {}, d = {}, c = {}, repeats = {}, seed = {}",
                result.n, result.d, result.c, result.repeats, result.seed
            )?;
            writeln!(
                out,
                "{:<8} {:>6} {:>8} {:>12} {:>12} {:>10}",
                "approach", "lambda", "epsilon", "mae_mean", "mae_std", "answer_s"
            )?;
            for cell in &result.cells {
                writeln!(
                    out,
                    "{:<8} {:>6} {:>8} {:>12.6} {:>12.6} {:>10.3}",
                    cell.approach.name(),
                    cell.lambda,
                    cell.epsilon,
                    cell.mae_mean,
                    cell.mae_std,
                    cell.answer_seconds
                )?;
            }
        }
        other => bail!("unknown report format {other:?} (expected table or csv)"),
    }
    Ok(())
}
