//! The `sskm` command line tool.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench;
use crate::corpus::{self, CorpusMatrix};
use crate::engine::{self, IterationStats, Mode, RunConfig, StopReason};
use crate::error::Error;
use crate::pruneindex::DEFAULT_LAMBDAS;
use crate::synth::{self, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "sskm", version, about = "Sparse spherical k-means")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a JSON Lines corpus into unit TF-IDF vectors.
    Vectorize(VectorizeArgs),
    /// Cluster a vectorized corpus.
    Cluster(ClusterArgs),
    /// Time every mode × k combination and write a CSV table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct VectorizeArgs {
    /// JSON Lines input with string fields "id" and "text".
    #[arg(long)]
    pub input: PathBuf,
    /// Matrix output; `.ids`, `.vocab` and `.dropped` sidecars go next to it.
    #[arg(long)]
    pub output: PathBuf,
    /// Stop-word list, one term per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Drop terms occurring in more than this fraction of documents.
    #[arg(long, default_value_t = corpus::DEFAULT_MAX_DF)]
    pub max_df: f64,
}

#[derive(Debug, Args, Clone)]
pub struct EngineArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ascending thresholds for the pruning index.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDAS)]
    pub lambdas: Vec<f64>,
    /// Stop once every centroid moves less than this squared distance.
    #[arg(long, default_value_t = engine::DEFAULT_CONV_SQ_DIST)]
    pub conv: f64,
    /// Squared distance under which a centroid counts as unchanged.
    #[arg(long, default_value_t = 0.0)]
    pub ncc_eps: f64,
    /// Use the index only when more centroids than this changed.
    #[arg(long, default_value_t = engine::DEFAULT_INDEX_ACTIVATION)]
    pub index_activation: usize,
    #[arg(long, default_value_t = engine::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "SSKM_THREADS")]
    pub threads: Option<usize>,
}

impl EngineArgs {
    fn config(&self, k: usize, mode: Mode) -> RunConfig {
        RunConfig {
            k,
            mode,
            lambdas: self.lambdas.clone(),
            conv_sq_dist: self.conv,
            ncc_epsilon: self.ncc_eps,
            index_activation_threshold: self.index_activation,
            max_iters: self.max_iters,
            seed: self.seed,
            threads: self.threads,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Matrix written by `sskm vectorize`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// baseline, ncc or ncc+index.
    #[arg(long, default_value = "ncc+index")]
    pub mode: Mode,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Output with one `doc_id<TAB>cluster_id` line per document.
    #[arg(long)]
    pub out_assignments: PathBuf,
    /// JSON run report.
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Matrix written by `sskm vectorize`.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Generate a Zipf corpus instead: N,V,avg_nnz,zipf_s,seed.
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 500])]
    pub k_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = Mode::ALL)]
    pub modes: Vec<Mode>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Vectorize(args) => cmd_vectorize(&args),
        Command::Cluster(args) => cmd_cluster(&args),
        Command::Bench(args) => cmd_bench(&args),
    }
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(ext);
    PathBuf::from(p)
}

#[derive(Debug, Serialize)]
pub struct VectorizeSummary {
    pub n_input: usize,
    pub n_docs: usize,
    pub dims: usize,
    pub avg_nnz: f64,
    pub dropped: Vec<String>,
}

pub fn cmd_vectorize(args: &VectorizeArgs) -> Result<(), CliError> {
    if !(args.max_df > 0.0 && args.max_df <= 1.0) {
        return Err(CliError::Usage(format!(
            "--max-df {} must lie in (0, 1]",
            args.max_df
        )));
    }
    let docs = corpus::load_jsonl(&args.input)?;
    if docs.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    let stop_words = match &args.stopwords {
        Some(p) => corpus::load_stop_words(p)?,
        None => HashSet::new(),
    };
    let out = corpus::vectorize_corpus(&docs, &stop_words, args.max_df)?;
    corpus::write_matrix(&args.output, &out.matrix)?;
    out.vocabulary.write(&sidecar(&args.output, ".vocab"))?;
    let dropped_path = sidecar(&args.output, ".dropped");
    write_lines(&dropped_path, out.dropped.iter())?;

    let summary = VectorizeSummary {
        n_input: docs.len(),
        n_docs: out.matrix.len(),
        dims: out.matrix.dims,
        avg_nnz: out.matrix.nnz() as f64 / out.matrix.len().max(1) as f64,
        dropped: out.dropped,
    };
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    Ok(())
}

fn write_lines<'a>(path: &Path, lines: impl Iterator<Item = &'a String>) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn read_dropped(matrix_path: &Path) -> Result<Vec<String>, CliError> {
    let path = sidecar(matrix_path, ".dropped");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(&path).map_err(io_err(&path))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err(&path))
}

#[derive(Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_reassigned: usize,
    pub n_unchanged_centroids: usize,
    pub n_repaired_clusters: usize,
    pub index_active: bool,
    pub dot_products: u64,
    pub index_queries: u64,
    pub candidates_total: u64,
    pub max_drift: f64,
    pub objective: f64,
    pub wall_seconds: f64,
    pub index_build_seconds: f64,
}

impl From<&IterationStats> for IterationRecord {
    fn from(s: &IterationStats) -> Self {
        Self {
            iteration: s.iteration,
            n_reassigned: s.n_reassigned,
            n_unchanged_centroids: s.n_unchanged_centroids,
            n_repaired_clusters: s.n_repaired_clusters,
            index_active: s.index_active,
            dot_products: s.dot_products,
            index_queries: s.index_queries,
            candidates_total: s.candidates_total,
            max_drift: s.max_drift,
            objective: s.objective,
            wall_seconds: s.wall_time.as_secs_f64(),
            index_build_seconds: s.index_build_time.as_secs_f64(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Totals {
    pub iterations: usize,
    pub wall_seconds: f64,
    pub index_build_seconds: f64,
    pub dot_products: u64,
    pub index_queries: u64,
    pub candidates_total: u64,
}

/// JSON report written by `sskm cluster`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub input: PathBuf,
    pub n_docs: usize,
    pub dims: usize,
    pub config: RunConfig,
    pub iterations: Vec<IterationRecord>,
    pub totals: Totals,
    pub objective: f64,
    pub stop_reason: StopReason,
    pub dropped_ids: Vec<String>,
    pub cluster_sizes: Vec<usize>,
}

impl RunReport {
    pub fn new(
        input: &Path,
        matrix: &CorpusMatrix,
        config: &RunConfig,
        result: &engine::RunResult,
        dropped_ids: Vec<String>,
    ) -> Self {
        let iterations: Vec<IterationRecord> = result.iterations.iter().map(Into::into).collect();
        let totals = Totals {
            iterations: iterations.len(),
            wall_seconds: iterations.iter().map(|r| r.wall_seconds).sum(),
            index_build_seconds: iterations.iter().map(|r| r.index_build_seconds).sum(),
            dot_products: iterations.iter().map(|r| r.dot_products).sum(),
            index_queries: iterations.iter().map(|r| r.index_queries).sum(),
            candidates_total: iterations.iter().map(|r| r.candidates_total).sum(),
        };
        Self {
            input: input.to_path_buf(),
            n_docs: matrix.len(),
            dims: matrix.dims,
            config: config.clone(),
            iterations,
            totals,
            objective: result.objective,
            stop_reason: result.stop_reason,
            dropped_ids,
            cluster_sizes: result.cluster_sizes(),
        }
    }
}

fn validated(config: RunConfig, n_docs: usize) -> Result<RunConfig, CliError> {
    config
        .validate(n_docs)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<(), CliError> {
    let matrix = corpus::load_matrix(&args.input)?;
    let config = validated(args.engine.config(args.k, args.mode), matrix.len())?;
    let result = engine::run(&matrix.vectors, &config)?;

    let path = &args.out_assignments;
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for (id, cluster) in matrix.doc_ids.iter().zip(&result.assignments) {
        writeln!(out, "{id}\t{cluster}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;

    let report = RunReport::new(
        &args.input,
        &matrix,
        &config,
        &result,
        read_dropped(&args.input)?,
    );
    let path = &args.out_report;
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &report)
        .map_err(|e| io_err(path)(std::io::Error::other(e)))?;
    writeln!(out).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let matrix = match (&args.input, &args.synthetic) {
        (Some(p), None) => corpus::load_matrix(p)?,
        (None, Some(spec)) => synth::generate(spec).map_err(|e| match e {
            Error::InvalidParameter(m) => CliError::Usage(m),
            other => other.into(),
        })?,
        _ => {
            return Err(CliError::Usage(
                "exactly one of --input and --synthetic is required".into(),
            ))
        }
    };
    if args.k_list.is_empty() || args.modes.is_empty() {
        return Err(CliError::Usage("--k-list and --modes must be nonempty".into()));
    }
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    for &k in &args.k_list {
        validated(args.engine.config(k, Mode::Baseline), matrix.len())?;
    }
    let base = args.engine.config(args.k_list[0], Mode::Baseline);
    let cells = bench::run_matrix(&matrix.vectors, &args.modes, &args.k_list, args.repeats, &base)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(io_err(path))?;
            bench::write_csv(BufWriter::new(file), &cells).map_err(io_err(path))?;
        }
        None => bench::write_csv(std::io::stdout().lock(), &cells)
            .map_err(io_err(Path::new("<stdout>")))?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_echo_lambda_set() {
        let cli = Cli::try_parse_from([
            "sskm", "cluster", "--input", "m", "--k", "5", "--out-assignments", "a",
            "--out-report", "r",
        ])
        .unwrap();
        let Command::Cluster(args) = cli.command else {
            panic!("expected cluster")
        };
        assert_eq!(args.engine.lambdas, vec![0.1, 0.25, 0.4, 0.6]);
        assert_eq!(args.mode, Mode::NccIndex);
        assert_eq!(args.engine.conv, 1e-4);
        assert_eq!(args.engine.index_activation, 100);
    }

    #[test]
    fn bad_mode_is_a_usage_error() {
        let err = Cli::try_parse_from([
            "sskm", "cluster", "--input", "m", "--k", "5", "--mode", "fast",
            "--out-assignments", "a", "--out-report", "r",
        ])
        .unwrap_err();
        assert!(err.use_stderr());
        assert_eq!(err.exit_code(), 2);
    }
}
