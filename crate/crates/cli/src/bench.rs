//! Budget sweeps: one CSV row per (n, alpha, seed) cell plus a summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use fastspec::chains::{ApplyMode, TransformChain};
use fastspec::linalg::DenseMatrix;
use fastspec::report::FactorizeOptions;
use fastspec::{gfactor, graph, oracle, tfactor};

use crate::{CliError, ModeArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Givens chain (symmetric inputs).
    G,
    /// Scaling/shear chain.
    T,
    /// Truncated Jacobi.
    Jacobi,
    /// Best rank-r approximation at matched FLOPs.
    Lowrank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphKind {
    Er,
    File,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Graph sizes for ER sweeps, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Budget multipliers; the budget is ceil(alpha n log2 n).
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphas: Vec<f64>,
    /// Seeds per cell for ER sweeps.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed_offset: u64,
    #[arg(long, value_enum, default_value = "er")]
    pub graph: GraphKind,
    /// Edge list or MatrixMarket (`.mtx`) file for `--graph file`.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// ER edge probability.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    /// Directed ER graphs (general methods only).
    #[arg(long)]
    pub directed: bool,
    #[arg(long, value_enum, default_value = "polish")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = fastspec::report::DEFAULT_EPS)]
    pub eps: f64,
    /// Fill the wall-time columns.
    #[arg(long)]
    pub timing: bool,
    /// Per-cell CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary CSV; defaults to the output path with `.summary.csv`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub budget: usize,
    pub rel_error_sq: f64,
    pub flops: u64,
    pub speedup_vs_dense: f64,
    pub wall_time_factorize: Option<f64>,
    pub wall_time_apply: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    pub alpha: f64,
    pub budget: usize,
    pub count: usize,
    pub mean_rel_error_sq: f64,
    pub std_rel_error_sq: f64,
    pub mean_flops: f64,
    pub mean_speedup_vs_dense: f64,
}

/// `ceil(alpha n log2 n)`, with a small guard so products that are integers
/// up to rounding are not pushed to the next integer.
pub fn budget(alpha: f64, n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    let x = alpha * n as f64 * (n as f64).log2();
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Rank whose `2 r n` apply cost matches `6 g` for a G budget `g`.
pub fn matched_rank(g: usize, n: usize) -> usize {
    ((6 * g) / (2 * n)).clamp(1, n)
}

pub fn speedup(n: usize, flops: u64) -> f64 {
    2.0 * (n * n) as f64 / flops as f64
}

/// Everything a sweep needs, independent of argument parsing.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub method: Method,
    pub alphas: Vec<f64>,
    pub source: Source,
    pub opts: FactorizeOptions,
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub enum Source {
    Er { sizes: Vec<usize>, p: f64, directed: bool, seeds: Vec<u64> },
    Matrix(DenseMatrix),
}

impl BenchConfig {
    pub fn from_args(args: &BenchArgs) -> Result<Self, CliError> {
        if args.alphas.is_empty() || args.alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(CliError::usage("--alphas must be positive"));
        }
        if !(args.eps > 0.0) {
            return Err(CliError::usage("--eps must be positive"));
        }
        let symmetric_only = matches!(args.method, Method::G | Method::Jacobi);
        let source = match args.graph {
            GraphKind::Er => {
                if args.file.is_some() {
                    return Err(CliError::usage("--file needs --graph file"));
                }
                if args.n.is_empty() || args.n.iter().any(|&n| n < 2) {
                    return Err(CliError::usage("--n needs sizes of at least 2"));
                }
                if !(0.0..=1.0).contains(&args.p) {
                    return Err(CliError::usage("--p must lie in [0, 1]"));
                }
                if args.seeds == 0 {
                    return Err(CliError::usage("--seeds must be positive"));
                }
                if args.directed && symmetric_only {
                    return Err(CliError::usage("directed Laplacians need --method t or lowrank"));
                }
                Source::Er {
                    sizes: args.n.clone(),
                    p: args.p,
                    directed: args.directed,
                    seeds: (args.seed_offset..args.seed_offset + args.seeds).collect(),
                }
            }
            GraphKind::File => {
                let path = args.file.as_deref().ok_or(CliError::usage("--graph file needs --file"))?;
                if !args.n.is_empty() || args.directed {
                    return Err(CliError::usage("--n and --directed only apply to ER graphs"));
                }
                let m = load_file(path)?;
                if m.rows() < 2 {
                    return Err(CliError::usage("the input needs at least 2 vertices"));
                }
                Source::Matrix(m)
            }
        };
        let opts = FactorizeOptions::new(0).mode(args.mode.into()).eps(args.eps);
        Ok(Self { method: args.method, alphas: args.alphas.clone(), source, opts, timing: args.timing })
    }
}

fn load_file(path: &Path) -> Result<DenseMatrix, CliError> {
    if path.extension().is_some_and(|e| e == "mtx") {
        crate::load_matrix(Some(path), None)
    } else {
        crate::load_matrix(None, Some(path))
    }
}

struct Cell {
    n: usize,
    alpha: f64,
    seed: u64,
}

fn run_cell(cfg: &BenchConfig, cell: &Cell, matrix: &DenseMatrix) -> Result<BenchRow, CliError> {
    let n = cell.n;
    let budget = budget(cell.alpha, n);
    let opts = FactorizeOptions { budget, ..cfg.opts.clone() };
    let norm = matrix.frobenius_norm_sq();
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let start = Instant::now();
    let (error, flops, chain) = match cfg.method {
        Method::G => {
            let (chain, report) = gfactor::factorize_symmetric(matrix, &opts)?;
            (report.final_abs_error, chain.flop_count().multiply_adds, Some(chain))
        }
        Method::T => {
            let (chain, report) = tfactor::factorize_general(matrix, &opts)?;
            (report.final_abs_error, chain.flop_count().multiply_adds, Some(chain))
        }
        Method::Jacobi => {
            let chain = oracle::jacobi_truncated(matrix, budget)?;
            (matrix.dist_sq(&chain.reconstruct()?)?, chain.flop_count().multiply_adds, Some(chain))
        }
        Method::Lowrank => {
            let r = matched_rank(budget, n);
            let approx = oracle::low_rank_baseline(matrix, r)?;
            (matrix.dist_sq(&approx)?, (2 * r * n) as u64, None)
        }
    };
    let factorize_secs = start.elapsed().as_secs_f64();
    let apply_secs = chain.as_ref().map(time_apply).transpose()?;
    Ok(BenchRow {
        method: cfg.method,
        n,
        alpha: cell.alpha,
        seed: cell.seed,
        budget,
        rel_error_sq: error / scale,
        flops,
        speedup_vs_dense: speedup(n, flops),
        wall_time_factorize: cfg.timing.then_some(factorize_secs),
        wall_time_apply: if cfg.timing { apply_secs } else { None },
    })
}

fn time_apply(chain: &TransformChain) -> Result<f64, CliError> {
    let mut x: Vec<f64> = (0..chain.n()).map(|k| 1.0 / (k as f64 + 1.0)).collect();
    let start = Instant::now();
    chain.apply_in_place(&mut x, ApplyMode::Forward)?;
    Ok(start.elapsed().as_secs_f64())
}

/// Runs every cell; rows come back ordered by (n, alpha, seed).
pub fn run_cells(cfg: &BenchConfig) -> Result<Vec<BenchRow>, CliError> {
    let mut cells = Vec::new();
    match &cfg.source {
        Source::Er { sizes, seeds, .. } => {
            for &n in sizes {
                for &alpha in &cfg.alphas {
                    cells.extend(seeds.iter().map(|&seed| Cell { n, alpha, seed }));
                }
            }
        }
        Source::Matrix(m) => cells.extend(cfg.alphas.iter().map(|&alpha| Cell { n: m.rows(), alpha, seed: 0 })),
    }
    let mut rows = cells
        .par_iter()
        .map(|cell| {
            let matrix = match &cfg.source {
                Source::Er { p, directed, .. } => graph::laplacian(&graph::erdos_renyi(cell.n, *p, cell.seed, *directed)?),
                Source::Matrix(m) => m.clone(),
            };
            run_cell(cfg, cell, &matrix)
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| (a.n, a.alpha, a.seed).partial_cmp(&(b.n, b.alpha, b.seed)).expect("finite alphas"));
    Ok(rows)
}

/// Mean and population standard deviation per (n, alpha).
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].n, rows[start].alpha);
        let end = start + rows[start..].iter().take_while(|r| (r.n, r.alpha) == key).count();
        let group = &rows[start..end];
        let k = group.len() as f64;
        let mean = group.iter().map(|r| r.rel_error_sq).sum::<f64>() / k;
        let var = group.iter().map(|r| (r.rel_error_sq - mean).powi(2)).sum::<f64>() / k;
        out.push(SummaryRow {
            method: group[0].method,
            n: key.0,
            alpha: key.1,
            budget: group[0].budget,
            count: group.len(),
            mean_rel_error_sq: mean,
            std_rel_error_sq: var.sqrt(),
            mean_flops: group.iter().map(|r| r.flops as f64).sum::<f64>() / k,
            mean_speedup_vs_dense: group.iter().map(|r| r.speedup_vs_dense).sum::<f64>() / k,
        });
        start = end;
    }
    out
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError { code: 3, kind: "io", message: e.to_string() })?;
    }
    let bytes = w.into_inner().map_err(|e| CliError { code: 3, kind: "io", message: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn default_summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

pub fn run(args: &BenchArgs) -> Result<(), CliError> {
    let cfg = BenchConfig::from_args(args)?;
    let rows = run_cells(&cfg)?;
    crate::write(&args.out, &to_csv(&rows)?)?;
    let summary_path = args.summary.clone().unwrap_or_else(|| default_summary_path(&args.out));
    crate::write(&summary_path, &to_csv(&summarize(&rows))?)?;
    Ok(())
}
