//! Command-line front end for `fastspec`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use fastspec::chains::{ApplyMode, TransformChain};
use fastspec::linalg::DenseMatrix;
use fastspec::report::{FactorizeOptions, Mode, SpectrumRule, SpectrumSolver};
use fastspec::{gfactor, graph, tfactor, Error};

pub mod bench;

#[derive(Debug, Parser)]
#[command(name = "fastspec", version, about = "Fast approximate eigendecompositions from chains of sparse transforms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize a matrix or graph Laplacian into a transform chain.
    Factorize(FactorizeArgs),
    /// Multiply a vector by a stored chain.
    Apply(ApplyArgs),
    /// Sweep budgets over random or file graphs and write CSV results.
    Bench(bench::BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Original,
    Update,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Polish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Dense,
    Iterative,
}

impl From<RuleArg> for SpectrumRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Original => SpectrumRule::Original,
            RuleArg::Update => SpectrumRule::Update,
        }
    }
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => Mode::Full,
            ModeArg::Polish => Mode::Polish,
        }
    }
}

impl From<SolverArg> for SpectrumSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Dense => SpectrumSolver::Dense,
            SolverArg::Iterative => SpectrumSolver::Iterative,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("branch").required(true).args(["sym", "general"])))]
#[command(group(ArgGroup::new("source").required(true).args(["input", "graph"])))]
pub struct FactorizeArgs {
    /// Symmetric branch (Givens chain); needs --g.
    #[arg(long)]
    pub sym: bool,
    /// General branch (scaling/shear chain); needs --m.
    #[arg(long)]
    pub general: bool,
    /// MatrixMarket matrix.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Edge list; its Laplacian is factorized.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Number of G-transforms.
    #[arg(long)]
    pub g: Option<usize>,
    /// Number of T-transforms.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum, default_value = "update")]
    pub spectrum: RuleArg,
    /// Eigenvalue file (one per line) for --spectrum original.
    #[arg(long)]
    pub eigenvalues: Option<PathBuf>,
    #[arg(long, default_value_t = fastspec::report::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "polish")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = fastspec::report::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value = "dense")]
    pub spectrum_solver: SolverArg,
    /// Chain output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Report output path; defaults to the chain path with `.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApplyModeArg {
    Forward,
    Transpose,
    /// Inverse; for G-chains this is the transpose.
    Inverse,
    InverseTranspose,
    /// `chain * diag(spectrum) * chain^{-1}`
    Reconstruct,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub chain: PathBuf,
    /// Vector file, one value per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "forward")]
    pub mode: ApplyModeArg,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage", message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind, self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidArgument(_) | Error::MissingSpectrum | Error::TooLarge { .. } => (2, "usage"),
            Error::Parse { .. } => (3, "parse"),
            Error::IndexOutOfRange { .. } => (3, "index_out_of_range"),
            Error::Validation(_) => (3, "validation"),
            Error::DimensionMismatch { .. } => (3, "dimension_mismatch"),
            Error::Io(_) => (3, "io"),
            Error::NonFinite { .. } => (3, "non_finite"),
            Error::NotSymmetric { .. } => (3, "not_symmetric"),
            Error::SingularNormalMatrix { .. } => (4, "singular_normal_matrix"),
            Error::NoConvergence => (4, "no_convergence"),
            Error::ZeroScale(_) | Error::NonInvertibleScale { .. } => (4, "zero_scale"),
            Error::ZeroPolynomial => (4, "zero_polynomial"),
        };
        Self { code, kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Factorize(args) => factorize(&args),
        Command::Apply(args) => apply(&args),
        Command::Bench(args) => bench::run(&args),
    }
}

/// Values one per line; blank lines and `#` comments are skipped.
pub fn parse_vector(text: &str) -> fastspec::Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|e| Error::Parse { line: idx + 1, message: format!("bad value `{line}`: {e}") })?;
        if !v.is_finite() {
            return Err(Error::Parse { line: idx + 1, message: format!("value `{line}` is not finite") });
        }
        out.push(v);
    }
    Ok(out)
}

pub fn format_vector(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}\n")).collect()
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError {
        code: 3,
        kind: "io",
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError {
        code: 3,
        kind: "io",
        message: format!("cannot write {}: {e}", path.display()),
    })
}

/// Loads `--input` (MatrixMarket) or `--graph` (edge list Laplacian).
pub fn load_matrix(input: Option<&Path>, graph_path: Option<&Path>) -> Result<DenseMatrix, CliError> {
    match (input, graph_path) {
        (Some(p), None) => Ok(graph::parse_matrix_market(&read(p)?)?),
        (None, Some(p)) => Ok(graph::laplacian(&graph::parse_edge_list(&read(p)?)?)),
        _ => Err(CliError::usage("give exactly one of --input and --graph")),
    }
}

fn default_report_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn factorize(args: &FactorizeArgs) -> Result<(), CliError> {
    let budget = match (args.sym, args.g, args.m) {
        (true, Some(g), None) => g,
        (false, None, Some(m)) => m,
        (true, _, _) => return Err(CliError::usage("--sym takes the budget as --g")),
        (false, _, _) => return Err(CliError::usage("--general takes the budget as --m")),
    };
    if !(args.eps > 0.0) {
        return Err(CliError::usage(format!("--eps must be positive, got {}", args.eps)));
    }
    let mut opts = FactorizeOptions::new(budget)
        .rule(args.spectrum.into())
        .eps(args.eps)
        .mode(args.mode.into())
        .max_iters(args.max_iters)
        .spectrum_solver(args.spectrum_solver.into());
    match (args.spectrum, &args.eigenvalues) {
        (RuleArg::Original, Some(path)) => opts = opts.eigenvalues(parse_vector(&read(path)?)?),
        (RuleArg::Original, None) => return Err(CliError::usage("--spectrum original needs --eigenvalues")),
        (RuleArg::Update, Some(_)) => return Err(CliError::usage("--eigenvalues only applies to --spectrum original")),
        (RuleArg::Update, None) => {}
    }
    let matrix = load_matrix(args.input.as_deref(), args.graph.as_deref())?;
    let (chain, report) = if args.sym {
        gfactor::factorize_symmetric(&matrix, &opts)?
    } else {
        tfactor::factorize_general(&matrix, &opts)?
    };
    write(&args.out, &chain.serialize())?;
    let report_path = args.report.clone().unwrap_or_else(|| default_report_path(&args.out));
    write(&report_path, &report.to_json())?;
    Ok(())
}

fn apply(args: &ApplyArgs) -> Result<(), CliError> {
    let chain = TransformChain::deserialize(&read(&args.chain)?)?;
    let x = parse_vector(&read(&args.input)?)?;
    let y = match args.mode {
        ApplyModeArg::Forward => chain.apply(&x, ApplyMode::Forward)?,
        ApplyModeArg::Transpose => chain.apply(&x, ApplyMode::Transpose)?,
        ApplyModeArg::Inverse => chain.apply(&x, ApplyMode::Inverse)?,
        ApplyModeArg::InverseTranspose => chain.apply(&x, ApplyMode::InverseTranspose)?,
        ApplyModeArg::Reconstruct => chain.reconstruct_apply(&x)?,
    };
    let text = format_vector(&y);
    match &args.out {
        Some(path) => write(path, &text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(CliError::from),
    }
}
