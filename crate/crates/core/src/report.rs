//! Driver configuration and the per-run report.

use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumRule {
    /// Keep the caller-supplied eigenvalues fixed.
    Original,
    /// Seed with the diagonal and re-solve the spectrum after every sweep.
    Update,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every sweep re-selects the index pair of each transform.
    Full,
    /// Index pairs stay fixed; only the transform values are re-optimized.
    Polish,
}

/// Solver for the general-branch spectrum least-squares problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSolver {
    Dense,
    Iterative,
}

pub const DEFAULT_EPS: f64 = 1e-2;
pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizeOptions {
    /// Number of transforms (g or m).
    pub budget: usize,
    pub rule: SpectrumRule,
    /// Stop once consecutive relative errors differ by less than this.
    pub eps: f64,
    pub mode: Mode,
    pub max_iters: usize,
    /// Required by `SpectrumRule::Original`.
    pub eigenvalues: Option<Vec<f64>>,
    pub spectrum_solver: SpectrumSolver,
}

impl FactorizeOptions {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            rule: SpectrumRule::Update,
            eps: DEFAULT_EPS,
            mode: Mode::Polish,
            max_iters: DEFAULT_MAX_ITERS,
            eigenvalues: None,
            spectrum_solver: SpectrumSolver::Dense,
        }
    }

    pub fn rule(mut self, rule: SpectrumRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn eigenvalues(mut self, eigenvalues: Vec<f64>) -> Self {
        self.eigenvalues = Some(eigenvalues);
        self
    }

    pub fn spectrum_solver(mut self, solver: SpectrumSolver) -> Self {
        self.spectrum_solver = solver;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub setup_secs: f64,
    pub init_secs: f64,
    pub iterations_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub branch: &'static str,
    pub n: usize,
    pub budget: usize,
    pub rule: SpectrumRule,
    pub mode: Mode,
    pub eps: f64,
    pub max_iters: usize,
    pub spectrum_solver: SpectrumSolver,
}

/// Everything a run records. Errors are relative, `||X - X_approx||_F^2 / ||X||_F^2`
/// (absolute when `||X||_F = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub config: ReportConfig,
    /// Error before the first transform, then after each placed transform.
    pub init_trace: Vec<f64>,
    /// Error after initialization, then after each iteration sweep.
    pub sweep_trace: Vec<f64>,
    pub final_rel_error: f64,
    pub final_abs_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Diagonal seeds moved apart to make the spectrum estimate distinct.
    pub jittered_entries: usize,
    pub flops: u64,
    pub timing: Timing,
}

impl FactorizationReport {
    pub(crate) fn new(branch: &'static str, n: usize, opts: &FactorizeOptions) -> Self {
        Self {
            config: ReportConfig {
                branch,
                n,
                budget: opts.budget,
                rule: opts.rule,
                mode: opts.mode,
                eps: opts.eps,
                max_iters: opts.max_iters,
                spectrum_solver: opts.spectrum_solver,
            },
            init_trace: Vec::new(),
            sweep_trace: Vec::new(),
            final_rel_error: f64::NAN,
            final_abs_error: f64::NAN,
            iterations: 0,
            converged: false,
            jittered_entries: 0,
            flops: 0,
            timing: Timing::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

pub(crate) struct Stopwatch(Instant);

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self(Instant::now())
    }

    pub(crate) fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let secs = now.duration_since(self.0).as_secs_f64();
        self.0 = now;
        secs
    }
}

/// Moves every exact repeat in `values` up by multiples of `step` so all
/// entries are distinct; the k-th repeat of a value gets `+k * step`.
/// Returns the number of entries changed.
pub(crate) fn jitter_duplicates(values: &mut [f64], step: f64) -> usize {
    if step <= 0.0 || !step.is_finite() {
        return 0;
    }
    let orig = values.to_vec();
    for idx in 0..values.len() {
        let k = orig[..idx].iter().filter(|&&w| w == orig[idx]).count();
        values[idx] = orig[idx] + k as f64 * step;
    }
    // a shifted value may land on another entry
    for idx in 0..values.len() {
        while values[..idx].contains(&values[idx]) {
            let next = values[idx] + step;
            values[idx] = if next == values[idx] { f64::from_bits(next.to_bits() + 1) } else { next };
        }
    }
    values.iter().zip(&orig).filter(|(a, b)| a != b).count()
}

/// `||x||^2` used as the relative-error denominator; zero falls back to 1.
pub(crate) fn error_scale(norm_sq: f64) -> f64 {
    if norm_sq > 0.0 {
        norm_sq
    } else {
        1.0
    }
}
