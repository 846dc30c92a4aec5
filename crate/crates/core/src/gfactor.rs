//! Symmetric branch: `S ~ U diag(s) U^T` with `U` a chain of Givens
//! rotations and reflections.
//!
//! Working matrices follow the chain order. For slot `k` of a chain
//! `U = G_g ... G_1`, let `L = G_g ... G_{k+1}` and `R = G_{k-1} ... G_1`; then
//! `||S - U D U^T|| = ||A - G_k B G_k^T||` with `A = L^T S L` and
//! `B = R D R^T`. Initialization runs `k = g, ..., 1` with `B = D`.

use rayon::prelude::*;

use crate::chains::{GFamily, GTransform, TransformChain};
use crate::error::{dims_mismatch, Error, Result};
use crate::linalg::{eig2x2_sym, gamma, unit_norm_ls, DenseMatrix, Sym2x2};
use crate::report::{
    error_scale, jitter_duplicates, FactorizationReport, FactorizeOptions, Mode, SpectrumRule, Stopwatch,
};

/// Below this dimension pair sweeps run on the calling thread.
const PAR_MIN_N: usize = 48;

/// Relative jitter step used to separate repeated diagonal seeds.
pub const JITTER_REL: f64 = 1e-9;

/// Initialization scores for every ordered pair.
///
/// `get(i, j)` with `i < j` is `gamma(S_ii, S_jj, S_ij) * (s_j - s_i)`; the
/// mirrored entry `get(j, i)` is the same score with the roles of `i` and `j`
/// exchanged. The objective gain of the best transform on `{i, j}` is the
/// larger of the two, and the smaller one is never positive.
#[derive(Debug, Clone, PartialEq)]
pub struct GScoreTable {
    n: usize,
    scores: Vec<f64>,
}

impl GScoreTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n + j]
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).max(self.get(j, i))
    }

    /// Pair `(i, j)`, `i < j`, with the largest gain; ties go to the
    /// lexicographically first pair.
    pub fn best(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let v = self.gain(i, j);
                if best.is_none_or(|b| v > b.2) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }
}

pub fn score_table(s_k: &DenseMatrix, s_bar: &[f64]) -> Result<GScoreTable> {
    let n = s_k.require_square()?;
    if s_bar.len() != n {
        return Err(dims_mismatch(n, s_bar.len()));
    }
    let mut scores = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (sii, sjj, sij) = (s_k[(i, i)], s_k[(j, j)], s_k[(i, j)]);
            scores[i * n + j] = gamma(sii, sjj, sij) * (s_bar[j] - s_bar[i]);
            scores[j * n + i] = gamma(sjj, sii, sij) * (s_bar[i] - s_bar[j]);
        }
    }
    Ok(GScoreTable { n, scores })
}

#[inline]
fn pair_gain(sii: f64, sjj: f64, sij: f64, sb_i: f64, sb_j: f64) -> f64 {
    if sb_j >= sb_i {
        gamma(sii, sjj, sij) * (sb_j - sb_i)
    } else {
        gamma(sjj, sii, sij) * (sb_i - sb_j)
    }
}

/// Best pair of the current working matrix: `(i, j, gain)`.
fn best_gain_pair(s_k: &DenseMatrix, s_bar: &[f64]) -> (usize, usize, f64) {
    let n = s_k.rows();
    let row_best = |i: usize| -> Option<(usize, usize, f64)> {
        let row = s_k.row(i);
        let sii = row[i];
        let mut best: Option<(usize, usize, f64)> = None;
        for j in i + 1..n {
            let v = pair_gain(sii, s_k[(j, j)], row[j], s_bar[i], s_bar[j]);
            if best.is_none_or(|b| v > b.2) {
                best = Some((i, j, v));
            }
        }
        best
    };
    let rows: Vec<Option<(usize, usize, f64)>> = if n >= PAR_MIN_N {
        (0..n).into_par_iter().map(row_best).collect()
    } else {
        (0..n).map(row_best).collect()
    };
    rows.into_iter()
        .flatten()
        .fold(None, |acc: Option<(usize, usize, f64)>, c| match acc {
            Some(a) if a.2 >= c.2 => Some(a),
            _ => Some(c),
        })
        .unwrap_or((0, 1, 0.0))
}

/// One greedy initialization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GInitStep {
    pub i: usize,
    pub j: usize,
    pub transform: GTransform,
    /// Decrease of `||S_k - G diag(s) G^T||_F^2` relative to `G = I`.
    pub gain: f64,
    /// Change of the objective, `-2 * gain`.
    pub objective_delta: f64,
}

/// Optimal transform on a fixed pair: eigenvectors of the 2x2 block, with
/// the column order that maximizes `s_i y_i + s_j y_j`.
fn init_transform(s_k: &DenseMatrix, s_bar: &[f64], i: usize, j: usize) -> GTransform {
    let eig = eig2x2_sym(Sym2x2::new(s_k[(i, i)], s_k[(i, j)], s_k[(j, j)]));
    let v = eig.v;
    let keep = s_bar[i] * eig.lambda_hi + s_bar[j] * eig.lambda_lo;
    let swap = s_bar[i] * eig.lambda_lo + s_bar[j] * eig.lambda_hi;
    let block = if keep >= swap { v } else { [[v[0][1], v[0][0]], [v[1][1], v[1][0]]] };
    GTransform::from_block(i, j, block).expect("eigenvector matrix is orthonormal")
}

/// Theorem-1 step on the working matrix `s_k` with target spectrum `s_bar`.
pub fn init_g_step(s_k: &DenseMatrix, s_bar: &[f64]) -> Result<GInitStep> {
    let n = s_k.require_square()?;
    if n < 2 {
        return Err(Error::InvalidArgument("a G-transform needs n >= 2".into()));
    }
    if s_bar.len() != n {
        return Err(dims_mismatch(n, s_bar.len()));
    }
    Ok(init_step_unchecked(s_k, s_bar))
}

fn init_step_unchecked(s_k: &DenseMatrix, s_bar: &[f64]) -> GInitStep {
    let (i, j, gain) = best_gain_pair(s_k, s_bar);
    let transform = if gain > 0.0 { init_transform(s_k, s_bar, i, j) } else { GTransform::identity(i, j) };
    let gain = gain.max(0.0);
    GInitStep { i, j, transform, gain, objective_delta: -2.0 * gain }
}

/// Greedy chain of `g` transforms placed from slot `g` down to slot 1.
/// Also returns the objective `||S - U diag(s) U^T||_F^2` before the first
/// placement and after each one.
pub fn init_g_chain_traced(s: &DenseMatrix, s_bar: &[f64], g: usize) -> Result<(TransformChain, Vec<f64>)> {
    let n = s.require_square()?;
    if s_bar.len() != n {
        return Err(dims_mismatch(n, s_bar.len()));
    }
    if g > 0 && n < 2 {
        return Err(Error::InvalidArgument("a G-transform needs n >= 2".into()));
    }
    let mut work = s.clone();
    work.set_symmetric_unchecked();
    let mut objective = s.dist_sq_to_diag(s_bar);
    let mut trace = Vec::with_capacity(g + 1);
    trace.push(objective);
    let mut placed = Vec::with_capacity(g);
    for _ in 0..g {
        let step = init_step_unchecked(&work, s_bar);
        step.transform.conjugate_transpose(&mut work);
        objective = (objective - 2.0 * step.gain).max(0.0);
        trace.push(objective);
        placed.push(step.transform);
    }
    placed.reverse();
    let chain = TransformChain::new_g(n, placed, s_bar.to_vec())?;
    Ok((chain, trace))
}

pub fn init_g_chain(s: &DenseMatrix, s_bar: &[f64], g: usize) -> Result<TransformChain> {
    init_g_chain_traced(s, s_bar, g).map(|(c, _)| c)
}

/// Cached products for evaluating every pair of one update step.
#[derive(Debug, Clone)]
pub struct GUpdateWorkspace {
    /// `A B`
    pub z: DenseMatrix,
    /// `A o B` (entrywise)
    pub v: DenseMatrix,
    /// Squared column norms of `A`.
    pub col_norms_a: Vec<f64>,
    /// Squared column norms of `B`.
    pub col_norms_b: Vec<f64>,
    v_row_sums: Vec<f64>,
    v_total: f64,
    norms_total: f64,
}

impl GUpdateWorkspace {
    pub fn new(a: &DenseMatrix, b: &DenseMatrix) -> Result<Self> {
        let n = a.require_square()?;
        if b.rows() != n || b.cols() != n {
            return Err(dims_mismatch(format!("{n}x{n}"), format!("{}x{}", b.rows(), b.cols())));
        }
        let z = a.matmul(b)?;
        let v = a.hadamard(b)?;
        let col_norms_a = a.col_norms_sq();
        let col_norms_b = b.col_norms_sq();
        let v_row_sums: Vec<f64> = (0..n).map(|r| v.row(r).iter().sum()).collect();
        let v_total = v_row_sums.iter().sum();
        let norms_total = col_norms_a.iter().sum::<f64>() + col_norms_b.iter().sum::<f64>();
        Ok(Self { z, v, col_norms_a, col_norms_b, v_row_sums, v_total, norms_total })
    }

    /// `||A||^2 + ||B||^2 - 2 sum_{r,c not in {i,j}} A_rc B_rc`.
    fn outside_constant(&self, i: usize, j: usize) -> f64 {
        let v = &self.v;
        let inside = v[(i, i)] + v[(j, j)] + v[(i, j)] + v[(j, i)];
        let outside_v = self.v_total - 2.0 * (self.v_row_sums[i] + self.v_row_sums[j]) + inside;
        self.norms_total - 2.0 * outside_v
    }
}

/// Basis of the 2x2 block as a linear function of `x = (c, s)`.
fn family_basis(family: GFamily) -> [[[f64; 2]; 2]; 2] {
    match family {
        GFamily::Rotation => [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [-1.0, 0.0]]],
        GFamily::Reflection => [[[1.0, 0.0], [0.0, -1.0]], [[0.0, 1.0], [1.0, 0.0]]],
    }
}

type M2 = [[f64; 2]; 2];

fn mm2(a: &M2, b: &M2) -> M2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn inner2(a: &M2, b: &M2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Quadratic model of one pair: on the unit circle the objective is
/// `constant + x^T r x + 2 x^T g` with `x = (c, s)`.
#[derive(Debug, Clone, Copy)]
struct PairModel {
    r: M2,
    g: [f64; 2],
}

impl PairModel {
    /// `a_pp`, `b_pp`: the 2x2 blocks; `k[a][b] = sum_{r not in P} A_{r,a} B_{r,b}`.
    fn new(a_pp: &M2, b_pp: &M2, k: &M2, family: GFamily) -> Self {
        let f = family_basis(family);
        let m = |p: usize| {
            let left = mm2(a_pp, &f[p]);
            let right = mm2(&f[p], b_pp);
            [[left[0][0] - right[0][0], left[0][1] - right[0][1]], [left[1][0] - right[1][0], left[1][1] - right[1][1]]]
        };
        let (m0, m1) = (m(0), m(1));
        let r01 = inner2(&m0, &m1);
        Self {
            r: [[inner2(&m0, &m0), r01], [r01, inner2(&m1, &m1)]],
            g: [-2.0 * inner2(&f[0], k), -2.0 * inner2(&f[1], k)],
        }
    }

    fn value(&self, x: [f64; 2]) -> f64 {
        let r = &self.r;
        x[0] * (r[0][0] * x[0] + r[0][1] * x[1])
            + x[1] * (r[1][0] * x[0] + r[1][1] * x[1])
            + 2.0 * (x[0] * self.g[0] + x[1] * self.g[1])
    }
}

fn blocks(a: &DenseMatrix, b: &DenseMatrix, i: usize, j: usize) -> (M2, M2) {
    (
        [[a[(i, i)], a[(i, j)]], [a[(j, i)], a[(j, j)]]],
        [[b[(i, i)], b[(i, j)]], [b[(j, i)], b[(j, j)]]],
    )
}

/// `k` from the cached product `Z = A B`.
fn cross_from_z(z: &DenseMatrix, a_pp: &M2, b_pp: &M2, i: usize, j: usize) -> M2 {
    let ab = mm2(a_pp, b_pp);
    [[z[(i, i)] - ab[0][0], z[(i, j)] - ab[0][1]], [z[(j, i)] - ab[1][0], z[(j, j)] - ab[1][1]]]
}

/// `k` directly in O(n).
fn cross_direct(a: &DenseMatrix, b: &DenseMatrix, i: usize, j: usize) -> M2 {
    let (ai, aj, bi, bj) = (a.row(i), a.row(j), b.row(i), b.row(j));
    let mut k = [[0.0; 2]; 2];
    for r in 0..a.rows() {
        if r == i || r == j {
            continue;
        }
        k[0][0] += ai[r] * bi[r];
        k[0][1] += ai[r] * bj[r];
        k[1][0] += aj[r] * bi[r];
        k[1][1] += aj[r] * bj[r];
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PairCandidate {
    transform: GTransform,
    /// Pair-dependent part of the objective.
    model_value: f64,
}

fn family_rank(f: GFamily) -> u8 {
    match f {
        GFamily::Rotation => 0,
        GFamily::Reflection => 1,
    }
}

fn solve_pair(a_pp: &M2, b_pp: &M2, k: &M2, i: usize, j: usize) -> [PairCandidate; 2] {
    [GFamily::Rotation, GFamily::Reflection].map(|family| {
        let model = PairModel::new(a_pp, b_pp, k, family);
        let sol = unit_norm_ls(model.r, model.g);
        let transform = GTransform::normalized(i, j, sol.x[0], sol.x[1], family).expect("unit vector");
        PairCandidate { transform, model_value: model.value([transform.c(), transform.s()]) }
    })
}

fn model_value_of(a_pp: &M2, b_pp: &M2, k: &M2, t: &GTransform) -> f64 {
    PairModel::new(a_pp, b_pp, k, t.family()).value([t.c(), t.s()])
}

/// Result of a Theorem-2 step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GUpdateStep {
    pub family: GFamily,
    pub i: usize,
    pub j: usize,
    pub transform: GTransform,
    /// `||A - G B G^T||_F^2` at the returned transform.
    pub objective: f64,
}

fn better(a: &GUpdateStep, b: &GUpdateStep) -> bool {
    a.objective < b.objective
        || (a.objective == b.objective
            && (family_rank(a.family), a.i, a.j) < (family_rank(b.family), b.i, b.j))
}

/// Theorem-2 step: the best transform over all pairs and both families for
/// `min ||A - G B G^T||_F^2`.
pub fn update_g_step(a_k: &DenseMatrix, b_k: &DenseMatrix, ws: &GUpdateWorkspace) -> Result<GUpdateStep> {
    let n = a_k.require_square()?;
    if n < 2 {
        return Err(Error::InvalidArgument("a G-transform needs n >= 2".into()));
    }
    if b_k.rows() != n || ws.z.rows() != n {
        return Err(dims_mismatch(n, b_k.rows()));
    }
    let row_best = |i: usize| -> Option<GUpdateStep> {
        let mut best: Option<GUpdateStep> = None;
        for j in i + 1..n {
            let (a_pp, b_pp) = blocks(a_k, b_k, i, j);
            let k = cross_from_z(&ws.z, &a_pp, &b_pp, i, j);
            let base = ws.outside_constant(i, j) - inner2(&a_pp, &a_pp) - inner2(&b_pp, &b_pp);
            for cand in solve_pair(&a_pp, &b_pp, &k, i, j) {
                let step = GUpdateStep {
                    family: cand.transform.family(),
                    i,
                    j,
                    transform: cand.transform,
                    objective: (base + cand.model_value).max(0.0),
                };
                if best.as_ref().is_none_or(|b| better(&step, b)) {
                    best = Some(step);
                }
            }
        }
        best
    };
    let rows: Vec<Option<GUpdateStep>> = if n >= PAR_MIN_N / 2 {
        (0..n).into_par_iter().map(row_best).collect()
    } else {
        (0..n).map(row_best).collect()
    };
    Ok(rows
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<GUpdateStep>, c| match acc {
            Some(a) if !better(&c, &a) => Some(a),
            _ => Some(c),
        })
        .expect("n >= 2 gives at least one pair"))
}

/// `||A - G B G^T||_F^2` for a given transform, from the workspace.
pub fn update_objective(a_k: &DenseMatrix, b_k: &DenseMatrix, ws: &GUpdateWorkspace, t: &GTransform) -> f64 {
    let (i, j) = (t.i(), t.j());
    let (a_pp, b_pp) = blocks(a_k, b_k, i, j);
    let k = cross_from_z(&ws.z, &a_pp, &b_pp, i, j);
    let base = ws.outside_constant(i, j) - inner2(&a_pp, &a_pp) - inner2(&b_pp, &b_pp);
    (base + model_value_of(&a_pp, &b_pp, &k, t)).max(0.0)
}

/// Best transform on the fixed pair of `current`, or `current` itself when
/// no candidate improves on it. O(n).
pub fn update_g_pair(a_k: &DenseMatrix, b_k: &DenseMatrix, current: &GTransform) -> GTransform {
    let (i, j) = (current.i(), current.j());
    let (a_pp, b_pp) = blocks(a_k, b_k, i, j);
    let k = cross_direct(a_k, b_k, i, j);
    let mut best = *current;
    let mut best_value = model_value_of(&a_pp, &b_pp, &k, current);
    for cand in solve_pair(&a_pp, &b_pp, &k, i, j) {
        if cand.model_value < best_value {
            best = cand.transform;
            best_value = cand.model_value;
        }
    }
    best
}

/// `A` for slot 1: `S` conjugated by `G_g, ..., G_2`.
fn first_a(s: &DenseMatrix, ts: &[GTransform]) -> DenseMatrix {
    let mut a = s.clone();
    a.set_symmetric_unchecked();
    for t in ts.iter().skip(1).rev() {
        t.conjugate_transpose(&mut a);
    }
    a
}

/// One sweep over slots `1..=g`. In polish mode each slot keeps its pair;
/// in full mode each slot may move to any pair.
fn sweep(s: &DenseMatrix, chain: &TransformChain, mode: Mode) -> Result<TransformChain> {
    let mut ts = chain.g_transforms().expect("g_chain").to_vec();
    if ts.is_empty() {
        return Ok(chain.clone());
    }
    let mut a = first_a(s, &ts);
    let mut b = DenseMatrix::from_diag(chain.spectrum());
    for k in 0..ts.len() {
        let next = match mode {
            Mode::Polish => update_g_pair(&a, &b, &ts[k]),
            Mode::Full => {
                let ws = GUpdateWorkspace::new(&a, &b)?;
                let step = update_g_step(&a, &b, &ws)?;
                if step.objective < update_objective(&a, &b, &ws, &ts[k]) {
                    step.transform
                } else {
                    ts[k]
                }
            }
        };
        ts[k] = next;
        next.conjugate(&mut b);
        if k + 1 < ts.len() {
            ts[k + 1].conjugate(&mut a);
        }
    }
    TransformChain::new_g(chain.n(), ts, chain.spectrum().to_vec())
}

/// One polishing sweep with the spectrum held fixed.
pub fn polish_g_chain(s: &DenseMatrix, chain: &TransformChain, s_bar: &[f64]) -> Result<TransformChain> {
    let mut chain = check_chain(s, chain)?;
    chain.set_spectrum(s_bar.to_vec())?;
    sweep(s, &chain, Mode::Polish)
}

/// One full-update sweep with the spectrum held fixed.
pub fn update_g_chain(s: &DenseMatrix, chain: &TransformChain, s_bar: &[f64]) -> Result<TransformChain> {
    let mut chain = check_chain(s, chain)?;
    chain.set_spectrum(s_bar.to_vec())?;
    sweep(s, &chain, Mode::Full)
}

fn check_chain(s: &DenseMatrix, chain: &TransformChain) -> Result<TransformChain> {
    let n = s.require_square()?;
    if chain.n() != n {
        return Err(dims_mismatch(n, chain.n()));
    }
    if chain.g_transforms().is_none() {
        return Err(Error::InvalidArgument("expected a g_chain".into()));
    }
    Ok(chain.clone())
}

/// `diag(U^T S U)`, the optimal spectrum for a fixed chain; O(g n) after
/// copying `S`.
pub fn spectrum_update_sym(s: &DenseMatrix, chain: &TransformChain) -> Result<Vec<f64>> {
    check_chain(s, chain)?;
    let mut m = s.clone();
    for t in chain.g_transforms().expect("checked").iter().rev() {
        t.conjugate_transpose(&mut m);
    }
    Ok(m.diag())
}

/// `||S - U diag(s) U^T||_F^2`
pub fn objective(s: &DenseMatrix, chain: &TransformChain) -> Result<f64> {
    s.dist_sq(&chain.reconstruct()?)
}

fn require_symmetric(s: &DenseMatrix) -> Result<()> {
    s.require_square()?;
    s.check_finite()?;
    let asym = s.max_asymmetry();
    if asym > crate::linalg::SYMMETRY_TOL * s.max_abs() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Initial spectrum estimate per the rule, with repeated diagonal seeds
/// separated. Returns the estimate and the number of jittered entries.
fn initial_spectrum(s: &DenseMatrix, opts: &FactorizeOptions) -> Result<(Vec<f64>, usize)> {
    let n = s.rows();
    match opts.rule {
        SpectrumRule::Original => {
            let ev = opts.eigenvalues.clone().ok_or(Error::MissingSpectrum)?;
            if ev.len() != n {
                return Err(dims_mismatch(format!("{n} eigenvalues"), ev.len()));
            }
            Ok((ev, 0))
        }
        SpectrumRule::Update => {
            let mut d = s.diag();
            let step = JITTER_REL * s.frobenius_norm_sq().sqrt();
            let changed = jitter_duplicates(&mut d, step);
            Ok((d, changed))
        }
    }
}

/// Setup, greedy initialization, then sweeps until the relative error
/// settles within `opts.eps` or `opts.max_iters` sweeps have run.
pub fn factorize_symmetric(s: &DenseMatrix, opts: &FactorizeOptions) -> Result<(TransformChain, FactorizationReport)> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {}", opts.eps)));
    }
    require_symmetric(s)?;
    let n = s.rows();
    if opts.budget > 0 && n < 2 {
        return Err(Error::InvalidArgument("a G-transform needs n >= 2".into()));
    }
    let mut sym = s.clone();
    sym.set_symmetric_unchecked();
    let s = &sym;
    let mut report = FactorizationReport::new("symmetric", n, opts);
    let mut clock = Stopwatch::start();
    let mut total = Stopwatch::start();
    let scale = error_scale(s.frobenius_norm_sq());

    let (s_bar, jittered) = initial_spectrum(s, opts)?;
    report.jittered_entries = jittered;
    report.timing.setup_secs = clock.lap();

    let (mut chain, init_trace) = init_g_chain_traced(s, &s_bar, opts.budget)?;
    report.init_trace = init_trace.iter().map(|v| v / scale).collect();
    report.timing.init_secs = clock.lap();

    let mut err = objective(s, &chain)?;
    report.sweep_trace.push(err / scale);
    for iter in 1..=opts.max_iters {
        let mut next = sweep(s, &chain, opts.mode)?;
        if opts.rule == SpectrumRule::Update {
            let spec = spectrum_update_sym(s, &next)?;
            next.set_spectrum(spec)?;
        }
        let next_err = objective(s, &next)?;
        report.iterations = iter;
        let stalled = next_err >= err;
        if !stalled {
            chain = next;
        }
        let prev_rel = err / scale;
        err = err.min(next_err);
        report.sweep_trace.push(err / scale);
        if iter > 1 && (prev_rel - err / scale).abs() < opts.eps || stalled {
            report.converged = true;
            break;
        }
    }
    report.timing.iterations_secs = clock.lap();
    report.final_abs_error = err;
    report.final_rel_error = err / scale;
    report.flops = chain.flop_count().multiply_adds;
    report.timing.total_secs = total.lap();
    Ok((chain, report))
}
