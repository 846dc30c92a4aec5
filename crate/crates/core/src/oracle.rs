//! Brute-force references and baselines.
//!
//! The grid oracles evaluate objectives densely, so they are slow but
//! trivially correct; they are capped at `ORACLE_MAX_N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chains::{GFamily, GTransform, TKind, TTransform, TransformChain, SCALE_FLOOR};
use crate::error::{dims_mismatch, Error, Result};
use crate::linalg::{dot, DenseMatrix, SYMMETRY_TOL};

pub const ORACLE_MAX_N: usize = 10;

/// Coarse steps of the two grids; refinement then zooms around the best
/// coarse local minima down to the requested fine step.
const ANGLE_COARSE: f64 = 1e-3;
const A_COARSE: f64 = 1e-2;
pub const A_RANGE: f64 = 10.0;
pub const G_INIT_STEP: f64 = 1e-5;
pub const G_UPDATE_STEP: f64 = 1e-4;
pub const T_STEP: f64 = 1e-4;
const REFINED_MINIMA: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteG {
    pub objective: f64,
    pub family: GFamily,
    pub i: usize,
    pub j: usize,
    pub transform: GTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteT {
    pub objective: f64,
    pub kind: TKind,
    pub i: usize,
    pub j: usize,
    pub a: f64,
}

/// What a candidate T-transform is sandwiched into.
#[derive(Debug, Clone, Copy)]
pub enum TContext<'a> {
    /// `||C - T B T^{-1}||^2`
    Init { b: &'a DenseMatrix },
    /// `||C - A T B T^{-1} D||^2`
    Update { a: &'a DenseMatrix, b: &'a DenseMatrix, d: &'a DenseMatrix },
}

impl TContext<'_> {
    fn b(&self) -> &DenseMatrix {
        match self {
            TContext::Init { b } | TContext::Update { b, .. } => b,
        }
    }

    /// Dense `||C - (.)||^2` for one transform.
    pub fn objective(&self, c: &DenseMatrix, t: &TTransform) -> f64 {
        let mut m = self.b().clone();
        t.conjugate(&mut m);
        if let TContext::Update { a, d, .. } = self {
            m = a.matmul(&m).and_then(|x| x.matmul(d)).expect("dimensions checked");
        }
        c.dist_sq(&m).expect("dimensions checked")
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge { n, limit: ORACLE_MAX_N });
    }
    Ok(())
}

fn same_shape(n: usize, m: &DenseMatrix) -> Result<()> {
    if m.rows() != n || m.cols() != n {
        return Err(dims_mismatch(format!("{n}x{n}"), format!("{}x{}", m.rows(), m.cols())));
    }
    Ok(())
}

/// Minimizes `f` over `[lo, hi]`: a coarse pass, then successive zooms
/// around the best few coarse local minima until the spacing reaches `fine`.
fn grid_minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64, coarse: f64, fine: f64) -> (f64, f64) {
    let count = ((hi - lo) / coarse).round() as usize;
    let xs: Vec<f64> = (0..=count).map(|k| lo + k as f64 * coarse).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut minima: Vec<usize> = (0..xs.len())
        .filter(|&k| (k == 0 || ys[k] <= ys[k - 1]) && (k + 1 == xs.len() || ys[k] <= ys[k + 1]))
        .collect();
    minima.sort_by(|&p, &q| ys[p].total_cmp(&ys[q]));
    minima.truncate(REFINED_MINIMA);
    let mut best = (xs[minima[0]], ys[minima[0]]);
    for &k in &minima {
        let (mut center, mut value) = (xs[k], ys[k]);
        let mut h = coarse;
        while h > fine * (1.0 + 1e-9) {
            let next = (h / 10.0).max(fine);
            let steps = (h / next).round() as i64;
            for t in -steps..=steps {
                let x = (center + t as f64 * next).clamp(lo, hi);
                let y = f(x);
                if y < value {
                    value = y;
                    center = x;
                }
            }
            h = next;
        }
        if value < best.1 {
            best = (center, value);
        }
    }
    best
}

fn g_from_angle(i: usize, j: usize, theta: f64, family: GFamily) -> GTransform {
    GTransform::new(i, j, theta.cos(), theta.sin(), family).expect("unit norm")
}

fn brute_g(a: &DenseMatrix, b: &DenseMatrix, fine: f64) -> Result<BruteG> {
    let n = a.require_square()?;
    check_size(n)?;
    same_shape(n, b)?;
    if n < 2 {
        return Err(Error::InvalidArgument("a G-transform needs n >= 2".into()));
    }
    let mut cells = Vec::new();
    for family in [GFamily::Rotation, GFamily::Reflection] {
        for i in 0..n {
            for j in i + 1..n {
                cells.push((family, i, j));
            }
        }
    }
    let results: Vec<BruteG> = cells
        .par_iter()
        .map(|&(family, i, j)| {
            let f = |theta: f64| {
                let mut m = b.clone();
                g_from_angle(i, j, theta, family).conjugate(&mut m);
                a.dist_sq(&m).expect("checked")
            };
            let (theta, objective) = grid_minimize(f, 0.0, std::f64::consts::TAU, ANGLE_COARSE, fine);
            BruteG { objective, family, i, j, transform: g_from_angle(i, j, theta, family) }
        })
        .collect();
    Ok(results
        .into_iter()
        .reduce(|best, r| if r.objective < best.objective { r } else { best })
        .expect("at least one pair"))
}

/// Best `||S_k - G diag(s_bar) G^T||^2` over all pairs, both families and
/// an angle grid refined to `G_INIT_STEP`.
pub fn brute_g_init(s_k: &DenseMatrix, s_bar: &[f64]) -> Result<BruteG> {
    let n = s_k.require_square()?;
    if s_bar.len() != n {
        return Err(dims_mismatch(n, s_bar.len()));
    }
    brute_g(s_k, &DenseMatrix::from_diag(s_bar), G_INIT_STEP)
}

/// Best `||A - G B G^T||^2` with the angle grid refined to `G_UPDATE_STEP`.
pub fn brute_g_update(a: &DenseMatrix, b: &DenseMatrix) -> Result<BruteG> {
    brute_g(a, b, G_UPDATE_STEP)
}

fn t_slots(n: usize) -> Vec<(TKind, usize, usize)> {
    let mut slots: Vec<(TKind, usize, usize)> = (0..n).map(|i| (TKind::Scale, i, i)).collect();
    for kind in [TKind::ShearUpper, TKind::ShearLower] {
        for i in 0..n {
            for j in i + 1..n {
                slots.push((kind, i, j));
            }
        }
    }
    slots
}

fn check_t_context(c: &DenseMatrix, ctx: &TContext) -> Result<usize> {
    let n = c.require_square()?;
    check_size(n)?;
    same_shape(n, ctx.b())?;
    if let TContext::Update { a, d, .. } = ctx {
        same_shape(n, a)?;
        same_shape(n, d)?;
    }
    Ok(n)
}

/// Grid minimum of the dense objective over `a in [-10, 10]` for one slot.
/// Scale candidates with `|a|` below the invertibility floor are skipped.
pub fn brute_t_slot(c: &DenseMatrix, ctx: TContext, kind: TKind, i: usize, j: usize) -> Result<BruteT> {
    let n = check_t_context(c, &ctx)?;
    let valid = match kind {
        TKind::Scale => i == j && i < n,
        _ => i < j && j < n,
    };
    if !valid {
        return Err(Error::InvalidArgument(format!("bad {} slot ({i}, {j})", kind.name())));
    }
    Ok(slot_minimum(c, &ctx, kind, i, j))
}

fn slot_minimum(c: &DenseMatrix, ctx: &TContext, kind: TKind, i: usize, j: usize) -> BruteT {
    let f = |a: f64| {
        if kind == TKind::Scale && a.abs() < SCALE_FLOOR {
            return f64::INFINITY;
        }
        ctx.objective(c, &TTransform::new(kind, i, j, a).expect("valid slot"))
    };
    let (a, objective) = grid_minimize(f, -A_RANGE, A_RANGE, A_COARSE, T_STEP);
    BruteT { objective, kind, i, j, a }
}

/// Best slot over all scales and shears.
pub fn brute_t(c: &DenseMatrix, ctx: TContext) -> Result<BruteT> {
    let n = check_t_context(c, &ctx)?;
    let results: Vec<BruteT> =
        t_slots(n).par_iter().map(|&(kind, i, j)| slot_minimum(c, &ctx, kind, i, j)).collect();
    results
        .into_iter()
        .reduce(|best, r| if r.objective < best.objective { r } else { best })
        .ok_or(Error::InvalidArgument("empty matrix".into()))
}

/// Classic Jacobi stopped after `g` rotations: each pivots on the largest
/// off-diagonal magnitude and zeroes it with the smaller of the two
/// admissible angles. The first rotation is stored last, so the chain maps
/// the working eigenbasis back to `S`.
pub fn jacobi_truncated(s: &DenseMatrix, g: usize) -> Result<TransformChain> {
    let (chain, _) = jacobi_truncated_traced(s, g)?;
    Ok(chain)
}

/// As `jacobi_truncated`, also returning the off-diagonal mass
/// `||M - diag(M)||^2` of the working matrix before each rotation and after
/// the last.
pub fn jacobi_truncated_traced(s: &DenseMatrix, g: usize) -> Result<(TransformChain, Vec<f64>)> {
    let n = s.require_square()?;
    s.check_finite()?;
    let asym = s.max_asymmetry();
    if asym > SYMMETRY_TOL * s.max_abs() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if g > 0 && n < 2 {
        return Err(Error::InvalidArgument("a G-transform needs n >= 2".into()));
    }
    let mut m = s.clone();
    m.set_symmetric_unchecked();
    let off = |m: &DenseMatrix| m.dist_sq_to_diag(&m.diag());
    let mut trace = vec![off(&m)];
    let mut rotations = Vec::with_capacity(g);
    for _ in 0..g {
        let (mut p, mut q, mut best) = (0, 1, -1.0);
        for i in 0..n {
            for j in i + 1..n {
                if m[(i, j)].abs() > best {
                    best = m[(i, j)].abs();
                    (p, q) = (i, j);
                }
            }
        }
        let t = jacobi_rotation(m[(p, p)], m[(p, q)], m[(q, q)], p, q);
        t.conjugate_transpose(&mut m);
        m[(p, q)] = 0.0;
        m[(q, p)] = 0.0;
        m.set_symmetric_unchecked();
        rotations.push(t);
        trace.push(off(&m));
    }
    rotations.reverse();
    Ok((TransformChain::new_g(n, rotations, m.diag())?, trace))
}

/// Rotation `J` with `(J^T M J)_pq = 0` and `|theta| <= pi/4`.
fn jacobi_rotation(app: f64, apq: f64, aqq: f64, p: usize, q: usize) -> GTransform {
    if apq == 0.0 {
        return GTransform::identity(p, q);
    }
    let tau = (aqq - app) / (2.0 * apq);
    let t = if tau >= 0.0 { 1.0 / (tau + (1.0 + tau * tau).sqrt()) } else { -1.0 / (-tau + (1.0 + tau * tau).sqrt()) };
    let c = 1.0 / (1.0 + t * t).sqrt();
    GTransform::normalized(p, q, c, t * c, GFamily::Rotation).expect("unit norm")
}

/// Eigenvalues (descending) and eigenvectors (as columns) of a symmetric
/// matrix by cyclic Jacobi.
pub fn symmetric_eigen(s: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = s.require_square()?;
    let mut m = s.clone();
    let mut v = DenseMatrix::identity(n);
    let norm = s.frobenius_norm_sq();
    let mut converged = false;
    for _ in 0..100 {
        if m.dist_sq_to_diag(&m.diag()) <= 1e-30 * norm {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)] != 0.0 {
                    let t = jacobi_rotation(m[(p, p)], m[(p, q)], m[(q, q)], p, q);
                    t.conjugate_transpose(&mut m);
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    t.right_mul(&mut v);
                }
            }
        }
    }
    if !converged && m.dist_sq_to_diag(&m.diag()) > 1e-24 * norm {
        return Err(Error::NoConvergence);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, dst)] = v[(r, src)];
        }
    }
    Ok((values, vecs))
}

/// Best rank-`r` approximation `X Q Q^T`, with `Q` the top right singular
/// subspace from orthogonal iteration on `X^T X` with Rayleigh-Ritz.
pub fn low_rank_baseline(x: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let (rows, n) = (x.rows(), x.cols());
    if r > n.min(rows) {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds {}", n.min(rows))));
    }
    if r == n {
        return Ok(x.clone());
    }
    if r == 0 {
        return Ok(DenseMatrix::zeros(rows, n));
    }
    let gram = x.tr_matmul(x)?;
    let q = top_subspace(&gram, r)?;
    let xq = x.matmul(&q)?;
    xq.matmul_tr(&q)
}

/// Orthonormal basis (n x r) of the dominant eigenspace of a PSD matrix.
fn top_subspace(m: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let n = m.rows();
    let k = (r + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c6f7772616e6b);
    let mut q = DenseMatrix::from_vec(n, k, (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    orthonormalize(&mut q, &mut rng);
    let scale = m.frobenius_norm_sq().sqrt();
    if scale == 0.0 {
        return Ok(first_cols(&q, r));
    }
    for _ in 0..20_000 {
        let mut y = m.matmul(&q)?;
        orthonormalize(&mut y, &mut rng);
        // Rayleigh-Ritz: rotate the block onto the eigenvectors of Y^T M Y
        let h = y.tr_matmul(&m.matmul(&y)?)?;
        let (_, w) = symmetric_eigen(&sym_part(&h))?;
        q = y.matmul(&w)?;
        let mq = m.matmul(&q)?;
        let residual = (0..r)
            .map(|t| {
                let col = q.col(t);
                let theta = dot(&col, &mq.col(t));
                (0..n).map(|s| (mq[(s, t)] - theta * col[s]).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt();
        if residual <= 1e-10 * scale {
            break;
        }
    }
    Ok(first_cols(&q, r))
}

fn sym_part(h: &DenseMatrix) -> DenseMatrix {
    let n = h.rows();
    let data = (0..n * n).map(|k| 0.5 * (h[(k / n, k % n)] + h[(k % n, k / n)])).collect();
    DenseMatrix::symmetric_from_vec(n, data).expect("symmetrized")
}

fn first_cols(q: &DenseMatrix, r: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(q.rows(), r);
    for s in 0..q.rows() {
        for t in 0..r {
            out[(s, t)] = q[(s, t)];
        }
    }
    out
}

/// Modified Gram-Schmidt with two passes; collapsed columns are replaced by
/// fresh random directions.
fn orthonormalize(q: &mut DenseMatrix, rng: &mut ChaCha8Rng) {
    let (n, k) = (q.rows(), q.cols());
    for t in 0..k {
        let mut col = q.col(t);
        let original: f64 = dot(&col, &col).sqrt();
        for attempt in 0..4 {
            for _ in 0..2 {
                for u in 0..t {
                    let prev = q.col(u);
                    let h = dot(&prev, &col);
                    col.iter_mut().zip(&prev).for_each(|(x, p)| *x -= h * p);
                }
            }
            let norm = dot(&col, &col).sqrt();
            if norm > 1e-10 * original.max(1e-300) && norm > 0.0 {
                col.iter_mut().for_each(|x| *x /= norm);
                break;
            }
            col = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if attempt == 3 {
                col.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        for s in 0..n {
            q[(s, t)] = col[s];
        }
    }
}
