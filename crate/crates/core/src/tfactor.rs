//! General branch: `C ~ T diag(c) T^{-1}` with `T` a chain of scalings and
//! shears.
//!
//! For slot `k` of `T = T_m ... T_1` write `A = T_m ... T_{k+1}`,
//! `D = A^{-1}` and `B = T_{k-1} ... T_1 diag(c) (T_{k-1} ... T_1)^{-1}`, so
//! the reconstruction is `A T_k B T_k^{-1} D`. Initialization runs
//! `k = 1, ..., m` with `A = D = I`.
//!
//! A slot acts on the pair `(p, q)`: `T = I + a e_p e_q^T` for shears
//! (`(p, q) = (i, j)` upper, `(j, i)` lower) and `p = q = i` for scalings.
//! Every cost coefficient is an inner product of the four vectors
//! `u1 = A e_p`, `u2 = A B e_p`, `v1 = D^T B^T e_q` and `v2 = D^T e_q`, and
//! of the residual `R0 = C - A B D` against them.

use rayon::prelude::*;

use crate::chains::{TKind, TTransform, TransformChain, SCALE_FLOOR};
use crate::error::{dims_mismatch, Error, Result};
use crate::linalg::{dot, DenseMatrix, Polynomial};
use crate::report::{error_scale, FactorizationReport, FactorizeOptions, Mode, SpectrumRule, SpectrumSolver, Stopwatch};

/// Largest admissible `|a|`; the bounds themselves are always candidates.
pub const A_MAX: f64 = 1e6;

/// Relative pivot floor of the spectrum normal equations.
pub const PIVOT_REL: f64 = 1e-12;

const PAR_MIN_SLOTS: usize = 256;

/// Relative rounding floor below which a predicted cost decrease is noise.
const COST_NOISE: f64 = 1e-12;

fn slot_pq(kind: TKind, i: usize, j: usize) -> (usize, usize) {
    match kind {
        TKind::Scale | TKind::ShearUpper => (i, j),
        TKind::ShearLower => (j, i),
    }
}

fn slots(n: usize) -> Vec<(TKind, usize, usize)> {
    let mut out: Vec<(TKind, usize, usize)> = (0..n).map(|i| (TKind::Scale, i, i)).collect();
    for kind in [TKind::ShearUpper, TKind::ShearLower] {
        for i in 0..n {
            for j in i + 1..n {
                out.push((kind, i, j));
            }
        }
    }
    out
}

fn check_slot(n: usize, kind: TKind, i: usize, j: usize) -> Result<()> {
    let ok = match kind {
        TKind::Scale => i == j && i < n,
        _ => i < j && j < n,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("bad {} slot ({i}, {j}) for n = {n}", kind.name())))
    }
}

/// Scalars that determine the cost of one slot as a function of `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Terms {
    /// `u1.u1`
    h: f64,
    /// `v2.v2`
    v: f64,
    /// `u1.u2`
    hb: f64,
    /// `v1.v2`
    bv: f64,
    /// `u2.u2`
    bhb: f64,
    /// `v1.v1`
    bvb: f64,
    /// `B_qp`
    b_qp: f64,
    /// `u1^T R0 v2`
    q: f64,
    /// `u1^T R0 v1`
    qbt: f64,
    /// `u2^T R0 v2`
    btq: f64,
    /// Upper bound on `||R0||_F`
    r: f64,
}

impl Terms {
    /// `a -> ||R0 - A (T B T^{-1} - B) D||^2 - ||R0||^2`
    fn cost(&self, kind: TKind, a: f64) -> f64 {
        match kind {
            TKind::Scale => {
                let (s1, s2, m11, m12, m22) = self.scale_parts();
                let (p, q) = (a - 1.0, 1.0 / a - 1.0);
                -2.0 * p * s1 - 2.0 * q * s2 + p * p * m11 + 2.0 * p * q * m12 + q * q * m22
            }
            _ => Polynomial::new(self.shear_coeffs().to_vec()).eval(a),
        }
    }

    fn shear_coeffs(&self) -> [f64; 5] {
        let r1 = self.qbt - self.btq;
        let r2 = -self.b_qp * self.q;
        let n11 = self.h * self.bvb + self.bhb * self.v - 2.0 * self.hb * self.bv;
        let n12 = -self.b_qp * (self.h * self.bv - self.hb * self.v);
        let n22 = self.b_qp * self.b_qp * self.h * self.v;
        [0.0, -2.0 * r1, n11 - 2.0 * r2, 2.0 * n12, n22]
    }

    fn scale_parts(&self) -> (f64, f64, f64, f64, f64) {
        let b = self.b_qp;
        let s1 = self.qbt - b * self.q;
        let s2 = self.btq - b * self.q;
        let m11 = self.h * (self.bvb - 2.0 * b * self.bv + b * b * self.v);
        let m22 = (self.bhb - 2.0 * b * self.hb + b * b * self.h) * self.v;
        let m12 = (self.hb - b * self.h) * (self.bv - b * self.v);
        (s1, s2, m11, m12, m22)
    }

    /// Stationary points of the cost: the derivative for shears, and the
    /// numerator of the derivative of `a^2 cost(a)` divided by `a^2` for
    /// scalings.
    fn stationarity(&self, kind: TKind) -> Polynomial {
        match kind {
            TKind::Scale => {
                let (s1, s2, m11, m12, m22) = self.scale_parts();
                let ap = Polynomial::new(vec![0.0, -1.0, 1.0]);
                let aq = Polynomial::new(vec![1.0, -1.0]);
                let a = Polynomial::new(vec![0.0, 1.0]);
                let p = a.mul(&ap).scale(-2.0 * s1)
                    .add(&a.mul(&aq).scale(-2.0 * s2))
                    .add(&ap.mul(&ap).scale(m11))
                    .add(&ap.mul(&aq).scale(2.0 * m12))
                    .add(&aq.mul(&aq).scale(m22));
                a.mul(&p.derivative()).add(&p.scale(-2.0))
            }
            _ => Polynomial::new(self.shear_coeffs().to_vec()).derivative(),
        }
    }

    /// Bound on the rounding error of `cost(kind, a)`, from
    /// `||R0||^2 - ||R0 - X||^2 <= (||R0|| + ||X||)^2 - ||R0||^2`.
    fn noise(&self, kind: TKind, a: f64) -> f64 {
        let (nu1, nu2, nv1, nv2) = (self.h.sqrt(), self.bhb.sqrt(), self.bvb.sqrt(), self.v.sqrt());
        let w = self.b_qp.abs() * nu1 * nv2;
        let x = match kind {
            TKind::Scale => {
                let (p, q) = (a - 1.0, 1.0 / a - 1.0);
                p.abs() * nu1 * nv1 + q.abs() * nu2 * nv2 + (p + q).abs() * w
            }
            _ => a.abs() * (nu1 * nv1 + nu2 * nv2) + a * a * w,
        };
        COST_NOISE * x * (2.0 * self.r + x)
    }

    /// Global minimizer over the admissible range; the identity comes first
    /// so it wins ties, and decreases within rounding noise are ignored.
    fn minimize(&self, kind: TKind) -> (f64, f64) {
        let identity = if kind == TKind::Scale { 1.0 } else { 0.0 };
        let mut candidates = vec![identity, -A_MAX, A_MAX];
        let stat = self.stationarity(kind);
        if !stat.is_zero() {
            if let Ok(roots) = stat.real_roots() {
                candidates.extend(roots.into_iter().filter(|r| {
                    r.is_finite() && r.abs() <= A_MAX && (kind != TKind::Scale || r.abs() >= SCALE_FLOOR)
                }));
            }
        }
        let mut best = (identity, 0.0);
        for a in candidates {
            let v = self.cost(kind, a);
            if v < best.1 && v < -self.noise(kind, a) {
                best = (a, v);
            }
        }
        best
    }
}

/// Workspace for initialization against `B = B^(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TInitWorkspace {
    /// `C - B`
    pub residual: DenseMatrix,
    /// `(C - B) B^T`
    pub v: DenseMatrix,
    /// `(C - B)^T B`
    pub h: DenseMatrix,
    /// `(C - B) o B`
    pub j: DenseMatrix,
    /// `B_ii^2`
    pub l: Vec<f64>,
    pub n_rows: Vec<f64>,
    pub m_cols: Vec<f64>,
    residual_norm: f64,
}

impl TInitWorkspace {
    pub fn new(c: &DenseMatrix, b_k: &DenseMatrix) -> Result<Self> {
        let n = c.require_square()?;
        if b_k.rows() != n || b_k.cols() != n {
            return Err(dims_mismatch(format!("{n}x{n}"), format!("{}x{}", b_k.rows(), b_k.cols())));
        }
        let residual = c.sub(b_k)?;
        Ok(Self {
            v: residual.matmul_tr(b_k)?,
            h: residual.tr_matmul(b_k)?,
            j: residual.hadamard(b_k)?,
            l: b_k.diag().iter().map(|x| x * x).collect(),
            n_rows: b_k.row_norms_sq(),
            m_cols: b_k.col_norms_sq(),
            residual_norm: residual.frobenius_norm_sq().sqrt(),
            residual,
        })
    }

    fn terms(&self, b: &DenseMatrix, kind: TKind, i: usize, j: usize) -> Terms {
        let (p, q) = slot_pq(kind, i, j);
        Terms {
            h: 1.0,
            v: 1.0,
            hb: b[(p, p)],
            bv: b[(q, q)],
            bhb: self.m_cols[p],
            bvb: self.n_rows[q],
            b_qp: b[(q, p)],
            q: self.residual[(p, q)],
            qbt: self.v[(p, q)],
            btq: self.h[(q, p)],
            r: self.residual_norm,
        }
    }
}

/// `||C - T B T^{-1}||^2 - ||C - B||^2` for `T = T(kind, i, j, a)`.
pub fn t_init_cost(
    c: &DenseMatrix,
    b_k: &DenseMatrix,
    ws: &TInitWorkspace,
    kind: TKind,
    i: usize,
    j: usize,
    a: f64,
) -> Result<f64> {
    let n = c.require_square()?;
    check_slot(n, kind, i, j)?;
    if kind == TKind::Scale && !(a.abs() >= SCALE_FLOOR) {
        return Err(Error::ZeroScale(a));
    }
    Ok(ws.terms(b_k, kind, i, j).cost(kind, a))
}

/// Outcome of one slot optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct TStep {
    pub kind: TKind,
    pub i: usize,
    pub j: usize,
    pub a: f64,
    pub transform: TTransform,
    /// Objective change relative to leaving the transform out.
    pub delta: f64,
    /// Objective with the transform in place.
    pub objective: f64,
}

fn best_slot(n: usize, eval: impl Fn(TKind, usize, usize) -> (f64, f64) + Sync) -> (TKind, usize, usize, f64, f64) {
    let all = slots(n);
    let results: Vec<(f64, f64)> = if all.len() >= PAR_MIN_SLOTS {
        all.par_iter().map(|&(k, i, j)| eval(k, i, j)).collect()
    } else {
        all.iter().map(|&(k, i, j)| eval(k, i, j)).collect()
    };
    let mut best = (all[0].0, all[0].1, all[0].2, 1.0, 0.0);
    let mut best_value = f64::INFINITY;
    for (&(k, i, j), &(a, v)) in all.iter().zip(&results) {
        if v < best_value {
            best_value = v;
            best = (k, i, j, a, v);
        }
    }
    if best_value >= 0.0 {
        // nothing improves; place the identity at the first slot
        let (k, i, j) = all[0];
        return (k, i, j, 1.0, 0.0);
    }
    best
}

fn make_step(kind: TKind, i: usize, j: usize, a: f64, delta: f64, base: f64) -> Result<TStep> {
    let transform = TTransform::new(kind, i, j, a)?;
    Ok(TStep { kind, i, j, a, transform, delta, objective: base + delta })
}

/// Best scaling or shear to place against `B^(k)`, over every slot.
pub fn init_t_step(c: &DenseMatrix, b_k: &DenseMatrix, ws: &TInitWorkspace) -> Result<TStep> {
    let n = c.require_square()?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let (kind, i, j, a, delta) = best_slot(n, |k, i, j| ws.terms(b_k, k, i, j).minimize(k));
    make_step(kind, i, j, a, delta, ws.residual.frobenius_norm_sq())
}

/// Greedy initialization of `m` transforms, with the objective before the
/// first and after each placed transform.
pub fn init_t_chain_traced(c: &DenseMatrix, c_bar: &[f64], m: usize) -> Result<(TransformChain, Vec<f64>)> {
    let n = c.require_square()?;
    if c_bar.len() != n {
        return Err(dims_mismatch(format!("{n} spectrum entries"), c_bar.len()));
    }
    let mut b = DenseMatrix::from_diag(c_bar);
    let mut trace = vec![c.dist_sq(&b)?];
    let mut ts = Vec::with_capacity(m);
    for _ in 0..m {
        let ws = TInitWorkspace::new(c, &b)?;
        let step = init_t_step(c, &b, &ws)?;
        step.transform.conjugate(&mut b);
        ts.push(step.transform);
        trace.push(c.dist_sq(&b)?);
    }
    Ok((TransformChain::new_t(n, ts, c_bar.to_vec())?, trace))
}

pub fn init_t_chain(c: &DenseMatrix, c_bar: &[f64], m: usize) -> Result<TransformChain> {
    Ok(init_t_chain_traced(c, c_bar, m)?.0)
}

/// Workspace for updating slot `k` given `A`, `B` and `D = A^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TUpdateWorkspace {
    /// `D D^T`
    pub v: DenseMatrix,
    /// `A^T A`
    pub h: DenseMatrix,
    /// `A^T C`
    pub j: DenseMatrix,
    /// `A^T (C - A B D) D^T`
    q: DenseMatrix,
    qbt: DenseMatrix,
    btq: DenseMatrix,
    hb: DenseMatrix,
    bv: DenseMatrix,
    bhb: Vec<f64>,
    bvb: Vec<f64>,
    /// `||C - A B D||^2`
    base: f64,
}

impl TUpdateWorkspace {
    pub fn new(c: &DenseMatrix, a_k: &DenseMatrix, b_k: &DenseMatrix, d_k: &DenseMatrix) -> Result<Self> {
        let n = c.require_square()?;
        for m in [a_k, b_k, d_k] {
            if m.rows() != n || m.cols() != n {
                return Err(dims_mismatch(format!("{n}x{n}"), format!("{}x{}", m.rows(), m.cols())));
            }
        }
        let residual = c.sub(&a_k.matmul(b_k)?.matmul(d_k)?)?;
        let mut ws = Self::from_residual(a_k, b_k, d_k, &residual)?;
        ws.j = a_k.tr_matmul(c)?;
        Ok(ws)
    }

    /// Builds everything except `j` from a known residual `C - A B D`.
    fn from_residual(a: &DenseMatrix, b: &DenseMatrix, d: &DenseMatrix, r0: &DenseMatrix) -> Result<Self> {
        let h = a.tr_matmul(a)?;
        let v = d.matmul_tr(d)?;
        let q = a.tr_matmul(r0)?.matmul_tr(d)?;
        let hb = h.matmul(b)?;
        let bv = b.matmul(&v)?;
        let n = b.rows();
        let bhb = (0..n).map(|p| (0..n).map(|l| b[(l, p)] * hb[(l, p)]).sum()).collect();
        let bvb = (0..n).map(|q| dot(bv.row(q), b.row(q))).collect();
        Ok(Self {
            qbt: q.matmul_tr(b)?,
            btq: b.tr_matmul(&q)?,
            j: DenseMatrix::zeros(0, 0),
            base: r0.frobenius_norm_sq(),
            q,
            hb,
            bv,
            bhb,
            bvb,
            h,
            v,
        })
    }

    fn terms(&self, b: &DenseMatrix, kind: TKind, i: usize, j: usize) -> Terms {
        let (p, q) = slot_pq(kind, i, j);
        Terms {
            h: self.h[(p, p)],
            v: self.v[(q, q)],
            hb: self.hb[(p, p)],
            bv: self.bv[(q, q)],
            bhb: self.bhb[p],
            bvb: self.bvb[q],
            b_qp: b[(q, p)],
            q: self.q[(p, q)],
            qbt: self.qbt[(p, q)],
            btq: self.btq[(p, q)],
            r: self.base.sqrt(),
        }
    }

    /// `||C - A B D||^2`
    pub fn base(&self) -> f64 {
        self.base
    }
}

/// Which slots `update_t_step` may choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    AllPairs,
    FixedPair(TKind, usize, usize),
}

/// `||C - A T B T^{-1} D||^2 - ||C - A B D||^2`
pub fn update_t_cost(b_k: &DenseMatrix, ws: &TUpdateWorkspace, kind: TKind, i: usize, j: usize, a: f64) -> Result<f64> {
    check_slot(b_k.rows(), kind, i, j)?;
    if kind == TKind::Scale && !(a.abs() >= SCALE_FLOOR) {
        return Err(Error::ZeroScale(a));
    }
    Ok(ws.terms(b_k, kind, i, j).cost(kind, a))
}

/// Best transform for slot `k` over the requested scope.
pub fn update_t_step(
    c: &DenseMatrix,
    a_k: &DenseMatrix,
    b_k: &DenseMatrix,
    d_k: &DenseMatrix,
    ws: &TUpdateWorkspace,
    scope: Scope,
) -> Result<TStep> {
    let n = c.require_square()?;
    if a_k.rows() != n || b_k.rows() != n || d_k.rows() != n {
        return Err(dims_mismatch(n, a_k.rows().max(b_k.rows()).max(d_k.rows())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    match scope {
        Scope::AllPairs => {
            let (kind, i, j, a, delta) = best_slot(n, |k, i, j| ws.terms(b_k, k, i, j).minimize(k));
            make_step(kind, i, j, a, delta, ws.base)
        }
        Scope::FixedPair(kind, i, j) => {
            check_slot(n, kind, i, j)?;
            let (a, delta) = ws.terms(b_k, kind, i, j).minimize(kind);
            make_step(kind, i, j, a, delta, ws.base)
        }
    }
}

/// The four slot vectors and `B_qp`.
struct SlotVectors {
    u1: Vec<f64>,
    u2: Vec<f64>,
    v1: Vec<f64>,
    v2: Vec<f64>,
    b_qp: f64,
}

impl SlotVectors {
    fn new(a: &DenseMatrix, b: &DenseMatrix, d: &DenseMatrix, kind: TKind, i: usize, j: usize) -> Self {
        let (p, q) = slot_pq(kind, i, j);
        let n = a.rows();
        let b_col = b.col(p);
        let u2 = (0..n).map(|r| dot(a.row(r), &b_col)).collect();
        let mut v1 = vec![0.0; n];
        for (l, &blq) in b.row(q).iter().enumerate() {
            if blq != 0.0 {
                v1.iter_mut().zip(d.row(l)).for_each(|(o, x)| *o += blq * x);
            }
        }
        Self { u1: a.col(p), u2, v1, v2: d.row(q).to_vec(), b_qp: b[(q, p)] }
    }

    /// `A (T B T^{-1} - B) D = x u1 v1^T + y u2 v2^T + z u1 v2^T`
    fn coefficients(&self, kind: TKind, a: f64) -> [f64; 3] {
        match kind {
            TKind::Scale => {
                let (p, q) = (a - 1.0, 1.0 / a - 1.0);
                [p, q, -self.b_qp * (p + q)]
            }
            _ => [a, -a, -a * a * self.b_qp],
        }
    }

    /// `m += s[0] u1 v1^T + s[1] u2 v2^T + s[2] u1 v2^T`
    fn add_to(&self, m: &mut DenseMatrix, s: [f64; 3]) {
        let n = m.cols();
        let data = m.as_mut_slice();
        for r in 0..n {
            let (x, y, z) = (s[0] * self.u1[r], s[1] * self.u2[r], s[2] * self.u1[r]);
            if x == 0.0 && y == 0.0 && z == 0.0 {
                continue;
            }
            let row = &mut data[r * n..(r + 1) * n];
            for c in 0..n {
                row[c] += x * self.v1[c] + y * self.v2[c] + z * self.v2[c];
            }
        }
    }

    /// Terms against `R0 = E + (current contribution)`, in O(n^2).
    fn terms(&self, e: &DenseMatrix, current: [f64; 3]) -> Terms {
        let r0_times = |w: &[f64]| -> Vec<f64> {
            let (d1, d2) = (dot(&self.v1, w), dot(&self.v2, w));
            e.matvec(w)
                .expect("square")
                .into_iter()
                .enumerate()
                .map(|(r, x)| x + current[0] * self.u1[r] * d1 + current[1] * self.u2[r] * d2 + current[2] * self.u1[r] * d2)
                .collect()
        };
        let w1 = r0_times(&self.v1);
        let w2 = r0_times(&self.v2);
        let (h, v) = (dot(&self.u1, &self.u1), dot(&self.v2, &self.v2));
        let (bhb, bvb) = (dot(&self.u2, &self.u2), dot(&self.v1, &self.v1));
        let contribution = current[0].abs() * (h * bvb).sqrt()
            + current[1].abs() * (bhb * v).sqrt()
            + current[2].abs() * (h * v).sqrt();
        Terms {
            h,
            v,
            hb: dot(&self.u1, &self.u2),
            bv: dot(&self.v1, &self.v2),
            bhb,
            bvb,
            b_qp: self.b_qp,
            q: dot(&self.u1, &w2),
            qbt: dot(&self.u1, &w1),
            btq: dot(&self.u2, &w2),
            r: e.frobenius_norm_sq().sqrt() + contribution,
        }
    }
}

/// `A`, `B`, `D` for slot 1 and the residual `C - T diag(c) T^{-1}`.
struct SweepState {
    a: DenseMatrix,
    b: DenseMatrix,
    d: DenseMatrix,
    e: DenseMatrix,
}

impl SweepState {
    fn new(c: &DenseMatrix, ts: &[TTransform], c_bar: &[f64]) -> Result<Self> {
        let n = c.rows();
        let mut a = DenseMatrix::identity(n);
        let mut d = DenseMatrix::identity(n);
        for t in ts.iter().skip(1) {
            t.left_mul(&mut a);
            t.right_mul_inverse(&mut d);
        }
        let mut recon = DenseMatrix::from_diag(c_bar);
        for t in ts {
            t.conjugate(&mut recon);
        }
        Ok(Self { a, b: DenseMatrix::from_diag(c_bar), d, e: c.sub(&recon)? })
    }

    /// Moves from slot `k` (now holding `placed`) to slot `k + 1`.
    fn advance(&mut self, placed: &TTransform, next: Option<&TTransform>) {
        placed.conjugate(&mut self.b);
        if let Some(t) = next {
            t.right_mul_inverse(&mut self.a);
            t.left_mul(&mut self.d);
        }
    }
}

fn sweep(c: &DenseMatrix, chain: &TransformChain, mode: Mode) -> Result<TransformChain> {
    let mut ts = chain.t_transforms().expect("t_chain").to_vec();
    if ts.is_empty() {
        return Ok(chain.clone());
    }
    let n = chain.n();
    let mut st = SweepState::new(c, &ts, chain.spectrum())?;
    for k in 0..ts.len() {
        let cur = ts[k];
        let sv = SlotVectors::new(&st.a, &st.b, &st.d, cur.kind(), cur.i(), cur.j());
        let cur_coef = sv.coefficients(cur.kind(), cur.a());
        let next = match mode {
            Mode::Polish => {
                let terms = sv.terms(&st.e, cur_coef);
                let (a, value) = terms.minimize(cur.kind());
                if value < terms.cost(cur.kind(), cur.a()) {
                    let t = cur.with_a(a)?;
                    sv.add_to(&mut st.e, sub3(cur_coef, sv.coefficients(t.kind(), a)));
                    t
                } else {
                    cur
                }
            }
            Mode::Full => {
                let mut r0 = st.e.clone();
                sv.add_to(&mut r0, cur_coef);
                let ws = TUpdateWorkspace::from_residual(&st.a, &st.b, &st.d, &r0)?;
                let current_value = ws.terms(&st.b, cur.kind(), cur.i(), cur.j()).cost(cur.kind(), cur.a());
                let (kind, i, j, a, value) = best_slot(n, |k, i, j| ws.terms(&st.b, k, i, j).minimize(k));
                if value < current_value {
                    let t = TTransform::new(kind, i, j, a)?;
                    let nv = SlotVectors::new(&st.a, &st.b, &st.d, kind, i, j);
                    let c_new = nv.coefficients(kind, a);
                    nv.add_to(&mut r0, [-c_new[0], -c_new[1], -c_new[2]]);
                    st.e = r0;
                    t
                } else {
                    cur
                }
            }
        };
        ts[k] = next;
        st.advance(&next, ts.get(k + 1));
    }
    TransformChain::new_t(n, ts, chain.spectrum().to_vec())
}

fn sub3(x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    [x[0] - y[0], x[1] - y[1], x[2] - y[2]]
}

fn check_chain(c: &DenseMatrix, chain: &TransformChain) -> Result<TransformChain> {
    let n = c.require_square()?;
    if chain.n() != n {
        return Err(dims_mismatch(n, chain.n()));
    }
    if chain.t_transforms().is_none() {
        return Err(Error::InvalidArgument("expected a t_chain".into()));
    }
    Ok(chain.clone())
}

/// One polishing sweep: every coefficient re-optimized at its fixed slot,
/// spectrum held at `c_bar`.
pub fn polish_t_chain(c: &DenseMatrix, chain: &TransformChain, c_bar: &[f64]) -> Result<TransformChain> {
    let mut chain = check_chain(c, chain)?;
    chain.set_spectrum(c_bar.to_vec())?;
    sweep(c, &chain, Mode::Polish)
}

/// One full-update sweep: every transform may move to any slot.
pub fn update_t_chain(c: &DenseMatrix, chain: &TransformChain, c_bar: &[f64]) -> Result<TransformChain> {
    let mut chain = check_chain(c, chain)?;
    chain.set_spectrum(c_bar.to_vec())?;
    sweep(c, &chain, Mode::Full)
}

/// `argmin_c ||C - T diag(c) T^{-1}||_F` for a fixed chain.
///
/// The normal matrix is `(T^T T) o (T^{-1} T^{-T})` and the right-hand side
/// is `diag(T^T C T^{-T})`.
pub fn spectrum_update_general(c: &DenseMatrix, chain: &TransformChain, solver: SpectrumSolver) -> Result<Vec<f64>> {
    check_chain(c, chain)?;
    match solver {
        SpectrumSolver::Dense => spectrum_dense(c, chain),
        SpectrumSolver::Iterative => spectrum_cgnr(c, chain),
    }
}

fn spectrum_dense(c: &DenseMatrix, chain: &TransformChain) -> Result<Vec<f64>> {
    let n = chain.n();
    let t = chain.to_dense();
    let ti = chain.to_dense_inverse()?;
    let normal = t.tr_matmul(&t)?.hadamard(&ti.matmul_tr(&ti)?)?;
    let cti = c.matmul_tr(&ti)?;
    let rhs: Vec<f64> = (0..n).map(|p| (0..n).map(|r| t[(r, p)] * cti[(r, p)]).sum()).collect();
    cholesky_solve(&normal, &rhs)
}

fn cholesky_solve(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.rows();
    let max_diag = (0..n).map(|p| m[(p, p)]).fold(0.0_f64, f64::max);
    let mut l = vec![0.0; n * n];
    for p in 0..n {
        for q in 0..=p {
            let s = m[(p, q)] - dot(&l[p * n..p * n + q], &l[q * n..q * n + q]);
            if p == q {
                if !(s > PIVOT_REL * max_diag) {
                    return Err(Error::SingularNormalMatrix { pivot: s });
                }
                l[p * n + p] = s.sqrt();
            } else {
                l[p * n + q] = s / l[q * n + q];
            }
        }
    }
    let mut y = rhs.to_vec();
    for p in 0..n {
        y[p] = (y[p] - dot(&l[p * n..p * n + p], &y[..p])) / l[p * n + p];
    }
    for p in (0..n).rev() {
        let s: f64 = (p + 1..n).map(|r| l[r * n + p] * y[r]).sum();
        y[p] = (y[p] - s) / l[p * n + p];
    }
    Ok(y)
}

/// `c -> T diag(c) T^{-1}`
fn forward_op(chain: &TransformChain, x: &[f64]) -> DenseMatrix {
    let mut m = DenseMatrix::from_diag(x);
    for t in chain.t_transforms().expect("t_chain") {
        t.conjugate(&mut m);
    }
    m
}

/// Adjoint of `forward_op`: `X -> diag(T^T X T^{-T}) = diag(T^{-1} X^T T)`
fn adjoint_op(chain: &TransformChain, x: &DenseMatrix) -> Vec<f64> {
    let mut m = x.transpose();
    for t in chain.t_transforms().expect("t_chain").iter().rev() {
        t.left_mul_inverse(&mut m);
        t.right_mul(&mut m);
    }
    m.diag()
}

/// Conjugate gradients on the normal equations with chain-based products.
fn spectrum_cgnr(c: &DenseMatrix, chain: &TransformChain) -> Result<Vec<f64>> {
    let n = chain.n();
    let mut x = vec![0.0; n];
    let mut resid = c.clone();
    let mut r = adjoint_op(chain, &resid);
    let target = dot(&r, &r).sqrt();
    if target == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..(20 * n).max(200) {
        let kp = forward_op(chain, &p);
        let kk = kp.frobenius_norm_sq();
        if !(kk > 0.0) {
            return Err(Error::SingularNormalMatrix { pivot: kk });
        }
        let alpha = rr / kk;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        resid = resid.sub(&kp.scale(alpha))?;
        r = adjoint_op(chain, &resid);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= 1e-15 * target {
            break;
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    Ok(x)
}

/// `||C - T diag(c) T^{-1}||_F^2`
pub fn objective(c: &DenseMatrix, chain: &TransformChain) -> Result<f64> {
    let mut m = DenseMatrix::from_diag(chain.spectrum());
    for t in chain.t_transforms().ok_or(Error::InvalidArgument("expected a t_chain".into()))? {
        t.conjugate(&mut m);
    }
    c.dist_sq(&m)
}

/// Setup, greedy initialization, then sweeps until the relative error
/// settles within `opts.eps` or `opts.max_iters` sweeps have run.
pub fn factorize_general(c: &DenseMatrix, opts: &FactorizeOptions) -> Result<(TransformChain, FactorizationReport)> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {}", opts.eps)));
    }
    let n = c.require_square()?;
    c.check_finite()?;
    if opts.budget > 0 && n == 0 {
        return Err(Error::InvalidArgument("cannot place transforms in an empty matrix".into()));
    }
    let mut report = FactorizationReport::new("general", n, opts);
    let mut clock = Stopwatch::start();
    let mut total = Stopwatch::start();
    let scale = error_scale(c.frobenius_norm_sq());

    let c_bar = match opts.rule {
        SpectrumRule::Original => {
            let ev = opts.eigenvalues.clone().ok_or(Error::MissingSpectrum)?;
            if ev.len() != n {
                return Err(dims_mismatch(format!("{n} eigenvalues"), ev.len()));
            }
            ev
        }
        SpectrumRule::Update => c.diag(),
    };
    report.timing.setup_secs = clock.lap();

    let (mut chain, init_trace) = init_t_chain_traced(c, &c_bar, opts.budget)?;
    report.init_trace = init_trace.iter().map(|v| v / scale).collect();
    report.timing.init_secs = clock.lap();

    let mut err = objective(c, &chain)?;
    report.sweep_trace.push(err / scale);
    for iter in 1..=opts.max_iters {
        let mut next = sweep(c, &chain, opts.mode)?;
        if opts.rule == SpectrumRule::Update {
            let spec = spectrum_update_general(c, &next, opts.spectrum_solver)?;
            next.set_spectrum(spec)?;
        }
        let next_err = objective(c, &next)?;
        report.iterations = iter;
        let stalled = !(next_err < err);
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
