//! Transform chains: products of sparse Givens-type or scaling/shear factors,
//! their fast application to vectors and matrices, and the chain file format.
//!
//! Transforms are stored first-applied-first. A chain `[t1, t2, ..., tg]`
//! represents the product `tg * ... * t2 * t1`, so `apply(Forward)` runs
//! `t1` first.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{dims_mismatch, Error, Result};
use crate::linalg::DenseMatrix;

/// Tolerance on `c^2 + s^2 = 1`.
pub const UNIT_TOL: f64 = 1e-12;
/// Smallest admissible `|a|` for a scaling transform.
pub const SCALE_FLOOR: f64 = 1e-12;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GFamily {
    /// `[[c, s], [-s, c]]`
    Rotation,
    /// `[[c, s], [s, -c]]`
    Reflection,
}

/// Identity with an orthonormal 2x2 block on rows/columns `(i, j)`, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GTransform {
    i: usize,
    j: usize,
    c: f64,
    s: f64,
    family: GFamily,
}

impl GTransform {
    pub fn new(i: usize, j: usize, c: f64, s: f64, family: GFamily) -> Result<Self> {
        if i >= j {
            return Err(Error::Validation(format!("G-transform needs i < j, got i={i}, j={j}")));
        }
        if !c.is_finite() || !s.is_finite() || (c * c + s * s - 1.0).abs() > UNIT_TOL {
            return Err(Error::Validation(format!("G-transform (c, s) = ({c}, {s}) is not unit norm")));
        }
        Ok(Self { i, j, c, s, family })
    }

    /// Rescales `(c, s)` onto the unit circle before validating.
    pub fn normalized(i: usize, j: usize, c: f64, s: f64, family: GFamily) -> Result<Self> {
        let r = c.hypot(s);
        if r == 0.0 || !r.is_finite() {
            return Err(Error::Validation("G-transform with zero (c, s)".into()));
        }
        Self::new(i, j, c / r, s / r, family)
    }

    pub fn identity(i: usize, j: usize) -> Self {
        assert!(i < j);
        Self { i, j, c: 1.0, s: 0.0, family: GFamily::Rotation }
    }

    /// Builds the transform whose 2x2 block equals `block`, which must be
    /// orthonormal; the family follows from the sign of the determinant.
    pub fn from_block(i: usize, j: usize, block: [[f64; 2]; 2]) -> Result<Self> {
        let det = block[0][0] * block[1][1] - block[0][1] * block[1][0];
        let family = if det >= 0.0 { GFamily::Rotation } else { GFamily::Reflection };
        Self::normalized(i, j, block[0][0], block[0][1], family)
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn family(&self) -> GFamily {
        self.family
    }

    pub fn block(&self) -> [[f64; 2]; 2] {
        match self.family {
            GFamily::Rotation => [[self.c, self.s], [-self.s, self.c]],
            GFamily::Reflection => [[self.c, self.s], [self.s, -self.c]],
        }
    }

    fn block_t(&self) -> [[f64; 2]; 2] {
        let b = self.block();
        [[b[0][0], b[1][0]], [b[0][1], b[1][1]]]
    }

    pub fn apply(&self, x: &mut [f64]) {
        mix(x, self.i, self.j, &self.block());
    }

    pub fn apply_transpose(&self, x: &mut [f64]) {
        mix(x, self.i, self.j, &self.block_t());
    }

    /// `m <- G m`
    pub fn left_mul(&self, m: &mut DenseMatrix) {
        rows_mix(m, self.i, self.j, &self.block());
    }

    /// `m <- G^T m`
    pub fn left_mul_transpose(&self, m: &mut DenseMatrix) {
        rows_mix(m, self.i, self.j, &self.block_t());
    }

    /// `m <- m G`
    pub fn right_mul(&self, m: &mut DenseMatrix) {
        cols_mix(m, self.i, self.j, &self.block_t());
    }

    /// `m <- m G^T`
    pub fn right_mul_transpose(&self, m: &mut DenseMatrix) {
        cols_mix(m, self.i, self.j, &self.block());
    }

    /// `m <- G m G^T`; a symmetric tag survives.
    pub fn conjugate(&self, m: &mut DenseMatrix) {
        let sym = m.is_tagged_symmetric();
        self.left_mul(m);
        self.right_mul_transpose(m);
        if sym {
            resymmetrize_block(m, self.i, self.j);
        }
    }

    /// `m <- G^T m G`; a symmetric tag survives.
    pub fn conjugate_transpose(&self, m: &mut DenseMatrix) {
        let sym = m.is_tagged_symmetric();
        self.left_mul_transpose(m);
        self.right_mul(m);
        if sym {
            resymmetrize_block(m, self.i, self.j);
        }
    }
}

#[inline]
fn mix(x: &mut [f64], i: usize, j: usize, b: &[[f64; 2]; 2]) {
    let (xi, xj) = (x[i], x[j]);
    x[i] = b[0][0] * xi + b[0][1] * xj;
    x[j] = b[1][0] * xi + b[1][1] * xj;
}

/// Rows `i, j` of `m` replaced by `b * [row_i; row_j]`.
fn rows_mix(m: &mut DenseMatrix, i: usize, j: usize, b: &[[f64; 2]; 2]) {
    let n = m.cols();
    let sym = m.is_tagged_symmetric();
    let data = m.as_mut_slice();
    for c in 0..n {
        let (u, v) = (data[i * n + c], data[j * n + c]);
        data[i * n + c] = b[0][0] * u + b[0][1] * v;
        data[j * n + c] = b[1][0] * u + b[1][1] * v;
    }
    if sym {
        m.set_symmetric_unchecked();
    }
}

/// Columns `i, j` of `m` replaced by `[col_i, col_j] * b^T`.
fn cols_mix(m: &mut DenseMatrix, i: usize, j: usize, b: &[[f64; 2]; 2]) {
    let n = m.cols();
    let rows = m.rows();
    let sym = m.is_tagged_symmetric();
    let data = m.as_mut_slice();
    for r in 0..rows {
        let (u, v) = (data[r * n + i], data[r * n + j]);
        data[r * n + i] = b[0][0] * u + b[0][1] * v;
        data[r * n + j] = b[1][0] * u + b[1][1] * v;
    }
    if sym {
        m.set_symmetric_unchecked();
    }
}

fn resymmetrize_block(m: &mut DenseMatrix, i: usize, j: usize) {
    let n = m.cols();
    let data = m.as_mut_slice();
    let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
    data[i * n + j] = avg;
    data[j * n + i] = avg;
    m.set_symmetric_unchecked();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TKind {
    Scale,
    ShearUpper,
    ShearLower,
}

impl TKind {
    pub const ALL: [TKind; 3] = [TKind::Scale, TKind::ShearUpper, TKind::ShearLower];

    pub fn name(&self) -> &'static str {
        match self {
            TKind::Scale => "scale",
            TKind::ShearUpper => "shear_upper",
            TKind::ShearLower => "shear_lower",
        }
    }

    pub fn is_shear(&self) -> bool {
        !matches!(self, TKind::Scale)
    }
}

/// Identity modified in a single entry: `T_ii = a` (scale), `T_ij = a`
/// (upper shear) or `T_ji = a` (lower shear), with `i < j` for shears.
/// Scales store `j = i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTransform {
    kind: TKind,
    i: usize,
    j: usize,
    a: f64,
}

impl TTransform {
    pub fn scale(i: usize, a: f64) -> Result<Self> {
        if !a.is_finite() || a.abs() < SCALE_FLOOR {
            return Err(Error::ZeroScale(a));
        }
        Ok(Self { kind: TKind::Scale, i, j: i, a })
    }

    pub fn shear_upper(i: usize, j: usize, a: f64) -> Result<Self> {
        Self::shear(TKind::ShearUpper, i, j, a)
    }

    pub fn shear_lower(i: usize, j: usize, a: f64) -> Result<Self> {
        Self::shear(TKind::ShearLower, i, j, a)
    }

    pub fn new(kind: TKind, i: usize, j: usize, a: f64) -> Result<Self> {
        match kind {
            TKind::Scale => {
                if i != j {
                    return Err(Error::Validation(format!("scale record needs i = j, got i={i}, j={j}")));
                }
                Self::scale(i, a)
            }
            _ => Self::shear(kind, i, j, a),
        }
    }

    fn shear(kind: TKind, i: usize, j: usize, a: f64) -> Result<Self> {
        if i >= j {
            return Err(Error::Validation(format!("{} needs i < j, got i={i}, j={j}", kind.name())));
        }
        if !a.is_finite() {
            return Err(Error::Validation(format!("{} coefficient is not finite", kind.name())));
        }
        Ok(Self { kind, i, j, a })
    }

    /// The transform that leaves everything unchanged for this slot.
    pub fn identity(kind: TKind, i: usize, j: usize) -> Self {
        let a = if kind == TKind::Scale { 1.0 } else { 0.0 };
        Self { kind, i, j: if kind == TKind::Scale { i } else { j }, a }
    }

    pub fn kind(&self) -> TKind {
        self.kind
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Same slot, new coefficient.
    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::new(self.kind, self.i, self.j, a)
    }

    /// Row/column touched: `(target, source)` such that forward application
    /// is `x[target] += a * x[source]` for shears.
    fn shear_pair(&self) -> (usize, usize) {
        match self.kind {
            TKind::ShearUpper => (self.i, self.j),
            _ => (self.j, self.i),
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        match self.kind {
            TKind::Scale => x[self.i] *= self.a,
            _ => {
                let (t, s) = self.shear_pair();
                x[t] += self.a * x[s];
            }
        }
    }

    pub fn apply_inverse(&self, x: &mut [f64]) {
        match self.kind {
            TKind::Scale => x[self.i] /= self.a,
            _ => {
                let (t, s) = self.shear_pair();
                x[t] -= self.a * x[s];
            }
        }
    }

    pub fn apply_transpose(&self, x: &mut [f64]) {
        match self.kind {
            TKind::Scale => x[self.i] *= self.a,
            _ => {
                let (t, s) = self.shear_pair();
                x[s] += self.a * x[t];
            }
        }
    }

    pub fn apply_inverse_transpose(&self, x: &mut [f64]) {
        match self.kind {
            TKind::Scale => x[self.i] /= self.a,
            _ => {
                let (t, s) = self.shear_pair();
                x[s] -= self.a * x[t];
            }
        }
    }

    /// `m <- T m`
    pub fn left_mul(&self, m: &mut DenseMatrix) {
        self.rows_op(m, false);
    }

    /// `m <- T^{-1} m`
    pub fn left_mul_inverse(&self, m: &mut DenseMatrix) {
        self.rows_op(m, true);
    }

    /// `m <- m T`
    pub fn right_mul(&self, m: &mut DenseMatrix) {
        self.cols_op(m, false);
    }

    /// `m <- m T^{-1}`
    pub fn right_mul_inverse(&self, m: &mut DenseMatrix) {
        self.cols_op(m, true);
    }

    /// `m <- T m T^{-1}`
    pub fn conjugate(&self, m: &mut DenseMatrix) {
        self.left_mul(m);
        self.right_mul_inverse(m);
    }

    fn coefficient(&self, inverse: bool) -> f64 {
        match (self.kind, inverse) {
            (TKind::Scale, true) => 1.0 / self.a,
            (TKind::Scale, false) => self.a,
            (_, true) => -self.a,
            (_, false) => self.a,
        }
    }

    fn rows_op(&self, m: &mut DenseMatrix, inverse: bool) {
        let a = self.coefficient(inverse);
        let n = m.cols();
        let data = m.as_mut_slice();
        match self.kind {
            TKind::Scale => data[self.i * n..(self.i + 1) * n].iter_mut().for_each(|v| *v *= a),
            _ => {
                let (t, s) = self.shear_pair();
                for c in 0..n {
                    data[t * n + c] += a * data[s * n + c];
                }
            }
        }
    }

    fn cols_op(&self, m: &mut DenseMatrix, inverse: bool) {
        let a = self.coefficient(inverse);
        let n = m.cols();
        let rows = m.rows();
        let data = m.as_mut_slice();
        match self.kind {
            TKind::Scale => (0..rows).for_each(|r| data[r * n + self.i] *= a),
            _ => {
                // (m T)[:, s] += a m[:, t]
                let (t, s) = self.shear_pair();
                for r in 0..rows {
                    data[r * n + s] += a * data[r * n + t];
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    G,
    T,
}

impl ChainKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChainKind::G => "g_chain",
            ChainKind::T => "t_chain",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transforms {
    G(Vec<GTransform>),
    T(Vec<TTransform>),
}

/// Which product to apply. For G-chains `Inverse` is `Transpose` and
/// `InverseTranspose` is `Forward`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    Forward,
    Transpose,
    Inverse,
    InverseTranspose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct FlopCount {
    pub multiply_adds: u64,
}

impl std::ops::Add for FlopCount {
    type Output = FlopCount;

    fn add(self, rhs: FlopCount) -> FlopCount {
        FlopCount { multiply_adds: self.multiply_adds + rhs.multiply_adds }
    }
}

/// An ordered product of transforms together with a spectrum estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformChain {
    n: usize,
    transforms: Transforms,
    spectrum: Vec<f64>,
}

impl TransformChain {
    pub fn new_g(n: usize, transforms: Vec<GTransform>, spectrum: Vec<f64>) -> Result<Self> {
        let chain = Self { n, transforms: Transforms::G(transforms), spectrum };
        chain.validate()?;
        Ok(chain)
    }

    pub fn new_t(n: usize, transforms: Vec<TTransform>, spectrum: Vec<f64>) -> Result<Self> {
        let chain = Self { n, transforms: Transforms::T(transforms), spectrum };
        chain.validate()?;
        Ok(chain)
    }

    pub fn empty(kind: ChainKind, n: usize) -> Self {
        let transforms = match kind {
            ChainKind::G => Transforms::G(Vec::new()),
            ChainKind::T => Transforms::T(Vec::new()),
        };
        Self { n, transforms, spectrum: vec![0.0; n] }
    }

    fn validate(&self) -> Result<()> {
        if self.spectrum.len() != self.n {
            return Err(dims_mismatch(format!("spectrum of length {}", self.n), self.spectrum.len()));
        }
        if let Some(pos) = self.spectrum.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("spectrum entry {pos} is not finite")));
        }
        let check = |k: usize, i: usize, j: usize| {
            if i >= self.n || j >= self.n {
                Err(Error::Validation(format!(
                    "transform {k} indexes ({i}, {j}) outside dimension {}",
                    self.n
                )))
            } else {
                Ok(())
            }
        };
        match &self.transforms {
            Transforms::G(ts) => ts.iter().enumerate().try_for_each(|(k, t)| check(k, t.i, t.j)),
            Transforms::T(ts) => ts.iter().enumerate().try_for_each(|(k, t)| check(k, t.i, t.j)),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> ChainKind {
        match self.transforms {
            Transforms::G(_) => ChainKind::G,
            Transforms::T(_) => ChainKind::T,
        }
    }

    pub fn len(&self) -> usize {
        match &self.transforms {
            Transforms::G(ts) => ts.len(),
            Transforms::T(ts) => ts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transforms(&self) -> &Transforms {
        &self.transforms
    }

    pub fn g_transforms(&self) -> Option<&[GTransform]> {
        match &self.transforms {
            Transforms::G(ts) => Some(ts),
            Transforms::T(_) => None,
        }
    }

    pub fn t_transforms(&self) -> Option<&[TTransform]> {
        match &self.transforms {
            Transforms::T(ts) => Some(ts),
            Transforms::G(_) => None,
        }
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn set_spectrum(&mut self, spectrum: Vec<f64>) -> Result<()> {
        if spectrum.len() != self.n {
            return Err(dims_mismatch(self.n, spectrum.len()));
        }
        self.spectrum = spectrum;
        Ok(())
    }

    /// `other` applied after `self`; the spectrum of `other` is kept.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(dims_mismatch(self.n, other.n));
        }
        let transforms = match (&self.transforms, &other.transforms) {
            (Transforms::G(a), Transforms::G(b)) => Transforms::G(a.iter().chain(b).copied().collect()),
            (Transforms::T(a), Transforms::T(b)) => Transforms::T(a.iter().chain(b).copied().collect()),
            _ => return Err(dims_mismatch(self.kind().name(), other.kind().name())),
        };
        Ok(Self { n: self.n, transforms, spectrum: other.spectrum.clone() })
    }

    fn check_scales(&self) -> Result<()> {
        if let Transforms::T(ts) = &self.transforms {
            for (index, t) in ts.iter().enumerate() {
                if t.kind == TKind::Scale && t.a.abs() < SCALE_FLOOR {
                    return Err(Error::NonInvertibleScale { index, value: t.a });
                }
            }
        }
        Ok(())
    }

    /// Applies the chain (or its transpose/inverse) to `x` in place.
    pub fn apply_in_place(&self, x: &mut [f64], mode: ApplyMode) -> Result<()> {
        if x.len() != self.n {
            return Err(dims_mismatch(self.n, x.len()));
        }
        match &self.transforms {
            Transforms::G(ts) => match mode {
                ApplyMode::Forward | ApplyMode::InverseTranspose => ts.iter().for_each(|t| t.apply(x)),
                ApplyMode::Transpose | ApplyMode::Inverse => {
                    ts.iter().rev().for_each(|t| t.apply_transpose(x))
                }
            },
            Transforms::T(ts) => {
                if matches!(mode, ApplyMode::Inverse | ApplyMode::InverseTranspose) {
                    self.check_scales()?;
                }
                match mode {
                    ApplyMode::Forward => ts.iter().for_each(|t| t.apply(x)),
                    ApplyMode::Inverse => ts.iter().rev().for_each(|t| t.apply_inverse(x)),
                    ApplyMode::Transpose => ts.iter().rev().for_each(|t| t.apply_transpose(x)),
                    ApplyMode::InverseTranspose => ts.iter().for_each(|t| t.apply_inverse_transpose(x)),
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64], mode: ApplyMode) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        self.apply_in_place(&mut y, mode)?;
        Ok(y)
    }

    /// `reconstruct() * x` without densifying.
    pub fn reconstruct_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let backward = match self.kind() {
            ChainKind::G => ApplyMode::Transpose,
            ChainKind::T => ApplyMode::Inverse,
        };
        let mut y = self.apply(x, backward)?;
        y.iter_mut().zip(&self.spectrum).for_each(|(v, d)| *v *= d);
        self.apply_in_place(&mut y, ApplyMode::Forward)?;
        Ok(y)
    }

    /// The chain product as a dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::identity(self.n);
        match &self.transforms {
            Transforms::G(ts) => ts.iter().for_each(|t| t.left_mul(&mut m)),
            Transforms::T(ts) => ts.iter().for_each(|t| t.left_mul(&mut m)),
        }
        m
    }

    /// Dense inverse of the chain product (the transpose for G-chains).
    pub fn to_dense_inverse(&self) -> Result<DenseMatrix> {
        self.check_scales()?;
        let mut m = DenseMatrix::identity(self.n);
        match &self.transforms {
            Transforms::G(ts) => ts.iter().for_each(|t| t.right_mul_transpose(&mut m)),
            Transforms::T(ts) => ts.iter().for_each(|t| t.right_mul_inverse(&mut m)),
        }
        Ok(m)
    }

    /// `U diag(spectrum) U^{-1}`, built by conjugating the diagonal one
    /// transform at a time.
    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.check_scales()?;
        let mut m = DenseMatrix::from_diag(&self.spectrum);
        match &self.transforms {
            Transforms::G(ts) => ts.iter().for_each(|t| t.conjugate(&mut m)),
            Transforms::T(ts) => ts.iter().for_each(|t| t.conjugate(&mut m)),
        }
        Ok(m)
    }

    /// Multiply-adds for one matrix-vector product: `6g` for G-chains,
    /// `m1 + 2 m2` for T-chains with `m1` scales and `m2` shears.
    pub fn flop_count(&self) -> FlopCount {
        let multiply_adds = match &self.transforms {
            Transforms::G(ts) => 6 * ts.len() as u64,
            Transforms::T(ts) => ts.iter().map(|t| if t.kind.is_shear() { 2 } else { 1 }).sum(),
        };
        FlopCount { multiply_adds }
    }

    pub fn serialize(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter::default());
        let result = match &self.transforms {
            Transforms::G(ts) => ChainFile {
                version: FORMAT_VERSION,
                kind: ChainKindTag::GChain,
                n: self.n,
                spectrum: self.spectrum.clone(),
                transforms: ts.iter().map(GRecord::from).collect(),
            }
            .serialize(&mut ser),
            Transforms::T(ts) => ChainFile {
                version: FORMAT_VERSION,
                kind: ChainKindTag::TChain,
                n: self.n,
                spectrum: self.spectrum.clone(),
                transforms: ts.iter().map(TRecord::from).collect(),
            }
            .serialize(&mut ser),
        };
        result.expect("in-memory serialization cannot fail");
        out.push(b'\n');
        String::from_utf8(out).expect("serializer emits utf-8")
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(parse_error)?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Validation(format!("unsupported chain format version {}", header.version)));
        }
        match header.kind {
            ChainKindTag::GChain => {
                let file: ChainFile<GRecord> = serde_json::from_str(text).map_err(parse_error)?;
                let ts = file
                    .transforms
                    .iter()
                    .enumerate()
                    .map(|(k, r)| {
                        let family = if r.reflect { GFamily::Reflection } else { GFamily::Rotation };
                        GTransform::new(r.i, r.j, r.c, r.s, family)
                            .map_err(|e| Error::Validation(format!("transform {k}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::new_g(file.n, ts, file.spectrum)
            }
            ChainKindTag::TChain => {
                let file: ChainFile<TRecord> = serde_json::from_str(text).map_err(parse_error)?;
                let ts = file
                    .transforms
                    .iter()
                    .enumerate()
                    .map(|(k, r)| {
                        TTransform::new(r.kind.into(), r.i, r.j, r.a)
                            .map_err(|e| Error::Validation(format!("transform {k}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::new_t(file.n, ts, file.spectrum)
            }
        }
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), message: e.to_string() }
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum ChainKindTag {
    GChain,
    TChain,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
    kind: ChainKindTag,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile<R> {
    version: u32,
    kind: ChainKindTag,
    n: usize,
    spectrum: Vec<f64>,
    transforms: Vec<R>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GRecord {
    i: usize,
    j: usize,
    c: f64,
    s: f64,
    reflect: bool,
}

impl From<&GTransform> for GRecord {
    fn from(t: &GTransform) -> Self {
        Self { i: t.i, j: t.j, c: t.c, s: t.s, reflect: t.family == GFamily::Reflection }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum TKindTag {
    Scale,
    ShearUpper,
    ShearLower,
}

impl From<TKindTag> for TKind {
    fn from(t: TKindTag) -> Self {
        match t {
            TKindTag::Scale => TKind::Scale,
            TKindTag::ShearUpper => TKind::ShearUpper,
            TKindTag::ShearLower => TKind::ShearLower,
        }
    }
}

impl From<TKind> for TKindTag {
    fn from(t: TKind) -> Self {
        match t {
            TKind::Scale => TKindTag::Scale,
            TKind::ShearUpper => TKindTag::ShearUpper,
            TKind::ShearLower => TKindTag::ShearLower,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TRecord {
    #[serde(rename = "type")]
    kind: TKindTag,
    i: usize,
    j: usize,
    a: f64,
}

impl From<&TTransform> for TRecord {
    fn from(t: &TTransform) -> Self {
        Self { kind: t.kind.into(), i: t.i, j: t.j, a: t.a }
    }
}

/// Pretty JSON with every float written in 17-significant-digit scientific
/// notation, which round-trips bit-exactly.
#[derive(Default)]
struct SciFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Uniformly random chains for tests and planted problems.
pub mod random {
    use rand::Rng;

    use super::*;

    pub fn g_transform<R: Rng>(rng: &mut R, n: usize) -> GTransform {
        let i = rng.gen_range(0..n - 1);
        let j = rng.gen_range(i + 1..n);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let family = if rng.gen_bool(0.5) { GFamily::Rotation } else { GFamily::Reflection };
        GTransform::normalized(i, j, theta.cos(), theta.sin(), family).expect("valid by construction")
    }

    /// Scales in `+-[0.5, 2]`, shears in `[-1, 1]`.
    pub fn t_transform<R: Rng>(rng: &mut R, n: usize) -> TTransform {
        let i = rng.gen_range(0..n - 1);
        let j = rng.gen_range(i + 1..n);
        match rng.gen_range(0..3) {
            0 => {
                let mag = rng.gen_range(0.5..2.0);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let idx = if rng.gen_bool(0.5) { i } else { j };
                TTransform::scale(idx, sign * mag).expect("nonzero scale")
            }
            1 => TTransform::shear_upper(i, j, rng.gen_range(-1.0..1.0)).expect("i < j"),
            _ => TTransform::shear_lower(i, j, rng.gen_range(-1.0..1.0)).expect("i < j"),
        }
    }

    pub fn g_chain<R: Rng>(rng: &mut R, n: usize, g: usize) -> TransformChain {
        let ts = (0..g).map(|_| g_transform(rng, n)).collect();
        let spectrum = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        TransformChain::new_g(n, ts, spectrum).expect("valid by construction")
    }

    pub fn t_chain<R: Rng>(rng: &mut R, n: usize, m: usize) -> TransformChain {
        let ts = (0..m).map(|_| t_transform(rng, n)).collect();
        let spectrum = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        TransformChain::new_t(n, ts, spectrum).expect("valid by construction")
    }
}
