use super::hessenberg::eigenvalues_general;
use crate::error::{Error, Result};

/// Leading coefficients below this fraction of the largest one are dropped
/// before the companion matrix is formed.
const TRIM_REL: f64 = 1e-14;
const IMAG_TOL: f64 = 1e-8;
const DEDUP_TOL: f64 = 1e-10;

/// Real polynomial, coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Trailing exact zeros are removed so the leading coefficient is nonzero.
    /// The zero polynomial is stored with no coefficients.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::new(Vec::new());
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let get = |c: &[f64], k: usize| c.get(k).copied().unwrap_or(0.0);
        Self::new((0..len).map(|k| get(&self.coeffs, k) + get(&other.coeffs, k)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Largest absolute coefficient.
    pub fn magnitude(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn real_roots(&self) -> Result<Vec<f64>> {
        real_roots(self)
    }
}

/// Sorted real roots via the eigenvalues of the companion matrix.
///
/// Eigenvalues with `|Im| <= 1e-8 (1 + |Re|)` count as real, each is refined
/// with a few Newton steps, and roots closer than `1e-10` are merged.
pub fn real_roots(p: &Polynomial) -> Result<Vec<f64>> {
    let scale = p.magnitude();
    if scale == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let mut coeffs = p.coeffs.clone();
    while coeffs.last().is_some_and(|c| c.abs() <= TRIM_REL * scale) {
        coeffs.pop();
    }
    // Roots at zero factor out exactly.
    let zero_mult = coeffs.iter().take_while(|c| **c == 0.0).count();
    let reduced: Vec<f64> = coeffs[zero_mult..].to_vec();
    let degree = reduced.len() - 1;

    let mut roots = Vec::new();
    if zero_mult > 0 {
        roots.push(0.0);
    }
    if degree >= 1 {
        let lead = reduced[degree];
        // top-row companion form, already upper Hessenberg
        let mut comp = vec![0.0; degree * degree];
        for k in 0..degree {
            comp[k] = -reduced[degree - 1 - k] / lead;
        }
        for r in 1..degree {
            comp[r * degree + r - 1] = 1.0;
        }
        for (re, im) in eigenvalues_general(degree, &comp)? {
            if im.abs() <= IMAG_TOL * (1.0 + re.abs()) {
                roots.push(newton_polish(p, re));
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    roots.dedup_by(|b, a| (*b - *a).abs() <= DEDUP_TOL * (1.0 + a.abs()));
    Ok(roots)
}

fn newton_polish(p: &Polynomial, x0: f64) -> f64 {
    let dp = p.derivative();
    let mut x = x0;
    let mut fx = p.eval(x).abs();
    for _ in 0..4 {
        let d = dp.eval(x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let cand = x - p.eval(x) / d;
        let fc = p.eval(cand).abs();
        if !(fc < fx) {
            break;
        }
        x = cand;
        fx = fc;
    }
    x
}
