use super::hessenberg::eigenvalues_general;

/// Symmetric 2x2 block `[[s_ii, s_ij], [s_ij, s_jj]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2x2 {
    pub s_ii: f64,
    pub s_ij: f64,
    pub s_jj: f64,
}

impl Sym2x2 {
    pub fn new(s_ii: f64, s_ij: f64, s_jj: f64) -> Self {
        Self { s_ii, s_ij, s_jj }
    }

    pub fn trace(&self) -> f64 {
        self.s_ii + self.s_jj
    }

    pub fn det(&self) -> f64 {
        self.s_ii * self.s_jj - self.s_ij * self.s_ij
    }
}

/// Eigenpairs of a symmetric 2x2 matrix. `v[r][c]` holds the eigenvector
/// matrix; column 0 belongs to `lambda_hi`, column 1 to `lambda_lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eig2x2Result {
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    pub v: [[f64; 2]; 2],
}

/// Closed-form eigendecomposition, eigenvalues in descending order.
pub fn eig2x2_sym(m: Sym2x2) -> Eig2x2Result {
    let mean = 0.5 * (m.s_ii + m.s_jj);
    let half_diff = 0.5 * (m.s_ii - m.s_jj);
    let radius = half_diff.hypot(m.s_ij);
    let theta = 0.5 * m.s_ij.atan2(half_diff);
    let (s, c) = theta.sin_cos();
    Eig2x2Result { lambda_hi: mean + radius, lambda_lo: mean - radius, v: [[c, -s], [s, c]] }
}

/// `gamma = (s_ii - s_jj)/2 + sqrt(((s_ii - s_jj)/2)^2 + s_ij^2)`, evaluated
/// without cancellation when the first term is negative. Always `>= 0`.
pub fn gamma(s_ii: f64, s_jj: f64, s_ij: f64) -> f64 {
    let h = 0.5 * (s_ii - s_jj);
    let r = h.hypot(s_ij);
    if h >= 0.0 {
        h + r
    } else if r - h > 0.0 {
        s_ij * s_ij / (r - h)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitNormSolution {
    pub x: [f64; 2],
    /// `x^T r x + 2 x^T g` at the returned point.
    pub objective: f64,
    /// The right-hand side vanished and the minimum-eigenvector fallback was used.
    pub degenerate: bool,
}

fn quad_objective(r: &[[f64; 2]; 2], g: &[f64; 2], x: &[f64; 2]) -> f64 {
    let rx = [r[0][0] * x[0] + r[0][1] * x[1], r[1][0] * x[0] + r[1][1] * x[1]];
    x[0] * rx[0] + x[1] * rx[1] + 2.0 * (x[0] * g[0] + x[1] * g[1])
}

/// Minimize `x^T r x + 2 x^T g` subject to `||x||_2 = 1`.
///
/// The multiplier is the smallest real eigenvalue of the 4x4 pencil
/// `M v = mu N v` with `M = [[r^2 - g g^T, 0], [0, I]]`,
/// `N = [[2r, -I], [I, 0]]`; the minimizer is `x = -(r - mu I)^{-1} g`,
/// solved in the eigenbasis of `r` so the singular ("hard") case fills the
/// null direction to reach unit norm.
pub fn unit_norm_ls(r: [[f64; 2]; 2], g: [f64; 2]) -> UnitNormSolution {
    let sym = Sym2x2::new(r[0][0], 0.5 * (r[0][1] + r[1][0]), r[1][1]);
    let r = [[sym.s_ii, sym.s_ij], [sym.s_ij, sym.s_jj]];
    let r_norm = (sym.s_ii * sym.s_ii + 2.0 * sym.s_ij * sym.s_ij + sym.s_jj * sym.s_jj).sqrt();
    let g_norm = g[0].hypot(g[1]);
    let eig = eig2x2_sym(sym);

    if g_norm <= 1e-12 * r_norm || g_norm == 0.0 {
        let x = [eig.v[0][1], eig.v[1][1]];
        return UnitNormSolution { x, objective: quad_objective(&r, &g, &x), degenerate: true };
    }

    // N^{-1} M = [[0, I], [-(r^2 - g g^T), 2r]]
    let r2 = [
        [r[0][0] * r[0][0] + r[0][1] * r[1][0], r[0][0] * r[0][1] + r[0][1] * r[1][1]],
        [r[1][0] * r[0][0] + r[1][1] * r[1][0], r[1][0] * r[0][1] + r[1][1] * r[1][1]],
    ];
    let k = [
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        -(r2[0][0] - g[0] * g[0]), -(r2[0][1] - g[0] * g[1]), 2.0 * r[0][0], 2.0 * r[0][1], //
        -(r2[1][0] - g[1] * g[0]), -(r2[1][1] - g[1] * g[1]), 2.0 * r[1][0], 2.0 * r[1][1],
    ];
    let mu = match eigenvalues_general(4, &k) {
        Ok(ev) => ev
            .into_iter()
            .filter(|(re, im)| im.abs() <= 1e-8 * (1.0 + re.abs()))
            .map(|(re, _)| re)
            .fold(f64::INFINITY, f64::min),
        Err(_) => f64::INFINITY,
    };
    // The optimal multiplier never exceeds the smallest eigenvalue of r.
    let mu = if mu.is_finite() { mu.min(eig.lambda_lo) } else { eig.lambda_lo - g_norm };

    // Solve in the eigenbasis: y_t = -g'_t / (rho_t - mu).
    let basis = [[eig.v[0][0], eig.v[1][0]], [eig.v[0][1], eig.v[1][1]]];
    let rho = [eig.lambda_hi, eig.lambda_lo];
    let scale = r_norm.max(g_norm);
    let mut y = [0.0; 2];
    let mut free = None;
    for t in 0..2 {
        let gp = basis[t][0] * g[0] + basis[t][1] * g[1];
        let gap = rho[t] - mu;
        if gap > 1e-12 * scale {
            y[t] = -gp / gap;
        } else {
            free = Some(t);
        }
    }
    if let Some(t) = free {
        let other = 1 - t;
        let rest = 1.0 - y[other] * y[other];
        y[t] = rest.max(0.0).sqrt();
    }
    let mut x = [
        basis[0][0] * y[0] + basis[1][0] * y[1],
        basis[0][1] * y[0] + basis[1][1] * y[1],
    ];
    let norm = x[0].hypot(x[1]);
    if norm > 0.0 {
        x = [x[0] / norm, x[1] / norm];
    } else {
        x = [basis[1][0], basis[1][1]];
    }
    if free.is_some() {
        let flipped = reflect_free(&basis, free.unwrap_or(0), &x);
        if quad_objective(&r, &g, &flipped) < quad_objective(&r, &g, &x) {
            x = flipped;
        }
    }
    x = refine_on_circle(&r, &g, x);
    UnitNormSolution { x, objective: quad_objective(&r, &g, &x), degenerate: false }
}

/// Flip the sign of the component of `x` along basis vector `t`.
fn reflect_free(basis: &[[f64; 2]; 2], t: usize, x: &[f64; 2]) -> [f64; 2] {
    let c = basis[t][0] * x[0] + basis[t][1] * x[1];
    [x[0] - 2.0 * c * basis[t][0], x[1] - 2.0 * c * basis[t][1]]
}

/// A few guarded Newton steps in the angle; only accepted when the objective drops.
fn refine_on_circle(r: &[[f64; 2]; 2], g: &[f64; 2], x0: [f64; 2]) -> [f64; 2] {
    let mut theta = x0[1].atan2(x0[0]);
    let mut x = x0;
    let mut best = quad_objective(r, g, &x);
    for _ in 0..3 {
        let (s, c) = theta.sin_cos();
        let xt = [c, s];
        let dx = [-s, c];
        let rx = [r[0][0] * c + r[0][1] * s, r[1][0] * c + r[1][1] * s];
        let rdx = [r[0][0] * dx[0] + r[0][1] * dx[1], r[1][0] * dx[0] + r[1][1] * dx[1]];
        let d1 = 2.0 * (dx[0] * rx[0] + dx[1] * rx[1]) + 2.0 * (dx[0] * g[0] + dx[1] * g[1]);
        let d2 = -2.0 * (xt[0] * rx[0] + xt[1] * rx[1])
            + 2.0 * (dx[0] * rdx[0] + dx[1] * rdx[1])
            - 2.0 * (xt[0] * g[0] + xt[1] * g[1]);
        if d2 <= 0.0 || d1 == 0.0 {
            break;
        }
        let cand_theta = theta - d1 / d2;
        let cand = [cand_theta.cos(), cand_theta.sin()];
        let val = quad_objective(r, g, &cand);
        if val < best {
            best = val;
            x = cand;
            theta = cand_theta;
        } else {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn check_eig(m: Sym2x2, e: &Eig2x2Result) {
        let scale = m.s_ii.abs().max(m.s_jj.abs()).max(m.s_ij.abs()).max(1.0);
        let v = e.v;
        // orthonormal
        let vtv = [
            v[0][0] * v[0][0] + v[1][0] * v[1][0],
            v[0][0] * v[0][1] + v[1][0] * v[1][1],
            v[0][1] * v[0][1] + v[1][1] * v[1][1],
        ];
        assert!((vtv[0] - 1.0).abs() < 1e-12 && vtv[1].abs() < 1e-12 && (vtv[2] - 1.0).abs() < 1e-12);
        // reconstruction V diag V^T
        let d = [e.lambda_hi, e.lambda_lo];
        let rec = |a: usize, b: usize| v[a][0] * d[0] * v[b][0] + v[a][1] * d[1] * v[b][1];
        assert!((rec(0, 0) - m.s_ii).abs() <= 1e-12 * scale);
        assert!((rec(0, 1) - m.s_ij).abs() <= 1e-12 * scale);
        assert!((rec(1, 1) - m.s_jj).abs() <= 1e-12 * scale);
        assert!(e.lambda_hi >= e.lambda_lo);
    }

    #[test]
    fn eig_examples() {
        let e = eig2x2_sym(Sym2x2::new(2.0, 1.0, 2.0));
        assert!((e.lambda_hi - 3.0).abs() < 1e-15 && (e.lambda_lo - 1.0).abs() < 1e-15);
        assert!((e.v[0][0].abs() - S2).abs() < 1e-15 && (e.v[0][0] - e.v[1][0]).abs() < 1e-15);
        assert!((e.v[0][1] + e.v[1][1]).abs() < 1e-15);
        check_eig(Sym2x2::new(2.0, 1.0, 2.0), &e);

        let e = eig2x2_sym(Sym2x2::new(5.0, 0.0, 3.0));
        assert_eq!((e.lambda_hi, e.lambda_lo), (5.0, 3.0));
        assert_eq!(e.v, [[1.0, -0.0], [0.0, 1.0]]);

        let e = eig2x2_sym(Sym2x2::new(0.0, 1.0, 0.0));
        assert!((e.lambda_hi - 1.0).abs() < 1e-15 && (e.lambda_lo + 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_orders_when_second_diagonal_dominates() {
        let m = Sym2x2::new(1.0, 1e-9, 4.0);
        let e = eig2x2_sym(m);
        assert!((e.lambda_hi - 4.0).abs() < 1e-12);
        check_eig(m, &e);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(3.0, 1.0, 0.0), 2.0);
        assert_eq!(gamma(0.0, 0.0, 1.0), 1.0);
        assert_eq!(gamma(1.0, 2.0, 0.0), 0.0);
        // no cancellation for a tiny off-diagonal and negative gap
        let g = gamma(0.0, 1.0, 1e-10);
        assert!((g - 1e-20).abs() < 1e-30);
    }

    #[test]
    fn unit_ls_identity_r() {
        let s = unit_norm_ls([[1.0, 0.0], [0.0, 1.0]], [-2.0, 0.0]);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
        assert!(!s.degenerate);
        assert!((s.objective - (1.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn unit_ls_degenerate_rhs() {
        let s = unit_norm_ls([[4.0, 0.0], [0.0, 1.0]], [0.0, 0.0]);
        assert!(s.degenerate);
        assert!(s.x[0].abs() < 1e-15 && (s.x[1].abs() - 1.0).abs() < 1e-15);
        assert!((s.objective - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_ls_hard_case() {
        // g orthogonal to the minimum eigenvector, small enough that the
        // multiplier sits at the smallest eigenvalue of r.
        let s = unit_norm_ls([[1.0, 0.0], [0.0, 3.0]], [0.0, 0.5]);
        // optimum: x2 = -0.25, x1 = +-sqrt(1 - 1/16)
        assert!((s.x[1] + 0.25).abs() < 1e-9, "{:?}", s);
        assert!((s.x[0].abs() - (1.0f64 - 0.0625).sqrt()).abs() < 1e-9);
    }

    fn grid_min(r: &[[f64; 2]; 2], g: &[f64; 2]) -> f64 {
        let steps = (2.0 * std::f64::consts::PI / 1e-5).ceil() as usize;
        (0..steps)
            .map(|k| {
                let t = k as f64 * 1e-5;
                quad_objective(r, g, &[t.cos(), t.sin()])
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn unit_ls_matches_angle_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = rng.gen_range(-3.0..3.0);
            let b = rng.gen_range(-3.0..3.0);
            let c = rng.gen_range(-3.0..3.0);
            let r = [[a, b], [b, c]];
            let g = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let s = unit_norm_ls(r, g);
            let oracle = grid_min(&r, &g);
            assert!(s.objective <= oracle + 1e-9, "{} vs {}", s.objective, oracle);
            assert!((s.objective - oracle).abs() <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn eig_trace_and_det(a in -1e3f64..1e3, b in -1e3f64..1e3, c in -1e3f64..1e3) {
            let m = Sym2x2::new(a, b, c);
            let e = eig2x2_sym(m);
            let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
            prop_assert!((e.lambda_hi + e.lambda_lo - m.trace()).abs() <= 1e-12 * scale * 2.0);
            prop_assert!((e.lambda_hi * e.lambda_lo - m.det()).abs() <= 1e-12 * scale * scale * 4.0);
            check_eig(m, &e);
        }

        #[test]
        fn gamma_is_nonnegative(a in -1e6f64..1e6, b in -1e6f64..1e6, c in -1e6f64..1e6) {
            prop_assert!(gamma(a, b, c) >= 0.0);
        }

        #[test]
        fn unit_ls_beats_random_unit_vectors(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
            g0 in -5.0f64..5.0, g1 in -5.0f64..5.0, seed in any::<u64>()
        ) {
            let r = [[a, b], [b, c]];
            let g = [g0, g1];
            let s = unit_norm_ls(r, g);
            prop_assert!((s.x[0].hypot(s.x[1]) - 1.0).abs() <= 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..2000 {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let v = quad_objective(&r, &g, &[t.cos(), t.sin()]);
                prop_assert!(s.objective <= v + 1e-10);
            }
        }
    }
}
