//! Projection onto the unstable subspace, the projected algebraic Riccati
//! equation, the feedback gain, and the full-order discrete Riccati
//! equation used for coarse-mesh validation.
//!
//! The projected equation solved here is the standard CARE for the reduced
//! pair (Au, Bu),
//!
//! ```text
//! Au' P + P Au - P Bu Bu' P + Qu = 0,
//! ```
//!
//! and the gain closes the loop through the spectral-projector
//! coordinates q = Xi' M Y, that is u = -Bu' P Xi' M Y. With the bases
//! normalized so Xi' M E = I these coordinates decouple exactly from the
//! stable complement, making Au - Bu Bu' P the true reduced closed loop.
//! The transposed equation (Au P + P Au' - ...) paired with a plain Xi'
//! factor fails to stabilize the assembled system: the resulting gain
//! mixes metrics and the closed-loop pencil keeps eigenvalues in the
//! right half-plane.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fem::BlockSystem;
use crate::schur::{
    dense_eigenvalues, lyapunov, quasi_tri_eigenvalues, real_schur, reorder_schur, sort_eigs_desc,
};
use crate::spectral::UnstableBasis;

#[derive(Debug, Clone)]
pub struct ProjectedSystem {
    pub au: DMatrix<f64>,
    pub bu: DMatrix<f64>,
    pub qu: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub residual_norm: f64,
    pub closed_loop_eigs: Vec<Complex64>,
}

/// Low-rank gain K = left_factor * right_factor with rank <= 2 n_u.
#[derive(Debug, Clone)]
pub struct FeedbackGain {
    /// Bu' P, size n_c x 2n_u.
    pub left_factor: DMatrix<f64>,
    /// Xi' M, size 2n_u x 2n.
    pub right_factor: DMatrix<f64>,
}

impl FeedbackGain {
    /// u = -K y without forming K.
    pub fn control(&self, y: &[f64]) -> Vec<f64> {
        let ym = nalgebra::DVector::from_column_slice(y);
        let q = &self.right_factor * ym;
        let u = -(&self.left_factor * q);
        u.as_slice().to_vec()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        &self.left_factor * &self.right_factor
    }
}

/// Projected matrices Au = Xi'AE, Bu = Xi'B, Qu = sym(E'ME).
pub fn project_system(system: &BlockSystem, basis: &UnstableBasis) -> Result<ProjectedSystem> {
    if basis.count == 0 {
        return Err(Error::IllConditioned("empty unstable basis".into()));
    }
    for (mat, name) in [(&basis.e, "E"), (&basis.xi, "Xi")] {
        let svd = mat.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 0.0 || smax / smin > 1e12 {
            return Err(Error::IllConditioned(format!("basis {name} is rank deficient")));
        }
    }
    let k = basis.count;
    let n2 = system.a.nrows();
    let mut au = DMatrix::zeros(k, k);
    let mut qu = DMatrix::zeros(k, k);
    for col in 0..k {
        let e_col: Vec<f64> = basis.e.column(col).iter().copied().collect();
        let ae = system.a.matvec_alloc(&e_col);
        let me = system.m.matvec_alloc(&e_col);
        for row in 0..k {
            au[(row, col)] = (0..n2).map(|i| basis.xi[(i, row)] * ae[i]).sum();
            qu[(row, col)] = (0..n2).map(|i| basis.e[(i, row)] * me[i]).sum();
        }
    }
    qu = (&qu + qu.transpose()) * 0.5;
    // Bu' = B' Xi
    let bt = system.b.transpose();
    let n_c = system.b.ncols();
    let mut bu = DMatrix::zeros(k, n_c);
    for row in 0..k {
        let xi_col: Vec<f64> = basis.xi.column(row).iter().copied().collect();
        let btx = bt.matvec_alloc(&xi_col);
        for c in 0..n_c {
            bu[(row, c)] = btx[c];
        }
    }
    Ok(ProjectedSystem { au, bu, qu })
}

/// Stabilizing solution of A'P + PA - P S P + Q = 0; `s` = BB' must be
/// symmetric PSD. Hamiltonian Schur method with a Newton polish.
pub fn solve_care(a: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<RiccatiSolution> {
    let k = a.nrows();
    if s.nrows() != k || q.nrows() != k {
        return Err(Error::Dimension("care: A, S, Q must have equal sizes".into()));
    }
    // Hamiltonian [[A, -S], [-Q, -A']]
    let mut h = DMatrix::zeros(2 * k, 2 * k);
    h.view_mut((0, 0), (k, k)).copy_from(a);
    h.view_mut((0, k), (k, k)).copy_from(&(-s));
    h.view_mut((k, 0), (k, k)).copy_from(&(-q));
    h.view_mut((k, k), (k, k)).copy_from(&(-a.transpose()));

    let (mut qs, mut t) = real_schur(&h)?;
    let eigs = quasi_tri_eigenvalues(&t);
    let scale = h.norm().clamp(1.0, 1e6);
    if eigs.iter().any(|e| e.re.abs() < 1e-10 * scale) {
        return Err(Error::NonDichotomic(1e-10));
    }
    let stable = reorder_schur(&mut t, &mut qs, |e| e.re < 0.0)?;
    if stable != k {
        return Err(Error::NotStabilizable(format!(
            "Hamiltonian has {stable} stable eigenvalues, expected {k}"
        )));
    }
    let u11 = qs.view((0, 0), (k, k)).into_owned();
    let u21 = qs.view((k, 0), (k, k)).into_owned();
    // P = U21 U11^{-1}: solve U11' P' = U21'
    let lu = nalgebra::linalg::LU::new(u11.transpose());
    let pt = lu
        .solve(&u21.transpose())
        .ok_or_else(|| Error::Singular("care: U11 is singular".into()))?;
    let mut p = pt.transpose();
    p = (&p + p.transpose()) * 0.5;

    // Newton polish: (A - S P)' D + D (A - S P) = -residual
    let residual = |p: &DMatrix<f64>| a.transpose() * p + p * a - p * s * p + q;
    for _ in 0..2 {
        let r = residual(&p);
        let rscale = (a.norm() * p.norm() + q.norm()).max(1e-300);
        if r.norm() <= 1e-13 * rscale {
            break;
        }
        let a_cl = a - s * &p;
        if let Ok(d) = lyapunov(&a_cl, &r) {
            let p_new = (&p + &d + (&p + &d).transpose()) * 0.5;
            if residual(&p_new).norm() < r.norm() {
                p = p_new;
            } else {
                break;
            }
        } else {
            break;
        }
    }

    let residual_norm = residual(&p).norm();
    let mut closed_loop_eigs = dense_eigenvalues(&(a - s * &p))?;
    sort_eigs_desc(&mut closed_loop_eigs);
    if closed_loop_eigs.iter().any(|e| e.re >= 0.0) {
        return Err(Error::NotStabilizable(
            "computed Riccati solution does not stabilize the closed loop".into(),
        ));
    }
    Ok(RiccatiSolution { p, residual_norm, closed_loop_eigs })
}

/// Left-eigenvector (Hautus) stabilizability test for the pair (A, B):
/// every eigenvalue of A' with nonnegative real part must have its
/// eigenvector outside ker(B').
fn check_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let k = a.nrows();
    let eigs = dense_eigenvalues(&a.transpose())?;
    let bnorm = b.norm().max(1e-300);
    for e in eigs.iter().filter(|e| e.re >= -1e-9) {
        // eigenvector of A' near e via complex shifted inverse iteration
        let mut ac = DMatrix::<Complex64>::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                ac[(r, c)] = Complex64::new(a[(c, r)], 0.0);
            }
        }
        let shift = Complex64::new(e.re, e.im) + Complex64::new(1e-11 * (1.0 + e.norm()), 0.0);
        for d in 0..k {
            ac[(d, d)] -= shift;
        }
        let lu = nalgebra::linalg::LU::new(ac);
        let mut v = nalgebra::DVector::<Complex64>::from_element(k, Complex64::new(1.0, 0.0));
        v /= Complex64::new((k as f64).sqrt(), 0.0);
        for _ in 0..3 {
            if let Some(w) = lu.solve(&v) {
                let n = w.norm();
                if !n.is_finite() || n == 0.0 {
                    break;
                }
                v = w / Complex64::new(n, 0.0);
            }
        }
        // ||B' v||
        let mut bv = 0.0f64;
        for c in 0..b.ncols() {
            let dot: Complex64 = (0..k).map(|r| v[r].conj() * Complex64::new(b[(r, c)], 0.0)).sum();
            bv += dot.norm_sqr();
        }
        if bv.sqrt() <= 1e-10 * bnorm {
            return Err(Error::NotStabilizable(format!(
                "unstable eigenvalue {e} is not reachable through B"
            )));
        }
    }
    Ok(())
}

/// Stabilizing solution of the projected Riccati equation.
pub fn solve_projected_are(ps: &ProjectedSystem) -> Result<RiccatiSolution> {
    check_stabilizable(&ps.au, &ps.bu)?;
    let s = &ps.bu * ps.bu.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let sol = solve_care(&ps.au, &s, &ps.qu)?;
    let eigs = sol.p.symmetric_eigenvalues();
    let pnorm = sol.p.norm();
    if eigs.iter().any(|&e| e < -1e-10 * pnorm) {
        return Err(Error::NotStabilizable("Riccati solution is not PSD".into()));
    }
    Ok(sol)
}

/// Feedback gain K = (Bu' P) (Xi' M) in factored form.
pub fn feedback_gain(
    sol: &RiccatiSolution,
    ps: &ProjectedSystem,
    basis: &UnstableBasis,
    system: &BlockSystem,
) -> FeedbackGain {
    let left_factor = ps.bu.transpose() * &sol.p;
    let k = basis.count;
    let n2 = system.m.nrows();
    let mut right_factor = DMatrix::zeros(k, n2);
    for row in 0..k {
        let xi_col: Vec<f64> = basis.xi.column(row).iter().copied().collect();
        let mxi = system.m.matvec_alloc(&xi_col); // M is symmetric
        for c in 0..n2 {
            right_factor[(row, c)] = mxi[c];
        }
    }
    FeedbackGain { left_factor, right_factor }
}

#[derive(Debug, Clone)]
pub struct FullRiccati {
    /// Mass-weighted solution matrix (symmetric, 2n x 2n).
    pub s: DMatrix<f64>,
    pub relative_residual: f64,
}

/// Full-order discrete Riccati equation in the mass-weighted inner product:
/// A' M^-1 S + S M^-1 A - S M^-1 B G_O^-1 B' M^-1 S + M = 0, reduced via
/// M = L L' to a standard CARE. Coarse meshes only (2n <= 600).
pub fn solve_full_discrete_are(system: &BlockSystem) -> Result<FullRiccati> {
    let n2 = system.a.nrows();
    if n2 > 600 {
        return Err(Error::Dimension(format!(
            "full-order Riccati limited to 2n <= 600, got {n2}"
        )));
    }
    let a = system.a.to_dense();
    let m = system.m.to_dense();
    let b = system.b.to_dense();
    let g_o = system.g_o.to_dense();

    let chol_m = nalgebra::linalg::Cholesky::new(m.clone())
        .ok_or_else(|| Error::Singular("mass matrix is not positive definite".into()))?;
    let l = chol_m.l();
    let linv = invert_lower(&l)?;
    let a_t = &linv * &a * linv.transpose(); // L^-1 A L^-T
    let chol_go = nalgebra::linalg::Cholesky::new(g_o.clone())
        .ok_or_else(|| Error::Singular("control mass is not positive definite".into()))?;
    let lo_inv = invert_lower(&chol_go.l())?;
    let b_t = &linv * &b * lo_inv.transpose(); // L^-1 B L_O^-T

    check_stabilizable(&a_t, &b_t)?;
    let s_mat = &b_t * b_t.transpose();
    let s_mat = (&s_mat + s_mat.transpose()) * 0.5;
    let sol = solve_care(&a_t, &s_mat, &DMatrix::identity(n2, n2))?;
    let s = &l * &sol.p * l.transpose();
    let s = (&s + s.transpose()) * 0.5;

    // residual in the original variables, relative to the equation's
    // largest term
    let minv_s = chol_m.solve(&s);
    let at_minv_s = a.transpose() * &minv_s;
    let go_inv_bt = chol_go.solve(&b.transpose());
    let quad = minv_s.transpose() * &b * go_inv_bt * &minv_s;
    let res = &at_minv_s + at_minv_s.transpose() - &quad + &m;
    let scale = at_minv_s.norm().max(quad.norm()).max(m.norm());
    Ok(FullRiccati { s, relative_residual: res.norm() / scale })
}

/// Coefficient-space feedback of the full-order solution:
/// K_full = G_O^-1 B' M^-1 S.
pub fn full_feedback(system: &BlockSystem, full: &FullRiccati) -> Result<DMatrix<f64>> {
    let m = system.m.to_dense();
    let b = system.b.to_dense();
    let g_o = system.g_o.to_dense();
    let chol_m = nalgebra::linalg::Cholesky::new(m)
        .ok_or_else(|| Error::Singular("mass matrix is not positive definite".into()))?;
    let chol_go = nalgebra::linalg::Cholesky::new(g_o)
        .ok_or_else(|| Error::Singular("control mass is not positive definite".into()))?;
    let minv_s = chol_m.solve(&full.s);
    Ok(chol_go.solve(&(b.transpose() * minv_s)))
}

fn invert_lower(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let mut inv = DMatrix::identity(n, n);
    l.solve_lower_triangular_mut(&mut inv);
    if inv.iter().all(|v| v.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::Singular("triangular inverse overflowed".into()))
    }
}
