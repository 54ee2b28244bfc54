//! Shift-invert Arnoldi on the pencil (A, M): Krylov iteration with the
//! operator x -> (A - sigma M)^-1 M x, real arithmetic, deterministic
//! all-ones start vector.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fem::BlockSystem;
use crate::schur::dense_eigenvalues;

pub struct ArnoldiResult {
    /// Ritz estimates mapped back: Lambda = sigma + 1/theta.
    pub ritz: Vec<RitzPair>,
}

pub struct RitzPair {
    pub value: Complex64,
    /// |theta| of the transformed problem; tiny values flag unconverged
    /// directions far from the shift.
    pub weight: f64,
    /// Lifted Ritz vector (complex combination of the Krylov basis).
    pub vector: Vec<Complex64>,
}

pub fn shift_invert_arnoldi(
    system: &BlockSystem,
    sigma: f64,
    m_steps: usize,
) -> Result<ArnoldiResult> {
    let n = system.a.nrows();
    let m_steps = m_steps.min(n);
    let mut sigma = sigma;
    let mut factor = None;
    for attempt in 0..3 {
        match system.factor_pencil::<f64>(1.0, -sigma) {
            Ok(f) => {
                factor = Some(f);
                break;
            }
            Err(_) => sigma += (1.0 + sigma.abs()) * 1e-8 * 10f64.powi(attempt),
        }
    }
    let factor = factor.ok_or(Error::Singular("shift-invert factorization failed".into()))?;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_steps + 1);
    let mut h = DMatrix::<f64>::zeros(m_steps + 1, m_steps);
    let mut v0 = crate::kernels::seeded_vector(n, 1);
    let norm = v0.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v0.iter_mut() {
        *x /= norm;
    }
    basis.push(v0);
    let mut m_eff = m_steps;
    for j in 0..m_steps {
        let mvj = system.m.matvec_alloc(&basis[j]);
        let mut w = factor.solve(&mvj);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::EigenNonConvergence { residual: f64::NAN, iterations: j });
        }
        // modified Gram-Schmidt with one reorthogonalization pass
        for _ in 0..2 {
            for (i, vi) in basis.iter().enumerate() {
                let proj: f64 = vi.iter().zip(&w).map(|(a, b)| a * b).sum();
                h[(i, j)] += proj;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= proj * vk;
                }
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        h[(j + 1, j)] = norm;
        if norm < 1e-12 {
            m_eff = j + 1; // invariant subspace found
            break;
        }
        for x in w.iter_mut() {
            *x /= norm;
        }
        basis.push(w);
    }

    let hm = h.view((0, 0), (m_eff, m_eff)).into_owned();
    let thetas = dense_eigenvalues(&hm)?;
    let mut ritz = Vec::new();
    for theta in thetas {
        let w = theta.norm();
        if w < 1e-14 {
            continue; // direction at infinity, not a converged eigenvalue
        }
        let lambda = Complex64::new(sigma, 0.0) + Complex64::new(1.0, 0.0) / theta;
        let y = hess_eigvec(&hm, theta);
        let mut vec = vec![Complex64::ZERO; n];
        for (j, yj) in y.iter().enumerate() {
            for (vk, bk) in vec.iter_mut().zip(&basis[j]) {
                *vk += yj * bk;
            }
        }
        ritz.push(RitzPair { value: lambda, weight: w, vector: vec });
    }
    Ok(ArnoldiResult { ritz })
}

/// Eigenvector of a small dense matrix for a known eigenvalue, by complex
/// shifted inverse iteration.
fn hess_eigvec(hm: &DMatrix<f64>, theta: Complex64) -> Vec<Complex64> {
    let m = hm.nrows();
    let shift = theta + Complex64::new((1.0 + theta.norm()) * 1e-12, 0.0);
    let mut hc = DMatrix::<Complex64>::zeros(m, m);
    for r in 0..m {
        for c in 0..m {
            hc[(r, c)] = Complex64::new(hm[(r, c)], 0.0);
        }
    }
    for d in 0..m {
        hc[(d, d)] -= shift;
    }
    let lu = nalgebra::linalg::LU::new(hc);
    let mut v = nalgebra::DVector::<Complex64>::from_element(m, Complex64::new(1.0, 0.0));
    for _ in 0..2 {
        if let Some(w) = lu.solve(&v) {
            let n = w.norm();
            if n.is_finite() && n > 0.0 {
                v = w / Complex64::new(n, 0.0);
                continue;
            }
        }
        break;
    }
    v.as_slice().to_vec()
}
