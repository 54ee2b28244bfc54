//! Shared helpers for the integration suites, including an independent
//! Newton-Kleinman Riccati solver used as a cross-check oracle. The oracle
//! shares no code with the Hamiltonian-Schur path in the crate: its
//! Lyapunov solves go through a dense Kronecker system and its initial
//! stabilizing gain comes from Bass' method.

use nalgebra::{DMatrix, DVector};

/// Solve A' X + X A + Q = 0 by the Kronecker-product route (small n only).
pub fn lyapunov_kron(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut k = DMatrix::<f64>::zeros(n * n, n * n);
    // vec(A'X + XA) = (I (x) A' + A' (x) I) vec(X), column-major vec
    for col in 0..n {
        for row in 0..n {
            let r = col * n + row;
            for j in 0..n {
                k[(r, col * n + j)] += a[(j, row)];
                k[(r, j * n + row)] += a[(j, col)];
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(n * n);
    for col in 0..n {
        for row in 0..n {
            rhs[col * n + row] = -q[(row, col)];
        }
    }
    let sol = nalgebra::linalg::LU::new(k).solve(&rhs)?;
    let mut x = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        for row in 0..n {
            x[(row, col)] = sol[col * n + row];
        }
    }
    Some((&x + x.transpose()) * 0.5)
}

fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bass' method: a stabilizing initial gain K0 = B' X^-1 from the Lyapunov
/// equation -(A + beta I) X + X (-(A + beta I))' = -2 B B'.
fn bass_initial_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = -(a + DMatrix::identity(n, n) * beta);
    // shifted' is stable; solve shifted X + X shifted' = -2 B B'
    // i.e. (shifted')' X + X shifted' + 2 B B' = 0 in lyapunov_kron form
    let q = 2.0 * b * b.transpose();
    let x = lyapunov_kron(&shifted.transpose(), &q)?;
    let xinv = x.try_inverse()?;
    Some(b.transpose() * xinv)
}

/// Newton-Kleinman iteration for A'P + PA - P B B' P + Q = 0, fully
/// independent of the crate's solver. Returns None when no stabilizing
/// start could be built or the iteration stalls.
pub fn newton_kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    max_iter: usize,
) -> Option<DMatrix<f64>> {
    let mut k = bass_initial_gain(a, b)?;
    let mut p_prev: Option<DMatrix<f64>> = None;
    for _ in 0..max_iter {
        let a_cl = a - b * &k;
        // Kleinman's convergence theory needs every iterate's closed loop
        // stable; ill-conditioned draws can break this numerically, in
        // which case the oracle abstains.
        if spectral_abscissa(&a_cl) >= 0.0 {
            return None;
        }
        let rhs = q + k.transpose() * &k;
        let p = lyapunov_kron(&a_cl, &rhs)?;
        k = b.transpose() * &p;
        if let Some(prev) = &p_prev {
            if (&p - prev).norm() <= 1e-13 * p.norm().max(1.0) {
                break;
            }
        }
        p_prev = Some(p);
    }
    let p = p_prev?;
    // accept only a genuine stabilizing solution
    if spectral_abscissa(&(a - b * (b.transpose() * &p))) >= 0.0 {
        return None;
    }
    if p.symmetric_eigenvalues().iter().any(|&e| e < -1e-8 * p.norm()) {
        return None;
    }
    Some(p)
}

#[allow(dead_code)]
pub fn residual_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    (a.transpose() * p + p * a - p * b * b.transpose() * p + q).norm()
}
