//! Real Schur form utilities: eigenvalue extraction from the
//! quasi-triangular factor, reordering of selected eigenvalues to the top
//! via adjacent block swaps, and a Bartels-Stewart Lyapunov solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real Schur decomposition m = Q T Q'.
pub fn real_schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 0).ok_or(
        Error::EigenNonConvergence { residual: f64::NAN, iterations: 0 },
    )?;
    let (q, t) = schur.unpack();
    debug_assert_eq!(t.nrows(), n);
    Ok((q, t))
}

/// Diagonal block layout of a quasi-triangular matrix.
fn find_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> (Complex64, Complex64) {
    if size == 1 {
        let v = Complex64::new(t[(start, start)], 0.0);
        (v, v)
    } else {
        let (a, b) = (t[(start, start)], t[(start, start + 1)]);
        let (c, d) = (t[(start + 1, start)], t[(start + 1, start + 1)]);
        let tr = 0.5 * (a + d);
        let disc = tr * tr - (a * d - b * c);
        if disc >= 0.0 {
            let s = disc.sqrt();
            (Complex64::new(tr + s, 0.0), Complex64::new(tr - s, 0.0))
        } else {
            let s = (-disc).sqrt();
            (Complex64::new(tr, s), Complex64::new(tr, -s))
        }
    }
}

/// All eigenvalues of a quasi-triangular matrix, in diagonal order.
pub fn quasi_tri_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(t.nrows());
    for (start, size) in find_blocks(t) {
        let (e1, e2) = block_eigenvalues(t, start, size);
        out.push(e1);
        if size == 2 {
            out.push(e2);
        }
    }
    out
}

/// Eigenvalues of a dense real matrix, sorted by descending real part
/// (ties broken by descending imaginary part).
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let (_, t) = real_schur(m)?;
    let mut eigs = quasi_tri_eigenvalues(&t);
    sort_eigs_desc(&mut eigs);
    Ok(eigs)
}

pub fn sort_eigs_desc(eigs: &mut [Complex64]) {
    eigs.sort_by(|a, b| {
        b.re.partial_cmp(&a.re).unwrap().then(b.im.partial_cmp(&a.im).unwrap())
    });
}

/// Split 2x2 blocks that carry REAL eigenvalues into 1x1 blocks with a
/// Givens rotation, so reordering can select their eigenvalues separately.
fn split_real_blocks(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>) {
    let n = t.nrows();
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] != 0.0 {
            let (e1, _) = block_eigenvalues(t, i, 2);
            if e1.im == 0.0 {
                // eigenvector of [[a,b],[c,d]] for mu: (mu - d, c)
                let mu = e1.re;
                let (c, d) = (t[(i + 1, i)], t[(i + 1, i + 1)]);
                let (vx, vy) = (mu - d, c);
                let r = vx.hypot(vy);
                if r > 0.0 {
                    let (cs, sn) = (vx / r, vy / r);
                    apply_rotation(t, q, i, cs, sn);
                }
                t[(i + 1, i)] = 0.0;
            }
            i += 2;
        } else {
            i += 1;
        }
    }
}

/// Apply the rotation G = [[cs, sn], [-sn, cs]] acting on rows/cols (i, i+1):
/// T <- G' T G (with rows getting G').
fn apply_rotation(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, i: usize, cs: f64, sn: f64) {
    let n = t.nrows();
    for col in 0..n {
        let (x, y) = (t[(i, col)], t[(i + 1, col)]);
        t[(i, col)] = cs * x + sn * y;
        t[(i + 1, col)] = -sn * x + cs * y;
    }
    for row in 0..n {
        let (x, y) = (t[(row, i)], t[(row, i + 1)]);
        t[(row, i)] = cs * x + sn * y;
        t[(row, i + 1)] = -sn * x + cs * y;
    }
    for row in 0..q.nrows() {
        let (x, y) = (q[(row, i)], q[(row, i + 1)]);
        q[(row, i)] = cs * x + sn * y;
        q[(row, i + 1)] = -sn * x + cs * y;
    }
}

/// Swap adjacent diagonal blocks (i, p) and (i+p, q_sz) by an orthogonal
/// similarity (direct swap via a Sylvester solve + QR).
fn swap_adjacent(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    i: usize,
    p: usize,
    q_sz: usize,
) -> Result<()> {
    let t11 = t.view((i, i), (p, p)).into_owned();
    let t22 = t.view((i + p, i + p), (q_sz, q_sz)).into_owned();
    let t12 = t.view((i, i + p), (p, q_sz)).into_owned();

    // Solve T11 X - X T22 = T12 (Kronecker form; sizes <= 2).
    let mut k = DMatrix::<f64>::zeros(p * q_sz, p * q_sz);
    for col in 0..q_sz {
        for row in 0..p {
            let r = col * p + row;
            for jj in 0..p {
                k[(r, col * p + jj)] += t11[(row, jj)];
            }
            for jj in 0..q_sz {
                k[(r, jj * p + row)] -= t22[(jj, col)];
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(p * q_sz);
    for col in 0..q_sz {
        for row in 0..p {
            rhs[col * p + row] = t12[(row, col)];
        }
    }
    let x = nalgebra::linalg::LU::new(k)
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("block swap: eigenvalues too close".into()))?;

    // Orthonormal basis of [[-X]; [I]] completed to a square Q.
    let m_sz = p + q_sz;
    let mut w = DMatrix::<f64>::zeros(m_sz, m_sz);
    for col in 0..q_sz {
        for row in 0..p {
            w[(row, col)] = -x[col * p + row];
        }
        w[(p + col, col)] = 1.0;
    }
    // complete with identity columns, then modified Gram-Schmidt
    for col in q_sz..m_sz {
        w[(col - q_sz, col)] = 1.0;
    }
    let qs = orthonormalize(w, q_sz)?;

    // similarity on the window
    let n = t.nrows();
    let win = i..i + m_sz;
    let rows = t.view((i, 0), (m_sz, n)).into_owned();
    t.view_mut((i, 0), (m_sz, n)).copy_from(&(qs.transpose() * rows));
    let cols = t.view((0, i), (n, m_sz)).into_owned();
    t.view_mut((0, i), (n, m_sz)).copy_from(&(cols * &qs));
    let qcols = q.view((0, i), (q.nrows(), m_sz)).into_owned();
    q.view_mut((0, i), (q.nrows(), m_sz)).copy_from(&(qcols * &qs));

    // scrub the roundoff below the new leading block
    for r in win.clone() {
        for c in i..r {
            if r >= i + q_sz || c >= i {
                // keep quasi-triangular: zero strictly-lower entries except
                // inside the two new diagonal blocks
                let in_first = r < i + q_sz && c < i + q_sz;
                let in_second = r >= i + q_sz && c >= i + q_sz;
                if !(in_first || in_second) {
                    t[(r, c)] = 0.0;
                }
            }
        }
    }
    Ok(())
}

/// Modified Gram-Schmidt; the first `lead` columns must already be
/// independent, remaining columns are completion candidates.
fn orthonormalize(mut w: DMatrix<f64>, lead: usize) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut filled = 0;
    for col in 0..w.ncols() {
        let mut v = w.column(col).into_owned();
        for pass in 0..2 {
            let _ = pass;
            for k in 0..filled {
                let proj = q.column(k).dot(&v);
                v -= proj * q.column(k).into_owned();
            }
        }
        let norm = v.norm();
        if norm > 1e-10 {
            q.set_column(filled, &(v / norm));
            filled += 1;
        } else if col < lead {
            return Err(Error::Singular("block swap basis is rank deficient".into()));
        }
        if filled == n {
            break;
        }
        let _ = &mut w;
    }
    if filled < n {
        return Err(Error::Singular("orthonormal completion failed".into()));
    }
    Ok(q)
}

/// Reorder the real Schur form so all eigenvalues satisfying `select`
/// come first. Returns how many eigenvalues (with multiplicity) were
/// selected.
pub fn reorder_schur(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    select: impl Fn(Complex64) -> bool,
) -> Result<usize> {
    split_real_blocks(t, q);
    let selected_count = |t: &DMatrix<f64>| {
        find_blocks(t)
            .iter()
            .map(|&(s, sz)| {
                let (e1, _) = block_eigenvalues(t, s, sz);
                if select(e1) {
                    sz
                } else {
                    0
                }
            })
            .sum::<usize>()
    };
    let total = selected_count(t);
    loop {
        let blocks = find_blocks(t);
        let mut swapped = false;
        for w in blocks.windows(2) {
            let (s1, z1) = w[0];
            let (s2, z2) = w[1];
            let sel1 = select(block_eigenvalues(t, s1, z1).0);
            let sel2 = select(block_eigenvalues(t, s2, z2).0);
            if !sel1 && sel2 {
                swap_adjacent(t, q, s1, z1, z2)?;
                swapped = true;
                break;
            }
        }
        if !swapped {
            break;
        }
    }
    Ok(total)
}

/// Solve A' X + X A + Q = 0 by Bartels-Stewart. `A` must have no pair of
/// eigenvalues summing to zero.
pub fn lyapunov(a: &DMatrix<f64>, q_rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if q_rhs.nrows() != n || q_rhs.ncols() != n {
        return Err(Error::Dimension("lyapunov: Q must match A".into()));
    }
    let (u, t) = real_schur(a)?;
    let c = -(u.transpose() * q_rhs * &u);
    let blocks = find_blocks(&t);
    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(js, jz) in &blocks {
        for &(is, iz) in &blocks {
            // C_IJ - sum_{K<I} (T_KI)' Y_KJ - sum_{K<J} Y_IK T_KJ
            let mut rhs = c.view((is, js), (iz, jz)).into_owned();
            for &(ks, kz) in &blocks {
                if ks < is {
                    let tki = t.view((ks, is), (kz, iz)).into_owned();
                    let ykj = y.view((ks, js), (kz, jz)).into_owned();
                    rhs -= tki.transpose() * ykj;
                }
                if ks < js {
                    let yik = y.view((is, ks), (iz, kz)).into_owned();
                    let tkj = t.view((ks, js), (kz, jz)).into_owned();
                    rhs -= yik * tkj;
                }
            }
            // (T_II)' Y + Y T_JJ = rhs via Kronecker
            let tii = t.view((is, is), (iz, iz)).into_owned();
            let tjj = t.view((js, js), (jz, jz)).into_owned();
            let mut k = DMatrix::<f64>::zeros(iz * jz, iz * jz);
            for col in 0..jz {
                for row in 0..iz {
                    let r = col * iz + row;
                    for kk in 0..iz {
                        k[(r, col * iz + kk)] += tii[(kk, row)]; // transpose
                    }
                    for kk in 0..jz {
                        k[(r, kk * iz + row)] += tjj[(kk, col)];
                    }
                }
            }
            let mut v = DVector::<f64>::zeros(iz * jz);
            for col in 0..jz {
                for row in 0..iz {
                    v[col * iz + row] = rhs[(row, col)];
                }
            }
            let sol = nalgebra::linalg::LU::new(k)
                .solve(&v)
                .ok_or_else(|| Error::Singular("lyapunov: singular small block".into()))?;
            for col in 0..jz {
                for row in 0..iz {
                    y[(is + row, js + col)] = sol[col * iz + row];
                }
            }
        }
    }
    Ok(&u * y * u.transpose())
}
