//! Eigenpair refinement on the pencil (A, M) by complex shifted inverse
//! iteration with an optional Rayleigh-quotient update.

use num_complex::Complex64;

use crate::banded::{ComplexPencilFactor, Permutation};
use crate::error::{Error, Result};
use crate::sparse::{quadratic_form_complex, CsrMatrix};

pub struct RefinedPair {
    pub value: Complex64,
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

fn m_normalize(m: &CsrMatrix, v: &mut [Complex64]) {
    let norm = quadratic_form_complex(m, v, v).re.max(0.0).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Rotate so the largest-magnitude component is real and positive.
pub fn fix_phase(v: &mut [Complex64]) {
    let mut idx = 0;
    let mut best = 0.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.norm_sqr();
        if m > best {
            best = m;
            idx = i;
        }
    }
    let pivot = v[idx];
    if pivot.norm() > 0.0 {
        let phase = pivot / pivot.norm();
        for x in v.iter_mut() {
            *x /= phase;
        }
    }
}

fn residual(a: &CsrMatrix, m: &CsrMatrix, theta: Complex64, v: &[Complex64]) -> f64 {
    let av = a.matvec_complex_alloc(v);
    let mv = m.matvec_complex_alloc(v);
    let mut num = 0.0;
    let mut den = 0.0;
    for (avi, mvi) in av.iter().zip(&mv) {
        num += (avi - theta * mvi).norm_sqr();
        den += avi.norm_sqr();
    }
    (num / den.max(1e-300)).sqrt()
}

/// Refine one eigenpair of (a, m). With `update_value` the shift follows
/// the Rayleigh quotient (RQI); otherwise the value stays fixed and only
/// the vector is iterated. Accepts once the relative residual drops below
/// `target`, and fails only above `accept`.
#[allow(clippy::too_many_arguments)]
pub fn refine(
    a: &CsrMatrix,
    m: &CsrMatrix,
    perm: &Permutation,
    theta0: Complex64,
    v0: Option<Vec<Complex64>>,
    update_value: bool,
    target: f64,
    accept: f64,
    max_iter: usize,
) -> Result<RefinedPair> {
    refine_seeded(a, m, perm, theta0, v0, update_value, target, accept, max_iter, 7)
}

#[allow(clippy::too_many_arguments)]
pub fn refine_seeded(
    a: &CsrMatrix,
    m: &CsrMatrix,
    perm: &Permutation,
    theta0: Complex64,
    v0: Option<Vec<Complex64>>,
    update_value: bool,
    target: f64,
    accept: f64,
    max_iter: usize,
    seed: u64,
) -> Result<RefinedPair> {
    let n = a.nrows();
    let mut v = v0.unwrap_or_else(|| {
        crate::kernels::seeded_vector(n, seed)
            .into_iter()
            .map(|x| Complex64::new(x, 0.0))
            .collect()
    });
    m_normalize(m, &mut v);
    let mut theta = theta0;
    let mut res = residual(a, m, theta, &v);
    let one = Complex64::new(1.0, 0.0);
    for it in 0..max_iter {
        if res <= target {
            break;
        }
        // factor A - theta M, nudging the shift off exact singularity
        let mut shift = theta;
        let mut factor: Option<ComplexPencilFactor> = None;
        for attempt in 0..3 {
            match ComplexPencilFactor::new(a, m, one, -shift, perm) {
                Ok(f) => {
                    factor = Some(f);
                    break;
                }
                Err(_) => {
                    let nudge = (1.0 + shift.norm()) * 1e-11 * 10f64.powi(attempt);
                    shift += Complex64::new(nudge, 0.0);
                }
            }
        }
        let Some(factor) = factor else {
            return Err(Error::EigenNonConvergence { residual: res, iterations: it });
        };
        let mv = m.matvec_complex_alloc(&v);
        let mut w = factor.solve(&mv);
        if w.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::EigenNonConvergence { residual: res, iterations: it });
        }
        m_normalize(m, &mut w);
        v = w;
        if update_value {
            let num = quadratic_form_complex(a, &v, &v);
            let den = quadratic_form_complex(m, &v, &v);
            theta = num / den;
        }
        res = residual(a, m, theta, &v);
    }
    if res > accept {
        return Err(Error::EigenNonConvergence { residual: res, iterations: max_iter });
    }
    m_normalize(m, &mut v);
    fix_phase(&mut v);
    Ok(RefinedPair { value: theta, vector: v, residual: res })
}
