//! Data-parallel inner loops with sequential fallbacks.
//!
//! The `parallel` feature routes the hot kernels through rayon; the `_seq`
//! variants are always compiled so benchmarks can compare both paths in a
//! single run. Row-parallel products keep per-row summation order fixed, so
//! results are bit-identical across thread counts.

use num_complex::Complex64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[inline]
fn row_dot(indices: &[usize], values: &[f64], x: &[f64]) -> f64 {
    indices.iter().zip(values).map(|(&c, &v)| v * x[c]).sum()
}

pub fn csr_matvec_seq(indptr: &[usize], indices: &[usize], values: &[f64], x: &[f64], y: &mut [f64]) {
    for (r, yr) in y.iter_mut().enumerate() {
        let (lo, hi) = (indptr[r], indptr[r + 1]);
        *yr = row_dot(&indices[lo..hi], &values[lo..hi], x);
    }
}

#[cfg(feature = "parallel")]
pub fn csr_matvec(indptr: &[usize], indices: &[usize], values: &[f64], x: &[f64], y: &mut [f64]) {
    if y.len() < 4096 {
        return csr_matvec_seq(indptr, indices, values, x, y);
    }
    y.par_iter_mut().enumerate().for_each(|(r, yr)| {
        let (lo, hi) = (indptr[r], indptr[r + 1]);
        *yr = row_dot(&indices[lo..hi], &values[lo..hi], x);
    });
}

#[cfg(not(feature = "parallel"))]
pub fn csr_matvec(indptr: &[usize], indices: &[usize], values: &[f64], x: &[f64], y: &mut [f64]) {
    csr_matvec_seq(indptr, indices, values, x, y)
}

#[inline]
fn row_dot_complex(indices: &[usize], values: &[f64], x: &[Complex64]) -> Complex64 {
    indices.iter().zip(values).map(|(&c, &v)| x[c] * v).sum()
}

pub fn csr_matvec_complex_seq(
    indptr: &[usize],
    indices: &[usize],
    values: &[f64],
    x: &[Complex64],
    y: &mut [Complex64],
) {
    for (r, yr) in y.iter_mut().enumerate() {
        let (lo, hi) = (indptr[r], indptr[r + 1]);
        *yr = row_dot_complex(&indices[lo..hi], &values[lo..hi], x);
    }
}

#[cfg(feature = "parallel")]
pub fn csr_matvec_complex(
    indptr: &[usize],
    indices: &[usize],
    values: &[f64],
    x: &[Complex64],
    y: &mut [Complex64],
) {
    if y.len() < 4096 {
        return csr_matvec_complex_seq(indptr, indices, values, x, y);
    }
    y.par_iter_mut().enumerate().for_each(|(r, yr)| {
        let (lo, hi) = (indptr[r], indptr[r + 1]);
        *yr = row_dot_complex(&indices[lo..hi], &values[lo..hi], x);
    });
}

#[cfg(not(feature = "parallel"))]
pub fn csr_matvec_complex(
    indptr: &[usize],
    indices: &[usize],
    values: &[f64],
    x: &[Complex64],
    y: &mut [Complex64],
) {
    csr_matvec_complex_seq(indptr, indices, values, x, y)
}

/// Deterministic quasi-random vector in [-1, 1); used as an eigensolver
/// start so that no symmetry class of the mesh is invisible (an all-ones
/// start is exactly orthogonal to sign-alternating eigenvectors).
pub fn seeded_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x1234_5678);
    (0..n)
        .map(|_| {
            // splitmix64
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

/// Order-preserving parallel map over an indexed range.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= 64 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Order-preserving map over owned work items (used for per-level studies);
/// fallible version propagates the first error by input order.
pub fn try_map_items<I, T, F>(items: Vec<I>, f: F) -> crate::error::Result<Vec<T>>
where
    I: Send,
    T: Send,
    F: Fn(I) -> crate::error::Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        let results: Vec<crate::error::Result<T>> = items.into_par_iter().map(f).collect();
        results.into_iter().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
