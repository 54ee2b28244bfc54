//! Banded LU with partial pivoting, generic over real/complex scalars.
//!
//! Storage follows the LAPACK `dgbtrf` convention: a (2*kl+ku+1) x n array
//! where entry (i, j) of the matrix lives at band row `kl + ku + i - j`,
//! column `j`. The extra `kl` rows hold pivoting fill. Off-band writes are
//! rejected at build time.
//!
//! The FEM systems here are banded once the two fields are interleaved
//! (y_i, z_i alternating) and, for imported meshes, after an RCM pass; see
//! [`Permutation`].

use nalgebra::ComplexField;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::{bandwidth_under, rcm_ordering, CsrMatrix};

/// Node renumbering applied symmetrically to rows and columns.
#[derive(Debug, Clone)]
pub struct Permutation {
    forward: Vec<usize>, // forward[old] = new
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { forward: (0..n).collect() }
    }

    pub fn from_forward(forward: Vec<usize>) -> Self {
        Permutation { forward }
    }

    /// Best of identity and RCM for the given symmetric pattern.
    pub fn bandwidth_minimizing(pattern: &CsrMatrix) -> Self {
        let id: Vec<usize> = (0..pattern.nrows()).collect();
        let rcm = rcm_ordering(pattern);
        if bandwidth_under(pattern, &rcm) < bandwidth_under(pattern, &id) {
            Permutation { forward: rcm }
        } else {
            Permutation { forward: id }
        }
    }

    /// Extend a scalar-node permutation to the two-field block ordering
    /// [y_0..y_{n-1}, z_0..z_{n-1}] by interleaving: y_i -> 2 p(i),
    /// z_i -> 2 p(i) + 1.
    pub fn interleave_two_fields(&self) -> Permutation {
        let n = self.forward.len();
        let mut fwd = vec![0usize; 2 * n];
        for i in 0..n {
            fwd[i] = 2 * self.forward[i];
            fwd[n + i] = 2 * self.forward[i] + 1;
        }
        Permutation { forward: fwd }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    #[inline]
    pub fn apply(&self, old: usize) -> usize {
        self.forward[old]
    }

    pub fn permute<T: Copy + Default>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); x.len()];
        for (old, &v) in x.iter().enumerate() {
            out[self.forward[old]] = v;
        }
        out
    }

    pub fn unpermute<T: Copy + Default>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); x.len()];
        for (old, o) in out.iter_mut().enumerate() {
            *o = x[self.forward[old]];
        }
        out
    }
}

/// Band matrix being assembled; call [`Banded::factor`] to get the LU.
pub struct Banded<T> {
    n: usize,
    kl: usize,
    ku: usize,
    stride: usize,
    data: Vec<T>, // column-major: data[col * stride + band_row]
}

impl<T: ComplexField<RealField = f64> + Copy> Banded<T> {
    pub fn zero(n: usize, kl: usize, ku: usize) -> Self {
        let stride = 2 * kl + ku + 1;
        Banded { n, kl, ku, stride, data: vec![T::zero(); stride * n] }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "entry off band");
        let row = self.kl + self.ku + i - j;
        self.data[j * self.stride + row] += v;
    }

    /// alpha*A + beta*M placed under a symmetric permutation of (A, M).
    pub fn from_pencil(
        a: &CsrMatrix,
        m: &CsrMatrix,
        alpha: T,
        beta: T,
        perm: &Permutation,
    ) -> Self {
        let n = a.nrows();
        assert_eq!(m.nrows(), n);
        let mut kl = 0usize;
        let mut ku = 0usize;
        for (r, c, _) in a.iter().chain(m.iter()) {
            let (pi, pj) = (perm.apply(r), perm.apply(c));
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
        }
        let mut band = Banded::zero(n, kl, ku);
        for (r, c, v) in a.iter() {
            band.add(perm.apply(r), perm.apply(c), alpha * T::from_real(v));
        }
        for (r, c, v) in m.iter() {
            band.add(perm.apply(r), perm.apply(c), beta * T::from_real(v));
        }
        band
    }

    /// LU factorization with partial pivoting (row interchanges within the
    /// band). Fails on an exactly zero pivot.
    #[allow(clippy::needless_range_loop)]
    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let (n, kl, ku, stride) = (self.n, self.kl, self.ku, self.stride);
        let kv = kl + ku; // working upper bandwidth including fill
        let mut ipiv = vec![0usize; n];
        let mut tiny_pivot = false;
        for j in 0..n {
            // pivot search in column j, rows j..=min(j+kl, n-1)
            let reach = kl.min(n - 1 - j);
            let mut p = 0usize;
            let mut best = self.at(j, j).modulus();
            for i in 1..=reach {
                let m = self.at(j + i, j).modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            ipiv[j] = j + p;
            if best == 0.0 {
                return Err(Error::Singular(format!("zero pivot at column {j}")));
            }
            if best < 1e-300 {
                tiny_pivot = true;
            }
            if p > 0 {
                // swap rows j and j+p across columns j..=min(j+kv, n-1)
                let cmax = (j + kv).min(n - 1);
                for c in j..=cmax {
                    let r1 = kl + ku + j - c;
                    let r2 = r1 + p;
                    self.data.swap(c * stride + r1, c * stride + r2);
                }
            }
            let pivot = self.at(j, j);
            for i in 1..=reach {
                let l = self.at(j + i, j) / pivot;
                self.set(j + i, j, l);
                let cmax = (j + kv).min(n - 1);
                for c in (j + 1)..=cmax {
                    let u = self.at(j, c);
                    if u != T::zero() {
                        let cur = self.at(j + i, c);
                        self.set(j + i, c, cur - l * u);
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, stride, data: self.data, ipiv, tiny_pivot })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.data[j * self.stride + self.kl + self.ku + i - j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[j * self.stride + self.kl + self.ku + i - j] = v;
    }
}

pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    stride: usize,
    data: Vec<T>,
    ipiv: Vec<usize>,
    tiny_pivot: bool,
}

impl<T: ComplexField<RealField = f64> + Copy> BandedLu<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// A pivot below 1e-300 was accepted; the factorization is valid but the
    /// matrix is numerically singular (useful to trigger shift nudging).
    pub fn nearly_singular(&self) -> bool {
        self.tiny_pivot
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.data[j * self.stride + self.kl + self.ku + i - j]
    }

    /// Solve in place (vector given in the permuted ordering).
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        // forward: apply pivots and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != T::zero() {
                let reach = kl.min(n - 1 - j);
                for i in 1..=reach {
                    let l = self.at(j + i, j);
                    b[j + i] -= l * bj;
                }
            }
        }
        // backward: U
        for j in (0..n).rev() {
            let mut s = b[j];
            let cmax = (j + kv).min(n - 1);
            for c in (j + 1)..=cmax {
                s -= self.at(j, c) * b[c];
            }
            b[j] = s / self.at(j, j);
        }
    }
}

/// Convenience: factorization of alpha*A + beta*M under a permutation, with
/// solves taking vectors in the ORIGINAL ordering.
pub struct PencilFactor<T> {
    perm: Permutation,
    lu: BandedLu<T>,
}

impl<T: ComplexField<RealField = f64> + Copy + Default> PencilFactor<T> {
    pub fn new(a: &CsrMatrix, m: &CsrMatrix, alpha: T, beta: T, perm: &Permutation) -> Result<Self> {
        let band = Banded::from_pencil(a, m, alpha, beta, perm);
        Ok(PencilFactor { perm: perm.clone(), lu: band.factor()? })
    }

    pub fn nearly_singular(&self) -> bool {
        self.lu.nearly_singular()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = self.perm.permute(b);
        self.lu.solve_in_place(&mut x);
        self.perm.unpermute(&x)
    }
}

pub type RealPencilFactor = PencilFactor<f64>;
pub type ComplexPencilFactor = PencilFactor<Complex64>;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_solve_check(n: usize, kl: usize, ku: usize, entries: &[(usize, usize, f64)]) {
        let a = CsrMatrix::from_triplets(n, n, entries);
        let zero = CsrMatrix::from_triplets(n, n, &[]);
        let perm = Permutation::identity(n);
        let f = PencilFactor::<f64>::new(&a, &zero, 1.0, 0.0, &perm).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let b = a.matvec_alloc(&x_true);
        let x = f.solve(&b);
        for (xs, xt) in x.iter().zip(&x_true) {
            assert_relative_eq!(xs, xt, epsilon = 1e-10);
        }
        let _ = (kl, ku);
    }

    #[test]
    fn tridiagonal_with_pivoting() {
        // subdiagonal dominant so pivoting actually swaps
        let n = 12;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 0.3));
            if i + 1 < n {
                e.push((i + 1, i, 2.0));
                e.push((i, i + 1, 1.0));
            }
        }
        dense_solve_check(n, 1, 1, &e);
    }

    #[test]
    fn wider_band() {
        let n = 25;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 4.0));
            for d in 1..=3usize {
                if i + d < n {
                    e.push((i, i + d, -0.5 / d as f64));
                    e.push((i + d, i, -0.9 / d as f64));
                }
            }
        }
        dense_solve_check(n, 3, 3, &e);
    }

    #[test]
    fn complex_shifted_solve() {
        let n = 10;
        let mut at = Vec::new();
        let mut mt = Vec::new();
        for i in 0..n {
            at.push((i, i, -2.0 - i as f64));
            mt.push((i, i, 1.0));
            if i + 1 < n {
                at.push((i, i + 1, 1.0));
                at.push((i + 1, i, 0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &at);
        let m = CsrMatrix::from_triplets(n, n, &mt);
        let sigma = Complex64::new(0.3, 1.1);
        let perm = Permutation::identity(n);
        let f =
            ComplexPencilFactor::new(&a, &m, Complex64::new(1.0, 0.0), -sigma, &perm).unwrap();
        let x_true: Vec<Complex64> =
            (0..n).map(|i| Complex64::new(i as f64, 1.0 - i as f64 * 0.2)).collect();
        // b = (A - sigma M) x
        let ax = a.matvec_complex_alloc(&x_true);
        let mx = m.matvec_complex_alloc(&x_true);
        let b: Vec<Complex64> = ax.iter().zip(&mx).map(|(a, m)| a - sigma * m).collect();
        let x = f.solve(&b);
        for (xs, xt) in x.iter().zip(&x_true) {
            assert!((xs - xt).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_pivot_detected() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 0.0)]);
        let zero = CsrMatrix::from_triplets(2, 2, &[]);
        let perm = Permutation::identity(2);
        assert!(PencilFactor::<f64>::new(&a, &zero, 1.0, 0.0, &perm).is_err());
    }

    #[test]
    fn permuted_solve_round_trip() {
        let n = 8;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 3.0 + i as f64));
            e.push((i, (i + 3) % n, 1.0)); // wraps: identity perm has huge band
        }
        let a = CsrMatrix::from_triplets(n, n, &e);
        let zero = CsrMatrix::from_triplets(n, n, &[]);
        let perm = Permutation::identity(n); // band covers everything; still correct
        let f = PencilFactor::<f64>::new(&a, &zero, 1.0, 0.0, &perm).unwrap();
        let xt: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let b = a.matvec_alloc(&xt);
        let x = f.solve(&b);
        for (xs, x0) in x.iter().zip(&xt) {
            assert_relative_eq!(xs, x0, epsilon = 1e-10);
        }
    }
}
