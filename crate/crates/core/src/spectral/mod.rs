//! Spectrum of the coupled operator: exact eigenvalue formulas, discrete
//! eigenpairs of the pencil (A, M), real bases of the unstable subspaces,
//! the Hautus stabilizability test and the eigenvalue-convergence study.

mod arnoldi;
mod refine;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::experiments::{compute_order, ConvergenceTable, ErrorColumn};
use crate::fem::{assemble_block_system, BlockSystem, ModelParams};
use crate::kernels;
use crate::mesh::{build_unit_square_mesh, ControlRegion};
use crate::sparse::quadratic_form_complex;

pub use arnoldi::shift_invert_arnoldi;

/// Size threshold below which the dense reduction path discovers
/// eigenvalues; larger pencils go through shift-invert Arnoldi.
const DENSE_CAP: usize = 600;
const RESIDUAL_TARGET: f64 = 1e-11;
const RESIDUAL_ACCEPT: f64 = 1e-8;

/// Dirichlet eigenvalue (m^2 + n^2) pi^2 of -Laplace on the unit square.
pub fn exact_laplacian_eig(m: u32, n: u32) -> f64 {
    assert!(m >= 1 && n >= 1);
    ((m * m + n * n) as f64) * std::f64::consts::PI.powi(2)
}

/// The two shifted eigenvalues of the coupled operator over the scalar
/// Laplacian eigenvalue `lambda`: roots of
/// `Lambda^2 + ((eta0+beta0) lambda + kappa + 2 nu0) Lambda +
/// (eta0 lambda + nu0)(beta0 lambda + kappa + nu0) + eta1 = 0`,
/// plus omega. Returned as (plus branch, minus branch).
pub fn exact_coupled_eigs(params: &ModelParams, lambda: f64) -> (Complex64, Complex64) {
    let b = (params.eta0 + params.beta0) * lambda + params.kappa + 2.0 * params.nu0;
    let disc = ((params.beta0 - params.eta0) * lambda + params.kappa).powi(2) - 4.0 * params.eta1;
    let half = Complex64::new(disc, 0.0).sqrt() * 0.5;
    let base = Complex64::new(-b / 2.0 + params.omega, 0.0);
    (base + half, base - half)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Which {
    LargestReal,
    NearestTo(f64),
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    /// Right eigenvector of (A, M), M-normalized, phase-fixed.
    pub right: Vec<Complex64>,
    /// Eigenvector of the transposed pencil (A', M) for the same value.
    pub left: Option<Vec<Complex64>>,
    pub residual_right: f64,
    pub residual_left: f64,
}

impl EigenPair {
    fn conjugate(&self) -> EigenPair {
        EigenPair {
            value: self.value.conj(),
            right: self.right.iter().map(|x| x.conj()).collect(),
            left: self.left.as_ref().map(|l| l.iter().map(|x| x.conj()).collect()),
            residual_right: self.residual_right,
            residual_left: self.residual_left,
        }
    }
}

fn sort_desc(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(b.im.partial_cmp(&a.im).unwrap()));
}

/// Dense path: all pencil eigenvalues via M = LL' reduction and real Schur.
fn dense_pencil_eigenvalues(system: &BlockSystem) -> Result<Vec<Complex64>> {
    let a = system.a.to_dense();
    let m = system.m.to_dense();
    let chol = nalgebra::linalg::Cholesky::new(m)
        .ok_or_else(|| Error::Singular("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L^-1 A L^-T
    let mut c = a;
    l.solve_lower_triangular_mut(&mut c);
    c.transpose_mut();
    l.solve_lower_triangular_mut(&mut c);
    c.transpose_mut();
    let mut eigs = crate::schur::dense_eigenvalues(&c)?;
    sort_desc(&mut eigs);
    Ok(eigs)
}

/// Representatives (Im >= 0) of the wanted region of the spectrum, each
/// with an optional start vector for refinement.
fn candidate_reps(
    system: &BlockSystem,
    count: usize,
    which: Which,
) -> Result<Vec<(Complex64, Option<Vec<Complex64>>)>> {
    let n2 = system.a.nrows();
    let raw_needed = count.min(n2);
    let rank = |v: &Complex64| match which {
        Which::LargestReal => -v.re,
        Which::NearestTo(t) => (v - Complex64::new(t, 0.0)).norm(),
    };
    if n2 <= DENSE_CAP {
        let mut values = dense_pencil_eigenvalues(system)?;
        values.retain(|v| v.im >= -1e-12 * (1.0 + v.norm()));
        values.sort_by(|a, b| rank(a).partial_cmp(&rank(b)).unwrap());
        let mut reps = Vec::new();
        let mut raw = 0;
        for v in values {
            if raw >= raw_needed {
                break;
            }
            raw += if v.im.abs() > 1e-12 * (1.0 + v.norm()) { 2 } else { 1 };
            reps.push((v, None));
        }
        Ok(reps)
    } else {
        let sigma = match which {
            Which::LargestReal => system.field_of_values_bound() + 1.0,
            Which::NearestTo(t) => t,
        };
        let m_steps = (6 * raw_needed + 24).clamp(30, n2);
        let result = shift_invert_arnoldi(system, sigma, m_steps)?;
        let mut ritz: Vec<&arnoldi::RitzPair> =
            result.ritz.iter().filter(|r| r.value.im >= -1e-9 * (1.0 + r.value.norm())).collect();
        ritz.sort_by(|a, b| rank(&a.value).partial_cmp(&rank(&b.value)).unwrap());
        let mut reps = Vec::new();
        let mut raw = 0;
        for r in ritz {
            if raw >= raw_needed {
                break;
            }
            raw += if r.value.im.abs() > 1e-9 * (1.0 + r.value.norm()) { 2 } else { 1 };
            reps.push((r.value, Some(r.vector.clone())));
        }
        Ok(reps)
    }
}

/// Compute eigenpairs of the generalized pencil (A, M), sorted by
/// descending real part; `count` bounds how many eigenvalues (counted with
/// conjugates) are returned. Left eigenvectors are solved from the
/// transposed pencil at the refined eigenvalues when `compute_left` is set.
pub fn discrete_eigs_with(
    system: &BlockSystem,
    count: usize,
    which: Which,
    compute_left: bool,
) -> Result<Vec<EigenPair>> {
    let n2 = system.a.nrows();
    if count == 0 || count > n2 {
        return Err(Error::Dimension(format!("count must be in 1..={n2}")));
    }
    let perm = system.block_permutation();
    let reps = candidate_reps(system, count, which)?;

    let at = if compute_left { Some(system.a.transpose()) } else { None };
    let mut refined: Vec<EigenPair> = Vec::new();
    for (rep_idx, (theta0, v0)) in reps.into_iter().enumerate() {
        let mut attempt_seed = 10 + rep_idx as u64;
        let mut accepted = None;
        for retry in 0..2 {
            let r = refine::refine_seeded(
                &system.a,
                &system.m,
                perm,
                theta0,
                if retry == 0 { v0.clone() } else { None },
                true,
                RESIDUAL_TARGET,
                RESIDUAL_ACCEPT,
                15,
                attempt_seed,
            )?;
            // snap near-real values onto the axis
            let mut value = r.value;
            let mut vector = r.vector;
            if value.im.abs() <= 1e-9 * (1.0 + value.norm()) {
                value.im = 0.0;
                for x in vector.iter_mut() {
                    x.im = 0.0;
                }
                // renormalize the realified vector
                let norm = quadratic_form_complex(&system.m, &vector, &vector).re.sqrt();
                for x in vector.iter_mut() {
                    *x /= norm;
                }
            } else if value.im < 0.0 {
                value = value.conj();
                for x in vector.iter_mut() {
                    *x = x.conj();
                }
            }
            // duplicate iff both the value and the eigendirection repeat
            // (a repeated value with an independent vector is a genuine
            // multiple eigenvalue and is kept)
            let duplicate = refined.iter().any(|p: &EigenPair| {
                (p.value - value).norm() <= 1e-7 * (1.0 + value.norm())
                    && quadratic_form_complex(&system.m, &p.right, &vector).norm() > 0.99
            });
            if !duplicate {
                accepted = Some((value, vector, r.residual));
                break;
            }
            attempt_seed += 101; // converged onto a neighbor; retry fresh
        }
        let Some((value, vector, residual_right)) = accepted else {
            continue;
        };
        let r = refine::RefinedPair { value, vector, residual: residual_right };
        let (value, vector) = (r.value, r.vector);
        let (left, residual_left) = if let Some(at) = &at {
            let l = refine::refine(
                at,
                &system.m,
                perm,
                value,
                None,
                false,
                RESIDUAL_TARGET,
                RESIDUAL_ACCEPT,
                8,
            )?;
            (Some(l.vector), l.residual)
        } else {
            (None, 0.0)
        };
        refined.push(EigenPair {
            value,
            right: vector,
            left,
            residual_right: r.residual,
            residual_left,
        });
    }

    // expand conjugates, sort, truncate
    let mut out = Vec::new();
    for p in refined {
        let is_pair = p.value.im != 0.0;
        if is_pair {
            let conj = p.conjugate();
            out.push(p);
            out.push(conj);
        } else {
            out.push(p);
        }
    }
    out.sort_by(|a, b| {
        b.value
            .re
            .partial_cmp(&a.value.re)
            .unwrap()
            .then(b.value.im.partial_cmp(&a.value.im).unwrap())
    });
    out.truncate(count);
    Ok(out)
}

pub fn discrete_eigs(system: &BlockSystem, count: usize, which: Which) -> Result<Vec<EigenPair>> {
    discrete_eigs_with(system, count, which, true)
}

/// One unstable eigenvalue group: a real eigenvalue or a conjugate pair,
/// with its (complex) left eigenvector retained for the Hautus test.
#[derive(Debug, Clone)]
pub struct UnstableMode {
    pub value: Complex64,
    pub left: Vec<Complex64>,
    /// First column and width (1 or 2) in the real bases.
    pub cols: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct UnstableBasis {
    /// Right basis, 2n x count.
    pub e: DMatrix<f64>,
    /// Left basis with Xi' M E = I, 2n x count.
    pub xi: DMatrix<f64>,
    pub count: usize,
    /// All selected eigenvalues (conjugate pairs contribute both members).
    pub eigenvalues: Vec<Complex64>,
    pub modes: Vec<UnstableMode>,
}

/// Build real right/left bases of the unstable subspace from eigenpairs
/// sorted by descending real part. Eigenvalues with Re > -tol are
/// selected; each conjugate pair contributes the columns (Re v, Im v) of
/// its Im > 0 member. The left basis is rescaled so that Xi' M E = I.
pub fn unstable_basis(
    system: &BlockSystem,
    pairs: &[EigenPair],
    tol: f64,
) -> Result<UnstableBasis> {
    let n2 = system.a.nrows();
    let selected: Vec<&EigenPair> = pairs.iter().filter(|p| p.value.re > -tol).collect();
    // group: real ones, plus the Im > 0 member of each pair
    let mut groups: Vec<&EigenPair> = Vec::new();
    for p in &selected {
        if p.value.im == 0.0 {
            groups.push(p);
        } else {
            let partner = pairs
                .iter()
                .find(|q| (q.value - p.value.conj()).norm() <= 1e-7 * (1.0 + p.value.norm()));
            if partner.is_none() {
                return Err(Error::IllConditioned(format!(
                    "unstable eigenvalue {} is missing its conjugate partner",
                    p.value
                )));
            }
            if p.value.im > 0.0 {
                groups.push(p);
            }
        }
    }
    let count: usize = groups.iter().map(|g| if g.value.im != 0.0 { 2 } else { 1 }).sum();
    let mut eigenvalues = Vec::new();
    let mut e = DMatrix::<f64>::zeros(n2, count);
    let mut xi_raw = DMatrix::<f64>::zeros(n2, count);
    let mut modes = Vec::new();
    let mut col = 0;
    for g in &groups {
        let left = g
            .left
            .as_ref()
            .ok_or_else(|| Error::IllConditioned("eigenpair lacks a left eigenvector".into()))?;
        if g.value.im != 0.0 {
            for i in 0..n2 {
                e[(i, col)] = g.right[i].re;
                e[(i, col + 1)] = g.right[i].im;
                xi_raw[(i, col)] = left[i].re;
                xi_raw[(i, col + 1)] = left[i].im;
            }
            eigenvalues.push(g.value);
            eigenvalues.push(g.value.conj());
            modes.push(UnstableMode { value: g.value, left: left.clone(), cols: (col, 2) });
            col += 2;
        } else {
            for i in 0..n2 {
                e[(i, col)] = g.right[i].re;
                xi_raw[(i, col)] = left[i].re;
            }
            eigenvalues.push(g.value);
            modes.push(UnstableMode { value: g.value, left: left.clone(), cols: (col, 1) });
            col += 1;
        }
    }
    if count == 0 {
        return Ok(UnstableBasis { e, xi: xi_raw, count, eigenvalues, modes });
    }
    // biorthonormalize: C = Xi_raw' M E, Xi = Xi_raw C^-T
    let mut c = DMatrix::<f64>::zeros(count, count);
    for j in 0..count {
        let e_col: Vec<f64> = e.column(j).iter().copied().collect();
        let me = system.m.matvec_alloc(&e_col);
        for i in 0..count {
            c[(i, j)] = (0..n2).map(|k| xi_raw[(k, i)] * me[k]).sum();
        }
    }
    let svd = c.clone().svd(false, false);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if smin <= 1e-12 * smax {
        return Err(Error::IllConditioned(
            "left/right unstable bases are nearly M-orthogonal; pairing failed".into(),
        ));
    }
    let ct_lu = nalgebra::linalg::LU::new(c.transpose());
    let w = ct_lu
        .solve(&DMatrix::identity(count, count))
        .ok_or_else(|| Error::IllConditioned("biorthonormalization failed".into()))?;
    let xi = &xi_raw * w;
    Ok(UnstableBasis { e, xi, count, eigenvalues, modes })
}

#[derive(Debug, Clone)]
pub struct HautusReport {
    pub ok: bool,
    /// True when there was nothing to test (no unstable eigenvalues).
    pub vacuous: bool,
    /// Per unstable mode: (eigenvalue, ratio).
    pub ratios: Vec<(Complex64, f64)>,
}

/// Discrete Hautus test: for each unstable left eigenvector xi = (xi_y,
/// xi_z), the ratio ||xi_y||_{G_O} / ||xi||_M must exceed `tol`.
pub fn hautus_check(system: &BlockSystem, basis: &UnstableBasis, tol: f64) -> HautusReport {
    if basis.modes.is_empty() {
        return HautusReport { ok: true, vacuous: true, ratios: Vec::new() };
    }
    let n = system.n;
    let mut ratios = Vec::new();
    let mut ok = true;
    for mode in &basis.modes {
        let xi_y: Vec<Complex64> = mode.left[..n].to_vec();
        let num = quadratic_form_complex(&system.g_o, &xi_y, &xi_y).re.max(0.0).sqrt();
        let den = quadratic_form_complex(&system.m, &mode.left, &mode.left).re.max(0.0).sqrt();
        let ratio = num / den.max(1e-300);
        if ratio <= tol {
            ok = false;
        }
        ratios.push((mode.value, ratio));
    }
    HautusReport { ok, vacuous: false, ratios }
}

/// Eigenvalue target: mode numbers of the scalar Laplacian eigenvalue and
/// the branch of the coupled quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EigTarget {
    pub m: u32,
    pub n: u32,
    pub plus_branch: bool,
}

impl EigTarget {
    pub fn label(&self) -> String {
        format!("{}_{}_{}", self.m, self.n, if self.plus_branch { "plus" } else { "minus" })
    }
}

/// Position-based association: exact spectrum enumerated over low modes,
/// both lists sorted by descending real part with multiplicity, and the
/// target matched to the discrete eigenvalue at the exact value's first
/// position.
fn exact_raw_spectrum(params: &ModelParams, max_mode: u32) -> Vec<Complex64> {
    let mut raw = Vec::new();
    for m in 1..=max_mode {
        for n in 1..=max_mode {
            let (p, q) = exact_coupled_eigs(params, exact_laplacian_eig(m, n));
            raw.push(p);
            raw.push(q);
        }
    }
    sort_desc(&mut raw);
    raw
}

fn rep_of(v: Complex64) -> Complex64 {
    if v.im < 0.0 {
        v.conj()
    } else {
        v
    }
}

/// Per-level eigenvalue errors |Lambda_exact - Lambda_h| and their
/// convergence orders for the requested targets.
pub fn eig_convergence_study(
    params: &ModelParams,
    levels: &[u32],
    targets: &[EigTarget],
) -> Result<ConvergenceTable> {
    if levels.is_empty() || targets.is_empty() {
        return Err(Error::Config("study needs at least one level and target".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("levels must be strictly ascending".into()));
    }
    params.validate().map_err(|e| Error::Config(e.to_string()))?;

    let raw_exact = exact_raw_spectrum(params, 5);
    let mut positions = Vec::new();
    let mut exact_values = Vec::new();
    for t in targets {
        let lam = exact_laplacian_eig(t.m, t.n);
        let (p, q) = exact_coupled_eigs(params, lam);
        let v = if t.plus_branch { p } else { q };
        let pos = raw_exact
            .iter()
            .position(|e| (e - v).norm() <= 1e-9 * (1.0 + v.norm()))
            .ok_or_else(|| Error::Config(format!("target ({}, {}) beyond enumerated modes", t.m, t.n)))?;
        positions.push(pos);
        exact_values.push(rep_of(v));
    }
    let p_max = *positions.iter().max().unwrap();

    let per_level = kernels::try_map_items(levels.to_vec(), |level| {
        let mesh = build_unit_square_mesh(level)?;
        let region = ControlRegion::full_domain(&mesh);
        let system = assemble_block_system(&mesh, params, &region)?;
        let count = (p_max + 5).min(system.a.nrows());
        let pairs = discrete_eigs_with(&system, count, Which::LargestReal, false)?;
        let values: Vec<Complex64> = pairs.iter().map(|p| p.value).collect();
        Ok((mesh.h, values))
    })?;

    let hs: Vec<f64> = per_level.iter().map(|(h, _)| *h).collect();
    let mut value_columns = Vec::new();
    let mut error_columns = Vec::new();
    for (t, (&pos, &exact)) in targets.iter().zip(positions.iter().zip(&exact_values)) {
        let mut res = Vec::new();
        let mut ims = Vec::new();
        let mut errs = Vec::new();
        for (_, values) in &per_level {
            if pos >= values.len() {
                return Err(Error::EigenNonConvergence { residual: f64::NAN, iterations: 0 });
            }
            let v = rep_of(values[pos]);
            res.push(v.re);
            ims.push(v.im);
            errs.push((v - exact).norm());
        }
        let orders = compute_order(&errs, &hs);
        value_columns.push((format!("re_{}", t.label()), res));
        value_columns.push((format!("im_{}", t.label()), ims));
        error_columns.push(ErrorColumn { name: format!("err_{}", t.label()), errors: errs, orders });
    }
    Ok(ConvergenceTable { hs, value_columns, error_columns })
}
