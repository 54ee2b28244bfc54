//! P1 assembly of the coupled two-field system.
//!
//! Unknown ordering: all y coefficients first, then all z coefficients,
//! each in interior-node order. The shifted block operator is
//!
//! ```text
//! A = | -eta0*K + (omega-nu0)*G        -eta1*G                    |
//!     |  G                             -beta0*K + (-kappa+omega-nu0)*G |
//! ```
//!
//! with M = diag(G, G) and B = [G_O; 0].

use serde::Deserialize;

use crate::banded::{PencilFactor, Permutation};
use crate::error::{Error, Result};
use crate::kernels;
use crate::mesh::{ControlRegion, Mesh};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ModelParams {
    pub eta0: f64,
    pub beta0: f64,
    pub kappa: f64,
    pub nu0: f64,
    pub eta1: f64,
    pub omega: f64,
}

impl ModelParams {
    /// The worked example of the experiments: eta0=1, beta0=0.8, kappa=1,
    /// nu0=0, eta1=5, omega=25.
    pub fn example() -> ModelParams {
        ModelParams { eta0: 1.0, beta0: 0.8, kappa: 1.0, nu0: 0.0, eta1: 5.0, omega: 25.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta0 > 0.0 && self.beta0 > 0.0 && self.kappa > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("eta0, beta0 and kappa must be positive".into()))
        }
    }
}

/// Element matrices for the triangle with the given corners.
/// Mass: area/12 * [[2,1,1],[1,2,1],[1,1,2]]; stiffness from the constant
/// P1 gradients.
fn element_matrices(corners: &[[f64; 2]; 3]) -> (f64, [[f64; 3]; 3], [[f64; 3]; 3]) {
    let [pa, pb, pc] = *corners;
    let j = [[pb[0] - pa[0], pc[0] - pa[0]], [pb[1] - pa[1], pc[1] - pa[1]]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let area = det.abs() / 2.0;
    let mut mass = [[0.0; 3]; 3];
    for (r, row) in mass.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = area / 12.0 * if r == c { 2.0 } else { 1.0 };
        }
    }
    // grads of reference hats [-1,-1],[1,0],[0,1] pushed through J^-T
    let inv_det = 1.0 / det;
    let jinv = [[j[1][1] * inv_det, -j[0][1] * inv_det], [-j[1][0] * inv_det, j[0][0] * inv_det]];
    let ref_grads = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut grads = [[0.0; 2]; 3];
    for (g, rg) in grads.iter_mut().zip(&ref_grads) {
        g[0] = rg[0] * jinv[0][0] + rg[1] * jinv[1][0];
        g[1] = rg[0] * jinv[0][1] + rg[1] * jinv[1][1];
    }
    let mut stiff = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            stiff[r][c] = area * (grads[r][0] * grads[c][0] + grads[r][1] * grads[c][1]);
        }
    }
    (area, mass, stiff)
}

fn gather_interior(
    mesh: &Mesh,
    elements: &[usize],
    pick: impl Fn(&[[f64; 3]; 3], &[[f64; 3]; 3]) -> [[f64; 3]; 3] + Sync,
) -> CsrMatrix {
    let n = mesh.n_interior();
    let per_element: Vec<Vec<(usize, usize, f64)>> = kernels::map_indexed(elements.len(), |k| {
        let t = elements[k];
        let corners = mesh.triangle_corners(t);
        let (_, mass, stiff) = element_matrices(&corners);
        let local = pick(&mass, &stiff);
        let tri = mesh.triangles[t];
        let mut out = Vec::with_capacity(9);
        for (li, &gi) in tri.iter().enumerate() {
            let Some(ri) = mesh.interior_index(gi) else { continue };
            for (lj, &gj) in tri.iter().enumerate() {
                if let Some(cj) = mesh.interior_index(gj) {
                    out.push((ri, cj, local[li][lj]));
                }
            }
        }
        out
    });
    let triplets: Vec<(usize, usize, f64)> = per_element.into_iter().flatten().collect();
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Interior-node P1 mass matrix G.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    gather_interior(mesh, &all, |m, _| *m)
}

/// Mass matrix over ALL vertices (no Dirichlet reduction); its entries sum
/// to the domain area.
pub fn assemble_mass_unreduced(mesh: &Mesh) -> CsrMatrix {
    let nv = mesh.vertices.len();
    let mut triplets = Vec::new();
    for t in 0..mesh.triangles.len() {
        let (_, mass, _) = element_matrices(&mesh.triangle_corners(t));
        let tri = mesh.triangles[t];
        for (li, &gi) in tri.iter().enumerate() {
            for (lj, &gj) in tri.iter().enumerate() {
                triplets.push((gi, gj, mass[li][lj]));
            }
        }
    }
    CsrMatrix::from_triplets(nv, nv, &triplets)
}

/// Interior-node P1 stiffness matrix K.
pub fn assemble_stiffness(mesh: &Mesh) -> CsrMatrix {
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    gather_interior(mesh, &all, |_, k| *k)
}

/// Mass matrix restricted to the control region's elements.
pub fn assemble_control_mass(mesh: &Mesh, region: &ControlRegion) -> Result<CsrMatrix> {
    if region.element_ids.is_empty() {
        return Err(Error::Mesh("empty control region".into()));
    }
    if region.element_ids.iter().any(|&t| t >= mesh.triangles.len()) {
        return Err(Error::Mesh("control region references a missing element".into()));
    }
    Ok(gather_interior(mesh, &region.element_ids, |m, _| *m))
}

#[derive(Debug, Clone)]
pub struct BlockSystem {
    /// Interior node count per field.
    pub n: usize,
    /// Block mass diag(G, G), 2n x 2n.
    pub m: CsrMatrix,
    /// Shifted coupled operator, 2n x 2n.
    pub a: CsrMatrix,
    /// Control injection [G_O; 0], 2n x n.
    pub b: CsrMatrix,
    pub g: CsrMatrix,
    pub k: CsrMatrix,
    pub g_o: CsrMatrix,
    pub params: ModelParams,
    /// Bandwidth-reducing block permutation used by the direct solvers.
    block_perm: Permutation,
}

pub fn assemble_block_system(
    mesh: &Mesh,
    params: &ModelParams,
    region: &ControlRegion,
) -> Result<BlockSystem> {
    params.validate()?;
    let g = assemble_mass(mesh);
    let k = assemble_stiffness(mesh);
    let g_o = assemble_control_mass(mesh, region)?;
    let n = g.nrows();

    let c_yy = params.omega - params.nu0;
    let c_zz = -params.kappa + params.omega - params.nu0;
    let mut a_tri = Vec::with_capacity(4 * g.nnz() + 2 * k.nnz());
    let mut m_tri = Vec::with_capacity(2 * g.nnz());
    for (r, c, v) in g.iter() {
        a_tri.push((r, c, c_yy * v)); // (omega-nu0) G in the y block
        a_tri.push((r, c + n, -params.eta1 * v)); // -eta1 G coupling
        a_tri.push((r + n, c, v)); // +G coupling
        a_tri.push((r + n, c + n, c_zz * v));
        m_tri.push((r, c, v));
        m_tri.push((r + n, c + n, v));
    }
    for (r, c, v) in k.iter() {
        a_tri.push((r, c, -params.eta0 * v));
        a_tri.push((r + n, c + n, -params.beta0 * v));
    }
    let a = CsrMatrix::from_triplets(2 * n, 2 * n, &a_tri);
    let m = CsrMatrix::from_triplets(2 * n, 2 * n, &m_tri);

    let b_tri: Vec<(usize, usize, f64)> = g_o.iter().collect();
    let b = CsrMatrix::from_triplets(2 * n, n, &b_tri);

    let scalar_perm = Permutation::bandwidth_minimizing(&g);
    let block_perm = scalar_perm.interleave_two_fields();
    Ok(BlockSystem { n, m, a, b, g, k, g_o, params: *params, block_perm })
}

impl BlockSystem {
    /// Assemble a system from prebuilt matrices (synthetic setups, tests).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        n: usize,
        m: CsrMatrix,
        a: CsrMatrix,
        b: CsrMatrix,
        g: CsrMatrix,
        k: CsrMatrix,
        g_o: CsrMatrix,
        params: ModelParams,
    ) -> BlockSystem {
        let scalar_perm = Permutation::bandwidth_minimizing(&g);
        let block_perm = if 2 * n == a.nrows() {
            scalar_perm.interleave_two_fields()
        } else {
            Permutation::identity(a.nrows())
        };
        BlockSystem { n, m, a, b, g, k, g_o, params, block_perm }
    }

    pub fn block_permutation(&self) -> &Permutation {
        &self.block_perm
    }

    /// Factor alpha*A + beta*M.
    pub fn factor_pencil<T>(&self, alpha: T, beta: T) -> Result<PencilFactor<T>>
    where
        T: nalgebra::ComplexField<RealField = f64> + Copy + Default,
    {
        PencilFactor::new(&self.a, &self.m, alpha, beta, &self.block_perm)
    }

    /// Factor alpha*A' + beta*M (transposed pencil, for left eigenvectors).
    pub fn factor_pencil_transposed<T>(&self, alpha: T, beta: T) -> Result<PencilFactor<T>>
    where
        T: nalgebra::ComplexField<RealField = f64> + Copy + Default,
    {
        let at = self.a.transpose();
        PencilFactor::new(&at, &self.m, alpha, beta, &self.block_perm)
    }

    /// Upper bound on the real part of the pencil's field of values:
    /// x'Sym(A)x <= (omega - nu0 + |1 - eta1|/2) x'Mx.
    pub fn field_of_values_bound(&self) -> f64 {
        self.params.omega - self.params.nu0 + 0.5 * (1.0 - self.params.eta1).abs()
    }
}

/// Load vector entries <f, phi_i> by the 3-point edge-midpoint rule
/// (degree-2 exact), restricted to interior nodes.
pub fn load_vector(mesh: &Mesh, f: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = mesh.n_interior();
    let mut load = vec![0.0; n];
    // phi values at the midpoints of edges (01), (02), (12)
    const PHI_AT_MID: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];
    for t in 0..mesh.triangles.len() {
        let corners = mesh.triangle_corners(t);
        let area = mesh.triangle_area(t);
        let mids = [
            [(corners[0][0] + corners[1][0]) / 2.0, (corners[0][1] + corners[1][1]) / 2.0],
            [(corners[0][0] + corners[2][0]) / 2.0, (corners[0][1] + corners[2][1]) / 2.0],
            [(corners[1][0] + corners[2][0]) / 2.0, (corners[1][1] + corners[2][1]) / 2.0],
        ];
        let fvals = [f(mids[0][0], mids[0][1]), f(mids[1][0], mids[1][1]), f(mids[2][0], mids[2][1])];
        let tri = mesh.triangles[t];
        for (li, &gi) in tri.iter().enumerate() {
            if let Some(ri) = mesh.interior_index(gi) {
                let s: f64 = (0..3).map(|e| PHI_AT_MID[e][li] * fvals[e]).sum();
                load[ri] += area / 3.0 * s;
            }
        }
    }
    load
}

/// L2 projection of (y0, z0) onto the interior P1 space: solves G c = load
/// per field and returns the stacked coefficient vector of length 2n.
pub fn l2_project_initial(
    mesh: &Mesh,
    y0: &dyn Fn(f64, f64) -> f64,
    z0: &dyn Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    let g = assemble_mass(mesh);
    let n = g.nrows();
    let perm = Permutation::bandwidth_minimizing(&g);
    let zero = CsrMatrix::from_triplets(n, n, &[]);
    let factor = PencilFactor::<f64>::new(&g, &zero, 1.0, 0.0, &perm)
        .map_err(|_| Error::Singular("mass matrix factorization failed".into()))?;
    let cy = factor.solve(&load_vector(mesh, y0));
    let cz = factor.solve(&load_vector(mesh, z0));
    let mut c = cy;
    c.extend_from_slice(&cz);
    Ok(c)
}
