//! Finite element matrices for the bilinear form
//! `∫ 2μ ∇̂u:∇̂v + λ ∇·u ∇·v − ω²ρ u·v dx` and boundary load vectors.
//!
//! Displacements use trilinear vector elements with node-major DOF ordering
//! `3·node + component`. Element integrals use 2×2×2 Gauss quadrature, which
//! is exact for these elements with piecewise-constant coefficients.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::CsrMatrix;
use crate::model::{BoundaryLayout, MaterialField, Mesh, HEX_CORNERS};

pub const ELEMENT_DOFS: usize = 24;
const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Unit-coefficient element matrices of one hexahedron.
///
/// * `strain[(ai, bj)] = ∫ ∇̂φ_ai : ∇̂φ_bj`
/// * `divergence[(ai, bj)] = ∫ ∇·φ_ai ∇·φ_bj`
/// * `mass[(ai, bj)] = ∫ φ_ai · φ_bj`
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub strain: DMatrix<f64>,
    pub divergence: DMatrix<f64>,
    pub mass: DMatrix<f64>,
}

fn reference_shape(xi: [f64; 3]) -> ([f64; 8], [[f64; 3]; 8]) {
    let mut n = [0.0; 8];
    let mut dn = [[0.0; 3]; 8];
    for (a, c) in HEX_CORNERS.iter().enumerate() {
        let s = c.map(|v| if v == 0 { -1.0 } else { 1.0 });
        let f = [
            1.0 + s[0] * xi[0],
            1.0 + s[1] * xi[1],
            1.0 + s[2] * xi[2],
        ];
        n[a] = 0.125 * f[0] * f[1] * f[2];
        dn[a] = [
            0.125 * s[0] * f[1] * f[2],
            0.125 * f[0] * s[1] * f[2],
            0.125 * f[0] * f[1] * s[2],
        ];
    }
    (n, dn)
}

impl ElementMatrices {
    /// Integrates the unit matrices for the hexahedron with the given corner
    /// coordinates (ordered as [`HEX_CORNERS`]).
    pub fn new(corners: &[[f64; 3]; 8]) -> Result<Self> {
        let mut strain = DMatrix::zeros(ELEMENT_DOFS, ELEMENT_DOFS);
        let mut divergence = DMatrix::zeros(ELEMENT_DOFS, ELEMENT_DOFS);
        let mut mass = DMatrix::zeros(ELEMENT_DOFS, ELEMENT_DOFS);
        for gx in [-GAUSS, GAUSS] {
            for gy in [-GAUSS, GAUSS] {
                for gz in [-GAUSS, GAUSS] {
                    let (n, dn) = reference_shape([gx, gy, gz]);
                    let mut jac = Matrix3::zeros();
                    for a in 0..8 {
                        let d = Vector3::from(dn[a]);
                        let x = Vector3::from(corners[a]);
                        jac += d * x.transpose();
                    }
                    let det = jac.determinant();
                    if !(det > 0.0) {
                        return invalid(format!("element with nonpositive Jacobian {det}"));
                    }
                    let inv = jac.try_inverse().expect("nonsingular Jacobian");
                    let grads: Vec<Vector3<f64>> =
                        dn.iter().map(|d| inv * Vector3::from(*d)).collect();
                    for a in 0..8 {
                        for b in 0..8 {
                            let gab = grads[a].dot(&grads[b]);
                            let nab = n[a] * n[b];
                            for i in 0..3 {
                                for j in 0..3 {
                                    let r = 3 * a + i;
                                    let c = 3 * b + j;
                                    let delta = if i == j { 1.0 } else { 0.0 };
                                    strain[(r, c)] +=
                                        det * 0.5 * (delta * gab + grads[a][j] * grads[b][i]);
                                    divergence[(r, c)] += det * grads[a][i] * grads[b][j];
                                    mass[(r, c)] += det * delta * nab;
                                }
                            }
                        }
                    }
                }
            }
        }
        for m in [&mut strain, &mut divergence, &mut mass] {
            for r in 0..ELEMENT_DOFS {
                for c in 0..r {
                    m[(r, c)] = m[(c, r)];
                }
            }
        }
        Ok(ElementMatrices {
            strain,
            divergence,
            mass,
        })
    }

    /// Element stiffness `2μ·strain + λ·divergence`.
    pub fn stiffness(&self, lambda: f64, mu: f64) -> DMatrix<f64> {
        &self.strain * (2.0 * mu) + &self.divergence * lambda
    }
}

/// Local-to-global DOF indices of element `e`.
pub fn element_dofs(mesh: &Mesh, e: usize) -> [usize; ELEMENT_DOFS] {
    let conn = mesh.elements()[e];
    let mut d = [0; ELEMENT_DOFS];
    for a in 0..8 {
        for i in 0..3 {
            d[3 * a + i] = 3 * conn[a] + i;
        }
    }
    d
}

/// Sparsity pattern and element scatter table for one mesh.
#[derive(Debug, Clone)]
pub struct Assembler {
    pattern: CsrMatrix,
    scatter: Vec<Vec<usize>>,
    unit: ElementMatrices,
}

impl Assembler {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let n_dofs = mesh.n_dofs();
        let mut node_adj: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_nodes()];
        for conn in mesh.elements() {
            for &a in conn {
                node_adj[a].extend_from_slice(conn);
            }
        }
        let mut rows = Vec::with_capacity(n_dofs);
        for adj in &mut node_adj {
            adj.sort_unstable();
            adj.dedup();
            let cols: Vec<usize> = adj.iter().flat_map(|&b| [3 * b, 3 * b + 1, 3 * b + 2]).collect();
            for _ in 0..3 {
                rows.push(cols.clone());
            }
        }
        let pattern = CsrMatrix::from_pattern(n_dofs, rows);
        let scatter = (0..mesh.n_elements())
            .map(|e| {
                let d = element_dofs(mesh, e);
                let mut pos = Vec::with_capacity(ELEMENT_DOFS * ELEMENT_DOFS);
                for &r in &d {
                    for &c in &d {
                        pos.push(pattern.position(r, c).expect("element entry in pattern"));
                    }
                }
                pos
            })
            .collect();

        let conn = mesh.elements()[0];
        let corners = conn.map(|n| mesh.nodes()[n]);
        let unit = ElementMatrices::new(&corners)?;
        Ok(Assembler {
            pattern,
            scatter,
            unit,
        })
    }

    /// Unit element matrices; all elements of the structured mesh are
    /// congruent, so one set serves every element.
    pub fn unit(&self) -> &ElementMatrices {
        &self.unit
    }

    fn assemble(&self, coeff: impl Fn(usize) -> DMatrix<f64> + Sync) -> CsrMatrix {
        let n_el = self.scatter.len();
        // element matrices in parallel, summation in element order
        let locals: Vec<DMatrix<f64>> = (0..n_el).into_par_iter().map(&coeff).collect();
        let mut m = self.pattern.clone();
        for (e, local) in locals.iter().enumerate() {
            let pos = &self.scatter[e];
            for r in 0..ELEMENT_DOFS {
                for c in 0..ELEMENT_DOFS {
                    m.add_at(pos[r * ELEMENT_DOFS + c], local[(r, c)]);
                }
            }
        }
        m
    }

    pub fn stiffness(&self, field: &MaterialField) -> Result<StiffnessMatrix> {
        if field.len() != self.scatter.len() {
            return invalid(format!(
                "field has {} elements, mesh has {}",
                field.len(),
                self.scatter.len()
            ));
        }
        Ok(StiffnessMatrix(self.assemble(|e| {
            self.unit.stiffness(field.lambda[e], field.mu[e])
        })))
    }

    pub fn mass(&self, rho: &[f64]) -> Result<MassMatrix> {
        if rho.len() != self.scatter.len() {
            return invalid(format!(
                "density has {} elements, mesh has {}",
                rho.len(),
                self.scatter.len()
            ));
        }
        if rho.iter().any(|&r| !(r > 0.0)) {
            return invalid("density must be positive");
        }
        Ok(MassMatrix(self.assemble(|e| &self.unit.mass * rho[e])))
    }
}

/// Global stiffness matrix over all displacement DOFs.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix(pub CsrMatrix);

/// Global mass matrix over all displacement DOFs.
#[derive(Debug, Clone)]
pub struct MassMatrix(pub CsrMatrix);

pub fn assemble_stiffness(mesh: &Mesh, field: &MaterialField) -> Result<StiffnessMatrix> {
    Assembler::new(mesh)?.stiffness(field)
}

pub fn assemble_mass(mesh: &Mesh, rho: &[f64]) -> Result<MassMatrix> {
    Assembler::new(mesh)?.mass(rho)
}

/// Which traction directions are applied on each patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    /// One load per patch along the outward normal.
    #[default]
    Normal,
    /// Normal plus the two in-plane coordinate directions.
    NormalTangential,
}

impl LoadMode {
    pub fn loads_per_patch(self) -> usize {
        match self {
            LoadMode::Normal => 1,
            LoadMode::NormalTangential => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadInfo {
    pub patch: usize,
    /// Unit direction of the traction.
    pub direction: [f64; 3],
    /// Constant traction magnitude on the patch.
    pub magnitude: f64,
}

/// Discrete right-hand sides `F_i = ∫_{Γ_N} g_i · φ dS` for piecewise
/// constant tractions, each normalized to unit L²(Γ_N) norm.
#[derive(Debug, Clone)]
pub struct LoadSet {
    pub mode: LoadMode,
    pub vectors: Vec<Vec<f64>>,
    pub l2_norms: Vec<f64>,
    pub loads: Vec<LoadInfo>,
}

impl LoadSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// L²(Γ_N) inner product of tractions `i` and `j`.
    pub fn traction_inner(&self, layout: &BoundaryLayout, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.loads[i], &self.loads[j]);
        if a.patch != b.patch {
            return 0.0;
        }
        let dot: f64 = (0..3).map(|k| a.direction[k] * b.direction[k]).sum();
        dot * a.magnitude * b.magnitude * layout.patches()[a.patch].area
    }
}

pub fn assemble_loads(mesh: &Mesh, layout: &BoundaryLayout, mode: LoadMode) -> LoadSet {
    let n_dofs = mesh.n_dofs();
    let mut vectors = Vec::new();
    let mut loads = Vec::new();
    let mut l2_norms = Vec::new();
    for (p, patch) in layout.patches().iter().enumerate() {
        let normal = patch.side.outward_normal();
        let mut dirs = vec![normal];
        if mode == LoadMode::NormalTangential {
            for axis in patch.side.tangent_axes() {
                let mut t = [0.0; 3];
                t[axis] = 1.0;
                dirs.push(t);
            }
        }
        let magnitude = 1.0 / patch.area.sqrt();
        for dir in dirs {
            let mut f = vec![0.0; n_dofs];
            let mut norm_sq = 0.0;
            for &fi in &patch.faces {
                let face = &mesh.boundary_faces()[fi];
                let weights = face_shape_integrals(mesh, &face.nodes);
                for (a, &node) in face.nodes.iter().enumerate() {
                    for k in 0..3 {
                        f[3 * node + k] += magnitude * dir[k] * weights[a];
                    }
                }
                norm_sq += magnitude * magnitude * face.area;
            }
            vectors.push(f);
            l2_norms.push(norm_sq.sqrt());
            loads.push(LoadInfo {
                patch: p,
                direction: dir,
                magnitude,
            });
        }
    }
    LoadSet {
        mode,
        vectors,
        l2_norms,
        loads,
    }
}

/// `∫_face N_a dS` for the four bilinear corner functions, 2×2 Gauss.
fn face_shape_integrals(mesh: &Mesh, nodes: &[usize; 4]) -> [f64; 4] {
    let x: Vec<Vector3<f64>> = nodes.iter().map(|&n| Vector3::from(mesh.nodes()[n])).collect();
    let sign = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let mut w = [0.0; 4];
    for s in [-GAUSS, GAUSS] {
        for t in [-GAUSS, GAUSS] {
            let mut ds = Vector3::zeros();
            let mut dt = Vector3::zeros();
            let mut n = [0.0; 4];
            for a in 0..4 {
                let (sa, ta) = (sign[a][0], sign[a][1]);
                n[a] = 0.25 * (1.0 + sa * s) * (1.0 + ta * t);
                ds += x[a] * (0.25 * sa * (1.0 + ta * t));
                dt += x[a] * (0.25 * ta * (1.0 + sa * s));
            }
            let jac = ds.cross(&dt).norm();
            for a in 0..4 {
                w[a] += n[a] * jac;
            }
        }
    }
    w
}
