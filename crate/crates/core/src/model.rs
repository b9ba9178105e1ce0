//! Computational domain, boundary decomposition, voxel test grid and
//! coefficient fields.
//!
//! The body is an axis-aligned box discretized by a structured grid of
//! trilinear hexahedra. Coefficients are piecewise constant per element.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One of the six sides of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxSide {
    XMin,
    XMax,
    YMin,
    YMax,
    /// The bottom of the body.
    ZMin,
    ZMax,
}

impl BoxSide {
    pub const ALL: [BoxSide; 6] = [
        BoxSide::XMin,
        BoxSide::XMax,
        BoxSide::YMin,
        BoxSide::YMax,
        BoxSide::ZMin,
        BoxSide::ZMax,
    ];

    /// Coordinate axis normal to this side.
    pub fn axis(self) -> usize {
        match self {
            BoxSide::XMin | BoxSide::XMax => 0,
            BoxSide::YMin | BoxSide::YMax => 1,
            BoxSide::ZMin | BoxSide::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, BoxSide::XMax | BoxSide::YMax | BoxSide::ZMax)
    }

    /// The two in-plane axes, in increasing order.
    pub fn tangent_axes(self) -> [usize; 2] {
        match self.axis() {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    pub fn outward_normal(self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis()] = if self.is_max() { 1.0 } else { -1.0 };
        n
    }
}

/// A quadrilateral element face on the boundary of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub side: BoxSide,
    pub element: usize,
    /// Corner nodes ordered counter-clockwise in the (tangent_axes) plane.
    pub nodes: [usize; 4],
    pub normal: [f64; 3],
    pub area: f64,
    /// Position of the face in the side's face grid, along the tangent axes.
    pub cell: [usize; 2],
}

/// Structured hexahedral discretization of the box `[0, extent]`.
#[derive(Debug, Clone)]
pub struct Mesh {
    extent: [f64; 3],
    resolution: [usize; 3],
    nodes: Vec<[f64; 3]>,
    elements: Vec<[usize; 8]>,
    boundary_faces: Vec<BoundaryFace>,
}

/// Local node offsets of the reference hexahedron, in the order used for
/// element connectivity: bottom face counter-clockwise, then top face.
pub const HEX_CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

pub fn build_mesh(extent: [f64; 3], resolution: [usize; 3]) -> Result<Mesh> {
    if extent.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
        return invalid(format!("mesh extent must be positive and finite, got {extent:?}"));
    }
    if resolution.iter().any(|&r| r == 0) {
        return invalid(format!("mesh resolution must be at least 1 per axis, got {resolution:?}"));
    }
    let [nx, ny, nz] = resolution;
    let h = [
        extent[0] / nx as f64,
        extent[1] / ny as f64,
        extent[2] / nz as f64,
    ];
    let node_id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                // the last layer is pinned to the extent so the box closes exactly
                let c = |idx: usize, n: usize, axis: usize| {
                    if idx == n {
                        extent[axis]
                    } else {
                        idx as f64 * h[axis]
                    }
                };
                nodes.push([c(i, nx, 0), c(j, ny, 1), c(k, nz, 2)]);
            }
        }
    }

    let mut elements = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut conn = [0; 8];
                for (slot, off) in HEX_CORNERS.iter().enumerate() {
                    conn[slot] = node_id(i + off[0], j + off[1], k + off[2]);
                }
                elements.push(conn);
            }
        }
    }

    let mut boundary_faces = Vec::with_capacity(2 * (nx * ny + ny * nz + nx * nz));
    for side in BoxSide::ALL {
        let axis = side.axis();
        let [ta, tb] = side.tangent_axes();
        let fixed = if side.is_max() { resolution[axis] } else { 0 };
        let elem_layer = if side.is_max() { resolution[axis] - 1 } else { 0 };
        for b in 0..resolution[tb] {
            for a in 0..resolution[ta] {
                let mut idx = [0usize; 3];
                idx[axis] = fixed;
                let mut corner = |da: usize, db: usize| {
                    idx[ta] = a + da;
                    idx[tb] = b + db;
                    node_id(idx[0], idx[1], idx[2])
                };
                let face_nodes = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                let mut e = [0usize; 3];
                e[axis] = elem_layer;
                e[ta] = a;
                e[tb] = b;
                boundary_faces.push(BoundaryFace {
                    side,
                    element: e[0] + nx * (e[1] + ny * e[2]),
                    nodes: face_nodes,
                    normal: side.outward_normal(),
                    area: h[ta] * h[tb],
                    cell: [a, b],
                });
            }
        }
    }

    Ok(Mesh {
        extent,
        resolution,
        nodes,
        elements,
        boundary_faces,
    })
}

impl Mesh {
    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 8]] {
        &self.elements
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Number of displacement degrees of freedom (three per node).
    pub fn n_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Edge lengths of every element. The grid is uniform, so all elements
    /// are congruent boxes.
    pub fn element_size(&self) -> [f64; 3] {
        [
            self.extent[0] / self.resolution[0] as f64,
            self.extent[1] / self.resolution[1] as f64,
            self.extent[2] / self.resolution[2] as f64,
        ]
    }

    /// Signed volume of element `e` computed from its corner coordinates.
    pub fn element_volume(&self, e: usize) -> f64 {
        let conn = &self.elements[e];
        let p0 = self.nodes[conn[0]];
        let p6 = self.nodes[conn[6]];
        (p6[0] - p0[0]) * (p6[1] - p0[1]) * (p6[2] - p0[2])
    }

    /// Element index from its grid coordinates.
    pub fn element_at(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.resolution;
        i + nx * (j + ny * k)
    }

    pub fn element_coords(&self, e: usize) -> [usize; 3] {
        let [nx, ny, _] = self.resolution;
        [e % nx, (e / nx) % ny, e / (nx * ny)]
    }

    pub fn total_boundary_area(&self) -> f64 {
        self.boundary_faces.iter().map(|f| f.area).sum()
    }

    /// Nodes lying on the closure of `side`.
    pub fn side_nodes(&self, side: BoxSide) -> Vec<usize> {
        let mut on = vec![false; self.nodes.len()];
        for f in self.boundary_faces.iter().filter(|f| f.side == side) {
            for &n in &f.nodes {
                on[n] = true;
            }
        }
        (0..on.len()).filter(|&n| on[n]).collect()
    }
}

/// A rectangular group of Neumann faces carrying one piecewise-constant
/// traction.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub side: BoxSide,
    pub faces: Vec<usize>,
    pub area: f64,
}

/// Split of the boundary into the clamped part and the Neumann patches.
#[derive(Debug, Clone)]
pub struct BoundaryLayout {
    dirichlet_sides: Vec<BoxSide>,
    face_is_dirichlet: Vec<bool>,
    face_patch: Vec<Option<usize>>,
    patches: Vec<Patch>,
    patch_grid: [usize; 2],
    dirichlet_nodes: Vec<bool>,
}

pub fn partition_boundary(
    mesh: &Mesh,
    dirichlet: &[BoxSide],
    patch_grid: [usize; 2],
) -> Result<BoundaryLayout> {
    let mut dirichlet_sides: Vec<BoxSide> = dirichlet.to_vec();
    dirichlet_sides.sort();
    dirichlet_sides.dedup();
    if dirichlet_sides.len() == BoxSide::ALL.len() {
        return invalid("the Neumann boundary must be nonempty");
    }
    if patch_grid.iter().any(|&p| p == 0) {
        return invalid(format!("patch grid must be positive, got {patch_grid:?}"));
    }

    let res = mesh.resolution();
    let mut face_is_dirichlet = vec![false; mesh.boundary_faces().len()];
    let mut face_patch = vec![None; mesh.boundary_faces().len()];
    let mut patches = Vec::new();

    for side in BoxSide::ALL {
        let [ta, tb] = side.tangent_axes();
        let (na, nb) = (res[ta], res[tb]);
        if dirichlet_sides.contains(&side) {
            for (fi, f) in mesh.boundary_faces().iter().enumerate() {
                if f.side == side {
                    face_is_dirichlet[fi] = true;
                }
            }
            continue;
        }
        let [pa, pb] = patch_grid;
        if na % pa != 0 || nb % pb != 0 {
            return invalid(format!(
                "patch grid {pa}x{pb} does not divide the {na}x{nb} face grid of side {side:?}"
            ));
        }
        let (sa, sb) = (na / pa, nb / pb);
        let first = patches.len();
        for _ in 0..pa * pb {
            patches.push(Patch {
                side,
                faces: Vec::with_capacity(sa * sb),
                area: 0.0,
            });
        }
        for (fi, f) in mesh.boundary_faces().iter().enumerate() {
            if f.side != side {
                continue;
            }
            let p = first + f.cell[0] / sa + pa * (f.cell[1] / sb);
            face_patch[fi] = Some(p);
            patches[p].faces.push(fi);
            patches[p].area += f.area;
        }
    }

    let mut dirichlet_nodes = vec![false; mesh.n_nodes()];
    for &side in &dirichlet_sides {
        for n in mesh.side_nodes(side) {
            dirichlet_nodes[n] = true;
        }
    }

    Ok(BoundaryLayout {
        dirichlet_sides,
        face_is_dirichlet,
        face_patch,
        patches,
        patch_grid,
        dirichlet_nodes,
    })
}

impl BoundaryLayout {
    pub fn dirichlet_sides(&self) -> &[BoxSide] {
        &self.dirichlet_sides
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch_grid(&self) -> [usize; 2] {
        self.patch_grid
    }

    pub fn face_is_dirichlet(&self, face: usize) -> bool {
        self.face_is_dirichlet[face]
    }

    pub fn face_patch(&self, face: usize) -> Option<usize> {
        self.face_patch[face]
    }

    /// Per-node flag: node is clamped (lies on the closure of Γ_D).
    pub fn dirichlet_nodes(&self) -> &[bool] {
        &self.dirichlet_nodes
    }

    pub fn has_dirichlet(&self) -> bool {
        !self.dirichlet_sides.is_empty()
    }
}

/// Homogeneous background coefficients (λ₀, μ₀, ρ₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

impl Background {
    pub fn new(lambda: f64, mu: f64, rho: f64) -> Result<Self> {
        let b = Background { lambda, mu, rho };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda0", self.lambda), ("mu0", self.mu), ("rho0", self.rho)] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("background {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Per-element Lamé parameters and density.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl MaterialField {
    pub fn uniform(n_elements: usize, bg: Background) -> Self {
        MaterialField {
            lambda: vec![bg.lambda; n_elements],
            mu: vec![bg.mu; n_elements],
            rho: vec![bg.rho; n_elements],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn is_positive(&self) -> bool {
        self.lambda
            .iter()
            .chain(&self.mu)
            .chain(&self.rho)
            .all(|&v| v.is_finite() && v > 0.0)
    }
}

/// Lower/upper bounds on the jump functions: ψ_λ > n₁, ψ_μ > n₂,
/// n₃ < ψ_ρ < N₃ < ρ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpBounds {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub big_n3: f64,
}

/// A voxelized inclusion with constant jumps. Stiffness jumps increase λ
/// and μ; the density jump decreases ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionSpec {
    pub voxels: Vec<usize>,
    pub jump_lambda: f64,
    pub jump_mu: f64,
    pub jump_rho: f64,
    #[serde(default)]
    pub bounds: Option<JumpBounds>,
}

impl InclusionSpec {
    /// Inclusion whose interior takes the absolute values `inside`.
    pub fn from_absolute(voxels: Vec<usize>, background: Background, inside: Background) -> Self {
        InclusionSpec {
            voxels,
            jump_lambda: inside.lambda - background.lambda,
            jump_mu: inside.mu - background.mu,
            jump_rho: background.rho - inside.rho,
            bounds: None,
        }
    }

    pub fn validate(&self, background: Background, grid: &VoxelGrid) -> Result<()> {
        if self.voxels.is_empty() {
            return invalid("inclusion region is empty");
        }
        for &v in &self.voxels {
            if v >= grid.n_voxels() {
                return invalid(format!("inclusion voxel {v} out of range"));
            }
            if grid.touches_boundary(v) {
                return invalid(format!(
                    "inclusion voxel {v} touches the boundary; inclusions must lie strictly inside the body"
                ));
            }
        }
        for (name, j) in [
            ("jump_lambda", self.jump_lambda),
            ("jump_mu", self.jump_mu),
            ("jump_rho", self.jump_rho),
        ] {
            if !(j.is_finite() && j >= 0.0) {
                return invalid(format!("{name} must be nonnegative, got {j}"));
            }
        }
        if self.jump_rho >= background.rho {
            return invalid(format!(
                "jump_rho = {} must stay below rho0 = {} so the density remains positive",
                self.jump_rho, background.rho
            ));
        }
        if let Some(b) = self.bounds {
            if self.jump_lambda > 0.0 && self.jump_lambda <= b.n1 {
                return invalid(format!(
                    "jump_lambda = {} violates the lower bound n1 = {}",
                    self.jump_lambda, b.n1
                ));
            }
            if self.jump_mu > 0.0 && self.jump_mu <= b.n2 {
                return invalid(format!(
                    "jump_mu = {} violates the lower bound n2 = {}",
                    self.jump_mu, b.n2
                ));
            }
            if self.jump_rho > 0.0 {
                if self.jump_rho <= b.n3 {
                    return invalid(format!(
                        "jump_rho = {} violates the lower bound n3 = {}",
                        self.jump_rho, b.n3
                    ));
                }
                if self.jump_rho >= b.big_n3 {
                    return invalid(format!(
                        "jump_rho = {} violates the upper bound N3 = {}",
                        self.jump_rho, b.big_n3
                    ));
                }
            }
            if b.big_n3 >= background.rho {
                return invalid(format!(
                    "upper bound N3 = {} must be below rho0 = {}",
                    b.big_n3, background.rho
                ));
            }
        }
        Ok(())
    }
}

/// Coefficients of the body with inclusions: background plus the jumps on
/// each inclusion region (overlapping jumps add).
pub fn make_material_field(
    background: Background,
    inclusions: &[InclusionSpec],
    grid: &VoxelGrid,
) -> Result<MaterialField> {
    background.validate()?;
    let mut field = MaterialField::uniform(grid.n_elements(), background);
    for inc in inclusions {
        inc.validate(background, grid)?;
        for &v in &inc.voxels {
            for &e in grid.elements_of(v) {
                field.lambda[e] += inc.jump_lambda;
                field.mu[e] += inc.jump_mu;
                field.rho[e] -= inc.jump_rho;
            }
        }
    }
    if let Some(e) = field.rho.iter().position(|&r| r <= 0.0) {
        return invalid(format!(
            "overlapping density jumps make rho nonpositive ({}) in element {e}",
            field.rho[e]
        ));
    }
    Ok(field)
}

/// Test coefficients λ♭ = λ₀ + α₁χ_B, μ♭ = μ₀ + α₂χ_B, ρ♭ = ρ₀ − α₃χ_B.
pub fn make_test_coefficients(
    background: Background,
    grid: &VoxelGrid,
    voxels: &[usize],
    alpha: [f64; 3],
) -> Result<MaterialField> {
    background.validate()?;
    if alpha.iter().any(|&a| !(a.is_finite() && a >= 0.0)) {
        return invalid(format!("test contrasts must be nonnegative, got {alpha:?}"));
    }
    if alpha[2] >= background.rho {
        return invalid(format!(
            "density contrast alpha3 = {} must be below rho0 = {}",
            alpha[2], background.rho
        ));
    }
    let mut field = MaterialField::uniform(grid.n_elements(), background);
    let mut seen = vec![false; grid.n_voxels()];
    for &v in voxels {
        if v >= grid.n_voxels() {
            return invalid(format!("voxel {v} out of range"));
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        for &e in grid.elements_of(v) {
            field.lambda[e] += alpha[0];
            field.mu[e] += alpha[1];
            field.rho[e] -= alpha[2];
        }
    }
    Ok(field)
}

/// Coarse grid of test regions B. Each voxel is a block of elements.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    resolution: [usize; 3],
    voxel_to_elements: Vec<Vec<usize>>,
    element_to_voxel: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
}

pub fn voxel_grid(mesh: &Mesh, resolution: [usize; 3]) -> Result<VoxelGrid> {
    let mres = mesh.resolution();
    for axis in 0..3 {
        if resolution[axis] == 0 || mres[axis] % resolution[axis] != 0 {
            return invalid(format!(
                "voxel resolution {resolution:?} must divide the mesh resolution {mres:?}"
            ));
        }
    }
    let ratio = [
        mres[0] / resolution[0],
        mres[1] / resolution[1],
        mres[2] / resolution[2],
    ];
    let [rx, ry, rz] = resolution;
    let n_vox = rx * ry * rz;
    let mut voxel_to_elements = vec![Vec::with_capacity(ratio[0] * ratio[1] * ratio[2]); n_vox];
    let mut element_to_voxel = vec![0; mesh.n_elements()];
    for e in 0..mesh.n_elements() {
        let [i, j, k] = mesh.element_coords(e);
        let v = i / ratio[0] + rx * (j / ratio[1] + ry * (k / ratio[2]));
        voxel_to_elements[v].push(e);
        element_to_voxel[e] = v;
    }

    let boundary = n_vox;
    let mut adjacency = vec![Vec::new(); n_vox + 1];
    for v in 0..n_vox {
        let c = [v % rx, (v / rx) % ry, v / (rx * ry)];
        let mut on_boundary = false;
        for axis in 0..3 {
            if c[axis] == 0 || c[axis] + 1 == resolution[axis] {
                on_boundary = true;
            }
            if c[axis] + 1 < resolution[axis] {
                let mut d = c;
                d[axis] += 1;
                let w = d[0] + rx * (d[1] + ry * d[2]);
                adjacency[v].push(w);
                adjacency[w].push(v);
            }
        }
        if on_boundary {
            adjacency[v].push(boundary);
            adjacency[boundary].push(v);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }

    Ok(VoxelGrid {
        resolution,
        voxel_to_elements,
        element_to_voxel,
        adjacency,
    })
}

impl VoxelGrid {
    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn n_voxels(&self) -> usize {
        self.voxel_to_elements.len()
    }

    pub fn n_elements(&self) -> usize {
        self.element_to_voxel.len()
    }

    pub fn elements_of(&self, voxel: usize) -> &[usize] {
        &self.voxel_to_elements[voxel]
    }

    pub fn voxel_of(&self, element: usize) -> usize {
        self.element_to_voxel[element]
    }

    /// Id of the virtual node standing for ∂Ω in the adjacency graph.
    pub fn boundary_node(&self) -> usize {
        self.n_voxels()
    }

    /// Face neighbours of `node`; voxels on the surface also list the
    /// boundary node, and the boundary node lists every surface voxel.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn touches_boundary(&self, voxel: usize) -> bool {
        self.adjacency[voxel].last() == Some(&self.boundary_node())
    }

    pub fn voxel_id(&self, c: [usize; 3]) -> usize {
        let [rx, ry, _] = self.resolution;
        c[0] + rx * (c[1] + ry * c[2])
    }

    pub fn voxel_coords(&self, v: usize) -> [usize; 3] {
        let [rx, ry, _] = self.resolution;
        [v % rx, (v / rx) % ry, v / (rx * ry)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_background() -> Background {
        Background::new(6e5, 6e3, 3e3).unwrap()
    }

    #[test]
    fn single_element_mesh() {
        let m = build_mesh([1.0; 3], [1, 1, 1]).unwrap();
        assert_eq!(m.n_nodes(), 8);
        assert_eq!(m.n_elements(), 1);
        assert_eq!(m.boundary_faces().len(), 6);
        assert_eq!(m.element_volume(0), 1.0);
    }

    #[test]
    fn counting_identities() {
        for n in 1..6 {
            let m = build_mesh([1.0; 3], [n, n, n]).unwrap();
            assert_eq!(m.n_nodes(), (n + 1).pow(3));
            assert_eq!(m.n_elements(), n.pow(3));
            assert_eq!(m.boundary_faces().len(), 6 * n * n);
            for e in 0..m.n_elements() {
                assert!(m.element_volume(e) > 0.0);
                assert!(m.elements()[e].iter().all(|&i| i < m.n_nodes()));
            }
        }
    }

    #[test]
    fn boundary_area_matches_box() {
        let m = build_mesh([1.0; 3], [10, 10, 10]).unwrap();
        assert!((m.total_boundary_area() - 6.0).abs() <= 6.0 * 1e-12);
        let m = build_mesh([2.0, 0.5, 1.5], [4, 3, 5]).unwrap();
        let exact = 2.0 * (2.0 * 0.5 + 0.5 * 1.5 + 2.0 * 1.5);
        assert!((m.total_boundary_area() - exact).abs() <= exact * 1e-12);
    }

    #[test]
    fn faces_cover_each_side_once() {
        let m = build_mesh([1.0; 3], [3, 2, 4]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for f in m.boundary_faces() {
            let mut key = f.nodes;
            key.sort_unstable();
            assert!(seen.insert(key), "face listed twice");
            // every corner lies on the face's side plane
            for &n in &f.nodes {
                let x = m.nodes()[n][f.side.axis()];
                let plane = if f.side.is_max() { m.extent()[f.side.axis()] } else { 0.0 };
                assert_eq!(x, plane);
            }
        }
    }

    #[test]
    fn rejects_bad_mesh_arguments() {
        assert!(build_mesh([0.0, 1.0, 1.0], [1, 1, 1]).is_err());
        assert!(build_mesh([1.0, -1.0, 1.0], [1, 1, 1]).is_err());
        assert!(build_mesh([1.0; 3], [1, 0, 1]).is_err());
    }

    #[test]
    fn patch_counts() {
        let m = build_mesh([1.0; 3], [10, 10, 10]).unwrap();
        let l = partition_boundary(&m, &[BoxSide::ZMin], [10, 10]).unwrap();
        assert_eq!(l.n_patches(), 500);

        let m = build_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let l = partition_boundary(&m, &[BoxSide::ZMin], [1, 1]).unwrap();
        assert_eq!(l.n_patches(), 5);

        let m = build_mesh([1.0; 3], [4, 4, 4]).unwrap();
        let l = partition_boundary(&m, &[BoxSide::ZMin], [2, 2]).unwrap();
        assert_eq!(l.n_patches(), 20);
        assert!(l.patches().iter().all(|p| p.faces.len() == 4));
        assert!(l.patches().iter().all(|p| (p.area - 0.25).abs() < 1e-15));
    }

    #[test]
    fn every_neumann_face_in_one_patch() {
        let m = build_mesh([1.0; 3], [4, 4, 4]).unwrap();
        let l = partition_boundary(&m, &[BoxSide::ZMin], [2, 2]).unwrap();
        let mut count = vec![0; m.boundary_faces().len()];
        for p in l.patches() {
            for &f in &p.faces {
                count[f] += 1;
            }
        }
        for (fi, f) in m.boundary_faces().iter().enumerate() {
            if f.side == BoxSide::ZMin {
                assert!(l.face_is_dirichlet(fi));
                assert_eq!(count[fi], 0);
            } else {
                assert!(!l.face_is_dirichlet(fi));
                assert_eq!(count[fi], 1);
                assert!(l.face_patch(fi).is_some());
            }
        }
        let clamped = l.dirichlet_nodes().iter().filter(|&&d| d).count();
        assert_eq!(clamped, 25);
    }

    #[test]
    fn patch_grid_must_divide() {
        let m = build_mesh([1.0; 3], [5, 5, 5]).unwrap();
        assert!(partition_boundary(&m, &[BoxSide::ZMin], [2, 2]).is_err());
        assert!(partition_boundary(&m, &BoxSide::ALL, [1, 1]).is_err());
    }

    #[test]
    fn voxel_grids() {
        let m = build_mesh([1.0; 3], [10, 10, 10]).unwrap();
        let g = voxel_grid(&m, [5, 5, 5]).unwrap();
        assert_eq!(g.n_voxels(), 125);
        assert!((0..125).all(|v| g.elements_of(v).len() == 8));
        let g = voxel_grid(&m, [10, 10, 10]).unwrap();
        assert_eq!(g.n_voxels(), 1000);
        assert!((0..1000).all(|v| g.elements_of(v).len() == 1));
        let m2 = build_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let g = voxel_grid(&m2, [1, 1, 1]).unwrap();
        assert_eq!(g.elements_of(0).len(), 8);
        assert!(voxel_grid(&m, [3, 5, 5]).is_err());
    }

    #[test]
    fn voxel_partition_and_adjacency() {
        let m = build_mesh([1.0; 3], [6, 6, 6]).unwrap();
        let g = voxel_grid(&m, [3, 3, 3]).unwrap();
        let mut hits = vec![0; m.n_elements()];
        for v in 0..g.n_voxels() {
            for &e in g.elements_of(v) {
                hits[e] += 1;
                assert_eq!(g.voxel_of(e), v);
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
        for a in 0..=g.n_voxels() {
            for &b in g.neighbors(a) {
                assert!(g.neighbors(b).contains(&a));
            }
        }
        let centre = g.voxel_id([1, 1, 1]);
        assert!(!g.touches_boundary(centre));
        assert_eq!(g.neighbors(centre).len(), 6);
        assert_eq!(g.neighbors(g.boundary_node()).len(), 26);
    }

    #[test]
    fn table1_fields() {
        let m = build_mesh([1.0; 3], [5, 5, 5]).unwrap();
        let g = voxel_grid(&m, [5, 5, 5]).unwrap();
        let bg = table1_background();
        let f = make_material_field(bg, &[], &g).unwrap();
        assert!(f.lambda.iter().all(|&v| v == 6e5));
        assert!(f.mu.iter().all(|&v| v == 6e3));
        assert!(f.rho.iter().all(|&v| v == 3e3));

        let v = g.voxel_id([2, 2, 2]);
        let inside = Background::new(2e6, 2e4, 1e3).unwrap();
        let inc = InclusionSpec::from_absolute(vec![v], bg, inside);
        let f = make_material_field(bg, &[inc], &g).unwrap();
        let e = g.elements_of(v)[0];
        assert_eq!(f.lambda[e], 2e6);
        assert_eq!(f.mu[e], 2e4);
        assert_eq!(f.rho[e], 1e3);
        for other in (0..m.n_elements()).filter(|&o| o != e) {
            assert_eq!(f.lambda[other], 6e5);
            assert_eq!(f.mu[other], 6e3);
            assert_eq!(f.rho[other], 3e3);
        }
    }

    #[test]
    fn inclusion_validation_names_bounds() {
        let m = build_mesh([1.0; 3], [5, 5, 5]).unwrap();
        let g = voxel_grid(&m, [5, 5, 5]).unwrap();
        let bg = table1_background();
        let v = g.voxel_id([2, 2, 2]);
        let mut inc = InclusionSpec {
            voxels: vec![v],
            jump_lambda: 1.0,
            jump_mu: 1.0,
            jump_rho: 3e3,
            bounds: None,
        };
        let err = make_material_field(bg, &[inc.clone()], &g).unwrap_err().to_string();
        assert!(err.contains("rho0"), "{err}");

        inc.jump_rho = 100.0;
        inc.bounds = Some(JumpBounds { n1: 10.0, n2: 0.5, n3: 1.0, big_n3: 2e3 });
        let err = make_material_field(bg, &[inc.clone()], &g).unwrap_err().to_string();
        assert!(err.contains("n1"), "{err}");

        inc.bounds = Some(JumpBounds { n1: 0.5, n2: 0.5, n3: 1.0, big_n3: 50.0 });
        let err = make_material_field(bg, &[inc.clone()], &g).unwrap_err().to_string();
        assert!(err.contains("N3"), "{err}");

        inc.voxels = vec![0];
        inc.bounds = None;
        assert!(make_material_field(bg, &[inc], &g).is_err());
    }

    #[test]
    fn test_coefficients() {
        let m = build_mesh([1.0; 3], [4, 4, 4]).unwrap();
        let g = voxel_grid(&m, [2, 2, 2]).unwrap();
        let bg = table1_background();
        let f = make_test_coefficients(bg, &g, &[], [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f, MaterialField::uniform(m.n_elements(), bg));

        let f = make_test_coefficients(bg, &g, &[3], [1.4e6, 1.4e4, 2e3]).unwrap();
        for e in 0..m.n_elements() {
            if g.voxel_of(e) == 3 {
                assert_eq!((f.lambda[e], f.mu[e], f.rho[e]), (2e6, 2e4, 1e3));
            } else {
                assert_eq!((f.lambda[e], f.mu[e], f.rho[e]), (6e5, 6e3, 3e3));
            }
        }

        let unit = Background::new(1.0, 1.0, 1.0).unwrap();
        let all: Vec<usize> = (0..g.n_voxels()).collect();
        let f = make_test_coefficients(unit, &g, &all, [1.0, 1.0, 0.5]).unwrap();
        assert!(f.lambda.iter().all(|&v| v == 2.0));
        assert!(f.mu.iter().all(|&v| v == 2.0));
        assert!(f.rho.iter().all(|&v| v == 0.5));

        assert!(make_test_coefficients(bg, &g, &[0], [0.0, 0.0, 3e3]).is_err());
    }
}
