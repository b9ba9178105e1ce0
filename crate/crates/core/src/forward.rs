//! Discrete time-harmonic boundary value problem, Neumann-to-Dirichlet
//! matrices and the Fréchet derivative of the coefficient-to-NtD map.
//!
//! With `B(u, v) = −x_vᵀ A x_u` and `A = K − ω²M`, the weak problem
//! `B(u, v) = −∫ g·v dS` becomes `A U = F`, so `(g_i, Λ g_j) = F_iᵀ U_j`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::assembly::{element_dofs, Assembler, LoadSet, MassMatrix, StiffnessMatrix, ELEMENT_DOFS};
use crate::error::{invalid, Error, Result};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::model::{BoundaryLayout, Mesh, VoxelGrid};

/// Smallest accepted reciprocal condition estimate of the reduced system.
pub const RESONANCE_RCOND: f64 = 1e-12;

/// Split of the displacement DOFs into free and clamped ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    n_full: usize,
    free: Vec<usize>,
}

impl DofMap {
    pub fn new(layout: &BoundaryLayout) -> Self {
        let clamped = layout.dirichlet_nodes();
        let free = (0..3 * clamped.len())
            .filter(|&d| !clamped[d / 3])
            .collect();
        DofMap {
            n_full: 3 * clamped.len(),
            free,
        }
    }

    pub fn n_full(&self) -> usize {
        self.n_full
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn restrict_vec(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    pub fn expand_vec(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full];
        for (&d, &v) in self.free.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }

    pub fn restrict_matrix(&self, m: &CsrMatrix) -> CsrMatrix {
        m.restrict(&self.free)
    }
}

/// `A = K − ω²M` on the free DOFs together with its LU factors.
#[derive(Debug, Clone)]
pub struct SystemFactorization {
    dofs: DofMap,
    matrix: CsrMatrix,
    lu: BandedLu,
    omega: f64,
    rcond: f64,
}

pub fn factorize_system(
    k: &StiffnessMatrix,
    m: &MassMatrix,
    omega: f64,
    layout: &BoundaryLayout,
) -> Result<SystemFactorization> {
    if !omega.is_finite() {
        return invalid(format!("omega must be finite, got {omega}"));
    }
    let dofs = DofMap::new(layout);
    if k.0.nrows() != dofs.n_full() || m.0.nrows() != dofs.n_full() {
        return invalid("matrix size does not match the boundary layout");
    }
    if !layout.has_dirichlet() && omega == 0.0 {
        return Err(Error::Singular(
            "static problem without Dirichlet boundary has rigid body modes".into(),
        ));
    }
    let full = k.0.combine(1.0, &m.0, -omega * omega)?;
    let matrix = dofs.restrict_matrix(&full);
    let lu = match BandedLu::factor(&matrix) {
        Ok(lu) => lu,
        Err(Error::Singular(_)) => return Err(Error::Resonance { omega, rcond: 0.0 }),
        Err(e) => return Err(e),
    };
    let rcond = lu.rcond();
    if !(rcond >= RESONANCE_RCOND) {
        return Err(Error::Resonance { omega, rcond });
    }
    Ok(SystemFactorization {
        dofs,
        matrix,
        lu,
        omega,
        rcond,
    })
}

impl SystemFactorization {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// The reduced system matrix `A`.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves `A U = F` for a full-length load; clamped entries of the result
    /// are zero.
    pub fn solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        if load.len() != self.dofs.n_full() {
            return invalid(format!(
                "load has length {}, expected {}",
                load.len(),
                self.dofs.n_full()
            ));
        }
        let mut x = self.dofs.restrict_vec(load);
        self.lu.solve_in_place(&mut x);
        Ok(self.dofs.expand_vec(&x))
    }

    /// `‖A U − F‖ / ‖F‖` on the free DOFs.
    pub fn relative_residual(&self, u: &[f64], load: &[f64]) -> f64 {
        let ur = self.dofs.restrict_vec(u);
        let fr = self.dofs.restrict_vec(load);
        let au = self.matrix.mul_vec(&ur);
        let num: f64 = au.iter().zip(&fr).map(|(a, f)| (a - f).powi(2)).sum();
        let den: f64 = fr.iter().map(|f| f * f).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

pub fn solve_bvp(fact: &SystemFactorization, load: &[f64]) -> Result<Vec<f64>> {
    fact.solve(load)
}

/// Displacements for every load of a load set under one material field.
#[derive(Debug, Clone)]
pub struct SolutionBank {
    pub omega: f64,
    pub solutions: Vec<Vec<f64>>,
}

impl SolutionBank {
    pub fn compute(fact: &SystemFactorization, loads: &LoadSet) -> Result<Self> {
        let solutions = loads
            .vectors
            .par_iter()
            .map(|f| fact.solve(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(SolutionBank {
            omega: fact.omega(),
            solutions,
        })
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn n_dofs(&self) -> usize {
        self.solutions.first().map_or(0, Vec::len)
    }
}

/// Matrix of the NtD map in the (orthonormal) load basis.
#[derive(Debug, Clone)]
pub struct NtdMatrix {
    pub matrix: DMatrix<f64>,
    /// `max|Λ − Λᵀ| / max|Λ|` before symmetrization.
    pub asymmetry: f64,
}

pub fn ntd_from_bank(loads: &LoadSet, bank: &SolutionBank) -> Result<NtdMatrix> {
    let m = loads.len();
    if bank.len() != m {
        return invalid(format!("bank has {} solutions for {m} loads", bank.len()));
    }
    let raw = DMatrix::from_fn(m, m, |i, j| {
        loads.vectors[i]
            .iter()
            .zip(&bank.solutions[j])
            .map(|(f, u)| f * u)
            .sum::<f64>()
    });
    let scale = raw.amax();
    let asymmetry = if scale == 0.0 {
        0.0
    } else {
        (&raw - raw.transpose()).amax() / scale
    };
    let matrix = (&raw + raw.transpose()) * 0.5;
    Ok(NtdMatrix { matrix, asymmetry })
}

pub fn ntd_matrix(fact: &SystemFactorization, loads: &LoadSet) -> Result<NtdMatrix> {
    let bank = SolutionBank::compute(fact, loads)?;
    ntd_from_bank(loads, &bank)
}

/// Gram matrices of the background solutions over one test region:
/// `strain_ij = ∫_B ∇̂u_i:∇̂u_j`, `divergence_ij = ∫_B ∇·u_i ∇·u_j`,
/// `mass_ij = ∫_B u_i·u_j`.
#[derive(Debug, Clone)]
pub struct VoxelGram {
    pub strain: DMatrix<f64>,
    pub divergence: DMatrix<f64>,
    pub mass: DMatrix<f64>,
}

impl VoxelGram {
    pub fn compute(
        bank: &SolutionBank,
        mesh: &Mesh,
        assembler: &Assembler,
        grid: &VoxelGrid,
        voxels: &[usize],
    ) -> Result<Self> {
        if bank.n_dofs() != mesh.n_dofs() {
            return invalid(format!(
                "solution bank has {} DOFs, mesh has {}",
                bank.n_dofs(),
                mesh.n_dofs()
            ));
        }
        if grid.n_elements() != mesh.n_elements() {
            return invalid("voxel grid does not belong to this mesh");
        }
        let m = bank.len();
        let unit = assembler.unit();
        let mut strain = DMatrix::zeros(m, m);
        let mut divergence = DMatrix::zeros(m, m);
        let mut mass = DMatrix::zeros(m, m);
        let mut local = DMatrix::zeros(ELEMENT_DOFS, m);
        for &v in voxels {
            if v >= grid.n_voxels() {
                return invalid(format!("voxel {v} out of range"));
            }
            for &e in grid.elements_of(v) {
                let dofs = element_dofs(mesh, e);
                for (j, u) in bank.solutions.iter().enumerate() {
                    for (r, &d) in dofs.iter().enumerate() {
                        local[(r, j)] = u[d];
                    }
                }
                strain += local.tr_mul(&(&unit.strain * &local));
                divergence += local.tr_mul(&(&unit.divergence * &local));
                mass += local.tr_mul(&(&unit.mass * &local));
            }
        }
        for g in [&mut strain, &mut divergence, &mut mass] {
            let sym = (&*g + g.transpose()) * 0.5;
            *g = sym;
        }
        Ok(VoxelGram {
            strain,
            divergence,
            mass,
        })
    }

    /// `−(2μ̂ S + λ̂ V − ω² ρ̂ W)` for constant directions `[λ̂, μ̂, ρ̂]`.
    pub fn frechet(&self, direction: [f64; 3], omega: f64) -> DMatrix<f64> {
        let [l, mu, rho] = direction;
        (&self.strain * (2.0 * mu) + &self.divergence * l - &self.mass * (omega * omega * rho)) * -1.0
    }
}

/// Matrix of `Λ′[λ̂χ_B, μ̂χ_B, ρ̂χ_B]` in the load basis.
pub fn frechet_matrix(
    bank: &SolutionBank,
    mesh: &Mesh,
    grid: &VoxelGrid,
    voxels: &[usize],
    direction: [f64; 3],
) -> Result<DMatrix<f64>> {
    let assembler = Assembler::new(mesh)?;
    let gram = VoxelGram::compute(bank, mesh, &assembler, grid, voxels)?;
    Ok(gram.frechet(direction, bank.omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_loads, LoadMode};
    use crate::model::{build_mesh, partition_boundary, Background, BoxSide, MaterialField};

    struct Setup {
        mesh: Mesh,
        layout: BoundaryLayout,
        loads: LoadSet,
        asm: Assembler,
    }

    fn setup(n: usize, patches: usize) -> Setup {
        let mesh = build_mesh([1.0; 3], [n, n, n]).unwrap();
        let layout = partition_boundary(&mesh, &[BoxSide::ZMin], [patches, patches]).unwrap();
        let loads = assemble_loads(&mesh, &layout, LoadMode::Normal);
        let asm = Assembler::new(&mesh).unwrap();
        Setup {
            mesh,
            layout,
            loads,
            asm,
        }
    }

    fn factor(s: &Setup, field: &MaterialField, omega: f64) -> Result<SystemFactorization> {
        let k = s.asm.stiffness(field).unwrap();
        let m = s.asm.mass(&field.rho).unwrap();
        factorize_system(&k, &m, omega, &s.layout)
    }

    fn unit_field(s: &Setup) -> MaterialField {
        MaterialField::uniform(s.mesh.n_elements(), Background { lambda: 1.0, mu: 1.0, rho: 1.0 })
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let s = setup(2, 1);
        let f = factor(&s, &unit_field(&s), 0.5).unwrap();
        let u = f.solve(&vec![0.0; s.mesh.n_dofs()]).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        assert!(f.solve(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn solve_is_linear_and_satisfies_weak_form() {
        let s = setup(3, 1);
        let f = factor(&s, &unit_field(&s), 0.8).unwrap();
        let (a, b) = (&s.loads.vectors[0], &s.loads.vectors[3]);
        let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        let ua = f.solve(a).unwrap();
        let ub = f.solve(b).unwrap();
        let us = f.solve(&sum).unwrap();
        let norm = us.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..us.len() {
            assert!((us[i] - ua[i] - ub[i]).abs() <= 1e-10 * norm);
        }
        assert!(f.relative_residual(&ua, a) <= 1e-8);
        for (d, &clamped) in s.layout.dirichlet_nodes().iter().enumerate() {
            if clamped {
                assert_eq!(&ua[3 * d..3 * d + 3], &[0.0; 3]);
            }
        }
    }

    #[test]
    fn matches_dense_oracle() {
        // 4³ mesh clamped at the bottom: 300 free DOFs
        let s = setup(4, 2);
        let field = MaterialField::uniform(s.mesh.n_elements(), Background { lambda: 6e5, mu: 6e3, rho: 3e3 });
        let f = factor(&s, &field, 50.0).unwrap();
        assert_eq!(f.dofs().n_free(), 300);
        let dense = f.matrix().to_dense().lu();
        for load in s.loads.vectors.iter().take(5) {
            let u = f.solve(load).unwrap();
            let rhs = nalgebra::DVector::from_vec(f.dofs().restrict_vec(load));
            let ud = dense.solve(&rhs).unwrap();
            let ur = f.dofs().restrict_vec(&u);
            let diff: f64 = ur.iter().zip(ud.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(diff <= 1e-8 * ud.norm());
        }
    }

    #[test]
    fn resonance_detected() {
        let s = setup(2, 1);
        let field = unit_field(&s);
        let k = s.asm.stiffness(&field).unwrap();
        let m = s.asm.mass(&field.rho).unwrap();
        let dofs = DofMap::new(&s.layout);
        let kr = dofs.restrict_matrix(&k.0).to_dense();
        let mr = dofs.restrict_matrix(&m.0).to_dense();
        // generalized eigenvalues via M^{-1/2} K M^{-1/2}
        let l = mr.cholesky().unwrap().l();
        let linv = l.try_inverse().unwrap();
        let c = &linv * kr * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eigs = c.symmetric_eigenvalues();
        let first = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let err = factorize_system(&k, &m, first.sqrt(), &s.layout).unwrap_err();
        assert!(matches!(err, Error::Resonance { .. }), "{err}");
        // far below the first eigenvalue the system is positive definite
        assert!(factorize_system(&k, &m, 0.1 * first.sqrt(), &s.layout).is_ok());
    }

    #[test]
    fn static_problem_without_dirichlet_is_singular() {
        let mesh = build_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let layout = partition_boundary(&mesh, &[], [1, 1]).unwrap();
        let asm = Assembler::new(&mesh).unwrap();
        let field = MaterialField::uniform(8, Background { lambda: 1.0, mu: 1.0, rho: 1.0 });
        let k = asm.stiffness(&field).unwrap();
        let m = asm.mass(&field.rho).unwrap();
        assert!(matches!(
            factorize_system(&k, &m, 0.0, &layout),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn ntd_reciprocity_and_static_positivity() {
        let s = setup(4, 2);
        let f = factor(&s, &unit_field(&s), 1e-3).unwrap();
        let ntd = ntd_matrix(&f, &s.loads).unwrap();
        assert!(ntd.asymmetry <= 1e-8, "{}", ntd.asymmetry);
        let eigs = ntd.matrix.clone().symmetric_eigenvalues();
        assert!(eigs.min() > 0.0);

        let single = LoadSet {
            mode: s.loads.mode,
            vectors: vec![s.loads.vectors[2].clone()],
            l2_norms: vec![1.0],
            loads: vec![s.loads.loads[2].clone()],
        };
        let one = ntd_matrix(&f, &single).unwrap();
        let u = f.solve(&single.vectors[0]).unwrap();
        let expect: f64 = single.vectors[0].iter().zip(&u).map(|(a, b)| a * b).sum();
        assert_eq!(one.matrix.shape(), (1, 1));
        assert_eq!(one.matrix[(0, 0)], expect);
    }

    #[test]
    fn frechet_zero_cases() {
        let s = setup(2, 1);
        let grid = crate::model::voxel_grid(&s.mesh, [2, 2, 2]).unwrap();
        let f = factor(&s, &unit_field(&s), 0.5).unwrap();
        let bank = SolutionBank::compute(&f, &s.loads).unwrap();
        let d = frechet_matrix(&bank, &s.mesh, &grid, &[3], [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.amax(), 0.0);
        let d = frechet_matrix(&bank, &s.mesh, &grid, &[], [1.0, 1.0, -1.0]).unwrap();
        assert_eq!(d.amax(), 0.0);
        let d = frechet_matrix(&bank, &s.mesh, &grid, &[3], [1.0, 2.0, -0.5]).unwrap();
        assert!((&d - d.transpose()).amax() <= 1e-12 * d.amax());

        let other = setup(3, 1);
        let err = frechet_matrix(&bank, &other.mesh, &grid, &[0], [1.0, 0.0, 0.0]);
        assert!(err.is_err());
    }
}
