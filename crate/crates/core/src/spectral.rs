//! Symmetric eigenvalues, threshold counts and the count of positive
//! eigenvalues of the mixed Neumann/Dirichlet problem
//! `∇·(ℂ∇̂φ) + ω²ρφ = σφ`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, MassMatrix, StiffnessMatrix};
use crate::error::{invalid, Error, Result};
use crate::forward::DofMap;
use crate::linalg::BandedLdlt;
use crate::model::{build_mesh, partition_boundary, Background, BoundaryLayout, BoxSide, MaterialField};

/// Full spectrum of a symmetric matrix in ascending order.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first, which leaves exactly
/// symmetric matrices untouched.
pub fn eig_sym(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !a.is_square() {
        return invalid(format!("matrix must be square, got {:?}", a.shape()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let sym = (a + a.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

/// Number of eigenvalues of the symmetric matrix `a` strictly below `x`.
///
/// Uses the inertia of a pivoted LBLᵀ (Bunch-Kaufman) factorization of
/// `a − xI`, which costs a fraction of a full eigenvalue solve. Only the
/// lower triangle is read.
pub fn count_eigenvalues_below(a: &DMatrix<f64>, x: f64) -> Result<usize> {
    use faer::diag::Diag;
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::cholesky::lblt::factor::{cholesky_in_place, cholesky_in_place_scratch};
    use faer::{Mat, Par};

    if !a.is_square() {
        return invalid(format!("matrix must be square, got {:?}", a.shape()));
    }
    if a.iter().any(|v| !v.is_finite()) || !x.is_finite() {
        return invalid("matrix or shift has non-finite entries");
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(0);
    }
    let mut lb = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)] - if i == j { x } else { 0.0 });
    let mut subdiag = Diag::<f64>::zeros(n);
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut mem = MemBuffer::new(cholesky_in_place_scratch::<usize, f64>(n, Par::Seq, Default::default()));
    cholesky_in_place(
        lb.as_mut(),
        subdiag.as_mut(),
        &mut perm,
        &mut perm_inv,
        Par::Seq,
        MemStack::new(&mut mem),
        Default::default(),
    );
    let (d, s) = (lb.diagonal(), subdiag.as_ref());
    let mut negative = 0;
    let mut i = 0;
    while i < n {
        if i + 1 < n && s[i] != 0.0 {
            // 2×2 pivot block [[d_i, s_i], [s_i, d_i+1]]
            let mean = 0.5 * (d[i] + d[i + 1]);
            let radius = (0.5 * (d[i] - d[i + 1])).hypot(s[i]);
            negative += usize::from(mean - radius < 0.0) + usize::from(mean + radius < 0.0);
            i += 2;
        } else {
            negative += usize::from(d[i] < 0.0);
            i += 1;
        }
    }
    Ok(negative)
}

/// Number of entries strictly below `threshold` in an ascending list.
pub fn count_below(sorted: &[f64], threshold: f64) -> usize {
    sorted.partition_point(|&s| s < threshold)
}

/// Sorted spectrum of a test matrix together with its threshold count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub label: String,
    pub eigenvalues: Vec<f64>,
    pub threshold: f64,
    pub count_below: usize,
}

impl EigenReport {
    pub fn new(label: impl Into<String>, a: &DMatrix<f64>, threshold: f64) -> Result<Self> {
        let eigenvalues = eig_sym(a)?;
        let count_below = count_below(&eigenvalues, threshold);
        Ok(EigenReport {
            label: label.into(),
            eigenvalues,
            threshold,
            count_below,
        })
    }

    pub fn is_consistent(&self) -> bool {
        self.eigenvalues.windows(2).all(|w| w[0] <= w[1])
            && count_below(&self.eigenvalues, self.threshold) == self.count_below
    }

    /// CSV with a comment header carrying the threshold and the count, then
    /// one row per eigenvalue.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# matrix: {}", self.label);
        let _ = writeln!(out, "# threshold: {:e}", self.threshold);
        let _ = writeln!(out, "# count_below: {}", self.count_below);
        out.push_str("index,eigenvalue\n");
        for (i, s) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{i},{s:e}");
        }
        out
    }
}

/// Number of positive eigenvalues σ of
/// `(−K + ω²M_ρ) x = σ M_unit x` on the Dirichlet-reduced DOFs.
///
/// `M_unit` is positive definite, so by Sylvester's law of inertia the count
/// equals the number of negative pivots of an LDLᵀ factorization of
/// `K − ω²M_ρ`.
pub fn positive_mode_count(
    k: &StiffnessMatrix,
    m_rho: &MassMatrix,
    m_unit: &MassMatrix,
    omega: f64,
    layout: &BoundaryLayout,
) -> Result<usize> {
    let dofs = DofMap::new(layout);
    let unit = dofs.restrict_matrix(&m_unit.0);
    match BandedLdlt::factor(&unit) {
        Ok(f) if f.inertia().1 == 0 => {}
        _ => return Err(Error::Internal("unit mass matrix is not positive definite".into())),
    }
    let a = dofs.restrict_matrix(&k.0.combine(1.0, &m_rho.0, -omega * omega)?);
    let f = BandedLdlt::factor(&a).map_err(|_| Error::Resonance { omega, rcond: 0.0 })?;
    Ok(f.inertia().1)
}

/// Positive-mode count for a homogeneous background on a mesh and on its
/// once-refined version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCount {
    pub count: usize,
    pub refined_count: usize,
    pub converged: bool,
}

pub fn background_mode_count(
    background: Background,
    extent: [f64; 3],
    resolution: [usize; 3],
    dirichlet: &[BoxSide],
    omega: f64,
    refine: bool,
) -> Result<ModeCount> {
    let count_on = |res: [usize; 3]| -> Result<usize> {
        let mesh = build_mesh(extent, res)?;
        let layout = partition_boundary(&mesh, dirichlet, [1, 1])?;
        let asm = Assembler::new(&mesh)?;
        let field = MaterialField::uniform(mesh.n_elements(), background);
        let k = asm.stiffness(&field)?;
        let m = asm.mass(&field.rho)?;
        let unit = asm.mass(&vec![1.0; mesh.n_elements()])?;
        positive_mode_count(&k, &m, &unit, omega, &layout)
    };
    let count = count_on(resolution)?;
    let refined_count = if refine {
        count_on(resolution.map(|r| 2 * r))?
    } else {
        count
    };
    Ok(ModeCount {
        count,
        refined_count,
        converged: count == refined_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inertia_with_two_by_two_pivots() {
        // zero diagonal forces 2×2 pivots; spectrum is {−3, −1, 1, 3}
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 3.0, //
            0.0, 0.0, 3.0, 0.0,
        ]);
        let counts: Vec<usize> = [-4.0, -2.0, 0.0, 2.0, 4.0]
            .iter()
            .map(|&x| count_eigenvalues_below(&a, x).unwrap())
            .collect();
        assert_eq!(counts, vec![0, 1, 2, 3, 4]);
        assert_eq!(count_eigenvalues_below(&DMatrix::zeros(0, 0), 1.0).unwrap(), 0);
        assert!(count_eigenvalues_below(&DMatrix::zeros(2, 3), 0.0).is_err());
    }

    #[test]
    fn diagonal_and_zero() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(eig_sym(&a).unwrap(), vec![-1.0, 2.0, 3.0]);
        assert_eq!(eig_sym(&DMatrix::zeros(4, 4)).unwrap(), vec![0.0; 4]);
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(eig_sym(&bad).is_err());
    }

    #[test]
    fn counts_are_strict() {
        assert_eq!(count_below(&[-3.0, -1.0, 0.5], -2.0), 1);
        assert_eq!(count_below(&[-3.0, -1.0, 0.5], 0.0), 2);
        let delta = 1e-3;
        assert_eq!(count_below(&[-delta - 1e-15, -delta], -delta), 1);
    }

    #[test]
    fn report_csv() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0]));
        let r = EigenReport::new("diag", &a, 0.0).unwrap();
        assert!(r.is_consistent());
        assert_eq!(r.count_below, 1);
        let csv = r.to_csv();
        assert!(csv.contains("# count_below: 1"));
        assert!(csv.contains("0,-2e0"));
    }

    #[test]
    fn static_case_has_no_positive_modes() {
        let bg = Background { lambda: 6e5, mu: 6e3, rho: 3e3 };
        let mc = background_mode_count(bg, [1.0; 3], [3, 3, 3], &[BoxSide::ZMin], 0.0, false).unwrap();
        assert_eq!(mc.count, 0);
    }

    #[test]
    fn matches_generalized_eigen_oracle() {
        // 4³ mesh clamped at the bottom has 300 free DOFs
        let mesh = build_mesh([1.0; 3], [4, 4, 4]).unwrap();
        let layout = partition_boundary(&mesh, &[BoxSide::ZMin], [1, 1]).unwrap();
        let asm = Assembler::new(&mesh).unwrap();
        let mut field = MaterialField::uniform(mesh.n_elements(), Background { lambda: 6e5, mu: 6e3, rho: 3e3 });
        field.rho[21] = 1e3;
        field.lambda[42] = 2e6;
        let k = asm.stiffness(&field).unwrap();
        let m = asm.mass(&field.rho).unwrap();
        let unit = asm.mass(&vec![1.0; mesh.n_elements()]).unwrap();

        let dofs = DofMap::new(&layout);
        let kd = dofs.restrict_matrix(&k.0).to_dense();
        let md = dofs.restrict_matrix(&m.0).to_dense();
        let ud = dofs.restrict_matrix(&unit.0).to_dense();
        let l = ud.cholesky().unwrap().l();
        let linv = l.try_inverse().unwrap();
        for omega in [0.0, 3.0, 10.0, 25.0, 50.0] {
            let a = &md * (omega * omega) - &kd;
            let c = &linv * a * linv.transpose();
            let c = (&c + c.transpose()) * 0.5;
            let expect = c.symmetric_eigenvalues().iter().filter(|&&s| s > 0.0).count();
            let got = positive_mode_count(&k, &m, &unit, omega, &layout).unwrap();
            assert_eq!(got, expect, "omega = {omega}");
        }
    }

    #[test]
    fn one_crossing_above_first_resonance() {
        // unequal side lengths split the two bending modes of a cube
        let mesh = build_mesh([1.0, 1.4, 1.0], [2, 2, 2]).unwrap();
        let layout = partition_boundary(&mesh, &[BoxSide::ZMin], [1, 1]).unwrap();
        let asm = Assembler::new(&mesh).unwrap();
        let field = MaterialField::uniform(8, Background { lambda: 2.0, mu: 1.0, rho: 1.0 });
        let k = asm.stiffness(&field).unwrap();
        let m = asm.mass(&field.rho).unwrap();
        let dofs = DofMap::new(&layout);
        let kd = dofs.restrict_matrix(&k.0).to_dense();
        let md = dofs.restrict_matrix(&m.0).to_dense();
        let linv = md.cholesky().unwrap().l().try_inverse().unwrap();
        let c = &linv * kd * linv.transpose();
        let mut eigs: Vec<f64> = ((&c + c.transpose()) * 0.5).symmetric_eigenvalues().iter().copied().collect();
        eigs.sort_by(f64::total_cmp);
        assert!(eigs[1] > eigs[0] * 1.01, "first mode is simple");
        let omega = (0.5 * (eigs[0] + eigs[1])).sqrt();
        assert_eq!(positive_mode_count(&k, &m, &m, omega, &layout).unwrap(), 1);
    }

    #[test]
    fn mode_count_is_monotone_in_omega() {
        let bg = Background { lambda: 6e5, mu: 6e3, rho: 3e3 };
        let mut last = 0;
        for step in 0..12 {
            let omega = 5.0 * step as f64;
            let mc = background_mode_count(bg, [1.0; 3], [3, 3, 3], &[BoxSide::ZMin], omega, false).unwrap();
            assert!(mc.count >= last, "omega {omega}: {} < {last}", mc.count);
            last = mc.count;
        }
        assert!(last > 0);
    }
}
