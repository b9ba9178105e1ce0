//! Sparse storage and banded direct factorizations.
//!
//! The structured hexahedral mesh numbers nodes lexicographically, so every
//! assembled operator is banded. The factorizations here work on that band.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix structure from per-row column lists; values start at
    /// zero.
    pub fn from_pattern(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            debug_assert!(cols.last().map_or(true, |&c| c < ncols));
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Position of entry (i, j) in the value array, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn add_at(&mut self, pos: usize, v: f64) {
        self.values[pos] += v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.mul_vec(y)).map(|(a, b)| a * b).sum()
    }

    /// Linear combination `a·self + b·other` of two matrices with identical
    /// structure.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> Result<CsrMatrix> {
        if self.row_ptr != other.row_ptr || self.col_idx != other.col_idx {
            return Err(Error::InvalidArgument(
                "matrices do not share a sparsity pattern".into(),
            ));
        }
        let mut out = self.clone();
        for (o, (&x, &y)) in out.values.iter_mut().zip(self.values.iter().zip(&other.values)) {
            *o = a * x + b * y;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Largest |a_ij − a_ji| relative to the largest |a_ij|.
    pub fn relative_asymmetry(&self) -> f64 {
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                scale = scale.max(v.abs());
                diff = diff.max((v - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    /// Maximum absolute column sum (the matrix 1-norm).
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                sums[j] += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Submatrix on the index set `keep` (rows and columns), preserving order.
    pub fn restrict(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in keep {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows: keep.len(),
            ncols: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.nrows {
            let (cols, _) = self.row(i);
            if let (Some(&first), Some(&last)) = (cols.first(), cols.last()) {
                kl = kl.max(i.saturating_sub(first));
                ku = ku.max(last.saturating_sub(i));
            }
        }
        (kl, ku)
    }
}

/// LU factorization with partial pivoting of a square banded matrix.
///
/// Row `i` of the working array holds columns `i − kl ..= i + kl + ku`; the
/// extra `kl` superdiagonals absorb fill from row interchanges.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<f64>,
    lower: Vec<f64>,
    pivots: Vec<usize>,
    norm1: f64,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut ab = vec![0.0; n * width];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                ab[i * width + j + kl - i] = v;
            }
        }
        let norm1 = a.norm1();
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut pivots = vec![0; n];

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[k * width + kl].abs();
            for r in k + 1..=last_row {
                let v = ab[r * width + k + kl - r].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            pivots[k] = p;
            if best == 0.0 {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    ab.swap(k * width + j + kl - k, p * width + j + kl - p);
                }
            }
            let pivot = ab[k * width + kl];
            let span = last_col - k;
            for r in k + 1..=last_row {
                let off = k + kl - r;
                let l = ab[r * width + off] / pivot;
                lower[k * kl + (r - k - 1)] = l;
                ab[r * width + off] = 0.0;
                if l == 0.0 {
                    continue;
                }
                let (head, tail) = ab.split_at_mut(r * width);
                let src = &head[k * width + kl + 1..k * width + kl + 1 + span];
                let dst = &mut tail[off + 1..off + 1 + span];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }

        Ok(BandedLu {
            n,
            kl,
            ku,
            width,
            ab,
            lower,
            pivots,
            norm1,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                    b[r] -= self.lower[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + kl + ku).min(n - 1);
            let row = &self.ab[i * w + kl..i * w + kl + (last_col - i) + 1];
            let mut s = b[i];
            for (u, x) in row[1..].iter().zip(&b[i + 1..=last_col]) {
                s -= u * x;
            }
            b[i] = s / row[0];
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        assert_eq!(b.len(), n);
        // Uᵀ y = b
        for i in 0..n {
            let s = b[i] / self.ab[i * w + kl];
            b[i] = s;
            let last_col = (i + kl + ku).min(n - 1);
            for j in i + 1..=last_col {
                b[j] -= self.ab[i * w + kl + (j - i)] * s;
            }
        }
        // Lᵀ with interleaved interchanges, applied in reverse
        for k in (0..n).rev() {
            let mut s = b[k];
            for r in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                s -= self.lower[k * kl + (r - k - 1)] * b[r];
            }
            b[k] = s;
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }

    /// Reciprocal 1-norm condition estimate `1 / (‖A‖₁ ‖A⁻¹‖₁)` using
    /// Hager's method with Higham's refinements.
    pub fn rcond(&self) -> f64 {
        if self.n == 0 || self.norm1 == 0.0 {
            return 0.0;
        }
        let inv_norm = self.inverse_norm1_estimate();
        if !inv_norm.is_finite() || inv_norm == 0.0 {
            return 0.0;
        }
        1.0 / (self.norm1 * inv_norm)
    }

    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = vec![1.0 / n as f64; n];
        self.solve_in_place(&mut x);
        let mut est: f64 = x.iter().map(|v| v.abs()).sum();
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let mut z: Vec<f64> = x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            self.solve_transpose_in_place(&mut z);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
                    if v.abs() > acc.1 {
                        (i, v.abs())
                    } else {
                        acc
                    }
                });
            if j == last_j {
                break;
            }
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx && last_j != usize::MAX {
                break;
            }
            last_j = j;
            x = vec![0.0; n];
            x[j] = 1.0;
            self.solve_in_place(&mut x);
            let new_est: f64 = x.iter().map(|v| v.abs()).sum();
            if new_est <= est {
                est = est.max(new_est);
                break;
            }
            est = new_est;
        }
        // alternating-sign probe guards against underestimation
        let mut alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        self.solve_in_place(&mut alt);
        let alt_est = 2.0 * alt.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// Symmetric banded LDLᵀ factorization without pivoting.
///
/// Used for inertia counts: by Sylvester's law the signs of `D` give the
/// numbers of positive and negative eigenvalues whenever the factorization
/// exists.
#[derive(Debug, Clone)]
pub struct BandedLdlt {
    n: usize,
    kd: usize,
    /// Row `i` holds `L[i, i−kd ..= i−1]` followed by `D[i]`.
    band: Vec<f64>,
}

impl BandedLdlt {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        let n = a.nrows();
        let (kd, _) = a.bandwidths();
        let w = kd + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    band[i * w + kd + j - i] = v;
                }
            }
        }
        // Row-oriented LDLᵀ: L[i,j] = (A[i,j] − Σ_k L[i,k] D[k] L[j,k]) / D[j].
        let mut scratch = vec![0.0; w];
        for i in 0..n {
            let first = i.saturating_sub(kd);
            for j in first..i {
                let jfirst = j.saturating_sub(kd).max(first);
                let mut s = band[i * w + kd + j - i];
                for k in jfirst..j {
                    s -= scratch[k - first] * band[j * w + kd + k - j];
                }
                // scratch holds L[i,k]·D[k]
                scratch[j - first] = s;
                let dj = band[j * w + kd];
                if dj == 0.0 {
                    return Err(Error::Singular(format!("zero pivot at row {j}")));
                }
                band[i * w + kd + j - i] = s / dj;
            }
            let mut d = band[i * w + kd];
            for k in first..i {
                d -= scratch[k - first] * band[i * w + kd + k - i];
            }
            band[i * w + kd] = d;
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
        }
        Ok(BandedLdlt { n, kd, band })
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.band[i * (self.kd + 1) + self.kd])
    }

    /// (positive, negative) pivot counts.
    pub fn inertia(&self) -> (usize, usize) {
        self.diagonal().fold((0, 0), |(p, q), d| if d > 0.0 { (p + 1, q) } else { (p, q + 1) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, lo: f64, d: f64, up: f64) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut m = CsrMatrix::from_pattern(n, rows);
        for i in 0..n {
            let p = m.position(i, i).unwrap();
            m.add_at(p, d);
            if i > 0 {
                let p = m.position(i, i - 1).unwrap();
                m.add_at(p, lo);
            }
            if i + 1 < n {
                let p = m.position(i, i + 1).unwrap();
                m.add_at(p, up);
            }
        }
        m
    }

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let rows = (0..n)
            .map(|i| (i.saturating_sub(kl)..=(i + ku).min(n - 1)).collect())
            .collect();
        let mut m = CsrMatrix::from_pattern(n, rows);
        for v in m.values.iter_mut() {
            *v = next();
        }
        m
    }

    #[test]
    fn lu_matches_dense_solve() {
        for (n, kl, ku, seed) in [(30, 3, 5, 1), (40, 7, 2, 2), (25, 0, 0, 3), (12, 11, 11, 4)] {
            let a = random_banded(n, kl, ku, seed);
            let lu = BandedLu::factor(&a).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            for i in 0..n {
                assert!((x[i] - dense[i]).abs() <= 1e-10 * dense.amax(), "n={n}");
            }
            let mut y = b.clone();
            lu.solve_transpose_in_place(&mut y);
            let dense_t = a
                .to_dense()
                .transpose()
                .lu()
                .solve(&nalgebra::DVector::from_vec(b))
                .unwrap();
            for i in 0..n {
                assert!((y[i] - dense_t[i]).abs() <= 1e-10 * dense_t.amax());
            }
        }
    }

    #[test]
    fn rcond_tracks_dense_condition() {
        let a = tridiag(50, -1.0, 2.0, -1.0);
        let lu = BandedLu::factor(&a).unwrap();
        let inv = a.to_dense().try_inverse().unwrap();
        let inv_norm1 = (0..50)
            .map(|j| inv.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let exact = 1.0 / (a.norm1() * inv_norm1);
        let est = lu.rcond();
        assert!(est >= exact * 0.999 && est <= exact * 10.0, "{est} vs {exact}");
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = tridiag(5, 0.0, 0.0, 0.0);
        assert!(matches!(BandedLu::factor(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn ldlt_inertia() {
        // eigenvalues of the shifted second-difference matrix are
        // 2 − 2cos(kπ/(n+1)) − shift
        let n = 20;
        for shift in [0.1, 0.5, 1.7, 3.5] {
            let a = tridiag(n, -1.0, 2.0 - shift, -1.0);
            let (pos, neg) = BandedLdlt::factor(&a).unwrap().inertia();
            let expected_neg = (1..=n)
                .filter(|&k| {
                    2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n + 1) as f64).cos() - shift < 0.0
                })
                .count();
            assert_eq!(neg, expected_neg, "shift {shift}");
            assert_eq!(pos + neg, n);
        }
    }

    #[test]
    fn restrict_keeps_order() {
        let a = tridiag(6, -1.0, 2.0, -3.0);
        let r = a.restrict(&[1, 2, 4]);
        let d = r.to_dense();
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(0, 1)], -3.0);
        assert_eq!(d[(1, 0)], -1.0);
        assert_eq!(d[(1, 2)], 0.0);
    }
}
