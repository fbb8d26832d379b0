//! Dense symmetric kernels shared by every other module.
//!
//! Tolerances follow one policy: a comparison on matrix `M` is made relative
//! to `scale(M) = 1 + ‖M‖₂`.

use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Symmetric matrix in packed upper-triangular storage (row-major over
/// `i <= j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    packed: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, packed: alloc::vec![0.0; Self::packed_len(n)] }
    }

    /// Number of free entries of an `n × n` symmetric matrix.
    pub const fn packed_len(n: usize) -> usize {
        n * (n + 1) / 2
    }

    /// Packs the symmetric part `(M + Mᵀ)/2` of a square matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert!(m.is_square(), "SymMatrix::from_dense needs a square matrix");
        let n = m.nrows();
        let mut packed = Vec::with_capacity(Self::packed_len(n));
        for i in 0..n {
            for j in i..n {
                packed.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        Self { n, packed }
    }

    pub fn from_packed(n: usize, packed: &[f64]) -> Self {
        assert_eq!(packed.len(), Self::packed_len(n));
        Self { n, packed: packed.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    /// Position of entry `(i, j)` in packed storage.
    pub fn index(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    }

    /// Inverse of [`SymMatrix::index`]: the `(i, j)` with `i <= j`.
    pub fn coordinates(n: usize, k: usize) -> (usize, usize) {
        let mut i = 0;
        let mut start = 0;
        while k >= start + (n - i) {
            start += n - i;
            i += 1;
        }
        (i, i + (k - start))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[Self::index(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.packed[Self::index(self.n, i, j)] = value;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Basis matrix for packed coordinate `k`: `e_i e_jᵀ + e_j e_iᵀ` off the
    /// diagonal and `e_i e_iᵀ` on it, so `M = Σ_k packed[k]·basis(k)`.
    pub fn basis(n: usize, k: usize) -> DMatrix<f64> {
        let (i, j) = Self::coordinates(n, k);
        let mut e = DMatrix::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        e
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `max |M - Mᵀ|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().fold(0.0_f64, |acc, v| acc.max(*v))
}

/// `1 + ‖M‖₂`.
pub fn scale(m: &DMatrix<f64>) -> f64 {
    1.0 + spectral_norm(m)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order. Eigenvector signs are fixed so the largest-magnitude
/// component of each vector is positive.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * v[i];
        }
    }
    (values, vectors)
}

/// Smallest eigenvalue of the symmetric part; `+∞` for an empty matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().iter().fold(f64::INFINITY, |acc, v| acc.min(*v))
}

/// Strict positive definiteness: `λ_min > 1e-12·(1 + ‖M‖₂)`.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    min_eigenvalue(m) > 1e-12 * scale(m)
}

/// Natural-log determinant of a positive-definite matrix from its Cholesky
/// factor, `2·Σ ln L_ii`.
pub fn logdet_pd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { name: "logdet argument".to_string(), min_eigenvalue: min_eigenvalue(m) })?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { name: "logdet argument".to_string(), min_eigenvalue: min_eigenvalue(m) });
        }
        acc += libm::log(d);
    }
    Ok(2.0 * acc)
}

/// Log-determinant from the eigenvalues; used to cross-check [`logdet_pd`].
pub fn logdet_eigen(m: &DMatrix<f64>) -> Result<f64> {
    let values = symmetrize(m).symmetric_eigenvalues();
    let mut acc = 0.0;
    for v in values.iter() {
        if !(*v > 0.0) {
            return Err(Error::NotPositiveDefinite { name: "logdet argument".to_string(), min_eigenvalue: *v });
        }
        acc += libm::log(*v);
    }
    Ok(acc)
}

/// Solves `M X = B` for symmetric positive-definite `M`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { name: "linear system".to_string(), min_eigenvalue: min_eigenvalue(m) })?;
    Ok(chol.solve(b))
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { name: "matrix inverse".to_string(), min_eigenvalue: min_eigenvalue(m) })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite { name: "Cholesky argument".to_string(), min_eigenvalue: min_eigenvalue(m) })
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Result of a block positive-semidefiniteness test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurCheck {
    pub min_eigenvalue: f64,
    /// The verdict threshold, `-1e-9·scale`.
    pub threshold: f64,
    pub passed: bool,
}

/// Assembles `[X, Y; Yᵀ, Z]` and tests it for positive semidefiniteness at
/// threshold `-1e-9·(1 + ‖·‖₂)`.
pub fn schur_psd_check(top_left: &DMatrix<f64>, top_right: &DMatrix<f64>, bottom_right: &DMatrix<f64>) -> Result<SchurCheck> {
    let n = top_left.nrows();
    let k = bottom_right.nrows();
    if !top_left.is_square() || !bottom_right.is_square() || top_right.nrows() != n || top_right.ncols() != k {
        return Err(Error::DimensionMismatch(alloc::format!(
            "Schur blocks {}x{}, {}x{}, {}x{}",
            top_left.nrows(),
            top_left.ncols(),
            top_right.nrows(),
            top_right.ncols(),
            bottom_right.nrows(),
            bottom_right.ncols()
        )));
    }
    let mut full = DMatrix::zeros(n + k, n + k);
    full.view_mut((0, 0), (n, n)).copy_from(top_left);
    full.view_mut((0, n), (n, k)).copy_from(top_right);
    full.view_mut((n, 0), (k, n)).copy_from(&top_right.transpose());
    full.view_mut((n, n), (k, k)).copy_from(bottom_right);
    let min_eigenvalue = min_eigenvalue(&full);
    let threshold = -1e-9 * scale(&full);
    Ok(SchurCheck { min_eigenvalue, threshold, passed: min_eigenvalue >= threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_pd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let g = DMatrix::from_fn(n, n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        &g * g.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn packed_indexing_round_trips() {
        for n in 1..6 {
            for k in 0..SymMatrix::packed_len(n) {
                let (i, j) = SymMatrix::coordinates(n, k);
                assert!(i <= j);
                assert_eq!(SymMatrix::index(n, i, j), k);
                assert_eq!(SymMatrix::index(n, j, i), k);
            }
        }
        let m = random_pd(4, 3);
        let mut acc = DMatrix::zeros(4, 4);
        let packed = SymMatrix::from_dense(&m);
        for k in 0..SymMatrix::packed_len(4) {
            acc += SymMatrix::basis(4, k) * packed.packed()[k];
        }
        assert!((acc - &m).abs().max() < 1e-15);
    }

    #[test]
    fn logdet_simple_cases() {
        assert_eq!(logdet_pd(&DMatrix::identity(3, 3)).unwrap(), 0.0);
        let d = DMatrix::from_element(1, 1, 4.0);
        assert!((logdet_pd(&d).unwrap() - libm::log(4.0)).abs() < 1e-15);
        assert!(matches!(logdet_pd(&DMatrix::from_element(1, 1, -1.0)), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn logdet_matches_eigenvalue_product() {
        for seed in 0..20 {
            let m = random_pd(3, seed);
            let product: f64 = m.clone().symmetric_eigenvalues().iter().product();
            let expected = libm::log(product);
            let got = logdet_pd(&m).unwrap();
            assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "{got} vs {expected}");
        }
    }

    #[test]
    fn logdet_additive_over_blocks() {
        let a = random_pd(2, 11);
        let b = random_pd(3, 12);
        let full = block_diag(&[a.clone(), b.clone()]);
        let lhs = logdet_pd(&full).unwrap();
        let rhs = logdet_pd(&a).unwrap() + logdet_pd(&b).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn factor_and_eigen_logdet_agree() {
        for n in 1..=20 {
            let m = random_pd(n, 100 + n as u64);
            let a = logdet_pd(&m).unwrap();
            let b = logdet_eigen(&m).unwrap();
            assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()), "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn schur_check_cases() {
        let z = DMatrix::zeros(2, 2);
        assert!(schur_psd_check(&z, &z, &z).unwrap().passed);

        // Feasible: P - Π with Π the Schur complement boundary.
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.9]);
        let w = DMatrix::identity(2, 2) * 0.3;
        let tight = spd_inverse(&(spd_inverse(&p).unwrap() + a.transpose() * spd_inverse(&w).unwrap() * &a)).unwrap();
        let pi = &tight * 0.999;
        let check = schur_psd_check(&(&p - &pi), &(&p * a.transpose()), &(&a * &p * a.transpose() + &w)).unwrap();
        assert!(check.passed);
        let inflated = &tight * 2.0;
        let check = schur_psd_check(&(&p - &inflated), &(&p * a.transpose()), &(&a * &p * a.transpose() + &w)).unwrap();
        assert!(!check.passed);

        assert!(matches!(schur_psd_check(&z, &DMatrix::zeros(3, 2), &z), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sorted_eigen_is_descending_and_reconstructs() {
        let m = random_pd(4, 5);
        let (values, vectors) = sorted_eigen(&m);
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = &vectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values)) * vectors.transpose();
        assert!((rebuilt - m).abs().max() < 1e-12);
    }
}
