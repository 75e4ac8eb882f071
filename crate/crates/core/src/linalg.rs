//! Small dense helpers for `p x p` symmetric matrices.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const RELATIVE_EIGEN_CUTOFF: f64 = 1e-12;

pub struct PseudoInverse {
    pub inverse: DMatrix<f64>,
    pub rank: usize,
}

/// Moore-Penrose inverse of a symmetric matrix via its eigendecomposition.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> PseudoInverse {
    let p = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let cutoff = RELATIVE_EIGEN_CUTOFF * largest;
    let mut inverse = DMatrix::zeros(p, p);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            inverse += (v * v.transpose()) / lambda;
        }
    }
    PseudoInverse { inverse, rank }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}
