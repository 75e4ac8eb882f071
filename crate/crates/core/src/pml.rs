//! Poisson composite log-likelihood, score and Hessian.
//!
//! Per directed dyad, with linear predictor `eta = r'theta`:
//!
//! ```text
//! l(theta) = y * eta - exp(eta)
//! s(theta) = (y - exp(eta)) * r
//! h(theta) = -exp(eta) * r r'
//! ```
//!
//! The composite versions average these over all `N(N-1)` ordered pairs. Sums
//! are formed per ego row (alters in index order), and the row partials are
//! then added in row order, so the result does not depend on how many worker
//! threads computed the rows. The `1/(N(N-1))` factor is applied once, after
//! summation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{DyadDataset, Theta};

/// Largest linear predictor accepted before `exp` is considered to overflow.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

pub type ScoreVector = DVector<f64>;
pub type HessianMatrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PmlError {
    #[error("linear predictor {linear_predictor} exceeds the overflow cap of {MAX_LINEAR_PREDICTOR}")]
    NonFiniteLikelihood { linear_predictor: f64 },
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns `(eta, exp(eta))`, refusing predictors above the cap.
#[inline]
fn linear_predictor(r: &[f64], theta: &[f64]) -> Result<(f64, f64), PmlError> {
    debug_assert_eq!(r.len(), theta.len());
    let eta = dot(r, theta);
    if eta.is_nan() || eta > MAX_LINEAR_PREDICTOR {
        return Err(PmlError::NonFiniteLikelihood {
            linear_predictor: eta,
        });
    }
    Ok((eta, eta.exp()))
}

pub fn loglik_dyad(y: f64, r: &[f64], theta: &Theta) -> Result<f64, PmlError> {
    let (eta, mu) = linear_predictor(r, theta.as_slice())?;
    Ok(y * eta - mu)
}

pub fn score_dyad(y: f64, r: &[f64], theta: &Theta) -> Result<ScoreVector, PmlError> {
    let (_, mu) = linear_predictor(r, theta.as_slice())?;
    Ok(DVector::from_iterator(r.len(), r.iter().map(|v| (y - mu) * v)))
}

pub fn hessian_dyad(r: &[f64], theta: &Theta) -> Result<HessianMatrix, PmlError> {
    let (_, mu) = linear_predictor(r, theta.as_slice())?;
    let p = r.len();
    Ok(DMatrix::from_fn(p, p, |a, b| -mu * r[a] * r[b]))
}

/// Computes one partial per ego row (in parallel) and returns them in row order.
fn row_partials<T, F>(n: usize, per_row: F) -> Result<Vec<T>, PmlError>
where
    T: Send,
    F: Fn(usize) -> Result<T, PmlError> + Sync + Send,
{
    (0..n).into_par_iter().map(per_row).collect()
}

fn add_into(acc: &mut [f64], part: &[f64]) {
    for (a, b) in acc.iter_mut().zip(part) {
        *a += b;
    }
}

fn alters(n: usize, i: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |&j| j != i)
}

/// `L_N(theta)`: mean of [`loglik_dyad`] over ordered pairs.
pub fn composite_loglik(dataset: &DyadDataset, theta: &Theta) -> Result<f64, PmlError> {
    let n = dataset.n_nodes();
    let th = theta.as_slice();
    let rows = row_partials(n, |i| {
        let mut acc = 0.0;
        for j in alters(n, i) {
            let (eta, mu) = linear_predictor(dataset.r(i, j), th)?;
            acc += dataset.y(i, j) * eta - mu;
        }
        Ok(acc)
    })?;
    Ok(rows.iter().sum::<f64>() / dataset.n_dyads() as f64)
}

/// `S_N(theta)`: mean of [`score_dyad`] over ordered pairs.
pub fn composite_score(dataset: &DyadDataset, theta: &Theta) -> Result<ScoreVector, PmlError> {
    let n = dataset.n_nodes();
    let p = dataset.n_regressors();
    let th = theta.as_slice();
    let rows = row_partials(n, |i| {
        let mut acc = vec![0.0; p];
        for j in alters(n, i) {
            let r = dataset.r(i, j);
            let (_, mu) = linear_predictor(r, th)?;
            let resid = dataset.y(i, j) - mu;
            for (a, v) in acc.iter_mut().zip(r) {
                *a += resid * v;
            }
        }
        Ok(acc)
    })?;
    let mut total = vec![0.0; p];
    for row in &rows {
        add_into(&mut total, row);
    }
    let scale = dataset.n_dyads() as f64;
    Ok(DVector::from_iterator(p, total.into_iter().map(|v| v / scale)))
}

/// `H_N(theta)`: mean of [`hessian_dyad`] over ordered pairs.
pub fn composite_hessian(dataset: &DyadDataset, theta: &Theta) -> Result<HessianMatrix, PmlError> {
    let n = dataset.n_nodes();
    let p = dataset.n_regressors();
    let th = theta.as_slice();
    // upper triangle, row-major
    let rows = row_partials(n, |i| {
        let mut acc = vec![0.0; p * p];
        for j in alters(n, i) {
            let r = dataset.r(i, j);
            let (_, mu) = linear_predictor(r, th)?;
            for a in 0..p {
                let w = mu * r[a];
                for b in a..p {
                    acc[a * p + b] -= w * r[b];
                }
            }
        }
        Ok(acc)
    })?;
    let mut total = vec![0.0; p * p];
    for row in &rows {
        add_into(&mut total, row);
    }
    let scale = dataset.n_dyads() as f64;
    Ok(DMatrix::from_fn(p, p, |a, b| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        total[lo * p + hi] / scale
    }))
}
