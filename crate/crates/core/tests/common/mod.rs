//! Shared fixtures and brute-force reference computations for the
//! integration suites. Nothing here calls into the estimator code paths it is
//! used to check.

#![allow(dead_code)]

use dyadreg::{DyadDataset, Theta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random complete panel with `n` nodes and `p` regressors; the first
/// regressor is an intercept when `intercept` is set.
pub fn random_dataset(seed: u64, n: usize, p: usize, intercept: bool) -> DyadDataset {
    let mut rng = rng(seed);
    let mut y = vec![0.0; n * n];
    let mut r = vec![0.0; n * n * p];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let idx = i * n + j;
            for k in 0..p {
                r[idx * p + k] = if intercept && k == 0 {
                    1.0
                } else {
                    rng.random_range(-1.0..1.0)
                };
            }
            // mix of zeros, fractions and counts
            y[idx] = match rng.random_range(0..4) {
                0 => 0.0,
                1 => rng.random_range(0.0..1.0),
                _ => rng.random_range(0..6) as f64,
            };
        }
    }
    let labels = (0..n).map(|i| format!("v{i}")).collect();
    let names = (0..p)
        .map(|k| {
            if intercept && k == 0 {
                "intercept".to_string()
            } else {
                format!("x{k}")
            }
        })
        .collect();
    DyadDataset::from_dense(labels, names, y, r).unwrap()
}

pub fn random_theta(seed: u64, p: usize) -> Theta {
    let mut rng = rng(seed ^ 0x5eed);
    Theta::new((0..p).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap()
}

pub fn random_permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = rng(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

fn eta(r: &[f64], theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..r.len() {
        s += r[k] * theta[k];
    }
    s
}

/// Plain double loop over ordered pairs.
pub fn brute_loglik(ds: &DyadDataset, theta: &[f64]) -> f64 {
    let n = ds.n_nodes();
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let e = eta(ds.r(i, j), theta);
                total += ds.y(i, j) * e - e.exp();
                count += 1.0;
            }
        }
    }
    total / count
}

pub fn brute_score(ds: &DyadDataset, theta: &[f64]) -> Vec<f64> {
    let n = ds.n_nodes();
    let p = ds.n_regressors();
    let mut total = vec![0.0; p];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = ds.r(i, j);
                let resid = ds.y(i, j) - eta(r, theta).exp();
                for k in 0..p {
                    total[k] += resid * r[k];
                }
            }
        }
    }
    let count = (n * (n - 1)) as f64;
    total.iter().map(|v| v / count).collect()
}

pub fn brute_hessian(ds: &DyadDataset, theta: &[f64]) -> Vec<Vec<f64>> {
    let n = ds.n_nodes();
    let p = ds.n_regressors();
    let mut h = vec![vec![0.0; p]; p];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = ds.r(i, j);
                let mu = eta(r, theta).exp();
                for a in 0..p {
                    for b in 0..p {
                        h[a][b] -= mu * r[a] * r[b];
                    }
                }
            }
        }
    }
    let count = (n * (n - 1)) as f64;
    h.iter()
        .map(|row| row.iter().map(|v| v / count).collect())
        .collect()
}

/// Central-difference step used by the derivative checks.
pub fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

/// Random packed symmetric scores `t_ij`, `i < j`, row-major.
pub fn random_pairs(seed: u64, n: usize, p: usize) -> Vec<f64> {
    let mut rng = rng(seed);
    (0..n * (n - 1) / 2 * p)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect()
}
