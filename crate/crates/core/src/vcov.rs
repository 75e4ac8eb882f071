//! Sandwich variance estimators for the composite-likelihood estimate.
//!
//! Everything is built from the symmetric dyad scores
//! `t_ij = s_ij + s_ji` evaluated at the estimate:
//!
//! * `sigma1_hat` averages cross products `t_ij t_ik'` over pairs of dyads
//!   that share exactly one agent (enumerated triad by triad);
//! * `sigma23_hat` averages the own products `t_ij t_ij'`;
//! * the dyadic-robust (Fafchamps-Gubert) covariance combines both,
//!   `Gamma^-1 (4 S1 + 2/(N-1) (S23 - 2 S1)) Gamma^-1 / N`;
//! * the dyad-clustered covariance keeps only `S23`,
//!   `2/(N(N-1)) Gamma^-1 S23 Gamma^-1`;
//! * the Huber covariance treats every directed dyad as independent,
//!   `A^-1 B A^-1` with `A = sum exp(r'theta) r r'` and `B = sum s_ij s_ij'`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{DyadDataset, Theta};
use crate::fit::FitResult;
use crate::linalg::{eigenvalues, pseudo_inverse, symmetrize};
use crate::pml::{score_dyad, PmlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Independent directed dyads.
    Huber,
    /// Clustered on unordered dyads.
    Dyad,
    /// Dyadic-robust (Fafchamps-Gubert).
    Fg,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Huber, Estimator::Dyad, Estimator::Fg];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Huber => "huber",
            Estimator::Dyad => "dyad",
            Estimator::Fg => "fg",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Denominator used in the triad average of `sigma1_hat`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sigma1Denominator {
    /// `N(N-1)(N-1)`.
    #[default]
    Printed,
    /// `N(N-1)(N-2)`, the number of ordered dyad pairs sharing one agent.
    #[serde(rename = "n-2")]
    NMinus2,
}

impl Sigma1Denominator {
    pub fn name(self) -> &'static str {
        match self {
            Sigma1Denominator::Printed => "printed",
            Sigma1Denominator::NMinus2 => "n-2",
        }
    }

    fn scale(self, n: usize) -> f64 {
        let n = n as f64;
        let last = match self {
            Sigma1Denominator::Printed => n - 1.0,
            Sigma1Denominator::NMinus2 => n - 2.0,
        };
        0.25 * 2.0 / (n * (n - 1.0) * last)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VcovError {
    #[error("Gamma-hat is singular or not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    SingularGamma { min_eigenvalue: f64 },
    #[error("{estimator} variance estimate for coefficient {index} is non-positive ({value:.3e})")]
    NegativeVarianceEstimate {
        estimator: Estimator,
        index: usize,
        value: f64,
    },
    #[error("score set has dimension {found}, fit has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Likelihood(#[from] PmlError),
}

/// Symmetric dyad scores and per-node totals at a parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SymScoreSet {
    n: usize,
    p: usize,
    /// `t_ij` for `i < j`, packed row-major.
    t: Vec<f64>,
    /// `g_i = sum_{j != i} t_ij`, `n x p`.
    g: Vec<f64>,
    /// `sum_{i != j} s_ij s_ij'`, present when built from directed scores.
    directed_outer: Option<DMatrix<f64>>,
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl SymScoreSet {
    /// Builds the set from precomputed `t_ij` (packed over `i < j`,
    /// row-major, `p` values each). No directed scores are attached, so the
    /// Huber estimator is unavailable.
    pub fn from_pairs(n: usize, p: usize, t: Vec<f64>) -> Self {
        assert!(n >= 2);
        assert_eq!(t.len(), n * (n - 1) / 2 * p);
        let mut g = vec![0.0; n * p];
        for i in 0..n {
            for j in (i + 1)..n {
                let off = packed_index(n, i, j) * p;
                for k in 0..p {
                    g[i * p + k] += t[off + k];
                    g[j * p + k] += t[off + k];
                }
            }
        }
        SymScoreSet {
            n,
            p,
            t,
            g,
            directed_outer: None,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// `t_ij` for `i != j` (symmetric in its arguments).
    pub fn t(&self, i: usize, j: usize) -> &[f64] {
        assert_ne!(i, j);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let off = packed_index(self.n, a, b) * self.p;
        &self.t[off..off + self.p]
    }

    pub fn g(&self, i: usize) -> &[f64] {
        &self.g[i * self.p..(i + 1) * self.p]
    }

    pub fn directed_outer(&self) -> Option<&DMatrix<f64>> {
        self.directed_outer.as_ref()
    }

    /// `sum_{i<j} t_ij`.
    pub fn total(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.p);
        for chunk in self.t.chunks_exact(self.p) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        acc
    }

    /// `sum_{i<j} t_ij t_ij'`.
    fn own_outer(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut acc = DMatrix::zeros(p, p);
        for chunk in self.t.chunks_exact(p) {
            add_outer(&mut acc, chunk, chunk);
        }
        acc
    }
}

fn add_outer(acc: &mut DMatrix<f64>, a: &[f64], b: &[f64]) {
    for (r, &x) in a.iter().enumerate() {
        for (c, &y) in b.iter().enumerate() {
            acc[(r, c)] += x * y;
        }
    }
}

/// Computes `t_ij = s_ij + s_ji` for every unordered dyad, the node totals,
/// and the directed outer-product sum used by the Huber estimator.
pub fn sym_scores(dataset: &DyadDataset, theta_hat: &Theta) -> Result<SymScoreSet, VcovError> {
    let n = dataset.n_nodes();
    let p = dataset.n_regressors();
    let rows: Vec<(Vec<f64>, DMatrix<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut t_row = Vec::with_capacity((n - i - 1) * p);
            let mut outer = DMatrix::zeros(p, p);
            for j in (i + 1)..n {
                let s_ij = score_dyad(dataset.y(i, j), dataset.r(i, j), theta_hat)?;
                let s_ji = score_dyad(dataset.y(j, i), dataset.r(j, i), theta_hat)?;
                add_outer(&mut outer, s_ij.as_slice(), s_ij.as_slice());
                add_outer(&mut outer, s_ji.as_slice(), s_ji.as_slice());
                t_row.extend(s_ij.iter().zip(s_ji.iter()).map(|(a, b)| a + b));
            }
            Ok((t_row, outer))
        })
        .collect::<Result<_, PmlError>>()?;

    let mut t = Vec::with_capacity(n * (n - 1) / 2 * p);
    let mut outer = DMatrix::zeros(p, p);
    for (t_row, o) in rows {
        t.extend(t_row);
        outer += o;
    }
    let mut set = SymScoreSet::from_pairs(n, p, t);
    set.directed_outer = Some(outer);
    Ok(set)
}

/// Triad-by-triad evaluation of `sigma1_hat`. O(N^3 p^2).
pub fn sigma1_naive(sym: &SymScoreSet, denominator: Sigma1Denominator) -> DMatrix<f64> {
    let (n, p) = (sym.n, sym.p);
    if n < 3 {
        return DMatrix::zeros(p, p);
    }
    let mut m = DMatrix::zeros(p, p);
    for i in 0..n - 2 {
        for j in i + 1..n - 1 {
            for k in j + 1..n {
                let (ij, ik, jk) = (sym.t(i, j), sym.t(i, k), sym.t(j, k));
                add_outer(&mut m, ij, ik);
                add_outer(&mut m, ij, jk);
                add_outer(&mut m, ik, jk);
            }
        }
    }
    symmetrize(&m) * denominator.scale(n)
}

/// `sigma1_hat` from node totals: the symmetrized triad sum equals
/// `(1/2) sum_i [g_i g_i' - sum_{j != i} t_ij t_ij']`. O(N^2 p^2).
pub fn sigma1_fast(sym: &SymScoreSet, denominator: Sigma1Denominator) -> DMatrix<f64> {
    let (n, p) = (sym.n, sym.p);
    if n < 3 {
        return DMatrix::zeros(p, p);
    }
    let mut m = DMatrix::zeros(p, p);
    for i in 0..n {
        let g = sym.g(i);
        add_outer(&mut m, g, g);
    }
    // each unordered dyad appears in the inner sum of both of its members
    m -= sym.own_outer() * 2.0;
    symmetrize(&m) * (0.5 * denominator.scale(n))
}

/// Estimate of `Sigma_2 + Sigma_3`: `(1/4) (2/(N(N-1))) sum_{i<j} t_ij t_ij'`.
pub fn sigma23(sym: &SymScoreSet) -> DMatrix<f64> {
    let n = sym.n as f64;
    symmetrize(&sym.own_outer()) * (0.25 * 2.0 / (n * (n - 1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcovOptions {
    pub denominator: Sigma1Denominator,
    /// Estimators whose standard errors are reported (and validated).
    pub estimators: Vec<Estimator>,
}

impl Default for VcovOptions {
    fn default() -> Self {
        VcovOptions {
            denominator: Sigma1Denominator::Printed,
            estimators: Estimator::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcovSet {
    pub sigma1_hat: DMatrix<f64>,
    pub sigma23_hat: DMatrix<f64>,
    pub gamma_inv: DMatrix<f64>,
    pub vcov_fg: DMatrix<f64>,
    pub vcov_dyad: DMatrix<f64>,
    /// Absent when the score set carries no directed scores.
    pub vcov_huber: Option<DMatrix<f64>>,
    pub se_fg: Option<DVector<f64>>,
    pub se_dyad: Option<DVector<f64>>,
    pub se_huber: Option<DVector<f64>>,
    pub warnings: Vec<String>,
}

impl VcovSet {
    pub fn vcov(&self, estimator: Estimator) -> Option<&DMatrix<f64>> {
        match estimator {
            Estimator::Huber => self.vcov_huber.as_ref(),
            Estimator::Dyad => Some(&self.vcov_dyad),
            Estimator::Fg => Some(&self.vcov_fg),
        }
    }

    pub fn se(&self, estimator: Estimator) -> Option<&DVector<f64>> {
        match estimator {
            Estimator::Huber => self.se_huber.as_ref(),
            Estimator::Dyad => self.se_dyad.as_ref(),
            Estimator::Fg => self.se_fg.as_ref(),
        }
    }
}

/// Inverse of a positive definite `Gamma`, or `SingularGamma`.
pub fn invert_gamma(gamma: &DMatrix<f64>) -> Result<DMatrix<f64>, VcovError> {
    let ev = eigenvalues(gamma);
    let min = ev.first().copied().unwrap_or(0.0);
    let pinv = pseudo_inverse(gamma);
    if min <= 0.0 || pinv.rank < gamma.nrows() {
        return Err(VcovError::SingularGamma { min_eigenvalue: min });
    }
    Ok(pinv.inverse)
}

fn standard_errors(v: &DMatrix<f64>, estimator: Estimator) -> Result<DVector<f64>, VcovError> {
    let diag = v.diagonal();
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(VcovError::NegativeVarianceEstimate {
            estimator,
            index,
            value,
        });
    }
    Ok(diag.map(f64::sqrt))
}

fn sandwich(bread: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(bread * meat * bread.transpose()))
}

/// Assembles the three coefficient covariance matrices and the requested
/// standard errors.
pub fn assemble_vcov(
    fit: &FitResult,
    sym: &SymScoreSet,
    options: &VcovOptions,
) -> Result<VcovSet, VcovError> {
    let p = fit.theta_hat.len();
    if sym.p != p {
        return Err(VcovError::DimensionMismatch {
            expected: p,
            found: sym.p,
        });
    }
    let n = sym.n as f64;
    let gamma_inv = invert_gamma(&fit.gamma_hat)?;
    let sigma1_hat = sigma1_fast(sym, options.denominator);
    let sigma23_hat = sigma23(sym);

    let meat_fg = &sigma1_hat * 4.0 + (&sigma23_hat - &sigma1_hat * 2.0) * (2.0 / (n - 1.0));
    let vcov_fg = sandwich(&gamma_inv, &meat_fg) / n;
    let vcov_dyad = sandwich(&gamma_inv, &sigma23_hat) * (2.0 / (n * (n - 1.0)));

    let mut warnings = Vec::new();
    // A = N(N-1) Gamma, so A^-1 B A^-1 = Gamma^-1 B Gamma^-1 / (N(N-1))^2
    let vcov_huber = match &sym.directed_outer {
        Some(b) => Some(sandwich(&gamma_inv, b) / (n * (n - 1.0)).powi(2)),
        None => {
            warnings.push("no directed scores available; Huber covariance not computed".into());
            None
        }
    };

    let mut set = VcovSet {
        sigma1_hat,
        sigma23_hat,
        gamma_inv,
        vcov_fg,
        vcov_dyad,
        vcov_huber,
        se_fg: None,
        se_dyad: None,
        se_huber: None,
        warnings,
    };
    for &est in &options.estimators {
        let Some(v) = set.vcov(est) else { continue };
        let se = standard_errors(v, est)?;
        match est {
            Estimator::Huber => set.se_huber = Some(se),
            Estimator::Dyad => set.se_dyad = Some(se),
            Estimator::Fg => set.se_fg = Some(se),
        }
    }
    Ok(set)
}

/// Standard normal quantile `z` with `P(|Z| <= z) = level`.
pub fn normal_critical_value(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Wald intervals `estimate +/- z * se`. `level` must lie in `(0, 1)`.
pub fn wald_ci(theta_hat: &[f64], se: &[f64], level: f64) -> Vec<(f64, f64)> {
    assert_eq!(theta_hat.len(), se.len());
    let z = normal_critical_value(level);
    theta_hat
        .iter()
        .zip(se)
        .map(|(&est, &s)| (est - z * s, est + z * s))
        .collect()
}
