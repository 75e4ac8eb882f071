//! Dyadic regression with Poisson pseudo-maximum-likelihood.
//!
//! Fits a multiplicative mean model `E[y_ij | r_ij] = exp(r_ij' theta)` on a
//! complete directed-dyad panel and reports standard errors that are robust
//! to dependence between dyads sharing an agent.

pub mod cli;
pub mod data;
pub mod fit;
pub mod linalg;
pub mod pml;
pub mod simulate;
pub mod vcov;

pub use data::{build_dataset, expand_node_covariates, DataError, DyadDataset, DyadRecord, NodeTable, Theta};
pub use fit::{fit_poisson_pml, FitError, FitOptions, FitResult, FitWarning};
pub use pml::{composite_hessian, composite_loglik, composite_score, PmlError};
pub use simulate::{gen_dataset, run_coverage, run_replication, CoverageReport, SimConfig};
pub use vcov::{
    assemble_vcov, sigma1_fast, sigma1_naive, sigma23, sym_scores, wald_ci, Estimator,
    Sigma1Denominator, SymScoreSet, VcovError, VcovOptions, VcovSet,
};
