//! Fit report schema and the JSON / CSV renderings of both reports.
//!
//! JSON is canonical. The fit report (`schema: "dyadreg.fit.v1"`) looks like
//!
//! ```text
//! {
//!   "schema": "dyadreg.fit.v1",
//!   "dataset": { "n_nodes": 136, "n_dyads": 18360 },
//!   "regressors": ["intercept", ...],
//!   "level": 0.95,
//!   "sigma1_denominator": "printed",
//!   "estimators": ["huber", "dyad", "fg"],
//!   "coefficients": [
//!     { "name": "intercept", "estimate": -5.688,
//!       "se": { "huber": ..., "dyad": ..., "fg": ... },
//!       "ci": { "huber": [lo, hi], ... } }
//!   ],
//!   "convergence": { "converged": true, "iterations": 7,
//!                    "score_norm": 1e-12, "loglik": ... },
//!   "covariance": { "fg": [[...], ...], ... },      // only with --covariance
//!   "warnings": []
//! }
//! ```

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::DyadDataset;
use crate::fit::FitResult;
use crate::simulate::CoverageReport;
use crate::vcov::{wald_ci, Estimator, Sigma1Denominator, VcovSet};

use super::CliError;

pub const FIT_SCHEMA: &str = "dyadreg.fit.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_nodes: usize,
    pub n_dyads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub se: BTreeMap<Estimator, f64>,
    pub ci: BTreeMap<Estimator, [f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    pub dataset: DatasetSummary,
    pub regressors: Vec<String>,
    pub level: f64,
    pub sigma1_denominator: Sigma1Denominator,
    pub estimators: Vec<Estimator>,
    pub coefficients: Vec<CoefficientReport>,
    pub convergence: ConvergenceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<BTreeMap<Estimator, Vec<Vec<f64>>>>,
    pub warnings: Vec<String>,
}

impl FitReport {
    /// Builds the report. Standard errors and intervals are filled in for
    /// every estimator in `estimators` that `vcov` provides.
    pub fn new(
        dataset: &DyadDataset,
        fit: &FitResult,
        vcov: Option<&VcovSet>,
        estimators: &[Estimator],
        level: f64,
        denominator: Sigma1Denominator,
        include_covariance: bool,
    ) -> Self {
        let theta = fit.theta_hat.as_slice();
        let mut coefficients: Vec<CoefficientReport> = dataset
            .regressor_names()
            .iter()
            .zip(theta)
            .map(|(name, &estimate)| CoefficientReport {
                name: name.clone(),
                estimate,
                se: BTreeMap::new(),
                ci: BTreeMap::new(),
            })
            .collect();
        let mut covariance = include_covariance.then(BTreeMap::new);
        let mut warnings: Vec<String> = fit.warnings.iter().map(|w| w.to_string()).collect();

        if let Some(v) = vcov {
            warnings.extend(v.warnings.iter().cloned());
            for &est in estimators {
                let Some(se) = v.se(est) else { continue };
                let intervals = wald_ci(theta, se.as_slice(), level);
                for ((coef, &s), (lo, hi)) in coefficients.iter_mut().zip(se.iter()).zip(intervals) {
                    coef.se.insert(est, s);
                    coef.ci.insert(est, [lo, hi]);
                }
                if let (Some(cov), Some(m)) = (covariance.as_mut(), v.vcov(est)) {
                    let rows = m.row_iter().map(|r| r.iter().copied().collect()).collect();
                    cov.insert(est, rows);
                }
            }
        }
        if !fit.converged {
            warnings.push("estimation did not converge; standard errors omitted".into());
        }

        FitReport {
            schema: FIT_SCHEMA.to_string(),
            dataset: DatasetSummary {
                n_nodes: dataset.n_nodes(),
                n_dyads: dataset.n_dyads(),
            },
            regressors: dataset.regressor_names().to_vec(),
            level,
            sigma1_denominator: denominator,
            estimators: estimators.to_vec(),
            coefficients,
            convergence: ConvergenceReport {
                converged: fit.converged,
                iterations: fit.iterations,
                score_norm: fit.final_score_norm,
                loglik: fit.loglik_at_optimum,
            },
            covariance,
            warnings,
        }
    }
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Csv(e.to_string())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Output(e.to_string()))
}

/// One row per coefficient per estimator; a coefficient without standard
/// errors gets a single row with empty estimator fields.
pub fn write_fit_csv<W: Write>(report: &FitReport, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["coefficient", "estimator", "estimate", "se", "ci_lower", "ci_upper"])
        .map_err(csv_err)?;
    for c in &report.coefficients {
        if c.se.is_empty() {
            w.write_record([c.name.as_str(), "", &c.estimate.to_string(), "", "", ""])
                .map_err(csv_err)?;
        }
        for (est, se) in &c.se {
            let [lo, hi] = c.ci[est];
            w.write_record([
                c.name.clone(),
                est.to_string(),
                c.estimate.to_string(),
                se.to_string(),
                lo.to_string(),
                hi.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

/// One row per parameter per estimator.
pub fn write_coverage_csv<W: Write>(report: &CoverageReport, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "parameter",
        "true_value",
        "estimator",
        "coverage",
        "mc_se",
        "hits",
        "n_included",
        "n_excluded",
        "mean_estimate",
        "sd_estimate",
        "mean_se",
    ])
    .map_err(csv_err)?;
    for p in &report.parameters {
        for c in &p.coverage {
            w.write_record([
                p.name.clone(),
                p.true_value.to_string(),
                c.estimator.to_string(),
                c.coverage.to_string(),
                c.mc_se.to_string(),
                c.hits.to_string(),
                report.n_included.to_string(),
                report.n_excluded.to_string(),
                p.mean_estimate.to_string(),
                p.sd_estimate.to_string(),
                c.mean_se.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}
