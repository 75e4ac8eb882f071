//! Monte Carlo coverage experiment for dyadic confidence intervals.
//!
//! Each replication draws a complete directed panel from
//!
//! ```text
//! Y_ij = exp(t1 * R_ij + t2 * W3_i + t3 * W3_j) * A_i * A_j * U_ij
//! ```
//!
//! where `R_ij` is the Euclidean distance between uniform locations on the
//! unit square, `W3_i ~ U(0, 1)`, and `A_i`, `U_ij` are unit-mean lognormals
//! with log-scale `sigma_a` and `sigma`. The regressors are
//! `(R_ij, W3_i, W3_j)`, preceded by an intercept unless
//! [`SimConfig::intercept`] is off. The intercept's true value is zero
//! (both shocks have unit mean) and it is treated as a nuisance parameter:
//! coverage is reported for the three slopes only.
//!
//! Replication `k` draws from its own ChaCha8 stream (`stream = k`) keyed by
//! the master seed. Draw order: per node in index order `x, y, W3, A`; then
//! `U_ij` over ordered pairs in lexicographic order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DyadDataset, Theta};
use crate::fit::{fit_poisson_pml, FitError, FitOptions};
use crate::vcov::{assemble_vcov, sym_scores, wald_ci, Estimator, Sigma1Denominator, VcovError, VcovOptions};

pub const REGRESSOR_NAMES: [&str; 3] = ["dist", "w3_ego", "w3_alter"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub theta_true: [f64; 3],
    /// Log-scale of the dyad shock `U_ij`.
    pub sigma: f64,
    /// Log-scale of the node shock `A_i`.
    pub sigma_a: f64,
    pub n_reps: usize,
    pub nominal_level: f64,
    pub master_seed: u64,
    pub estimators: Vec<Estimator>,
    pub sigma1_denominator: Sigma1Denominator,
    /// Fit with a leading intercept column.
    pub intercept: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_nodes: 200,
            theta_true: [-1.0, -0.5, 0.5],
            sigma: 1.0,
            sigma_a: 0.25,
            n_reps: 1000,
            nominal_level: 0.95,
            master_seed: 0,
            estimators: Estimator::ALL.to_vec(),
            sigma1_denominator: Sigma1Denominator::Printed,
            intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.n_nodes < 3 {
            return bad("n_nodes must be at least 3");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and non-negative");
        }
        if !(self.sigma_a >= 0.0 && self.sigma_a.is_finite()) {
            return bad("sigma_a must be finite and non-negative");
        }
        if !(self.nominal_level > 0.0 && self.nominal_level < 1.0) {
            return bad("nominal_level must lie in (0, 1)");
        }
        if self.n_reps == 0 {
            return bad("n_reps must be at least 1");
        }
        if self.theta_true.iter().any(|t| !t.is_finite()) {
            return bad("theta_true must be finite");
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required");
        }
        Ok(())
    }
}

/// Random stream for one replication.
pub fn replication_rng(master_seed: u64, rep_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep_index);
    rng
}

/// Lognormal draw with mean one: `log X ~ N(-scale^2/2, scale^2)`.
pub fn unit_mean_lognormal<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (scale * z - 0.5 * scale * scale).exp()
}

/// Draws one dataset; returns it with the true coefficients (aligned with
/// the dataset's regressors, so including the zero intercept when present).
pub fn gen_dataset(config: &SimConfig, rep_index: u64) -> (DyadDataset, Theta) {
    let n = config.n_nodes;
    let mut rng = replication_rng(config.master_seed, rep_index);

    let mut loc = Vec::with_capacity(n);
    let mut w3 = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        loc.push((x, y));
        w3.push(rng.random::<f64>());
        a.push(unit_mean_lognormal(&mut rng, config.sigma_a));
    }

    let [t1, t2, t3] = config.theta_true;
    let mut ys = vec![0.0; n * n];
    let mut rs = vec![0.0; n * n * 3];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let u = unit_mean_lognormal(&mut rng, config.sigma);
            let dist = ((loc[i].0 - loc[j].0).powi(2) + (loc[i].1 - loc[j].1).powi(2)).sqrt();
            let idx = i * n + j;
            ys[idx] = (t1 * dist + t2 * w3[i] + t3 * w3[j]).exp() * a[i] * a[j] * u;
            rs[idx * 3..idx * 3 + 3].copy_from_slice(&[dist, w3[i], w3[j]]);
        }
    }

    let labels = (0..n).map(|i| format!("n{i}")).collect();
    let names = REGRESSOR_NAMES.iter().map(|s| s.to_string()).collect();
    let dataset = DyadDataset::from_dense(labels, names, ys, rs)
        .expect("simulated outcomes are finite and non-negative");
    if config.intercept {
        let mut truth = vec![0.0];
        truth.extend(config.theta_true);
        (dataset.with_intercept(), Theta::new(truth).expect("validated"))
    } else {
        (dataset, Theta::new(config.theta_true.to_vec()).expect("validated"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NotConverged,
    NonFiniteLikelihood,
    SingularHessian,
    SingularGamma,
    NegativeVarianceHuber,
    NegativeVarianceDyad,
    NegativeVarianceFg,
    Other,
}

impl FailureReason {
    fn from_fit(e: &FitError) -> Self {
        match e {
            FitError::NotConverged(_) => FailureReason::NotConverged,
            FitError::NonFiniteLikelihood { .. } => FailureReason::NonFiniteLikelihood,
            _ => FailureReason::Other,
        }
    }

    fn from_vcov(e: &VcovError) -> Self {
        match e {
            VcovError::SingularGamma { .. } => FailureReason::SingularGamma,
            VcovError::NegativeVarianceEstimate { estimator, .. } => match estimator {
                Estimator::Huber => FailureReason::NegativeVarianceHuber,
                Estimator::Dyad => FailureReason::NegativeVarianceDyad,
                Estimator::Fg => FailureReason::NegativeVarianceFg,
            },
            VcovError::Likelihood(_) => FailureReason::NonFiniteLikelihood,
            VcovError::DimensionMismatch { .. } => FailureReason::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FailureReason::NotConverged => "not_converged",
            FailureReason::NonFiniteLikelihood => "non_finite_likelihood",
            FailureReason::SingularHessian => "singular_hessian",
            FailureReason::SingularGamma => "singular_gamma",
            FailureReason::NegativeVarianceHuber => "negative_variance_huber",
            FailureReason::NegativeVarianceDyad => "negative_variance_dyad",
            FailureReason::NegativeVarianceFg => "negative_variance_fg",
            FailureReason::Other => "other",
        }
    }
}

/// Interval results of one estimator in one replication, for the slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDraw {
    pub estimator: Estimator,
    pub se: Vec<f64>,
    pub covers: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationDraw {
    /// Slope estimates `(dist, w3_ego, w3_alter)`.
    pub estimates: Vec<f64>,
    pub iterations: usize,
    pub by_estimator: Vec<EstimatorDraw>,
}

impl ReplicationDraw {
    pub fn estimator(&self, est: Estimator) -> Option<&EstimatorDraw> {
        self.by_estimator.iter().find(|d| d.estimator == est)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep_index: u64,
    pub outcome: Result<ReplicationDraw, FailureReason>,
}

/// Generates, fits, and checks interval coverage for one replication.
/// Failures are recorded in the result rather than returned as errors.
pub fn run_replication(config: &SimConfig, rep_index: u64) -> ReplicationResult {
    let outcome = replicate(config, rep_index);
    ReplicationResult { rep_index, outcome }
}

fn replicate(config: &SimConfig, rep_index: u64) -> Result<ReplicationDraw, FailureReason> {
    let (dataset, truth) = gen_dataset(config, rep_index);
    let fit = fit_poisson_pml(&dataset, &FitOptions::default())
        .map_err(|e| FailureReason::from_fit(&e))?;
    if !fit.warnings.is_empty() {
        return Err(FailureReason::SingularHessian);
    }
    let sym = sym_scores(&dataset, &fit.theta_hat).map_err(|e| FailureReason::from_vcov(&e))?;
    let opts = VcovOptions {
        denominator: config.sigma1_denominator,
        estimators: config.estimators.clone(),
    };
    let vcov = assemble_vcov(&fit, &sym, &opts).map_err(|e| FailureReason::from_vcov(&e))?;

    let offset = usize::from(config.intercept);
    let estimates = fit.theta_hat.as_slice()[offset..].to_vec();
    let slopes = &truth.as_slice()[offset..];
    let by_estimator = config
        .estimators
        .iter()
        .map(|&est| {
            let se = vcov.se(est).ok_or(FailureReason::Other)?.as_slice()[offset..].to_vec();
            let covers = wald_ci(&estimates, &se, config.nominal_level)
                .iter()
                .zip(slopes)
                .map(|(&(lo, hi), &t)| lo <= t && t <= hi)
                .collect();
            Ok(EstimatorDraw {
                estimator: est,
                se,
                covers,
            })
        })
        .collect::<Result<_, FailureReason>>()?;
    Ok(ReplicationDraw {
        estimates,
        iterations: fit.iterations,
        by_estimator,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub estimator: Estimator,
    pub hits: usize,
    pub coverage: f64,
    /// `sqrt(c (1 - c) / included)`.
    pub mc_se: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCoverage {
    pub name: String,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    pub coverage: Vec<CoverageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetadata {
    pub regressors: Vec<String>,
    pub intercept: bool,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: SimConfig,
    pub design: DesignMetadata,
    pub n_included: usize,
    pub n_excluded: usize,
    pub failures: BTreeMap<String, usize>,
    pub parameters: Vec<ParameterCoverage>,
}

impl CoverageReport {
    pub fn coverage(&self, parameter: usize, estimator: Estimator) -> Option<&CoverageEntry> {
        self.parameters
            .get(parameter)?
            .coverage
            .iter()
            .find(|c| c.estimator == estimator)
    }
}

/// Runs replications `1..=n_reps` on the current rayon pool and aggregates
/// them in replication order.
pub fn run_coverage(config: &SimConfig) -> Result<CoverageReport, SimError> {
    config.validate()?;
    let results: Vec<ReplicationResult> = (1..=config.n_reps as u64)
        .into_par_iter()
        .map(|k| run_replication(config, k))
        .collect();
    aggregate(config, &results)
}

/// As [`run_coverage`], on a dedicated pool of `threads` workers.
pub fn run_coverage_with_threads(
    config: &SimConfig,
    threads: usize,
) -> Result<CoverageReport, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_coverage(config))
}

pub fn aggregate(
    config: &SimConfig,
    results: &[ReplicationResult],
) -> Result<CoverageReport, SimError> {
    let mut failures = BTreeMap::new();
    let draws: Vec<&ReplicationDraw> = results
        .iter()
        .filter_map(|r| match &r.outcome {
            Ok(d) => Some(d),
            Err(reason) => {
                *failures.entry(reason.name().to_string()).or_insert(0) += 1;
                None
            }
        })
        .collect();
    let included = draws.len();
    if included == 0 {
        return Err(SimError::AllReplicationsFailed(results.len()));
    }
    let m = included as f64;

    let parameters = REGRESSOR_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mean = draws.iter().map(|d| d.estimates[k]).sum::<f64>() / m;
            let sd = if included > 1 {
                (draws
                    .iter()
                    .map(|d| (d.estimates[k] - mean).powi(2))
                    .sum::<f64>()
                    / (m - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            let coverage = config
                .estimators
                .iter()
                .map(|&est| {
                    let picked = draws.iter().map(|d| d.estimator(est).expect("requested"));
                    let hits = picked.clone().filter(|e| e.covers[k]).count();
                    let mean_se = picked.map(|e| e.se[k]).sum::<f64>() / m;
                    let c = hits as f64 / m;
                    CoverageEntry {
                        estimator: est,
                        hits,
                        coverage: c,
                        mc_se: (c * (1.0 - c) / m).sqrt(),
                        mean_se,
                    }
                })
                .collect();
            ParameterCoverage {
                name: name.to_string(),
                true_value: config.theta_true[k],
                mean_estimate: mean,
                sd_estimate: sd,
                coverage,
            }
        })
        .collect();

    Ok(CoverageReport {
        config: config.clone(),
        design: DesignMetadata {
            regressors: REGRESSOR_NAMES.iter().map(|s| s.to_string()).collect(),
            intercept: config.intercept,
            rng: "chacha8, seed=master_seed, stream=rep_index".into(),
        },
        n_included: included,
        n_excluded: results.len() - included,
        failures,
        parameters,
    })
}
