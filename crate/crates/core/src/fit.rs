//! Damped Newton maximization of the composite log-likelihood.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::{DyadDataset, Theta};
use crate::linalg::pseudo_inverse;
use crate::pml::{composite_hessian, composite_loglik, composite_score, PmlError};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the infinity norm of `S_N`.
    pub gradient_tolerance: f64,
    pub step_halving_max: usize,
    pub initial_theta: Option<Theta>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            step_halving_max: 30,
            initial_theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// The Hessian was rank deficient at an intermediate iterate; a
    /// pseudo-inverse step was taken.
    SingularHessian { iteration: usize, rank: usize },
    /// The Hessian is rank deficient at the reported estimate. Variance
    /// estimation will fail.
    SingularHessianAtOptimum { rank: usize },
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::SingularHessian { iteration, rank } => write!(
                f,
                "singular Hessian (rank {rank}) at iteration {iteration}; used pseudo-inverse step"
            ),
            FitWarning::SingularHessianAtOptimum { rank } => {
                write!(f, "singular Hessian (rank {rank}) at the estimate")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub converged: bool,
    /// Accepted Newton steps.
    pub iterations: usize,
    pub final_score_norm: f64,
    /// `-H_N(theta_hat)`.
    pub gamma_hat: DMatrix<f64>,
    pub loglik_at_optimum: f64,
    /// Composite log-likelihood at the start value and after every accepted step.
    pub loglik_trace: Vec<f64>,
    pub warnings: Vec<FitWarning>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid fit options: {0}")]
    InvalidOptions(String),
    #[error("initial theta has length {found}, dataset has {expected} regressors")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("all outcomes are zero; the intercept start value log(mean y) does not exist")]
    AllZeroOutcomes,
    #[error("likelihood evaluation failed at iteration {iteration}: {source}")]
    NonFiniteLikelihood {
        iteration: usize,
        #[source]
        source: PmlError,
    },
    #[error("did not converge after {} iterations (score norm {:.3e})", .0.iterations, .0.final_score_norm)]
    NotConverged(Box<FitResult>),
}

impl FitOptions {
    fn validate(&self) -> Result<(), FitError> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(FitError::InvalidOptions(
                "gradient_tolerance must be positive".into(),
            ));
        }
        if self.max_iterations == 0 || self.step_halving_max == 0 {
            return Err(FitError::InvalidOptions(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Allowed loss of log-likelihood per accepted step, attributed to rounding.
fn ascent_slack(loglik: f64) -> f64 {
    1e-12 * (1.0 + loglik.abs())
}

fn start_value(dataset: &DyadDataset, options: &FitOptions) -> Result<Theta, FitError> {
    let p = dataset.n_regressors();
    if let Some(t) = &options.initial_theta {
        if t.len() != p {
            return Err(FitError::DimensionMismatch {
                expected: p,
                found: t.len(),
            });
        }
        return Ok(t.clone());
    }
    let mut start = vec![0.0; p];
    if let Some(c) = dataset.intercept_column() {
        let mean = dataset.mean_outcome();
        if mean <= 0.0 {
            return Err(FitError::AllZeroOutcomes);
        }
        start[c] = mean.ln();
    }
    Ok(Theta::new(start).expect("finite start"))
}

/// Maximizes the Poisson composite log-likelihood by Newton's method with
/// step halving.
///
/// On hitting the iteration cap (or stalling) the partial result is returned
/// inside [`FitError::NotConverged`].
pub fn fit_poisson_pml(dataset: &DyadDataset, options: &FitOptions) -> Result<FitResult, FitError> {
    options.validate()?;
    let mut theta = start_value(dataset, options)?;
    let p = theta.len();
    let mut loglik = composite_loglik(dataset, &theta)
        .map_err(|source| FitError::NonFiniteLikelihood { iteration: 0, source })?;
    let mut trace = vec![loglik];
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut score_norm;

    loop {
        let score = composite_score(dataset, &theta).map_err(|source| {
            FitError::NonFiniteLikelihood {
                iteration: iterations,
                source,
            }
        })?;
        score_norm = score.amax();
        if score_norm <= options.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations >= options.max_iterations {
            break;
        }

        let hessian = composite_hessian(dataset, &theta).map_err(|source| {
            FitError::NonFiniteLikelihood {
                iteration: iterations,
                source,
            }
        })?;
        let pinv = pseudo_inverse(&(-hessian));
        if pinv.rank < p {
            warnings.push(FitWarning::SingularHessian {
                iteration: iterations,
                rank: pinv.rank,
            });
        }
        // theta - H^+ S == theta + (-H)^+ S
        let direction: DVector<f64> = &pinv.inverse * &score;

        let mut step = 1.0;
        let mut accepted = None;
        let mut last_error = None;
        let mut any_finite = false;
        for _ in 0..=options.step_halving_max {
            let candidate: Vec<f64> = theta
                .as_slice()
                .iter()
                .zip(direction.iter())
                .map(|(t, d)| t + step * d)
                .collect();
            if let Some(candidate) = Theta::new(candidate) {
                match composite_loglik(dataset, &candidate) {
                    Ok(value) => {
                        any_finite = true;
                        if value >= loglik - ascent_slack(loglik) {
                            accepted = Some((candidate, value));
                            break;
                        }
                    }
                    Err(e) => last_error = Some(e),
                }
            }
            step *= 0.5;
        }

        match accepted {
            Some((candidate, value)) => {
                theta = candidate;
                loglik = value;
                trace.push(value);
                iterations += 1;
            }
            None => {
                if let (false, Some(source)) = (any_finite, last_error) {
                    return Err(FitError::NonFiniteLikelihood {
                        iteration: iterations,
                        source,
                    });
                }
                break;
            }
        }
    }

    let gamma_hat = -composite_hessian(dataset, &theta).map_err(|source| {
        FitError::NonFiniteLikelihood {
            iteration: iterations,
            source,
        }
    })?;
    let rank = pseudo_inverse(&gamma_hat).rank;
    if rank < p {
        warnings.push(FitWarning::SingularHessianAtOptimum { rank });
    }

    let result = FitResult {
        theta_hat: theta,
        converged,
        iterations,
        final_score_norm: score_norm,
        gamma_hat,
        loglik_at_optimum: loglik,
        loglik_trace: trace,
        warnings,
    };
    if converged {
        Ok(result)
    } else {
        Err(FitError::NotConverged(Box::new(result)))
    }
}
