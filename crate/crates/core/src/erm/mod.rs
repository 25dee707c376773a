//! Empirical risk minimization for the squared loss on quadratic measurements.

mod oracle;
mod pgd;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::ensembles::PhaseSample;
use crate::error::{invalid, Result};
use crate::linalg::{dist2, sum_norm2, top_eigenpair};

pub use oracle::solve_oracle;
pub use pgd::solve_pgd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    Fixed {
        step: f64,
    },
    /// Armijo-type backtracking on the projected step; the step shrinks by
    /// `shrink` on rejection and grows by `growth` after a step that passed
    /// the test outright, not only within roundoff.
    Backtracking {
        shrink: f64,
        growth: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Threshold on the norm of the projected-gradient mapping `(x - x+)/t`.
    pub gradient_tolerance: f64,
    pub step_rule: StepRule,
    pub restarts: usize,
    /// Largest number of supports the exhaustive sparse solver may visit.
    pub oracle_budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            gradient_tolerance: 1e-9,
            step_rule: StepRule::Backtracking { shrink: 0.5, growth: 1.1 },
            restarts: 8,
            oracle_budget: 1_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return invalid("max_iterations must be at least 1");
        }
        if self.restarts == 0 {
            return invalid("restarts must be at least 1");
        }
        if !(self.gradient_tolerance >= 0.0) {
            return invalid("gradient_tolerance must be nonnegative");
        }
        match self.step_rule {
            StepRule::Fixed { step } if !(step > 0.0 && step.is_finite()) => {
                invalid(format!("fixed step must be positive, got {step}"))
            }
            StepRule::Backtracking { shrink, growth }
                if !(shrink > 0.0 && shrink < 1.0) || !(growth >= 1.0 && growth.is_finite()) =>
            {
                invalid(format!("backtracking needs 0 < shrink < 1 and growth >= 1, got {shrink}, {growth}"))
            }
            _ => Ok(()),
        }
    }
}

/// Output of one solver call. Error fields are `NaN` when the sample does not
/// carry its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub x_hat: Array1<f64>,
    pub objective_value: f64,
    /// `||x̂ - x0|| ||x̂ + x0||`
    pub product_error: f64,
    /// `min(||x̂ - x0||, ||x̂ + x0||)`
    pub sign_error: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl TrialResult {
    pub(crate) fn new(
        sample: &PhaseSample,
        x_hat: Array1<f64>,
        objective_value: f64,
        iterations_used: usize,
        converged: bool,
    ) -> Self {
        let (product_error, sign_error) = match &sample.x0 {
            Some(x0) => {
                let m = error_metrics(&x_hat, x0).expect("dimensions match");
                (m.product_error, m.sign_error)
            }
            None => (f64::NAN, f64::NAN),
        };
        Self { x_hat, objective_value, product_error, sign_error, iterations_used, converged }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub product_error: f64,
    pub sign_error: f64,
    /// The sign `s` minimizing `||x̂ - s x0||`.
    pub aligned_sign: i8,
}

pub fn error_metrics(x_hat: &Array1<f64>, x0: &Array1<f64>) -> Result<ErrorMetrics> {
    if x_hat.len() != x0.len() {
        return invalid(format!("x_hat has dimension {}, x0 has {}", x_hat.len(), x0.len()));
    }
    let minus = dist2(x_hat.view(), x0.view());
    let plus = sum_norm2(x_hat.view(), x0.view());
    Ok(ErrorMetrics {
        product_error: minus * plus,
        sign_error: minus.min(plus),
        aligned_sign: if minus <= plus { 1 } else { -1 },
    })
}

fn check_x(sample: &PhaseSample, x: &Array1<f64>) -> Result<()> {
    if x.len() != sample.dimension() {
        return invalid(format!("x has dimension {}, sample has {}", x.len(), sample.dimension()));
    }
    Ok(())
}

/// `A x`, touching only the columns where `x` is nonzero when it is sparse.
pub(crate) fn measure(a: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    let support: Vec<usize> = x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
    if support.len() * 4 > x.len() {
        return a.dot(x);
    }
    let mut out = Array1::<f64>::zeros(a.nrows());
    for (row, o) in a.rows().into_iter().zip(out.iter_mut()) {
        let mut s = 0.0;
        for &j in &support {
            s += row[j] * x[j];
        }
        *o = s;
    }
    out
}

pub(crate) fn objective_from(ax: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let n = y.len() as f64;
    ax.iter().zip(y.iter()).map(|(p, yi)| (p * p - yi).powi(2)).sum::<f64>() / n
}

pub(crate) fn gradient_from(a: &Array2<f64>, ax: &Array1<f64>, y: &Array1<f64>) -> Array1<f64> {
    let n = y.len() as f64;
    let c: Array1<f64> = ax.iter().zip(y.iter()).map(|(p, yi)| 4.0 * (p * p - yi) * p / n).collect();
    a.t().dot(&c)
}

/// `(1/N) Σ (<a_i,x>^2 - y_i)^2`
pub fn objective(sample: &PhaseSample, x: &Array1<f64>) -> Result<f64> {
    check_x(sample, x)?;
    Ok(objective_from(&measure(&sample.a, x), &sample.y))
}

/// `(4/N) Σ (<a_i,x>^2 - y_i) <a_i,x> a_i`
pub fn gradient(sample: &PhaseSample, x: &Array1<f64>) -> Result<Array1<f64>> {
    check_x(sample, x)?;
    Ok(gradient_from(&sample.a, &measure(&sample.a, x), &sample.y))
}

/// Splits the excess loss `objective(x) - objective(x0)` into the quadratic
/// part `(1/N) Σ <x-x0,a>^2 <x+x0,a>^2` and the multiplier part
/// `(2/N) Σ w <x-x0,a><x+x0,a>`; the excess loss is their difference.
pub fn excess_loss_parts(sample: &PhaseSample, x: &Array1<f64>, x0: &Array1<f64>) -> Result<(f64, f64)> {
    check_x(sample, x)?;
    check_x(sample, x0)?;
    let Some(w) = &sample.noise else {
        return invalid("the sample does not carry its noise realization");
    };
    let minus = sample.a.dot(&(x - x0));
    let plus = sample.a.dot(&(x + x0));
    let n = sample.n_samples() as f64;
    let (mut quad, mut mult) = (0.0, 0.0);
    for ((m, p), wi) in minus.iter().zip(plus.iter()).zip(w.iter()) {
        let prod = m * p;
        quad += prod * prod;
        mult += wi * prod;
    }
    Ok((quad / n, 2.0 * mult / n))
}

/// `(1/N) Σ y_i a_i a_iᵀ`
pub(crate) fn spectral_matrix(sample: &PhaseSample) -> Array2<f64> {
    let weighted = &sample.a * &sample.y.view().insert_axis(Axis(1));
    weighted.t().dot(&sample.a) / sample.n_samples() as f64
}

pub(crate) fn fix_sign(v: &mut Array1<f64>) {
    if let Some(first) = v.iter().find(|x| **x != 0.0) {
        if *first < 0.0 {
            v.mapv_inplace(|x| -x);
        }
    }
}

/// Leading eigenvector of `(1/N) Σ y_i a_i a_iᵀ` scaled to `sqrt(mean y)`,
/// the moment estimate of `||x0||` for isotropic measurements. The sign is
/// fixed by making the first nonzero coordinate positive. Returns zero when
/// the top eigenvalue or the mean response is not positive.
pub fn spectral_init(sample: &PhaseSample) -> Array1<f64> {
    spectral_init_with(sample, &spectral_matrix(sample)).0
}

/// Returns the initial point together with the top eigenvalue of `m`.
pub(crate) fn spectral_init_with(sample: &PhaseSample, m: &Array2<f64>) -> (Array1<f64>, f64) {
    let n = sample.dimension();
    if m.iter().all(|v| *v == 0.0) {
        return (Array1::zeros(n), 0.0);
    }
    let (lambda, mut v) = top_eigenpair(m, 200, 1e-10);
    let mean_y = sample.y.mean().unwrap_or(0.0);
    if !(lambda > 0.0) || !(mean_y > 0.0) {
        return (Array1::zeros(n), lambda);
    }
    fix_sign(&mut v);
    (v * mean_y.sqrt(), lambda)
}
