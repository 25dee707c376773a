use std::ops::Range;

use ndarray::Array1;

use super::{
    gradient_from, measure, objective_from, spectral_init_with, spectral_matrix, SolverConfig, StepRule, TrialResult,
};
use crate::ensembles::{gaussian_vector, PhaseSample};
use crate::error::{invalid, Result};
use crate::linalg::norm2;
use crate::rng::{self, tag};
use crate::sets::{contains, project, ConstraintSet};

pub(crate) struct Run {
    pub x: Array1<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Rescales `x` to the best multiple `s x`, `s >= 0`, of the quartic objective:
/// `s^2 = Σ y p^2 / Σ p^4` with `p = A x`.
pub(crate) fn line_scale(sample: &PhaseSample, x: &Array1<f64>) -> Array1<f64> {
    let p = measure(&sample.a, x);
    let (mut num, mut den) = (0.0, 0.0);
    for (pi, yi) in p.iter().zip(sample.y.iter()) {
        let p2 = pi * pi;
        num += yi * p2;
        den += p2 * p2;
    }
    if den > 0.0 && num > 0.0 {
        x * (num / den).sqrt()
    } else {
        Array1::zeros(x.len())
    }
}

/// Rounding error of an objective evaluation: summing `N` terms costs about
/// `eps sqrt(N) |f|`, and each residual `p^2 - y` carries an error of about
/// `eps |y|`. Objective changes below this are not used to reject steps.
pub(crate) fn roundoff_slack(f: f64, y_scale: f64, n_samples: usize) -> f64 {
    4.0 * f64::EPSILON * ((n_samples as f64).sqrt() * f.abs() + f.abs().sqrt() * y_scale)
}

fn y_scale(sample: &PhaseSample) -> f64 {
    sample.y.iter().map(|v| v.abs()).sum::<f64>() / sample.n_samples().max(1) as f64
}

/// Projected gradient descent from `start` (assumed feasible). Steps are
/// accepted when they do not increase the objective beyond roundoff.
pub(crate) fn descend(
    sample: &PhaseSample,
    set: &ConstraintSet,
    config: &SolverConfig,
    start: Array1<f64>,
    step0: f64,
) -> Run {
    let (a, y) = (&sample.a, &sample.y);
    let mut x = start;
    let mut ax = measure(a, &x);
    let mut fx = objective_from(&ax, y);
    let mut t = step0;
    let (scale, big_n) = (y_scale(sample), sample.n_samples());
    for it in 1..=config.max_iterations {
        let g = gradient_from(a, &ax, y);
        let slack = roundoff_slack(fx, scale, big_n);
        // `clear`: the step passed the sufficient-decrease test without the slack
        let (xp, axp, fxp, d_norm, clear) = loop {
            let xp = project(set, &(&x - &(&g * t))).expect("dimension checked");
            let d = &xp - &x;
            let axp = measure(a, &xp);
            let fxp = objective_from(&axp, y);
            let d_norm = norm2(d.view());
            match config.step_rule {
                StepRule::Fixed { .. } => break (xp, axp, fxp, d_norm, true),
                StepRule::Backtracking { shrink, .. } => {
                    let bound = fx + g.dot(&d) + d_norm * d_norm / (2.0 * t);
                    // the final clause stops shrinking once steps no longer move x
                    if fxp <= bound + slack || d_norm == 0.0 || t < 1e-300 {
                        break (xp, axp, fxp, d_norm, fxp <= bound);
                    }
                    t *= shrink;
                }
            }
        };
        let mapping = d_norm / t;
        if fxp <= fx + slack || matches!(config.step_rule, StepRule::Fixed { .. }) {
            x = xp;
            ax = axp;
            fx = fxp;
        }
        if mapping <= config.gradient_tolerance {
            return Run { x, f: fx, iterations: it, converged: true };
        }
        if let (StepRule::Backtracking { growth, .. }, true) = (config.step_rule, clear) {
            t *= growth;
        }
        if !fx.is_finite() {
            break;
        }
    }
    Run { x, f: fx, iterations: config.max_iterations, converged: false }
}

/// Initial step and spectral start shared by the solvers.
pub(crate) fn setup(sample: &PhaseSample, set: &ConstraintSet) -> (Array1<f64>, f64) {
    let m = spectral_matrix(sample);
    let (init, lambda) = spectral_init_with(sample, &m);
    (project(set, &init).expect("dimension checked"), initial_step(sample, lambda))
}

/// `0.1 / λ1(M)`, or `0.1 / mean ||a_i||^2` when `M` carries no spectral information.
fn initial_step(sample: &PhaseSample, lambda: f64) -> f64 {
    if lambda > 0.0 {
        0.1 / lambda
    } else {
        let rows = sample.a.iter().map(|v| v * v).sum::<f64>() / sample.n_samples() as f64;
        0.1 / rows.max(f64::MIN_POSITIVE)
    }
}

pub(crate) fn check_inputs(sample: &PhaseSample, set: &ConstraintSet, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    set.validate()?;
    if sample.dimension() != set.dimension() {
        return invalid(format!("sample has dimension {}, set has {}", sample.dimension(), set.dimension()));
    }
    if sample.n_samples() == 0 {
        return invalid("sample is empty");
    }
    Ok(())
}

/// Runs the starts with indices in `ks`: start 0 is the projected spectral
/// initialization, start `k >= 1` a projected gaussian direction scaled to
/// the same norm. Every start is first rescaled along its ray to the best
/// multiple. Start `k` depends only on `(seed, k)`.
pub(crate) fn restart_runs(
    sample: &PhaseSample,
    set: &ConstraintSet,
    config: &SolverConfig,
    ks: Range<usize>,
    seed: u64,
) -> Vec<Run> {
    let n = sample.dimension();
    let (init, step0) = setup(sample, set);
    let init_norm = norm2(init.view());
    ks.map(|k| {
        let start = if k == 0 {
            init.clone()
        } else {
            let g = gaussian_vector(n, &mut rng::stream(seed, &[tag::RESTART, k as u64]));
            let p = project(set, &g).expect("dimension checked");
            let np = norm2(p.view());
            if np > 0.0 {
                p * (init_norm.max(1e-3) / np)
            } else {
                p
            }
        };
        let start = project(set, &line_scale(sample, &project(set, &start).expect("dimension checked")))
            .expect("dimension checked");
        descend(sample, set, config, start, step0)
    })
    .collect()
}

/// Lowest objective; among runs tied to roundoff a converged one is preferred.
fn select(runs: Vec<Run>, sample: &PhaseSample) -> (Run, usize) {
    let scale = y_scale(sample);
    let total = runs.iter().map(|r| r.iterations).sum();
    let mut best: Option<Run> = None;
    for run in runs {
        let better = best.as_ref().is_none_or(|b| {
            let slack = roundoff_slack(b.f, scale, sample.n_samples());
            run.f < b.f - slack || (run.f <= b.f + slack && run.converged && !b.converged)
        });
        if better {
            best = Some(run);
        }
    }
    (best.expect("at least one start"), total)
}

/// Best run over the first `restarts` starts of [`restart_runs`].
pub(crate) fn best_of_restarts(
    sample: &PhaseSample,
    set: &ConstraintSet,
    config: &SolverConfig,
    restarts: usize,
    seed: u64,
) -> (Run, usize) {
    select(restart_runs(sample, set, config, 0..restarts, seed), sample)
}

/// Projected gradient descent with restarts; see [`SolverConfig`]. The
/// returned point always lies in `set`. Non-convergence is reported through
/// `converged`, not as an error.
pub fn solve_pgd(sample: &PhaseSample, set: &ConstraintSet, config: &SolverConfig, seed: u64) -> Result<TrialResult> {
    check_inputs(sample, set, config)?;
    let (run, total) = best_of_restarts(sample, set, config, config.restarts, seed);
    debug_assert!(contains(set, &run.x, 1e-8));
    Ok(TrialResult::new(sample, run.x, run.f, total, run.converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{generate_sample, random_unit_vector, Ensemble, NoiseModel};
    use crate::erm::objective;
    use ndarray::array;

    #[test]
    fn zero_signal_gives_zero_objective() {
        let e = Ensemble::gaussian(5).unwrap();
        let s = generate_sample(&Array1::zeros(5), &e, &NoiseModel::none(), 20, 1).unwrap();
        for set in [
            ConstraintSet::sparse(5, 2).unwrap(),
            ConstraintSet::l1_ball(5, 1.0).unwrap(),
            ConstraintSet::ambient(5).unwrap(),
        ] {
            let r = solve_pgd(&s, &set, &SolverConfig::default(), 3).unwrap();
            assert_eq!(r.objective_value, 0.0);
            assert!(r.converged);
        }
    }

    #[test]
    fn ambient_two_dimensional_recovery() {
        let e = Ensemble::gaussian(2).unwrap();
        let x0 = array![1.0, 0.0];
        let s = generate_sample(&x0, &e, &NoiseModel::none(), 200, 5).unwrap();
        let r = solve_pgd(&s, &ConstraintSet::ambient(2).unwrap(), &SolverConfig::default(), 1).unwrap();
        assert!(r.sign_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn sparse_noise_free_recovery_rate() {
        let (n, d, big_n) = (16, 2, 120);
        let e = Ensemble::gaussian(n).unwrap();
        let set = ConstraintSet::sparse(n, d).unwrap();
        let mut ok = 0;
        for trial in 0..100u64 {
            let mut r = rng::stream(trial, &[tag::SIGNAL]);
            let mut x0 = Array1::zeros(n);
            let dir = random_unit_vector(d, &mut r);
            x0[(trial as usize) % n] = dir[0];
            x0[(trial as usize * 7 + 3) % n] = dir[1];
            let s = generate_sample(&x0, &e, &NoiseModel::none(), big_n, trial).unwrap();
            let res = solve_pgd(&s, &set, &SolverConfig::default(), trial).unwrap();
            assert!(contains(&set, &res.x_hat, 1e-8));
            if res.sign_error <= 1e-6 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn backtracking_descent_is_monotone() {
        let e = Ensemble::gaussian(8).unwrap();
        let x0 = array![1.0, -0.5, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0];
        let s = generate_sample(&x0, &e, &NoiseModel::gaussian(0.3).unwrap(), 60, 2).unwrap();
        let set = ConstraintSet::l1_ball(8, 1.5).unwrap();
        let cfg = SolverConfig::default();
        let (start, step0) = setup(&s, &set);
        let mut x = start;
        let mut f = objective(&s, &x).unwrap();
        for _ in 0..30 {
            let one = SolverConfig { max_iterations: 1, ..cfg };
            let run = descend(&s, &set, &one, x.clone(), step0);
            assert!(run.f <= f + roundoff_slack(f, y_scale(&s), 60));
            assert!(contains(&set, &run.x, 1e-12));
            x = run.x;
            f = run.f;
        }
    }

    #[test]
    fn more_restarts_never_hurt() {
        let e = Ensemble::gaussian(10).unwrap();
        let x0 = array![0.3, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let s = generate_sample(&x0, &e, &NoiseModel::gaussian(1.0).unwrap(), 25, 8).unwrap();
        let set = ConstraintSet::sparse(10, 2).unwrap();
        let few = solve_pgd(&s, &set, &SolverConfig { restarts: 2, ..Default::default() }, 4).unwrap();
        let many = solve_pgd(&s, &set, &SolverConfig { restarts: 6, ..Default::default() }, 4).unwrap();
        assert!(many.objective_value <= few.objective_value + roundoff_slack(few.objective_value, y_scale(&s), 25));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let s = PhaseSample::from_observations(array![[1.0, 0.0]], array![1.0]).unwrap();
        let set = ConstraintSet::ambient(2).unwrap();
        let bad = SolverConfig { restarts: 0, ..Default::default() };
        assert!(solve_pgd(&s, &set, &bad, 0).is_err());
        let bad = SolverConfig { step_rule: StepRule::Fixed { step: 0.0 }, ..Default::default() };
        assert!(solve_pgd(&s, &set, &bad, 0).is_err());
        assert!(solve_pgd(&s, &ConstraintSet::ambient(3).unwrap(), &SolverConfig::default(), 0).is_err());
    }
}
