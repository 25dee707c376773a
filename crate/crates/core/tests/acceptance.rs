use std::time::{Duration, Instant};

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use phaselab::empirics::{run_suite, CheckSuite};
use phaselab::ensembles::{generate_sample, Ensemble, NoiseModel};
use phaselab::erm::{excess_loss_parts, gradient, objective, solve_oracle, solve_pgd, SolverConfig};
use phaselab::harness::{
    fit_slope, predict_rate_l1, predict_rate_sparse, run_experiment, ExperimentConfig, Regime, SignalSpec,
    SolverChoice, XAxis, YStat,
};
use phaselab::rng;
use phaselab::sets::{
    fixed_point, mean_width_closed_form, mean_width_mc, Backend, ConstraintSet, FixedPointQuery, Functional,
    MonteCarloConfig,
};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn sparse_config(n_grid: Vec<usize>, sigma_grid: Vec<f64>, r0: f64) -> ExperimentConfig {
    ExperimentConfig {
        set: ConstraintSet::sparse(64, 4).unwrap(),
        ensemble: Ensemble::gaussian(64).unwrap(),
        noise: NoiseModel::gaussian(1.0).unwrap(),
        x0_spec: SignalSpec::RandomSparse { d: 4, r0 },
        n_grid,
        sigma_grid,
        trials_per_cell: 50,
        solver: SolverChoice::Pgd { config: SolverConfig { restarts: 8, ..SolverConfig::default() } },
        master_seed: 2024,
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn criterion_1() -> Verdict {
    let (n, d) = (64.0_f64, 4.0_f64);
    let n_samples = (10.0 * d * (std::f64::consts::E * n / d).ln()).ceil() as usize;
    let config = ExperimentConfig {
        noise: NoiseModel::none(),
        n_grid: vec![n_samples],
        sigma_grid: vec![0.0],
        trials_per_cell: 100,
        solver: SolverChoice::Oracle { config: SolverConfig::default() },
        master_seed: 1,
        ..sparse_config(vec![], vec![], 1.0)
    };
    let start = Instant::now();
    let table = run_experiment(&config).unwrap();
    let elapsed = start.elapsed();
    let successes = table.rows.iter().filter(|r| r.sign_error <= 1e-6).count();
    verdict(
        successes >= 95 && within(elapsed, 300),
        format!("N={n_samples}: {successes}/100 exact recoveries in {:.0}s", elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Verdict {
    let config = sparse_config((9..=13).map(|k| 1 << k).collect(), vec![0.5], 1.0);
    let start = Instant::now();
    let table = run_experiment(&config).unwrap();
    let elapsed = start.elapsed();
    let fit = fit_slope(&table, XAxis::N, YStat::MedianProductError).unwrap();
    let nc: usize = table.summaries.iter().map(|s| s.non_converged).sum();
    verdict(
        (-0.65..=-0.35).contains(&fit.slope) && within(elapsed, 1800),
        format!("slope {:.4} (r² {:.3}), {nc} non-converged, {:.0}s", fit.slope, fit.r_squared, elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> Verdict {
    let sigmas = vec![0.1, 0.2, 0.4, 0.8];
    let large_signal =
        sigmas.iter().all(|&s| predict_rate_sparse(64, 4, 4096, s, 1.0).unwrap().regime == Regime::LargeSignalSN);
    let table = run_experiment(&sparse_config(vec![4096], sigmas, 1.0)).unwrap();
    let fit = fit_slope(&table, XAxis::Sigma, YStat::MedianProductError).unwrap();
    verdict(
        large_signal && (0.75..=1.25).contains(&fit.slope),
        format!("slope {:.4} (r² {:.3}), large-signal regime: {large_signal}", fit.slope, fit.r_squared),
    )
}

fn criterion_4() -> Verdict {
    let table = run_experiment(&sparse_config(vec![4096], vec![0.1, 0.2, 0.4, 0.8], 0.0)).unwrap();
    let fit = fit_slope(&table, XAxis::Sigma, YStat::MedianSignError).unwrap();
    verdict((0.35..=0.65).contains(&fit.slope), format!("slope {:.4} (r² {:.3})", fit.slope, fit.r_squared))
}

fn criterion_5() -> Verdict {
    let singleton = ConstraintSet::sparse(1, 1).unwrap();
    let est = mean_width_mc(&singleton, 1.0, 10_000, 5).unwrap();
    let exact = (2.0 / std::f64::consts::PI).sqrt();
    let z = (est.value - exact) / est.std_error;
    let mut ok = z.abs() <= 4.0;

    let grids = [
        (ConstraintSet::l1_ball(256, 1.0).unwrap(), vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0]),
        (ConstraintSet::l1_ball(1000, 2.0).unwrap(), vec![0.05, 0.5, 5.0]),
        (ConstraintSet::sparse(256, 8).unwrap(), vec![0.1, 1.0, 10.0]),
        (ConstraintSet::sparse(1000, 40).unwrap(), vec![0.5, 2.0]),
    ];
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for (set, rs) in &grids {
        for &r in rs {
            let mc = mean_width_mc(set, r, 2000, 6).unwrap().value;
            let ratio = mc / mean_width_closed_form(set, r).unwrap();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            ok &= (0.25..=4.0).contains(&ratio);
        }
    }
    verdict(ok, format!("singleton z-score {z:.2}; MC/closed-form ratios in [{lo:.3}, {hi:.3}]"))
}

fn criterion_6() -> Verdict {
    let combos: [(usize, usize, f64); 10] = [
        (20, 1000, 1.0),
        (200, 1000, 1.0),
        (2000, 100, 1.0),
        (20, 100_000, 2.0),
        (1000, 400, 0.5),
        (5, 1000, 1.0),
        (3000, 50, 2.0),
        (10, 10_000, 3.0),
        (4000, 20, 1.0),
        (100, 100, 3.0),
    ];
    let mc = MonteCarloConfig { draws: 1000, iterations: 40, seed: 6, ..Default::default() };
    let (mut ok, mut lo, mut hi, mut zeros) = (true, f64::INFINITY, 0.0_f64, 0);
    let mut log_branch = [0usize; 3];
    for (n, n_samples, level) in combos {
        let set = ConstraintSet::l1_ball(n, 1.0).unwrap();
        let (nf, nn) = (n as f64, n_samples as f64);
        let branches =
            [nf > level * level * nn, nf >= level * nn.sqrt(), nf >= level.powf(2.0 / 3.0) * nn.powf(1.0 / 3.0)];
        for (k, f) in [Functional::RN, Functional::SN, Functional::VN].into_iter().enumerate() {
            log_branch[k] += branches[k] as usize;
            let closed =
                fixed_point(&set, &FixedPointQuery::new(f, level, n_samples, Backend::ClosedForm), &mc).unwrap();
            let sim = fixed_point(&set, &FixedPointQuery::new(f, level, n_samples, Backend::MonteCarlo), &mc).unwrap();
            if closed == 0.0 && sim == 0.0 {
                zeros += 1;
                continue;
            }
            let ratio = sim / closed;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            ok &= (0.25..=4.0).contains(&ratio);
        }
    }
    let spans = log_branch.iter().all(|&c| c > 0 && c < combos.len());
    verdict(
        ok && spans,
        format!(
            "ratios in [{lo:.3}, {hi:.3}], {zeros} agreeing zeros, log-branch counts rN/sN/vN {:?} of 10",
            log_branch
        ),
    )
}

fn criterion_7() -> Verdict {
    let outcomes = run_suite(CheckSuite::All, 7);
    let passed = outcomes.iter().all(|o| o.passed);
    let detail = outcomes.iter().map(|o| o.to_string()).collect::<Vec<_>>().join("; ");
    verdict(passed, detail)
}

fn random_vector<R: Rng>(n: usize, rng: &mut R) -> Array1<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn criterion_8() -> Verdict {
    let config = SolverConfig::default();
    let (mut worst_grad, mut worst_excess, mut oracle_wins) = (0.0_f64, 0.0_f64, 0);
    for i in 0..100u64 {
        let mut rng = rng::stream(8, &[i]);
        let sparse = i % 2 == 0;
        let (n, n_samples) = if sparse { (10, 40) } else { (8, 60) };
        let set = if sparse { ConstraintSet::sparse(n, 2).unwrap() } else { ConstraintSet::l1_ball(n, 1.0).unwrap() };
        let mut x0 = Array1::zeros(n);
        if sparse {
            x0[(i as usize / 2) % n] = 0.8;
            x0[(i as usize / 2 + 3) % n] = -0.5;
        } else {
            let g = random_vector(n, &mut rng);
            x0 = &g * (0.9 / g.mapv(f64::abs).sum());
        }
        let noise = NoiseModel::gaussian(0.3).unwrap();
        let sample = generate_sample(&x0, &Ensemble::gaussian(n).unwrap(), &noise, n_samples, i).unwrap();

        let x = random_vector(n, &mut rng);
        let g = gradient(&sample, &x).unwrap();
        let mut fd = Array1::zeros(n);
        for j in 0..n {
            let h = 1e-5 * x[j].abs().max(1.0);
            let (mut up, mut down) = (x.clone(), x.clone());
            up[j] += h;
            down[j] -= h;
            fd[j] = (objective(&sample, &up).unwrap() - objective(&sample, &down).unwrap()) / (2.0 * h);
        }
        let norm = |v: &Array1<f64>| v.dot(v).sqrt();
        worst_grad = worst_grad.max(norm(&(&fd - &g)) / norm(&g));

        let (quad, mult) = excess_loss_parts(&sample, &x, &x0).unwrap();
        let (fx, f0) = (objective(&sample, &x).unwrap(), objective(&sample, &x0).unwrap());
        let scale = fx.abs() + f0.abs();
        worst_excess = worst_excess.max(((fx - f0) - (quad - mult)).abs() / scale);

        let pgd = solve_pgd(&sample, &set, &config, i).unwrap();
        let oracle = solve_oracle(&sample, &set, &config, i).unwrap();
        oracle_wins += (oracle.objective_value <= pgd.objective_value) as usize;
    }
    verdict(
        worst_grad <= 1e-5 && worst_excess <= 1e-10 && oracle_wins == 100,
        format!(
            "worst gradient error {worst_grad:.2e}, worst excess-loss error {worst_excess:.2e}, oracle <= pgd on {oracle_wins}/100"
        ),
    )
}

fn criterion_9() -> Verdict {
    let (n, n_samples, sigma, r0) = (64, 4096, 0.5, 1.0);
    let set = ConstraintSet::l1_ball(n, 1.0).unwrap();
    let config = ExperimentConfig {
        set,
        ensemble: Ensemble::gaussian(n).unwrap(),
        noise: NoiseModel::gaussian(1.0).unwrap(),
        x0_spec: SignalSpec::RandomOnShell { r0 },
        n_grid: vec![n_samples],
        sigma_grid: vec![sigma],
        trials_per_cell: 50,
        solver: SolverChoice::Pgd { config: SolverConfig { restarts: 8, ..SolverConfig::default() } },
        master_seed: 9,
    };
    let table = run_experiment(&config).unwrap();
    let observed = table.summaries[0].median_sign_error;

    let upper = predict_rate_l1(n, n_samples, sigma, r0).unwrap();
    let mc = MonteCarloConfig { seed: 9, ..Default::default() };
    let packing = |f: Functional, level: f64| {
        let q = FixedPointQuery::new(f, level, n_samples, Backend::MonteCarlo).with_shell(r0);
        fixed_point(&set, &q, &mc).unwrap()
    };
    let t = packing(Functional::TN, 1.0 / sigma);
    let lower = if r0 >= t { packing(Functional::QN, r0 / sigma) } else { t };
    let ok = lower / 32.0 <= observed && observed <= 32.0 * upper.rate;
    verdict(
        ok,
        format!(
            "lower {lower:.4} (tN* {t:.4}), observed median {observed:.5}, upper {:.4} ({})",
            upper.rate, upper.regime
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Verdict);

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "noise-free exact recovery", criterion_1),
        (2, "N-scaling", criterion_2),
        (3, "sigma-linearity", criterion_3),
        (4, "small-signal exponent halving", criterion_4),
        (5, "width estimator calibration", criterion_5),
        (6, "fixed-point consistency", criterion_6),
        (7, "deterministic lemma suite", criterion_7),
        (8, "solver correctness plumbing", criterion_8),
        (9, "minimax sandwich", criterion_9),
    ];
    let mut failed = 0;
    for (k, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        failed += !v.passed as usize;
        println!(
            "criterion {k} ({name}): {} [{:.0}s] {}",
            if v.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
