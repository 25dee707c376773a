use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{generate_sample, Ensemble, NoiseKind, NoiseModel};
use crate::erm::{solve_oracle, solve_pgd, SolverConfig, TrialResult};
use crate::error::{invalid, Error, Result};
use crate::linalg::median;
use crate::rng::{self, tag};
use crate::sets::{contains, sample_shell_point, ConstraintSet};

/// How the ground truth of each trial is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Explicit {
        vector: Vec<f64>,
    },
    /// A random member of the set with `||x0|| = r0`.
    RandomOnShell {
        r0: f64,
    },
    /// Uniform random support of size `d`, gaussian entries, `||x0|| = r0`.
    RandomSparse {
        d: usize,
        r0: f64,
    },
}

impl SignalSpec {
    fn norm(&self) -> f64 {
        match self {
            Self::Explicit { vector } => vector.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Self::RandomOnShell { r0 } | Self::RandomSparse { r0, .. } => *r0,
        }
    }

    fn draw(&self, set: &ConstraintSet, seed: u64) -> Result<Array1<f64>> {
        let mut rng = rng::stream(seed, &[tag::SIGNAL]);
        match self {
            Self::Explicit { vector } => Ok(Array1::from_vec(vector.clone())),
            Self::RandomOnShell { r0 } => sample_shell_point(set, *r0, &mut rng)
                .ok_or_else(|| Error::InvalidArgument(format!("no member of {set} has norm {r0}"))),
            Self::RandomSparse { d, r0 } => {
                let sparse = ConstraintSet::sparse(set.dimension(), *d)?;
                Ok(sample_shell_point(&sparse, *r0, &mut rng).expect("sparse shells are nonempty"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverChoice {
    Pgd {
        #[serde(default)]
        config: SolverConfig,
    },
    Oracle {
        #[serde(default)]
        config: SolverConfig,
    },
}

impl SolverChoice {
    pub fn config(&self) -> &SolverConfig {
        match self {
            Self::Pgd { config } | Self::Oracle { config } => config,
        }
    }
}

/// A grid experiment: every `(N, σ)` cell runs `trials_per_cell` trials.
/// Trial `t` uses the same seed in every cell, so cells differ only in
/// sample size and noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub set: ConstraintSet,
    pub ensemble: Ensemble,
    /// Noise distribution; its scale is replaced by each entry of `sigma_grid`.
    pub noise: NoiseModel,
    pub x0_spec: SignalSpec,
    #[serde(alias = "N_grid")]
    pub n_grid: Vec<usize>,
    pub sigma_grid: Vec<f64>,
    pub trials_per_cell: usize,
    pub solver: SolverChoice,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.set.validate()?;
        self.ensemble.validate()?;
        self.noise.validate()?;
        self.solver.config().validate()?;
        if self.ensemble.dimension != self.set.dimension() {
            return invalid(format!(
                "ensemble dimension {} differs from set dimension {}",
                self.ensemble.dimension,
                self.set.dimension()
            ));
        }
        if self.n_grid.is_empty() || self.sigma_grid.is_empty() {
            return invalid("n_grid and sigma_grid must be nonempty");
        }
        if self.n_grid.contains(&0) {
            return invalid("every entry of n_grid must be positive");
        }
        for &s in &self.sigma_grid {
            if !(s >= 0.0) || !s.is_finite() {
                return invalid(format!("sigma must be a nonnegative finite number, got {s}"));
            }
            if s > 0.0 && self.noise.kind == NoiseKind::None {
                return invalid("a positive sigma needs a noise kind other than `none`");
            }
        }
        if self.trials_per_cell == 0 {
            return invalid("trials_per_cell must be at least 1");
        }
        match &self.x0_spec {
            SignalSpec::Explicit { vector } => {
                if !contains(&self.set, &Array1::from_vec(vector.clone()), 1e-9) {
                    return invalid(format!("explicit x0 is not a member of {}", self.set));
                }
            }
            SignalSpec::RandomOnShell { r0 } => {
                if !(*r0 >= 0.0) || !r0.is_finite() {
                    return invalid(format!("r0 must be a nonnegative finite number, got {r0}"));
                }
                if *r0 > self.set.max_norm() {
                    return invalid(format!("no member of {} has norm {r0}", self.set));
                }
            }
            SignalSpec::RandomSparse { d, r0 } => {
                if !(*r0 >= 0.0) || !r0.is_finite() {
                    return invalid(format!("r0 must be a nonnegative finite number, got {r0}"));
                }
                if *d == 0 || *d > self.set.dimension() {
                    return invalid(format!("random_sparse needs 1 <= d <= n, got d = {d}"));
                }
                if let ConstraintSet::SparseCap { d: cap, .. } = self.set {
                    if *d > cap {
                        return invalid(format!("random_sparse d = {d} exceeds the cap sparsity {cap}"));
                    }
                } else if !matches!(self.set, ConstraintSet::Ambient { .. }) && *r0 > 0.0 {
                    // a sparse draw need not lie in a ball; check the worst case
                    let worst = match self.set {
                        ConstraintSet::L1Ball { radius, .. } => (*d as f64).sqrt() * r0 <= radius,
                        ConstraintSet::L2Ball { radius, .. } => *r0 <= radius,
                        _ => true,
                    };
                    if !worst {
                        return invalid(format!("random_sparse draws with d = {d}, r0 = {r0} can leave {}", self.set));
                    }
                }
            }
        }
        Ok(())
    }

    fn cells(&self) -> Vec<CellKey> {
        let r0 = self.x0_spec.norm();
        self.n_grid
            .iter()
            .flat_map(|&n_samples| self.sigma_grid.iter().map(move |&sigma| CellKey { n_samples, sigma, r0 }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub sigma: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
}

/// One trial. Column order matches the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub sigma: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub trial: usize,
    pub product_error: f64,
    pub sign_error: f64,
    pub objective: f64,
    pub converged: bool,
}

impl ResultRow {
    fn cell(&self) -> CellKey {
        CellKey { n_samples: self.n_samples, sigma: self.sigma, r0: self.r0 }
    }
}

/// A trial whose solver returned an error; its row carries `NaN` metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub cell: CellKey,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: CellKey,
    pub trials: usize,
    pub non_converged: usize,
    /// Medians over converged trials; `NaN` when none converged.
    pub median_product_error: f64,
    pub median_sign_error: f64,
    /// Share of all trials with `sign_error <= SUCCESS_THRESHOLD`.
    pub success_fraction: f64,
}

/// Sign error at or below which a trial counts as exact recovery.
pub const SUCCESS_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<CellSummary>,
    pub failures: Vec<RowFailure>,
}

impl ResultsTable {
    /// Builds a table from rows, summarizing cells in order of first appearance.
    pub fn from_rows(rows: Vec<ResultRow>) -> Self {
        let mut cells: Vec<CellKey> = Vec::new();
        for r in &rows {
            let key = r.cell();
            if !cells.iter().any(|c| same_cell(c, &key)) {
                cells.push(key);
            }
        }
        let summaries = cells
            .into_iter()
            .map(|cell| {
                let members: Vec<&ResultRow> = rows.iter().filter(|r| same_cell(&r.cell(), &cell)).collect();
                let converged: Vec<&&ResultRow> = members.iter().filter(|r| r.converged).collect();
                let successes = members.iter().filter(|r| r.sign_error <= SUCCESS_THRESHOLD).count();
                CellSummary {
                    cell,
                    trials: members.len(),
                    non_converged: members.len() - converged.len(),
                    median_product_error: median(&converged.iter().map(|r| r.product_error).collect::<Vec<_>>()),
                    median_sign_error: median(&converged.iter().map(|r| r.sign_error).collect::<Vec<_>>()),
                    success_fraction: successes as f64 / members.len() as f64,
                }
            })
            .collect();
        Self { rows, summaries, failures: Vec::new() }
    }
}

fn same_cell(a: &CellKey, b: &CellKey) -> bool {
    a.n_samples == b.n_samples && a.sigma.to_bits() == b.sigma.to_bits() && a.r0.to_bits() == b.r0.to_bits()
}

fn run_trial(config: &ExperimentConfig, cell: CellKey, trial: usize) -> Result<(ResultRow, Option<RowFailure>)> {
    let trial_seed = rng::derive(config.master_seed, &[tag::TRIAL, trial as u64]);
    let x0 = config.x0_spec.draw(&config.set, trial_seed)?;
    let noise = config.noise.with_scale(cell.sigma)?;
    let sample = generate_sample(&x0, &config.ensemble, &noise, cell.n_samples, trial_seed)?;
    let solver_seed = rng::derive(trial_seed, &[tag::SOLVER]);
    let outcome: Result<TrialResult> = match &config.solver {
        SolverChoice::Pgd { config: c } => solve_pgd(&sample, &config.set, c, solver_seed),
        SolverChoice::Oracle { config: c } => solve_oracle(&sample, &config.set, c, solver_seed),
    };
    let base = ResultRow {
        n_samples: cell.n_samples,
        sigma: cell.sigma,
        r0: cell.r0,
        trial,
        product_error: f64::NAN,
        sign_error: f64::NAN,
        objective: f64::NAN,
        converged: false,
    };
    match outcome {
        Ok(res) => Ok((
            ResultRow {
                product_error: res.product_error,
                sign_error: res.sign_error,
                objective: res.objective_value,
                converged: res.converged,
                ..base
            },
            None,
        )),
        Err(e @ Error::BudgetExceeded { .. }) => Ok((base, Some(RowFailure { cell, trial, message: e.to_string() }))),
        Err(e) => Err(e),
    }
}

/// Runs every cell and trial in parallel on the current rayon pool. Rows are
/// ordered by cell (N major, then σ) and trial, independent of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let cells = config.cells();
    let trials = config.trials_per_cell;
    let outcomes: Vec<(ResultRow, Option<RowFailure>)> = (0..cells.len() * trials)
        .into_par_iter()
        .map(|k| run_trial(config, cells[k / trials], k % trials))
        .collect::<Result<_>>()?;
    let (rows, failures): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let mut table = ResultsTable::from_rows(rows);
    table.failures = failures.into_iter().flatten().collect();
    Ok(table)
}

/// Like [`run_experiment`] on a dedicated pool of `threads` workers
/// (`None` uses the global pool).
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<ResultsTable> {
    match threads {
        None => run_experiment(config),
        Some(0) => invalid("thread count must be positive"),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?
            .install(|| run_experiment(config)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    #[serde(rename = "N")]
    N,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YStat {
    MedianProductError,
    MedianSignError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log(y)` against `log(x)` over the cell summaries
/// with positive `x` and positive finite `y`.
pub fn fit_slope(table: &ResultsTable, x_axis: XAxis, y: YStat) -> Result<SlopeFit> {
    let points: Vec<(f64, f64)> = table
        .summaries
        .iter()
        .map(|s| {
            let x = match x_axis {
                XAxis::N => s.cell.n_samples as f64,
                XAxis::Sigma => s.cell.sigma,
            };
            let y = match y {
                YStat::MedianProductError => s.median_product_error,
                YStat::MedianSignError => s.median_sign_error,
            };
            (x, y)
        })
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .collect();
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 distinct positive x values with positive medians, found {}",
            xs.len()
        )));
    }
    let m = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - residual / syy } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r_squared, points: points.len() })
}
