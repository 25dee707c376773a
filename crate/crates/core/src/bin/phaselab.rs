use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array1;
use serde::Serialize;

use phaselab::empirics::{run_suite, CheckSuite};
use phaselab::harness::{
    export_results, export_summary, fit_slope, load_config, run_experiment_with_threads, XAxis, YStat,
};
use phaselab::sets::{
    fixed_point_report, mean_width_closed_form, mean_width_mc, packing_count, Backend, ConstraintSet, FixedPointQuery,
    Functional, MonteCarloConfig, PackingQuery,
};
use phaselab::Error;

#[derive(Debug, Parser)]
#[command(name = "phaselab", version, about = "Phase-retrieval ERM laboratory")]
struct Cli {
    /// Master seed; for `simulate` it overrides the config's `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PHASELAB_THREADS")]
    threads: Option<usize>,

    /// Output directory for `simulate`, output JSON file for the other commands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a rate-scaling experiment described by a JSON config.
    Simulate { config: PathBuf },
    /// Gaussian mean width of `T ∩ rB_2`.
    Width {
        /// sparse:N:D, l1:N:R, l2:N:R or ambient:N
        #[arg(long)]
        set: String,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
    },
    /// Fixed point of a complexity functional.
    FixedPoint {
        #[arg(long)]
        set: String,
        /// r0, r2, rN, sN, vN, qN or tN
        #[arg(long)]
        functional: String,
        #[arg(long)]
        level: f64,
        #[arg(long = "N")]
        n_samples: usize,
        /// closed_form or monte_carlo
        #[arg(long, default_value = "closed_form")]
        backend: String,
        /// `||x0||`, required by qN and tN.
        #[arg(long)]
        shell: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        draws: usize,
    },
    /// Greedy packing count of `T ∩ (center + radius B_2)` at a separation.
    Packing {
        #[arg(long)]
        set: String,
        /// Comma-separated coordinates; the origin when omitted.
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        separation: f64,
        /// Restrict to the sphere of this radius.
        #[arg(long)]
        shell: Option<f64>,
        #[arg(long, default_value_t = 400)]
        candidates: usize,
    },
    /// Run a lemma check suite: norm-equivalence, rearrangement, paley-zygmund or all.
    Check { suite: String },
}

enum Failure {
    Lib(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(n)) => {
            eprintln!("error: {n} check(s) failed");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::UnsupportedSet(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads == Some(0) {
        return Err(Error::InvalidArgument("thread count must be positive".into()).into());
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Simulate { config } => simulate(&config, cli.seed, cli.threads, cli.out.as_deref()),
        Command::Width { set, r, draws } => {
            let set: ConstraintSet = set.parse()?;
            let mc = mean_width_mc(&set, r, draws, seed)?;
            let closed = mean_width_closed_form(&set, r).ok();
            println!("mean width (monte carlo): {:.6} ± {:.6} ({} draws)", mc.value, mc.std_error, mc.samples);
            if let Some(c) = closed {
                println!("mean width (closed form): {c:.6}");
            }
            #[derive(Serialize)]
            struct Out {
                monte_carlo: phaselab::sets::WidthEstimate,
                closed_form: Option<f64>,
            }
            write_json(cli.out.as_deref(), &Out { monte_carlo: mc, closed_form: closed })
        }
        Command::FixedPoint { set, functional, level, n_samples, backend, shell, draws } => {
            let set: ConstraintSet = set.parse()?;
            let functional: Functional = functional.parse()?;
            let backend: Backend = backend.parse()?;
            let mut query = FixedPointQuery::new(functional, level, n_samples, backend);
            if let Some(r0) = shell {
                query = query.with_shell(r0);
            }
            let mc = MonteCarloConfig { draws, seed, ..Default::default() };
            let report = fixed_point_report(&set, &query, &mc)?;
            println!("{functional}* = {:.6e} (bracket width {:.1e})", report.value, report.bracket_width);
            for w in &report.warnings {
                println!("warning: {w}");
            }
            write_json(cli.out.as_deref(), &report)
        }
        Command::Packing { set, center, radius, separation, shell, candidates } => {
            let set: ConstraintSet = set.parse()?;
            let center = match center {
                Some(c) => parse_vector(&c)?,
                None => Array1::zeros(set.dimension()),
            };
            let query = PackingQuery { center, ball_radius: radius, separation, shell_r0: shell, candidates, seed };
            let count = packing_count(&set, &query)?;
            println!("packing count: {count}");
            write_json(cli.out.as_deref(), &serde_json::json!({ "packing_count": count }))
        }
        Command::Check { suite } => {
            let suite: CheckSuite = suite.parse()?;
            let outcomes = run_suite(suite, seed);
            for o in &outcomes {
                println!("{o}");
            }
            write_json(cli.out.as_deref(), &outcomes)?;
            match outcomes.iter().filter(|o| !o.passed).count() {
                0 => Ok(()),
                n => Err(Failure::Checks(n)),
            }
        }
    }
}

fn simulate(path: &Path, seed: Option<u64>, threads: Option<usize>, out: Option<&Path>) -> Result<(), Failure> {
    let mut config = load_config(path)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    let table = run_experiment_with_threads(&config, threads)?;
    for s in &table.summaries {
        println!(
            "N={} sigma={} R0={}: median product error {:.4e}, median sign error {:.4e}, success {:.2}, non-converged {}",
            s.cell.n_samples,
            s.cell.sigma,
            s.cell.r0,
            s.median_product_error,
            s.median_sign_error,
            s.success_fraction,
            s.non_converged
        );
    }
    for f in &table.failures {
        println!("failed trial {} in cell N={} sigma={}: {}", f.trial, f.cell.n_samples, f.cell.sigma, f.message);
    }
    for (axis, name) in [(XAxis::N, "N"), (XAxis::Sigma, "sigma")] {
        for (y, label) in [(YStat::MedianProductError, "product error"), (YStat::MedianSignError, "sign error")] {
            if let Ok(fit) = fit_slope(&table, axis, y) {
                println!("slope of log {label} vs log {name}: {:.4} (r² {:.4})", fit.slope, fit.r_squared);
            }
        }
    }
    let dir = out.unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    export_results(&table, dir.join("results.csv"))?;
    export_summary(&table, dir.join("summary.json"))?;
    Ok(())
}

fn parse_vector(s: &str) -> Result<Array1<f64>, Error> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("cannot parse `{p}` as a number"))))
        .collect()
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    let Some(path) = out else {
        return Ok(());
    };
    let body = serde_json::to_string_pretty(value).expect("output serializes");
    fs::write(path, body + "\n").map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(())
}
