//! Empirical-process diagnostics: discrete Orlicz norms, monotone
//! rearrangements, Paley–Zygmund fractions, empirical small-ball fractions,
//! product-process suprema and the norm-equivalence checker, plus the
//! regression suites behind `phaselab check`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::gaussian_vector;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dist2, norm2, sum_norm2};
use crate::rng::{self, tag};

/// A vector together with the nonincreasing rearrangement of its magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedVector {
    pub values: Vec<f64>,
    pub sorted_abs: Vec<f64>,
}

impl RearrangedVector {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted_abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        sorted_abs.sort_by(|a, b| b.total_cmp(a));
        Self { values: values.to_vec(), sorted_abs }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&alpha) {
        return invalid(format!("alpha must lie in [1, 2], got {alpha}"));
    }
    Ok(())
}

fn check_nonempty(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return invalid("vector must be nonempty");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("vector entries must be finite");
    }
    Ok(())
}

/// `inf { c > 0 : (1/m) Σ exp(|v_i|^α / c^α) <= 2 }`, the ψ_α norm under the
/// uniform measure on coordinates, by bisection to relative width `1e-10`.
pub fn psi_alpha_norm(v: &[f64], alpha: f64) -> Result<f64> {
    check_nonempty(v)?;
    check_alpha(alpha)?;
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Ok(0.0);
    }
    let m = v.len() as f64;
    // work with v / max to keep the exponentials in range
    let scaled: Vec<f64> = v.iter().map(|x| (x.abs() / max).powf(alpha)).collect();
    let within = |c: f64| {
        let ca = c.powf(alpha);
        scaled.iter().map(|s| (s / ca).exp()).sum::<f64>() / m <= 2.0
    };
    let mut lo = 0.5 / (2.0 * m).ln().powf(1.0 / alpha);
    let mut hi = 2.0 / 2f64.ln().powf(1.0 / alpha);
    debug_assert!(!within(lo) && within(hi));
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if within(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(max * hi)
}

/// `sup_{i <= m} v*_i / log^{1/α}(e m / i)` over the nonincreasing
/// rearrangement `v*` of `|v|`.
pub fn rearrangement_functional(v: &[f64], alpha: f64) -> Result<f64> {
    check_nonempty(v)?;
    if !(alpha > 0.0) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    let r = RearrangedVector::new(v);
    let m = v.len() as f64;
    Ok(r.sorted_abs
        .iter()
        .enumerate()
        .map(|(i, s)| s / (std::f64::consts::E * m / (i + 1) as f64).ln().powf(1.0 / alpha))
        .fold(0.0, f64::max))
}

/// Returns `(fraction, beta_ratio)`: the share of coordinates with
/// `|v_i| >= eta ||v||_{L1}` and the ratio `||v||_{ψ1} / ||v||_{L1}`, both
/// under the uniform measure on coordinates.
pub fn paley_zygmund_fraction(v: &[f64], eta: f64) -> Result<(f64, f64)> {
    check_nonempty(v)?;
    if !(eta > 0.0) {
        return invalid(format!("eta must be positive, got {eta}"));
    }
    let m = v.len() as f64;
    let l1 = v.iter().map(|x| x.abs()).sum::<f64>() / m;
    if l1 == 0.0 {
        return invalid("vector must not be identically zero");
    }
    let count = v.iter().filter(|x| x.abs() >= eta * l1).count();
    Ok((count as f64 / m, psi_alpha_norm(v, 1.0)? / l1))
}

/// Guaranteed lower bound on the fraction of [`paley_zygmund_fraction`] for
/// every vector with `beta_ratio <= beta`. From `P(|v| > t) <= 2 exp(-t/β)`
/// (with `||v||_{L1} = 1`):
/// `E|v| 1{|v| > kβ} <= 2β(1+k)e^{-k}`, hence
/// `P(|v| >= η) >= (1 - η - 2β(1+k)e^{-k}) / (kβ)` for every `k > 0`;
/// the bound is maximized over a grid of `k`.
pub fn paley_zygmund_guarantee(beta: f64, eta: f64) -> f64 {
    (1..=4000)
        .map(|j| {
            let k = j as f64 * 0.01;
            (1.0 - eta - 2.0 * beta * (1.0 + k) * (-k).exp()) / (k * beta)
        })
        .fold(0.0, f64::max)
}

/// Fraction of rows with `|<a_i,u><a_i,v>| >= c1 ||u|| ||v||`.
pub fn empirical_smallball_fraction(a: &Array2<f64>, u: &Array1<f64>, v: &Array1<f64>, c1: f64) -> Result<f64> {
    if u.len() != a.ncols() || v.len() != a.ncols() {
        return invalid("u and v must match the number of columns of A");
    }
    let (nu, nv) = (norm2(u.view()), norm2(v.view()));
    if nu == 0.0 || nv == 0.0 {
        return invalid("u and v must be nonzero");
    }
    if a.nrows() == 0 {
        return invalid("A must have at least one row");
    }
    let (pu, pv) = (a.dot(u), a.dot(v));
    let threshold = c1 * nu * nv;
    let count = pu.iter().zip(pv.iter()).filter(|(x, y)| (*x * *y).abs() >= threshold).count();
    Ok(count as f64 / a.nrows() as f64)
}

fn stack(points: &[Array1<f64>], n: usize) -> Result<Array2<f64>> {
    if points.is_empty() {
        return invalid("candidate sets must be nonempty");
    }
    let mut out = Array2::zeros((n, points.len()));
    for (j, p) in points.iter().enumerate() {
        if p.len() != n {
            return invalid(format!("candidate has dimension {}, A has {n} columns", p.len()));
        }
        out.column_mut(j).assign(p);
    }
    Ok(out)
}

/// `max_{t ∈ T1, s ∈ T2} |(1/N) Σ <a_i,t><a_i,s> - <t,s>|`.
pub fn product_process_sup(a: &Array2<f64>, t1: &[Array1<f64>], t2: &[Array1<f64>]) -> Result<f64> {
    let n = a.ncols();
    let (m1, m2) = (stack(t1, n)?, stack(t2, n)?);
    if a.nrows() == 0 {
        return invalid("A must have at least one row");
    }
    let (p1, p2) = (a.dot(&m1), a.dot(&m2));
    let empirical = p1.t().dot(&p2) / a.nrows() as f64;
    let population = m1.t().dot(&m2);
    Ok((empirical - population).iter().fold(0.0, |m, x| m.max(x.abs())))
}

/// Constants for [`norm_equivalence_check`]. The defaults are the sharp
/// values; see the field docs for the extremal configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalenceConstants {
    /// `||x0|| min(a,b) >= R  ⇒  ab >= c1 R`. Sharp at `x = 0`.
    pub c1: f64,
    /// `ab >= R  ⇒  ||x0|| min(a,b) >= c2 R` when `||x0|| >= sqrt(R)/4`.
    /// Sharp at `||x0|| = sqrt(R)/4`, `x = sqrt(17) x0`: `c2 = (1/4)/(1/4 + sqrt(17/16))`.
    pub c2: f64,
    /// `ab >= R  ⇒  ||x|| >= small_lower sqrt(R)` when `||x0|| < sqrt(R)/4`;
    /// from `ab <= ||x||^2 + ||x0||^2`, so `sqrt(15)/4`.
    pub small_lower: f64,
    /// `||x|| >= small_upper sqrt(R)  ⇒  ab >= R` when `||x0|| < sqrt(R)/4`;
    /// from `ab >= ||x||^2 - ||x0||^2`, so `sqrt(17)/4`.
    pub small_upper: f64,
}

impl Default for NormEquivalenceConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 0.25 / (0.25 + 1.0625f64.sqrt()),
            small_lower: 15f64.sqrt() / 4.0,
            small_upper: 17f64.sqrt() / 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormEquivalence {
    pub forward_holds: bool,
    pub backward_holds: bool,
    /// `||x0|| < sqrt(R)/4`; then forward/backward refer to the two halves of
    /// `ab >= R  ⇔  ||x|| ≳ sqrt(R)`.
    pub small_norm_case: bool,
}

/// Evaluates the implications between `ab = ||x-x0|| ||x+x0||`,
/// `||x0|| min(a,b)` and `||x||` at one triple, with `a = ||x - x0||` and
/// `b = ||x + x0||`.
pub fn norm_equivalence_check(
    x: &Array1<f64>,
    x0: &Array1<f64>,
    r: f64,
    c: &NormEquivalenceConstants,
) -> Result<NormEquivalence> {
    if !(r > 0.0) {
        return invalid(format!("R must be positive, got {r}"));
    }
    if x.len() != x0.len() {
        return invalid("x and x0 must have the same dimension");
    }
    let a = dist2(x.view(), x0.view());
    let b = sum_norm2(x.view(), x0.view());
    let t = norm2(x0.view());
    let product = a * b;
    let implies = |p: bool, q: bool| !p || q;
    if t >= r.sqrt() / 4.0 {
        let sign_side = t * a.min(b);
        Ok(NormEquivalence {
            forward_holds: implies(sign_side >= r, product >= c.c1 * r),
            backward_holds: implies(product >= r, sign_side >= c.c2 * r),
            small_norm_case: false,
        })
    } else {
        let nx = norm2(x.view());
        Ok(NormEquivalence {
            forward_holds: implies(product >= r, nx >= c.small_lower * r.sqrt()),
            backward_holds: implies(nx >= c.small_upper * r.sqrt(), product >= r),
            small_norm_case: true,
        })
    }
}

/// Named regression suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckSuite {
    NormEquivalence,
    Rearrangement,
    PaleyZygmund,
    All,
}

impl FromStr for CheckSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "norm-equivalence" => Ok(Self::NormEquivalence),
            "rearrangement" => Ok(Self::Rearrangement),
            "paley-zygmund" => Ok(Self::PaleyZygmund),
            "all" => Ok(Self::All),
            _ => {
                invalid(format!("unknown suite `{s}`; expected norm-equivalence, rearrangement, paley-zygmund or all"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// One random configuration `(x, x0)` in `R^3`: either independent gaussian
/// directions with log-uniform norms, or `x` nearly collinear with `x0`
/// (where the constants are extremal).
pub(crate) fn random_pair<R: Rng + ?Sized>(rng: &mut R) -> (Array1<f64>, Array1<f64>) {
    let x0 = gaussian_vector(3, rng) * log_uniform(rng, 1e-3, 1e3);
    let t = norm2(x0.view());
    let x = match rng.random_range(0..3) {
        0 => gaussian_vector(3, rng) * log_uniform(rng, 1e-3, 1e3),
        1 => {
            let s = log_uniform(rng, 1e-2, 1e2) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            &x0 * s + &(gaussian_vector(3, rng) * (t * log_uniform(rng, 1e-6, 1.0)))
        }
        _ => &x0 * rng.random_range(-2.0..2.0) + &(gaussian_vector(3, rng) * (t * log_uniform(rng, 1e-3, 10.0))),
    };
    (x, x0)
}

/// Tightest constants seen over random triples, each with `R` placed at the
/// edge of the relevant antecedent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstants {
    pub c1: f64,
    pub c2: f64,
    pub small_lower: f64,
    pub small_upper: f64,
}

/// Random search for the sharpest constants over `triples` configurations.
pub fn search_norm_equivalence_constants(triples: usize, seed: u64) -> EmpiricalConstants {
    let chunks = triples.div_ceil(CHECK_CHUNK);
    let parts: Vec<EmpiricalConstants> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, &[tag::CHUNK, c as u64]);
            let mut e = EmpiricalConstants {
                c1: f64::INFINITY,
                c2: f64::INFINITY,
                small_lower: f64::INFINITY,
                small_upper: 0.0,
            };
            let count = CHECK_CHUNK.min(triples - c * CHECK_CHUNK);
            for _ in 0..count {
                let (x, x0) = random_pair(&mut rng);
                let (a, b) = (dist2(x.view(), x0.view()), sum_norm2(x.view(), x0.view()));
                let (t, nx, p) = (norm2(x0.view()), norm2(x.view()), a * b);
                let m = a.min(b);
                if t * m > 0.0 {
                    // forward: R = ||x0|| min, admissible while R <= 16 t^2
                    let r = (t * m).min(16.0 * t * t);
                    if t * m >= r {
                        e.c1 = e.c1.min(p / r);
                    }
                }
                if p > 0.0 {
                    // backward: R = ab, admissible while R <= 16 t^2
                    let r = p.min(16.0 * t * t);
                    if r > 0.0 {
                        e.c2 = e.c2.min(t * m / r);
                    }
                    // small-norm case needs R > 16 t^2; take R = ab
                    if p > 16.0 * t * t {
                        e.small_lower = e.small_lower.min(nx / p.sqrt());
                    }
                }
                // ||x|| >= c sqrt(R) ⇒ ab >= R: the largest ||x||/sqrt(R) with ab < R,
                // over R slightly above max(ab, 16 t^2)
                let r = p.max(16.0 * t * t) * (1.0 + 1e-12);
                if r > 0.0 && p < r {
                    e.small_upper = e.small_upper.max(nx / r.sqrt());
                }
            }
            e
        })
        .collect();
    parts.into_iter().fold(
        EmpiricalConstants { c1: f64::INFINITY, c2: f64::INFINITY, small_lower: f64::INFINITY, small_upper: 0.0 },
        |acc, e| EmpiricalConstants {
            c1: acc.c1.min(e.c1),
            c2: acc.c2.min(e.c2),
            small_lower: acc.small_lower.min(e.small_lower),
            small_upper: acc.small_upper.max(e.small_upper),
        },
    )
}

const CHECK_CHUNK: usize = 10_000;

/// Counts triples `(x, x0, R)` that violate the frozen constants. `R` is
/// drawn around the natural scales of the triple so that both cases and
/// both implications are exercised.
pub fn norm_equivalence_counterexamples(
    triples: usize,
    seed: u64,
    constants: &NormEquivalenceConstants,
) -> (usize, usize) {
    let chunks = triples.div_ceil(CHECK_CHUNK);
    let counts: Vec<(usize, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, &[tag::CHUNK, c as u64]);
            let count = CHECK_CHUNK.min(triples - c * CHECK_CHUNK);
            let (mut bad, mut small) = (0, 0);
            for _ in 0..count {
                let (x, x0) = random_pair(&mut rng);
                let (a, b) = (dist2(x.view(), x0.view()), sum_norm2(x.view(), x0.view()));
                let t = norm2(x0.view());
                let anchor = match rng.random_range(0..3) {
                    0 => a * b,
                    1 => t * a.min(b),
                    _ => 16.0 * t * t,
                };
                let r = anchor.max(1e-300) * log_uniform(&mut rng, 0.5, 2.0);
                let res = norm_equivalence_check(&x, &x0, r, constants).expect("valid inputs");
                if !(res.forward_holds && res.backward_holds) {
                    bad += 1;
                }
                if res.small_norm_case {
                    small += 1;
                }
            }
            (bad, small)
        })
        .collect();
    counts.into_iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1))
}

/// Bounds on `psi_alpha_norm / rearrangement_functional` valid for every
/// vector: the lower bound 1 follows from Markov's inequality (`e > 2`); the
/// upper bound `s^{-1/α}` from `(1/m) Σ (em/i)^s <= e^s/(1-s)`, with `s` the
/// root of `e^s/(1-s) = 2`.
pub fn rearrangement_ratio_bounds(alpha: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid.exp() / (1.0 - mid) <= 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (1.0, lo.powf(-1.0 / alpha))
}

/// A random test vector of length `m` from one of several families with
/// different tail behavior.
pub(crate) fn random_test_vector<R: Rng + ?Sized>(m: usize, family: usize, rng: &mut R) -> Vec<f64> {
    (0..m)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            match family % 6 {
                0 => g,
                1 => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                2 => g * g,
                3 => {
                    if rng.random::<f64>() < 0.25 {
                        g
                    } else {
                        0.0
                    }
                }
                4 => {
                    if rng.random::<f64>() < 0.05 {
                        g * 10.0
                    } else {
                        g * 0.1
                    }
                }
                _ => g * rng.random_range(0.0..1.0),
            }
        })
        .collect()
}

/// Threshold `eta` (relative to `||v||_{L1}`) used by the Paley–Zygmund suite.
pub const PZ_ETA: f64 = 0.25;

pub fn check_norm_equivalence(triples: usize, seed: u64) -> CheckOutcome {
    let constants = NormEquivalenceConstants::default();
    let (bad, small) = norm_equivalence_counterexamples(triples, seed, &constants);
    CheckOutcome {
        name: "norm-equivalence".into(),
        passed: bad == 0,
        detail: format!(
            "{bad} counterexamples in {triples} triples ({small} in the small-norm case); c1={:.5} c2={:.5} small=[{:.5}, {:.5}]",
            constants.c1, constants.c2, constants.small_lower, constants.small_upper
        ),
    }
}

pub fn check_rearrangement(vectors: usize, seed: u64) -> CheckOutcome {
    let results: Vec<(f64, f64, bool)> = (0..vectors as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, &[tag::SAMPLE, k]);
            let m = [10, 100, 1000][(k % 3) as usize];
            let alpha = if (k / 3) % 2 == 0 { 1.0 } else { 2.0 };
            let v = random_test_vector(m, (k / 6) as usize, &mut rng);
            let psi = psi_alpha_norm(&v, alpha).expect("valid vector");
            let f = rearrangement_functional(&v, alpha).expect("valid vector");
            let (lo, hi) = rearrangement_ratio_bounds(alpha);
            let ratio = if f > 0.0 { psi / f } else { 1.0 };
            (ratio, alpha, ratio >= lo * (1.0 - 1e-9) && ratio <= hi * (1.0 + 1e-9))
        })
        .collect();
    let failures = results.iter().filter(|r| !r.2).count();
    let range = |a: f64| {
        results.iter().filter(|r| r.1 == a).fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.0), hi.max(r.0)))
    };
    let (r1, r2) = (range(1.0), range(2.0));
    CheckOutcome {
        name: "rearrangement".into(),
        passed: failures == 0,
        detail: format!(
            "{failures} of {vectors} ratios outside bounds; alpha=1 ratios in [{:.4}, {:.4}] (bound {:.4}), alpha=2 in [{:.4}, {:.4}] (bound {:.4})",
            r1.0,
            r1.1,
            rearrangement_ratio_bounds(1.0).1,
            r2.0,
            r2.1,
            rearrangement_ratio_bounds(2.0).1
        ),
    }
}

pub fn check_paley_zygmund(vectors_per_beta: usize, seed: u64) -> CheckOutcome {
    let mut details = Vec::new();
    let mut passed = true;
    for beta in [2.0, 4.0, 8.0] {
        let guarantee = paley_zygmund_guarantee(beta, PZ_ETA);
        let results: Vec<Option<f64>> = (0..vectors_per_beta as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng::stream(seed, &[tag::SAMPLE, beta as u64, k]);
                let m = [50, 200, 1000][(k % 3) as usize];
                let v = random_test_vector(m, (k / 3) as usize, &mut rng);
                match paley_zygmund_fraction(&v, PZ_ETA) {
                    Ok((frac, ratio)) if ratio <= beta => Some(frac),
                    _ => None,
                }
            })
            .collect();
        let eligible: Vec<f64> = results.into_iter().flatten().collect();
        let worst = eligible.iter().copied().fold(f64::INFINITY, f64::min);
        let ok = guarantee > 0.0 && eligible.iter().all(|f| *f >= guarantee);
        passed &= ok;
        details.push(format!("beta={beta}: {} vectors, min fraction {worst:.4} >= {guarantee:.4}", eligible.len()));
    }
    CheckOutcome { name: "paley-zygmund".into(), passed, detail: details.join("; ") }
}

/// Runs a suite at its standard sizes.
pub fn run_suite(suite: CheckSuite, seed: u64) -> Vec<CheckOutcome> {
    match suite {
        CheckSuite::NormEquivalence => vec![check_norm_equivalence(1_000_000, seed)],
        CheckSuite::Rearrangement => vec![check_rearrangement(1000, seed)],
        CheckSuite::PaleyZygmund => vec![check_paley_zygmund(1000, seed)],
        CheckSuite::All => [CheckSuite::NormEquivalence, CheckSuite::Rearrangement, CheckSuite::PaleyZygmund]
            .into_iter()
            .flat_map(|s| run_suite(s, seed))
            .collect(),
    }
}
