//! Fixed points `inf { r > 0 : Φ(r) <= level r^p sqrt(N) }`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::packing::sudakov_complexity;
use super::width::{mean_width_closed_form, sparse_unit_width, WidthPanel};
use super::ConstraintSet;
use crate::error::{invalid, Error, Result};

/// Which complexity and which power of `r` define the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Functional {
    /// `E_R <= level sqrt(N)`
    #[serde(rename = "r0")]
    R0,
    /// `E_R <= level R sqrt(N)`
    #[serde(rename = "r2")]
    R2,
    /// `ℓ(T ∩ rB_2) <= level r sqrt(N)`
    #[serde(rename = "rN")]
    RN,
    /// `ℓ(T ∩ rB_2) <= level r^2 sqrt(N)`
    #[serde(rename = "sN")]
    SN,
    /// `ℓ(T ∩ rB_2) <= level r^3 sqrt(N)`
    #[serde(rename = "vN")]
    VN,
    /// `C(R0, r) <= level r^2 sqrt(N)`
    #[serde(rename = "qN")]
    QN,
    /// `C(R0, r) <= level r^3 sqrt(N)`
    #[serde(rename = "tN")]
    TN,
}

impl Functional {
    pub fn exponent(self) -> i32 {
        match self {
            Self::R0 => 0,
            Self::R2 | Self::RN => 1,
            Self::SN | Self::QN => 2,
            Self::VN | Self::TN => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::R0 => "r0",
            Self::R2 => "r2",
            Self::RN => "rN",
            Self::SN => "sN",
            Self::VN => "vN",
            Self::QN => "qN",
            Self::TN => "tN",
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "r0" => Self::R0,
            "r2" => Self::R2,
            "rn" => Self::RN,
            "sn" => Self::SN,
            "vn" => Self::VN,
            "qn" => Self::QN,
            "tn" => Self::TN,
            _ => return invalid(format!("unknown functional `{s}`; expected one of r0, r2, rN, sN, vN, qN, tN")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    MonteCarlo,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "closed_form" | "closed" => Ok(Self::ClosedForm),
            "monte_carlo" | "mc" => Ok(Self::MonteCarlo),
            _ => invalid(format!("unknown backend `{s}`; expected closed_form or monte_carlo")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointQuery {
    pub functional: Functional,
    pub level: f64,
    pub n_samples: usize,
    /// `||x0||` for the packing functionals (required) and for the localized
    /// `r0`/`r2` surrogate (optional; the global surrogate is used otherwise).
    pub shell_r0: Option<f64>,
    pub backend: Backend,
}

impl FixedPointQuery {
    pub fn new(functional: Functional, level: f64, n_samples: usize, backend: Backend) -> Self {
        Self { functional, level, n_samples, shell_r0: None, backend }
    }

    pub fn with_shell(mut self, r0: f64) -> Self {
        self.shell_r0 = Some(r0);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.level > 0.0) || !self.level.is_finite() {
            return invalid(format!("level must be positive and finite, got {}", self.level));
        }
        if self.n_samples == 0 {
            return invalid("sample size N must be positive");
        }
        match (self.functional, self.shell_r0) {
            (Functional::QN | Functional::TN, None) => invalid("qN and tN need a shell radius R0"),
            (Functional::QN | Functional::TN, Some(r0)) if !(r0 > 0.0 && r0.is_finite()) => {
                invalid(format!("shell radius must be positive, got {r0}"))
            }
            (_, Some(r0)) if !(r0 >= 0.0 && r0.is_finite()) => {
                invalid(format!("shell radius must be nonnegative, got {r0}"))
            }
            _ => Ok(()),
        }
    }
}

/// Monte Carlo effort for the width and packing backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub draws: usize,
    pub seed: u64,
    pub iterations: usize,
    pub packing_centers: usize,
    pub packing_candidates: usize,
    /// Radius factor `c0` of the local ball `x0 + c0 r B_2` in `C(R0, r)`.
    pub packing_c0: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { draws: 2000, seed: 0, iterations: 60, packing_centers: 4, packing_candidates: 400, packing_c0: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub value: f64,
    /// Width of the final bisection bracket; zero for closed-form values.
    pub bracket_width: f64,
    pub warnings: Vec<String>,
}

impl FixedPointReport {
    fn exact(value: f64) -> Self {
        Self { value, bracket_width: 0.0, warnings: Vec::new() }
    }
}

pub fn fixed_point(set: &ConstraintSet, query: &FixedPointQuery, mc: &MonteCarloConfig) -> Result<f64> {
    fixed_point_report(set, query, mc).map(|r| r.value)
}

/// `r` solving `w r^k <= level r^p sqrt(N)` for a homogeneous complexity.
fn homogeneous(w: f64, k: i32, p: i32, level: f64, n_samples: usize) -> f64 {
    let scale = level * (n_samples as f64).sqrt();
    if p == k {
        if w <= scale {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (w / scale).powf(1.0 / (p - k) as f64)
    }
}

/// The displayed closed forms for the unit `l1` ball.
fn l1_unit_fixed_point(functional: Functional, n: usize, n_samples: usize, level: f64) -> f64 {
    let (nf, big_n) = (n as f64, n_samples as f64);
    let a = level * level * big_n;
    match functional {
        Functional::RN => {
            if nf > a {
                ((nf / a).ln() / a).sqrt()
            } else {
                0.0
            }
        }
        Functional::SN => {
            if nf >= level * big_n.sqrt() {
                ((nf * nf / a).ln() / a).powf(0.25)
            } else {
                (nf / a).sqrt()
            }
        }
        Functional::VN => {
            if nf >= level.powf(2.0 / 3.0) * big_n.powf(1.0 / 3.0) {
                ((nf.powi(3) / a).ln() / a).powf(1.0 / 6.0)
            } else {
                (nf / a).powf(0.25)
            }
        }
        _ => unreachable!("only width fixed points have displayed closed forms"),
    }
}

enum WidthSource {
    Closed,
    Panel(WidthPanel),
}

impl WidthSource {
    fn width(&self, set: &ConstraintSet, r: f64) -> f64 {
        match self {
            Self::Closed => mean_width_closed_form(set, r).expect("closed form checked"),
            Self::Panel(p) => p.estimate(set, r).value,
        }
    }
}

/// Solves for the fixed point and records diagnostics. Bisection runs on
/// `[r_hi 2^-40, r_hi]` with `r_hi` the diameter (squared for `r0`/`r2`,
/// whose argument is a product of distances); the bracket is doubled if the
/// condition still fails at `r_hi`. Cones are solved by homogeneity and may
/// return `0` or `+inf`.
pub fn fixed_point_report(
    set: &ConstraintSet,
    query: &FixedPointQuery,
    mc: &MonteCarloConfig,
) -> Result<FixedPointReport> {
    solve(set, query, mc, true)
}

/// Fixed point of the closed-form width itself, found by bisection. Unlike
/// the displayed `l1` formulas this is continuous and monotone in `level`
/// and `N`; the two coincide on the branches without a logarithm.
pub(crate) fn closed_width_fixed_point(
    set: &ConstraintSet,
    functional: Functional,
    level: f64,
    n_samples: usize,
) -> Result<f64> {
    let query = FixedPointQuery::new(functional, level, n_samples, Backend::ClosedForm);
    let mc = MonteCarloConfig { iterations: 100, ..Default::default() };
    solve(set, &query, &mc, false).map(|r| r.value)
}

fn solve(
    set: &ConstraintSet,
    query: &FixedPointQuery,
    mc: &MonteCarloConfig,
    displays: bool,
) -> Result<FixedPointReport> {
    set.validate()?;
    query.validate()?;
    let f = query.functional;
    let p = f.exponent();
    let (level, big_n) = (query.level, query.n_samples);
    let n = set.dimension();
    let packing = matches!(f, Functional::QN | Functional::TN);

    if query.backend == Backend::ClosedForm
        && !packing
        && !matches!(set, ConstraintSet::SparseCap { .. } | ConstraintSet::L1Ball { .. })
    {
        return Err(Error::UnsupportedSet(format!("no closed-form fixed point for {set}")));
    }
    if query.backend == Backend::MonteCarlo || packing {
        if mc.iterations == 0 {
            return invalid("at least one bisection iteration is required");
        }
        if !packing && mc.draws < 2 {
            return invalid("at least two gaussian draws are required");
        }
    }

    if displays && query.backend == Backend::ClosedForm && matches!(f, Functional::RN | Functional::SN | Functional::VN)
    {
        let value = match *set {
            ConstraintSet::SparseCap { n, d } => homogeneous(sparse_unit_width(n, d), 1, p, level, big_n),
            ConstraintSet::L1Ball { n, radius } => {
                radius * l1_unit_fixed_point(f, n, big_n, level * radius.powi(p - 1))
            }
            _ => unreachable!(),
        };
        return Ok(FixedPointReport::exact(value));
    }

    let source = || match query.backend {
        Backend::ClosedForm => WidthSource::Closed,
        Backend::MonteCarlo => WidthSource::Panel(WidthPanel::new(n, mc.draws, mc.seed)),
    };

    if set.is_cone() && !packing {
        let src = source();
        let (w, k) = match f {
            Functional::R0 | Functional::R2 => {
                let cap = match *set {
                    ConstraintSet::SparseCap { n, d } => ConstraintSet::SparseCap { n, d: (2 * d).min(n) },
                    other => other,
                };
                if let (WidthSource::Closed, ConstraintSet::SparseCap { n, d }) = (&src, cap) {
                    (sparse_unit_width(n, d), 0)
                } else {
                    (src.width(&cap, 1.0), 0)
                }
            }
            _ => (src.width(set, 1.0), 1),
        };
        return Ok(FixedPointReport::exact(homogeneous(w, k, p, level, big_n)));
    }

    let scale = level * (big_n as f64).sqrt();
    let phi: Box<dyn Fn(f64) -> f64 + Sync> = if packing {
        let r0 = query.shell_r0.expect("validated");
        let set = *set;
        let mc = *mc;
        // check that the shell meets the set before bisecting
        sudakov_complexity(&set, r0, r0, mc.packing_c0, 1, 1, mc.seed)?;
        Box::new(move |r| {
            sudakov_complexity(&set, r0, r, mc.packing_c0, mc.packing_centers, mc.packing_candidates, mc.seed)
                .expect("validated")
        })
    } else if matches!(f, Functional::R0 | Functional::R2) {
        let src = source();
        let doubled = set.scaled(2.0);
        let rho = set.max_norm();
        let x0_norm = query.shell_r0;
        Box::new(move |big_r: f64| {
            let s = match x0_norm {
                Some(x) if x >= big_r.sqrt() => big_r / x,
                Some(_) => big_r.sqrt(),
                None => big_r.sqrt().min(big_r / rho),
            };
            src.width(&doubled, s) / s
        })
    } else {
        let src = source();
        let set = *set;
        Box::new(move |r| src.width(&set, r))
    };
    let holds = |r: f64| phi(r) <= scale * r.powi(p);

    let mut warnings = Vec::new();
    let mut r_hi = if packing {
        2.05 * query.shell_r0.expect("validated")
    } else if matches!(f, Functional::R0 | Functional::R2) {
        set.diameter().powi(2)
    } else {
        set.diameter()
    };
    let mut expansions = 0;
    while !holds(r_hi) {
        if expansions == 200 {
            warnings.push(format!("condition never holds up to r = {r_hi:e}"));
            return Ok(FixedPointReport { value: f64::INFINITY, bracket_width: f64::INFINITY, warnings });
        }
        r_hi *= 2.0;
        expansions += 1;
    }
    let mut lo = r_hi * 2f64.powi(-40);
    if holds(lo) {
        return Ok(FixedPointReport { value: 0.0, bracket_width: lo, warnings });
    }
    let mut hi = r_hi;
    for _ in 0..mc.iterations {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    for factor in [1.25, 1.5, 2.0, 4.0] {
        let r = hi * factor;
        if r < r_hi && !holds(r) {
            warnings
                .push(format!("non-monotone complexity: condition fails at r = {r:.6e} above the solution {hi:.6e}"));
        }
    }
    Ok(FixedPointReport { value: hi, bracket_width: hi - lo, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc() -> MonteCarloConfig {
        MonteCarloConfig { draws: 400, seed: 11, ..Default::default() }
    }

    #[test]
    fn closed_form_examples() {
        let l1 = ConstraintSet::l1_ball(100_000, 1.0).unwrap();
        let q = FixedPointQuery::new(Functional::RN, 1.0, 100, Backend::ClosedForm);
        let v = fixed_point(&l1, &q, &mc()).unwrap();
        assert!((v - (1000f64.ln() / 100.0).sqrt()).abs() < 1e-12);
        assert!((v - 0.2628).abs() < 1e-4);

        let small = ConstraintSet::l1_ball(10, 1.0).unwrap();
        let q = FixedPointQuery::new(Functional::SN, 2.0, 400, Backend::ClosedForm);
        let v = fixed_point(&small, &q, &mc()).unwrap();
        assert!((v - (10.0f64 / (4.0 * 400.0)).sqrt()).abs() < 1e-12);

        let q = FixedPointQuery::new(Functional::RN, 1.0, 1000, Backend::ClosedForm);
        assert_eq!(fixed_point(&small, &q, &mc()).unwrap(), 0.0);
    }

    #[test]
    fn radius_rescaling_of_closed_forms() {
        // ℓ(ρB1 ∩ rB2) = ρ ℓ(B1 ∩ (r/ρ)B2), so fixed points scale as ρ·f(level ρ^{p-1})
        for f in [Functional::RN, Functional::SN, Functional::VN] {
            let unit = ConstraintSet::l1_ball(5000, 1.0).unwrap();
            let big = ConstraintSet::l1_ball(5000, 2.0).unwrap();
            let p = f.exponent();
            let q_big = FixedPointQuery::new(f, 0.3, 64, Backend::ClosedForm);
            let q_unit = FixedPointQuery::new(f, 0.3 * 2f64.powi(p - 1), 64, Backend::ClosedForm);
            let a = fixed_point(&big, &q_big, &mc()).unwrap();
            let b = fixed_point(&unit, &q_unit, &mc()).unwrap();
            assert!((a - 2.0 * b).abs() <= 1e-12 * a.max(1.0), "{f}: {a} vs {b}");
        }
    }

    #[test]
    fn ambient_width_fixed_point_is_zero_for_large_n() {
        let set = ConstraintSet::ambient(50).unwrap();
        let q = FixedPointQuery::new(Functional::RN, 1.0, 1_000_000, Backend::MonteCarlo);
        assert_eq!(fixed_point(&set, &q, &mc()).unwrap(), 0.0);
        let q = FixedPointQuery::new(Functional::RN, 1.0, 10, Backend::MonteCarlo);
        assert_eq!(fixed_point(&set, &q, &mc()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn sparse_cone_fixed_points_follow_homogeneity() {
        let set = ConstraintSet::sparse(1024, 16).unwrap();
        let w = sparse_unit_width(1024, 16);
        let q = FixedPointQuery::new(Functional::SN, 0.5, 4096, Backend::ClosedForm);
        let v = fixed_point(&set, &q, &mc()).unwrap();
        assert!((v - w / (0.5 * 64.0)).abs() < 1e-12);
        let q = FixedPointQuery::new(Functional::VN, 0.5, 4096, Backend::ClosedForm);
        let v = fixed_point(&set, &q, &mc()).unwrap();
        assert!((v - (w / 32.0).sqrt()).abs() < 1e-12);
        let q = FixedPointQuery::new(Functional::R2, 0.5, 4096, Backend::ClosedForm);
        let v = fixed_point(&set, &q, &mc()).unwrap();
        assert!((v - sparse_unit_width(1024, 32) / 32.0).abs() < 1e-12);
    }

    #[test]
    fn bisection_result_satisfies_the_infimum_definition() {
        let set = ConstraintSet::l1_ball(200, 1.0).unwrap();
        let panel = WidthPanel::new(200, 400, 11);
        for (f, level, big_n) in [(Functional::RN, 1.0, 50), (Functional::SN, 0.7, 300), (Functional::VN, 2.0, 100)] {
            let q = FixedPointQuery::new(f, level, big_n, Backend::MonteCarlo);
            let rep = fixed_point_report(&set, &q, &mc()).unwrap();
            let r = rep.value;
            assert!(r > 0.0 && rep.warnings.is_empty(), "{f}: {rep:?}");
            let bound = |r: f64| level * r.powi(f.exponent()) * (big_n as f64).sqrt();
            assert!(panel.estimate(&set, r).value <= bound(r));
            assert!(panel.estimate(&set, 0.9 * r).value > bound(0.9 * r));
        }
    }

    #[test]
    fn local_r0_surrogate_is_finite_and_ordered() {
        let set = ConstraintSet::l1_ball(100, 1.0).unwrap();
        let q = FixedPointQuery::new(Functional::R2, 0.2, 1000, Backend::MonteCarlo).with_shell(1.0);
        let local = fixed_point(&set, &q, &mc()).unwrap();
        let global = fixed_point(&set, &FixedPointQuery { shell_r0: None, ..q }, &mc()).unwrap();
        assert!(local > 0.0 && local.is_finite());
        // the global surrogate takes the worst center
        assert!(global >= local * (1.0 - 1e-9), "{global} < {local}");
    }

    #[test]
    fn packing_fixed_point_is_within_the_shell_diameter() {
        let set = ConstraintSet::l2_ball(6, 1.0).unwrap();
        let q = FixedPointQuery::new(Functional::QN, 1.0, 100, Backend::MonteCarlo).with_shell(0.5);
        let cfg = MonteCarloConfig { packing_candidates: 100, packing_centers: 2, iterations: 30, ..mc() };
        let v = fixed_point(&set, &q, &cfg).unwrap();
        assert!(v > 0.0 && v <= 2.05 * 0.5, "{v}");
        let q = FixedPointQuery { shell_r0: None, ..q };
        assert!(fixed_point(&set, &q, &cfg).is_err());
    }

    #[test]
    fn validation() {
        let set = ConstraintSet::l2_ball(3, 1.0).unwrap();
        let q = FixedPointQuery::new(Functional::RN, 1.0, 10, Backend::ClosedForm);
        assert!(matches!(fixed_point(&set, &q, &mc()), Err(Error::UnsupportedSet(_))));
        let q = FixedPointQuery::new(Functional::RN, 0.0, 10, Backend::MonteCarlo);
        assert!(matches!(fixed_point(&set, &q, &mc()), Err(Error::InvalidArgument(_))));
        assert_eq!("sN".parse::<Functional>().unwrap(), Functional::SN);
        assert_eq!("monte-carlo".parse::<Backend>().unwrap(), Backend::MonteCarlo);
    }
}
