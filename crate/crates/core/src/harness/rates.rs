//! Theoretical rate predictors with every absolute constant set to 1.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sets::{closed_width_fixed_point, ConstraintSet, Functional};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `σ = 0`: the rate is the noise-free fixed point.
    #[serde(rename = "noise_free_r0")]
    NoiseFreeR0,
    /// Noise-dominated product error without a signal-size split.
    #[serde(rename = "high_noise_r2")]
    HighNoiseR2,
    /// `||x0||` above the small-signal threshold: the rate is `s_N*`.
    #[serde(rename = "large_signal_sN")]
    LargeSignalSN,
    /// `||x0||` below the small-signal threshold: the rate is `v_N*`.
    #[serde(rename = "small_signal_vN")]
    SmallSignalVN,
    /// `σ/||x0||` below `r_N*/sqrt(log N)`: the rate is `r_N*`.
    #[serde(rename = "low_snr_rN")]
    LowSnrRN,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Self::NoiseFreeR0 => "noise_free_r0",
            Self::HighNoiseR2 => "high_noise_r2",
            Self::LargeSignalSN => "large_signal_sN",
            Self::SmallSignalVN => "small_signal_vN",
            Self::LowSnrRN => "low_snr_rN",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub n: usize,
    /// Sparsity; `None` for the `l1` predictor.
    pub d: Option<usize>,
    pub n_samples: usize,
    pub sigma: f64,
    pub r0: f64,
}

/// A predicted bound. `rate` bounds `min(||x̂ - x0||, ||x̂ + x0||)` and
/// `product_rate` bounds `||x̂ - x0|| ||x̂ + x0||`; both are `+inf` when no
/// guarantee applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub rate: f64,
    pub product_rate: f64,
    pub regime: Regime,
    pub inputs: RateInputs,
}

fn check_common(n_samples: usize, sigma: f64, r0: f64) -> Result<()> {
    if n_samples < 2 {
        return invalid(format!("N must be at least 2, got {n_samples}"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return invalid(format!("sigma must be a nonnegative finite number, got {sigma}"));
    }
    if !(r0 >= 0.0) || !r0.is_finite() {
        return invalid(format!("R0 must be a nonnegative finite number, got {r0}"));
    }
    Ok(())
}

/// Largest dimension accepted by the predictors.
pub const MAX_DIMENSION: usize = 1 << 40;

/// `d`-sparse signals: product rate `σ sqrt(d log(en/d) / N) sqrt(log N)`;
/// the sign rate is `(product)/R0` when `R0^2 >= product` and `sqrt(product)`
/// otherwise. Without noise the rate is 0 once `N >= d log(en/d)` and
/// unbounded below that.
pub fn predict_rate_sparse(n: usize, d: usize, n_samples: usize, sigma: f64, r0: f64) -> Result<RatePrediction> {
    if d == 0 || d > n || n > MAX_DIMENSION {
        return invalid(format!("need 1 <= d <= n <= 2^40, got n = {n}, d = {d}"));
    }
    check_common(n_samples, sigma, r0)?;
    let inputs = RateInputs { n, d: Some(d), n_samples, sigma, r0 };
    let (nf, df, big_n) = (n as f64, d as f64, n_samples as f64);
    let complexity = df * (std::f64::consts::E * nf / df).ln();
    if sigma == 0.0 {
        let rate = if big_n >= complexity { 0.0 } else { f64::INFINITY };
        return Ok(RatePrediction { rate, product_rate: rate, regime: Regime::NoiseFreeR0, inputs });
    }
    let product = sigma * (complexity / big_n).sqrt() * big_n.ln().sqrt();
    let (rate, regime) = if r0 * r0 >= product {
        (product / r0, Regime::LargeSignalSN)
    } else {
        (product.sqrt(), Regime::SmallSignalVN)
    };
    Ok(RatePrediction { rate, product_rate: product, regime, inputs })
}

/// Unit `l1` ball. Uses `r_N*(1)`, `s_N*(η)` with `η = R0/(σ sqrt(log N))`
/// and `v_N*(ζ)` with `ζ = 1/(σ sqrt(log N))`: the rate is `r_N*` when
/// `σ = 0` or `σ/R0 <= r_N*/sqrt(log N)`, otherwise `s_N*` when
/// `R0 >= v_N*` and `v_N*` when `R0 < v_N*`. Fixed points are those of the
/// closed-form width.
pub fn predict_rate_l1(n: usize, n_samples: usize, sigma: f64, r0: f64) -> Result<RatePrediction> {
    if !(2..=MAX_DIMENSION).contains(&n) {
        return invalid(format!("n must lie in [2, 2^40], got {n}"));
    }
    check_common(n_samples, sigma, r0)?;
    if r0 > 1.0 {
        return invalid(format!("R0 = {r0} exceeds the radius of the unit l1 ball"));
    }
    let inputs = RateInputs { n, d: None, n_samples, sigma, r0 };
    let set = ConstraintSet::L1Ball { n, radius: 1.0 };
    let log_n = (n_samples as f64).ln();
    let product_of = |rate: f64| rate * (rate + 2.0 * r0);
    let r_n = closed_width_fixed_point(&set, Functional::RN, 1.0, n_samples)?;
    if sigma == 0.0 {
        return Ok(RatePrediction { rate: r_n, product_rate: product_of(r_n), regime: Regime::NoiseFreeR0, inputs });
    }
    if r0 > 0.0 && sigma / r0 <= r_n / log_n.sqrt() {
        return Ok(RatePrediction { rate: r_n, product_rate: product_of(r_n), regime: Regime::LowSnrRN, inputs });
    }
    let zeta = 1.0 / (sigma * log_n.sqrt());
    let v_n = closed_width_fixed_point(&set, Functional::VN, zeta, n_samples)?;
    let (rate, regime) = if r0 >= v_n {
        (closed_width_fixed_point(&set, Functional::SN, r0 * zeta, n_samples)?, Regime::LargeSignalSN)
    } else {
        (v_n, Regime::SmallSignalVN)
    };
    Ok(RatePrediction { rate, product_rate: product_of(rate), regime, inputs })
}
