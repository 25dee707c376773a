//! Measurement ensembles, noise models and the constants the rates depend on.
//!
//! All generators are pure functions of their arguments and a seed. Each
//! consumer (rows of `A`, the noise vector, Monte Carlo pairs) reads its own
//! stream derived with [`crate::rng`].

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::norm2;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    StandardGaussian,
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]` per coordinate.
    ScaledUniform,
}

/// An isotropic subgaussian law on `R^n` with independent coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub kind: EnsembleKind,
    pub dimension: usize,
}

impl Ensemble {
    pub fn new(kind: EnsembleKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return invalid("ensemble dimension must be positive");
        }
        Ok(Self { kind, dimension })
    }

    pub fn gaussian(dimension: usize) -> Result<Self> {
        Self::new(EnsembleKind::StandardGaussian, dimension)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return invalid("ensemble dimension must be positive");
        }
        Ok(())
    }

    fn entry<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            EnsembleKind::StandardGaussian => rng.sample(StandardNormal),
            EnsembleKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EnsembleKind::ScaledUniform => {
                let s = 3f64.sqrt();
                rng.random_range(-s..=s)
            }
        }
    }

    /// Fills `out` with one draw of the measurement vector.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.entry(rng);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
    BoundedUniform,
}

/// Mean-zero noise. `scale` is the standard deviation for `gaussian` and the
/// half-width `||w||_inf` for `bounded_uniform`; it is ignored for `none`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self> {
        let m = Self { kind, scale };
        m.validate()?;
        Ok(m)
    }

    pub fn none() -> Self {
        Self { kind: NoiseKind::None, scale: 0.0 }
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, scale)
    }

    pub fn bounded_uniform(scale: f64) -> Result<Self> {
        Self::new(NoiseKind::BoundedUniform, scale)
    }

    pub fn with_scale(self, scale: f64) -> Result<Self> {
        Self::new(self.kind, scale)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return invalid(format!("noise scale must be a nonnegative finite number, got {}", self.scale));
        }
        Ok(())
    }
}

/// Quadratic measurements of a ground truth together with the generating noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSample {
    /// `N x n`, one measurement vector per row.
    pub a: Array2<f64>,
    pub y: Array1<f64>,
    /// Ground truth, when known.
    pub x0: Option<Array1<f64>>,
    /// The realized noise `w`, when known.
    pub noise: Option<Array1<f64>>,
}

impl PhaseSample {
    /// Builds `y_i = <a_i, x0>^2 + w_i`.
    pub fn from_parts(a: Array2<f64>, x0: Array1<f64>, noise: Array1<f64>) -> Result<Self> {
        if a.ncols() != x0.len() {
            return invalid(format!("x0 has dimension {}, measurements have {}", x0.len(), a.ncols()));
        }
        if a.nrows() != noise.len() {
            return invalid(format!("noise has length {}, expected {}", noise.len(), a.nrows()));
        }
        let ax = a.dot(&x0);
        let y = &ax * &ax + &noise;
        Ok(Self { a, y, x0: Some(x0), noise: Some(noise) })
    }

    /// A sample with observed responses only.
    pub fn from_observations(a: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if a.nrows() != y.len() {
            return invalid(format!("y has length {}, expected {}", y.len(), a.nrows()));
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return invalid("measurement matrix must be nonempty");
        }
        Ok(Self { a, y, x0: None, noise: None })
    }

    pub fn n_samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.a.ncols()
    }
}

/// Draws `n_samples` independent rows from `ensemble`.
pub fn draw_measurements(ensemble: &Ensemble, n_samples: usize, seed: u64) -> Result<Array2<f64>> {
    ensemble.validate()?;
    if n_samples == 0 {
        return invalid("number of measurements must be positive");
    }
    let mut rng = rng::stream(seed, &[tag::MEASUREMENTS]);
    let n = ensemble.dimension;
    let mut a = Array2::<f64>::zeros((n_samples, n));
    for mut row in a.rows_mut() {
        ensemble.fill(&mut rng, row.as_slice_mut().expect("standard layout"));
    }
    Ok(a)
}

/// Draws `n_samples` independent noise values.
pub fn draw_noise(model: &NoiseModel, n_samples: usize, seed: u64) -> Result<Array1<f64>> {
    model.validate()?;
    if n_samples == 0 {
        return invalid("number of noise draws must be positive");
    }
    let mut rng = rng::stream(seed, &[tag::NOISE]);
    let s = model.scale;
    Ok(match model.kind {
        NoiseKind::None => Array1::zeros(n_samples),
        NoiseKind::Gaussian => (0..n_samples).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseKind::BoundedUniform => {
            (0..n_samples).map(|_| if s == 0.0 { 0.0 } else { rng.random_range(-s..=s) }).collect()
        }
    })
}

/// Generates a [`PhaseSample`]; measurements and noise use independent
/// sub-streams of `seed`.
pub fn generate_sample(
    x0: &Array1<f64>,
    ensemble: &Ensemble,
    noise: &NoiseModel,
    n_samples: usize,
    seed: u64,
) -> Result<PhaseSample> {
    if x0.len() != ensemble.dimension {
        return invalid(format!("x0 has dimension {}, ensemble has {}", x0.len(), ensemble.dimension));
    }
    let a = draw_measurements(ensemble, n_samples, rng::derive(seed, &[tag::SAMPLE, 0]))?;
    let w = draw_noise(noise, n_samples, rng::derive(seed, &[tag::SAMPLE, 1]))?;
    PhaseSample::from_parts(a, x0.clone(), w)
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array1<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform draw from the unit sphere `S^{n-1}`.
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let g = gaussian_vector(n, rng);
        let ng = norm2(g.view());
        if ng > 0.0 {
            return g / ng;
        }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McMean {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McMean {
    pub(crate) fn from_values(values: impl Iterator<Item = f64>) -> Self {
        // Welford
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self { mean, std_error: (var / n.max(1) as f64).sqrt(), samples: n }
    }
}

fn check_vector(ensemble: &Ensemble, v: &Array1<f64>, what: &str) -> Result<()> {
    ensemble.validate()?;
    if v.len() != ensemble.dimension {
        return invalid(format!("{what} has dimension {}, ensemble has {}", v.len(), ensemble.dimension));
    }
    Ok(())
}

/// Monte Carlo estimate of `E|<a,s><a,t>|`.
pub fn smallball_moment(
    ensemble: &Ensemble,
    s: &Array1<f64>,
    t: &Array1<f64>,
    mc_samples: usize,
    seed: u64,
) -> Result<McMean> {
    check_vector(ensemble, s, "s")?;
    check_vector(ensemble, t, "t")?;
    if mc_samples == 0 {
        return invalid("mc_samples must be positive");
    }
    let mut rng = rng::stream(seed, &[tag::MEASUREMENTS]);
    let mut a = vec![0.0; ensemble.dimension];
    Ok(McMean::from_values((0..mc_samples).map(|_| {
        ensemble.fill(&mut rng, &mut a);
        let (mut ps, mut pt) = (0.0, 0.0);
        for ((ai, si), ti) in a.iter().zip(s.iter()).zip(t.iter()) {
            ps += ai * si;
            pt += ai * ti;
        }
        (ps * pt).abs()
    })))
}

/// Monte Carlo estimate of `E<a,t>^2`.
pub fn second_moment(ensemble: &Ensemble, t: &Array1<f64>, mc_samples: usize, seed: u64) -> Result<McMean> {
    smallball_moment(ensemble, t, t, mc_samples, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallBallEstimate {
    /// Minimum over the sampled unit pairs of the estimated `E|<a,s><a,t>|`.
    pub kappa0: f64,
    pub std_error: f64,
    pub worst_pair: (Array1<f64>, Array1<f64>),
}

/// Estimates the small-ball constant `kappa0` in
/// `E|<a,s><a,t>| >= kappa0 ||s|| ||t||` by minimizing over `pair_count`
/// unit pairs drawn uniformly on the sphere.
pub fn estimate_smallball_kappa0(
    ensemble: &Ensemble,
    pair_count: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<SmallBallEstimate> {
    ensemble.validate()?;
    if pair_count == 0 {
        return invalid("pair_count must be at least 1");
    }
    if mc_samples < 100 {
        return invalid("mc_samples must be at least 100");
    }
    let n = ensemble.dimension;
    let estimates: Vec<(McMean, Array1<f64>, Array1<f64>)> = (0..pair_count as u64)
        .into_par_iter()
        .map(|k| {
            let mut prng = rng::stream(seed, &[tag::PAIR, k]);
            let s = random_unit_vector(n, &mut prng);
            let t = random_unit_vector(n, &mut prng);
            let m = smallball_moment(ensemble, &s, &t, mc_samples, rng::derive(seed, &[tag::PAIR, k, 1]))
                .expect("validated");
            (m, s, t)
        })
        .collect();
    let (m, s, t) = estimates.into_iter().min_by(|a, b| a.0.mean.total_cmp(&b.0.mean)).expect("pair_count >= 1");
    Ok(SmallBallEstimate { kappa0: m.mean, std_error: m.std_error, worst_pair: (s, t) })
}

/// Largest deviation `|mean <a,t>^2 - 1|` over `directions` random unit
/// directions.
pub fn estimate_isotropy_defect(ensemble: &Ensemble, directions: usize, mc_samples: usize, seed: u64) -> Result<f64> {
    ensemble.validate()?;
    if directions == 0 {
        return invalid("directions must be at least 1");
    }
    if mc_samples == 0 {
        return invalid("mc_samples must be positive");
    }
    let n = ensemble.dimension;
    let defects: Vec<f64> = (0..directions as u64)
        .into_par_iter()
        .map(|k| {
            let t = random_unit_vector(n, &mut rng::stream(seed, &[tag::PAIR, k]));
            let m = second_moment(ensemble, &t, mc_samples, rng::derive(seed, &[tag::PAIR, k, 1])).expect("validated");
            (m.mean - 1.0).abs()
        })
        .collect();
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// Empirical tail `P(|<a,t>| > u)` for each threshold `u`.
pub fn tail_profile(
    ensemble: &Ensemble,
    t: &Array1<f64>,
    thresholds: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_vector(ensemble, t, "t")?;
    if samples == 0 {
        return invalid("samples must be positive");
    }
    let mut rng = rng::stream(seed, &[tag::MEASUREMENTS]);
    let mut a = vec![0.0; ensemble.dimension];
    let mut counts = vec![0usize; thresholds.len()];
    for _ in 0..samples {
        ensemble.fill(&mut rng, &mut a);
        let p: f64 = a.iter().zip(t.iter()).map(|(x, y)| x * y).sum::<f64>().abs();
        for (c, &u) in counts.iter_mut().zip(thresholds) {
            if p > u {
                *c += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / samples as f64).collect())
}

/// Empirical subgaussian constant along a unit direction `t`: the smallest
/// `L` with `P(|<a,t>| >= L u) <= 2 exp(-u^2/2)` on the grid `u = 1, 1.25, ...`
/// as far as the sample resolves the tail (at least ten exceedances).
pub fn estimate_subgaussian_constant(ensemble: &Ensemble, t: &Array1<f64>, samples: usize, seed: u64) -> Result<f64> {
    check_vector(ensemble, t, "t")?;
    if samples < 100 {
        return invalid("samples must be at least 100");
    }
    let scale = norm2(t.view());
    if scale == 0.0 {
        return invalid("direction must be nonzero");
    }
    let mut rng = rng::stream(seed, &[tag::MEASUREMENTS]);
    let mut a = vec![0.0; ensemble.dimension];
    let mut values: Vec<f64> = (0..samples)
        .map(|_| {
            ensemble.fill(&mut rng, &mut a);
            a.iter().zip(t.iter()).map(|(x, y)| x * y).sum::<f64>().abs() / scale
        })
        .collect();
    values.sort_by(|x, y| y.total_cmp(x));
    let mut l_hat: f64 = 0.0;
    let mut u: f64 = 1.0;
    loop {
        let p = 2.0 * (-u * u / 2.0).exp();
        let allowed = (p * samples as f64).floor() as usize;
        if allowed < 10 {
            break;
        }
        if allowed < samples {
            // the (allowed+1)-th largest value must lie below L u
            l_hat = l_hat.max(values[allowed] / u);
        }
        u += 0.25;
    }
    Ok(l_hat)
}
