//! Support functions of localized caps `T ∩ rB_2` and gaussian mean widths.

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ConstraintSet;
use crate::ensembles::{gaussian_vector, McMean};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, tag};

/// Monte Carlo estimate of a gaussian mean width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// A gaussian vector preprocessed for fast support-function evaluation:
/// magnitudes sorted in decreasing order with running sums.
pub(crate) struct SortedDraw {
    abs_desc: Vec<f64>,
    /// `prefix[k] = sum of the k largest magnitudes`
    prefix: Vec<f64>,
    /// `prefix_sq[k] = sum of the k largest squares`
    prefix_sq: Vec<f64>,
}

impl SortedDraw {
    pub(crate) fn new(g: &[f64]) -> Self {
        let mut abs_desc: Vec<f64> = g.iter().map(|v| v.abs()).collect();
        abs_desc.sort_by(|a, b| b.total_cmp(a));
        let mut prefix = Vec::with_capacity(abs_desc.len() + 1);
        let mut prefix_sq = Vec::with_capacity(abs_desc.len() + 1);
        let (mut s, mut q) = (0.0, 0.0);
        prefix.push(0.0);
        prefix_sq.push(0.0);
        for &a in &abs_desc {
            s += a;
            q += a * a;
            prefix.push(s);
            prefix_sq.push(q);
        }
        Self { abs_desc, prefix, prefix_sq }
    }

    fn norm(&self) -> f64 {
        self.prefix_sq[self.abs_desc.len()].sqrt()
    }

    /// `sup { <g,t> : ||t||_1 <= rho, ||t||_2 <= r }` via the dual
    /// `min_{lambda >= 0} lambda rho + r ||soft(g, lambda)||_2`, which is convex
    /// and piecewise smooth between consecutive sorted magnitudes.
    fn l1_cap(&self, rho: f64, r: f64) -> f64 {
        let a = &self.abs_desc;
        let n = a.len();
        if n == 0 || a[0] == 0.0 {
            return 0.0;
        }
        let c = rho / r;
        let h = |lambda: f64, k: usize| {
            let q = self.prefix_sq[k] - 2.0 * lambda * self.prefix[k] + k as f64 * lambda * lambda;
            lambda * rho + r * q.max(0.0).sqrt()
        };
        // lambda >= a[0]: nothing survives, value lambda*rho
        let mut best = a[0] * rho;
        // interval (a[k], a[k-1]] has exactly k active coordinates; a[n] := 0
        for k in 1..=n {
            let hi = a[k - 1];
            let lo = if k < n { a[k] } else { 0.0 };
            best = best.min(h(lo, k));
            let kf = k as f64;
            if kf > c * c {
                let (s, q) = (self.prefix[k], self.prefix_sq[k]);
                let disc = (kf * q - s * s).max(0.0) / (kf - c * c);
                let lambda = (s - c * disc.sqrt()) / kf;
                if lambda > lo && lambda < hi {
                    best = best.min(h(lambda, k));
                }
            }
        }
        best.max(0.0)
    }

    fn sparse_cap(&self, d: usize, r: f64) -> f64 {
        r * self.prefix_sq[d.min(self.abs_desc.len())].sqrt()
    }

    pub(crate) fn cap(&self, set: &ConstraintSet, r: f64) -> f64 {
        match *set {
            ConstraintSet::SparseCap { d, .. } => self.sparse_cap(d, r),
            ConstraintSet::L1Ball { radius, .. } => {
                if r >= radius {
                    // the l2 constraint is inactive
                    radius * self.abs_desc.first().copied().unwrap_or(0.0)
                } else {
                    self.l1_cap(radius, r)
                }
            }
            ConstraintSet::L2Ball { radius, .. } => r.min(radius) * self.norm(),
            ConstraintSet::Ambient { .. } => r * self.norm(),
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return invalid(format!("cap radius must be positive and finite, got {r}"));
    }
    Ok(())
}

/// Exact `sup { |<g,t>| : t ∈ set, ||t||_2 <= r }`.
pub fn support_function_cap(set: &ConstraintSet, r: f64, g: &Array1<f64>) -> Result<f64> {
    check_radius(r)?;
    set.check_dim(g)?;
    Ok(SortedDraw::new(g.as_slice().expect("contiguous")).cap(set, r))
}

const CHUNK: usize = 256;
/// Above this many stored floats the draws are regenerated on each use.
const PANEL_LIMIT: usize = 1 << 24;

/// A reusable family of gaussian draws. Draw `j` comes from its own
/// sub-stream, so values do not depend on scheduling, and reusing the same
/// panel across radii gives common random numbers.
pub(crate) struct WidthPanel {
    n: usize,
    draws: usize,
    seed: u64,
    stored: Option<Vec<SortedDraw>>,
}

impl WidthPanel {
    pub(crate) fn new(n: usize, draws: usize, seed: u64) -> Self {
        let mut panel = Self { n, draws, seed, stored: None };
        if n.saturating_mul(draws).saturating_mul(3) <= PANEL_LIMIT {
            panel.stored = Some((0..draws).into_par_iter().map(|j| panel.draw(j)).collect());
        }
        panel
    }

    fn draw(&self, j: usize) -> SortedDraw {
        let mut r = rng::stream(self.seed, &[tag::SAMPLE, j as u64]);
        let g = gaussian_vector(self.n, &mut r);
        SortedDraw::new(g.as_slice().expect("contiguous"))
    }

    fn values(&self, set: &ConstraintSet, r: f64) -> Vec<f64> {
        match &self.stored {
            Some(draws) => {
                if draws.len() >= 4 * CHUNK {
                    draws.par_iter().map(|d| d.cap(set, r)).collect()
                } else {
                    draws.iter().map(|d| d.cap(set, r)).collect()
                }
            }
            None => (0..self.draws).into_par_iter().map(|j| self.draw(j).cap(set, r)).collect(),
        }
    }

    pub(crate) fn estimate(&self, set: &ConstraintSet, r: f64) -> WidthEstimate {
        let m = McMean::from_values(self.values(set, r).into_iter());
        WidthEstimate { value: m.mean, std_error: m.std_error, samples: m.samples }
    }
}

/// Monte Carlo estimate of `ℓ(set ∩ rB_2)` from `gaussian_draws` independent
/// standard gaussian vectors.
pub fn mean_width_mc(set: &ConstraintSet, r: f64, gaussian_draws: usize, seed: u64) -> Result<WidthEstimate> {
    check_radius(r)?;
    set.validate()?;
    if gaussian_draws < 2 {
        return invalid("at least two gaussian draws are required");
    }
    Ok(WidthPanel::new(set.dimension(), gaussian_draws, seed).estimate(set, r))
}

/// `ℓ(B_1^n ∩ uB_2)` with constant one.
pub(crate) fn l1_unit_width(n: usize, u: f64) -> f64 {
    let nf = n as f64;
    if u * u * nf >= 1.0 {
        (std::f64::consts::E * nf * u * u).ln().sqrt()
    } else {
        u * nf.sqrt()
    }
}

/// `sqrt(d log(en/d))`, the width of the d-sparse unit cap up to constants.
pub(crate) fn sparse_unit_width(n: usize, d: usize) -> f64 {
    let (nf, df) = (n as f64, d as f64);
    (df * (std::f64::consts::E * nf / df).ln()).sqrt()
}

/// Order-of-magnitude width of the cap with all constants set to one:
/// `sqrt(log(e n r^2))` or `r sqrt(n)` for the unit `l1` ball (rescaled for
/// other radii) and `r sqrt(d log(en/d))` for `sparse_cap`.
pub fn mean_width_closed_form(set: &ConstraintSet, r: f64) -> Result<f64> {
    check_radius(r)?;
    set.validate()?;
    match *set {
        ConstraintSet::L1Ball { n, radius } => Ok(radius * l1_unit_width(n, r / radius)),
        ConstraintSet::SparseCap { n, d } => Ok(r * sparse_unit_width(n, d)),
        other => Err(Error::UnsupportedSet(format!("no closed-form width for {other}"))),
    }
}
