//! Greedy packing estimates and the Sudakov-type complexity `C(R0, r)`.

use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;

use super::{contains, project, sample_shell_point, ConstraintSet};
use crate::ensembles::random_unit_vector;
use crate::error::{invalid, Result};
use crate::linalg::{dist2, norm2};
use crate::rng::{self, tag};

/// Relative half-width of the band that stands in for the sphere `||x|| = R0`.
const SHELL_BAND: f64 = 0.01;

/// Describes the region `{x ∈ T : ||x - center|| <= ball_radius}` (optionally
/// intersected with the shell `||x|| ≈ shell_r0`) and how to search it.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingQuery {
    pub center: Array1<f64>,
    pub ball_radius: f64,
    /// Points of the packing are pairwise at distance `>= separation`.
    pub separation: f64,
    pub shell_r0: Option<f64>,
    pub candidates: usize,
    pub seed: u64,
}

/// Greedy maximal `separation`-separated subset of `points`, scanned in order.
pub fn packing_count_from(points: &[Array1<f64>], separation: f64) -> usize {
    greedy(points.iter().cloned(), separation).len()
}

fn greedy(points: impl Iterator<Item = Array1<f64>>, separation: f64) -> Vec<Array1<f64>> {
    let mut kept: Vec<Array1<f64>> = Vec::new();
    for p in points {
        if kept.iter().all(|q| dist2(p.view(), q.view()) >= separation) {
            kept.push(p);
        }
    }
    kept
}

fn in_region(set: &ConstraintSet, q: &PackingQuery, z: &Array1<f64>) -> bool {
    if !contains(set, z, 1e-12) || dist2(z.view(), q.center.view()) > q.ball_radius * (1.0 + 1e-12) {
        return false;
    }
    match q.shell_r0 {
        Some(r0) => (norm2(z.view()) - r0).abs() <= SHELL_BAND * r0,
        None => true,
    }
}

/// Pulls a point of the ball back toward the feasible region: projection onto
/// `T` and, for shell queries, radial rescaling onto the sphere.
fn repair(set: &ConstraintSet, shell_r0: Option<f64>, z: Array1<f64>) -> Array1<f64> {
    let mut z = project(set, &z).expect("dimension checked");
    if let Some(r0) = shell_r0 {
        let nz = norm2(z.view());
        if nz > 0.0 {
            z *= r0 / nz;
            if !contains(set, &z, 1e-12) {
                z = project(set, &z).expect("dimension checked");
            }
        }
    }
    z
}

fn validate(set: &ConstraintSet, q: &PackingQuery) -> Result<()> {
    set.check_dim(&q.center)?;
    if !(q.separation > 0.0) || !q.separation.is_finite() {
        return invalid(format!("separation must be positive, got {}", q.separation));
    }
    if !(q.ball_radius >= 0.0) || !q.ball_radius.is_finite() {
        return invalid(format!("ball radius must be nonnegative, got {}", q.ball_radius));
    }
    if q.candidates == 0 {
        return invalid("at least one candidate is required");
    }
    if let Some(r0) = q.shell_r0 {
        if !(r0 >= 0.0) || !r0.is_finite() {
            return invalid(format!("shell radius must be nonnegative, got {r0}"));
        }
    }
    Ok(())
}

/// A greedy separated configuration in the query region. Candidates are drawn
/// uniformly from the ball, repaired toward the set, and kept if they land in
/// the region; the center itself is tried first. Candidate `j` depends only on
/// `(seed, j)` and scales with `ball_radius`, so queries that differ only in
/// radius share their randomness.
pub fn packing_points(set: &ConstraintSet, q: &PackingQuery) -> Result<Vec<Array1<f64>>> {
    validate(set, q)?;
    let n = set.dimension();
    let candidates: Vec<Array1<f64>> = (0..q.candidates)
        .map(|j| {
            let mut r = rng::stream(q.seed, &[tag::SAMPLE, j as u64]);
            let radius = q.ball_radius * r.random::<f64>().powf(1.0 / n as f64);
            let z = &q.center + &(random_unit_vector(n, &mut r) * radius);
            repair(set, q.shell_r0, z)
        })
        .collect();
    let feasible = std::iter::once(q.center.clone()).chain(candidates).filter(|z| in_region(set, q, z));
    Ok(greedy(feasible, q.separation))
}

/// Size of [`packing_points`]; a lower bound on the packing number of the
/// region at scale `separation`. Returns 0 when no candidate is feasible.
pub fn packing_count(set: &ConstraintSet, q: &PackingQuery) -> Result<usize> {
    Ok(packing_points(set, q)?.len())
}

/// `C(R0, r) = sup_{x0 ∈ T, ||x0|| = R0} r sqrt(log M)` where `M` packs
/// `T ∩ R0 S^{n-1} ∩ (x0 + c0 r B_2)` at scale `r`; the supremum runs over
/// `centers` sampled shell points, and `M` is the greedy estimate.
pub fn sudakov_complexity(
    set: &ConstraintSet,
    r0: f64,
    r: f64,
    c0: f64,
    centers: usize,
    candidates: usize,
    seed: u64,
) -> Result<f64> {
    set.validate()?;
    if !(r > 0.0) || !(r0 > 0.0) || !(c0 > 0.0) {
        return invalid("shell radius, scale and c0 must be positive");
    }
    if centers == 0 {
        return invalid("at least one center is required");
    }
    let points: Vec<Array1<f64>> = (0..centers as u64)
        .map(|k| sample_shell_point(set, r0, &mut rng::stream(seed, &[tag::CENTER, k])))
        .collect::<Option<_>>()
        .ok_or_else(|| crate::Error::InvalidArgument(format!("the shell of radius {r0} does not meet {set}")))?;
    let counts: Vec<usize> = points
        .into_par_iter()
        .enumerate()
        .map(|(k, center)| {
            let q = PackingQuery {
                center,
                ball_radius: c0 * r,
                separation: r,
                shell_r0: Some(r0),
                candidates,
                seed: rng::derive(seed, &[tag::CENTER, k as u64, 1]),
            };
            packing_count(set, &q).expect("validated")
        })
        .collect();
    let m = counts.into_iter().max().unwrap_or(0).max(1);
    Ok(r * (m as f64).ln().sqrt())
}
