//! Constraint sets and their complexity functionals.

mod fixed_point;
mod packing;
mod width;

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::gaussian_vector;
use crate::error::{invalid, Error, Result};
use crate::linalg::norm2;

pub(crate) use fixed_point::closed_width_fixed_point;
pub use fixed_point::{
    fixed_point, fixed_point_report, Backend, FixedPointQuery, FixedPointReport, Functional, MonteCarloConfig,
};
pub use packing::{packing_count, packing_count_from, packing_points, sudakov_complexity, PackingQuery};
pub use width::{mean_width_closed_form, mean_width_mc, support_function_cap, WidthEstimate};

/// The model set `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSet {
    /// Vectors with at most `d` nonzero coordinates (a cone).
    SparseCap {
        n: usize,
        d: usize,
    },
    L1Ball {
        n: usize,
        radius: f64,
    },
    L2Ball {
        n: usize,
        radius: f64,
    },
    Ambient {
        n: usize,
    },
}

impl ConstraintSet {
    pub fn sparse(n: usize, d: usize) -> Result<Self> {
        let s = Self::SparseCap { n, d };
        s.validate()?;
        Ok(s)
    }

    pub fn l1_ball(n: usize, radius: f64) -> Result<Self> {
        let s = Self::L1Ball { n, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn l2_ball(n: usize, radius: f64) -> Result<Self> {
        let s = Self::L2Ball { n, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn ambient(n: usize) -> Result<Self> {
        let s = Self::Ambient { n };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        if n == 0 {
            return invalid("set dimension must be positive");
        }
        match *self {
            Self::SparseCap { d, .. } if d == 0 || d > n => {
                invalid(format!("sparsity must satisfy 1 <= d <= n, got d={d}, n={n}"))
            }
            Self::L1Ball { radius, .. } | Self::L2Ball { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
                invalid(format!("radius must be positive and finite, got {radius}"))
            }
            _ => Ok(()),
        }
    }

    pub fn dimension(&self) -> usize {
        match *self {
            Self::SparseCap { n, .. } | Self::L1Ball { n, .. } | Self::L2Ball { n, .. } | Self::Ambient { n } => n,
        }
    }

    /// Largest Euclidean norm of a member; infinite for cones.
    pub fn max_norm(&self) -> f64 {
        match *self {
            Self::L1Ball { radius, .. } | Self::L2Ball { radius, .. } => radius,
            _ => f64::INFINITY,
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.max_norm()
    }

    pub fn is_cone(&self) -> bool {
        matches!(self, Self::SparseCap { .. } | Self::Ambient { .. })
    }

    /// `factor * T`.
    pub(crate) fn scaled(&self, factor: f64) -> Self {
        match *self {
            Self::L1Ball { n, radius } => Self::L1Ball { n, radius: radius * factor },
            Self::L2Ball { n, radius } => Self::L2Ball { n, radius: radius * factor },
            cone => cone,
        }
    }

    fn check_dim(&self, x: &Array1<f64>) -> Result<()> {
        self.validate()?;
        if x.len() != self.dimension() {
            return invalid(format!("vector has dimension {}, set has {}", x.len(), self.dimension()));
        }
        Ok(())
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::SparseCap { n, d } => write!(f, "sparse:{n}:{d}"),
            Self::L1Ball { n, radius } => write!(f, "l1:{n}:{radius}"),
            Self::L2Ball { n, radius } => write!(f, "l2:{n}:{radius}"),
            Self::Ambient { n } => write!(f, "ambient:{n}"),
        }
    }
}

/// Parses `sparse:N:D`, `l1:N:RADIUS`, `l2:N:RADIUS` or `ambient:N`.
impl FromStr for ConstraintSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || {
            Error::InvalidArgument(format!("cannot parse set `{s}`; expected sparse:N:D, l1:N:R, l2:N:R or ambient:N"))
        };
        let int = |p: &str| p.parse::<usize>().map_err(|_| bad());
        let real = |p: &str| p.parse::<f64>().map_err(|_| bad());
        let set = match parts.as_slice() {
            ["sparse", n, d] => Self::SparseCap { n: int(n)?, d: int(d)? },
            ["l1", n, r] => Self::L1Ball { n: int(n)?, radius: real(r)? },
            ["l2", n, r] => Self::L2Ball { n: int(n)?, radius: real(r)? },
            ["ambient", n] => Self::Ambient { n: int(n)? },
            _ => return Err(bad()),
        };
        set.validate()?;
        Ok(set)
    }
}

/// Indices of `v` ordered by decreasing magnitude; ties keep the lower index first.
pub(crate) fn order_by_magnitude(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()));
    idx
}

fn project_l1(x: &Array1<f64>, radius: f64) -> Array1<f64> {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return x.clone();
    }
    let mut u: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    x.mapv(|v| v.signum() * (v.abs() - theta).max(0.0))
}

/// A Euclidean-nearest point of `set` to `x`. For `sparse_cap` the `d`
/// largest magnitudes are kept, ties resolved toward lower indices.
pub fn project(set: &ConstraintSet, x: &Array1<f64>) -> Result<Array1<f64>> {
    set.check_dim(x)?;
    Ok(match *set {
        ConstraintSet::Ambient { .. } => x.clone(),
        ConstraintSet::L2Ball { radius, .. } => {
            let nx = norm2(x.view());
            if nx <= radius {
                x.clone()
            } else {
                x * (radius / nx)
            }
        }
        ConstraintSet::L1Ball { radius, .. } => project_l1(x, radius),
        ConstraintSet::SparseCap { d, .. } => {
            let order = order_by_magnitude(x.as_slice().expect("contiguous"));
            let mut out = Array1::zeros(x.len());
            for &i in order.iter().take(d) {
                out[i] = x[i];
            }
            out
        }
    })
}

/// Membership up to an additive tolerance on the defining norm; for
/// `sparse_cap`, coordinates with magnitude at most `tol` count as zero.
/// A vector of the wrong dimension is not a member.
pub fn contains(set: &ConstraintSet, x: &Array1<f64>, tol: f64) -> bool {
    if x.len() != set.dimension() || x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    match *set {
        ConstraintSet::Ambient { .. } => true,
        ConstraintSet::L2Ball { radius, .. } => norm2(x.view()) <= radius + tol,
        ConstraintSet::L1Ball { radius, .. } => x.iter().map(|v| v.abs()).sum::<f64>() <= radius + tol,
        ConstraintSet::SparseCap { d, .. } => x.iter().filter(|v| v.abs() > tol).count() <= d,
    }
}

/// Draws a member of `set` with Euclidean norm exactly `r0`, or `None` if the
/// shell does not meet the set.
pub(crate) fn sample_shell_point<R: Rng + ?Sized>(set: &ConstraintSet, r0: f64, rng: &mut R) -> Option<Array1<f64>> {
    let n = set.dimension();
    if r0 == 0.0 {
        return Some(Array1::zeros(n));
    }
    let sparse_direction = |k: usize, rng: &mut R| {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        let g = gaussian_vector(k, rng);
        let mut v = Array1::<f64>::zeros(n);
        for (c, &i) in idx.iter().take(k).enumerate() {
            v[i] = g[c];
        }
        let nv = norm2(v.view());
        if nv > 0.0 {
            v / nv
        } else {
            let mut e = Array1::zeros(n);
            e[idx[0]] = 1.0;
            e
        }
    };
    match *set {
        ConstraintSet::SparseCap { d, .. } => Some(sparse_direction(d, rng) * r0),
        ConstraintSet::Ambient { .. } => Some(sparse_direction(n, rng) * r0),
        ConstraintSet::L2Ball { radius, .. } => (r0 <= radius).then(|| sparse_direction(n, rng) * r0),
        ConstraintSet::L1Ball { radius, .. } => {
            if r0 > radius {
                return None;
            }
            let k = ((radius / r0).powi(2).floor() as usize).clamp(1, n);
            let v = sparse_direction(k, rng) * r0;
            if v.iter().map(|x| x.abs()).sum::<f64>() <= radius {
                Some(v)
            } else {
                let mut e = Array1::zeros(n);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                e[rng.random_range(0..n)] = sign * r0;
                Some(e)
            }
        }
    }
}
