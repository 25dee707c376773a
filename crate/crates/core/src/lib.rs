//! Empirical risk minimization for noisy phase retrieval.
//!
//! Given measurements `y_i = <a_i, x0>^2 + w_i` with isotropic subgaussian
//! vectors `a_i`, the crate provides
//!
//! * [`ensembles`]: measurement and noise generators, plus Monte Carlo
//!   estimates of the distributional constants (small-ball constant,
//!   isotropy defect, tail profile);
//! * [`sets`]: constraint sets with projections, exact localized support
//!   functions, gaussian mean-width estimators, fixed-point solvers and
//!   greedy packing estimates;
//! * [`erm`]: the squared-loss objective, its gradient, spectral
//!   initialization, a projected-gradient solver and an exhaustive oracle;
//! * [`empirics`]: discrete Orlicz norms, rearrangement functionals and the
//!   lemma-level diagnostics used by the `check` suites;
//! * [`harness`]: rate predictors, seeded rate-scaling experiments, slope
//!   fitting and CSV/JSON persistence.

pub mod empirics;
pub mod ensembles;
pub mod erm;
mod error;
pub mod harness;
mod linalg;
pub mod rng;
pub mod sets;

pub use error::{Error, Result};
