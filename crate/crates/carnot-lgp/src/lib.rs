//! Nonlocal least gradient (1-Laplacian) problems on Carnot groups.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`group`] — exact algebra of the catalog groups (abelian ℝⁿ, ℍ¹, 𝔼⁴):
//!   polynomial group laws, dilations, box distance, horizontal frames and
//!   difference-quotient convergence checks.
//! * [`domain`] / [`kernel`] — lattice discretization of a bounded domain
//!   with its halo, and the ε-step random-walk kernel on box balls.
//! * [`tv`] — the nonlocal total variation, the rescaled nonlocal gradient
//!   norm, and the Poincaré ratio.
//! * [`solver`] — primal-dual minimization of the nonlocal total variation
//!   with an antisymmetric dual certificate, plus two independent oracles
//!   (smoothed p-Laplacian fixed point, exact min-cut for binary data).
//! * [`limit`] — ε→0 sweeps: uniform estimates, the structure-of-derivative
//!   pairing test, extraction of the horizontal certificate field, and
//!   discrete checks of the local certificate.
//! * [`expr`] / [`config`] / [`report`] / [`cli`] — the reproducible
//!   experiment runner.

pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod expr;
pub mod group;
pub mod kernel;
pub mod limit;
pub mod report;
pub mod solver;
pub mod tv;

pub use error::{Error, Result};
pub use group::{CarnotGroup, CatalogId, GroupOps, GroupPoint, Stratification};
