//! Numerical laboratory for canonical ensembles `μ_{N,m}` with a superquadratic
//! single-site potential.
//!
//! - [`potential`]: single-site potentials `ψ = ψ_c + δψ` and tabulated potentials.
//! - [`renorm`]: coarse-graining renormalization `Rψ`, block potentials `ψ_K`,
//!   and p-convexity certification.
//! - [`cramer`]: log-MGF `φ*`, its Legendre transform `φ`, tilted measures and
//!   the local Cramér comparison.
//! - [`ensemble`]: coarse-graining map, pair-exchange sampler, two-site
//!   conditionals and the coarse gradient identity.
//! - [`functional`]: entropy, modified log-Sobolev functionals and the standard
//!   criteria (Bakry–Émery, tensorization, Holley–Stroock, Herbst), concentration
//!   and Talagrand checks.
//! - [`transport`]: Wasserstein distances between empirical measures.
//! - [`kawasaki`]: conservative Langevin dynamics and its Wasserstein decay.

// `!(x > 0.0)` guards deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cramer;
pub mod ensemble;
pub mod error;
pub mod functional;
pub mod grid;
pub mod kawasaki;
pub mod lowdisc;
pub mod potential;
pub mod quad;
pub mod renorm;
pub mod spline;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use grid::UniformGrid;
pub use potential::{make_double_well, PotentialSpec, SingleSite, TabulatedPotential};
pub use quad::QuadratureSpec;
pub use ensemble::{CanonicalEnsemble, SampleBatch};
pub use functional::DiscretizedMeasure;
pub use stats::Estimate;
pub use transport::WassersteinResult;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
