//! Numerical laboratory for the equidistribution of backward orbits of
//! holomorphic endomorphisms of P^1 and P^2.

// `!(x <= tol)` is deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod endomorphism;
pub mod error;
pub mod exceptional;
pub mod fiber;
pub mod forms;
pub mod linalg;
pub mod measures;
pub mod operators;
pub mod poly;
pub mod projective;
pub mod rate_lab;
pub mod rng;
pub mod stats;
pub mod suite;
pub mod test_functions;

pub use endomorphism::{HomogeneousMap, MapIterate};
pub use error::{Error, Result};
pub use fiber::{FiberSolver, SolverSettings, WeightedFiber};
pub use projective::ProjectivePoint;
