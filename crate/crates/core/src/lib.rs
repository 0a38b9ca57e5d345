//! Verification engine for the second-order obstruction to deforming the
//! product Kähler–Einstein metric on `CP^n × CP^1`.
//!
//! The crate evaluates every geometric object on the affine chart of `CP^n`
//! in closed form, cross-checks those closed forms against finite-difference
//! numerics, integrates exactly (rational multiples of `π^n`) and by seeded
//! Monte Carlo, and assembles the obstruction three ways.

pub mod complex_tensor;
pub mod covariant_calc;
pub mod finite_diff;
pub mod fubini_study;
pub mod identity_suite;
pub mod integrator;
pub mod lie_eigen;
pub mod obstruction;
pub mod cli_report;
