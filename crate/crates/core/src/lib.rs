//! Capacity planning for hybrid heat sources in electric-heat coupled systems.
//!
//! The crate is organized bottom-up:
//!
//! - [`solver`]: sparse convex QP solver used by the dispatch model.
//! - [`dispatch`]: daily operation model and the two planning objectives.
//! - [`scenario`]: typical-day selection and moment matching.
//! - [`gp`]: Gaussian-process surrogates with Matérn kernels.
//! - [`moo`]: Pareto utilities, hypervolume, NEHVI and the adaptive optimizer.
//! - [`baselines`]: NSGA-II, random search, season-wide benchmark and errors.
//! - [`synth`]: synthetic seasons and reference systems.

pub mod baselines;
pub mod dispatch;
pub mod gp;
pub mod moo;
pub mod scenario;
pub mod solver;
pub mod synth;
