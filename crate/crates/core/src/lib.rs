//! Procedural generation of navigable cluttered indoor scenes and benchmarking
//! of humanoid locomotion trajectories recorded inside them.
//!
//! The crate is organized bottom-up:
//!
//! * [`embodiment`]: morphology descriptor, scaling, forward kinematics and
//!   capsule surface sampling.
//! * [`assets`]: the placeable-object catalog and footprint statistics.
//! * [`scenegen`]: layered scene placement driven by a target clutterness.
//! * [`navigability`]: occupancy rasterization, BFS reachability and annealed
//!   asset removal.
//! * [`geometry`]: analytic signed distances against compiled scene boxes.
//! * [`trajectory`]: keypoint trajectories, file formats, validation and a
//!   synthetic gait generator.
//! * [`benchmark`]: subspace features, Gaussian Fréchet scores and collision
//!   safety metrics.
//! * [`analysis`]: density distributions and PCA projections for plotting.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assets;
pub mod benchmark;
pub mod embodiment;
pub mod error;
pub mod geometry;
pub mod io;
pub mod navigability;
pub mod scenegen;
pub mod trajectory;

pub use error::{Error, Result};

/// World-frame 3D vector in meters. The floor is `z = 0`, `z` points up.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Tool version embedded into every emitted report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
