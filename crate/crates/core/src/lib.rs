//! Unbiased Monte Carlo renderer built around importance sampling of
//! specular chains.
//!
//! A specular chain is a maximal run of consecutive specular vertices
//! between two non-specular separators (a shading point and a light point).
//! A chain is pinned down by the separator pair, the scattering type at each
//! vertex (reflect/refract) and the outgoing direction at the shading point;
//! a damped Newton walk over the vertices' intrinsic surface coordinates
//! drives the tangent-projected half-vector constraints to zero.
//!
//! The estimator divides chain throughput by a stochastically estimated
//! discovery probability (geometric trial counting), so no analytic seed pdf
//! is ever needed. Seeds come from a defensive 50/50 mixture of a uniform
//! initializer and distributions learned online in a 6D spatial tree over
//! (shading point, light point) pairs, with per-leaf length/type tables and
//! von Mises-Fisher direction mixtures.

pub mod chain;
pub mod geometry;
pub mod guiding;
pub mod integrator;
pub mod math;
pub mod oracle;
pub mod pfm;
pub mod sampler;
pub mod scene;
pub mod solver;
pub mod vmf;

pub use chain::{ChainType, Configuration, ScatterKind, SpecularChain};
pub use geometry::{Interaction, Ray, Shape, ShapeKind};
pub use guiding::{GuidingTree, SubPathSample, TreeParams};
pub use integrator::{Film, Mode, RenderOptions, RenderStats, TrainSchedule};
pub use math::{Rgb, Vec3};
pub use oracle::{BasinMap, OracleError, OracleOptions};
pub use sampler::{ChainEstimate, ReciprocalMode, SampleStats, SamplerOptions, SeedDraw};
pub use scene::{Camera, Emitter, Material, Scene};
pub use solver::{WalkOptions, WalkResult, WalkStatus};
