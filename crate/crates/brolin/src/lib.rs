//! Brolin-Lyubich measures of rational maps.
//!
//! The crate computes the measure of maximal entropy of a rational map by
//! iterated-preimage pullback, quantifies convergence in exact Wasserstein-1
//! distance, draws inner/outer Julia set approximations, and cross-validates
//! against a walk-on-spheres harmonic-measure sampler.

pub mod config;
pub mod error;
pub mod gapdomain;
pub mod julia;
pub mod measure;
pub mod pullback;
pub mod rational;
pub mod rng;
pub mod roots;
pub mod sphere;
pub mod transport;
pub mod walk;

pub use error::{Error, Result};
pub use measure::{DiscreteMeasure, MeasureFile, TestFunction};
pub use rational::{MapFile, PeriodicPoint, RationalMap};
pub use sphere::{chordal_dist, sph_dist, SpherePoint};
pub use transport::{w1, TransportPlan};
