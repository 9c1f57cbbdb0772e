//! Extremal flows on one-dimensional Wasserstein space.
//!
//! The crate computes displacement interpolation, the Schrödinger bridge
//! (entropic interpolation) for a diffusion prior `(a/2)Δ + b·∇`, and the
//! Madelung fluid of the Schrödinger equation on grid-discretized densities,
//! and evaluates the Newton-type second-order laws these flows satisfy in
//! Otto's Riemannian calculus.

pub mod bridge;
pub mod density;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod madelung;
pub mod ot;
pub mod prior;
mod quantile;

pub use bridge::{solve_bridge, ActionForm, BridgeSolution};
pub use density::Density;
pub use error::{Error, Result};
pub use geometry::{FlowCurve, NewtonResidualReport, TangentVector};
pub use grid::{divergence, gradient, integrate, laplacian, Domain, Field, Grid};
pub use madelung::{MadelungState, WaveFunction};
pub use ot::DisplacementCurve;
pub use prior::{build_prior, Prior, Reversibility};
