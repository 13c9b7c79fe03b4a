//! Spectral laboratory for spacelike cross-sections of spherically symmetric
//! null cones.
//!
//! A cross-section is the graph `{r = ω}` of a positive function `ω` on the
//! round unit sphere. The crate computes its null geometry (expansions, the
//! scalar second fundamental form `A`, torsion, spacetime mean curvature
//! `𝓗²`), verifies the structural identities relating these quantities,
//! evolves graphs by area preserving null mean curvature flow, solves for
//! surfaces of constant spacetime mean curvature (STCMC) with a constrained
//! Newton iteration on the Jacobi operator, and assembles STCMC foliations.
//!
//! Module overview:
//! - [`sphere_spectral`]: Gauss–Legendre grids, real spherical harmonic
//!   transforms, and tensor calculus on the round sphere.
//! - [`background_model`]: the radial profile `h(r)` and the ambient curvature
//!   component tables.
//! - [`cross_section_geometry`]: geometry of a single cross-section.
//! - [`boost_center`]: Lorentz boosts, the associated 4-vector `Z`, boosted
//!   spheres and roundness diagnostics.
//! - [`identity_suite`]: residual checks of Gauss, Codazzi and Simon type
//!   identities, a-priori class reports and weighted norms.
//! - [`flow_engine`]: the area preserving flow and decay measurement.
//! - [`stcmc_solver`]: Jacobi operator, linear solves, spectral bounds and
//!   Newton iteration.
//! - [`foliation_builder`]: STCMC families over a range of area radii.

pub mod background_model;
pub mod boost_center;
pub mod cross_section_geometry;
pub mod error;
pub mod flow_engine;
pub mod foliation_builder;
pub mod identity_suite;
pub mod sphere_spectral;
pub mod stcmc_solver;

pub use error::{Error, Result};
