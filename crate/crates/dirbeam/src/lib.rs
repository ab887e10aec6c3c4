//! Nonlinear elastodynamic beam solver based on a Cosserat formulation with two
//! extensible directors per cross-section.
//!
//! The configuration of a cross-section is the 9-vector `y = [phi, d1, d2]`:
//! the center-axis position and two unconstrained director vectors spanning the
//! section plane. Center axis and directors are discretized with NURBS/B-spline
//! bases ([`splines`]), the initial director field is reconstructed by Greville
//! collocation ([`kinematics`]), and equilibrium is found with a three-field
//! mixed formulation carrying independent stress-resultant and strain fields
//! plus element-wise condensed incompatible section strains ([`mixedfem`],
//! [`section`]). Implicit time stepping uses an energy-momentum consistent
//! mid-point variant alongside standard mid-point and trapezoidal baselines
//! ([`integrators`]). Complete analyses are described declaratively by
//! [`scenario::Scenario`] documents and executed by [`scenario::run`].

pub mod integrators;
pub mod kinematics;
pub mod linalg;
pub mod material;
pub mod mixedfem;
pub mod scenario;
pub mod section;
pub mod splines;

pub use kinematics::Configuration;
pub use scenario::Scenario;

