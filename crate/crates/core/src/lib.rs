//! Finite-element machinery for 2D nonlinear elastodynamics regularized by a
//! p-Laplace viscous term, together with the diagnostics used to monitor the
//! solver: nonlinear Korn ratios, energy estimates, determinant positivity and
//! lifespan detection, and vanishing-viscosity continuation.
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`]: triangulated reference domains with Dirichlet/Neumann tags,
//! - [`fem`]: P1 vector fields, quadrature, norms and variational pairings,
//! - [`constitutive`]: Green–St-Venant kinematics and strain-energy families
//!   (St-Venant–Kirchhoff, polynomial Fung, Ogden) with their stresses,
//! - [`plaplace`]: implicit-Euler solver for the evolutionary p-Laplace system,
//! - [`elastodyn`]: the regularized elastodynamics time-stepper (Picard
//!   fixed-point and monolithic Newton modes) and κ-continuation,
//! - [`diagnostics`]: run records and the analytic monitors,
//! - [`config`] / [`experiments`]: run configuration, experiment drivers and
//!   CSV emission used by the CLI binary.

pub mod config;
pub mod constitutive;
pub mod diagnostics;
pub mod elastodyn;
pub mod experiments;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod plaplace;
