//! Bulk-surface reaction-diffusion-sorption systems in dimensionless form.
//!
//! The crate models species dissolved in a bulk domain that adsorb onto a
//! Langmuir-type surface, react there, and diffuse along it. Besides the
//! full model it provides the reduced models obtained when one or more
//! surface processes become fast (quasi-static sorption, surface chemistry
//! in equilibrium, instantaneous transmission, fast surface diffusion, fast
//! accumulation), together with the diagnostics used to verify them:
//! conserved totals, free energy, entropy production, closed-form
//! equilibria of the three-component model problem and limit-convergence
//! studies.
//!
//! Layout:
//!
//! - [`network`]: stoichiometry, mass-action rates, affinities and
//!   conservation bases.
//! - [`surface`]: occupancy numbers with vacancy closure, surface
//!   mass-action, Langmuir sorption and Fick-Onsager surface diffusion.
//! - [`scales`]: characteristic times, nondimensionalization and regime
//!   classification.
//! - [`grid`]: cell-centered finite-volume geometry and operators.
//! - [`solver`]: implicit Euler / Newton steppers for every model variant,
//!   the subproblem iteration for the model problem and the surface
//!   attractor used by the fast accumulation model.
//! - [`diagnostics`]: functionals, monitors and the convergence driver.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![deny(unsafe_code)]
#![warn(missing_debug_implementations)]
// index loops mirror the component formulas of the discretization
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod grid;
pub mod linalg;
pub mod math;
pub mod network;
pub mod presets;
pub mod scales;
pub mod solver;
pub mod surface;

pub use diagnostics::{mp_equilibrium, MpParameters};
pub use grid::{BulkField, Geometry, SurfaceField};
pub use network::{ConservationBasis, Reaction, ReactionNetwork, SpeciesSet, ThermoParams};
pub use scales::{CharacteristicScales, ProcessTimes, Regime, RegimeReport, TimeScales};
pub use solver::{FullProblem, ModelVariant, StepperConfig, SystemState};
pub use surface::{SorptionModel, SurfaceReactionNetwork, SurfaceState};
