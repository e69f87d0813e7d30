//! Finite-element solvers for 2D Stokes flow with a velocity-dependent
//! threshold-slip boundary condition, plus a shape-optimization harness
//! over graph-parametrized slip boundaries.
//!
//! The channel domain lies between the graph of a profile `alpha` (the slip
//! side S) and a flat lid; the fluid sticks on S until the shear stress
//! reaches a bound `g(|u_tau|)` and slips against the stress beyond it.
//! Two equivalent formulations are implemented and cross-checked: the
//! velocity-pressure variational inequality solved by Uzawa projection
//! iterations inside a fixed-point loop on the slip bound, and a four-field
//! saddle formulation carrying the normal and shear boundary stresses as
//! Lagrange multipliers.

pub mod config;
pub mod error;
pub mod fem;
pub mod four_field;
pub mod geometry;
pub mod io;
pub mod mms;
pub mod runner;
pub mod shape_opt;
pub mod slip_solver;
pub mod sparse;
pub mod threads;

pub use error::Error;
