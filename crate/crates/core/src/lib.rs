//! Port-Hamiltonian descriptor systems: structure-preserving transformations,
//! interconnection, the associated Dirac structure, and Gauss–Legendre
//! collocation with a discrete power balance.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuits;
pub mod collocation;
pub mod dirac;
pub mod error;
pub mod model;
pub mod scenarios;
pub mod transform;

pub use collocation::{
    consistent_init, discrete_energy_report, gauss_legendre_tableau, integrate, step,
    ButcherTableau, Input, NewtonOptions, StepRecord, Trajectory,
};
pub use error::{Error, Result};
pub use model::{pbe_residual, validate_structure, Dims, PhdaeModel, SampleBox, ValidationReport};
