//! Numerical core for single-particle Madelung (quantum-hydrodynamic)
//! mechanics: eigenproblems, band-limited superpositions, the local energy
//! ledger with superoscillation classification, and fluid streamlines,
//! nodes and vortices.
//!
//! Natural units ħ = m = 1 throughout; energies are in ħ²/(mL²).
#![no_std]
// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix notation
#![allow(clippy::needless_range_loop)]
// Float math goes through num_traits::Float (libm). When std is anywhere in
// the build graph its inherent f64 methods win, so the imports carry
// #[allow(unused_imports)].

extern crate alloc;

pub mod error;
pub mod grid;
pub mod spectral;
pub mod madelung;
pub mod states;
pub mod flow;
pub mod scenarios;

pub use error::{Error, Result};
pub use grid::{
    ComplexField, ComplexField2, Field, FieldValue, Grid1D, Grid2D, Mesh, ScalarField,
    ScalarField2,
};
pub use num_complex::Complex64;
