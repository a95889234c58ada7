//! File formats, SVG figures and the command-line front end for
//! [`madelung_core`].

// `!(a < b)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod render;
pub mod run;
pub mod store;

pub use error::{AppError, AppResult};
pub use madelung_core as core;
