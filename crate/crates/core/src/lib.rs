//! Linear stability of elliptic Euler-Moulton collinear solutions of the
//! n-body problem, reduced to decoupled three-body essential blocks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cc_core;
pub mod error;
pub mod fourbody;
pub mod integrate;
pub mod monodromy;
pub mod ms_coords;
pub mod par;
pub mod spectral;

pub use error::{Error, Result};
