//! Counter-diabatic Thouless pumping in the Rice-Mele model.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod inverse;
pub mod plot;
pub mod protocols;
pub mod realspace;
pub mod run;
pub mod transport;
