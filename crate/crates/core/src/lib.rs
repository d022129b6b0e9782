// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod objective;
pub mod optimize;
pub mod phantom;
pub mod tomo;
pub mod tv;

pub use error::{Error, Result};

/// Library version recorded in output manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
