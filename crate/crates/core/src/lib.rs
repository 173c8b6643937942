// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod analysis;
pub mod detuning;
pub mod error;
pub mod instance;
pub mod model;
pub mod oracle;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
