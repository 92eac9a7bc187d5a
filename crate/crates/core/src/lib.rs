//! Joint activity and interference-power estimation for grant-free massive
//! access in a hexagonal multi-cell network.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod priors;
pub mod rootfind;
pub mod signal;

pub use error::{Error, Result};
