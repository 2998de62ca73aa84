#![no_std]

extern crate alloc;

pub mod bounds;
pub mod error;
pub mod estimation;
pub mod flow;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod polytope;
mod sum;
pub mod verify;

pub use error::{Error, Result};
