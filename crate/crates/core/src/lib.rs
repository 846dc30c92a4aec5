#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chains;
pub mod error;
pub mod gfactor;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod tfactor;

pub use error::{Error, Result};
