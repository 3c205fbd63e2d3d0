#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod codec;
pub mod complexity;
pub mod corpus;
pub mod error;
pub mod geometry;
pub mod init;
pub mod nn;
pub mod painter;
pub mod palette;
pub mod perceptual;
pub mod raster;
pub mod rng;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
