//! File formats, dataset directories and the command-line front end for
//! `avnet-core`.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod image_io;

pub use error::{AppError, AppResult};
