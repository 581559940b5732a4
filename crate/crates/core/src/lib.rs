pub mod calib;
pub mod cli;
mod error;
pub mod eval;
pub mod formats;
pub mod geom;
pub mod heatmap;
pub mod kinematics;
pub mod pipeline;
pub mod raster;
pub mod raycast;
pub mod simgen;
pub mod sync;
pub use error::{Error, Result};
