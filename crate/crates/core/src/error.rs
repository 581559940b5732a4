use thiserror::Error;

use crate::calib::CalibError;
use crate::eval::EvalError;
use crate::formats::FormatError;
use crate::geom::GeomError;
use crate::heatmap::HeatmapError;
use crate::kinematics::KinematicsError;
use crate::raster::RasterError;
use crate::raycast::RaycastError;
use crate::simgen::SimError;
use crate::sync::SyncError;

/// Any failure surfaced by the pipeline or CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Raycast(#[from] RaycastError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// CLI exit status: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format(FormatError::Io { .. }) | Error::Heatmap(HeatmapError::Format(FormatError::Io { .. })) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
