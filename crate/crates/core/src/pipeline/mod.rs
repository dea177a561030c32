//! End-to-end runs: ingestion, per-cell computation, and emission of
//! stores, tables, plots and a step log.

mod crop;
mod ingest;
mod jobs;
mod population;
mod runlog;

pub mod plot;

pub use crop::{
    location_cell, run_crop, run_crop_location, run_crop_regional, CropOutcome, REGIONAL_COLUMNS,
    SERIES_COLUMNS,
};
pub use ingest::{
    derive_vapor_pressure, ClimateManifest, ClimateMonth, ClimateSource, ElevationTable,
    Variable,
};
pub use jobs::{CropJob, CropMode, DemographicsManifest, PopulationJob};
pub use population::{
    run_agents, run_demographics, run_density, run_population, PopulationOutcome,
};
pub use runlog::{OutputGuard, RunLog};

use thiserror::Error;

use crate::evapo::EvapoError;
use crate::geo::GeoError;
use crate::popsynth::PopError;
use crate::raster_io::RasterError;
use plot::PlotError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Input {
        path: String,
        #[source]
        source: RasterError,
    },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Pop(#[from] PopError),
    #[error(transparent)]
    Evapo(#[from] EvapoError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    /// True when the failure is a broken internal guarantee rather than bad
    /// input.
    pub fn is_invariant(&self) -> bool {
        match self {
            PipelineError::Invariant(_) => true,
            PipelineError::Pop(e) => matches!(e.root(), PopError::Invariant(_)),
            _ => false,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn input(path: &std::path::Path, source: RasterError) -> Self {
        PipelineError::Input {
            path: path.display().to_string(),
            source,
        }
    }
}
