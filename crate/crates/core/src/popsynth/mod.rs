//! Synthetic population: integer population grids, demographic stores and
//! agent rosters.

mod agents;
mod integerize;
mod store;
mod table;

pub use agents::{
    consistency_report, pyramid, spawn_agents, write_roster, AgentRecord, ConsistencyReport,
    PyramidRow, ROSTER_COLUMNS,
};
pub use integerize::{integerize, recipients, target_total};
pub use store::{
    build_demographics, build_demographics_traced, convert_grid, AgeBracket, DemographicSpec,
    DemographicStore, GridConversion, GroupEntry, StoreManifest, TotalEntry,
};
pub use table::{make_population_table, PopulationRow, PopulationTable, TABLE_COLUMNS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoError;
use crate::raster_io::RasterError;

#[derive(Debug, Error)]
pub enum PopError {
    #[error("cell {index} has negative population {value}")]
    NegativeValue { index: usize, value: f64 },
    #[error("cell {index} holds non-integer value {value}")]
    NonInteger { index: usize, value: f64 },
    #[error("duplicate coordinate ({lat}, {lon}) in population table")]
    DuplicateCoordinate { lat: f64, lon: f64 },
    #[error("group grids do not share one geometry: {0}")]
    GeometryMismatch(String),
    #[error("missing grid for group {0}")]
    MissingGroup(DemographicKey),
    #[error("invalid store: {0}")]
    InvalidStore(String),
    #[error("misaligned grids: {0}")]
    Misaligned(String),
    #[error("bracket `{0}` has no age range; age sampling needs min_age and max_age")]
    MissingAgeRange(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<PopError>,
    },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            _ => Err(format!("unknown gender `{s}`")),
        }
    }
}

/// One demographic group: a gender and an age-bracket label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemographicKey {
    pub gender: Gender,
    pub bracket: String,
}

impl DemographicKey {
    pub fn new(gender: Gender, bracket: impl Into<String>) -> Self {
        Self {
            gender,
            bracket: bracket.into(),
        }
    }

    /// `<gender>_<bracket>`, used for file names and log labels.
    pub fn slug(&self) -> String {
        format!("{}_{}", self.gender, self.bracket)
    }
}

impl fmt::Display for DemographicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

impl PopError {
    /// Name of the stage that failed, when known.
    pub fn stage(&self) -> Option<&str> {
        match self {
            PopError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The error with any stage wrapper removed.
    pub fn root(&self) -> &PopError {
        match self {
            PopError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Shape and mass of one transformation step, for the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub name: String,
    pub in_shape: (usize, usize),
    pub out_shape: (usize, usize),
    pub mass_in: f64,
    pub mass_out: f64,
}

impl fmt::Display for StageTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "STEP {}: in={}×{} out={}×{} mass_in={} mass_out={}",
            self.name,
            self.in_shape.0,
            self.in_shape.1,
            self.out_shape.0,
            self.out_shape.1,
            self.mass_in,
            self.mass_out
        )
    }
}
