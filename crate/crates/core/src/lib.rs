//! Turn open geospatial grids into simulation-ready inputs.
//!
//! Two pipelines share one raster exchange layer:
//!
//! * the population pipeline converts real-valued density and demographic
//!   grids into integer, geolocated population tables and agent rosters
//!   ([`geo`], [`popsynth`]);
//! * the crop pipeline computes Penman–Monteith reference evapotranspiration,
//!   crop water requirements and the water requirement satisfaction index
//!   (WRSI) per grid cell and month ([`evapo`]).
//!
//! [`pipeline`] wires both together with run logs, tables and plots.

pub mod calendar;
pub mod evapo;
pub mod geo;
pub mod numeric;
pub mod pipeline;
pub mod popsynth;
pub mod raster_io;

pub use calendar::YearMonth;
pub use geo::{BoundingBox, Decimals, MercatorPoint};
pub use raster_io::{GridHeader, Raster};
