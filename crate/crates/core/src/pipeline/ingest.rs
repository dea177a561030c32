//! Climate inputs: one ESRI ASCII grid per variable per month, an elevation
//! point table, and the crop definitions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::PipelineError;
use crate::calendar::YearMonth;
use crate::evapo::{
    atmospheric_pressure, default_crops, read_crops, ClimateRecord, CropSpec, EvapoError,
    SiteRecord,
};
use crate::raster_io::{read_ascii_grid_file, GridHeader, Raster};

/// W m⁻² to MJ m⁻² day⁻¹.
const WATTS_TO_MJ_DAY: f64 = 0.0864;
const SECONDS_PER_DAY: f64 = 86_400.0;

/// Actual vapor pressure (kPa) from specific humidity (kg/kg) at `z` meters.
pub fn derive_vapor_pressure(q: f64, elevation_m: f64) -> Result<f64, EvapoError> {
    if !q.is_finite() {
        return Err(EvapoError::NonFinite { field: "qair" });
    }
    if !(0.0..=0.05).contains(&q) {
        return Err(EvapoError::OutOfRange {
            field: "qair",
            value: q,
            min: 0.0,
            max: 0.05,
        });
    }
    let p = atmospheric_pressure(elevation_m);
    Ok(q * p / (0.622 + 0.378 * q))
}

/// Monthly climate grids, named after the FLDAS fields they carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variable {
    /// Air temperature, K.
    Tair,
    /// Specific humidity, kg kg⁻¹.
    Qair,
    /// Net shortwave radiation, W m⁻², positive downward.
    Swnet,
    /// Net longwave radiation, W m⁻², positive downward.
    Lwnet,
    /// Wind speed at the manifest's measurement height, m s⁻¹.
    Wind,
    /// Evapotranspiration, kg m⁻² s⁻¹.
    Evap,
}

impl Variable {
    pub const ALL: [Variable; 6] = [
        Variable::Tair,
        Variable::Qair,
        Variable::Swnet,
        Variable::Lwnet,
        Variable::Wind,
        Variable::Evap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Tair => "tair",
            Variable::Qair => "qair",
            Variable::Swnet => "swnet",
            Variable::Lwnet => "lwnet",
            Variable::Wind => "wind",
            Variable::Evap => "evap",
        }
    }
}

fn default_wind_height() -> f64 {
    2.0
}

/// `climate.toml`: where the grids live and how to read them. Relative
/// paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateManifest {
    /// File name pattern with `{variable}` and `{month}` (YYYY-MM).
    pub grid_pattern: String,
    /// CSV with columns lat, lon, elevation_m.
    pub elevation: PathBuf,
    /// Crop definitions; the starter table when absent.
    #[serde(default)]
    pub crops: Option<PathBuf>,
    #[serde(default = "default_wind_height")]
    pub wind_height_m: f64,
}

impl ClimateManifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let m: Self = toml::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.display().to_string(),
            message: e.message().to_string(),
        })?;
        for needle in ["{variable}", "{month}"] {
            if !m.grid_pattern.contains(needle) {
                return Err(PipelineError::Config {
                    path: path.display().to_string(),
                    message: format!("grid_pattern must contain {needle}"),
                });
            }
        }
        if !(m.wind_height_m.is_finite() && m.wind_height_m > 0.1) {
            return Err(PipelineError::Config {
                path: path.display().to_string(),
                message: format!("wind_height_m must be > 0.1, got {}", m.wind_height_m),
            });
        }
        Ok(m)
    }
}

#[derive(Debug, Deserialize)]
struct ElevationRow {
    lat: f64,
    lon: f64,
    elevation_m: f64,
}

/// Point elevations, queried by nearest point.
#[derive(Debug, Clone, PartialEq)]
pub struct ElevationTable {
    points: Vec<(f64, f64, f64)>,
}

impl ElevationTable {
    pub fn new(points: Vec<(f64, f64, f64)>) -> Result<Self, PipelineError> {
        if points.is_empty() {
            return Err(PipelineError::Invalid("elevation table is empty".into()));
        }
        for &(lat, lon, z) in &points {
            SiteRecord {
                lat,
                lon,
                elevation_m: z,
            }
            .validate()?;
        }
        Ok(Self { points })
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| PipelineError::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let mut points = Vec::new();
        for row in rdr.deserialize::<ElevationRow>() {
            let r = row.map_err(|e| PipelineError::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            points.push((r.lat, r.lon, r.elevation_m));
        }
        Self::new(points).map_err(|e| PipelineError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Elevation of the point closest to `(lat, lon)` in degree space; ties
    /// go to the northern, then western point.
    pub fn nearest(&self, lat: f64, lon: f64) -> f64 {
        let d2 = |p: &(f64, f64, f64)| (p.0 - lat).powi(2) + (p.1 - lon).powi(2);
        let mut best = &self.points[0];
        for p in &self.points[1..] {
            let (a, b) = (d2(p), d2(best));
            let closer = a < b - 1e-15;
            let tie = (a - b).abs() <= 1e-15;
            if closer || (tie && (p.0 > best.0 || (p.0 == best.0 && p.1 < best.1))) {
                best = p;
            }
        }
        best.2
    }
}

/// The six grids of one month, on one geometry.
#[derive(Debug, Clone)]
pub struct ClimateMonth {
    pub month: YearMonth,
    grids: BTreeMap<Variable, Raster>,
    header: GridHeader,
    wind_height_m: f64,
}

impl ClimateMonth {
    pub fn new(
        month: YearMonth,
        grids: BTreeMap<Variable, Raster>,
        wind_height_m: f64,
    ) -> Result<Self, PipelineError> {
        let first = grids
            .get(&Variable::Tair)
            .ok_or_else(|| PipelineError::Invalid(format!("{month}: missing tair grid")))?;
        let header = *first.header();
        for v in Variable::ALL {
            let g = grids
                .get(&v)
                .ok_or_else(|| PipelineError::Invalid(format!("{month}: missing {} grid", v.name())))?;
            if !g.header().same_geometry(&header) {
                return Err(PipelineError::Invalid(format!(
                    "{month}: {} grid geometry differs from tair",
                    v.name()
                )));
            }
        }
        Ok(Self {
            month,
            grids,
            header,
            wind_height_m,
        })
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    fn value(&self, v: Variable, row: usize, col: usize) -> Option<f64> {
        let r = &self.grids[&v];
        r.get(row, col).filter(|x| !r.is_nodata(*x))
    }

    /// Converted inputs for one cell, or `None` when any variable is
    /// nodata there.
    pub fn record(&self, row: usize, col: usize, elevation_m: f64) -> Result<Option<ClimateRecord>, EvapoError> {
        let mut vals = [0.0; 6];
        for (slot, v) in vals.iter_mut().zip(Variable::ALL) {
            match self.value(v, row, col) {
                Some(x) => *slot = x,
                None => return Ok(None),
            }
        }
        let [tair, qair, swnet, lwnet, wind, evap] = vals;
        let z = self.wind_height_m;
        let wind_2m = if z == 2.0 {
            wind
        } else {
            wind * 4.87 / (67.8 * z - 5.42).ln()
        };
        let rec = ClimateRecord {
            year_month: self.month,
            tair_c: tair - 273.15,
            ea_kpa: derive_vapor_pressure(qair, elevation_m)?,
            net_sw: swnet * WATTS_TO_MJ_DAY,
            net_lw: -lwnet * WATTS_TO_MJ_DAY,
            wind_2m,
            // condensation shows up as small negative fluxes
            aet_mm_day: (evap * SECONDS_PER_DAY).max(0.0),
        };
        rec.validate()?;
        Ok(Some(rec))
    }
}

/// An opened climate manifest.
#[derive(Debug, Clone)]
pub struct ClimateSource {
    pub manifest: ClimateManifest,
    base: PathBuf,
    elevation: ElevationTable,
    crops: Vec<CropSpec>,
}

impl ClimateSource {
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let manifest = ClimateManifest::read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let elevation = ElevationTable::read(&base.join(&manifest.elevation))?;
        let crops = match &manifest.crops {
            Some(p) => {
                let p = base.join(p);
                let f = fs::File::open(&p).map_err(|e| PipelineError::io(&p, e))?;
                read_crops(f)?
            }
            None => default_crops(),
        };
        Ok(Self {
            manifest,
            base,
            elevation,
            crops,
        })
    }

    pub fn crops(&self) -> &[CropSpec] {
        &self.crops
    }

    pub fn elevation(&self) -> &ElevationTable {
        &self.elevation
    }

    pub fn grid_path(&self, v: Variable, month: YearMonth) -> PathBuf {
        let name = self
            .manifest
            .grid_pattern
            .replace("{variable}", v.name())
            .replace("{month}", &month.to_string());
        self.base.join(name)
    }

    pub fn load_month(&self, month: YearMonth) -> Result<ClimateMonth, PipelineError> {
        let mut grids = BTreeMap::new();
        for v in Variable::ALL {
            let p = self.grid_path(v, month);
            if !p.exists() {
                return Err(PipelineError::Invalid(format!(
                    "missing {} grid for {month}: {}",
                    v.name(),
                    p.display()
                )));
            }
            grids.insert(v, read_ascii_grid_file(&p).map_err(|e| PipelineError::input(&p, e))?);
        }
        ClimateMonth::new(month, grids, self.manifest.wind_height_m)
    }

    /// Load every month, requiring one shared geometry.
    pub fn load_months(&self, months: &[YearMonth]) -> Result<Vec<ClimateMonth>, PipelineError> {
        let loaded: Vec<ClimateMonth> = months.iter().map(|m| self.load_month(*m)).collect::<Result<_, _>>()?;
        if let Some(first) = loaded.first() {
            if let Some(odd) = loaded.iter().find(|m| !m.header().same_geometry(first.header())) {
                return Err(PipelineError::Invalid(format!(
                    "{} grids differ in geometry from {}",
                    odd.month, first.month
                )));
            }
        }
        Ok(loaded)
    }

    /// Site record for the center of `(row, col)`.
    pub fn site(&self, h: &GridHeader, row: usize, col: usize) -> Result<SiteRecord, PipelineError> {
        let (lat, lon) = h
            .cell_center(row, col)
            .map_err(|e| PipelineError::Invalid(e.to_string()))?;
        Ok(SiteRecord {
            lat,
            lon,
            elevation_m: self.elevation.nearest(lat, lon),
        })
    }
}
