//! Grid geometry: spherical web Mercator, bounding-box subsetting and
//! precision coarsening to `10^-k` degree cells.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::Fsum;
use crate::raster_io::{GridHeader, Raster, RasterError};

/// Sphere radius of EPSG:3857, meters.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Latitude band in which the spherical web Mercator projection is accepted.
pub const MERCATOR_LAT_LIMIT: f64 = 85.06;

/// Tolerance, in degrees, for a cell center sitting on a bounding box edge.
const EDGE_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("latitude {0} outside the web Mercator band of +/-{MERCATOR_LAT_LIMIT} degrees")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("mercator point ({x}, {y}) outside the projected world bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("empty intersection: no cell center of the grid falls inside {0}")]
    EmptyIntersection(BoundingBox),
    #[error("decimals must be in [2, 6], got {0}")]
    DecimalsOutOfRange(u32),
    #[error("target cell size {target} is finer than the source cell size {source_cellsize}")]
    TargetFinerThanSource { target: f64, source_cellsize: f64 },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Number of decimal places of latitude/longitude kept by coarsening, 2..=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Decimals(u32);

impl Decimals {
    pub const MIN: u32 = 2;
    pub const MAX: u32 = 6;

    pub fn new(k: u32) -> Result<Self, GeoError> {
        if (Self::MIN..=Self::MAX).contains(&k) {
            Ok(Self(k))
        } else {
            Err(GeoError::DecimalsOutOfRange(k))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// `10^k`, exact in `f64`.
    pub fn scale(self) -> f64 {
        10f64.powi(self.0 as i32)
    }

    /// Cell edge in degrees, `10^-k`.
    pub fn cellsize(self) -> f64 {
        1.0 / self.scale()
    }
}

impl TryFrom<u32> for Decimals {
    type Error = GeoError;
    fn try_from(k: u32) -> Result<Self, GeoError> {
        Decimals::new(k)
    }
}

impl From<Decimals> for u32 {
    fn from(d: Decimals) -> u32 {
        d.0
    }
}

impl fmt::Display for Decimals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Latitude/longitude box; never crosses the antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

#[derive(Deserialize)]
struct RawBox {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = GeoError;
    fn try_from(b: RawBox) -> Result<Self, GeoError> {
        BoundingBox::new(b.lat_min, b.lat_max, b.lon_min, b.lon_max)
    }
}

impl BoundingBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, GeoError> {
        let all_finite = [lat_min, lat_max, lon_min, lon_max].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(GeoError::InvalidBox("coordinates must be finite".into()));
        }
        if lat_min >= lat_max {
            return Err(GeoError::InvalidBox(format!(
                "lat_min {lat_min} must be < lat_max {lat_max}"
            )));
        }
        if lon_min >= lon_max {
            return Err(GeoError::InvalidBox(format!(
                "lon_min {lon_min} must be < lon_max {lon_max}"
            )));
        }
        if lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0 {
            return Err(GeoError::InvalidBox("box exceeds the world extent".into()));
        }
        Ok(Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        })
    }

    /// Parse `lat_min,lat_max,lon_min,lon_max`.
    pub fn parse(s: &str) -> Result<Self, GeoError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| GeoError::InvalidBox(format!("`{s}` is not four comma separated numbers")))?;
        match parts[..] {
            [a, b, c, d] => Self::new(a, b, c, d),
            _ => Err(GeoError::InvalidBox(format!(
                "`{s}` must have exactly four values lat_min,lat_max,lon_min,lon_max"
            ))),
        }
    }

    /// Bounds of the whole grid.
    pub fn of_grid(h: &GridHeader) -> Self {
        Self {
            lat_min: h.yll(),
            lat_max: h.north(),
            lon_min: h.xll(),
            lon_max: h.east(),
        }
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min - EDGE_EPS_DEG
            && lat <= self.lat_max + EDGE_EPS_DEG
            && lon >= self.lon_min - EDGE_EPS_DEG
            && lon <= self.lon_max + EDGE_EPS_DEG
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lat [{}, {}] lon [{}, {}]",
            self.lat_min, self.lat_max, self.lon_min, self.lon_max
        )
    }
}

/// Web Mercator coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MercatorPoint {
    pub x: f64,
    pub y: f64,
}

fn mercator_y_limit() -> f64 {
    EARTH_RADIUS_M * MERCATOR_LAT_LIMIT.to_radians().tan().asinh()
}

pub fn to_web_mercator(lat: f64, lon: f64) -> Result<MercatorPoint, GeoError> {
    if lat.is_nan() || lat.abs() > MERCATOR_LAT_LIMIT {
        return Err(GeoError::LatitudeOutOfRange(lat));
    }
    if lon.is_nan() || lon.abs() > 180.0 {
        return Err(GeoError::LongitudeOutOfRange(lon));
    }
    let x = EARTH_RADIUS_M * lon.to_radians();
    // asinh(tan(phi)) == ln(tan(pi/4 + phi/2)), exact at the equator
    let y = EARTH_RADIUS_M * lat.to_radians().tan().asinh();
    Ok(MercatorPoint { x, y })
}

/// Inverse of [`to_web_mercator`], returning `(lat, lon)` in degrees.
pub fn from_web_mercator(p: MercatorPoint) -> Result<(f64, f64), GeoError> {
    let x_limit = PI * EARTH_RADIUS_M + 1e-6;
    if !(p.x.abs() <= x_limit && p.y.abs() <= mercator_y_limit() + 1e-6) {
        return Err(GeoError::OutOfBounds { x: p.x, y: p.y });
    }
    let lon = (p.x / EARTH_RADIUS_M).to_degrees();
    let lat = (p.y / EARTH_RADIUS_M).sinh().atan().to_degrees();
    Ok((lat, lon))
}

/// Equatorial arc length of one `10^-k` degree cell edge, meters.
pub fn cell_size_meters(decimals: Decimals) -> f64 {
    decimals.cellsize() * (PI * EARTH_RADIUS_M / 180.0)
}

/// Cells whose centers fall inside `b` (bounds inclusive). Values are copied,
/// never resampled.
pub fn subset(r: &Raster, b: &BoundingBox) -> Result<Raster, GeoError> {
    let h = r.header();
    let (nrows, ncols) = r.shape();
    let rows: Vec<usize> = (0..nrows)
        .filter(|&row| {
            let (lat, _) = h.cell_center(row, 0).expect("row in range");
            lat >= b.lat_min - EDGE_EPS_DEG && lat <= b.lat_max + EDGE_EPS_DEG
        })
        .collect();
    let cols: Vec<usize> = (0..ncols)
        .filter(|&col| {
            let (_, lon) = h.cell_center(0, col).expect("col in range");
            lon >= b.lon_min - EDGE_EPS_DEG && lon <= b.lon_max + EDGE_EPS_DEG
        })
        .collect();
    let (Some(&r0), Some(&r1), Some(&c0), Some(&c1)) =
        (rows.first(), rows.last(), cols.first(), cols.last())
    else {
        return Err(GeoError::EmptyIntersection(*b));
    };
    if r0 == 0 && c0 == 0 && r1 == nrows - 1 && c1 == ncols - 1 {
        return Ok(r.clone());
    }
    let out_cols = c1 - c0 + 1;
    let out_rows = r1 - r0 + 1;
    let xll = h.xll() + c0 as f64 * h.cellsize();
    let yll = h.yll() + (nrows - 1 - r1) as f64 * h.cellsize();
    let header = GridHeader::new(out_cols, out_rows, xll, yll, h.cellsize(), h.nodata())?;
    let mut values = Vec::with_capacity(out_rows * out_cols);
    for row in r0..=r1 {
        values.extend_from_slice(&r.values()[row * ncols + c0..=row * ncols + c1]);
    }
    Ok(Raster::new(header, values)?)
}

/// Index of the multiple of the target cell at or below `scaled`
/// (a coordinate multiplied by `10^k`), forgiving representation error.
fn snap_down(scaled: f64) -> i64 {
    let nearest = scaled.round();
    if (scaled - nearest).abs() < 1e-6 {
        nearest as i64
    } else {
        scaled.floor() as i64
    }
}

/// Bin of a scaled coordinate relative to a snapped origin; points on an
/// edge go to the upper bin.
fn bin(scaled: f64, origin: i64) -> usize {
    let rel = scaled - origin as f64;
    (rel + 1e-9).floor().max(0.0) as usize
}

/// Aggregate `r` onto a `10^-k` degree grid by summation.
///
/// The output origin is snapped down to a multiple of the target cell size,
/// so any two rasters coarsened to the same `k` are cell-aligned. Each output
/// cell holds the sum of the data cells whose centers fall inside it, or
/// nodata when none do. Sums are exactly rounded, so the result does not
/// depend on iteration order or thread count.
pub fn coarsen(r: &Raster, decimals: Decimals) -> Result<Raster, GeoError> {
    coarsen_rows(r, decimals, false)
}

fn coarsen_rows(r: &Raster, decimals: Decimals, reverse: bool) -> Result<Raster, GeoError> {
    let h = r.header();
    let scale = decimals.scale();
    let target = decimals.cellsize();
    if target < h.cellsize() - 1e-12 {
        return Err(GeoError::TargetFinerThanSource {
            target,
            source_cellsize: h.cellsize(),
        });
    }
    let (nrows, ncols) = r.shape();
    let x0 = snap_down(h.xll() * scale);
    let y0 = snap_down(h.yll() * scale);

    let col_bins: Vec<usize> = (0..ncols)
        .map(|c| {
            let (_, lon) = h.cell_center(0, c).expect("col in range");
            bin(lon * scale, x0)
        })
        .collect();
    // bins counted from the south edge
    let row_bins_south: Vec<usize> = (0..nrows)
        .map(|row| {
            let (lat, _) = h.cell_center(row, 0).expect("row in range");
            bin(lat * scale, y0)
        })
        .collect();
    let out_cols = col_bins[ncols - 1] + 1;
    let out_rows = row_bins_south[0] + 1;

    let mut sources: Vec<Vec<usize>> = vec![Vec::new(); out_rows];
    for (row, s) in row_bins_south.iter().enumerate() {
        sources[out_rows - 1 - s].push(row);
    }
    if reverse {
        sources.iter_mut().for_each(|v| v.reverse());
    }

    let nodata = h.nodata();
    let values: Vec<f64> = sources
        .par_iter()
        .flat_map_iter(|src_rows| {
            let mut acc: Vec<Option<Fsum>> = vec![None; out_cols];
            for &row in src_rows {
                let cells = &r.values()[row * ncols..(row + 1) * ncols];
                let cols: Box<dyn Iterator<Item = usize>> = if reverse {
                    Box::new((0..ncols).rev())
                } else {
                    Box::new(0..ncols)
                };
                for c in cols {
                    let v = cells[c];
                    if v != nodata {
                        acc[col_bins[c]].get_or_insert_with(Fsum::new).add(v);
                    }
                }
            }
            acc.into_iter()
                .map(move |a| a.map_or(nodata, |s| s.value()))
        })
        .collect();

    let header = GridHeader::new(
        out_cols,
        out_rows,
        x0 as f64 / scale,
        y0 as f64 / scale,
        target,
        nodata,
    )?;
    Ok(Raster::new(header, values)?)
}
