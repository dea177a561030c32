//! Gridded data exchange: the [`Raster`] type, ESRI ASCII grid reading and
//! writing, and CSV table output.
//!
//! Rasters are corner registered (`xllcorner`/`yllcorner`), row-major, with
//! row 0 the northernmost row.

mod ascii;
mod table;

pub use ascii::{read_ascii_grid, read_ascii_grid_file, write_ascii_grid, write_ascii_grid_file};
pub use table::{write_table_csv, Field, Record};

use thiserror::Error;

/// Sentinel used when a grid header omits `NODATA_value`.
pub const DEFAULT_NODATA: f64 = -9999.0;

const EXTENT_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid grid header: {0}")]
    Header(String),
    #[error("expected {expected} values for the grid, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("value {value} at index {index} is neither finite nor the nodata sentinel")]
    BadValue { index: usize, value: f64 },
    #[error("cell ({row}, {col}) is outside a {nrows}x{ncols} grid")]
    OutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("record {row} has no column `{column}`")]
    MissingColumn { row: usize, column: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geometry of a regular latitude/longitude grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHeader {
    ncols: usize,
    nrows: usize,
    xll: f64,
    yll: f64,
    cellsize: f64,
    nodata: f64,
}

impl GridHeader {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
    ) -> Result<Self, RasterError> {
        let bad = |m: String| Err(RasterError::Header(m));
        if ncols == 0 || nrows == 0 {
            return bad(format!("ncols and nrows must be >= 1 (got {ncols}x{nrows})"));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return bad(format!("cellsize must be > 0 (got {cellsize})"));
        }
        if !nodata.is_finite() {
            return bad(format!("NODATA_value must be finite (got {nodata})"));
        }
        if !(-180.0..180.0).contains(&xll) {
            return bad(format!("xllcorner {xll} outside [-180, 180)"));
        }
        if !(-90.0..90.0).contains(&yll) {
            return bad(format!("yllcorner {yll} outside [-90, 90)"));
        }
        if xll + ncols as f64 * cellsize > 180.0 + EXTENT_SLACK {
            return bad(format!(
                "grid extends past 180E ({xll} + {ncols} * {cellsize})"
            ));
        }
        if yll + nrows as f64 * cellsize > 90.0 + EXTENT_SLACK {
            return bad(format!(
                "grid extends past 90N ({yll} + {nrows} * {cellsize})"
            ));
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
        })
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Longitude of the west edge.
    pub fn xll(&self) -> f64 {
        self.xll
    }

    /// Latitude of the south edge.
    pub fn yll(&self) -> f64 {
        self.yll
    }

    pub fn cellsize(&self) -> f64 {
        self.cellsize
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same grid geometry, ignoring the nodata sentinel.
    pub fn same_geometry(&self, other: &GridHeader) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xll == other.xll
            && self.yll == other.yll
            && self.cellsize == other.cellsize
    }

    /// `(lat, lon)` of the center of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> Result<(f64, f64), RasterError> {
        if row >= self.nrows || col >= self.ncols {
            return Err(RasterError::OutOfRange {
                row,
                col,
                nrows: self.nrows,
                ncols: self.ncols,
            });
        }
        let lon = self.xll + (col as f64 + 0.5) * self.cellsize;
        let lat = self.yll + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize;
        Ok((lat, lon))
    }

    pub fn east(&self) -> f64 {
        self.xll + self.ncols as f64 * self.cellsize
    }

    pub fn north(&self) -> f64 {
        self.yll + self.nrows as f64 * self.cellsize
    }
}

/// `(lat, lon)` of the center of cell `(row, col)`; row 0 is northernmost.
pub fn cell_center(h: &GridHeader, row: usize, col: usize) -> Result<(f64, f64), RasterError> {
    h.cell_center(row, col)
}

/// A georeferenced grid of real values with a nodata sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    header: GridHeader,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(header: GridHeader, values: Vec<f64>) -> Result<Self, RasterError> {
        if values.len() != header.len() {
            return Err(RasterError::ValueCount {
                expected: header.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() && **v != header.nodata)
        {
            return Err(RasterError::BadValue { index, value });
        }
        Ok(Self { header, values })
    }

    /// Raster with every cell set to `value`.
    pub fn filled(header: GridHeader, value: f64) -> Self {
        let values = vec![value; header.len()];
        Self { header, values }
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn nodata(&self) -> f64 {
        self.header.nodata
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.header.nodata
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.header.nrows || col >= self.header.ncols {
            return None;
        }
        let v = self.values[row * self.header.ncols + col];
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.header.nrows, self.header.ncols)
    }

    /// Iterator over `(index, value)` of the cells that hold data.
    pub fn data_cells(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .copied()
            .enumerate()
            .filter(move |(_, v)| !self.is_nodata(*v))
    }

    /// Exactly rounded sum of all data cells.
    pub fn mass(&self) -> f64 {
        crate::numeric::fsum(self.data_cells().map(|(_, v)| v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(ncols: usize, nrows: usize, xll: f64, yll: f64, cs: f64) -> GridHeader {
        GridHeader::new(ncols, nrows, xll, yll, cs, DEFAULT_NODATA).unwrap()
    }

    #[test]
    fn centers() {
        let h = header(1, 1, 0.0, 0.0, 1.0);
        assert_eq!(cell_center(&h, 0, 0).unwrap(), (0.5, 0.5));

        let h = header(2, 2, 10.0, 40.0, 0.5);
        assert_eq!(cell_center(&h, 0, 1).unwrap(), (40.75, 10.75));

        let h = header(4, 3, 2.0, 13.0, 0.25);
        let (lat, _) = cell_center(&h, 2, 0).unwrap();
        assert_eq!(lat, 13.0 + 0.5 * 0.25);
        assert!(cell_center(&h, 3, 0).is_err());
        assert!(cell_center(&h, 0, 4).is_err());
    }

    #[test]
    fn centers_are_injective() {
        let h = header(7, 5, -3.0, 12.0, 0.1);
        let mut seen = std::collections::HashSet::new();
        for r in 0..5 {
            for c in 0..7 {
                let (lat, lon) = h.cell_center(r, c).unwrap();
                assert!(seen.insert((lat.to_bits(), lon.to_bits())));
            }
        }
    }

    #[test]
    fn header_invariants() {
        assert!(GridHeader::new(0, 1, 0.0, 0.0, 1.0, -9999.0).is_err());
        assert!(GridHeader::new(1, 1, 0.0, 0.0, 0.0, -9999.0).is_err());
        assert!(GridHeader::new(1, 1, 180.0, 0.0, 1.0, -9999.0).is_err());
        assert!(GridHeader::new(1, 1, 0.0, -90.5, 1.0, -9999.0).is_err());
        assert!(GridHeader::new(2, 1, 179.0, 0.0, 1.0, -9999.0).is_err());
        assert!(GridHeader::new(1, 1, 179.0, 89.0, 1.0, -9999.0).is_ok());
        assert!(GridHeader::new(1, 2, 0.0, 89.0, 1.0, -9999.0).is_err());
        assert!(GridHeader::new(1, 1, 0.0, 0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn raster_rejects_bad_values() {
        let h = header(2, 1, 0.0, 0.0, 1.0);
        assert!(Raster::new(h, vec![1.0]).is_err());
        assert!(Raster::new(h, vec![1.0, f64::NAN]).is_err());
        let r = Raster::new(h, vec![1.5, DEFAULT_NODATA]).unwrap();
        assert_eq!(r.get(0, 1), None);
        assert_eq!(r.mass(), 1.5);
    }
}
