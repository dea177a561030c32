use std::io::{Read, Write};

use serde::Deserialize;

use super::PopError;
use crate::geo::{to_web_mercator, Decimals};
use crate::numeric::round_to;
use crate::raster_io::{write_table_csv, Field, Raster, Record};

pub const TABLE_COLUMNS: [&str; 5] = ["lat", "lon", "merc_x", "merc_y", "count"];

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct PopulationRow {
    pub lat: f64,
    pub lon: f64,
    pub merc_x: f64,
    pub merc_y: f64,
    pub count: u64,
}

impl Record for PopulationRow {
    fn field(&self, column: &str) -> Option<Field> {
        Some(match column {
            "lat" => self.lat.into(),
            "lon" => self.lon.into(),
            "merc_x" => self.merc_x.into(),
            "merc_y" => self.merc_y.into(),
            "count" => self.count.into(),
            _ => return None,
        })
    }
}

/// Integer population per cell center, sorted north to south then west to
/// east.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTable {
    decimals: Decimals,
    rows: Vec<PopulationRow>,
}

fn canonical(a: &PopulationRow, b: &PopulationRow) -> std::cmp::Ordering {
    b.lat.total_cmp(&a.lat).then(a.lon.total_cmp(&b.lon))
}

/// Cell centers of a `10^-k` grid sit halfway between multiples of `10^-k`,
/// so one extra decimal place represents them exactly.
pub(crate) fn table_coordinate(x: f64, decimals: Decimals) -> f64 {
    round_to(x, decimals.get() + 1)
}

impl PopulationTable {
    pub fn new(decimals: Decimals, mut rows: Vec<PopulationRow>) -> Result<Self, PopError> {
        rows.sort_by(canonical);
        if let Some(w) = rows.windows(2).find(|w| w[0].lat == w[1].lat && w[0].lon == w[1].lon) {
            return Err(PopError::DuplicateCoordinate {
                lat: w[0].lat,
                lon: w[0].lon,
            });
        }
        Ok(Self { decimals, rows })
    }

    pub fn decimals(&self) -> Decimals {
        self.decimals
    }

    pub fn rows(&self) -> &[PopulationRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PopError> {
        Ok(write_table_csv(w, &self.rows, &TABLE_COLUMNS)?)
    }

    /// Read a table written by [`PopulationTable::write_csv`], checking the
    /// header, the Mercator columns and the row order.
    pub fn read_csv<R: Read>(r: R, decimals: Decimals) -> Result<Self, PopError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(crate::raster_io::RasterError::from)?.clone();
        if headers.iter().ne(TABLE_COLUMNS.iter().copied()) {
            return Err(PopError::InvalidStore(format!(
                "table header must be {}, got {}",
                TABLE_COLUMNS.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<PopulationRow>().enumerate() {
            let row = rec.map_err(crate::raster_io::RasterError::from)?;
            let m = to_web_mercator(row.lat, row.lon)?;
            if (m.x - row.merc_x).abs() > 1e-6 || (m.y - row.merc_y).abs() > 1e-6 {
                return Err(PopError::InvalidStore(format!(
                    "row {}: mercator columns do not match ({}, {})",
                    i + 1,
                    row.lat,
                    row.lon
                )));
            }
            if let Some(prev) = rows.last() {
                if canonical(prev, &row) != std::cmp::Ordering::Less {
                    return Err(PopError::InvalidStore(format!(
                        "row {} breaks the north-to-south, west-to-east order",
                        i + 1
                    )));
                }
            }
            rows.push(row);
        }
        Self::new(decimals, rows)
    }
}

/// One row per data cell with a positive count (or every data cell when
/// `keep_zeros`). Coordinates are cell centers; Mercator columns are filled.
pub fn make_population_table(
    r: &Raster,
    keep_zeros: bool,
    decimals: Decimals,
) -> Result<PopulationTable, PopError> {
    let h = r.header();
    let ncols = h.ncols();
    let mut rows = Vec::new();
    for (i, v) in r.data_cells() {
        if v < 0.0 {
            return Err(PopError::NegativeValue { index: i, value: v });
        }
        if v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(PopError::NonInteger { index: i, value: v });
        }
        if v == 0.0 && !keep_zeros {
            continue;
        }
        let (lat, lon) = h.cell_center(i / ncols, i % ncols)?;
        let (lat, lon) = (table_coordinate(lat, decimals), table_coordinate(lon, decimals));
        let m = to_web_mercator(lat, lon)?;
        rows.push(PopulationRow {
            lat,
            lon,
            merc_x: m.x,
            merc_y: m.y,
            count: v as u64,
        });
    }
    PopulationTable::new(decimals, rows)
}
