use std::path::PathBuf;

use rayon::prelude::*;

use super::ingest::{ClimateMonth, ClimateSource};
use super::jobs::{CropJob, CropMode};
use super::plot::{encode, heatmap_scene, timeseries_scene, HeatCell, PlotSpec, TimeSeries};
use super::runlog::{OutputGuard, RunLog};
use super::PipelineError;
use crate::calendar::YearMonth;
use crate::evapo::{find_crop, kc_for, wrsi_series, ClimateRecord, CropSpec, WrsiSeries};
use crate::geo::BoundingBox;
use crate::numeric::{fsum, round_to};
use crate::popsynth::StageTrace;
use crate::raster_io::{write_table_csv, Field, GridHeader, Record};

pub const SERIES_COLUMNS: [&str; 7] = ["month", "crop", "pet", "kc", "wr", "aet", "wrsi"];
pub const REGIONAL_COLUMNS: [&str; 3] = ["lat", "lon", "wrsi"];

const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CropOutcome {
    pub outputs: Vec<PathBuf>,
    pub log: Vec<String>,
}

/// Grid cell nearest to `(lat, lon)`. A point on a cell edge goes to the
/// northern, then the western neighbour.
pub fn location_cell(h: &GridHeader, lat: f64, lon: f64) -> Result<(usize, usize), PipelineError> {
    let inside = lat >= h.yll() - SNAP && lat <= h.north() + SNAP && lon >= h.xll() - SNAP && lon <= h.east() + SNAP;
    if !inside {
        return Err(PipelineError::Invalid(format!(
            "location ({lat}, {lon}) is outside the climate grid (lat {}..{}, lon {}..{})",
            h.yll(),
            h.north(),
            h.xll(),
            h.east()
        )));
    }
    let index = |f: f64, n: usize| {
        let f = if (f - f.round()).abs() < SNAP { f.round() } else { f };
        (f.ceil() as i64 - 1).clamp(0, n as i64 - 1) as usize
    };
    let row = index((h.north() - lat) / h.cellsize(), h.nrows());
    let col = index((lon - h.xll()) / h.cellsize(), h.ncols());
    Ok((row, col))
}

/// Monthly records and WRSI for one cell, or `None` where any month is
/// nodata.
fn cell_series(
    src: &ClimateSource,
    months: &[ClimateMonth],
    row: usize,
    col: usize,
    crop: &CropSpec,
    cap: bool,
) -> Result<Option<WrsiSeries>, PipelineError> {
    let h = months[0].header();
    let site = src.site(h, row, col)?;
    let mut records: Vec<ClimateRecord> = Vec::with_capacity(months.len());
    for m in months {
        match m.record(row, col, site.elevation_m)? {
            Some(r) => records.push(r),
            None => return Ok(None),
        }
    }
    Ok(Some(wrsi_series(crop, &records, &site, cap)?))
}

struct SeriesRow {
    month: String,
    crop: String,
    pet: Option<f64>,
    kc: Option<f64>,
    wr: Option<f64>,
    aet: Option<f64>,
    wrsi: Option<f64>,
}

impl Record for SeriesRow {
    fn field(&self, column: &str) -> Option<Field> {
        Some(match column {
            "month" => self.month.as_str().into(),
            "crop" => self.crop.as_str().into(),
            "pet" => self.pet.into(),
            "kc" => self.kc.into(),
            "wr" => self.wr.into(),
            "aet" => self.aet.into(),
            "wrsi" => self.wrsi.into(),
            _ => return None,
        })
    }
}

struct RegionalRow {
    lat: f64,
    lon: f64,
    wrsi: f64,
}

impl Record for RegionalRow {
    fn field(&self, column: &str) -> Option<Field> {
        Some(match column {
            "lat" => self.lat.into(),
            "lon" => self.lon.into(),
            "wrsi" => self.wrsi.into(),
            _ => return None,
        })
    }
}

fn csv_bytes<R: Record>(rows: &[R], schema: &[&str]) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    write_table_csv(&mut buf, rows, schema).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    Ok(buf)
}

fn resolve_crops<'a>(src: &'a ClimateSource, names: &[String]) -> Result<Vec<&'a CropSpec>, PipelineError> {
    names.iter().map(|n| Ok(find_crop(src.crops(), n)?)).collect()
}

fn months_label(months: &[YearMonth]) -> String {
    match (months.first(), months.last()) {
        (Some(a), Some(b)) if a == b => a.to_string(),
        (Some(a), Some(b)) => format!("{a}..{b}"),
        _ => String::new(),
    }
}

/// Monthly PET, Kc, WR and WRSI per crop at the grid cell nearest to the
/// job's location, with seasonal summary rows, as `timeseries.csv` and a
/// `timeseries.svg` plot.
pub fn run_crop_location(job: &CropJob, echo: bool) -> Result<CropOutcome, PipelineError> {
    job.validate()?;
    let CropMode::Location { lat, lon, months } = &job.mode else {
        return Err(PipelineError::Invalid("job is not in location mode".into()));
    };
    let src = ClimateSource::open(&job.climate)?;
    let crops = resolve_crops(&src, &job.crops)?;
    let climate = src.load_months(months)?;
    let h = *climate[0].header();
    let (row, col) = location_cell(&h, *lat, *lon)?;
    let site = src.site(&h, row, col)?;

    let mut log = RunLog::new(echo);
    log.info(format!(
        "location ({lat}, {lon}) -> cell ({row}, {col}) centered at ({}, {}), elevation {} m",
        site.lat, site.lon, site.elevation_m
    ));
    let mut rows = Vec::new();
    let mut ts = TimeSeries {
        labels: months.iter().map(ToString::to_string).collect(),
        series: Vec::new(),
    };
    for crop in crops {
        let s = cell_series(&src, &climate, row, col, crop, job.cap)?.ok_or_else(|| {
            PipelineError::Invalid(format!("no climate data at cell ({row}, {col}) for every requested month"))
        })?;
        let monthly: Vec<f64> = s.months.iter().filter_map(|m| m.wrsi).collect();
        log.step(&StageTrace {
            name: format!("{}/location", crop.name),
            in_shape: (1, months.len()),
            out_shape: (s.months.len() + s.seasons.len(), SERIES_COLUMNS.len()),
            mass_in: fsum(s.months.iter().map(|m| m.pet)),
            mass_out: fsum(monthly.iter().copied()),
        });
        if s.months.iter().all(|m| m.season.is_dormant()) {
            log.warn(format!(
                "{} is dormant in every requested month ({})",
                crop.name,
                months_label(months)
            ));
        }
        for m in &s.months {
            rows.push(SeriesRow {
                month: m.month.to_string(),
                crop: crop.name.clone(),
                pet: Some(m.pet),
                kc: m.season.kc(),
                wr: m.wr,
                aet: Some(m.aet),
                wrsi: m.wrsi,
            });
        }
        for season in &s.seasons {
            rows.push(SeriesRow {
                month: format!("{}..{}", season.start, season.end),
                crop: crop.name.clone(),
                pet: None,
                kc: None,
                wr: None,
                aet: None,
                wrsi: season.wrsi,
            });
        }
        ts.series.push((crop.name.clone(), s.months.iter().map(|m| m.wrsi).collect()));
    }

    let mut guard = OutputGuard::new();
    guard.dir(&job.out)?;
    guard.write(&job.out.join("timeseries.csv"), &csv_bytes(&rows, &SERIES_COLUMNS)?)?;
    let spec = PlotSpec::new(
        format!("WRSI at ({}, {})", round_to(site.lat, 6), round_to(site.lon, 6)),
        job.out.join("timeseries.svg"),
    );
    let scene = timeseries_scene(&ts, "WRSI", &spec)?;
    guard.write(&spec.path, &encode(&scene, spec.validate()?)?)?;
    guard.write(&job.out.join("run_log.txt"), log.render().as_bytes())?;
    Ok(CropOutcome {
        outputs: guard.commit(),
        log: log.lines().to_vec(),
    })
}

fn cells_in(h: &GridHeader, bbox: &BoundingBox) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for row in 0..h.nrows() {
        for col in 0..h.ncols() {
            let (lat, lon) = h.cell_center(row, col).expect("in range");
            if bbox.contains(lat, lon) {
                out.push((row, col));
            }
        }
    }
    out
}

/// Monthly WRSI of one crop for every cell whose center lies in the bbox:
/// `wrsi_<YYYY-MM>.csv` and a heatmap per month. Dormant and nodata cells
/// are left out of the tables.
pub fn run_crop_regional(job: &CropJob, echo: bool) -> Result<CropOutcome, PipelineError> {
    job.validate()?;
    let CropMode::Regional { bbox, months } = &job.mode else {
        return Err(PipelineError::Invalid("job is not in regional mode".into()));
    };
    let src = ClimateSource::open(&job.climate)?;
    let crop = resolve_crops(&src, &job.crops)?[0];
    let climate = src.load_months(months)?;
    let h = *climate[0].header();
    let cells = cells_in(&h, bbox);
    if cells.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "bbox {},{},{},{} holds no climate cell center",
            bbox.lat_min, bbox.lat_max, bbox.lon_min, bbox.lon_max
        )));
    }
    let series: Vec<Option<WrsiSeries>> = cells
        .par_iter()
        .map(|&(row, col)| cell_series(&src, &climate, row, col, crop, job.cap))
        .collect::<Result<_, _>>()?;

    let mut log = RunLog::new(echo);
    log.info(format!("{} cells of {} in the bbox, crop {}", cells.len(), h.len(), crop.name));
    let mut guard = OutputGuard::new();
    guard.dir(&job.out)?;
    for (i, month) in months.iter().enumerate() {
        let mut rows = Vec::new();
        let mut heat = Vec::new();
        let mut pet = Vec::new();
        for (&(row, col), s) in cells.iter().zip(&series) {
            let Some(m) = s.as_ref().map(|s| &s.months[i]) else { continue };
            pet.push(m.pet);
            if let Some(w) = m.wrsi {
                let (lat, lon) = h.cell_center(row, col).expect("in range");
                rows.push(RegionalRow {
                    lat: round_to(lat, 9),
                    lon: round_to(lon, 9),
                    wrsi: w,
                });
                heat.push(HeatCell { lat, lon, value: w });
            }
        }
        log.step(&StageTrace {
            name: format!("{}/{month}", crop.name),
            in_shape: (h.nrows(), h.ncols()),
            out_shape: (rows.len(), REGIONAL_COLUMNS.len()),
            mass_in: fsum(pet.iter().copied()),
            mass_out: fsum(rows.iter().map(|r| r.wrsi)),
        });
        if rows.is_empty() {
            let why = if kc_for(crop, *month).is_dormant() { "out of season" } else { "no data" };
            log.warn(format!("{} {month}: {why}, table and heatmap are empty", crop.name));
        }
        guard.write(&job.out.join(format!("wrsi_{month}.csv")), &csv_bytes(&rows, &REGIONAL_COLUMNS)?)?;
        let spec = PlotSpec::new(format!("WRSI {} {month}", crop.name), job.out.join(format!("wrsi_{month}.svg")));
        let scene = heatmap_scene(&heat, h.cellsize(), &spec)?;
        guard.write(&spec.path, &encode(&scene, spec.validate()?)?)?;
    }
    guard.write(&job.out.join("run_log.txt"), log.render().as_bytes())?;
    Ok(CropOutcome {
        outputs: guard.commit(),
        log: log.lines().to_vec(),
    })
}

pub fn run_crop(job: &CropJob, echo: bool) -> Result<CropOutcome, PipelineError> {
    match job.mode {
        CropMode::Location { .. } => run_crop_location(job, echo),
        CropMode::Regional { .. } => run_crop_regional(job, echo),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster_io::DEFAULT_NODATA;

    #[test]
    fn nearest_cell_and_ties() {
        let h = GridHeader::new(2, 2, 2.0, 13.0, 0.5, DEFAULT_NODATA).unwrap();
        assert_eq!(location_cell(&h, 13.75, 2.25).unwrap(), (0, 0));
        assert_eq!(location_cell(&h, 13.25, 2.75).unwrap(), (1, 1));
        // on the shared edge: north row, west column
        assert_eq!(location_cell(&h, 13.5, 2.5).unwrap(), (0, 0));
        assert_eq!(location_cell(&h, 14.0, 3.0).unwrap(), (0, 1));
        assert_eq!(location_cell(&h, 13.0, 2.0).unwrap(), (1, 0));
        assert!(location_cell(&h, 12.9, 2.5).is_err());
    }
}
