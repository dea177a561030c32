//! Crop-water arithmetic: FAO-56 reference evapotranspiration, crop
//! coefficients, water requirement and WRSI.

mod crop;
mod wrsi;

pub use crop::{default_crops, find_crop, kc_at, kc_for, read_crops, CropSpec, Season, Stage};
pub use wrsi::{
    water_requirement, wrsi_monthly, wrsi_seasonal, wrsi_series, SeasonSummary, WrsiMonth,
    WrsiSeries,
};

use thiserror::Error;

use crate::calendar::YearMonth;

#[derive(Debug, Error)]
pub enum EvapoError {
    #[error("{field} is not finite")]
    NonFinite { field: &'static str },
    #[error("{field} = {value} outside [{min}, {max}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{field} must be non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("no in-season month for {0}")]
    AllDormant(String),
    #[error("crop `{name}`: {message}")]
    InvalidCrop { name: String, message: String },
    #[error("unknown crop `{0}`")]
    UnknownCrop(String),
    #[error("crops file: {0}")]
    Csv(#[from] csv::Error),
}

/// Monthly climate inputs for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClimateRecord {
    pub year_month: YearMonth,
    /// Mean air temperature, °C.
    pub tair_c: f64,
    /// Actual vapor pressure, kPa.
    pub ea_kpa: f64,
    /// Net shortwave radiation, MJ m⁻² day⁻¹.
    pub net_sw: f64,
    /// Net longwave radiation, MJ m⁻² day⁻¹, positive outgoing.
    pub net_lw: f64,
    /// Wind speed at 2 m, m s⁻¹.
    pub wind_2m: f64,
    /// Actual evapotranspiration, mm day⁻¹.
    pub aet_mm_day: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteRecord {
    pub lat: f64,
    pub lon: f64,
    pub elevation_m: f64,
}

fn finite(field: &'static str, value: f64) -> Result<f64, EvapoError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvapoError::NonFinite { field })
    }
}

fn within(field: &'static str, value: f64, min: f64, max: f64) -> Result<f64, EvapoError> {
    finite(field, value)?;
    if (min..=max).contains(&value) {
        Ok(value)
    } else {
        Err(EvapoError::OutOfRange {
            field,
            value,
            min,
            max,
        })
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<f64, EvapoError> {
    finite(field, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(EvapoError::Negative { field, value })
    }
}

impl ClimateRecord {
    pub fn validate(&self) -> Result<(), EvapoError> {
        within("tair_c", self.tair_c, -60.0, 60.0)?;
        non_negative("ea_kpa", self.ea_kpa)?;
        finite("net_sw", self.net_sw)?;
        finite("net_lw", self.net_lw)?;
        non_negative("wind_2m", self.wind_2m)?;
        non_negative("aet_mm_day", self.aet_mm_day)?;
        Ok(())
    }
}

impl SiteRecord {
    pub fn validate(&self) -> Result<(), EvapoError> {
        within("lat", self.lat, -90.0, 90.0)?;
        within("lon", self.lon, -180.0, 180.0)?;
        within("elevation_m", self.elevation_m, -430.0, 9000.0)?;
        Ok(())
    }
}

/// Saturation vapor pressure (kPa) at `t_c` °C.
pub fn sat_vapor_pressure(t_c: f64) -> f64 {
    0.6108 * (17.27 * t_c / (t_c + 237.3)).exp()
}

/// Slope of the saturation vapor pressure curve (kPa °C⁻¹).
pub fn slope_svp(t_c: f64) -> f64 {
    4098.0 * sat_vapor_pressure(t_c) / (t_c + 237.3).powi(2)
}

/// Standard-atmosphere pressure (kPa) at `z` meters.
pub fn atmospheric_pressure(elevation_m: f64) -> f64 {
    101.3 * ((293.0 - 0.0065 * elevation_m) / 293.0).powf(5.26)
}

/// Psychrometric constant γ (kPa °C⁻¹) at `z` meters.
pub fn psychrometric_const(elevation_m: f64) -> f64 {
    0.000665 * atmospheric_pressure(elevation_m)
}

/// FAO-56 reference evapotranspiration in mm day⁻¹, with soil heat flux
/// taken as zero. A negative vapor pressure deficit is clamped to zero, and
/// so is the result.
pub fn penman_monteith(c: &ClimateRecord, s: &SiteRecord) -> Result<f64, EvapoError> {
    c.validate()?;
    s.validate()?;
    let t = c.tair_c;
    let delta = slope_svp(t);
    let gamma = psychrometric_const(s.elevation_m);
    let rn = c.net_sw - c.net_lw;
    let vpd = (sat_vapor_pressure(t) - c.ea_kpa).max(0.0);
    let u2 = c.wind_2m;
    let num = 0.408 * delta * rn + gamma * (900.0 / (t + 273.0)) * u2 * vpd;
    let den = delta + gamma * (1.0 + 0.34 * u2);
    Ok((num / den).max(0.0))
}
