use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::EvapoError;
use crate::calendar::YearMonth;

const STARTER_CROPS: &str = include_str!("../../data/crops.csv");

/// Crop coefficients and a month-based growing calendar.
///
/// The season starts in `planting_month` and runs through the initial,
/// development, mid and late stages in turn; it may wrap past December.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub name: String,
    pub kc_init: f64,
    pub kc_mid: f64,
    pub kc_end: f64,
    pub planting_month: u32,
    pub months_init: u32,
    pub months_dev: u32,
    pub months_mid: u32,
    pub months_late: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initial,
    Development,
    Mid,
    Late,
}

/// Crop state in one calendar month.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Season {
    Dormant,
    Growing { stage: Stage, kc: f64 },
}

impl Season {
    pub fn kc(self) -> Option<f64> {
        match self {
            Season::Growing { kc, .. } => Some(kc),
            Season::Dormant => None,
        }
    }

    pub fn is_dormant(self) -> bool {
        self == Season::Dormant
    }
}

impl CropSpec {
    pub fn season_months(&self) -> u32 {
        self.months_init + self.months_dev + self.months_mid + self.months_late
    }

    pub fn validate(&self) -> Result<(), EvapoError> {
        let fail = |message: String| {
            Err(EvapoError::InvalidCrop {
                name: self.name.clone(),
                message,
            })
        };
        if self.name.trim().is_empty() {
            return fail("empty name".into());
        }
        for (label, kc) in [("kc_init", self.kc_init), ("kc_mid", self.kc_mid), ("kc_end", self.kc_end)] {
            if !(kc.is_finite() && kc > 0.0) {
                return fail(format!("{label} must be positive, got {kc}"));
            }
        }
        if !(1..=12).contains(&self.planting_month) {
            return fail(format!("planting_month {} not in 1..=12", self.planting_month));
        }
        if self.months_init == 0 || self.months_mid == 0 {
            return fail("initial and mid stages need at least one month".into());
        }
        if self.season_months() > 12 {
            return fail(format!("season of {} months is longer than a year", self.season_months()));
        }
        Ok(())
    }

    fn stage_at(&self, t: f64) -> Stage {
        let dev = f64::from(self.months_init);
        let mid = dev + f64::from(self.months_dev);
        let late = mid + f64::from(self.months_mid);
        if t < dev {
            Stage::Initial
        } else if t < mid {
            Stage::Development
        } else if t < late {
            Stage::Mid
        } else {
            Stage::Late
        }
    }
}

/// Crop coefficient `t` months after planting, for `t` inside the season.
///
/// Flat at `kc_init` and `kc_mid` during the initial and mid stages, linear
/// across development and late. Stages of zero length give a step.
pub fn kc_at(crop: &CropSpec, t: f64) -> Option<f64> {
    let len = f64::from(crop.season_months());
    if !(0.0..=len).contains(&t) {
        return None;
    }
    let dev_start = f64::from(crop.months_init);
    let mid_start = dev_start + f64::from(crop.months_dev);
    let late_start = mid_start + f64::from(crop.months_mid);
    let lerp = |a: f64, b: f64, f: f64| a + f * (b - a);
    Some(match crop.stage_at(t) {
        Stage::Initial => crop.kc_init,
        Stage::Development => lerp(
            crop.kc_init,
            crop.kc_mid,
            (t - dev_start) / f64::from(crop.months_dev),
        ),
        Stage::Mid => crop.kc_mid,
        Stage::Late if crop.months_late == 0 => crop.kc_end,
        Stage::Late => lerp(
            crop.kc_mid,
            crop.kc_end,
            (t - late_start) / f64::from(crop.months_late),
        ),
    })
}

/// Crop state in `month`, with the coefficient sampled at mid-month.
pub fn kc_for(crop: &CropSpec, month: YearMonth) -> Season {
    let offset = (month.month() + 12 - crop.planting_month) % 12;
    if offset >= crop.season_months() {
        return Season::Dormant;
    }
    let t = f64::from(offset) + 0.5;
    match kc_at(crop, t) {
        Some(kc) => Season::Growing {
            stage: crop.stage_at(t),
            kc,
        },
        None => Season::Dormant,
    }
}

/// Read crop definitions with columns `name, kc_init, kc_mid, kc_end,
/// planting_month, months_init, months_dev, months_mid, months_late`.
pub fn read_crops<R: Read>(r: R) -> Result<Vec<CropSpec>, EvapoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut crops: Vec<CropSpec> = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.deserialize() {
        let crop: CropSpec = rec?;
        crop.validate()?;
        if !seen.insert(crop.name.clone()) {
            return Err(EvapoError::InvalidCrop {
                name: crop.name,
                message: "defined twice".into(),
            });
        }
        crops.push(crop);
    }
    Ok(crops)
}

pub fn find_crop<'a>(crops: &'a [CropSpec], name: &str) -> Result<&'a CropSpec, EvapoError> {
    crops
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| EvapoError::UnknownCrop(name.to_string()))
}

/// Starter crop table for the Sahel: millet, sorghum, maize, cowpea and
/// groundnut.
pub fn default_crops() -> Vec<CropSpec> {
    read_crops(STARTER_CROPS.as_bytes()).expect("bundled crop table is valid")
}
