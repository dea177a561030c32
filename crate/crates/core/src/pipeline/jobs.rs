//! Job files: TOML descriptions of one population or crop run. Relative
//! paths inside a job resolve against the job file's directory.

use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::PipelineError;
use crate::calendar::YearMonth;
use crate::geo::{BoundingBox, Decimals};
use crate::popsynth::{AgeBracket, DemographicKey, DemographicSpec, Gender};

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    toml::from_str(&text).map_err(|e| config(path, e.message()))
}

fn config(path: &Path, message: impl ToString) -> PipelineError {
    PipelineError::Config {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// `base.join(p)` with `.` and `dir/..` folded away lexically.
fn resolve(base: &Path, p: impl AsRef<Path>) -> PathBuf {
    let mut out = PathBuf::new();
    for c in base.join(p).components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir if matches!(out.components().next_back(), Some(Component::Normal(_))) => {
                out.pop();
            }
            c => out.push(c),
        }
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

/// `demographics.toml`: the group axes plus where each group's grid lives.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicsManifest {
    pub country: String,
    pub year: i32,
    pub genders: Vec<Gender>,
    pub brackets: Vec<AgeBracket>,
    /// File name pattern with `{gender}` and `{bracket}`.
    pub grid_pattern: String,
    /// Total-population grid, compared against the summed groups.
    #[serde(default)]
    pub total: Option<PathBuf>,
    #[serde(skip)]
    base: PathBuf,
}

impl DemographicsManifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let mut m: Self = read_toml(path)?;
        if !m.grid_pattern.contains("{gender}") || !m.grid_pattern.contains("{bracket}") {
            return Err(config(path, "grid_pattern must contain {gender} and {bracket}"));
        }
        m.spec().validate().map_err(|e| config(path, e))?;
        if m.spec().keys().is_empty() {
            return Err(config(path, "at least one gender and one bracket are required"));
        }
        m.base = base_of(path);
        Ok(m)
    }

    pub fn spec(&self) -> DemographicSpec {
        DemographicSpec {
            country: self.country.clone(),
            year: self.year,
            genders: self.genders.clone(),
            brackets: self.brackets.clone(),
        }
    }

    /// Grid path of every group, in store order.
    pub fn group_paths(&self) -> Vec<(DemographicKey, PathBuf)> {
        self.spec()
            .keys()
            .into_iter()
            .map(|k| {
                let name = self
                    .grid_pattern
                    .replace("{gender}", k.gender.as_str())
                    .replace("{bracket}", &k.bracket);
                let p = self.base.join(name);
                (k, p)
            })
            .collect()
    }

    pub fn total_path(&self) -> Option<PathBuf> {
        self.total.as_ref().map(|t| self.base.join(t))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulationJob {
    density: Option<PathBuf>,
    demographics: Option<PathBuf>,
    bbox: String,
    decimals: u32,
    out: PathBuf,
    #[serde(default)]
    keep_zeros: bool,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    sample_ages: bool,
    #[serde(default = "yes")]
    roster: bool,
}

fn yes() -> bool {
    true
}

/// Everything `run_population` needs: the density grid, the demographic
/// grids, and how to cut and resolve them.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationJob {
    pub density: Option<PathBuf>,
    pub demographics: Option<DemographicsManifest>,
    pub bbox: BoundingBox,
    pub decimals: Decimals,
    pub out: PathBuf,
    pub keep_zeros: bool,
    pub seed: u64,
    pub sample_ages: bool,
    pub roster: bool,
}

impl PopulationJob {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let raw: RawPopulationJob = read_toml(path)?;
        let base = base_of(path);
        let bbox = BoundingBox::parse(&raw.bbox).map_err(|e| config(path, format!("bbox: {e}")))?;
        let decimals = Decimals::new(raw.decimals).map_err(|e| config(path, format!("decimals: {e}")))?;
        let demographics = match raw.demographics {
            Some(p) => Some(DemographicsManifest::read(&resolve(&base, p))?),
            None => None,
        };
        let job = Self {
            density: raw.density.map(|p| resolve(&base, p)),
            demographics,
            bbox,
            decimals,
            out: resolve(&base, raw.out),
            keep_zeros: raw.keep_zeros,
            seed: raw.seed,
            sample_ages: raw.sample_ages,
            roster: raw.roster,
        };
        job.validate().map_err(|e| config(path, e))?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.density.is_none() && self.demographics.is_none() {
            return Err(PipelineError::Invalid(
                "a population job needs `density`, `demographics`, or both".into(),
            ));
        }
        if self.demographics.is_none() && self.roster {
            return Err(PipelineError::Invalid(
                "an agent roster needs `demographics`; set roster = false".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CropMode {
    Location {
        lat: f64,
        lon: f64,
        months: Vec<YearMonth>,
    },
    Regional {
        bbox: BoundingBox,
        months: Vec<YearMonth>,
    },
}

impl CropMode {
    pub fn months(&self) -> &[YearMonth] {
        match self {
            CropMode::Location { months, .. } | CropMode::Regional { months, .. } => months,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCropJob {
    climate: PathBuf,
    crops: Vec<String>,
    mode: String,
    lat: Option<f64>,
    lon: Option<f64>,
    bbox: Option<String>,
    months: String,
    #[serde(default)]
    cap: bool,
    out: PathBuf,
}

/// A crop run over one climate manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct CropJob {
    /// Path of the `climate.toml` manifest.
    pub climate: PathBuf,
    pub crops: Vec<String>,
    pub mode: CropMode,
    pub cap: bool,
    pub out: PathBuf,
}

impl CropJob {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let raw: RawCropJob = read_toml(path)?;
        let base = base_of(path);
        let months = YearMonth::parse_list(&raw.months).map_err(|e| config(path, e))?;
        let mode = match raw.mode.as_str() {
            "location" => match (raw.lat, raw.lon, &raw.bbox) {
                (Some(lat), Some(lon), None) => CropMode::Location { lat, lon, months },
                _ => return Err(config(path, "location mode needs lat and lon and no bbox")),
            },
            "regional" => match (raw.lat, raw.lon, &raw.bbox) {
                (None, None, Some(b)) => CropMode::Regional {
                    bbox: BoundingBox::parse(b).map_err(|e| config(path, format!("bbox: {e}")))?,
                    months,
                },
                _ => return Err(config(path, "regional mode needs bbox and no lat/lon")),
            },
            other => return Err(config(path, format!("mode must be location or regional, got `{other}`"))),
        };
        let job = Self {
            climate: resolve(&base, raw.climate),
            crops: raw.crops,
            mode,
            cap: raw.cap,
            out: resolve(&base, raw.out),
        };
        job.validate().map_err(|e| config(path, e))?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.crops.is_empty() {
            return Err(PipelineError::Invalid("at least one crop is required".into()));
        }
        if let CropMode::Regional { .. } = self.mode {
            if self.crops.len() != 1 {
                return Err(PipelineError::Invalid(format!(
                    "regional mode takes exactly one crop, got {}",
                    self.crops.len()
                )));
            }
        }
        if let CropMode::Location { lat, lon, .. } = self.mode {
            if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
                return Err(PipelineError::Invalid(format!("lat {lat} outside [-90, 90]")));
            }
            if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
                return Err(PipelineError::Invalid(format!("lon {lon} outside [-180, 180]")));
            }
        }
        let months = self.mode.months();
        if months.is_empty() {
            return Err(PipelineError::Invalid("no months requested".into()));
        }
        let mut sorted = months.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != months.len() || sorted != months {
            return Err(PipelineError::Invalid(
                "months must be listed in increasing order without repeats".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn resolve_folds_dots() {
        assert_eq!(resolve(Path::new("jobs"), "../out/a"), PathBuf::from("out/a"));
        assert_eq!(resolve(Path::new("a/./b"), "../c"), PathBuf::from("a/c"));
        assert_eq!(resolve(Path::new(""), "../x"), PathBuf::from("../x"));
        assert_eq!(resolve(Path::new("/r/jobs"), "/abs/p"), PathBuf::from("/abs/p"));
        assert_eq!(resolve(Path::new("jobs"), ".."), PathBuf::from("."));
    }

    const DEMOG: &str = r#"
country = "ALB"
year = 2020
genders = ["female", "male"]
grid_pattern = "{gender}_{bracket}.asc"
total = "density.asc"

[[brackets]]
label = "0-9"
min_age = 0
max_age = 9

[[brackets]]
label = "10-19"
"#;

    #[test]
    fn demographics_paths_resolve() {
        let tmp = tempfile::tempdir().unwrap();
        let m = DemographicsManifest::read(&write(tmp.path(), "d.toml", DEMOG)).unwrap();
        let paths = m.group_paths();
        assert_eq!(paths.len(), 4);
        assert_eq!(paths[1].1, tmp.path().join("female_10-19.asc"));
        assert_eq!(m.total_path().unwrap(), tmp.path().join("density.asc"));
        assert_eq!(m.brackets[1].range(), None);
    }

    #[test]
    fn population_job() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "d.toml", DEMOG);
        let p = write(
            tmp.path(),
            "job.toml",
            "demographics = \"d.toml\"\nbbox = \"41,42,19,20\"\ndecimals = 2\nout = \"out\"\nseed = 7\n",
        );
        let job = PopulationJob::read(&p).unwrap();
        assert_eq!(job.seed, 7);
        assert!(job.roster && !job.keep_zeros);
        assert_eq!(job.out, tmp.path().join("out"));

        let bad = write(tmp.path(), "bad.toml", "density = \"x.asc\"\nbbox = \"41,42,19,20\"\ndecimals = 9\nout = \"o\"\n");
        let msg = PopulationJob::read(&bad).unwrap_err().to_string();
        assert!(msg.contains("decimals"), "{msg}");
        let typo = write(tmp.path(), "typo.toml", "densty = \"x.asc\"\nbbox = \"41,42,19,20\"\ndecimals = 2\nout = \"o\"\n");
        assert!(PopulationJob::read(&typo).is_err());
    }

    #[test]
    fn crop_jobs() {
        let tmp = tempfile::tempdir().unwrap();
        let p = write(
            tmp.path(),
            "c.toml",
            "climate = \"climate.toml\"\ncrops = [\"millet\", \"maize\"]\nmode = \"location\"\nlat = 13.5\nlon = 2.5\nmonths = \"2020-07..2020-09\"\nout = \"o\"\n",
        );
        let job = CropJob::read(&p).unwrap();
        assert_eq!(job.mode.months().len(), 3);
        let p = write(
            tmp.path(),
            "r.toml",
            "climate = \"climate.toml\"\ncrops = [\"millet\", \"maize\"]\nmode = \"regional\"\nbbox = \"13,14,2,3\"\nmonths = \"2020-07\"\nout = \"o\"\n",
        );
        assert!(CropJob::read(&p).unwrap_err().to_string().contains("exactly one crop"));
    }
}
