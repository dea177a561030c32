//! Demographic store: a directory holding `manifest.json`, one table per
//! (gender, bracket) group under `groups/`, and an optional `total.csv`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    integerize, make_population_table, DemographicKey, Gender, PopError, PopulationTable,
    StageTrace,
};
use crate::geo::{coarsen, subset, BoundingBox, Decimals};
use crate::raster_io::Raster;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBracket {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_age: Option<u32>,
}

impl AgeBracket {
    pub fn new(label: impl Into<String>, min_age: u32, max_age: u32) -> Self {
        Self {
            label: label.into(),
            min_age: Some(min_age),
            max_age: Some(max_age),
        }
    }

    pub fn unbounded(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            min_age: None,
            max_age: None,
        }
    }

    /// Inclusive year range, when both ends are known.
    pub fn range(&self) -> Option<(u32, u32)> {
        Some((self.min_age?, self.max_age?))
    }
}

/// Who the store describes: country, year, and the ordered group axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicSpec {
    pub country: String,
    pub year: i32,
    pub genders: Vec<Gender>,
    pub brackets: Vec<AgeBracket>,
}

impl DemographicSpec {
    /// Groups in gender-major order.
    pub fn keys(&self) -> Vec<DemographicKey> {
        self.genders
            .iter()
            .flat_map(|&g| self.brackets.iter().map(move |b| DemographicKey::new(g, &b.label)))
            .collect()
    }

    pub fn bracket(&self, label: &str) -> Option<&AgeBracket> {
        self.brackets.iter().find(|b| b.label == label)
    }

    pub fn validate(&self) -> Result<(), PopError> {
        let invalid = |m: String| Err(PopError::InvalidStore(m));
        let mut seen = HashSet::new();
        if let Some(g) = self.genders.iter().find(|g| !seen.insert(**g)) {
            return invalid(format!("gender `{g}` listed twice"));
        }
        let mut seen = HashSet::new();
        for b in &self.brackets {
            if b.label.is_empty() || b.label.contains(['/', '\\', ',']) {
                return invalid(format!("bad bracket label `{}`", b.label));
            }
            if !seen.insert(b.label.as_str()) {
                return invalid(format!("bracket `{}` listed twice", b.label));
            }
            if let (Some(lo), Some(hi)) = (b.min_age, b.max_age) {
                if lo > hi {
                    return invalid(format!("bracket `{}` has min_age {lo} > max_age {hi}", b.label));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub gender: Gender,
    pub bracket: String,
    pub file: String,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalEntry {
    pub file: String,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub country: String,
    pub year: i32,
    pub decimals: Decimals,
    pub bbox: BoundingBox,
    pub genders: Vec<Gender>,
    pub brackets: Vec<AgeBracket>,
    pub groups: Vec<GroupEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<TotalEntry>,
}

impl StoreManifest {
    pub fn spec(&self) -> DemographicSpec {
        DemographicSpec {
            country: self.country.clone(),
            year: self.year,
            genders: self.genders.clone(),
            brackets: self.brackets.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemographicStore {
    manifest: StoreManifest,
    groups: Vec<(DemographicKey, PopulationTable)>,
    total: Option<PopulationTable>,
}

/// True when every coordinate is a cell center of the `10^-k` lattice.
fn on_lattice(table: &PopulationTable) -> bool {
    let scale = table.decimals().scale();
    let centered = |x: f64| {
        let s = x * scale - 0.5;
        (s - s.round()).abs() < 1e-6
    };
    table.rows().iter().all(|r| centered(r.lat) && centered(r.lon))
}

impl DemographicStore {
    /// Assemble a store from tables already on the `decimals` lattice.
    pub fn new(
        spec: DemographicSpec,
        decimals: Decimals,
        bbox: BoundingBox,
        groups: Vec<(DemographicKey, PopulationTable)>,
        total: Option<PopulationTable>,
    ) -> Result<Self, PopError> {
        spec.validate()?;
        let entries = groups
            .iter()
            .map(|(k, t)| GroupEntry {
                gender: k.gender,
                bracket: k.bracket.clone(),
                file: format!("groups/{}.csv", k.slug()),
                total: t.total(),
            })
            .collect();
        let manifest = StoreManifest {
            country: spec.country,
            year: spec.year,
            decimals,
            bbox,
            genders: spec.genders,
            brackets: spec.brackets,
            groups: entries,
            total: total.as_ref().map(|t| TotalEntry {
                file: "total.csv".into(),
                total: t.total(),
            }),
        };
        let store = Self {
            manifest,
            groups,
            total,
        };
        store.validate()?;
        Ok(store)
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn decimals(&self) -> Decimals {
        self.manifest.decimals
    }

    /// Group tables in manifest order.
    pub fn groups(&self) -> &[(DemographicKey, PopulationTable)] {
        &self.groups
    }

    pub fn group(&self, key: &DemographicKey) -> Option<&PopulationTable> {
        self.groups.iter().find(|(k, _)| k == key).map(|(_, t)| t)
    }

    pub fn total(&self) -> Option<&PopulationTable> {
        self.total.as_ref()
    }

    pub fn bracket(&self, label: &str) -> Option<&AgeBracket> {
        self.manifest.brackets.iter().find(|b| b.label == label)
    }

    /// Σ of every group count.
    pub fn population(&self) -> u64 {
        self.groups.iter().map(|(_, t)| t.total()).sum()
    }

    fn validate(&self) -> Result<(), PopError> {
        let m = &self.manifest;
        m.spec().validate()?;
        let expected = m.spec().keys();
        let actual: Vec<&DemographicKey> = self.groups.iter().map(|(k, _)| k).collect();
        if expected.len() != actual.len() || expected.iter().zip(&actual).any(|(a, b)| a != *b) {
            return Err(PopError::InvalidStore(format!(
                "expected {} groups in gender-major order, found {}",
                expected.len(),
                actual.len()
            )));
        }
        if m.groups.len() != self.groups.len() {
            return Err(PopError::InvalidStore("group index does not match tables".into()));
        }
        for (entry, (key, table)) in m.groups.iter().zip(&self.groups) {
            if entry.gender != key.gender || entry.bracket != key.bracket {
                return Err(PopError::InvalidStore(format!(
                    "group index entry {}_{} out of order",
                    entry.gender, entry.bracket
                )));
            }
            if entry.total != table.total() {
                return Err(PopError::InvalidStore(format!(
                    "group {key}: index total {} but table sums to {}",
                    entry.total,
                    table.total()
                )));
            }
        }
        for table in self.groups.iter().map(|(_, t)| t).chain(self.total.as_ref()) {
            if table.decimals() != m.decimals || !on_lattice(table) {
                return Err(PopError::Misaligned(format!(
                    "table is not on the {}-decimal lattice",
                    m.decimals
                )));
            }
        }
        match (&m.total, &self.total) {
            (Some(e), Some(t)) if e.total != t.total() => Err(PopError::InvalidStore(format!(
                "total index says {} but table sums to {}",
                e.total,
                t.total()
            ))),
            (Some(_), None) | (None, Some(_)) => {
                Err(PopError::InvalidStore("total table and index disagree".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), PopError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| PopError::File { path, source }
        };
        let groups_dir = dir.join("groups");
        fs::create_dir_all(&groups_dir).map_err(io(&groups_dir))?;
        for (entry, (_, table)) in self.manifest.groups.iter().zip(&self.groups) {
            let path = dir.join(&entry.file);
            let f = File::create(&path).map_err(io(&path))?;
            table.write_csv(BufWriter::new(f))?;
        }
        if let (Some(entry), Some(table)) = (&self.manifest.total, &self.total) {
            let path = dir.join(&entry.file);
            let f = File::create(&path).map_err(io(&path))?;
            table.write_csv(BufWriter::new(f))?;
        }
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(io(&path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, PopError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| PopError::File { path, source }
        };
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let manifest: StoreManifest = serde_json::from_str(&text)?;
        let read = |file: &str| -> Result<PopulationTable, PopError> {
            if Path::new(file).is_absolute() || file.contains("..") {
                return Err(PopError::InvalidStore(format!("file `{file}` escapes the store")));
            }
            let path = dir.join(file);
            let f = File::open(&path).map_err(io(&path))?;
            PopulationTable::read_csv(BufReader::new(f), manifest.decimals)
        };
        let mut groups = Vec::with_capacity(manifest.groups.len());
        for e in &manifest.groups {
            groups.push((DemographicKey::new(e.gender, &e.bracket), read(&e.file)?));
        }
        let total = manifest.total.as_ref().map(|e| read(&e.file)).transpose()?;
        let store = Self {
            manifest,
            groups,
            total,
        };
        store.validate()?;
        Ok(store)
    }
}

/// Result of running one grid through subset, coarsen, integerize and
/// tabulation.
#[derive(Debug, Clone)]
pub struct GridConversion {
    pub table: PopulationTable,
    pub raster: Raster,
    pub traces: Vec<StageTrace>,
}

/// Subset `r` to `bbox`, coarsen to `decimals`, integerize, and tabulate.
pub fn convert_grid(
    r: &Raster,
    bbox: &BoundingBox,
    decimals: Decimals,
    keep_zeros: bool,
    label: &str,
) -> Result<GridConversion, PopError> {
    let mut traces = Vec::with_capacity(4);
    let mut trace = |stage: &str, a: &Raster, b_shape: (usize, usize), b_mass: f64| {
        traces.push(StageTrace {
            name: format!("{label}/{stage}"),
            in_shape: a.shape(),
            out_shape: b_shape,
            mass_in: a.mass(),
            mass_out: b_mass,
        })
    };
    let at = |stage: &str| {
        let stage = format!("{label}/{stage}");
        move |e: PopError| PopError::Stage {
            stage,
            source: Box::new(e),
        }
    };
    let sub = subset(r, bbox).map_err(|e| at("subset")(e.into()))?;
    trace("subset", r, sub.shape(), sub.mass());
    let coarse = coarsen(&sub, decimals).map_err(|e| at("coarsen")(e.into()))?;
    trace("coarsen", &sub, coarse.shape(), coarse.mass());
    let whole = integerize(&coarse).map_err(at("integerize"))?;
    trace("integerize", &coarse, whole.shape(), whole.mass());
    let table = make_population_table(&whole, keep_zeros, decimals).map_err(at("table"))?;
    trace("table", &whole, (table.len(), 5), table.total() as f64);
    Ok(GridConversion {
        table,
        raster: whole,
        traces,
    })
}

/// Build a demographic store from one raster per group (and optionally the
/// total-population raster), all on the same source grid.
pub fn build_demographics(
    spec: &DemographicSpec,
    group_rasters: &BTreeMap<DemographicKey, Raster>,
    total: Option<&Raster>,
    bbox: &BoundingBox,
    decimals: Decimals,
) -> Result<DemographicStore, PopError> {
    build_demographics_traced(spec, group_rasters, total, bbox, decimals, false).map(|(s, _)| s)
}

pub fn build_demographics_traced(
    spec: &DemographicSpec,
    group_rasters: &BTreeMap<DemographicKey, Raster>,
    total: Option<&Raster>,
    bbox: &BoundingBox,
    decimals: Decimals,
    keep_zeros: bool,
) -> Result<(DemographicStore, Vec<StageTrace>), PopError> {
    spec.validate()?;
    let keys = spec.keys();
    if keys.is_empty() {
        return Err(PopError::InvalidStore("no demographic groups to build".into()));
    }
    let mut rasters = Vec::with_capacity(keys.len());
    for key in &keys {
        rasters.push(
            group_rasters
                .get(key)
                .ok_or_else(|| PopError::MissingGroup(key.clone()))?,
        );
    }
    if let Some(extra) = group_rasters.keys().find(|k| !keys.contains(k)) {
        return Err(PopError::InvalidStore(format!(
            "grid for {extra} is not a group of the manifest"
        )));
    }
    let reference = *rasters[0].header();
    for (key, r) in keys.iter().zip(&rasters).skip(1) {
        if !r.header().same_geometry(&reference) {
            return Err(PopError::GeometryMismatch(format!(
                "{key} differs from {}",
                keys[0]
            )));
        }
    }
    if let Some(t) = total {
        if !t.header().same_geometry(&reference) {
            return Err(PopError::GeometryMismatch("total grid differs from the groups".into()));
        }
    }

    let mut traces = Vec::new();
    let mut groups = Vec::with_capacity(keys.len());
    for (key, r) in keys.into_iter().zip(rasters) {
        let c = convert_grid(r, bbox, decimals, keep_zeros, &key.slug())?;
        traces.extend(c.traces);
        groups.push((key, c.table));
    }
    let total = match total {
        Some(t) => {
            let c = convert_grid(t, bbox, decimals, keep_zeros, "total")?;
            traces.extend(c.traces);
            Some(c.table)
        }
        None => None,
    };
    let store = DemographicStore::new(spec.clone(), decimals, *bbox, groups, total)?;
    Ok((store, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster_io::{GridHeader, DEFAULT_NODATA};

    fn spec(genders: Vec<Gender>, labels: &[&str]) -> DemographicSpec {
        DemographicSpec {
            country: "ALB".into(),
            year: 2020,
            genders,
            brackets: labels.iter().map(|l| AgeBracket::unbounded(*l)).collect(),
        }
    }

    fn grid(values: Vec<f64>) -> Raster {
        let h = GridHeader::new(4, 4, 19.8, 41.3, 0.01, DEFAULT_NODATA).unwrap();
        Raster::new(h, values).unwrap()
    }

    fn d2() -> Decimals {
        Decimals::new(2).unwrap()
    }

    #[test]
    fn identity_pipeline() {
        let r = grid((0..16).map(|i| i as f64 * 0.7).collect());
        let s = spec(vec![Gender::Female], &["0-9"]);
        let key = DemographicKey::new(Gender::Female, "0-9");
        let bbox = BoundingBox::of_grid(r.header());
        let store = build_demographics(&s, &BTreeMap::from([(key.clone(), r.clone())]), None, &bbox, d2())
            .unwrap();
        let expected = make_population_table(&integerize(&r).unwrap(), false, d2()).unwrap();
        assert_eq!(store.group(&key).unwrap(), &expected);
    }

    #[test]
    fn shared_key_set() {
        let s = spec(vec![Gender::Female, Gender::Male], &["0-9"]);
        let a = grid((0..16).map(|i| 1.0 + i as f64 * 0.3).collect());
        let b = grid((0..16).map(|i| 2.0 + (15 - i) as f64 * 0.45).collect());
        let rasters = BTreeMap::from([
            (DemographicKey::new(Gender::Female, "0-9"), a),
            (DemographicKey::new(Gender::Male, "0-9"), b),
        ]);
        let bbox = BoundingBox::new(41.3, 41.34, 19.8, 19.84).unwrap();
        let store = build_demographics(&s, &rasters, None, &bbox, d2()).unwrap();
        let coords = |t: &PopulationTable| -> Vec<(f64, f64)> {
            t.rows().iter().map(|r| (r.lat, r.lon)).collect()
        };
        assert_eq!(coords(&store.groups()[0].1), coords(&store.groups()[1].1));
        assert_eq!(store.groups()[0].1.len(), 16);
    }

    #[test]
    fn eighteen_groups() {
        let labels = ["0-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-99"];
        let s = spec(vec![Gender::Female, Gender::Male], &labels);
        let rasters: BTreeMap<_, _> = s
            .keys()
            .into_iter()
            .map(|k| (k, grid(vec![1.5; 16])))
            .collect();
        let bbox = BoundingBox::of_grid(rasters.values().next().unwrap().header());
        let store = build_demographics(&s, &rasters, None, &bbox, d2()).unwrap();
        assert_eq!(store.groups().len(), 18);
        assert_eq!(store.manifest().groups.len(), 18);
        assert_eq!(store.manifest().groups[9].gender, Gender::Male);
    }

    #[test]
    fn geometry_mismatch() {
        let s = spec(vec![Gender::Female, Gender::Male], &["0-9"]);
        let other = Raster::new(
            GridHeader::new(4, 4, 19.9, 41.3, 0.01, DEFAULT_NODATA).unwrap(),
            vec![1.0; 16],
        )
        .unwrap();
        let rasters = BTreeMap::from([
            (DemographicKey::new(Gender::Female, "0-9"), grid(vec![1.0; 16])),
            (DemographicKey::new(Gender::Male, "0-9"), other),
        ]);
        let bbox = BoundingBox::new(41.0, 42.0, 19.0, 20.0).unwrap();
        assert!(matches!(
            build_demographics(&s, &rasters, None, &bbox, d2()),
            Err(PopError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn empty_subset() {
        let s = spec(vec![Gender::Female], &["0-9"]);
        let rasters = BTreeMap::from([(DemographicKey::new(Gender::Female, "0-9"), grid(vec![1.0; 16]))]);
        let bbox = BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let err = build_demographics(&s, &rasters, None, &bbox, d2()).unwrap_err();
        assert_eq!(err.stage(), Some("female_0-9/subset"));
        assert!(matches!(err.root(), PopError::Geo(crate::geo::GeoError::EmptyIntersection(_))));
        assert!(err.to_string().contains("subset"));
    }

    #[test]
    fn save_and_load() {
        let mut s = spec(vec![Gender::Female, Gender::Male], &["0-9", "10-19"]);
        s.brackets[0] = AgeBracket::new("0-9", 0, 9);
        let rasters: BTreeMap<_, _> = s
            .keys()
            .into_iter()
            .enumerate()
            .map(|(i, k)| (k, grid((0..16).map(|j| (i + j) as f64 * 0.35).collect())))
            .collect();
        let total = grid((0..16).map(|j| j as f64 * 1.4 + 1.2).collect());
        let bbox = BoundingBox::of_grid(total.header());
        let store = build_demographics(&s, &rasters, Some(&total), &bbox, d2()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        assert!(dir.path().join("groups/male_10-19.csv").exists());
        assert!(dir.path().join("total.csv").exists());
        let back = DemographicStore::load(dir.path()).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn tampered_total_rejected() {
        let s = spec(vec![Gender::Female], &["0-9"]);
        let rasters = BTreeMap::from([(DemographicKey::new(Gender::Female, "0-9"), grid(vec![2.0; 16]))]);
        let bbox = BoundingBox::of_grid(rasters.values().next().unwrap().header());
        let store = build_demographics(&s, &rasters, None, &bbox, d2()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"total\": 32", "\"total\": 31");
        fs::write(&path, text).unwrap();
        assert!(matches!(DemographicStore::load(dir.path()), Err(PopError::InvalidStore(_))));
    }
}
