use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{DemographicStore, Gender, PopError, PopulationTable};
use crate::raster_io::{write_table_csv, Field, Record};

pub const ROSTER_COLUMNS: [&str; 6] = ["agent_id", "gender", "bracket", "age_years", "lat", "lon"];

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub agent_id: u64,
    pub gender: Gender,
    pub bracket: String,
    pub age_years: Option<u32>,
    pub lat: f64,
    pub lon: f64,
}

impl Record for AgentRecord {
    fn field(&self, column: &str) -> Option<Field> {
        Some(match column {
            "agent_id" => self.agent_id.into(),
            "gender" => self.gender.as_str().into(),
            "bracket" => self.bracket.as_str().into(),
            "age_years" => self.age_years.map(i64::from).into(),
            "lat" => self.lat.into(),
            "lon" => self.lon.into(),
            _ => return None,
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one agent's generator, a hash of its position in the store.
fn agent_seed(seed: u64, group: usize, row: usize, copy: u64) -> u64 {
    [group as u64, row as u64, copy]
        .into_iter()
        .fold(splitmix64(seed), |h, part| splitmix64(h ^ part))
}

/// Expand every group row into `count` agents.
///
/// Groups are visited in manifest order and rows in table order, so agent
/// ids are dense from 0. With `sample_ages`, each agent's age is drawn
/// uniformly from its bracket with a generator keyed by
/// `(seed, group, row, copy)`; the roster is a pure function of
/// `(store, seed)` whatever the thread count.
pub fn spawn_agents(
    store: &DemographicStore,
    seed: u64,
    sample_ages: bool,
) -> Result<Vec<AgentRecord>, PopError> {
    let mut ranges = Vec::with_capacity(store.groups().len());
    for (key, _) in store.groups() {
        let bracket = store
            .bracket(&key.bracket)
            .ok_or_else(|| PopError::InvalidStore(format!("unknown bracket {}", key.bracket)))?;
        let range = match (sample_ages, bracket.range()) {
            (false, _) => None,
            (true, Some(r)) => Some(r),
            (true, None) => return Err(PopError::MissingAgeRange(bracket.label.clone())),
        };
        ranges.push(range);
    }

    // (group, row, first id) for every row that spawns someone
    let mut starts = Vec::new();
    let mut next: u64 = 0;
    for (g, (_, table)) in store.groups().iter().enumerate() {
        for (i, row) in table.rows().iter().enumerate() {
            if row.count > 0 {
                starts.push((g, i, next));
                next += row.count;
            }
        }
    }

    let agents = starts
        .par_iter()
        .flat_map_iter(|&(g, i, first)| {
            let (key, table) = &store.groups()[g];
            let row = table.rows()[i];
            let range = ranges[g];
            (0..row.count).map(move |c| AgentRecord {
                agent_id: first + c,
                gender: key.gender,
                bracket: key.bracket.clone(),
                age_years: range.map(|(lo, hi)| {
                    ChaCha8Rng::seed_from_u64(agent_seed(seed, g, i, c)).random_range(lo..=hi)
                }),
                lat: row.lat,
                lon: row.lon,
            })
        })
        .collect();
    Ok(agents)
}

pub fn write_roster<W: Write>(w: W, agents: &[AgentRecord]) -> Result<(), PopError> {
    Ok(write_table_csv(w, agents, &ROSTER_COLUMNS)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidRow {
    pub gender: Gender,
    pub bracket: String,
    pub total: u64,
}

impl Record for PyramidRow {
    fn field(&self, column: &str) -> Option<Field> {
        Some(match column {
            "gender" => self.gender.as_str().into(),
            "bracket" => self.bracket.as_str().into(),
            "total" => self.total.into(),
            _ => return None,
        })
    }
}

/// Per-group totals in manifest order.
pub fn pyramid(store: &DemographicStore) -> Vec<PyramidRow> {
    store
        .groups()
        .iter()
        .map(|(k, t)| PyramidRow {
            gender: k.gender,
            bracket: k.bracket.clone(),
            total: t.total(),
        })
        .collect()
}

/// Per-cell gap between the sum of the group tables and a total table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub cells: usize,
    pub groups_total: u64,
    pub table_total: u64,
    pub max_abs: u64,
    pub mean_abs: f64,
}

fn lattice_key(table: &PopulationTable, lat: f64, lon: f64) -> (i64, i64) {
    let s = table.decimals().scale() * 10.0;
    ((lat * s).round() as i64, (lon * s).round() as i64)
}

/// Compare the summed groups with `total` over the union of their cells.
/// Cells missing on one side count as zero there.
pub fn consistency_report(
    store: &DemographicStore,
    total: &PopulationTable,
) -> Result<ConsistencyReport, PopError> {
    if total.decimals() != store.decimals() {
        return Err(PopError::Misaligned(format!(
            "total table has {} decimals, store has {}",
            total.decimals(),
            store.decimals()
        )));
    }
    let mut cells: BTreeMap<(i64, i64), (u64, u64)> = BTreeMap::new();
    for (_, t) in store.groups() {
        for r in t.rows() {
            cells.entry(lattice_key(t, r.lat, r.lon)).or_default().0 += r.count;
        }
    }
    let group_cells = cells.len();
    let mut shared = 0usize;
    for r in total.rows() {
        let e = cells.entry(lattice_key(total, r.lat, r.lon)).or_default();
        if e.0 > 0 {
            shared += 1;
        }
        e.1 += r.count;
    }
    if group_cells > 0 && !total.is_empty() && shared == 0 {
        return Err(PopError::Misaligned(
            "groups and total table share no cell".into(),
        ));
    }
    let gaps: Vec<u64> = cells.values().map(|&(g, t)| g.abs_diff(t)).collect();
    let n = gaps.len();
    Ok(ConsistencyReport {
        cells: n,
        groups_total: store.population(),
        table_total: total.total(),
        max_abs: gaps.iter().copied().max().unwrap_or(0),
        mean_abs: if n == 0 {
            0.0
        } else {
            gaps.iter().sum::<u64>() as f64 / n as f64
        },
    })
}
