use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::jobs::{DemographicsManifest, PopulationJob};
use super::plot::{encode, heatmap_scene, pyramid_scene, HeatCell, PlotSpec};
use super::runlog::{OutputGuard, RunLog};
use super::PipelineError;
use crate::geo::{BoundingBox, Decimals};
use crate::popsynth::{
    build_demographics_traced, consistency_report, convert_grid, pyramid, spawn_agents,
    write_roster, DemographicStore, PopError, PopulationTable, StageTrace,
};
use crate::raster_io::{read_ascii_grid_file, write_table_csv, Raster};

const PYRAMID_COLUMNS: [&str; 3] = ["gender", "bracket", "total"];

/// Files a run wrote, in write order, and its log.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationOutcome {
    pub outputs: Vec<PathBuf>,
    pub log: Vec<String>,
    pub population: u64,
    pub agents: Option<usize>,
}

fn read_grid(path: &Path) -> Result<Raster, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Invalid(format!("input grid {} does not exist", path.display())));
    }
    read_ascii_grid_file(path).map_err(|e| PipelineError::input(path, e))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Check the mass ledger of one stage and log it.
fn ledger(log: &mut RunLog, t: &StageTrace) -> Result<(), PipelineError> {
    log.step(t);
    let stage = t.name.rsplit('/').next().unwrap_or("");
    let ok = match stage {
        "subset" => true,
        "coarsen" => (t.mass_out - t.mass_in).abs() <= 1e-6 * t.mass_in.abs().max(1.0),
        "integerize" => t.mass_out == t.mass_in.round_ties_even(),
        _ => t.mass_out == t.mass_in,
    };
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Invariant(format!(
            "{}: mass_in={} mass_out={} breaks the {stage} ledger",
            t.name, t.mass_in, t.mass_out
        )))
    }
}

fn table_bytes(table: &PopulationTable) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(buf)
}

fn write_plot(
    guard: &mut OutputGuard,
    scene: super::plot::Scene,
    spec: &PlotSpec,
) -> Result<PathBuf, PipelineError> {
    let bytes = encode(&scene, spec.validate()?)?;
    guard.write(&spec.path, &bytes)
}

fn heat_cells(tables: &[&PopulationTable]) -> Vec<HeatCell> {
    // cells keyed on the table lattice so group rows for one cell coincide
    let mut cells: BTreeMap<(i64, i64), HeatCell> = BTreeMap::new();
    for t in tables {
        let s = t.decimals().scale() * 10.0;
        for r in t.rows() {
            let key = ((-r.lat * s).round() as i64, (r.lon * s).round() as i64);
            cells
                .entry(key)
                .or_insert(HeatCell {
                    lat: r.lat,
                    lon: r.lon,
                    value: 0.0,
                })
                .value += r.count as f64;
        }
    }
    cells.into_values().collect()
}

fn density_heatmap(
    guard: &mut OutputGuard,
    tables: &[&PopulationTable],
    decimals: Decimals,
    path: PathBuf,
) -> Result<PathBuf, PipelineError> {
    let spec = PlotSpec::new("Population density", path);
    let cells = heat_cells(tables);
    if cells.is_empty() {
        return Err(PipelineError::Plot(super::plot::PlotError::Empty(
            "no populated cell inside the bounding box",
        )));
    }
    write_plot(guard, heatmap_scene(&cells, decimals.cellsize(), &spec)?, &spec)
}

fn density_stage(
    input: &Path,
    bbox: &BoundingBox,
    decimals: Decimals,
    keep_zeros: bool,
    out: &Path,
    log: &mut RunLog,
    guard: &mut OutputGuard,
) -> Result<PopulationTable, PipelineError> {
    let r = read_grid(input)?;
    log.info(format!("density grid {}: {}x{}", file_name(input), r.shape().0, r.shape().1));
    let c = convert_grid(&r, bbox, decimals, keep_zeros, "density")?;
    for t in &c.traces {
        ledger(log, t)?;
    }
    guard.write(&out.join("population.csv"), &table_bytes(&c.table)?)?;
    density_heatmap(guard, &[&c.table], decimals, out.join("density_heatmap.svg"))?;
    Ok(c.table)
}

fn save_store(store: &DemographicStore, dir: &Path, guard: &mut OutputGuard) -> Result<(), PipelineError> {
    guard.dir(&dir.join("groups"))?;
    let m = store.manifest();
    let mut files = vec![dir.join("manifest.json")];
    files.extend(m.groups.iter().map(|g| dir.join(&g.file)));
    if let Some(t) = &m.total {
        files.push(dir.join(&t.file));
    }
    for f in &files {
        guard.adopt(f);
    }
    store.save(dir)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn demographics_stage(
    manifest: &DemographicsManifest,
    bbox: &BoundingBox,
    decimals: Decimals,
    keep_zeros: bool,
    store_dir: &Path,
    plot_dir: &Path,
    log: &mut RunLog,
    guard: &mut OutputGuard,
) -> Result<DemographicStore, PipelineError> {
    let mut rasters = BTreeMap::new();
    for (key, path) in manifest.group_paths() {
        rasters.insert(key, read_grid(&path)?);
    }
    let total = match manifest.total_path() {
        Some(p) => Some(read_grid(&p)?),
        None => None,
    };
    log.info(format!(
        "demographics {} {}: {} groups{}",
        manifest.country,
        manifest.year,
        rasters.len(),
        if total.is_some() { " plus total" } else { "" }
    ));
    let (store, traces) = build_demographics_traced(
        &manifest.spec(),
        &rasters,
        total.as_ref(),
        bbox,
        decimals,
        keep_zeros,
    )?;
    for t in &traces {
        ledger(log, t)?;
    }
    if let Some(t) = store.total() {
        let r = consistency_report(&store, t)?;
        log.check(format!(
            "groups_vs_total: cells={} groups_total={} table_total={} max_abs={} mean_abs={}",
            r.cells, r.groups_total, r.table_total, r.max_abs, r.mean_abs
        ));
    }
    save_store(&store, store_dir, guard)?;

    let rows = pyramid(&store);
    let mut csv = Vec::new();
    write_table_csv(&mut csv, &rows, &PYRAMID_COLUMNS).map_err(PopError::from)?;
    guard.write(&plot_dir.join("pyramid.csv"), &csv)?;
    let spec = PlotSpec::new(
        format!("Population by age and gender, {} {}", manifest.country, manifest.year),
        plot_dir.join("pyramid.svg"),
    );
    write_plot(guard, pyramid_scene(&rows, &spec)?, &spec)?;
    log.check(format!("store population={}", store.population()));
    Ok(store)
}

fn agents_stage(
    store: &DemographicStore,
    seed: u64,
    sample_ages: bool,
    out: &Path,
    log: &mut RunLog,
    guard: &mut OutputGuard,
) -> Result<usize, PipelineError> {
    let agents = spawn_agents(store, seed, sample_ages)?;
    let rows: usize = store.groups().iter().map(|(_, t)| t.len()).sum();
    let population = store.population();
    log.step(&StageTrace {
        name: "agents".into(),
        in_shape: (rows, store.groups().len()),
        out_shape: (agents.len(), 6),
        mass_in: population as f64,
        mass_out: agents.len() as f64,
    });
    if agents.len() as u64 != population {
        return Err(PipelineError::Invariant(format!(
            "roster has {} agents for a population of {population}",
            agents.len()
        )));
    }
    let pyramid_total: u64 = pyramid(store).iter().map(|r| r.total).sum();
    log.check(format!("roster length={} pyramid total={pyramid_total}", agents.len()));
    let mut buf = Vec::new();
    write_roster(&mut buf, &agents)?;
    guard.write(out, &buf)?;
    Ok(agents.len())
}

fn finish(
    log: RunLog,
    mut guard: OutputGuard,
    log_path: &Path,
    population: u64,
    agents: Option<usize>,
) -> Result<PopulationOutcome, PipelineError> {
    guard.write(log_path, log.render().as_bytes())?;
    Ok(PopulationOutcome {
        outputs: guard.commit(),
        log: log.lines().to_vec(),
        population,
        agents,
    })
}

/// Subset, coarsen and integerize one density grid into
/// `out/population.csv` plus a heatmap.
pub fn run_density(
    input: &Path,
    bbox: &BoundingBox,
    decimals: Decimals,
    keep_zeros: bool,
    out: &Path,
    echo: bool,
) -> Result<PopulationOutcome, PipelineError> {
    let mut log = RunLog::new(echo);
    let mut guard = OutputGuard::new();
    guard.dir(out)?;
    let table = density_stage(input, bbox, decimals, keep_zeros, out, &mut log, &mut guard)?;
    finish(log, guard, &out.join("run_log.txt"), table.total(), None)
}

/// Build a demographic store in `out` from a `demographics.toml` manifest.
pub fn run_demographics(
    manifest: &Path,
    bbox: &BoundingBox,
    decimals: Decimals,
    keep_zeros: bool,
    out: &Path,
    echo: bool,
) -> Result<PopulationOutcome, PipelineError> {
    let m = DemographicsManifest::read(manifest)?;
    let mut log = RunLog::new(echo);
    let mut guard = OutputGuard::new();
    guard.dir(out)?;
    let store = demographics_stage(&m, bbox, decimals, keep_zeros, out, out, &mut log, &mut guard)?;
    finish(log, guard, &out.join("run_log.txt"), store.population(), None)
}

/// Expand a saved store into an agent roster CSV at `out`. The log goes
/// next to it as `<stem>_run_log.txt`.
pub fn run_agents(
    store_dir: &Path,
    seed: u64,
    sample_ages: bool,
    out: &Path,
    echo: bool,
) -> Result<PopulationOutcome, PipelineError> {
    let store = DemographicStore::load(store_dir)?;
    let mut log = RunLog::new(echo);
    log.info(format!(
        "store {} {}: {} groups, seed={seed}, sample_ages={sample_ages}",
        store.manifest().country,
        store.manifest().year,
        store.groups().len()
    ));
    let mut guard = OutputGuard::new();
    let n = agents_stage(&store, seed, sample_ages, out, &mut log, &mut guard)?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "roster".into());
    let log_path = out.with_file_name(format!("{stem}_run_log.txt"));
    finish(log, guard, &log_path, store.population(), Some(n))
}

/// Run a whole population job into `job.out`: `population.csv` and
/// `density_heatmap.svg` from the density grid, the store under `store/`,
/// `pyramid.svg`, `agents.csv` and `run_log.txt`. Without a density grid
/// the heatmap shows the summed groups.
pub fn run_population(job: &PopulationJob, echo: bool) -> Result<PopulationOutcome, PipelineError> {
    job.validate()?;
    let mut log = RunLog::new(echo);
    let mut guard = OutputGuard::new();
    let out = &job.out;
    guard.dir(out)?;
    let mut population = 0;
    if let Some(d) = &job.density {
        let t = density_stage(d, &job.bbox, job.decimals, job.keep_zeros, out, &mut log, &mut guard)?;
        population = t.total();
    }
    let mut agents = None;
    if let Some(m) = &job.demographics {
        let store = demographics_stage(
            m,
            &job.bbox,
            job.decimals,
            job.keep_zeros,
            &out.join("store"),
            out,
            &mut log,
            &mut guard,
        )?;
        if job.density.is_none() {
            let tables: Vec<&PopulationTable> = store.groups().iter().map(|(_, t)| t).collect();
            density_heatmap(&mut guard, &tables, job.decimals, out.join("density_heatmap.svg"))?;
            population = store.population();
        }
        if job.roster {
            let n = agents_stage(&store, job.seed, job.sample_ages, &out.join("agents.csv"), &mut log, &mut guard)?;
            agents = Some(n);
        }
    }
    finish(log, guard, &out.join("run_log.txt"), population, agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popsynth::{AgeBracket, Gender};
    use crate::raster_io::{write_ascii_grid_file, GridHeader, DEFAULT_NODATA};

    fn grid(dir: &Path, name: &str, values: Vec<f64>) -> PathBuf {
        let h = GridHeader::new(4, 4, 19.8, 41.3, 0.01, DEFAULT_NODATA).unwrap();
        let p = dir.join(name);
        write_ascii_grid_file(&Raster::new(h, values).unwrap(), &p).unwrap();
        p
    }

    fn single_group_job(dir: &Path) -> PopulationJob {
        grid(dir, "female_all.asc", (0..16).map(|i| 0.3 + i as f64 * 0.55).collect());
        std::fs::write(
            dir.join("demographics.toml"),
            "country = \"ALB\"\nyear = 2020\ngenders = [\"female\"]\ngrid_pattern = \"{gender}_{bracket}.asc\"\n\n[[brackets]]\nlabel = \"all\"\nmin_age = 0\nmax_age = 99\n",
        )
        .unwrap();
        PopulationJob {
            density: None,
            demographics: Some(DemographicsManifest::read(&dir.join("demographics.toml")).unwrap()),
            bbox: BoundingBox::new(41.3, 41.34, 19.8, 19.84).unwrap(),
            decimals: Decimals::new(2).unwrap(),
            out: dir.join("out"),
            keep_zeros: false,
            seed: 11,
            sample_ages: true,
            roster: true,
        }
    }

    #[test]
    fn four_by_four_single_group() {
        let tmp = tempfile::tempdir().unwrap();
        let job = single_group_job(tmp.path());
        let o = run_population(&job, false).unwrap();
        let mass: f64 = (0..16).map(|i| 0.3 + i as f64 * 0.55).sum();
        assert_eq!(o.population, mass.round_ties_even() as u64);
        assert_eq!(o.agents, Some(o.population as usize));
        let store = DemographicStore::load(&job.out.join("store")).unwrap();
        assert_eq!(store.groups().len(), 1);
        assert_eq!(store.groups()[0].0.gender, Gender::Female);
        for f in ["agents.csv", "pyramid.svg", "density_heatmap.svg", "run_log.txt"] {
            assert!(job.out.join(f).exists(), "{f}");
        }
        assert!(o.log.iter().any(|l| l.starts_with("STEP female_all/integerize:")));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let mut job = single_group_job(tmp.path());
        run_population(&job, false).unwrap();
        let first = job.out.clone();
        job.out = tmp.path().join("again");
        let o = run_population(&job, false).unwrap();
        for p in o.outputs {
            let rel = p.strip_prefix(&job.out).unwrap();
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(first.join(rel)).unwrap(), "{}", rel.display());
        }
    }

    #[test]
    fn empty_intersection_names_subset_and_cleans_up() {
        let tmp = tempfile::tempdir().unwrap();
        let mut job = single_group_job(tmp.path());
        job.bbox = BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let err = run_population(&job, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("subset") && msg.contains("empty"), "{msg}");
        assert!(!err.is_invariant());
        assert!(!job.out.exists());
    }

    #[test]
    fn failure_after_writes_removes_them() {
        let tmp = tempfile::tempdir().unwrap();
        let mut job = single_group_job(tmp.path());
        // ages requested for a bracket without a range fails in the last stage
        let mut m = job.demographics.take().unwrap();
        m.brackets = vec![AgeBracket::unbounded("all")];
        job.demographics = Some(m);
        let err = run_population(&job, false).unwrap_err();
        assert!(err.to_string().contains("age range"), "{err}");
        assert!(!job.out.exists());
    }

    #[test]
    fn density_alone() {
        let tmp = tempfile::tempdir().unwrap();
        let input = grid(tmp.path(), "d.asc", vec![1.5; 16]);
        let bbox = BoundingBox::new(41.3, 41.34, 19.8, 19.84).unwrap();
        let out = tmp.path().join("o");
        let o = run_density(&input, &bbox, Decimals::new(2).unwrap(), false, &out, false).unwrap();
        assert_eq!(o.population, 24);
        let log = std::fs::read_to_string(out.join("run_log.txt")).unwrap();
        assert!(log.contains("STEP density/coarsen: in=4×4 out=4×4 mass_in=24 mass_out=24"), "{log}");
    }

    #[test]
    fn ledger_flags_broken_integerize() {
        let mut log = RunLog::new(false);
        let t = StageTrace {
            name: "x/integerize".into(),
            in_shape: (1, 1),
            out_shape: (1, 1),
            mass_in: 2.5,
            mass_out: 3.0,
        };
        assert!(ledger(&mut log, &t).unwrap_err().is_invariant());
    }
}
