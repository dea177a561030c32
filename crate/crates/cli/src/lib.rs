//! Argument parsing and dispatch for the `simseed` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or validation error,
//! 3 network error, 4 internal invariant violation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use simseed_core::calendar::YearMonth;
use simseed_core::geo::{BoundingBox, Decimals};
use simseed_core::pipeline::{
    run_agents, run_crop, run_demographics, run_density, run_population, CropJob, CropMode,
    PipelineError, PopulationJob,
};
use simseed_fetch::{fetch, offline_fixture, DatasetManifest, FetchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Usage = 1,
    Invalid = 2,
    Network = 3,
    Invariant = 4,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Parser)]
#[command(name = "simseed", version, about = "Synthetic population and crop water (WRSI) pipelines")]
struct Cli {
    /// Cap worker threads; outputs do not depend on it.
    #[arg(long, global = true, value_name = "N", value_parser = parse_threads)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download a dataset described by a manifest into the cache.
    Fetch(FetchArgs),
    /// Population pipeline steps.
    #[command(subcommand)]
    Pop(PopCommand),
    /// Crop water pipeline.
    #[command(subcommand)]
    Crop(CropCommand),
}

#[derive(Debug, Args)]
struct FetchArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Placeholder binding, `name=value` or `name=a,b,c`; repeatable.
    #[arg(long = "set", value_name = "K=V", value_parser = parse_binding)]
    set: Vec<(String, String)>,
    /// Use the manifest's shipped fixture instead of the network.
    #[arg(long)]
    offline: bool,
    /// Cache directory (default: $SIMSEED_CACHE or ./cache).
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PopCommand {
    /// Subset, coarsen and integerize a density grid.
    Density {
        #[arg(long, value_name = "GRID")]
        input: PathBuf,
        /// lat_min,lat_max,lon_min,lon_max
        #[arg(long, value_name = "BBOX", allow_hyphen_values = true, value_parser = parse_bbox)]
        bbox: BoundingBox,
        /// Decimal places of the output lattice, 2..=6.
        #[arg(long, value_name = "N", value_parser = parse_decimals)]
        decimals: Decimals,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        keep_zeros: bool,
    },
    /// Build a demographic store from a demographics manifest.
    Demog {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "BBOX", allow_hyphen_values = true, value_parser = parse_bbox)]
        bbox: BoundingBox,
        #[arg(long, value_name = "N", value_parser = parse_decimals)]
        decimals: Decimals,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        keep_zeros: bool,
    },
    /// Expand a store into an agent roster CSV.
    Agents {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        #[arg(long, value_name = "SEED")]
        seed: u64,
        #[arg(long)]
        sample_ages: bool,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Run a whole population job file.
    Run {
        #[arg(long, value_name = "FILE")]
        job: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum CropCommand {
    /// Monthly and seasonal WRSI at one location.
    Location {
        #[arg(long, value_name = "FILE")]
        climate: PathBuf,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_lat)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_lon)]
        lon: f64,
        /// Comma separated crop names.
        #[arg(long, value_name = "A,B", value_delimiter = ',', required = true)]
        crops: Vec<String>,
        /// YYYY-MM..YYYY-MM
        #[arg(long, value_name = "RANGE", value_parser = parse_months)]
        months: Months,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Cap WRSI at 100.
        #[arg(long = "cap-100")]
        cap: bool,
    },
    /// Monthly WRSI grids of one crop over a bounding box.
    Regional {
        #[arg(long, value_name = "FILE")]
        climate: PathBuf,
        #[arg(long, value_name = "BBOX", allow_hyphen_values = true, value_parser = parse_bbox)]
        bbox: BoundingBox,
        #[arg(long, value_name = "NAME")]
        crop: String,
        /// Comma separated months or ranges.
        #[arg(long, value_name = "LIST", value_parser = parse_months)]
        months: Months,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long = "cap-100")]
        cap: bool,
    },
    /// Run a crop job file.
    Run {
        #[arg(long, value_name = "FILE")]
        job: PathBuf,
    },
}

#[derive(Debug, Clone)]
struct Months(Vec<YearMonth>);

fn parse_threads(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("must be a whole number >= 1, got `{s}`")),
    }
}

fn parse_binding(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected name=value, got `{s}`")),
    }
}

fn parse_bbox(s: &str) -> Result<BoundingBox, String> {
    BoundingBox::parse(s).map_err(|e| format!("{e} (order: lat_min,lat_max,lon_min,lon_max)"))
}

fn parse_decimals(s: &str) -> Result<Decimals, String> {
    let k: u32 = s.parse().map_err(|_| format!("must be an integer in [2, 6], got `{s}`"))?;
    Decimals::new(k).map_err(|_| format!("must be in [2, 6], got {k}"))
}

fn parse_coord(s: &str, limit: f64) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v.abs() <= limit => Ok(v),
        _ => Err(format!("must be a number in [-{limit}, {limit}], got `{s}`")),
    }
}

fn parse_lat(s: &str) -> Result<f64, String> {
    parse_coord(s, 90.0)
}

fn parse_lon(s: &str) -> Result<f64, String> {
    parse_coord(s, 180.0)
}

fn parse_months(s: &str) -> Result<Months, String> {
    YearMonth::parse_list(s).map(Months).map_err(|e| e.to_string())
}

fn pipeline_status(e: &PipelineError) -> Status {
    if e.is_invariant() {
        Status::Invariant
    } else {
        Status::Invalid
    }
}

fn report_outputs(outputs: &[PathBuf]) {
    for p in outputs {
        println!("OUTPUT {}", p.display());
    }
}

fn cache_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SIMSEED_CACHE").filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("cache"))
}

fn run_fetch(args: FetchArgs) -> Result<Status, String> {
    let manifest = DatasetManifest::read(&args.manifest).map_err(|e| e.to_string())?;
    let mut bindings = BTreeMap::new();
    for (k, v) in args.set {
        if bindings.insert(k.clone(), v).is_some() {
            return Err(format!("--set {k} given more than once"));
        }
    }
    if args.offline {
        let id = manifest
            .fixture
            .as_deref()
            .ok_or_else(|| format!("manifest `{}` names no fixture; offline mode is unavailable", manifest.id))?;
        let set = offline_fixture(id).map_err(|e| e.to_string())?;
        println!("FIXTURE {} {}", set.id, set.root.display());
        println!("OUTPUT {}", set.manifest.display());
        report_outputs(&set.files);
        return Ok(Status::Ok);
    }
    let cache = cache_dir(args.cache);
    let report = fetch(&manifest, &bindings, &cache, &FetchOptions::default()).map_err(|e| e.to_string())?;
    for w in &report.warnings {
        eprintln!("WARN {w}");
    }
    for f in &report.files {
        let status = serde_status(f.status);
        println!(
            "FETCH {status} {} bytes={} checksum={} attempts={} elapsed_ms={}",
            f.name,
            f.bytes,
            serde_status(f.checksum),
            f.attempts,
            f.elapsed_ms
        );
        if let Some(e) = &f.error {
            eprintln!("error: {}: {e}", f.name);
        } else {
            println!("OUTPUT {}", f.path.display());
        }
    }
    Ok(if report.network_failure() {
        Status::Network
    } else if report.checksum_failure() {
        Status::Invalid
    } else {
        Status::Ok
    })
}

fn serde_status<T: std::fmt::Debug>(v: T) -> String {
    format!("{v:?}").to_ascii_lowercase()
}

fn pop(cmd: PopCommand) -> Result<Vec<PathBuf>, PipelineError> {
    let o = match cmd {
        PopCommand::Density {
            input,
            bbox,
            decimals,
            out,
            keep_zeros,
        } => run_density(&input, &bbox, decimals, keep_zeros, &out, true)?,
        PopCommand::Demog {
            manifest,
            bbox,
            decimals,
            out,
            keep_zeros,
        } => run_demographics(&manifest, &bbox, decimals, keep_zeros, &out, true)?,
        PopCommand::Agents {
            store,
            seed,
            sample_ages,
            out,
        } => run_agents(&store, seed, sample_ages, &out, true)?,
        PopCommand::Run { job } => run_population(&PopulationJob::read(&job)?, true)?,
    };
    Ok(o.outputs)
}

fn crop(cmd: CropCommand) -> Result<Vec<PathBuf>, PipelineError> {
    let job = match cmd {
        CropCommand::Location {
            climate,
            lat,
            lon,
            crops,
            months,
            out,
            cap,
        } => CropJob {
            climate,
            crops,
            mode: CropMode::Location { lat, lon, months: months.0 },
            cap,
            out,
        },
        CropCommand::Regional {
            climate,
            bbox,
            crop,
            months,
            out,
            cap,
        } => CropJob {
            climate,
            crops: vec![crop],
            mode: CropMode::Regional { bbox, months: months.0 },
            cap,
            out,
        },
        CropCommand::Run { job } => CropJob::read(&job)?,
    };
    Ok(run_crop(&job, true)?.outputs)
}

fn dispatch(command: Command) -> Status {
    let pipeline = |r: Result<Vec<PathBuf>, PipelineError>| match r {
        Ok(outputs) => {
            report_outputs(&outputs);
            Status::Ok
        }
        Err(e) => {
            eprintln!("error: {e}");
            pipeline_status(&e)
        }
    };
    match command {
        Command::Fetch(args) => match run_fetch(args) {
            Ok(s) => s,
            // manifest, binding and token problems
            Err(e) => {
                eprintln!("error: {e}");
                Status::Invalid
            }
        },
        Command::Pop(cmd) => pipeline(pop(cmd)),
        Command::Crop(cmd) => pipeline(crop(cmd)),
    }
}

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I) -> Status
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let status = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Status::Ok,
                ErrorKind::ValueValidation | ErrorKind::InvalidValue => Status::Invalid,
                _ => Status::Usage,
            };
            // help and version go to stdout, diagnostics to stderr
            let _ = e.print();
            return status;
        }
    };
    match cli.threads {
        None => dispatch(cli.command),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => {
                eprintln!("error: --threads: {e}");
                Status::Invariant
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bindings() {
        assert_eq!(parse_binding("month=07,08").unwrap(), ("month".into(), "07,08".into()));
        assert!(parse_binding("=x").is_err());
        assert!(parse_binding("novalue").is_err());
    }

    #[test]
    fn decimals_range() {
        assert_eq!(parse_decimals("4").unwrap().get(), 4);
        assert!(parse_decimals("9").unwrap_err().contains("[2, 6]"));
        assert!(parse_decimals("two").is_err());
    }

    #[test]
    fn coordinates() {
        assert_eq!(parse_lat("-13.5").unwrap(), -13.5);
        assert!(parse_lat("91").is_err());
        assert!(parse_lon("NaN").is_err());
        assert_eq!(parse_threads("8").unwrap(), 8);
        assert!(parse_threads("0").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["simseed", "--help"]), Status::Ok);
        assert_eq!(run(["simseed", "pop", "nope"]), Status::Usage);
        assert_eq!(run(["simseed", "--threads", "x", "pop", "run", "--job", "j.toml"]), Status::Invalid);
        assert_eq!(run(["simseed", "pop", "run", "--job", "does/not/exist.toml"]), Status::Invalid);
        assert_eq!(Status::Invariant.code(), 4);
    }
}
