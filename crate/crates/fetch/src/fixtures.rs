use std::path::{Path, PathBuf};

use super::FetchError;

/// Fixture ids shipped with the repository.
pub const FIXTURE_IDS: [&str; 2] = ["pop-fixture", "climate-fixture"];

/// A shipped fixture: its directory, the manifest a pipeline reads, and
/// every data file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureSet {
    pub id: String,
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Directory holding the fixtures: `SIMSEED_FIXTURES` when set, otherwise
/// `fixtures/` at the repository root.
pub fn fixture_root() -> PathBuf {
    let root = match std::env::var_os("SIMSEED_FIXTURES") {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"),
    };
    root.canonicalize().unwrap_or(root)
}

fn listing(dir: &Path, ext: &[&str]) -> Result<Vec<PathBuf>, FetchError> {
    let rd = std::fs::read_dir(dir).map_err(|source| FetchError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| ext.contains(&e)))
        .collect();
    files.sort();
    Ok(files)
}

/// Local paths of the fixture set `id`.
pub fn offline_fixture(id: &str) -> Result<FixtureSet, FetchError> {
    let (sub, manifest, ext): (&str, &str, &[&str]) = match id {
        "pop-fixture" => ("pop", "demographics.toml", &["asc"]),
        "climate-fixture" => ("climate", "climate.toml", &["asc", "csv"]),
        _ => {
            return Err(FetchError::UnknownFixture {
                id: id.to_string(),
                available: FIXTURE_IDS.join(", "),
            })
        }
    };
    let root = fixture_root().join(sub);
    let manifest = root.join(manifest);
    if !manifest.exists() {
        return Err(FetchError::Io {
            path: manifest.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "fixture manifest missing"),
        });
    }
    let files = listing(&root, ext)?;
    Ok(FixtureSet {
        id: id.to_string(),
        root,
        manifest,
        files,
    })
}
