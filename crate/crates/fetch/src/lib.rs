//! Manifest-driven dataset downloads.
//!
//! A manifest names a URL template and a destination template. Binding the
//! placeholders (from `--set k=v` values, the manifest's own axes, and its
//! age brackets) expands it into a list of files, fetched into
//! `cache/<dataset_id>/<name>` with SHA-256 verification, range resume and
//! bounded retries. Shipped fixtures stand in for the network entirely.

mod fixtures;
pub mod mock;

pub use fixtures::{fixture_root, offline_fixture, FixtureSet, FIXTURE_IDS};

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("placeholder {{{0}}} has no binding (use --set {0}=...)")]
    Unbound(String),
    #[error("binding `{0}` matches no placeholder in the manifest")]
    UnusedBinding(String),
    #[error("destination `{0}` is produced by more than one binding")]
    DuplicateDestination(String),
    #[error("invalid destination name `{0}`")]
    BadDestination(String),
    #[error("auth token variable {0} is not set")]
    MissingToken(String),
    #[error("unknown fixture `{id}`; available: {available}")]
    UnknownFixture { id: String, available: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FetchError + '_ {
    move |source| FetchError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// An age bracket as the provider names it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketDef {
    pub label: String,
    #[serde(default)]
    pub min_age: Option<u32>,
    #[serde(default)]
    pub max_age: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub id: String,
    /// URL with `{name}` placeholders.
    pub url: String,
    /// File name inside the cache, with the same placeholders.
    pub destination: String,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    /// Default values per placeholder; `--set` overrides them.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<String>>,
    /// Age brackets; their labels bind `{bracket}`.
    #[serde(default)]
    pub brackets: Vec<BracketDef>,
    /// SHA-256 per destination name.
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
    /// Shipped fixture set used by offline mode.
    #[serde(default)]
    pub fixture: Option<String>,
}

fn placeholders(template: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| format!("unclosed `{{` in `{template}`"))?;
        let name = &after[..close];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad placeholder `{{{name}}}` in `{template}`"));
        }
        out.push(name.to_string());
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(format!("stray `}}` in `{template}`"));
    }
    Ok(out)
}

fn fill(template: &str, binding: &BTreeMap<String, String>) -> String {
    binding
        .iter()
        .fold(template.to_string(), |s, (k, v)| s.replace(&format!("{{{k}}}"), v))
}

/// One concrete file of a bound manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRequest {
    pub name: String,
    pub url: String,
    pub binding: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self, FetchError> {
        let bad = |message: String| FetchError::Manifest {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Self = toml::from_str(&text).map_err(|e| bad(e.message().to_string()))?;
        m.validate().map_err(bad)?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), String> {
        let safe = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)) && s != "." && s != "..";
        if !safe(&self.id) {
            return Err(format!("id `{}` must be letters, digits, `.`, `_` or `-`", self.id));
        }
        placeholders(&self.url)?;
        placeholders(&self.destination)?;
        for (name, sum) in &self.checksums {
            if sum.len() != 64 || !sum.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(format!("checksum for `{name}` is not a SHA-256 hex digest"));
            }
        }
        Ok(())
    }

    /// Placeholders in order of first appearance, URL first.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut all = placeholders(&self.url).unwrap_or_default();
        all.extend(placeholders(&self.destination).unwrap_or_default());
        all.retain(|p| seen.insert(p.clone()));
        all
    }

    /// Expand the manifest into files. Each binding value may be a comma
    /// separated list; lists expand as a cartesian product.
    pub fn plan(&self, bindings: &BTreeMap<String, String>) -> Result<Vec<FileRequest>, FetchError> {
        let names = self.placeholders();
        if let Some(extra) = bindings.keys().find(|k| !names.contains(k)) {
            return Err(FetchError::UnusedBinding(extra.clone()));
        }
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for p in &names {
            let values: Vec<String> = if let Some(v) = bindings.get(p) {
                v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            } else if let Some(v) = self.axes.get(p) {
                v.clone()
            } else if p == "bracket" && !self.brackets.is_empty() {
                self.brackets.iter().map(|b| b.label.clone()).collect()
            } else {
                Vec::new()
            };
            if values.is_empty() {
                return Err(FetchError::Unbound(p.clone()));
            }
            axes.push((p.clone(), values));
        }

        let mut combos: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
        for (name, values) in &axes {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.insert(name.clone(), v.clone());
                        c
                    })
                })
                .collect();
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(combos.len());
        for binding in combos {
            let name = fill(&self.destination, &binding);
            let ok = !name.is_empty()
                && !name.contains(['/', '\\'])
                && name != "."
                && name != ".."
                && !name.ends_with(".part")
                && !name.ends_with(".bad")
                && name != INDEX;
            if !ok {
                return Err(FetchError::BadDestination(name));
            }
            if !seen.insert(name.clone()) {
                return Err(FetchError::DuplicateDestination(name));
            }
            out.push(FileRequest {
                url: fill(&self.url, &binding),
                name,
                binding,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileStatus {
    Downloaded,
    Cached,
    Resumed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChecksumStatus {
    /// Matched the manifest or the cache index.
    Verified,
    /// No reference digest to compare against.
    Unchecked,
    /// Did not match; the file was quarantined.
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub name: String,
    pub path: PathBuf,
    pub status: FileStatus,
    pub bytes: u64,
    pub checksum: ChecksumStatus,
    pub attempts: u32,
    pub elapsed_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchReport {
    pub dataset: String,
    pub files: Vec<FileReport>,
    pub warnings: Vec<String>,
}

impl FetchReport {
    pub fn count(&self, status: FileStatus) -> usize {
        self.files.iter().filter(|f| f.status == status).count()
    }

    pub fn failed(&self) -> impl Iterator<Item = &FileReport> {
        self.files.iter().filter(|f| f.status == FileStatus::Failed)
    }

    /// True when some file failed for a reason other than its checksum.
    pub fn network_failure(&self) -> bool {
        self.failed().any(|f| f.checksum != ChecksumStatus::Mismatch)
    }

    pub fn checksum_failure(&self) -> bool {
        self.failed().any(|f| f.checksum == ChecksumStatus::Mismatch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchOptions {
    pub attempts: u32,
    /// Wait before the second attempt; doubles after each failure.
    pub backoff: Duration,
    pub concurrency: usize,
    pub timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: Duration::from_secs(1),
            concurrency: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

const INDEX: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    sha256: String,
    bytes: u64,
}

fn read_index(dir: &Path) -> BTreeMap<String, IndexEntry> {
    fs::read(dir.join(INDEX))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default()
}

fn write_index(dir: &Path, index: &BTreeMap<String, IndexEntry>) -> Result<(), FetchError> {
    let tmp = dir.join(format!("{INDEX}.tmp"));
    let mut text = serde_json::to_string_pretty(index).expect("index serializes");
    text.push('\n');
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    let path = dir.join(INDEX);
    fs::rename(&tmp, &path).map_err(io_err(&path))
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut n = 0u64;
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        n += k as u64;
    }
    Ok((hex::encode(h.finalize()), n))
}

fn quarantine(path: &Path) -> io::Result<PathBuf> {
    let mut bad = path.as_os_str().to_owned();
    bad.push(".bad");
    let bad = PathBuf::from(bad);
    fs::rename(path, &bad)?;
    Ok(bad)
}

enum Transfer {
    Done { resumed: bool, attempts: u32 },
    Failed { error: String, attempts: u32 },
}

fn transfer(agent: &ureq::Agent, url: &str, part: &Path, token: Option<&str>, opts: &FetchOptions) -> Transfer {
    let mut error = String::from("no attempt made");
    let mut resumed = false;
    for attempt in 0..opts.attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(opts.backoff * 2u32.pow(attempt - 1));
        }
        let offset = fs::metadata(part).map(|m| m.len()).unwrap_or(0);
        let mut req = agent.get(url);
        if offset > 0 {
            req = req.header("Range", format!("bytes={offset}-"));
        }
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let resp = match req.call() {
            Ok(r) => r,
            Err(e) => {
                error = e.to_string();
                continue;
            }
        };
        let status = resp.status().as_u16();
        let append = match status {
            206 if offset > 0 => true,
            200 => false,
            416 => {
                let _ = fs::remove_file(part);
                error = "server rejected the resume range".into();
                continue;
            }
            s => {
                error = format!("HTTP {s}");
                let retryable = s >= 500 || s == 408 || s == 429;
                if retryable {
                    continue;
                }
                return Transfer::Failed {
                    error,
                    attempts: attempt + 1,
                };
            }
        };
        let file = if append {
            OpenOptions::new().append(true).open(part)
        } else {
            File::create(part)
        };
        let mut file = match file {
            Ok(f) => f,
            Err(e) => {
                return Transfer::Failed {
                    error: format!("{}: {e}", part.display()),
                    attempts: attempt + 1,
                }
            }
        };
        let mut body = resp.into_body().into_reader();
        match io::copy(&mut body, &mut file) {
            Ok(_) => {
                resumed |= append;
                return Transfer::Done {
                    resumed,
                    attempts: attempt + 1,
                };
            }
            Err(e) => error = format!("transfer interrupted: {e}"),
        }
    }
    Transfer::Failed {
        error,
        attempts: opts.attempts.max(1),
    }
}

fn token_for(manifest: &DatasetManifest) -> Result<Option<String>, FetchError> {
    match &manifest.auth_env {
        None => Ok(None),
        Some(var) => match std::env::var(var) {
            Ok(t) if !t.is_empty() => Ok(Some(t)),
            _ => Err(FetchError::MissingToken(var.clone())),
        },
    }
}

/// Fetch every file of `manifest` under `bindings` into
/// `cache_dir/<id>/`. Files already cached with a matching digest are not
/// transferred again.
pub fn fetch(
    manifest: &DatasetManifest,
    bindings: &BTreeMap<String, String>,
    cache_dir: &Path,
    opts: &FetchOptions,
) -> Result<FetchReport, FetchError> {
    let plan = manifest.plan(bindings)?;
    let dir = cache_dir.join(&manifest.id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut index = read_index(&dir);
    let mut warnings = Vec::new();

    let mut slots: Vec<Option<FileReport>> = vec![None; plan.len()];
    let mut pending = Vec::new();
    for (i, req) in plan.iter().enumerate() {
        let path = dir.join(&req.name);
        let expected = manifest.checksums.get(&req.name).map(|s| s.to_ascii_lowercase());
        if expected.is_none() {
            warnings.push(format!("{}: no checksum in the manifest, provenance unverified", req.name));
        }
        if path.exists() {
            let started = Instant::now();
            let (sum, bytes) = sha256_file(&path).map_err(io_err(&path))?;
            let reference = expected.clone().or_else(|| index.get(&req.name).map(|e| e.sha256.clone()));
            match reference {
                Some(r) if r == sum => {
                    slots[i] = Some(FileReport {
                        name: req.name.clone(),
                        path,
                        status: FileStatus::Cached,
                        bytes,
                        checksum: ChecksumStatus::Verified,
                        attempts: 0,
                        elapsed_ms: started.elapsed().as_millis() as u64,
                        error: None,
                    });
                    continue;
                }
                Some(_) => {
                    let bad = quarantine(&path).map_err(io_err(&path))?;
                    warnings.push(format!(
                        "{}: cached copy failed verification, moved to {}",
                        req.name,
                        bad.display()
                    ));
                    index.remove(&req.name);
                }
                None => {
                    slots[i] = Some(FileReport {
                        name: req.name.clone(),
                        path,
                        status: FileStatus::Cached,
                        bytes,
                        checksum: ChecksumStatus::Unchecked,
                        attempts: 0,
                        elapsed_ms: started.elapsed().as_millis() as u64,
                        error: None,
                    });
                    continue;
                }
            }
        }
        pending.push((i, expected));
    }

    if !pending.is_empty() {
        let token = token_for(manifest)?;
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(opts.timeout))
            .build();
        let agent = ureq::Agent::new_with_config(config);
        let queue = Mutex::new(pending.into_iter());
        let results = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..opts.concurrency.max(1) {
                s.spawn(|| loop {
                    let Some((i, expected)) = queue.lock().unwrap().next() else { break };
                    let r = download(&agent, &plan[i], &dir, expected.as_deref(), token.as_deref(), opts);
                    results.lock().unwrap().push((i, r));
                });
            }
        });
        for (i, (report, entry)) in results.into_inner().unwrap() {
            if let Some(e) = entry {
                index.insert(report.name.clone(), e);
            }
            slots[i] = Some(report);
        }
    }
    write_index(&dir, &index)?;
    Ok(FetchReport {
        dataset: manifest.id.clone(),
        files: slots.into_iter().map(|s| s.expect("every file reported")).collect(),
        warnings,
    })
}

fn download(
    agent: &ureq::Agent,
    req: &FileRequest,
    dir: &Path,
    expected: Option<&str>,
    token: Option<&str>,
    opts: &FetchOptions,
) -> (FileReport, Option<IndexEntry>) {
    let started = Instant::now();
    let path = dir.join(&req.name);
    let part = dir.join(format!("{}.part", req.name));
    let mut report = FileReport {
        name: req.name.clone(),
        path: path.clone(),
        status: FileStatus::Failed,
        bytes: 0,
        checksum: ChecksumStatus::Unchecked,
        attempts: 0,
        elapsed_ms: 0,
        error: None,
    };
    let finish = |mut r: FileReport| {
        r.elapsed_ms = started.elapsed().as_millis() as u64;
        r
    };
    let (resumed, attempts) = match transfer(agent, &req.url, &part, token, opts) {
        Transfer::Done { resumed, attempts } => (resumed, attempts),
        Transfer::Failed { error, attempts } => {
            report.attempts = attempts;
            report.error = Some(error);
            return (finish(report), None);
        }
    };
    report.attempts = attempts;
    let (sum, bytes) = match sha256_file(&part) {
        Ok(v) => v,
        Err(e) => {
            report.error = Some(format!("{}: {e}", part.display()));
            return (finish(report), None);
        }
    };
    report.bytes = bytes;
    if let Some(exp) = expected {
        if exp != sum {
            report.checksum = ChecksumStatus::Mismatch;
            let moved = fs::rename(&part, dir.join(format!("{}.bad", req.name)));
            report.error = Some(match moved {
                Ok(()) => format!("checksum mismatch (got {sum}), quarantined as {}.bad", req.name),
                Err(e) => format!("checksum mismatch (got {sum}); quarantine failed: {e}"),
            });
            return (finish(report), None);
        }
        report.checksum = ChecksumStatus::Verified;
    }
    if let Err(e) = fs::rename(&part, &path) {
        report.error = Some(format!("{}: {e}", path.display()));
        return (finish(report), None);
    }
    report.status = if resumed { FileStatus::Resumed } else { FileStatus::Downloaded };
    (finish(report), Some(IndexEntry { sha256: sum, bytes }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> DatasetManifest {
        toml::from_str(
            r#"
id = "worldpop-agesex"
url = "https://example.org/{iso3}/{year}/{iso3}_{gender}_{bracket}_{year}.tif"
destination = "{gender}_{bracket}.tif"

[axes]
gender = ["f", "m"]

[[brackets]]
label = "0"
min_age = 0
max_age = 0

[[brackets]]
label = "1"
min_age = 1
max_age = 4
"#,
        )
        .unwrap()
    }

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn plan_expands_axes_and_brackets() {
        let plan = manifest().plan(&bind(&[("iso3", "NER"), ("year", "2020")])).unwrap();
        let names: Vec<_> = plan.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["f_0.tif", "f_1.tif", "m_0.tif", "m_1.tif"]);
        assert_eq!(plan[1].url, "https://example.org/NER/2020/NER_f_1_2020.tif");
    }

    #[test]
    fn bindings_override_and_list() {
        let plan = manifest()
            .plan(&bind(&[("iso3", "NER"), ("year", "2019,2020"), ("gender", "m")]))
            .unwrap_err();
        // two years map onto the same destination names
        assert!(matches!(plan, FetchError::DuplicateDestination(_)));
        let plan = manifest().plan(&bind(&[("iso3", "NER"), ("year", "2020"), ("gender", "m")])).unwrap();
        assert_eq!(plan.len(), 2);
    }

    #[test]
    fn unbound_and_unused() {
        assert!(matches!(manifest().plan(&bind(&[("iso3", "NER")])), Err(FetchError::Unbound(p)) if p == "year"));
        assert!(matches!(
            manifest().plan(&bind(&[("iso3", "NER"), ("year", "2020"), ("colour", "red")])),
            Err(FetchError::UnusedBinding(_))
        ));
    }

    #[test]
    fn template_errors() {
        assert!(placeholders("a{b").is_err());
        assert!(placeholders("a}b").is_err());
        assert!(placeholders("a{b c}").is_err());
        assert_eq!(placeholders("{a}/{b}_{a}").unwrap(), ["a", "b", "a"]);
        let mut m = manifest();
        m.destination = "../{gender}".into();
        assert!(matches!(
            m.plan(&bind(&[("iso3", "NER"), ("year", "2020")])),
            Err(FetchError::BadDestination(_))
        ));
        m.id = "../x".into();
        assert!(m.validate().is_err());
    }
}
