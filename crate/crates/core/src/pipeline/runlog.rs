use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::popsynth::StageTrace;

/// Ordered log of one run. `STEP`, `CHECK` and `INFO` lines go to stdout,
/// `WARN` lines to stderr; all of them end up in `run_log.txt`.
#[derive(Debug, Default)]
pub struct RunLog {
    lines: Vec<String>,
    echo: bool,
}

impl RunLog {
    pub fn new(echo: bool) -> Self {
        Self {
            lines: Vec::new(),
            echo,
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    fn push(&mut self, line: String, stderr: bool) {
        if self.echo {
            if stderr {
                eprintln!("{line}");
            } else {
                println!("{line}");
            }
        }
        self.lines.push(line);
    }

    pub fn step(&mut self, t: &StageTrace) {
        self.push(t.to_string(), false);
    }

    pub fn check(&mut self, msg: impl AsRef<str>) {
        self.push(format!("CHECK {}", msg.as_ref()), false);
    }

    pub fn info(&mut self, msg: impl AsRef<str>) {
        self.push(format!("INFO {}", msg.as_ref()), false);
    }

    pub fn warn(&mut self, msg: impl AsRef<str>) {
        self.push(format!("WARN {}", msg.as_ref()), true);
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| l.strip_prefix("WARN "))
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// Tracks the files and directories a run creates and removes them again
/// unless the run commits.
#[derive(Debug)]
pub struct OutputGuard {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self {
            files: Vec::new(),
            dirs: Vec::new(),
            committed: false,
        }
    }

    /// Create `dir` and any missing parents, remembering which were new.
    pub fn dir(&mut self, dir: &Path) -> Result<(), PipelineError> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        missing.reverse();
        self.dirs.extend(missing);
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        if let Some(parent) = path.parent() {
            self.dir(parent)?;
        }
        self.files.push(path.to_path_buf());
        let mut f = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
        f.write_all(bytes).map_err(|e| PipelineError::io(path, e))?;
        Ok(path.to_path_buf())
    }

    /// Record a file written by someone else so it is cleaned up too.
    pub fn adopt(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.files)
    }
}

impl Default for OutputGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            // only removes directories left empty
            let _ = fs::remove_dir(d);
        }
    }
}
