//! Atomic output files: every file is written to a temporary sibling (or
//! to `FILTRA_TMPDIR`) and renamed into place, so a crash never leaves a
//! partially written output behind.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// Called after the temporary file is complete and before the rename.
pub type FaultHook = Box<dyn Fn(&Path) -> io::Result<()>>;

pub struct OutputDir {
    dir: PathBuf,
    tmp: Option<PathBuf>,
    fault: Option<FaultHook>,
}

impl OutputDir {
    /// Creates `dir` if needed. Temporary files go to `FILTRA_TMPDIR` when
    /// set.
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let tmp = std::env::var_os("FILTRA_TMPDIR").map(PathBuf::from);
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            tmp,
            fault: None,
        })
    }

    pub fn with_tmp_dir(mut self, tmp: Option<PathBuf>) -> Self {
        self.tmp = tmp;
        self
    }

    pub fn with_fault(mut self, hook: FaultHook) -> Self {
        self.fault = Some(hook);
        self
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let target = self.path(name);
        let staged = match &self.tmp {
            Some(t) => stage(t, bytes)?,
            None => stage(&self.dir, bytes)?,
        };
        if let Some(hook) = &self.fault {
            hook(&target)?;
        }
        match staged.persist(&target) {
            Ok(_) => {}
            // Renames cannot cross filesystems; restage next to the target.
            Err(e) if self.tmp.is_some() => {
                drop(e);
                stage(&self.dir, bytes)?.persist(&target).map_err(|e| e.error)?;
            }
            Err(e) => return Err(e.error),
        }
        Ok(target)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn stage(dir: &Path, bytes: &[u8]) -> io::Result<NamedTempFile> {
    fs::create_dir_all(dir)?;
    let mut f = tempfile::Builder::new().prefix(".filtra-").tempfile_in(dir)?;
    f.write_all(bytes)?;
    f.as_file().sync_all()?;
    Ok(f)
}
