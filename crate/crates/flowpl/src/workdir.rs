//! Output directories are built under `<name>.tmp` and renamed into place
//! once complete, so a directory without the suffix is always whole.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub fn tmp_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    out.with_file_name(name)
}

#[derive(Debug)]
pub struct Staging {
    out: PathBuf,
    tmp: PathBuf,
    resumed: bool,
}

impl Staging {
    /// Refuses a complete `out` unless `force`. A leftover partial
    /// directory is reused when `resume` is set and discarded otherwise.
    pub fn begin(out: &Path, force: bool, resume: bool) -> Result<Self> {
        if out.file_name().is_none() {
            return Err(Error::Usage(format!("{} is not a usable output path", out.display())));
        }
        if out.exists() {
            if !force {
                return Err(Error::Usage(format!("{} already exists; pass --force to replace it", out.display())));
            }
            remove(out)?;
        }
        let tmp = tmp_path(out);
        let resumed = resume && tmp.is_dir();
        if tmp.exists() && !resumed {
            remove(&tmp)?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Self { out: out.to_path_buf(), tmp, resumed })
    }

    pub fn dir(&self) -> &Path {
        &self.tmp
    }

    pub fn resumed(&self) -> bool {
        self.resumed
    }

    pub fn commit(self) -> Result<PathBuf> {
        fs::rename(&self.tmp, &self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(self.out)
    }
}

fn remove(p: &Path) -> Result<()> {
    let r = if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) };
    r.map_err(|e| Error::io(p, e))
}

/// Writes `bytes` to `path` through a `.tmp` sibling.
pub fn write_file(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Usage(format!("{} already exists; pass --force to replace it", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
