use std::io::Write;
use std::path::{Path, PathBuf};

use deltascope::{Error, Result};
use tempfile::NamedTempFile;

/// Output files staged next to their destinations and renamed into place
/// together. Dropping an uncommitted batch deletes the staged files.
#[derive(Default)]
pub struct Outputs {
    staged: Vec<(NamedTempFile, PathBuf)>,
}

impl Outputs {
    pub fn stage(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let io = |e| Error::Io { path: path.to_path_buf(), source: e };
        let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        self.staged.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Renames every staged file into place. If one rename fails, the files
    /// already moved are removed again.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::with_capacity(self.staged.len());
        let mut pending = self.staged.into_iter();
        for (tmp, path) in pending.by_ref() {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(Error::Io { path, source: e.error });
            }
            done.push(path);
        }
        Ok(done)
    }
}
