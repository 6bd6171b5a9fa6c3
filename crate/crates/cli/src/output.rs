use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Output files are staged in a hidden directory and moved into place only
/// when the whole command succeeds. Dropping an uncommitted set removes the
/// staged files.
pub struct Outputs {
    dir: PathBuf,
    staging: PathBuf,
    written: Vec<String>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Outputs> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let staging = dir.join(format!(".skelforge-partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).ok();
        }
        fs::create_dir(&staging).with_context(|| format!("cannot create {}", staging.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            staging,
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.staging.join(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut out = BufWriter::new(file);
        f(&mut out)
            .and_then(|()| out.flush())
            .with_context(|| format!("cannot write {name}"))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::with_capacity(self.written.len());
        for name in &self.written {
            let to = self.dir.join(name);
            if let Err(e) = fs::rename(self.staging.join(name), &to) {
                for p in &paths {
                    fs::remove_file(p).ok();
                }
                return Err(e).with_context(|| format!("cannot move {name} into place"));
            }
            paths.push(to);
        }
        self.committed = true;
        fs::remove_dir_all(&self.staging).ok();
        Ok(paths)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            fs::remove_dir_all(&self.staging).ok();
        }
    }
}
