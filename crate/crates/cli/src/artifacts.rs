use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Files written by one command. Unless `keep` is called, dropping the set
/// removes them, along with the output directory if this run created it.
pub struct Artifacts {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    kept: bool,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, files: Vec::new(), kept: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name` in the output directory and hands a buffered writer to `fill`.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.path(name);
        self.files.push(path.clone());
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn keep(mut self) -> Vec<PathBuf> {
        self.kept = true;
        std::mem::take(&mut self.files)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if self.kept {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_artifacts_are_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        {
            let mut a = Artifacts::new(&dir).unwrap();
            a.write("x.txt", |w| Ok(writeln!(w, "x")?)).unwrap();
            assert!(dir.join("x.txt").exists());
        }
        assert!(!dir.exists());
    }

    #[test]
    fn kept_artifacts_stay() {
        let tmp = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(tmp.path()).unwrap();
        a.write("y.txt", |w| Ok(writeln!(w, "y")?)).unwrap();
        let files = a.keep();
        assert!(files[0].exists());
    }
}
