use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// The only place commands write to. File names may not contain path
/// separators, so nothing lands outside the directory.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        let plain = !name.is_empty()
            && name != "."
            && name != ".."
            && !name.contains(['/', '\\'])
            && Path::new(name).file_name().is_some_and(|f| f == name);
        if !plain {
            return Err(CliError::Internal(format!("refusing to write `{name}` outside the output directory")));
        }
        Ok(self.root.join(name))
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name)?;
        fs::write(&p, bytes).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_cannot_escape() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path()).unwrap();
        for bad in ["../x", "a/b", "..", "", "/etc/passwd", "a\\b"] {
            assert!(out.path(bad).is_err(), "{bad}");
        }
        assert_eq!(out.path("trace.jsonl").unwrap(), dir.path().join("trace.jsonl"));
    }
}
