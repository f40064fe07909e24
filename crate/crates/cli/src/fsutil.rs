//! Write-to-temporary then rename, so readers never observe a partial output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

fn sibling(path: &Path, tag: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{tag}-{}", std::process::id()))
}

/// Produce `path` through `write`, which receives a temporary path in the same directory.
pub fn atomic_file(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = sibling(path, "tmp");
    let result = write(&tmp).and_then(|()| {
        fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
    });
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Produce directory `path` through `write`, replacing any previous directory only
/// once the new one is complete.
pub fn atomic_dir(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = sibling(path, "tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    if let Err(e) = write(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    let old = sibling(path, "old");
    if path.exists() {
        fs::rename(path, &old).with_context(|| format!("moving aside {}", path.display()))?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_writes_keep_the_previous_output() {
        let tmp = tempfile::tempdir().unwrap();
        let f = tmp.path().join("a.txt");
        atomic_file(&f, |p| Ok(fs::write(p, "one")?)).unwrap();
        assert!(atomic_file(&f, |p| {
            fs::write(p, "partial")?;
            anyhow::bail!("boom")
        })
        .is_err());
        assert_eq!(fs::read_to_string(&f).unwrap(), "one");

        let d = tmp.path().join("d");
        atomic_dir(&d, |p| Ok(fs::write(p.join("x"), "1")?)).unwrap();
        assert!(atomic_dir(&d, |_| anyhow::bail!("boom")).is_err());
        assert_eq!(fs::read_to_string(d.join("x")).unwrap(), "1");
        atomic_dir(&d, |p| Ok(fs::write(p.join("y"), "2")?)).unwrap();
        assert!(!d.join("x").exists() && d.join("y").exists());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 2);
    }
}
