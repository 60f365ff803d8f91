//! Artifact files: a provenance comment line followed by the body, written
//! to a temporary file in the target directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

/// One output file, rendered in memory before anything touches the disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub body: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, body: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            body,
        }
    }
}

/// Writes `header` (one line) and `body` to `path` atomically.
pub fn write_atomic(path: &Path, header: &str, body: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(header.as_bytes())?;
    tmp.write_all(b"\n")?;
    tmp.write_all(body)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Writes every artifact under `dir` and returns the paths written.
pub fn write_all(dir: &Path, header: &str, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            write_atomic(&path, header, &a.body)?;
            Ok(path)
        })
        .collect()
}

/// Splits a written file into its provenance line and body.
pub fn split_header(contents: &[u8]) -> (&[u8], &[u8]) {
    match contents.iter().position(|&b| b == b'\n') {
        Some(i) if contents.first() == Some(&b'#') => (&contents[..i], &contents[i + 1..]),
        _ => (&[], contents),
    }
}
