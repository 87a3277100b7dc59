//! Output files: atomic writes and the versioned fit document.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitResult;

pub const FIT_SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Renders through `render` into memory, then writes atomically.
pub fn write_atomic_with<F>(path: impl AsRef<Path>, render: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    render(&mut buf)?;
    write_atomic(path, &buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEntry {
    pub block: String,
    pub name: String,
    pub column: String,
    pub estimate: f64,
    /// Absent when the covariance is unavailable or the parameter is frozen.
    pub se: Option<f64>,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub parameters: Vec<ParameterEntry>,
    pub fit: FitResult,
}

impl FitDocument {
    pub fn new(fit: FitResult) -> Self {
        let se = fit.standard_errors();
        let flat = fit.flat_estimates();
        let parameters = fit
            .parameter_names()
            .into_iter()
            .enumerate()
            .map(|(i, (block, name, column))| ParameterEntry {
                block: block.name().to_string(),
                name,
                column,
                estimate: flat[i],
                se: se
                    .as_ref()
                    .filter(|_| !fit.frozen.contains(&i))
                    .map(|s| s[i]),
            })
            .collect();
        Self {
            schema_version: FIT_SCHEMA_VERSION,
            parameters,
            fit,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fit serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.schema_version != FIT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported fit schema_version {} (expected {FIT_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

pub fn save_fit(path: impl AsRef<Path>, fit: &FitResult) -> Result<()> {
    write_atomic(path, FitDocument::new(fit.clone()).to_json().as_bytes())
}

pub fn load_fit(path: impl AsRef<Path>) -> Result<FitResult> {
    let text = fs::read_to_string(path)?;
    Ok(FitDocument::from_json(&text)?.fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn failed_render_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let r = write_atomic_with(&p, |_| Err(Error::Config("boom".into())));
        assert!(r.is_err());
        assert!(!p.exists());
    }
}
