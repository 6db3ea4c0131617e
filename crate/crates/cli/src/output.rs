//! Result files. Everything is written next to its final name with a
//! `.partial` suffix and renamed only once the whole command succeeded.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

impl Staged {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn bytes(&mut self, path: &Path, contents: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let tmp = partial_path(path);
        std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.bytes(path, text.as_bytes())
    }

    pub fn csv<T: Serialize>(&mut self, path: &Path, rows: &[T]) -> Result<(), CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in rows {
            writer.serialize(row)?;
        }
        let data = writer.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
        self.bytes(path, &data)
    }

    /// Moves every staged file to its final name.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::with_capacity(self.files.len());
        for (tmp, path) in self.files {
            std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
            done.push(path);
        }
        Ok(done)
    }
}
