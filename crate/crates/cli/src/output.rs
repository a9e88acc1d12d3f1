use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::exit::CliError;

/// An output directory that remembers what was written into it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Writes `contents` to `name` (relative, `/`-separated).
    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(
        &mut self,
        name: &str,
        value: &T,
    ) -> Result<(), CliError> {
        let text = qumode_core::io::to_json(value)?;
        self.write(name, &text)
    }

    /// Writes `manifest.json`: tool version, resolved configuration, files
    /// produced, warnings and a command-specific summary.
    pub fn finish(
        mut self,
        subcommand: &str,
        config: Value,
        warnings: &[String],
        summary: Value,
    ) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "qumode",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "config": config,
            "outputs": self.files,
            "warnings": warnings,
            "summary": summary,
        });
        self.write_json("manifest.json", &manifest)
    }
}
