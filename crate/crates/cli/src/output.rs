//! CSV tables and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use deep_euler::dataset::format_f64;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Text form of a float cell: 17 significant digits, `NaN` for failed cells.
pub fn cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format_f64(v)
    }
}

pub fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, cell)
}

/// Rows of text cells under a header.
#[derive(Debug, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_writer<W: Write>(&self, w: W) -> CliResult<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush().map_err(CliError::io("<csv>"))?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let file = fs::File::create(path).map_err(CliError::io(path))?;
        self.to_writer(std::io::BufWriter::new(file))
    }
}

/// Everything needed to rerun a command, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub details: T,
    pub outputs: Vec<String>,
}

impl<T: Serialize> RunManifest<T> {
    pub fn new(command: &'static str, details: T) -> Self {
        Self {
            tool: "dem",
            version: TOOL_VERSION,
            command,
            details,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(CliError::io(path))
    }
}

/// Output directory that remembers the file names written into it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Path of `name` inside the directory, recorded as an output.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn finish<T: Serialize>(mut self, mut manifest: RunManifest<T>) -> CliResult<()> {
        let path = self.file("manifest.json");
        manifest.outputs = self.written;
        manifest.write(&path)
    }
}
