//! CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ifd_core::{PeriodicScalar, SpaceTimeField};

use crate::error::{CliError, Staged};

/// Collects artifact names in the order they were written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(format!("creating {}", root.display()), e))?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.root.join(name);
        let f = File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    /// `x,t,value` rows of a space-time field.
    pub fn field(&mut self, name: &str, f: &SpaceTimeField) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        f.write_csv(&mut w).stage("write")?;
        w.flush().map_err(|e| CliError::io(name, e))
    }

    /// Rows of already formatted cells under `header`.
    pub fn table<I>(&mut self, name: &str, header: &str, rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = self.open(name)?;
        let io = |e| CliError::io(name.to_string(), e);
        writeln!(w, "{header}").map_err(io)?;
        for row in rows {
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// `t,<columns...>` for time-only series sharing a grid.
    pub fn series(&mut self, name: &str, columns: &[(&str, &PeriodicScalar)]) -> Result<(), CliError> {
        let grid = *columns[0].1.grid();
        let header = std::iter::once("t")
            .chain(columns.iter().map(|c| c.0))
            .collect::<Vec<_>>()
            .join(",");
        let rows = (0..grid.nt()).map(|j| {
            std::iter::once(num(grid.t(j)))
                .chain(columns.iter().map(|c| num(c.1.get(j))))
                .collect()
        });
        self.table(name, &header, rows)
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        let io = |e: std::io::Error| CliError::io(name.to_string(), e);
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
        writeln!(w).map_err(io)?;
        w.flush().map_err(io)
    }
}

/// Round-trippable float formatting shared by every CSV.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}
