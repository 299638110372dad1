//! Deterministic JSON and CSV emission.
//!
//! Every float is rounded to 15 significant digits and then printed in its
//! shortest round-trip form, so identical runs produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value as Json;

use crate::CliError;

/// `x` rounded to 15 significant digits.
pub fn round15(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.14e}").parse().expect("formatted float parses")
}

/// JSON number for `x`, or `null` when `x` is not finite.
pub fn num(x: f64) -> Json {
    serde_json::Number::from_f64(round15(x)).map_or(Json::Null, Json::Number)
}

/// CSV cell for `x`.
pub fn cell(x: f64) -> String {
    if x.is_finite() {
        num(x).to_string()
    } else {
        "NaN".to_string()
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Output directory of one run.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json(&self, name: &str, value: &Json) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    /// Writes a comma-separated table with a header row and `\n` endings.
    pub fn write_csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(std::io::BufWriter::new(file));
        let csv_err = |e: csv::Error| io_error(&path, e.into());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| io_error(&path, e))?;
        Ok(path)
    }
}
