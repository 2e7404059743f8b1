//! Metrics and results files.
//!
//! CSV with a schema-versioned comment preamble:
//!
//! ```text
//! # segpace-metrics v1
//! # stage = vspp
//! # config_hash = <hex>
//! # config_b64 = <base64 of the resolved config TOML>
//! epoch,total_loss,...
//! 0,2.77,...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! is bit-reproducible for bit-equal runs and trivially diffable.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

use super::CliError;

pub const METRICS_SCHEMA: &str = "segpace-metrics v1";
pub const RESULTS_SCHEMA: &str = "segpace-results v1";

pub struct MetricsWriter {
    file: std::fs::File,
    pub path: PathBuf,
    columns: usize,
}

impl MetricsWriter {
    pub fn create(
        path: &Path,
        schema: &str,
        stage: &str,
        config_hash: &str,
        config_toml: &str,
        header: &[&str],
    ) -> Result<Self, CliError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# {schema}")?;
        writeln!(file, "# stage = {stage}")?;
        writeln!(file, "# config_hash = {config_hash}")?;
        writeln!(file, "# config_b64 = {}", BASE64.encode(config_toml))?;
        writeln!(file, "{}", header.join(","))?;
        Ok(Self { file, path: path.to_path_buf(), columns: header.len() })
    }

    pub fn write_row(&mut self, values: &[MetricValue]) -> Result<(), CliError> {
        assert_eq!(values.len(), self.columns, "row width must match header");
        let mut line = String::new();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            match v {
                MetricValue::Int(x) => write!(line, "{x}").unwrap(),
                MetricValue::Float(x) => write!(line, "{x}").unwrap(),
                MetricValue::Text(s) => {
                    assert!(!s.contains(','), "text cells must be comma-free");
                    line.push_str(s);
                }
            }
        }
        writeln!(self.file, "{line}")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), CliError> {
        self.file.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum MetricValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for MetricValue {
    fn from(v: usize) -> Self {
        MetricValue::Int(v as i64)
    }
}
impl From<u64> for MetricValue {
    fn from(v: u64) -> Self {
        MetricValue::Int(v as i64)
    }
}
impl From<f32> for MetricValue {
    fn from(v: f32) -> Self {
        MetricValue::Float(v as f64)
    }
}
impl From<f64> for MetricValue {
    fn from(v: f64) -> Self {
        MetricValue::Float(v)
    }
}
impl From<&str> for MetricValue {
    fn from(v: &str) -> Self {
        MetricValue::Text(v.to_string())
    }
}

/// A parsed metrics (or results) file.
#[derive(Debug, Clone)]
pub struct MetricsFile {
    pub schema: String,
    pub stage: String,
    pub config_hash: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub path: PathBuf,
}

impl MetricsFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let mut schema = String::new();
        let mut stage = String::new();
        let mut config_hash = String::new();
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for line in text.lines() {
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some((key, value)) = comment.split_once('=') {
                    match key.trim() {
                        "stage" => stage = value.trim().to_string(),
                        "config_hash" => config_hash = value.trim().to_string(),
                        _ => {}
                    }
                } else if schema.is_empty() {
                    schema = comment.to_string();
                }
            } else if header.is_none() {
                header = Some(line.split(',').map(str::to_string).collect());
            } else if !line.trim().is_empty() {
                rows.push(line.split(',').map(str::to_string).collect());
            }
        }
        let header = header
            .ok_or_else(|| CliError::SchemaMismatch(format!("{} has no header", path.display())))?;
        if schema.is_empty() {
            return Err(CliError::SchemaMismatch(format!(
                "{} lacks a schema line",
                path.display()
            )));
        }
        Ok(Self { schema, stage, config_hash, header, rows, path: path.to_path_buf() })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        let mut out = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            out.push(row.get(idx)?.parse().ok()?);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(
            &path,
            METRICS_SCHEMA,
            "vspp",
            "cafe01",
            "seed = 7",
            &["epoch", "loss"],
        )
        .unwrap();
        w.write_row(&[1usize.into(), 0.5f32.into()]).unwrap();
        w.write_row(&[2usize.into(), 0.25f32.into()]).unwrap();
        w.flush().unwrap();
        let file = MetricsFile::read(&path).unwrap();
        assert_eq!(file.schema, METRICS_SCHEMA);
        assert_eq!(file.stage, "vspp");
        assert_eq!(file.config_hash, "cafe01");
        assert_eq!(file.header, vec!["epoch", "loss"]);
        assert_eq!(file.column("loss").unwrap(), vec![0.5, 0.25]);
    }

    #[test]
    fn float_formatting_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&path, METRICS_SCHEMA, "aux", "h", "c", &["v"]).unwrap();
        let tricky = [0.1f32, 1e-7, 3.333_333_3, f32::MAX / 2.0];
        for v in tricky {
            w.write_row(&[v.into()]).unwrap();
        }
        w.flush().unwrap();
        let file = MetricsFile::read(&path).unwrap();
        for (back, orig) in file.column("v").unwrap().iter().zip(tricky) {
            assert_eq!(*back as f32, orig);
        }
    }

    #[test]
    fn missing_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(MetricsFile::read(&path), Err(CliError::SchemaMismatch(_))));
    }
}
