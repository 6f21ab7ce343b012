//! Output directory, CSV tables and the run manifest.

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::Failure;

/// Floats with 17 significant digits; integers and text as they are.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

/// Files written so far, in order.
pub struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Experiment(format!("{}: {e}", path.display()))
}

impl Out {
    pub fn create(dir: PathBuf) -> Result<Self, Failure> {
        fs::create_dir_all(&dir)
            .map_err(|e| Failure::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Out {
            dir,
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_failure(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable output");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<(), Failure> {
        self.write(name, &table.to_bytes())
    }

    /// Writes `manifest.json` listing every file with its SHA-256.
    pub fn manifest(
        &self,
        kind: &str,
        workers: usize,
        elapsed: Duration,
        status: &str,
    ) -> Result<(), Failure> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let path = self.dir.join(name);
            let bytes = fs::read(&path).map_err(|e| io_failure(&path, e))?;
            files.push(json!({
                "path": name,
                "bytes": bytes.len(),
                "sha256": hex::encode(Sha256::digest(&bytes)),
            }));
        }
        let manifest = json!({
            "tool": "rhm",
            "version": env!("CARGO_PKG_VERSION"),
            "kind": kind,
            "status": status,
            "workers": workers,
            "elapsed_seconds": elapsed.as_secs_f64(),
            "files": files,
        });
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_failure(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s
                .split('e')
                .next()
                .unwrap()
                .trim_start_matches('-')
                .replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
        assert_eq!(float(f64::NAN), "NaN");
    }

    #[test]
    fn tables_quote_when_needed() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x, y".into()]);
        assert_eq!(
            String::from_utf8(t.to_bytes()).unwrap(),
            "a,b\n1,\"x, y\"\n"
        );
    }
}
