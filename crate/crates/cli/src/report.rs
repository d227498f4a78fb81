//! `report`: validates every table and writes a manifest with digests.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use nslab::{Error, Result};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::layout::Layout;
use crate::tables::{validate_table, Schema, LOSS, REPORT_TABLES};
use crate::train::runs;

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub config_sha256: String,
    pub tables: Vec<TableEntry>,
    pub manifest_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex(&Sha256::digest(cfg.canonical_text().as_bytes()))
}

pub fn report(cfg: &ExperimentConfig) -> Result<ReportSummary> {
    let layout = Layout::new(&cfg.out);
    let mut expected: Vec<(PathBuf, Schema)> = REPORT_TABLES.iter().map(|s| (layout.report(s.name), *s)).collect();
    expected.extend(runs(cfg).into_iter().map(|(s, r)| (layout.loss_csv(s, r), LOSS)));
    let absent: Vec<PathBuf> = expected.iter().map(|e| e.0.clone()).filter(|p| !p.exists()).collect();
    if !absent.is_empty() {
        return Err(Error::MissingInput(absent));
    }
    let mut tables = Vec::new();
    for (path, schema) in &expected {
        let rows = validate_table(path, schema)?;
        tables.push(TableEntry {
            path: path.strip_prefix(layout.root()).unwrap_or(path).to_path_buf(),
            rows,
            sha256: hex(&Sha256::digest(fs::read(path)?)),
        });
    }
    let config_sha256 = config_hash(cfg);
    let mut text = format!(
        "format=nslab-report\nversion=1\ntool={} {}\nconfig_sha256={config_sha256}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    );
    for t in &tables {
        let _ = writeln!(text, "table={} rows={} sha256={}", t.path.display(), t.rows, t.sha256);
    }
    fs::write(layout.manifest(), &text)?;
    Ok(ReportSummary {
        config_sha256,
        tables,
        manifest_sha256: hex(&Sha256::digest(text.as_bytes())),
    })
}
