//! CSV report tables: fixed headers, writing, and schema validation.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use nslab::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Col {
    Text,
    Int,
    Num,
}

#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, Col)],
}

use Col::*;

pub const AVENONSMOOTH: Schema = Schema {
    name: "avenonsmooth.csv",
    columns: &[("setup", Text), ("realization", Text), ("video", Int), ("value", Num)],
};
pub const EVENTS: Schema = Schema {
    name: "nonsmooth_events.csv",
    columns: &[("setup", Text), ("realization", Text), ("video", Int), ("events", Int)],
};
pub const AVENONSMOOTH_HIST: Schema = Schema {
    name: "avenonsmooth_hist.csv",
    columns: &[("setup", Text), ("bin_lo", Num), ("bin_hi", Num), ("count", Int)],
};
pub const SMP_PAIRS: Schema = Schema {
    name: "smp_pairs.csv",
    columns: &[
        ("realization", Int),
        ("video", Int),
        ("pair", Text),
        ("boundary", Int),
        ("node_c", Int),
        ("node_r", Int),
        ("node_col", Int),
        ("x", Num),
        ("y", Num),
    ],
};
pub const R2_SUMMARY: Schema = Schema {
    name: "r2_summary.csv",
    columns: &[("layer", Text), ("mode", Text), ("slope", Num), ("intercept", Num), ("r2", Num), ("reference_r2", Text)],
};
pub const WASSERSTEIN: Schema = Schema {
    name: "wasserstein.csv",
    columns: &[
        ("realization", Text),
        ("predicted_samples", Int),
        ("real_samples", Int),
        ("w1", Num),
        ("real_mean", Num),
        ("ratio", Num),
    ],
};
pub const PEARSON: Schema = Schema {
    name: "pearson.csv",
    columns: &[("realization", Text), ("pairs", Int), ("pearson", Num), ("reference", Text)],
};
pub const SMP_HIST: Schema = Schema {
    name: "smp_hist.csv",
    columns: &[("bin_lo", Num), ("bin_hi", Num), ("predicted", Num), ("real", Num)],
};
pub const LOSS: Schema = Schema {
    name: "loss.csv",
    columns: &[("epoch", Int), ("train_loss", Num), ("val_loss", Num)],
};

/// Tables under `reports/` that a complete run produces.
pub const REPORT_TABLES: [Schema; 8] = [AVENONSMOOTH, EVENTS, AVENONSMOOTH_HIST, SMP_PAIRS, R2_SUMMARY, WASSERSTEIN, PEARSON, SMP_HIST];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

/// Writes a whole table at once.
pub fn write_table(path: &Path, schema: &Schema, rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(schema.columns.iter().map(|c| c.0)).map_err(|e| csv_err(path, e))?;
    for row in rows {
        debug_assert_eq!(row.len(), schema.columns.len(), "{}", schema.name);
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Checks header and every record against `schema`; returns the row count.
pub fn validate_table(path: &Path, schema: &Schema) -> Result<usize> {
    let fail = |msg: String| Error::Validation {
        file: path.to_path_buf(),
        msg,
    };
    let file = File::open(path).map_err(|_| Error::MissingInput(vec![path.to_path_buf()]))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let mut records = r.records();
    let header = records.next().ok_or_else(|| fail("empty file".into()))?.map_err(|e| fail(e.to_string()))?;
    let expected: Vec<&str> = schema.columns.iter().map(|c| c.0).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(fail(format!("header {:?}, expected {:?}", header.iter().collect::<Vec<_>>(), expected)));
    }
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let line = i + 2;
        if rec.len() != schema.columns.len() {
            return Err(fail(format!("line {line}: {} columns, expected {}", rec.len(), schema.columns.len())));
        }
        for ((name, kind), field) in schema.columns.iter().zip(rec.iter()) {
            let ok = match kind {
                Text => true,
                Int => field.parse::<u64>().is_ok(),
                Num => field.parse::<f64>().is_ok_and(|v| !v.is_nan()),
            };
            if !ok {
                return Err(fail(format!("line {line}: `{name}` = {field:?} is not a valid {kind:?}")));
            }
        }
        rows += 1;
    }
    Ok(rows)
}

/// Reads a validated table's rows as strings.
pub fn read_table(path: &Path, schema: &Schema) -> Result<Vec<Vec<String>>> {
    validate_table(path, schema)?;
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.records()
        .map(|rec| Ok(rec.map_err(|e| csv_err(path, e))?.iter().map(String::from).collect()))
        .collect()
}

pub fn missing(paths: &[PathBuf]) -> Result<()> {
    let absent: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).cloned().collect();
    if absent.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingInput(absent))
    }
}
