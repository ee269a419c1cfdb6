//! Capacity CSV ingestion and the plot-ready CSV outputs.

use std::fs::File;
use std::path::{Path, PathBuf};

use capforge_core::data::CapacitySeries;
use capforge_core::training::EpochLoss;

use crate::error::{Error, Result};

pub const HEADER: [&str; 2] = ["cycle", "capacity_ah"];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile { path: path.into() },
        _ => Error::io(path, e),
    })
}

/// Reads one battery's `cycle,capacity_ah` file. The file stem is the id.
pub fn load_capacity_csv(path: impl AsRef<Path>) -> Result<CapacitySeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(open(path)?);
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Parse { path: path.into(), line: 0, message: "file name is not valid UTF-8".into() })?
        .to_string();

    let parse_err = |line: u64, message: String| Error::Parse { path: path.into(), line, message };
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    let found: Vec<&str> = header.iter().collect();
    // a UTF-8 byte order mark is tolerated
    let first = found.first().map(|f| f.trim_start_matches('\u{feff}'));
    if found.len() != 2 || first != Some(HEADER[0]) || found[1] != HEADER[1] {
        return Err(Error::Header { path: path.into(), line: 1, found: found.join(",") });
    }

    let mut cycles = Vec::new();
    let mut capacities = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let cycle: u32 = record[0]
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| parse_err(line, format!("cycle `{}` is not a positive integer", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(line, format!("capacity `{}` is not a finite number", &record[1])))?;
        if let Some(&previous) = cycles.last() {
            if cycle <= previous {
                return Err(Error::NonMonotone { path: path.into(), line, previous, cycle });
            }
        }
        if value <= 0.0 {
            return Err(Error::NonPositive { path: path.into(), line, value });
        }
        cycles.push(cycle);
        capacities.push(value);
    }
    if cycles.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    Ok(CapacitySeries::new(id, cycles, capacities)?)
}

/// Every `*.csv` in `dir`, sorted by file name.
pub fn data_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile { path: dir.into() },
        _ => Error::io(dir, e),
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::NoBatteryFiles { dir: dir.into() });
    }
    files.sort();
    Ok(files)
}

pub fn load_data_dir(dir: impl AsRef<Path>) -> Result<Vec<CapacitySeries>> {
    data_files(dir)?.iter().map(load_capacity_csv).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.into(), line: 0, message: format!("{other:?}") },
    }
}

/// Writes a header and rows, flushing at the end.
pub fn write_rows<R, I>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `cycle,actual_ah,predicted_ah`, one row per test window.
pub fn write_predictions(path: impl AsRef<Path>, cycles: &[u32], actual: &[f64], predicted: &[f64]) -> Result<()> {
    let rows = cycles
        .iter()
        .zip(actual)
        .zip(predicted)
        .map(|((c, a), p)| [c.to_string(), a.to_string(), p.to_string()]);
    write_rows(path, &["cycle", "actual_ah", "predicted_ah"], rows)
}

/// `epoch,train_loss,test_loss`; the test column is empty when absent.
pub fn write_loss_trace(path: impl AsRef<Path>, trace: &[EpochLoss]) -> Result<()> {
    let rows = trace.iter().map(|e| {
        [
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.test_loss.map(|t| t.to_string()).unwrap_or_default(),
        ]
    });
    write_rows(path, &["epoch", "train_loss", "test_loss"], rows)
}

/// Epoch-wise mean over several traces of equal length.
pub fn mean_trace(traces: &[Vec<EpochLoss>]) -> Vec<EpochLoss> {
    let Some(first) = traces.first() else { return Vec::new() };
    let n = traces.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(i, e)| EpochLoss {
            epoch: e.epoch,
            train_loss: traces.iter().map(|t| t[i].train_loss).sum::<f64>() / n,
            test_loss: e.test_loss.map(|_| traces.iter().filter_map(|t| t[i].test_loss).sum::<f64>() / n),
        })
        .collect()
}
