//! File formats: sensor and measurement CSV inputs, summary / record / CDF
//! outputs in CSV or JSON.
//!
//! Sensors: header `id,x,y[,z],vx,vy[,vz]`, row with id 0 is the reference.
//! Measurements: header `i,tdoa_m,fdoa_mps`, one row per non-reference
//! sensor. A covariance matrix file is a plain headerless CSV of `2M` rows.
//! Every writer here round-trips through the matching reader; floats are
//! written with shortest-round-trip formatting so no precision is lost.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SensorArray, SourceState};
use crate::sim::TrialRecord;

/// Output encoding for tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidInput(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes a sensor array as `id,x,y[,z],vx,vy[,vz]`.
pub fn write_sensors_csv(path: &Path, sensors: &SensorArray) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = sensors.dim();
    let coords = ["x", "y", "z"];
    let vels = ["vx", "vy", "vz"];
    let mut header = vec!["id".to_string()];
    header.extend(coords[..n].iter().map(|s| s.to_string()));
    header.extend(vels[..n].iter().map(|s| s.to_string()));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..sensors.sensor_count() {
        let mut row = vec![i.to_string()];
        row.extend(sensors.position(i).iter().map(|x| x.to_string()));
        row.extend(sensors.velocity(i).iter().map(|x| x.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sensor array written by [`write_sensors_csv`]; rows may appear in
/// any order but ids must be `0..=M` with id 0 present.
pub fn read_sensors_csv(path: &Path) -> Result<SensorArray> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .clone();
    let n = match headers.len() {
        5 => 2,
        7 => 3,
        other => {
            return Err(parse_err(
                path,
                format!("expected 5 or 7 columns (id,x,y[,z],vx,vy[,vz]), got {other}"),
            ))
        }
    };
    let mut rows: Vec<(usize, DVector<f64>, DVector<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() != 2 * n + 1 {
            return Err(parse_err(path, format!("row has {} fields", record.len())));
        }
        let id: usize = record[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, format!("sensor id: {e}")))?;
        let mut values = Vec::with_capacity(2 * n);
        for k in 1..record.len() {
            values.push(
                record[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, format!("field {k}: {e}")))?,
            );
        }
        rows.push((
            id,
            DVector::from_row_slice(&values[..n]),
            DVector::from_row_slice(&values[n..]),
        ));
    }
    rows.sort_by_key(|(id, _, _)| *id);
    for (expect, (id, _, _)) in rows.iter().enumerate() {
        if *id != expect {
            return Err(parse_err(
                path,
                format!("sensor ids must be 0..{} without gaps", rows.len() - 1),
            ));
        }
    }
    let positions = rows.iter().map(|(_, p, _)| p.clone()).collect();
    let velocities = rows.iter().map(|(_, _, v)| v.clone()).collect();
    SensorArray::new(positions, velocities)
}

/// Writes measurements as `i,tdoa_m,fdoa_mps` (i = 1..M).
pub fn write_measurements_csv(path: &Path, tdoa: &DVector<f64>, fdoa: &DVector<f64>) -> Result<()> {
    if tdoa.len() != fdoa.len() {
        return Err(Error::InvalidInput(
            "TDOA and FDOA vectors differ in length".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,tdoa_m,fdoa_mps")?;
    for i in 0..tdoa.len() {
        writeln!(w, "{},{},{}", i + 1, tdoa[i], fdoa[i])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads measurements written by [`write_measurements_csv`].
pub fn read_measurements_csv(path: &Path) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() != 3 {
            return Err(parse_err(path, format!("row has {} fields", record.len())));
        }
        let i: usize = record[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, format!("index: {e}")))?;
        let tdoa: f64 = record[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, format!("tdoa: {e}")))?;
        let fdoa: f64 = record[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, format!("fdoa: {e}")))?;
        rows.push((i, tdoa, fdoa));
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no measurement rows"));
    }
    rows.sort_by_key(|(i, _, _)| *i);
    for (expect, (i, _, _)) in rows.iter().enumerate() {
        if *i != expect + 1 {
            return Err(parse_err(path, "measurement indices must be 1..M"));
        }
    }
    Ok((
        DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
        DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2)),
    ))
}

/// Writes a covariance matrix as headerless CSV rows.
pub fn write_covariance_csv(path: &Path, covariance: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..covariance.nrows() {
        let row: Vec<String> = (0..covariance.ncols())
            .map(|j| covariance[(i, j)].to_string())
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a square covariance matrix written by [`write_covariance_csv`].
pub fn read_covariance_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| parse_err(path, e.to_string()))?);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(parse_err(path, "covariance matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// One summary line of a scenario run: one noise cell, one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sigma2: f64,
    pub sensor_count: usize,
    pub estimator: String,
    pub rmse_pos: Option<f64>,
    pub rmse_vel: Option<f64>,
    pub crlb_pos: Option<f64>,
    pub crlb_vel: Option<f64>,
    pub failure_rate: f64,
    pub trials: usize,
}

/// Per-trial record row; wall-clock runtime is intentionally not serialized
/// so reruns with the same seed produce byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub cell: usize,
    pub sigma2: f64,
    pub sensor_count: usize,
    pub trial: usize,
    pub estimator: String,
    pub failed: bool,
    pub position_error: Option<f64>,
    pub velocity_error: Option<f64>,
    pub ml_cost: Option<f64>,
}

impl From<&TrialRecord> for RecordRow {
    fn from(r: &TrialRecord) -> Self {
        Self {
            cell: r.cell,
            sigma2: r.sigma2,
            sensor_count: r.sensor_count,
            trial: r.trial,
            estimator: r.estimator.tag().to_string(),
            failed: r.failed,
            position_error: r.position_error,
            velocity_error: r.velocity_error,
            ml_cost: r.ml_cost,
        }
    }
}

/// One point of an empirical CDF curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub estimator: String,
    pub error: f64,
    pub fraction: f64,
}

/// 95th-percentile line per estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub estimator: String,
    pub p95: f64,
}

/// Writes serializable rows as CSV with a header row.
pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| parse_err(path, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads rows written by [`write_rows_csv`].
pub fn read_rows_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| parse_err(path, e.to_string()))?);
    }
    Ok(rows)
}

/// Writes serializable rows as a pretty JSON array.
pub fn write_rows_json<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, rows)
        .map_err(|e| parse_err(path, e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_rows_json`].
pub fn read_rows_json<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader).map_err(|e| parse_err(path, e.to_string()))
}

/// Dispatches on the output format.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => write_rows_csv(path, rows),
        OutputFormat::Json => write_rows_json(path, rows),
    }
}

/// Parses `"x,y"` or `"x,y,z"` style coordinate lists.
pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let parts: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let parts = parts.map_err(|e| Error::InvalidInput(format!("bad coordinate list: {e}")))?;
    if parts.len() != 2 && parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "expected 2 or 3 coordinates, got {}",
            parts.len()
        )));
    }
    Ok(DVector::from_vec(parts))
}

/// Parses a source state from position and velocity coordinate lists.
pub fn parse_source(position: &str, velocity: &str) -> Result<SourceState> {
    let p = parse_vector(position)?;
    let v = parse_vector(velocity)?;
    if p.len() != v.len() {
        return Err(Error::InvalidInput(
            "position and velocity dimensions differ".into(),
        ));
    }
    Ok(SourceState::new(p, v))
}
