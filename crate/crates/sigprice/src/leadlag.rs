//! Discrete price paths and their lead-lag transform.
//!
//! A [`PricePath`] is a positive price series sampled on a strictly
//! increasing timeline over [0, 1], normalized to start at 1. The lead-lag
//! transform embeds it as a piecewise-linear path in R^3 whose components
//! are (time, lag price, lead price): within each sampling step the lead
//! component jumps to the next price first, then time and the lag price
//! catch up. The area between lead and lag is what makes quadratic
//! variation visible to the signature.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A discrete price path: samples `X_{t_0}, ..., X_{t_n}` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl PricePath {
    /// Validates and wraps a sampled path.
    ///
    /// Requirements: equal lengths; `t_0 = 0`, `t_n = 1`, times strictly
    /// increasing and finite; all values positive and finite; `X_{t_0} = 1`.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidPath(format!(
                "times ({}) and values ({}) differ in length",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath(
                "a price path needs at least 2 samples".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath(format!(
                "timeline must start at 0, got {}",
                times[0]
            )));
        }
        if *times.last().unwrap() != 1.0 {
            return Err(Error::InvalidPath(format!(
                "timeline must end at 1, got {}",
                times.last().unwrap()
            )));
        }
        for pair in times.windows(2) {
            if !(pair[1] > pair[0]) || !pair[1].is_finite() {
                return Err(Error::InvalidPath(format!(
                    "times must be strictly increasing and finite, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if values[0] != 1.0 {
            return Err(Error::InvalidPath(format!(
                "initial price must be normalized to 1, got {}",
                values[0]
            )));
        }
        for &v in &values {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidPath(format!(
                    "prices must be positive and finite, got {v}"
                )));
            }
        }
        Ok(PricePath { times, values })
    }

    /// Wraps values sampled on the uniform timeline `t_i = i / n`.
    pub fn from_uniform(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidPath(
                "a price path needs at least 2 samples".into(),
            ));
        }
        let n = values.len() - 1;
        let mut times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        // Guard against rounding at the endpoint.
        times[n] = 1.0;
        PricePath::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of samples, `n + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least 2 samples
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn running_max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Realized quadratic variation: sum of squared increments.
    pub fn quadratic_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }

    /// Reads a single path from CSV with header `t,x`.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        {
            let headers = rdr.headers()?;
            if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "x" {
                return Err(Error::InvalidPath(format!(
                    "expected CSV header \"t,x\", got \"{}\"",
                    headers.iter().collect::<Vec<_>>().join(",")
                )));
            }
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let t: f64 = record
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidPath(format!("bad time field in row {record:?}")))?;
            let x: f64 = record
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidPath(format!("bad price field in row {record:?}")))?;
            times.push(t);
            values.push(x);
        }
        PricePath::new(times, values)
    }

    /// Writes this path as CSV with header `t,x`.
    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t", "x"])?;
        for (t, x) in self.times.iter().zip(&self.values) {
            wtr.write_record([format_float(*t), format_float(*x)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest decimal representation that round-trips through f64.
fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// One line of the JSONL batch format.
#[derive(Serialize, Deserialize)]
struct BatchLine {
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Reads a batch of paths: one JSON object `{times, values}` per line.
pub fn read_path_batch(reader: impl BufRead) -> Result<Vec<PricePath>> {
    let mut paths = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: BatchLine = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidPath(format!("batch line {}: {e}", i + 1)))?;
        paths.push(PricePath::new(parsed.times, parsed.values)?);
    }
    Ok(paths)
}

/// Writes a batch of paths in the JSONL format.
pub fn write_path_batch(mut writer: impl Write, paths: &[PricePath]) -> Result<()> {
    for p in paths {
        let line = serde_json::to_string(&BatchLine {
            times: p.times.clone(),
            values: p.values.clone(),
        })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// The lead-lag embedding of a price path: a piecewise-linear path in R^3
/// with vertex components (time, lag price, lead price), parameterized
/// uniformly in vertex index (vertex j at parameter j / 2n).
#[derive(Debug, Clone, PartialEq)]
pub struct LeadLagPath {
    vertices: Vec<[f64; 3]>,
}

impl LeadLagPath {
    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    /// Parameter of vertex `j` in the uniform parameterization.
    pub fn parameter(&self, j: usize) -> f64 {
        j as f64 / (self.vertices.len() - 1) as f64
    }

    /// The (time, lag price) components of vertices `0..=upto`.
    pub fn project_lag(&self, upto: usize) -> Result<Vec<[f64; 2]>> {
        if upto >= self.vertices.len() {
            return Err(Error::IndexOutOfRange {
                index: upto,
                len: self.vertices.len(),
            });
        }
        Ok(self.vertices[..=upto].iter().map(|v| [v[0], v[1]]).collect())
    }

    /// The (time, lead price) components of vertices `0..=upto`.
    pub fn project_lead(&self, upto: usize) -> Result<Vec<[f64; 2]>> {
        if upto >= self.vertices.len() {
            return Err(Error::IndexOutOfRange {
                index: upto,
                len: self.vertices.len(),
            });
        }
        Ok(self.vertices[..=upto].iter().map(|v| [v[0], v[2]]).collect())
    }
}

/// Builds the lead-lag path of `p`.
///
/// For samples `X_{t_0}, ..., X_{t_n}` the result has `2n + 1` vertices:
/// even vertex `2k` is `(t_k, X_{t_k}, X_{t_k})` and odd vertex `2k + 1`
/// is `(t_k, X_{t_k}, X_{t_{k+1}})`, so within each step the lead price
/// moves to the next sample before time and the lag price follow.
pub fn lead_lag(p: &PricePath) -> Result<LeadLagPath> {
    let n = p.len() - 1;
    if p.len() < 2 {
        return Err(Error::InvalidPath(
            "lead-lag transform needs at least 2 samples".into(),
        ));
    }
    let times = p.times();
    let values = p.values();
    let mut vertices = Vec::with_capacity(2 * n + 1);
    for k in 0..n {
        vertices.push([times[k], values[k], values[k]]);
        vertices.push([times[k], values[k], values[k + 1]]);
    }
    vertices.push([times[n], values[n], values[n]]);
    Ok(LeadLagPath { vertices })
}
