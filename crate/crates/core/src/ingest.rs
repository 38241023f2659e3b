//! Wide-format load CSV ingestion and seasonal stream replay.
//!
//! Input files have a header row, one ISO-8601 UTC timestamp column and one
//! numeric column per series. Selection is by explicit column list. After
//! the missing policy is applied the table must be regularly spaced; the
//! step is inferred from the first gap and enforced globally.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{Covariate, LagModel, SeasonalVarxSpec, StreamPoint};

/// What to do with a missing or non-finite cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Stop at the first missing value.
    Fail,
    /// Drop the whole row. Dropped interior rows surface later as spacing
    /// errors; the policy is intended for ragged file edges.
    DropRow,
    /// Copy the previous row's value for that column. The first row must be
    /// complete.
    ForwardFill,
}

impl MissingPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fail" => Ok(MissingPolicy::Fail),
            "drop_row" => Ok(MissingPolicy::DropRow),
            "forward_fill" => Ok(MissingPolicy::ForwardFill),
            other => Err(Error::InvalidParameter {
                name: "missing policy",
                reason: format!("unknown policy {other:?}"),
            }),
        }
    }
}

/// One logged missing-policy action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyEvent {
    /// 0-based data row in the source file.
    pub row: usize,
    pub column: String,
    pub action: &'static str,
}

impl fmt::Display for PolicyEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at data row {}, column {}",
            self.action, self.row, self.column
        )
    }
}

/// A validated, regularly spaced multivariate load table.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadTable {
    pub timestamp_name: String,
    pub timestamps: Vec<DateTime<Utc>>,
    pub series_names: Vec<String>,
    /// One K-vector per row.
    pub values: Vec<DVector<f64>>,
    pub step_seconds: i64,
    pub policy_events: Vec<PolicyEvent>,
}

fn parse_timestamp(raw: &str, row: usize) -> Result<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(Utc.from_utc_datetime(&naive));
        }
    }
    Err(Error::BadTimestamp {
        row,
        value: raw.to_string(),
    })
}

/// Parses the named columns out of a wide CSV, applies the missing policy,
/// infers the step from the first two rows and validates it globally.
/// Spacing errors name the 0-based data row where the step breaks.
pub fn parse_wide_csv(
    path: &Path,
    timestamp_column: &str,
    selected_columns: &[String],
    policy: MissingPolicy,
) -> Result<LoadTable> {
    if selected_columns.is_empty() {
        return Err(Error::EmptyInput {
            what: "selected columns",
        });
    }
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn {
                column: name.to_string(),
            })
    };
    let ts_idx = col_index(timestamp_column)?;
    let value_idx: Vec<usize> = selected_columns
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;

    let k = selected_columns.len();
    let mut timestamps = Vec::new();
    let mut original_rows = Vec::new();
    let mut values: Vec<DVector<f64>> = Vec::new();
    let mut policy_events = Vec::new();

    'rows: for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts, row)?;
        let mut row_values = DVector::zeros(k);
        for (slot, (&idx, name)) in value_idx.iter().zip(selected_columns).enumerate() {
            let cell = record.get(idx).unwrap_or("").trim();
            let parsed = if cell.is_empty() {
                None
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    Ok(_) => None,
                    Err(_) => {
                        return Err(Error::BadNumber {
                            row,
                            column: name.clone(),
                            value: cell.to_string(),
                        })
                    }
                }
            };
            match parsed {
                Some(v) => row_values[slot] = v,
                None => match policy {
                    MissingPolicy::Fail => {
                        return Err(Error::MissingValue {
                            row,
                            column: name.clone(),
                        })
                    }
                    MissingPolicy::DropRow => {
                        policy_events.push(PolicyEvent {
                            row,
                            column: name.clone(),
                            action: "dropped row",
                        });
                        continue 'rows;
                    }
                    MissingPolicy::ForwardFill => {
                        let prev = values.last().ok_or_else(|| Error::MissingValue {
                            row,
                            column: name.clone(),
                        })?;
                        row_values[slot] = prev[slot];
                        policy_events.push(PolicyEvent {
                            row,
                            column: name.clone(),
                            action: "forward-filled",
                        });
                    }
                },
            }
        }
        timestamps.push(ts);
        original_rows.push(row);
        values.push(row_values);
    }

    if timestamps.len() < 2 {
        return Err(Error::InsufficientData {
            what: "data rows",
            needed: 2,
            actual: timestamps.len(),
        });
    }
    let step_seconds = (timestamps[1] - timestamps[0]).num_seconds();
    if step_seconds <= 0 {
        return Err(Error::IrregularSpacing {
            row: original_rows[1],
            expected_seconds: 1,
            actual_seconds: step_seconds,
        });
    }
    for i in 1..timestamps.len() {
        let actual = (timestamps[i] - timestamps[i - 1]).num_seconds();
        if actual != step_seconds {
            return Err(Error::IrregularSpacing {
                row: original_rows[i],
                expected_seconds: step_seconds,
                actual_seconds: actual,
            });
        }
    }

    Ok(LoadTable {
        timestamp_name: timestamp_column.to_string(),
        timestamps,
        series_names: selected_columns.to_vec(),
        values,
        step_seconds,
        policy_events,
    })
}

impl LoadTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn series_count(&self) -> usize {
        self.series_names.len()
    }

    /// Row as a stream point; `t` is the row index.
    pub fn point(&self, row: usize) -> StreamPoint {
        StreamPoint {
            t: row,
            y: self.values[row].clone(),
            v: None,
        }
    }

    /// Serializes back to the wide CSV layout with full-precision decimals.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = self.timestamp_name.clone();
        for name in &self.series_names {
            header.push(',');
            header.push_str(name);
        }
        writeln!(w, "{header}")?;
        for (ts, row) in self.timestamps.iter().zip(&self.values) {
            let mut line = ts.to_rfc3339_opts(SecondsFormat::Secs, true);
            for v in row.iter() {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Builds a table from simulated points, for synthetic replay runs.
    pub fn from_stream(
        points: &[StreamPoint],
        series_names: Vec<String>,
        start: DateTime<Utc>,
        step_seconds: i64,
    ) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput {
            what: "stream points",
        })?;
        if series_names.len() != first.y.len() {
            return Err(Error::Dimension {
                what: "series names",
                expected: first.y.len(),
                actual: series_names.len(),
            });
        }
        Ok(Self {
            timestamp_name: "utc_timestamp".into(),
            timestamps: (0..points.len())
                .map(|i| start + chrono::Duration::seconds(step_seconds * i as i64))
                .collect(),
            series_names,
            values: points.iter().map(|p| p.y.clone()).collect(),
            step_seconds,
            policy_events: Vec::new(),
        })
    }

    /// Replays the table as a stream of `(point, covariate)` pairs under the
    /// seasonal lag structure, starting strictly past the warm-up horizon.
    /// The internal buffer never exceeds the maximum lag window.
    pub fn replay<'a>(&'a self, spec: &'a SeasonalVarxSpec) -> Result<Replay<'a>> {
        if spec.k != self.series_count() {
            return Err(Error::Dimension {
                what: "replay spec",
                expected: self.series_count(),
                actual: spec.k,
            });
        }
        let warm_up = spec.max_lag() + 1;
        if self.len() < warm_up + 1 {
            return Err(Error::InsufficientData {
                what: "table rows past the warm-up horizon",
                needed: warm_up + 1,
                actual: self.len(),
            });
        }
        Ok(Replay {
            table: self,
            spec,
            buffer: VecDeque::with_capacity(spec.max_lag()),
            filled_through: 0,
            next_t: warm_up,
        })
    }
}

/// Iterator over `(point, covariate)` pairs of a table replay.
pub struct Replay<'a> {
    table: &'a LoadTable,
    spec: &'a SeasonalVarxSpec,
    buffer: VecDeque<StreamPoint>,
    filled_through: usize,
    next_t: usize,
}

impl Replay<'_> {
    /// Rows currently buffered; bounded by the maximum lag.
    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }
}

impl Iterator for Replay<'_> {
    type Item = (StreamPoint, Covariate);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_t >= self.table.len() {
            return None;
        }
        let max_lag = self.spec.max_lag();
        while self.filled_through < self.next_t {
            self.buffer.push_back(self.table.point(self.filled_through));
            if self.buffer.len() > max_lag {
                self.buffer.pop_front();
            }
            self.filled_through += 1;
        }
        let window = self.buffer.make_contiguous();
        let covariate = self
            .spec
            .embed(window)
            .expect("buffer holds the full lag window");
        let point = self.table.point(self.next_t);
        self.next_t += 1;
        Some((point, covariate))
    }
}
