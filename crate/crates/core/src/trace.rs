//! VM request trace ingestion.
//!
//! Traces arrive as CSV rows with allocation/deallocation timestamps and
//! resource demands. Lifetimes are ceiled to whole hourly slots; deadlines
//! are synthesized by adding the experiment's margin on top of the runtime.

use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::carbon::{to_slot, SlotIndex};
use crate::scheduler::VmRequest;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}: unparsable {what}: `{value}`")]
    BadField {
        path: PathBuf,
        line: u64,
        what: &'static str,
        value: String,
    },
    #[error("{path}: no usable rows")]
    NoRows { path: PathBuf },
}

/// Options controlling trace ingestion.
#[derive(Debug, Clone)]
pub struct TraceOptions {
    /// Slot-0 timestamp; defaults to the earliest creation time in the
    /// file, floored to the hour. Must match the carbon dataset's epoch for
    /// the slots to line up.
    pub epoch: Option<DateTime<Utc>>,
    /// Hours added past arrival + duration to form the deadline.
    pub deadline_margin_hours: u64,
    /// Keep only rows whose slot-rounded lifetime falls in this range.
    pub lifetime_hours: Option<(u64, u64)>,
    /// Latency bound assigned to every VM (traces carry none).
    pub max_latency_ms: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            epoch: None,
            deadline_margin_hours: 0,
            lifetime_hours: None,
            max_latency_ms: 1e9,
        }
    }
}

/// Result of ingesting a trace file.
#[derive(Debug, Clone)]
pub struct TraceIngest {
    /// Requests sorted by arrival (stable in file order).
    pub vms: Vec<VmRequest>,
    pub epoch: DateTime<Utc>,
    /// Rows skipped because deallocation did not come after allocation.
    pub rejected_rows: u64,
    /// Rows outside the configured lifetime range.
    pub filtered_rows: u64,
}

fn parse_ts(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .map(|n| n.and_utc())
}

fn floor_to_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    let secs = t.timestamp();
    DateTime::from_timestamp(secs - secs.rem_euclid(3600), 0).expect("in-range timestamp")
}

/// Read a trace CSV with columns `vm_id`, `created`, `deleted`, `cores`,
/// `ram_gb`.
///
/// Durations are `ceil((deleted - created) / 1h)`. Rows with
/// `deleted <= created` are rejected and logged, not fatal; unparsable
/// fields are.
pub fn ingest_traces(path: &Path, opts: &TraceOptions) -> Result<TraceIngest, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| TraceError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let col = |name: &str| -> Result<usize, TraceError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TraceError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let id_idx = col("vm_id")?;
    let created_idx = col("created")?;
    let deleted_idx = col("deleted")?;
    let cores_idx = col("cores")?;
    let ram_idx = col("ram_gb")?;

    struct Row {
        id: String,
        created: DateTime<Utc>,
        lifetime_hours: u64,
        cores: u32,
        ram_gb: f64,
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut rejected_rows = 0u64;
    for record in reader.records() {
        let record = record.map_err(|source| TraceError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &'static str, value: &str| TraceError::BadField {
            path: path.to_path_buf(),
            line,
            what,
            value: value.to_string(),
        };
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let created =
            parse_ts(get(created_idx)).ok_or_else(|| bad("timestamp", get(created_idx)))?;
        let deleted =
            parse_ts(get(deleted_idx)).ok_or_else(|| bad("timestamp", get(deleted_idx)))?;
        let cores: u32 = get(cores_idx)
            .trim()
            .parse()
            .map_err(|_| bad("core count", get(cores_idx)))?;
        let ram_gb: f64 = get(ram_idx)
            .trim()
            .parse()
            .map_err(|_| bad("RAM", get(ram_idx)))?;
        if deleted <= created {
            log::warn!(
                "{}: line {line}: rejected row for {}: deleted {deleted} <= created {created}",
                path.display(),
                get(id_idx)
            );
            rejected_rows += 1;
            continue;
        }
        let seconds = (deleted - created).num_seconds() as u64;
        let lifetime_hours = seconds.div_ceil(3600);
        rows.push(Row {
            id: get(id_idx).to_string(),
            created,
            lifetime_hours,
            cores,
            ram_gb,
        });
    }

    let epoch = match opts.epoch {
        Some(e) => floor_to_hour(e),
        None => floor_to_hour(rows.iter().map(|r| r.created).min().ok_or_else(|| {
            TraceError::NoRows {
                path: path.to_path_buf(),
            }
        })?),
    };

    let mut filtered_rows = 0u64;
    let mut vms = Vec::with_capacity(rows.len());
    for row in rows {
        if let Some((lo, hi)) = opts.lifetime_hours {
            if row.lifetime_hours < lo || row.lifetime_hours > hi {
                filtered_rows += 1;
                continue;
            }
        }
        let arrival: SlotIndex = match to_slot(epoch, row.created) {
            Ok(slot) => slot,
            Err(_) => {
                log::warn!(
                    "{}: rejected row for {}: created {} precedes the epoch {epoch}",
                    path.display(),
                    row.id,
                    row.created
                );
                rejected_rows += 1;
                continue;
            }
        };
        vms.push(VmRequest {
            id: row.id,
            min_cpu: row.cores,
            min_ram_gb: row.ram_gb,
            duration: row.lifetime_hours,
            deadline: arrival + row.lifetime_hours + opts.deadline_margin_hours,
            max_latency_ms: opts.max_latency_ms,
            arrival,
            origin: None,
        });
    }
    if vms.is_empty() {
        return Err(TraceError::NoRows {
            path: path.to_path_buf(),
        });
    }
    vms.sort_by_key(|v| v.arrival);
    Ok(TraceIngest {
        vms,
        epoch,
        rejected_rows,
        filtered_rows,
    })
}
