//! Hourly carbon-intensity series per region: ingestion, storage, slot math.
//!
//! A series is a gap-free list of hourly gCO₂eq/kWh values starting at an
//! hour-aligned UTC timestamp. Ingestion floors sub-hourly rows to the hour,
//! averages duplicates, and repairs short gaps by linear interpolation;
//! anything longer than the repair limit is rejected rather than fabricated.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hours elapsed since the series (or simulation) epoch.
pub type SlotIndex = u64;

/// Default timestamp column for carbon CSV files.
pub const DEFAULT_TS_COLUMN: &str = "datetime";
/// Default carbon-intensity column for carbon CSV files.
pub const DEFAULT_CI_COLUMN: &str = "carbon_intensity_avg";
/// Longest run of missing hours repaired by linear interpolation.
pub const DEFAULT_MAX_GAP_HOURS: u64 = 6;

#[derive(Debug, Error)]
pub enum CarbonError {
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
    #[error("negative carbon intensity {value} at {timestamp}")]
    NegativeIntensity {
        timestamp: DateTime<Utc>,
        value: f64,
    },
    #[error("non-finite carbon intensity at {timestamp}")]
    NonFiniteIntensity { timestamp: DateTime<Utc> },
    #[error("gap of {gap_hours} h starting at {first_missing} exceeds the {limit} h repair limit")]
    GapTooLarge {
        first_missing: DateTime<Utc>,
        gap_hours: u64,
        limit: u64,
    },
    #[error("{path}: no data rows")]
    NoRows { path: PathBuf },
    #[error("region code must be non-empty")]
    EmptyRegionCode,
    #[error("series start {start} is not aligned to an hour boundary")]
    UnalignedStart { start: DateTime<Utc> },
    #[error("series must contain at least one value")]
    EmptySeries,
    #[error("slice [{from}, {from}+{len}) out of range for series of {have} slots")]
    SliceOutOfRange { from: u64, len: u64, have: u64 },
    #[error("timestamp {t} precedes epoch {epoch}")]
    BeforeEpoch {
        t: DateTime<Utc>,
        epoch: DateTime<Utc>,
    },
    #[error("dataset {dir}: no region series found")]
    EmptyDataset { dir: PathBuf },
    #[error("region {region}: series starts at {start}, but the dataset epoch is {epoch}")]
    MisalignedSeries {
        region: RegionId,
        start: DateTime<Utc>,
        epoch: DateTime<Utc>,
    },
}

/// Identifier of a grid region, e.g. an Electricity Maps zone code like
/// `US-TEX-ERCO` or `IT-NO`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(String);

impl RegionId {
    pub fn new(code: impl Into<String>) -> Result<Self, CarbonError> {
        let code = code.into();
        if code.is_empty() {
            return Err(CarbonError::EmptyRegionCode);
        }
        Ok(RegionId(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Gap-free hourly carbon-intensity values for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensitySeries {
    pub region: RegionId,
    /// UTC timestamp of slot 0, aligned to :00 minutes.
    pub start: DateTime<Utc>,
    /// One gCO₂eq/kWh value per hour, all finite and non-negative.
    pub values: Vec<f64>,
}

impl CarbonIntensitySeries {
    pub fn new(
        region: RegionId,
        start: DateTime<Utc>,
        values: Vec<f64>,
    ) -> Result<Self, CarbonError> {
        if start.timestamp() % 3600 != 0 {
            return Err(CarbonError::UnalignedStart { start });
        }
        if values.is_empty() {
            return Err(CarbonError::EmptySeries);
        }
        for (i, v) in values.iter().enumerate() {
            let timestamp = start + chrono::Duration::hours(i as i64);
            if !v.is_finite() {
                return Err(CarbonError::NonFiniteIntensity { timestamp });
            }
            if *v < 0.0 {
                return Err(CarbonError::NegativeIntensity {
                    timestamp,
                    value: *v,
                });
            }
        }
        Ok(CarbonIntensitySeries {
            region,
            start,
            values,
        })
    }

    pub fn len(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a slot, if covered.
    pub fn get(&self, slot: SlotIndex) -> Option<f64> {
        self.values.get(slot as usize).copied()
    }

    /// Slot index of a timestamp relative to this series' start.
    pub fn slot_of(&self, t: DateTime<Utc>) -> Result<SlotIndex, CarbonError> {
        to_slot(self.start, t)
    }

    /// Timestamp of a slot (may lie past the covered range).
    pub fn timestamp_of(&self, slot: SlotIndex) -> DateTime<Utc> {
        self.start + chrono::Duration::hours(slot as i64)
    }

    /// Exactly `len` values starting at slot `from`.
    pub fn slice(&self, from: SlotIndex, len: u64) -> Result<&[f64], CarbonError> {
        slice(self, from, len)
    }
}

/// Exactly `len` values of `series` starting at slot `from`.
pub fn slice(
    series: &CarbonIntensitySeries,
    from: SlotIndex,
    len: u64,
) -> Result<&[f64], CarbonError> {
    let have = series.len();
    let end = from
        .checked_add(len)
        .ok_or(CarbonError::SliceOutOfRange { from, len, have })?;
    if end > have {
        return Err(CarbonError::SliceOutOfRange { from, len, have });
    }
    Ok(&series.values[from as usize..end as usize])
}

/// Whole hours elapsed from `epoch` to `t`; sub-hour remainders are floored.
pub fn to_slot(epoch: DateTime<Utc>, t: DateTime<Utc>) -> Result<SlotIndex, CarbonError> {
    if t < epoch {
        return Err(CarbonError::BeforeEpoch { t, epoch });
    }
    Ok(((t - epoch).num_seconds() / 3600) as u64)
}

/// Column names and repair limit for carbon CSV ingestion.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub ts_col: String,
    pub ci_col: String,
    pub max_gap_hours: u64,
    /// Offset (hours ahead of UTC) to assume for timestamps without an
    /// explicit offset. Timestamps that carry their own offset are converted
    /// to UTC regardless.
    pub assume_offset_hours: i32,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            ts_col: DEFAULT_TS_COLUMN.to_string(),
            ci_col: DEFAULT_CI_COLUMN.to_string(),
            max_gap_hours: DEFAULT_MAX_GAP_HOURS,
            assume_offset_hours: 0,
        }
    }
}

fn parse_timestamp(s: &str, assume_offset_hours: i32) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .ok()?;
    let utc = naive.and_utc() - chrono::Duration::hours(assume_offset_hours as i64);
    Some(utc)
}

fn floor_to_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    let secs = t.timestamp();
    DateTime::from_timestamp(secs - secs.rem_euclid(3600), 0).expect("in-range timestamp")
}

/// Read a timestamped carbon-intensity CSV into a gap-free hourly series.
///
/// Rows are floored to the hour and averaged per hour (this also collapses
/// duplicate timestamps, which providers occasionally emit around DST
/// boundaries). Runs of up to `max_gap_hours` missing hours are filled by
/// linear interpolation; longer runs abort ingestion. Row order in the file
/// does not matter.
pub fn ingest_carbon_csv(
    path: &Path,
    region: &RegionId,
    opts: &IngestOptions,
) -> Result<CarbonIntensitySeries, CarbonError> {
    let file = File::open(path).map_err(|source| CarbonError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| CarbonError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let col = |name: &str| -> Result<usize, CarbonError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CarbonError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let ts_idx = col(&opts.ts_col)?;
    let ci_idx = col(&opts.ci_col)?;

    // hour -> (sum, count), ordering and dedup come for free
    let mut buckets: BTreeMap<DateTime<Utc>, (f64, u32)> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| CarbonError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ts_raw = record.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(ts_raw, opts.assume_offset_hours).ok_or_else(|| {
            CarbonError::BadField {
                path: path.to_path_buf(),
                line,
                what: "timestamp",
                value: ts_raw.to_string(),
            }
        })?;
        let ci_raw = record.get(ci_idx).unwrap_or("");
        let value: f64 = ci_raw.trim().parse().map_err(|_| CarbonError::BadField {
            path: path.to_path_buf(),
            line,
            what: "carbon intensity",
            value: ci_raw.to_string(),
        })?;
        let hour = floor_to_hour(ts);
        if !value.is_finite() {
            return Err(CarbonError::NonFiniteIntensity { timestamp: hour });
        }
        if value < 0.0 {
            return Err(CarbonError::NegativeIntensity {
                timestamp: hour,
                value,
            });
        }
        let entry = buckets.entry(hour).or_insert((0.0, 0));
        entry.0 += value;
        entry.1 += 1;
    }
    if buckets.is_empty() {
        return Err(CarbonError::NoRows {
            path: path.to_path_buf(),
        });
    }

    let start = *buckets.keys().next().unwrap();
    let mut values = Vec::with_capacity(buckets.len());
    let mut prev: Option<(DateTime<Utc>, f64)> = None;
    for (hour, (sum, count)) in &buckets {
        let mean = sum / f64::from(*count);
        if let Some((prev_hour, prev_value)) = prev {
            let gap = ((*hour - prev_hour).num_seconds() / 3600 - 1) as u64;
            if gap > opts.max_gap_hours {
                return Err(CarbonError::GapTooLarge {
                    first_missing: prev_hour + chrono::Duration::hours(1),
                    gap_hours: gap,
                    limit: opts.max_gap_hours,
                });
            }
            for k in 1..=gap {
                let frac = k as f64 / (gap + 1) as f64;
                values.push(prev_value + (mean - prev_value) * frac);
            }
        }
        values.push(mean);
        prev = Some((*hour, mean));
    }

    CarbonIntensitySeries::new(region.clone(), start, values)
}

/// Write a series in the normalized ingestion format (default columns).
///
/// Values are printed with the shortest representation that round-trips, so
/// re-ingesting the output reproduces the series bit-exactly.
pub fn write_carbon_csv<W: Write>(
    series: &CarbonIntensitySeries,
    mut w: W,
) -> Result<(), std::io::Error> {
    writeln!(w, "{},{}", DEFAULT_TS_COLUMN, DEFAULT_CI_COLUMN)?;
    for (i, v) in series.values.iter().enumerate() {
        let ts = series.start + chrono::Duration::hours(i as i64);
        writeln!(w, "{},{}", ts.format("%Y-%m-%dT%H:%M:%SZ"), v)?;
    }
    Ok(())
}

pub fn write_carbon_csv_path(
    series: &CarbonIntensitySeries,
    path: &Path,
) -> Result<(), CarbonError> {
    let mut buf = Vec::new();
    write_carbon_csv(series, &mut buf).map_err(|source| CarbonError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, buf).map_err(|source| CarbonError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// All region series of one evaluation, sharing a common epoch (slot 0).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub epoch: DateTime<Utc>,
    pub series: BTreeMap<RegionId, CarbonIntensitySeries>,
}

impl Dataset {
    /// Build from pre-loaded series; all must share the same start.
    pub fn from_series(series: Vec<CarbonIntensitySeries>) -> Result<Self, CarbonError> {
        let epoch = series
            .first()
            .map(|s| s.start)
            .ok_or(CarbonError::EmptyDataset {
                dir: PathBuf::from("<memory>"),
            })?;
        let mut map = BTreeMap::new();
        for s in series {
            if s.start != epoch {
                return Err(CarbonError::MisalignedSeries {
                    region: s.region.clone(),
                    start: s.start,
                    epoch,
                });
            }
            map.insert(s.region.clone(), s);
        }
        Ok(Dataset { epoch, series: map })
    }

    /// Load every `<REGION>.csv` in a directory (except `index.csv`) as a
    /// normalized series. Region codes come from the file stems.
    pub fn load_dir(dir: &Path) -> Result<Self, CarbonError> {
        let entries = std::fs::read_dir(dir).map_err(|source| CarbonError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|ext| ext == "csv")
                    && p.file_name().is_some_and(|n| n != "index.csv")
            })
            .collect();
        paths.sort();
        let opts = IngestOptions::default();
        let mut series = Vec::new();
        for path in paths {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let region = RegionId::new(stem)?;
            series.push(ingest_carbon_csv(&path, &region, &opts)?);
        }
        if series.is_empty() {
            return Err(CarbonError::EmptyDataset {
                dir: dir.to_path_buf(),
            });
        }
        Self::from_series(series)
    }

    pub fn regions(&self) -> Vec<RegionId> {
        self.series.keys().cloned().collect()
    }

    pub fn get(&self, region: &RegionId) -> Option<&CarbonIntensitySeries> {
        self.series.get(region)
    }
}
