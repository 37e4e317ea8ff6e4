//! Host power models: utilization → watts curves in the SPECpower table
//! format (watts at 0%, 10%, …, 100% load), interpolated linearly.

use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("power model {name}: needs at least two points")]
    TooFewPoints { name: String },
    #[error("power model {name}: utilizations must start at 0, end at 1, and strictly increase")]
    BadUtilizationGrid { name: String },
    #[error("power model {name}: power must be finite, non-negative, and non-decreasing")]
    BadPowerValues { name: String },
    #[error("utilization {0} outside [0, 1]")]
    UtilizationOutOfRange(f64),
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
    #[error("{path}: line {line}: unparsable field `{value}`")]
    BadField {
        path: PathBuf,
        line: u64,
        value: String,
    },
}

/// Piecewise-linear utilization→watts curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    pub name: String,
    /// (utilization fraction, watts), utilizations strictly increasing from
    /// 0 to 1, watts non-decreasing.
    points: Vec<(f64, f64)>,
}

impl PowerModel {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self, PowerError> {
        let name = name.into();
        if points.len() < 2 {
            return Err(PowerError::TooFewPoints { name });
        }
        if points.iter().any(|(u, _)| !u.is_finite()) {
            return Err(PowerError::BadUtilizationGrid { name });
        }
        if points.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(PowerError::BadPowerValues { name });
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return Err(PowerError::BadUtilizationGrid { name });
        }
        for pair in points.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(PowerError::BadUtilizationGrid { name });
            }
            if pair[0].1 > pair[1].1 {
                return Err(PowerError::BadPowerValues { name });
            }
        }
        Ok(PowerModel { name, points })
    }

    /// A representative dual-socket rack-server curve in the 11-point
    /// SPECpower format. Shipped as `presets/power/specpower_11pt.csv` as
    /// well; both must stay in sync.
    pub fn representative() -> Self {
        let watts = [
            120.0, 200.0, 240.0, 270.0, 300.0, 330.0, 360.0, 400.0, 440.0, 480.0, 520.0,
        ];
        let points = watts
            .iter()
            .enumerate()
            .map(|(i, w)| (i as f64 / 10.0, *w))
            .collect();
        PowerModel::new("representative-specpower-11pt", points).expect("valid builtin table")
    }

    /// Watts drawn at a utilization in [0, 1], interpolating linearly
    /// between the bracketing measurements.
    pub fn power_at(&self, utilization: f64) -> Result<f64, PowerError> {
        if !(0.0..=1.0).contains(&utilization) || utilization.is_nan() {
            return Err(PowerError::UtilizationOutOfRange(utilization));
        }
        let mut iter = self.points.windows(2);
        while let Some([(u0, w0), (u1, w1)]) = iter.next() {
            if utilization <= *u1 {
                let frac = (utilization - u0) / (u1 - u0);
                return Ok(w0 + (w1 - w0) * frac);
            }
        }
        Ok(self.points[self.points.len() - 1].1)
    }

    /// Idle draw, i.e. the 0%-load measurement.
    pub fn idle_watts(&self) -> f64 {
        self.points[0].1
    }

    /// Load a CSV with columns `utilization_pct`, `watts`.
    pub fn from_csv_path(path: &Path) -> Result<Self, PowerError> {
        let file = File::open(path).map_err(|source| PowerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        let mut points = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|source| PowerError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |value: &str| PowerError::BadField {
                path: path.to_path_buf(),
                line,
                value: value.to_string(),
            };
            let pct: f64 = record
                .get(0)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| bad(record.get(0).unwrap_or("")))?;
            let watts: f64 = record
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| bad(record.get(1).unwrap_or("")))?;
            points.push((pct / 100.0, watts));
        }
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("power-model")
            .to_string();
        PowerModel::new(name, points)
    }
}

/// One physical machine type; clusters are homogeneous.
#[derive(Debug, Clone)]
pub struct HostSpec {
    pub cores: u32,
    pub ram_gb: f64,
    pub power: PowerModel,
}

impl HostSpec {
    /// The evaluated server class: 32 cores, 256 GB RAM.
    pub fn new(power: PowerModel) -> Self {
        HostSpec {
            cores: 32,
            ram_gb: 256.0,
            power,
        }
    }

    pub fn with_shape(cores: u32, ram_gb: f64, power: PowerModel) -> Self {
        HostSpec {
            cores,
            ram_gb,
            power,
        }
    }
}
