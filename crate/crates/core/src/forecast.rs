//! Carbon-intensity forecasting: baseline statistical methods, a
//! perfect-foresight oracle, error metrics, and a persisted forecast store.
//!
//! The methods here are deliberately simple stand-ins behind a stable
//! contract: any model that can produce `horizon` hourly values per region
//! can feed the scheduler through the same store format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::carbon::{CarbonIntensitySeries, RegionId, SlotIndex};

/// Default context length p, in hours.
pub const DEFAULT_CONTEXT_HOURS: usize = 1024;
/// Default forecast horizon h, in hours (four days).
pub const DEFAULT_HORIZON_HOURS: usize = 96;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("context of {got} values is too short for {method} (needs at least {needed})")]
    ContextTooShort {
        method: String,
        needed: usize,
        got: usize,
    },
    #[error("{method}: parameter must be at least 1")]
    ZeroParameter { method: String },
    #[error("perfect foresight for {region} needs slots [{from}, {to}), series covers {have}")]
    CoverageGap {
        region: RegionId,
        from: SlotIndex,
        to: SlotIndex,
        have: u64,
    },
    #[error("prediction and actual lengths differ: {pred} vs {actual}")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("cannot evaluate empty forecast")]
    EmptyEvaluation,
    #[error("series of {have} slots is too short for a context of {context} (needs {} or more)", context + 1)]
    SeriesTooShort { context: usize, have: u64 },
    #[error("cadence must be at least 1 hour")]
    ZeroCadence,
    #[error("unknown forecast method tag `{0}`")]
    UnknownMethodTag(String),
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

/// How to produce a forecast from a context window.
#[derive(Debug, Clone)]
pub enum ForecastMethod {
    /// Repeat the last observed value.
    Persistence,
    /// Repeat the trailing `period` hours cyclically.
    SeasonalNaive { period: usize },
    /// Repeat the mean of the trailing `window` hours.
    MovingAverage { window: usize },
    /// Return the actual future values (ideal-mode oracle).
    Perfect { actuals: CarbonIntensitySeries },
}

impl ForecastMethod {
    /// Stable tag written to the store's `method` column.
    pub fn tag(&self) -> String {
        match self {
            ForecastMethod::Persistence => "persistence".to_string(),
            ForecastMethod::SeasonalNaive { period } => format!("seasonal_naive_{period}"),
            ForecastMethod::MovingAverage { window } => format!("moving_average_{window}"),
            ForecastMethod::Perfect { .. } => "perfect".to_string(),
        }
    }

    fn min_context(&self) -> usize {
        match self {
            ForecastMethod::Persistence => 1,
            ForecastMethod::SeasonalNaive { period } => *period,
            ForecastMethod::MovingAverage { window } => *window,
            ForecastMethod::Perfect { .. } => 0,
        }
    }
}

/// Inputs for one forecast: the trailing context window of a region's series
/// and the slot at which the forecast is issued (first predicted slot).
#[derive(Debug, Clone)]
pub struct ForecastRequest {
    pub region: RegionId,
    pub context: Vec<f64>,
    pub issue_slot: SlotIndex,
    pub horizon: usize,
}

/// `horizon` predicted gCO₂eq/kWh values for slots
/// `[issue_slot, issue_slot + horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub region: RegionId,
    pub issue_slot: SlotIndex,
    pub values: Vec<f64>,
    pub method: String,
}

/// Produce the next `horizon` values for one region.
///
/// Predictions are clamped at 0 after the method runs; carbon intensity is
/// never negative.
pub fn forecast(req: &ForecastRequest, method: &ForecastMethod) -> Result<Forecast, ForecastError> {
    if req.horizon == 0 {
        return Err(ForecastError::ZeroHorizon);
    }
    match method {
        ForecastMethod::SeasonalNaive { period: 0 }
        | ForecastMethod::MovingAverage { window: 0 } => {
            return Err(ForecastError::ZeroParameter {
                method: method.tag(),
            });
        }
        _ => {}
    }
    let needed = method.min_context();
    if req.context.len() < needed {
        return Err(ForecastError::ContextTooShort {
            method: method.tag(),
            needed,
            got: req.context.len(),
        });
    }

    let mut values = match method {
        ForecastMethod::Persistence => {
            let last = *req.context.last().expect("non-empty context");
            vec![last; req.horizon]
        }
        ForecastMethod::SeasonalNaive { period } => {
            let tail = &req.context[req.context.len() - period..];
            (0..req.horizon).map(|i| tail[i % period]).collect()
        }
        ForecastMethod::MovingAverage { window } => {
            let tail = &req.context[req.context.len() - window..];
            let mean = tail.iter().sum::<f64>() / *window as f64;
            vec![mean; req.horizon]
        }
        ForecastMethod::Perfect { actuals } => {
            let to = req.issue_slot + req.horizon as u64;
            if to > actuals.len() {
                return Err(ForecastError::CoverageGap {
                    region: req.region.clone(),
                    from: req.issue_slot,
                    to,
                    have: actuals.len(),
                });
            }
            actuals.values[req.issue_slot as usize..to as usize].to_vec()
        }
    };
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(Forecast {
        region: req.region.clone(),
        issue_slot: req.issue_slot,
        values,
        method: method.tag(),
    })
}

/// Point-forecast error metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Mean absolute percentage error, in percent, over slots with a
    /// non-zero actual.
    pub mape_pct: f64,
    /// Number of slots excluded from MAPE because the actual was zero.
    pub mape_excluded: usize,
}

/// MAE, RMSE and MAPE of a prediction against the realized values.
pub fn evaluate_forecast(pred: &[f64], actual: &[f64]) -> Result<ForecastMetrics, ForecastError> {
    if pred.len() != actual.len() {
        return Err(ForecastError::LengthMismatch {
            pred: pred.len(),
            actual: actual.len(),
        });
    }
    if pred.is_empty() {
        return Err(ForecastError::EmptyEvaluation);
    }
    let n = pred.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut pct_sum = 0.0;
    let mut included = 0usize;
    for (p, a) in pred.iter().zip(actual) {
        let err = p - a;
        abs_sum += err.abs();
        sq_sum += err * err;
        if *a != 0.0 {
            pct_sum += (err / a).abs();
            included += 1;
        }
    }
    let mape_pct = if included == 0 {
        0.0
    } else {
        100.0 * pct_sum / included as f64
    };
    Ok(ForecastMetrics {
        mae: abs_sum / n,
        rmse: (sq_sum / n).sqrt(),
        mape_pct,
        mape_excluded: pred.len() - included,
    })
}

/// Forecasts indexed by region and issue slot, persisted as CSV.
#[derive(Debug, Clone, Default)]
pub struct ForecastStore {
    by_region: BTreeMap<RegionId, BTreeMap<SlotIndex, Forecast>>,
}

impl ForecastStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, forecast: Forecast) {
        self.by_region
            .entry(forecast.region.clone())
            .or_default()
            .insert(forecast.issue_slot, forecast);
    }

    /// The most recent forecast for `region` whose issue slot is at or
    /// before `query` — the staleness rule the scheduler uses.
    pub fn latest_at(&self, region: &RegionId, query: SlotIndex) -> Option<&Forecast> {
        self.by_region
            .get(region)?
            .range(..=query)
            .next_back()
            .map(|(_, f)| f)
    }

    pub fn len(&self) -> usize {
        self.by_region.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn regions(&self) -> Vec<RegionId> {
        self.by_region.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Forecast> {
        self.by_region.values().flat_map(|m| m.values())
    }

    pub fn merge(&mut self, other: ForecastStore) {
        for (_, by_issue) in other.by_region {
            for (_, f) in by_issue {
                self.insert(f);
            }
        }
    }

    /// One row per (region, issue slot, target slot).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), std::io::Error> {
        writeln!(w, "region,issue_slot,target_slot,value,method")?;
        for forecast in self.iter() {
            for (i, v) in forecast.values.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    forecast.region,
                    forecast.issue_slot,
                    forecast.issue_slot + i as u64,
                    v,
                    forecast.method
                )?;
            }
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), ForecastError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .map_err(|source| ForecastError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        std::fs::write(path, buf).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Self, ForecastError> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        // (region, issue, method) -> target -> value
        let mut rows: BTreeMap<(RegionId, SlotIndex, String), BTreeMap<SlotIndex, f64>> =
            BTreeMap::new();
        for record in csv_reader.records() {
            let record = record.map_err(|source| ForecastError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |value: &str| ForecastError::BadField {
                path: path.to_path_buf(),
                line,
                value: value.to_string(),
            };
            let get = |idx: usize| record.get(idx).unwrap_or("");
            let region = RegionId::new(get(0)).map_err(|_| bad(get(0)))?;
            let issue: SlotIndex = get(1).parse().map_err(|_| bad(get(1)))?;
            let target: SlotIndex = get(2).parse().map_err(|_| bad(get(2)))?;
            let value: f64 = get(3).parse().map_err(|_| bad(get(3)))?;
            if !value.is_finite() || value < 0.0 || target < issue {
                return Err(bad(get(3)));
            }
            let method = get(4).to_string();
            rows.entry((region, issue, method))
                .or_default()
                .insert(target, value);
        }
        let mut store = ForecastStore::new();
        for ((region, issue_slot, method), by_target) in rows {
            // targets must form the contiguous range [issue, issue + h)
            let expected_end = issue_slot + by_target.len() as u64;
            let contiguous = by_target
                .keys()
                .zip(issue_slot..expected_end)
                .all(|(have, want)| *have == want);
            if !contiguous {
                return Err(ForecastError::BadField {
                    path: path.to_path_buf(),
                    line: 0,
                    value: format!("non-contiguous targets for {region} issue {issue_slot}"),
                });
            }
            store.insert(Forecast {
                region,
                issue_slot,
                values: by_target.into_values().collect(),
                method,
            });
        }
        Ok(store)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, ForecastError> {
        let file = File::open(path).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, path)
    }
}

/// Issue a forecast every `every` hours along a historical series, as an
/// hourly (or coarser) refresh job would, and collect the results.
///
/// Forecasts are issued at every slot `i` with `context ≤ i < len` on the
/// cadence grid; the context is the `context` values ending at `i`. The
/// perfect method additionally skips issue slots whose horizon extends past
/// the end of the series, since there is no truth to return there.
pub fn rolling_forecast_store(
    series: &CarbonIntensitySeries,
    method: &ForecastMethod,
    context: usize,
    horizon: usize,
    every: u64,
) -> Result<ForecastStore, ForecastError> {
    if every == 0 {
        return Err(ForecastError::ZeroCadence);
    }
    if horizon == 0 {
        return Err(ForecastError::ZeroHorizon);
    }
    if series.len() < context as u64 + 1 {
        return Err(ForecastError::SeriesTooShort {
            context,
            have: series.len(),
        });
    }
    let mut store = ForecastStore::new();
    let mut issue = context as u64;
    while issue < series.len() {
        if matches!(method, ForecastMethod::Perfect { .. }) && issue + horizon as u64 > series.len()
        {
            break;
        }
        let req = ForecastRequest {
            region: series.region.clone(),
            context: series.values[issue as usize - context..issue as usize].to_vec(),
            issue_slot: issue,
            horizon,
        };
        store.insert(forecast(&req, method)?);
        issue += every;
    }
    Ok(store)
}

/// Parse a store method tag back into a method (perfect needs its actuals).
pub fn method_from_tag(
    tag: &str,
    actuals: Option<&CarbonIntensitySeries>,
) -> Result<ForecastMethod, ForecastError> {
    if tag == "persistence" {
        return Ok(ForecastMethod::Persistence);
    }
    if tag == "perfect" {
        return match actuals {
            Some(series) => Ok(ForecastMethod::Perfect {
                actuals: series.clone(),
            }),
            None => Err(ForecastError::UnknownMethodTag(tag.to_string())),
        };
    }
    if let Some(rest) = tag.strip_prefix("seasonal_naive_") {
        let period = rest
            .parse()
            .map_err(|_| ForecastError::UnknownMethodTag(tag.to_string()))?;
        return Ok(ForecastMethod::SeasonalNaive { period });
    }
    if let Some(rest) = tag.strip_prefix("moving_average_") {
        let window = rest
            .parse()
            .map_err(|_| ForecastError::UnknownMethodTag(tag.to_string()))?;
        return Ok(ForecastMethod::MovingAverage { window });
    }
    Err(ForecastError::UnknownMethodTag(tag.to_string()))
}
