//! Experiment report schema, JSON persistence, and plot-ready CSV tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carbon::RegionId;
use crate::experiment::Mode;
use crate::scheduler::ScheduleDecision;
use crate::sim::EmissionReport;

/// Bumped whenever the report layout changes incompatibly.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse report {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("report {path} has schema version {found}, this build reads {expected}")]
    SchemaMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
}

/// Batch-aggregated totals for one side (baseline or optimized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSide {
    pub total_gco2: f64,
    pub per_region_gco2: BTreeMap<RegionId, f64>,
    pub per_region_jobs: BTreeMap<RegionId, u64>,
    pub delay_histogram: BTreeMap<u64, u64>,
    pub scheduled: u64,
    pub unschedulable: u64,
    pub placement_rejected: u64,
    pub mean_delay_slots: f64,
}

impl AggregateSide {
    pub fn from_reports<'a>(reports: impl Iterator<Item = &'a EmissionReport>) -> Self {
        let mut agg = AggregateSide {
            total_gco2: 0.0,
            per_region_gco2: BTreeMap::new(),
            per_region_jobs: BTreeMap::new(),
            delay_histogram: BTreeMap::new(),
            scheduled: 0,
            unschedulable: 0,
            placement_rejected: 0,
            mean_delay_slots: 0.0,
        };
        for r in reports {
            agg.total_gco2 += r.total_gco2;
            for (region, g) in &r.per_region_gco2 {
                *agg.per_region_gco2.entry(region.clone()).or_insert(0.0) += g;
            }
            for (region, n) in &r.per_region_jobs {
                *agg.per_region_jobs.entry(region.clone()).or_insert(0) += n;
            }
            for (delay, n) in &r.delay_histogram {
                *agg.delay_histogram.entry(*delay).or_insert(0) += n;
            }
            agg.scheduled += r.scheduled;
            agg.unschedulable += r.unschedulable;
            agg.placement_rejected += r.placement_rejected;
        }
        let delay_sum: u64 = agg.delay_histogram.iter().map(|(delay, n)| delay * n).sum();
        agg.mean_delay_slots = if agg.scheduled == 0 {
            0.0
        } else {
            delay_sum as f64 / agg.scheduled as f64
        };
        agg
    }
}

/// Full result of one experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub label: String,
    pub policy: String,
    pub mode: Mode,
    pub m_per_region: Option<u32>,
    pub deadline_margin_hours: u64,
    pub seed: u64,
    pub batches: u32,
    pub batch_size: u32,
    pub count_idle: bool,
    pub baseline: AggregateSide,
    /// Absent when the run was baseline-only (`mode = round_robin`).
    pub optimized: Option<AggregateSide>,
    /// Percent emission reduction of optimized vs baseline.
    pub reduction_pct: Option<f64>,
}

impl ExperimentReport {
    pub fn save_json_path(&self, path: &Path) -> Result<(), ReportError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serializes");
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_json_path(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let report: ExperimentReport =
            serde_json::from_str(&text).map_err(|source| ReportError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::SchemaMismatch {
                path: path.to_path_buf(),
                found: report.schema_version,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        Ok(report)
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

/// One plot-ready row per report: totals, reduction, delay.
pub fn write_comparison_csv<W: Write>(
    reports: &[ExperimentReport],
    mut w: W,
) -> Result<(), std::io::Error> {
    writeln!(
        w,
        "label,policy,mode,m_per_region,deadline_margin_hours,seed,batches,batch_size,\
         total_gco2,baseline_gco2,reduction_pct,unschedulable,mean_delay_slots"
    )?;
    for r in reports {
        let (total, unschedulable, mean_delay) = match &r.optimized {
            Some(opt) => (opt.total_gco2, opt.unschedulable, opt.mean_delay_slots),
            None => (
                r.baseline.total_gco2,
                r.baseline.unschedulable,
                r.baseline.mean_delay_slots,
            ),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.policy,
            r.mode,
            fmt_opt(&r.m_per_region),
            r.deadline_margin_hours,
            r.seed,
            r.batches,
            r.batch_size,
            total,
            r.baseline.total_gco2,
            fmt_opt(&r.reduction_pct),
            unschedulable,
            mean_delay
        )?;
    }
    Ok(())
}

/// Per-region emissions and job counts, one row per (report, side, region) —
/// the data behind per-region bar charts.
pub fn write_per_region_csv<W: Write>(
    reports: &[ExperimentReport],
    mut w: W,
) -> Result<(), std::io::Error> {
    writeln!(w, "label,side,region,gco2,jobs")?;
    for r in reports {
        let mut sides: Vec<(&str, &AggregateSide)> = vec![("baseline", &r.baseline)];
        if let Some(opt) = &r.optimized {
            sides.push(("optimized", opt));
        }
        for (side, agg) in sides {
            for (region, g) in &agg.per_region_gco2 {
                let jobs = agg.per_region_jobs.get(region).copied().unwrap_or(0);
                writeln!(w, "{},{side},{region},{g},{jobs}", r.label)?;
            }
        }
    }
    Ok(())
}

/// Delay distribution, one row per (report, side, delay bucket).
pub fn write_delay_csv<W: Write>(
    reports: &[ExperimentReport],
    mut w: W,
) -> Result<(), std::io::Error> {
    writeln!(w, "label,side,delay_slots,count")?;
    for r in reports {
        let mut sides: Vec<(&str, &AggregateSide)> = vec![("baseline", &r.baseline)];
        if let Some(opt) = &r.optimized {
            sides.push(("optimized", opt));
        }
        for (side, agg) in sides {
            for (delay, count) in &agg.delay_histogram {
                writeln!(w, "{},{side},{delay},{count}", r.label)?;
            }
        }
    }
    Ok(())
}

/// The scheduler's decision-log format.
pub fn write_decisions_csv<W: Write>(
    decisions: &[ScheduleDecision],
    mut w: W,
) -> Result<(), std::io::Error> {
    writeln!(
        w,
        "vm_id,region,start_slot,duration,deadline,cost,mode,delay_slots"
    )?;
    for d in decisions {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            d.vm_id,
            d.region,
            d.start,
            d.duration,
            d.deadline,
            d.cost,
            d.mode,
            d.delay_slots()
        )?;
    }
    Ok(())
}

/// Per-VM attributed emissions, one row per VM.
pub fn write_per_vm_csv<W: Write>(
    per_vm: &BTreeMap<String, f64>,
    mut w: W,
) -> Result<(), std::io::Error> {
    writeln!(w, "vm_id,gco2")?;
    for (vm_id, g) in per_vm {
        writeln!(w, "{vm_id},{g}")?;
    }
    Ok(())
}

/// Write the full output set of one experiment run into a directory:
/// `report.json`, `summary.csv`, per-side decision logs, per-VM emissions,
/// and the delay histogram. Returns the paths written, in a fixed order.
pub fn write_outputs(
    output: &crate::experiment::ExperimentOutput,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let write_file = |name: &str, bytes: Vec<u8>| -> Result<PathBuf, ReportError> {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    let mut written = Vec::new();

    let report_path = out_dir.join("report.json");
    output.report.save_json_path(&report_path)?;
    written.push(report_path);

    let mut buf = Vec::new();
    write_comparison_csv(std::slice::from_ref(&output.report), &mut buf).expect("write to vec");
    written.push(write_file("summary.csv", buf)?);

    type SideSelector =
        fn(&crate::experiment::BatchOutput) -> Option<&crate::experiment::SideOutput>;
    let sides: [(&str, SideSelector); 2] = [
        ("baseline", |b| Some(&b.baseline)),
        ("optimized", |b| b.optimized.as_ref()),
    ];
    for (name, select) in &sides {
        let decisions: Vec<ScheduleDecision> = output
            .batches
            .iter()
            .filter_map(select)
            .flat_map(|s| s.result.decisions.iter().cloned())
            .collect();
        if decisions.is_empty() && *name == "optimized" && output.report.optimized.is_none() {
            continue;
        }
        let mut buf = Vec::new();
        write_decisions_csv(&decisions, &mut buf).expect("write to vec");
        written.push(write_file(&format!("decisions_{name}.csv"), buf)?);

        let mut per_vm = BTreeMap::new();
        for batch in &output.batches {
            if let Some(side) = select(batch) {
                per_vm.extend(side.report.per_vm_gco2.clone());
            }
        }
        let mut buf = Vec::new();
        write_per_vm_csv(&per_vm, &mut buf).expect("write to vec");
        written.push(write_file(&format!("per_vm_gco2_{name}.csv"), buf)?);
    }

    let mut buf = Vec::new();
    write_delay_csv(std::slice::from_ref(&output.report), &mut buf).expect("write to vec");
    written.push(write_file("delay_histogram.csv", buf)?);

    Ok(written)
}
