//! Batched scheduler-vs-baseline experiment runs.
//!
//! An experiment draws seeded batches of VM requests, filters regions per
//! VM through the active policy, schedules each batch with both the
//! round-robin baseline and (unless running baseline-only) the optimizer,
//! replays the decisions in the simulator, and aggregates everything into
//! one report with the percent emission reduction. Batches are independent
//! and may run on several threads; results merge in batch order, so the
//! output is identical regardless of parallelism.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carbon::{CarbonError, Dataset, RegionId, SlotIndex};
use crate::forecast::{ForecastError, ForecastStore};
use crate::policy::{eligible_regions, LatencyTable, PolicyError, PolicySpec, RegionMetadata};
use crate::power::{HostSpec, PowerError, PowerModel};
use crate::report::{AggregateSide, ExperimentReport, REPORT_SCHEMA_VERSION};
use crate::scheduler::{
    round_robin_schedule, schedule_batch, AllocationMatrix, BatchResult, CarbonView, ScheduleError,
    ScheduleJob, VmRequest,
};
use crate::sim::{simulate, Datacenter, EmissionReport, SimError, SimOptions};
use crate::trace::{ingest_traces, TraceError, TraceOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Carbon(#[from] CarbonError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    BadConfig { path: PathBuf, message: String },
}

/// How the optimizer sees future carbon intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Perfect knowledge: schedule against historical data.
    Ideal,
    /// Schedule against stored forecasts; emissions still use history.
    Forecast,
    /// Baseline only, no optimizer run.
    RoundRobin,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Ideal => f.write_str("ideal"),
            Mode::Forecast => f.write_str("forecast"),
            Mode::RoundRobin => f.write_str("round_robin"),
        }
    }
}

/// Parameters of the synthetic workload generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticWorkload {
    /// Arrivals are uniform over `[start_slot, start_slot + span)`.
    pub arrival_span_hours: u64,
    pub duration_min_hours: u64,
    pub duration_max_hours: u64,
    pub cores_choices: Vec<u32>,
    pub ram_per_core_gb: f64,
    pub max_latency_ms: f64,
    /// Trace-pool lifetime filter (ignored for synthetic workloads).
    pub lifetime_min_hours: Option<u64>,
    pub lifetime_max_hours: Option<u64>,
}

impl Default for SyntheticWorkload {
    fn default() -> Self {
        SyntheticWorkload {
            arrival_span_hours: 72,
            duration_min_hours: 6,
            duration_max_hours: 24,
            cores_choices: vec![2, 4, 8, 16],
            ram_per_core_gb: 4.0,
            max_latency_ms: 1e9,
            lifetime_min_hours: None,
            lifetime_max_hours: None,
        }
    }
}

/// Where each batch's VM requests come from.
#[derive(Debug, Clone)]
pub enum WorkloadSpec {
    Synthetic(SyntheticWorkload),
    /// Sample (without replacement when possible) from a pre-ingested pool.
    TracePool(Vec<VmRequest>),
}

/// Everything `run` needs besides the data itself.
#[derive(Debug, Clone)]
pub struct ExperimentParams {
    pub label: String,
    pub mode: Mode,
    /// Cap on simultaneous jobs per region; `None` = unlimited.
    pub m_per_region: Option<u32>,
    pub deadline_margin_hours: u64,
    pub seed: u64,
    pub batches: u32,
    pub batch_size: u32,
    pub count_idle: bool,
    /// First slot synthetic arrivals may use; must leave room for the
    /// forecast context in forecast mode.
    pub start_slot: SlotIndex,
    pub hosts_per_region: u32,
    pub host_cores: u32,
    pub host_ram_gb: f64,
    pub workload: WorkloadSpec,
}

/// A fully loaded experiment: data plus parameters.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub dataset: Dataset,
    pub policy: PolicySpec,
    pub latency: LatencyTable,
    pub meta: RegionMetadata,
    pub power: PowerModel,
    pub forecasts: Option<ForecastStore>,
    pub params: ExperimentParams,
}

/// Scheduling result and simulation report for one side of one batch.
#[derive(Debug, Clone)]
pub struct SideOutput {
    pub result: BatchResult,
    pub report: EmissionReport,
}

/// Both sides of one batch.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub index: u32,
    pub baseline: SideOutput,
    pub optimized: Option<SideOutput>,
}

/// Aggregated report plus the per-batch details behind it.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub batches: Vec<BatchOutput>,
}

fn validate_inputs(inputs: &ExperimentInputs) -> Result<(), ExperimentError> {
    let mut problems = Vec::new();
    let p = &inputs.params;
    if p.batches == 0 {
        problems.push("batches must be at least 1".to_string());
    }
    if p.batch_size == 0 {
        problems.push("batch_size must be at least 1".to_string());
    }
    if p.hosts_per_region == 0 {
        problems.push("hosts_per_region must be at least 1".to_string());
    }
    if p.host_cores == 0 || p.host_ram_gb.is_nan() || p.host_ram_gb <= 0.0 {
        problems.push("host shape must have positive cores and RAM".to_string());
    }
    if matches!(p.mode, Mode::Forecast) && inputs.forecasts.is_none() {
        problems.push("mode = forecast requires a forecast store".to_string());
    }

    let all_regions = inputs.dataset.regions();
    problems.extend(inputs.policy.validate_against(&all_regions, &inputs.meta));

    // worst-case slot any VM may touch, for upfront coverage checks
    let needed: Option<SlotIndex> = match &p.workload {
        WorkloadSpec::Synthetic(w) => {
            if w.duration_min_hours == 0 {
                problems.push("duration_min_hours must be at least 1".to_string());
            }
            if w.duration_min_hours > w.duration_max_hours {
                problems.push(format!(
                    "duration range [{}, {}] is empty",
                    w.duration_min_hours, w.duration_max_hours
                ));
            }
            if w.arrival_span_hours == 0 {
                problems.push("arrival_span_hours must be at least 1".to_string());
            }
            if w.cores_choices.is_empty() {
                problems.push("cores_choices must not be empty".to_string());
            }
            for c in &w.cores_choices {
                if *c == 0 || *c > p.host_cores {
                    problems.push(format!(
                        "core choice {c} does not fit the {}-core host",
                        p.host_cores
                    ));
                }
                if *c as f64 * w.ram_per_core_gb > p.host_ram_gb {
                    problems.push(format!(
                        "RAM for a {c}-core VM exceeds the {} GB host",
                        p.host_ram_gb
                    ));
                }
            }
            Some(
                p.start_slot
                    + w.arrival_span_hours
                    + w.duration_max_hours
                    + p.deadline_margin_hours,
            )
        }
        WorkloadSpec::TracePool(pool) => {
            if pool.is_empty() {
                problems.push("trace pool is empty".to_string());
            }
            for vm in pool {
                if vm.min_cpu > p.host_cores || vm.min_ram_gb > p.host_ram_gb {
                    problems.push(format!(
                        "trace VM {} ({} cores / {} GB) does not fit the host shape; \
                         filter the trace or enlarge the hosts",
                        vm.id, vm.min_cpu, vm.min_ram_gb
                    ));
                    break;
                }
            }
            pool.iter()
                .map(|vm| vm.arrival + vm.duration + p.deadline_margin_hours)
                .max()
        }
    };
    if let Some(needed) = needed {
        for (region, series) in &inputs.dataset.series {
            if series.len() < needed {
                problems.push(format!(
                    "carbon series for {region} covers {} slots, the workload can reach slot {needed}",
                    series.len()
                ));
            }
        }
    }
    if matches!(p.mode, Mode::Forecast) {
        if let Some(store) = &inputs.forecasts {
            let earliest_query = match &p.workload {
                WorkloadSpec::Synthetic(_) => p.start_slot,
                WorkloadSpec::TracePool(pool) => {
                    pool.iter().map(|vm| vm.arrival).min().unwrap_or(0)
                }
            };
            for region in &all_regions {
                if store.latest_at(region, earliest_query).is_none() {
                    problems.push(format!(
                        "no forecast for {region} issued at or before slot {earliest_query}"
                    ));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(ExperimentError::Invalid(problems))
    }
}

fn generate_batch(
    inputs: &ExperimentInputs,
    batch_index: u32,
) -> Result<Vec<VmRequest>, ExperimentError> {
    let p = &inputs.params;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(u64::from(batch_index) + 1);

    // the latency policy assigns each request a random origin from the
    // policy's own region list
    let origin_pool: Option<Vec<RegionId>> = if inputs.policy.max_latency_ms.is_some() {
        Some(
            inputs
                .policy
                .allowed_regions
                .clone()
                .unwrap_or_else(|| inputs.dataset.regions()),
        )
    } else {
        None
    };

    let mut vms = Vec::with_capacity(p.batch_size as usize);
    match &p.workload {
        WorkloadSpec::Synthetic(w) => {
            for i in 0..p.batch_size {
                let arrival = p.start_slot + rng.random_range(0..w.arrival_span_hours);
                let duration = rng.random_range(w.duration_min_hours..=w.duration_max_hours);
                let cores = *w
                    .cores_choices
                    .choose(&mut rng)
                    .expect("validated non-empty");
                let origin = origin_pool
                    .as_ref()
                    .map(|pool| pool.choose(&mut rng).expect("non-empty").clone());
                vms.push(VmRequest {
                    id: format!("b{batch_index}-v{i}"),
                    min_cpu: cores,
                    min_ram_gb: f64::from(cores) * w.ram_per_core_gb,
                    duration,
                    deadline: arrival + duration + p.deadline_margin_hours,
                    max_latency_ms: w.max_latency_ms,
                    arrival,
                    origin,
                });
            }
        }
        WorkloadSpec::TracePool(pool) => {
            for i in 0..p.batch_size {
                let template = &pool[rng.random_range(0..pool.len())];
                let origin = origin_pool
                    .as_ref()
                    .map(|choices| choices.choose(&mut rng).expect("non-empty").clone());
                vms.push(VmRequest {
                    id: format!("b{batch_index}-{}-{i}", template.id),
                    deadline: template.arrival + template.duration + p.deadline_margin_hours,
                    origin,
                    ..template.clone()
                });
            }
        }
    }
    vms.sort_by_key(|vm| vm.arrival);
    Ok(vms)
}

fn build_jobs(
    inputs: &ExperimentInputs,
    vms: Vec<VmRequest>,
) -> Result<Vec<ScheduleJob>, ExperimentError> {
    let all_regions = inputs.dataset.regions();
    let mut jobs = Vec::with_capacity(vms.len());
    for vm in vms {
        let eligible = match eligible_regions(
            &vm,
            &all_regions,
            &inputs.policy,
            &inputs.latency,
            &inputs.meta,
        ) {
            Ok(regions) => regions,
            // carried to the scheduler as an unschedulable verdict
            Err(PolicyError::NoEligibleRegion { .. }) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        jobs.push(ScheduleJob { vm, eligible });
    }
    Ok(jobs)
}

fn run_batch(inputs: &ExperimentInputs, batch_index: u32) -> Result<BatchOutput, ExperimentError> {
    let p = &inputs.params;
    let vms = generate_batch(inputs, batch_index)?;
    let jobs = build_jobs(inputs, vms)?;
    let catalog: BTreeMap<String, VmRequest> = jobs
        .iter()
        .map(|j| (j.vm.id.clone(), j.vm.clone()))
        .collect();

    let all_regions = inputs.dataset.regions();
    let host = HostSpec::with_shape(p.host_cores, p.host_ram_gb, inputs.power.clone());
    let dcs: Vec<Datacenter> = all_regions
        .iter()
        .map(|r| Datacenter::new(r.clone(), p.hosts_per_region, host.clone()))
        .collect();
    let sim_opts = SimOptions {
        count_idle: p.count_idle,
    };
    let historical = CarbonView::historical(&inputs.dataset.series);

    let run_side = |result: BatchResult, mode_label: &str| -> Result<SideOutput, ExperimentError> {
        let mut report = simulate(
            &dcs,
            &result.decisions,
            &catalog,
            &inputs.dataset.series,
            &sim_opts,
        )?;
        report.label = p.label.clone();
        report.policy = inputs.policy.name.clone();
        report.mode = mode_label.to_string();
        report.unschedulable = result.unschedulable.len() as u64;
        Ok(SideOutput { result, report })
    };

    let mut alloc = AllocationMatrix::uniform(&all_regions, p.m_per_region);
    let baseline_result = round_robin_schedule(&jobs, &historical, &mut alloc, 0)?;
    let baseline = run_side(baseline_result, "round_robin")?;

    let optimized = match p.mode {
        Mode::RoundRobin => None,
        Mode::Ideal => {
            let mut alloc = AllocationMatrix::uniform(&all_regions, p.m_per_region);
            let result = schedule_batch(&jobs, &historical, &mut alloc, 0)?;
            Some(run_side(result, "ideal")?)
        }
        Mode::Forecast => {
            let store = inputs.forecasts.as_ref().expect("validated");
            let view = CarbonView::forecasted(store);
            let mut alloc = AllocationMatrix::uniform(&all_regions, p.m_per_region);
            let result = schedule_batch(&jobs, &view, &mut alloc, 0)?;
            Some(run_side(result, "forecast")?)
        }
    };

    Ok(BatchOutput {
        index: batch_index,
        baseline,
        optimized,
    })
}

/// Run every batch (optionally across `jobs` threads) and aggregate.
pub fn run(inputs: &ExperimentInputs, jobs: usize) -> Result<ExperimentOutput, ExperimentError> {
    validate_inputs(inputs)?;
    let p = &inputs.params;
    let indices: Vec<u32> = (0..p.batches).collect();

    let mut outputs: Vec<Option<BatchOutput>> = Vec::new();
    outputs.resize_with(indices.len(), || None);
    if jobs <= 1 || indices.len() <= 1 {
        for (slot, index) in indices.iter().enumerate() {
            outputs[slot] = Some(run_batch(inputs, *index)?);
        }
    } else {
        let workers = jobs.min(indices.len());
        let results: Vec<Vec<(usize, Result<BatchOutput, ExperimentError>)>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|w| {
                        let indices = &indices;
                        scope.spawn(move || {
                            indices
                                .iter()
                                .enumerate()
                                .skip(w)
                                .step_by(workers)
                                .map(|(slot, index)| (slot, run_batch(inputs, *index)))
                                .collect()
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
        let mut failures: Vec<(usize, ExperimentError)> = Vec::new();
        for worker_results in results {
            for (slot, result) in worker_results {
                match result {
                    Ok(output) => outputs[slot] = Some(output),
                    Err(e) => failures.push((slot, e)),
                }
            }
        }
        if !failures.is_empty() {
            failures.sort_by_key(|(slot, _)| *slot);
            return Err(failures.into_iter().next().unwrap().1);
        }
    }
    let batches: Vec<BatchOutput> = outputs.into_iter().map(|o| o.expect("filled")).collect();

    let baseline = AggregateSide::from_reports(batches.iter().map(|b| &b.baseline.report));
    let optimized = if matches!(p.mode, Mode::RoundRobin) {
        None
    } else {
        Some(AggregateSide::from_reports(batches.iter().map(|b| {
            &b.optimized.as_ref().expect("non-baseline mode").report
        })))
    };
    let reduction_pct = optimized.as_ref().and_then(|opt| {
        (baseline.total_gco2 > 0.0)
            .then(|| 100.0 * (baseline.total_gco2 - opt.total_gco2) / baseline.total_gco2)
    });

    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: p.label.clone(),
        policy: inputs.policy.name.clone(),
        mode: p.mode,
        m_per_region: p.m_per_region,
        deadline_margin_hours: p.deadline_margin_hours,
        seed: p.seed,
        batches: p.batches,
        batch_size: p.batch_size,
        count_idle: p.count_idle,
        baseline,
        optimized,
        reduction_pct,
    };
    Ok(ExperimentOutput { report, batches })
}

// --- configuration files -------------------------------------------------

fn default_hosts() -> u32 {
    crate::sim::DEFAULT_HOSTS_PER_REGION
}
fn default_host_cores() -> u32 {
    32
}
fn default_host_ram() -> f64 {
    256.0
}

/// On-disk experiment configuration (TOML).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label: Option<String>,
    pub policy_file: String,
    pub regions_dir: String,
    pub forecasts: Option<String>,
    pub latency_table: Option<String>,
    pub region_meta: Option<String>,
    pub power_model: Option<String>,
    pub traces: Option<String>,
    pub m_per_region: Option<u32>,
    pub deadline_margin_hours: u64,
    pub mode: Mode,
    pub seed: u64,
    pub batches: u32,
    pub batch_size: u32,
    #[serde(default)]
    pub count_idle: bool,
    #[serde(default)]
    pub start_slot: SlotIndex,
    #[serde(default = "default_hosts")]
    pub hosts_per_region: u32,
    #[serde(default = "default_host_cores")]
    pub host_cores: u32,
    #[serde(default = "default_host_ram")]
    pub host_ram_gb: f64,
    #[serde(default)]
    pub workload: SyntheticWorkload,
}

impl ExperimentConfig {
    pub fn from_toml_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ExperimentError::BadConfig {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Where each referenced input file ended up after resolution; feeds the
/// run manifest.
#[derive(Debug, Clone, Default)]
pub struct ResolvedPaths {
    pub config: PathBuf,
    pub policy_file: PathBuf,
    pub region_files: Vec<PathBuf>,
    pub forecasts: Option<PathBuf>,
    pub latency_table: Option<PathBuf>,
    pub region_meta: Option<PathBuf>,
    pub power_model: Option<PathBuf>,
    pub traces: Option<PathBuf>,
}

impl ResolvedPaths {
    /// Every input file, for digesting.
    pub fn all_files(&self) -> Vec<PathBuf> {
        let mut files = vec![self.config.clone(), self.policy_file.clone()];
        files.extend(self.region_files.iter().cloned());
        for path in [
            &self.forecasts,
            &self.latency_table,
            &self.region_meta,
            &self.power_model,
            &self.traces,
        ]
        .into_iter()
        .flatten()
        {
            files.push(path.clone());
        }
        files
    }
}

/// Resolve a config-relative path: absolute paths pass through; otherwise
/// try the config's directory, then `$CARBON_SCHED_DATA` when set.
pub fn resolve_path(config_dir: &Path, data_root: Option<&Path>, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    let local = config_dir.join(p);
    if local.exists() {
        return local;
    }
    if let Some(root) = data_root {
        let under_root = root.join(p);
        if under_root.exists() {
            return under_root;
        }
    }
    local
}

/// Load a config file and everything it references.
///
/// Missing files are collected and reported together rather than one at a
/// time.
pub fn load_inputs(
    config_path: &Path,
    data_root: Option<&Path>,
) -> Result<(ExperimentInputs, ResolvedPaths), ExperimentError> {
    let config = ExperimentConfig::from_toml_path(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new("."));
    let resolve = |raw: &str| resolve_path(config_dir, data_root, raw);

    let mut paths = ResolvedPaths {
        config: config_path.to_path_buf(),
        policy_file: resolve(&config.policy_file),
        ..ResolvedPaths::default()
    };
    let regions_dir = resolve(&config.regions_dir);
    paths.forecasts = config.forecasts.as_deref().map(resolve);
    paths.latency_table = config.latency_table.as_deref().map(resolve);
    paths.region_meta = config.region_meta.as_deref().map(resolve);
    paths.power_model = config.power_model.as_deref().map(resolve);
    paths.traces = config.traces.as_deref().map(resolve);

    let mut missing: Vec<String> = Vec::new();
    let mut require = |p: &Path, what: &str| {
        if !p.exists() {
            missing.push(format!("{what} not found: {}", p.display()));
        }
    };
    require(&paths.policy_file, "policy file");
    require(&regions_dir, "regions directory");
    for (p, what) in [
        (&paths.forecasts, "forecast store"),
        (&paths.latency_table, "latency table"),
        (&paths.region_meta, "region metadata"),
        (&paths.power_model, "power model"),
        (&paths.traces, "trace file"),
    ] {
        if let Some(p) = p {
            require(p, what);
        }
    }
    if !missing.is_empty() {
        return Err(ExperimentError::Invalid(missing));
    }

    let dataset = Dataset::load_dir(&regions_dir)?;
    if let Ok(entries) = std::fs::read_dir(&regions_dir) {
        paths.region_files = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
            .collect();
        paths.region_files.sort();
    }

    let policy = PolicySpec::from_toml_path(&paths.policy_file)?;
    let latency = match &paths.latency_table {
        Some(p) => LatencyTable::from_csv_path(p)?,
        None => LatencyTable::new(),
    };
    let meta = match &paths.region_meta {
        Some(p) => RegionMetadata::from_csv_path(p)?,
        None => RegionMetadata::new(),
    };
    let power = match &paths.power_model {
        Some(p) => PowerModel::from_csv_path(p)?,
        None => PowerModel::representative(),
    };
    let forecasts = match &paths.forecasts {
        Some(p) => Some(ForecastStore::read_csv_path(p)?),
        None => None,
    };
    let workload = match &paths.traces {
        Some(p) => {
            let lifetime = match (
                config.workload.lifetime_min_hours,
                config.workload.lifetime_max_hours,
            ) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (Some(lo), None) => Some((lo, u64::MAX)),
                (None, Some(hi)) => Some((0, hi)),
                (None, None) => None,
            };
            let opts = TraceOptions {
                epoch: Some(dataset.epoch),
                deadline_margin_hours: 0,
                lifetime_hours: lifetime,
                max_latency_ms: config.workload.max_latency_ms,
            };
            let ingest = ingest_traces(p, &opts)?;
            if ingest.rejected_rows > 0 || ingest.filtered_rows > 0 {
                log::info!(
                    "trace {}: {} rows rejected, {} outside the lifetime range",
                    p.display(),
                    ingest.rejected_rows,
                    ingest.filtered_rows
                );
            }
            WorkloadSpec::TracePool(ingest.vms)
        }
        None => WorkloadSpec::Synthetic(config.workload.clone()),
    };

    let label = config.label.clone().unwrap_or_else(|| {
        config_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment")
            .to_string()
    });
    let params = ExperimentParams {
        label,
        mode: config.mode,
        m_per_region: config.m_per_region,
        deadline_margin_hours: config.deadline_margin_hours,
        seed: config.seed,
        batches: config.batches,
        batch_size: config.batch_size,
        count_idle: config.count_idle,
        start_slot: config.start_slot,
        hosts_per_region: config.hosts_per_region,
        host_cores: config.host_cores,
        host_ram_gb: config.host_ram_gb,
        workload,
    };
    Ok((
        ExperimentInputs {
            dataset,
            policy,
            latency,
            meta,
            power,
            forecasts,
            params,
        },
        paths,
    ))
}

/// Validate a config file and its referenced data without running it;
/// returns every problem found.
pub fn validate_config(config_path: &Path, data_root: Option<&Path>) -> Vec<String> {
    match load_inputs(config_path, data_root) {
        Ok((inputs, _)) => match validate_inputs(&inputs) {
            Ok(()) => Vec::new(),
            Err(ExperimentError::Invalid(problems)) => problems,
            Err(other) => vec![other.to_string()],
        },
        Err(ExperimentError::Invalid(problems)) => problems,
        Err(other) => vec![other.to_string()],
    }
}
