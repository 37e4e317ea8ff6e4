//! Region eligibility filtering ahead of the placement optimization.
//!
//! A policy narrows the candidate regions for each VM through three
//! composable constraints: an explicit allow-list, a region-tag filter
//! (e.g. `eu` for data-residency), and a network-latency ceiling checked
//! against a static origin→target latency table. The scheduler then only
//! optimizes over what survives.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::carbon::RegionId;
use crate::scheduler::VmRequest;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("no eligible region for VM {vm_id} under policy {policy}")]
    NoEligibleRegion { vm_id: String, policy: String },
    #[error("latency table has no entry for {origin} -> {target}")]
    MissingLatency { origin: RegionId, target: RegionId },
    #[error("VM {vm_id} has no origin region but a latency constraint applies")]
    MissingOrigin { vm_id: String },
    #[error("policy {name} declares no constraint")]
    NoConstraint { name: String },
    #[error("latency {latency_ms} ms for {origin} -> {target} is invalid")]
    InvalidLatency {
        origin: RegionId,
        target: RegionId,
        latency_ms: f64,
    },
    #[error(
        "self-latency of {origin} ({diagonal_ms} ms) exceeds {origin} -> {target} ({entry_ms} ms)"
    )]
    DiagonalNotMinimal {
        origin: RegionId,
        target: RegionId,
        diagonal_ms: f64,
        entry_ms: f64,
    },
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
    #[error("cannot parse policy {path}: {message}")]
    BadPolicy { path: PathBuf, message: String },
}

/// Maximum expected one-way latency between region pairs, in milliseconds.
///
/// Missing diagonal entries (r, r) default to 0 ms; a present diagonal must
/// not exceed any other entry with the same origin.
#[derive(Debug, Clone, Default)]
pub struct LatencyTable {
    entries: BTreeMap<(RegionId, RegionId), f64>,
}

impl LatencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        origin: RegionId,
        target: RegionId,
        latency_ms: f64,
    ) -> Result<(), PolicyError> {
        if !latency_ms.is_finite() || latency_ms < 0.0 {
            return Err(PolicyError::InvalidLatency {
                origin,
                target,
                latency_ms,
            });
        }
        self.entries.insert((origin, target), latency_ms);
        Ok(())
    }

    /// Latency for origin→target, with the diagonal defaulting to 0 ms.
    pub fn latency(&self, origin: &RegionId, target: &RegionId) -> Option<f64> {
        match self.entries.get(&(origin.clone(), target.clone())) {
            Some(ms) => Some(*ms),
            None if origin == target => Some(0.0),
            None => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn validate(&self) -> Result<(), PolicyError> {
        for ((origin, target), ms) in &self.entries {
            if let Some(diag) = self.entries.get(&(origin.clone(), origin.clone())) {
                if origin != target && diag > ms {
                    return Err(PolicyError::DiagonalNotMinimal {
                        origin: origin.clone(),
                        target: target.clone(),
                        diagonal_ms: *diag,
                        entry_ms: *ms,
                    });
                }
            }
        }
        Ok(())
    }

    /// Load a CSV with columns `origin`, `target`, `latency_ms`.
    pub fn from_csv_path(path: &Path) -> Result<Self, PolicyError> {
        let file = File::open(path).map_err(|source| PolicyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        let mut table = LatencyTable::new();
        for record in reader.records() {
            let record = record.map_err(|source| PolicyError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |value: &str| PolicyError::BadField {
                path: path.to_path_buf(),
                line,
                value: value.to_string(),
            };
            let get = |idx: usize| record.get(idx).unwrap_or("");
            let origin = RegionId::new(get(0)).map_err(|_| bad(get(0)))?;
            let target = RegionId::new(get(1)).map_err(|_| bad(get(1)))?;
            let latency_ms: f64 = get(2).trim().parse().map_err(|_| bad(get(2)))?;
            table.insert(origin, target, latency_ms)?;
        }
        table.validate()?;
        Ok(table)
    }
}

/// Tags attached to regions (e.g. `eu`), from a CSV with columns `region`
/// and `tags` (semicolon-separated).
#[derive(Debug, Clone, Default)]
pub struct RegionMetadata {
    tags: BTreeMap<RegionId, BTreeSet<String>>,
}

impl RegionMetadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_tag(&mut self, region: RegionId, tag: impl Into<String>) {
        self.tags.entry(region).or_default().insert(tag.into());
    }

    pub fn has_tag(&self, region: &RegionId, tag: &str) -> bool {
        self.tags.get(region).is_some_and(|t| t.contains(tag))
    }

    pub fn tag_known(&self, tag: &str) -> bool {
        self.tags.values().any(|t| t.contains(tag))
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, PolicyError> {
        let file = File::open(path).map_err(|source| PolicyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        let mut meta = RegionMetadata::new();
        for record in reader.records() {
            let record = record.map_err(|source| PolicyError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let region =
                RegionId::new(record.get(0).unwrap_or("")).map_err(|_| PolicyError::BadField {
                    path: path.to_path_buf(),
                    line,
                    value: record.get(0).unwrap_or("").to_string(),
                })?;
            for tag in record.get(1).unwrap_or("").split(';') {
                let tag = tag.trim();
                if !tag.is_empty() {
                    meta.add_tag(region.clone(), tag);
                }
            }
        }
        Ok(meta)
    }
}

/// A declarative scheduling policy: which regions a VM may be placed in.
#[derive(Debug, Clone, Deserialize)]
pub struct PolicySpec {
    pub name: String,
    /// Explicit allow-list; absent means all dataset regions are candidates.
    #[serde(default)]
    pub allowed_regions: Option<Vec<RegionId>>,
    /// Policy-level latency ceiling in milliseconds; combined with the
    /// per-VM ceiling by taking the minimum.
    #[serde(default)]
    pub max_latency_ms: Option<f64>,
    /// Keep only regions carrying this tag (resolved via [`RegionMetadata`]).
    #[serde(default)]
    pub require_tag: Option<String>,
}

impl PolicySpec {
    /// A pass-through policy allowing the given regions.
    pub fn allow_all(name: impl Into<String>, regions: &[RegionId]) -> Self {
        PolicySpec {
            name: name.into(),
            allowed_regions: Some(regions.to_vec()),
            max_latency_ms: None,
            require_tag: None,
        }
    }

    pub fn from_toml_path(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let spec: PolicySpec = toml::from_str(&text).map_err(|e| PolicyError::BadPolicy {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if spec.allowed_regions.is_none()
            && spec.max_latency_ms.is_none()
            && spec.require_tag.is_none()
        {
            return Err(PolicyError::NoConstraint { name: spec.name });
        }
        Ok(spec)
    }

    /// Check that referenced regions and tags exist; returns every problem
    /// found rather than the first.
    pub fn validate_against(&self, all_regions: &[RegionId], meta: &RegionMetadata) -> Vec<String> {
        let mut problems = Vec::new();
        if let Some(allowed) = &self.allowed_regions {
            for r in allowed {
                if !all_regions.contains(r) {
                    problems.push(format!(
                        "policy {}: allowed region {r} is not in the dataset",
                        self.name
                    ));
                }
            }
            if allowed.is_empty() {
                problems.push(format!("policy {}: allowed_regions is empty", self.name));
            }
        }
        if let Some(tag) = &self.require_tag {
            if !meta.tag_known(tag) {
                problems.push(format!(
                    "policy {}: tag `{tag}` matches no region in the metadata",
                    self.name
                ));
            }
        }
        if let Some(ms) = self.max_latency_ms {
            if !ms.is_finite() || ms <= 0.0 {
                problems.push(format!(
                    "policy {}: max_latency_ms must be positive, got {ms}",
                    self.name
                ));
            }
        }
        problems
    }
}

/// Regions of `all_regions` that pass every active policy constraint for
/// this VM, in the input order.
///
/// The latency constraint applies exactly when the VM carries an origin;
/// the effective ceiling is then the minimum of the VM's own limit and the
/// policy's. A policy-level ceiling without a VM origin is an error, as is
/// a missing latency entry for a surviving candidate — silently admitting
/// a region would defeat the SLA.
pub fn eligible_regions(
    vm: &VmRequest,
    all_regions: &[RegionId],
    policy: &PolicySpec,
    latency: &LatencyTable,
    meta: &RegionMetadata,
) -> Result<Vec<RegionId>, PolicyError> {
    let mut candidates: Vec<RegionId> = all_regions.to_vec();
    if let Some(allowed) = &policy.allowed_regions {
        candidates.retain(|r| allowed.contains(r));
    }
    if let Some(tag) = &policy.require_tag {
        candidates.retain(|r| meta.has_tag(r, tag));
    }
    match &vm.origin {
        Some(origin) => {
            let ceiling = vm
                .max_latency_ms
                .min(policy.max_latency_ms.unwrap_or(f64::INFINITY));
            let mut kept = Vec::with_capacity(candidates.len());
            for r in candidates {
                let ms =
                    latency
                        .latency(origin, &r)
                        .ok_or_else(|| PolicyError::MissingLatency {
                            origin: origin.clone(),
                            target: r.clone(),
                        })?;
                if ms <= ceiling {
                    kept.push(r);
                }
            }
            candidates = kept;
        }
        None => {
            if policy.max_latency_ms.is_some() {
                return Err(PolicyError::MissingOrigin {
                    vm_id: vm.id.clone(),
                });
            }
        }
    }
    if candidates.is_empty() {
        return Err(PolicyError::NoEligibleRegion {
            vm_id: vm.id.clone(),
            policy: policy.name.clone(),
        });
    }
    Ok(candidates)
}
