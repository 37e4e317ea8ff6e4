//! Datacenter placement and emissions accounting.
//!
//! Each region hosts a homogeneous cluster. Scheduled VMs are packed onto
//! hosts first-fit-decreasing by core count, then every occupied slot is
//! charged `Power × CI` against the region's historical carbon intensity —
//! forecasts never enter the accounting, only the decisions they produced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carbon::{CarbonIntensitySeries, RegionId, SlotIndex};
use crate::power::{HostSpec, PowerError};
use crate::scheduler::{ScheduleDecision, VmRequest};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("VM {vm_id} ({cores} cores / {ram_gb} GB) exceeds a single host ({host_cores} cores / {host_ram_gb} GB)")]
    OversizeVm {
        vm_id: String,
        cores: u32,
        ram_gb: f64,
        host_cores: u32,
        host_ram_gb: f64,
    },
    #[error("decision for {vm_id} references unknown VM")]
    UnknownVm { vm_id: String },
    #[error("no datacenter for region {region}")]
    UnknownRegion { region: RegionId },
    #[error("historical carbon intensity for {region} covers {have} slots, decision for {vm_id} needs slot {slot}")]
    CiCoverage {
        region: RegionId,
        vm_id: String,
        slot: SlotIndex,
        have: u64,
    },
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// A simulated cluster: `hosts` identical machines in one region.
#[derive(Debug, Clone)]
pub struct Datacenter {
    pub region: RegionId,
    pub hosts: u32,
    pub host: HostSpec,
}

/// Default cluster size per region.
pub const DEFAULT_HOSTS_PER_REGION: u32 = 200;

impl Datacenter {
    pub fn new(region: RegionId, hosts: u32, host: HostSpec) -> Self {
        Datacenter {
            region,
            hosts,
            host,
        }
    }
}

/// Host assignment for every placeable VM of one datacenter.
#[derive(Debug, Clone, Default)]
pub struct Placement {
    /// vm_id → host index.
    pub host_of: BTreeMap<String, usize>,
    /// VMs admitted by the region cap that still fit no host.
    pub rejected: Vec<String>,
}

/// Pack this datacenter's decisions onto hosts, first-fit decreasing by
/// core count (ties keep decision order). A VM occupies one host for its
/// whole runtime; per slot, committed cores and RAM never exceed the host.
pub fn place_vms(
    dc: &Datacenter,
    decisions: &[&ScheduleDecision],
    vms: &BTreeMap<String, VmRequest>,
) -> Result<Placement, SimError> {
    let mut order: Vec<(&ScheduleDecision, &VmRequest)> = Vec::with_capacity(decisions.len());
    for d in decisions {
        let vm = vms.get(&d.vm_id).ok_or_else(|| SimError::UnknownVm {
            vm_id: d.vm_id.clone(),
        })?;
        if vm.min_cpu > dc.host.cores || vm.min_ram_gb > dc.host.ram_gb {
            return Err(SimError::OversizeVm {
                vm_id: vm.id.clone(),
                cores: vm.min_cpu,
                ram_gb: vm.min_ram_gb,
                host_cores: dc.host.cores,
                host_ram_gb: dc.host.ram_gb,
            });
        }
        order.push((d, vm));
    }
    order.sort_by_key(|(_, vm)| std::cmp::Reverse(vm.min_cpu));

    // per host: slot -> (cores used, ram used)
    let mut usage: Vec<BTreeMap<SlotIndex, (u32, f64)>> = vec![BTreeMap::new(); dc.hosts as usize];
    let mut placement = Placement::default();
    for (decision, vm) in order {
        let slots = decision.start..decision.start + decision.duration;
        let fits = |host: &BTreeMap<SlotIndex, (u32, f64)>| {
            slots.clone().all(|slot| {
                let (c, r) = host.get(&slot).copied().unwrap_or((0, 0.0));
                c + vm.min_cpu <= dc.host.cores && r + vm.min_ram_gb <= dc.host.ram_gb
            })
        };
        match usage.iter().position(fits) {
            Some(idx) => {
                for slot in slots {
                    let entry = usage[idx].entry(slot).or_insert((0, 0.0));
                    entry.0 += vm.min_cpu;
                    entry.1 += vm.min_ram_gb;
                }
                placement.host_of.insert(vm.id.clone(), idx);
            }
            None => placement.rejected.push(vm.id.clone()),
        }
    }
    placement.rejected.sort();
    Ok(placement)
}

/// Emission accounting options.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Charge the full power of every powered-on host (a host is on while
    /// it runs at least one VM) instead of attributing each VM its marginal
    /// draw. Default off: idle power is nobody's workload.
    pub count_idle: bool,
}

/// Emissions and schedule statistics for one simulated batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionReport {
    pub label: String,
    pub mode: String,
    pub policy: String,
    /// Sum of the per-region values, gCO₂eq.
    pub total_gco2: f64,
    pub per_region_gco2: BTreeMap<RegionId, f64>,
    /// Scheduled decisions per region.
    pub per_region_jobs: BTreeMap<RegionId, u64>,
    /// Marginal (attribution-mode) emissions per VM; in count-idle mode the
    /// per-region totals additionally carry the idle share, which belongs
    /// to no single VM.
    pub per_vm_gco2: BTreeMap<String, f64>,
    /// delay in slots → number of VMs.
    pub delay_histogram: BTreeMap<u64, u64>,
    pub scheduled: u64,
    pub unschedulable: u64,
    pub placement_rejected: u64,
    pub mean_delay_slots: f64,
}

impl EmissionReport {
    fn empty() -> Self {
        EmissionReport {
            label: String::new(),
            mode: String::new(),
            policy: String::new(),
            total_gco2: 0.0,
            per_region_gco2: BTreeMap::new(),
            per_region_jobs: BTreeMap::new(),
            per_vm_gco2: BTreeMap::new(),
            delay_histogram: BTreeMap::new(),
            scheduled: 0,
            unschedulable: 0,
            placement_rejected: 0,
            mean_delay_slots: 0.0,
        }
    }
}

/// Replay decisions against the datacenters and account emissions as
/// `Σ Power(t) · CI(t)` over every occupied hourly slot, using historical
/// carbon intensity.
pub fn simulate(
    dcs: &[Datacenter],
    decisions: &[ScheduleDecision],
    vms: &BTreeMap<String, VmRequest>,
    ci: &BTreeMap<RegionId, CarbonIntensitySeries>,
    opts: &SimOptions,
) -> Result<EmissionReport, SimError> {
    let mut report = EmissionReport::empty();
    for dc in dcs {
        let series = ci.get(&dc.region).ok_or_else(|| SimError::UnknownRegion {
            region: dc.region.clone(),
        })?;
        let region_decisions: Vec<&ScheduleDecision> =
            decisions.iter().filter(|d| d.region == dc.region).collect();
        if region_decisions.is_empty() {
            continue;
        }
        for d in &region_decisions {
            let last = d.start + d.duration - 1;
            if last >= series.len() {
                return Err(SimError::CiCoverage {
                    region: dc.region.clone(),
                    vm_id: d.vm_id.clone(),
                    slot: last,
                    have: series.len(),
                });
            }
        }
        let placement = place_vms(dc, &region_decisions, vms)?;
        report.placement_rejected += placement.rejected.len() as u64;
        *report.per_region_jobs.entry(dc.region.clone()).or_insert(0) +=
            region_decisions.len() as u64;

        let idle = dc.host.power.idle_watts();
        let mut region_total = 0.0;
        if opts.count_idle {
            // host-level accounting: full draw of every powered-on host
            let mut host_cores: Vec<BTreeMap<SlotIndex, u32>> =
                vec![BTreeMap::new(); dc.hosts as usize];
            for d in &region_decisions {
                let Some(host) = placement.host_of.get(&d.vm_id) else {
                    continue;
                };
                let vm = &vms[&d.vm_id];
                for slot in d.start..d.start + d.duration {
                    *host_cores[*host].entry(slot).or_insert(0) += vm.min_cpu;
                }
            }
            let mut slots: Vec<SlotIndex> =
                host_cores.iter().flat_map(|m| m.keys().copied()).collect();
            slots.sort_unstable();
            slots.dedup();
            for slot in slots {
                let ci_value = series.values[slot as usize];
                for per_host in &host_cores {
                    if let Some(cores) = per_host.get(&slot) {
                        let util = f64::from(*cores) / f64::from(dc.host.cores);
                        let watts = dc.host.power.power_at(util.min(1.0))?;
                        region_total += watts / 1000.0 * ci_value;
                    }
                }
            }
        }
        // marginal attribution per VM (also the region total in default mode)
        for d in &region_decisions {
            if !placement.host_of.contains_key(&d.vm_id) {
                continue;
            }
            let vm = &vms[&d.vm_id];
            let util = f64::from(vm.min_cpu) / f64::from(dc.host.cores);
            let marginal = dc.host.power.power_at(util.min(1.0))? - idle;
            let mut vm_total = 0.0;
            for slot in d.start..d.start + d.duration {
                let g = marginal / 1000.0 * series.values[slot as usize];
                vm_total += g;
            }
            report.per_vm_gco2.insert(d.vm_id.clone(), vm_total);
            if !opts.count_idle {
                region_total += vm_total;
            }
        }
        report
            .per_region_gco2
            .insert(dc.region.clone(), region_total);
    }
    report.total_gco2 = report.per_region_gco2.values().sum();

    report.scheduled = decisions.len() as u64;
    let mut delay_sum = 0u64;
    for d in decisions {
        let delay = d.delay_slots();
        *report.delay_histogram.entry(delay).or_insert(0) += 1;
        delay_sum += delay;
    }
    report.mean_delay_slots = if decisions.is_empty() {
        0.0
    } else {
        delay_sum as f64 / decisions.len() as f64
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::PowerModel;
    use crate::scheduler::ScheduleMode;
    use chrono::{DateTime, Utc};

    fn region(code: &str) -> RegionId {
        RegionId::new(code).unwrap()
    }

    fn epoch() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2022-05-15T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn dc(code: &str, hosts: u32) -> Datacenter {
        let power = PowerModel::new("lin", vec![(0.0, 100.0), (1.0, 300.0)]).unwrap();
        Datacenter::new(region(code), hosts, HostSpec::new(power))
    }

    fn vm(id: &str, cores: u32) -> VmRequest {
        VmRequest {
            id: id.to_string(),
            min_cpu: cores,
            min_ram_gb: 8.0,
            duration: 2,
            deadline: 10,
            max_latency_ms: 1e9,
            arrival: 0,
            origin: None,
        }
    }

    fn decision(vm_id: &str, code: &str, start: SlotIndex, duration: u64) -> ScheduleDecision {
        ScheduleDecision {
            vm_id: vm_id.to_string(),
            region: region(code),
            start,
            duration,
            deadline: 20,
            arrival: start,
            cost: 0.0,
            mode: ScheduleMode::Optimized,
            extended_forecast: false,
        }
    }

    fn catalog(vms: Vec<VmRequest>) -> BTreeMap<String, VmRequest> {
        vms.into_iter().map(|v| (v.id.clone(), v)).collect()
    }

    #[test]
    fn two_half_host_vms_share_host_zero() {
        let dc = dc("A", 4);
        let vms = catalog(vec![vm("a", 16), vm("b", 16)]);
        let d1 = decision("a", "A", 0, 2);
        let d2 = decision("b", "A", 0, 2);
        let placement = place_vms(&dc, &[&d1, &d2], &vms).unwrap();
        assert_eq!(placement.host_of["a"], 0);
        assert_eq!(placement.host_of["b"], 0);
    }

    #[test]
    fn first_fit_overflows_to_next_host() {
        let dc = dc("A", 4);
        let vms = catalog(vec![vm("a", 16), vm("b", 16), vm("c", 16)]);
        let d1 = decision("a", "A", 0, 2);
        let d2 = decision("b", "A", 0, 2);
        let d3 = decision("c", "A", 0, 2);
        let placement = place_vms(&dc, &[&d1, &d2, &d3], &vms).unwrap();
        let hosts: Vec<usize> = ["a", "b", "c"]
            .iter()
            .map(|id| placement.host_of[*id])
            .collect();
        assert_eq!(hosts, vec![0, 0, 1]);
    }

    #[test]
    fn oversize_vm_is_an_error() {
        let dc = dc("A", 4);
        let vms = catalog(vec![vm("big", 64)]);
        let d = decision("big", "A", 0, 2);
        assert!(matches!(
            place_vms(&dc, &[&d], &vms),
            Err(SimError::OversizeVm { .. })
        ));
    }

    #[test]
    fn overfull_cluster_rejects_and_reports() {
        let dc = dc("A", 1);
        let vms = catalog(vec![vm("a", 32), vm("b", 32)]);
        let d1 = decision("a", "A", 0, 2);
        let d2 = decision("b", "A", 0, 2);
        let placement = place_vms(&dc, &[&d1, &d2], &vms).unwrap();
        assert_eq!(placement.host_of.len(), 1);
        assert_eq!(placement.rejected.len(), 1);
    }

    #[test]
    fn attributed_emissions_hand_computed() {
        // marginal draw for a full-host VM: 300 W - 100 W = 200 W = 0.2 kW
        // over CI [100, 300]: 0.2*100 + 0.2*300 = 80 g
        let dc = vec![dc("A", 4)];
        let vms = catalog(vec![vm("a", 32)]);
        let decisions = vec![decision("a", "A", 0, 2)];
        let ci: BTreeMap<RegionId, CarbonIntensitySeries> = [(
            region("A"),
            CarbonIntensitySeries::new(region("A"), epoch(), vec![100.0, 300.0]).unwrap(),
        )]
        .into();
        let report = simulate(&dc, &decisions, &vms, &ci, &SimOptions::default()).unwrap();
        assert_eq!(report.total_gco2, 80.0);
        assert_eq!(report.per_vm_gco2["a"], 80.0);
    }

    #[test]
    fn no_vms_no_emissions() {
        let dc = vec![dc("A", 4)];
        let ci: BTreeMap<RegionId, CarbonIntensitySeries> = [(
            region("A"),
            CarbonIntensitySeries::new(region("A"), epoch(), vec![100.0]).unwrap(),
        )]
        .into();
        let report = simulate(&dc, &[], &BTreeMap::new(), &ci, &SimOptions::default()).unwrap();
        assert_eq!(report.total_gco2, 0.0);
    }

    #[test]
    fn count_idle_charges_full_host_power() {
        // one half-loaded host: full draw at u=0.5 is 200 W over CI 100
        let dc = vec![dc("A", 4)];
        let vms = catalog(vec![vm("a", 16)]);
        let decisions = vec![decision("a", "A", 0, 1)];
        let ci: BTreeMap<RegionId, CarbonIntensitySeries> = [(
            region("A"),
            CarbonIntensitySeries::new(region("A"), epoch(), vec![100.0]).unwrap(),
        )]
        .into();
        let attributed = simulate(
            &dc,
            &decisions,
            &vms,
            &ci,
            &SimOptions { count_idle: false },
        )
        .unwrap();
        let full = simulate(&dc, &decisions, &vms, &ci, &SimOptions { count_idle: true }).unwrap();
        // marginal: (200 - 100)/1000 * 100 = 10 g; full host: 200/1000 * 100 = 20 g
        assert_eq!(attributed.total_gco2, 10.0);
        assert_eq!(full.total_gco2, 20.0);
    }

    #[test]
    fn ci_coverage_gap_is_an_error() {
        let dc = vec![dc("A", 4)];
        let vms = catalog(vec![vm("a", 16)]);
        let decisions = vec![decision("a", "A", 5, 2)];
        let ci: BTreeMap<RegionId, CarbonIntensitySeries> = [(
            region("A"),
            CarbonIntensitySeries::new(region("A"), epoch(), vec![100.0; 4]).unwrap(),
        )]
        .into();
        assert!(matches!(
            simulate(&dc, &decisions, &vms, &ci, &SimOptions::default()),
            Err(SimError::CiCoverage { .. })
        ));
    }

    #[test]
    fn totals_conserve_per_region_sums() {
        let dcs = vec![dc("A", 4), dc("B", 4)];
        let vms = catalog(vec![vm("a", 16), vm("b", 8), vm("c", 4)]);
        let decisions = vec![
            decision("a", "A", 0, 2),
            decision("b", "B", 1, 2),
            decision("c", "A", 2, 1),
        ];
        let mk = |code: &str, values: Vec<f64>| {
            (
                region(code),
                CarbonIntensitySeries::new(region(code), epoch(), values).unwrap(),
            )
        };
        let ci: BTreeMap<RegionId, CarbonIntensitySeries> = [
            mk("A", vec![100.0, 200.0, 50.0]),
            mk("B", vec![80.0, 90.0, 70.0]),
        ]
        .into();
        let report = simulate(&dcs, &decisions, &vms, &ci, &SimOptions::default()).unwrap();
        let sum: f64 = report.per_region_gco2.values().sum();
        assert!((report.total_gco2 - sum).abs() <= 1e-9 * sum.max(1.0));
    }
}
