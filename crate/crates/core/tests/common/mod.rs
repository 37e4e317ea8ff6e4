//! Shared fixtures for the integration suites: seeded random scheduling
//! instances and an independent brute-force placement oracle.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use carbon_sched_core::carbon::{CarbonIntensitySeries, RegionId, SlotIndex};
use carbon_sched_core::scheduler::VmRequest;

pub fn region(code: &str) -> RegionId {
    RegionId::new(code).unwrap()
}

pub fn epoch() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2022-05-01T00:00:00Z")
        .unwrap()
        .with_timezone(&Utc)
}

pub fn series(code: &str, values: Vec<f64>) -> CarbonIntensitySeries {
    CarbonIntensitySeries::new(region(code), epoch(), values).unwrap()
}

/// A random scheduling instance over a bounded window.
pub struct Instance {
    pub regions: Vec<RegionId>,
    pub series: BTreeMap<RegionId, CarbonIntensitySeries>,
    /// `None` = unlimited.
    pub per_region_capacity: BTreeMap<RegionId, Option<u32>>,
    pub window: u64,
    pub vms: Vec<VmRequest>,
    /// Per-VM eligible regions, order-preserving subsets.
    pub eligible: Vec<Vec<RegionId>>,
}

/// Draw an instance with J ≤ 5 regions, a window of ≤ 72 slots, K ≤ 50 VMs,
/// and per-region caps from {1..5, unlimited}.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = rng.random_range(1..=5usize);
    let window = rng.random_range(8..=72u64);
    let regions: Vec<RegionId> = (0..j).map(|i| region(&format!("R{i}"))).collect();
    let mut series_map = BTreeMap::new();
    let mut per_region_capacity = BTreeMap::new();
    for r in &regions {
        let values: Vec<f64> = (0..window)
            .map(|_| rng.random_range(10.0..1000.0))
            .collect();
        series_map.insert(r.clone(), series(r.as_str(), values));
        let cap = if rng.random_range(0..6) == 0 {
            None
        } else {
            Some(rng.random_range(1..=5u32))
        };
        per_region_capacity.insert(r.clone(), cap);
    }
    let k = rng.random_range(1..=50usize);
    let mut vms = Vec::with_capacity(k);
    let mut eligible = Vec::with_capacity(k);
    for i in 0..k {
        let arrival = rng.random_range(0..window);
        let max_d = (window - arrival).clamp(1, 24);
        let duration = rng.random_range(1..=max_d);
        let slack = window - arrival - duration;
        let margin = if slack == 0 {
            0
        } else {
            rng.random_range(0..=slack)
        };
        let cores = rng.random_range(1..=16u32);
        vms.push(VmRequest {
            id: format!("vm{i}"),
            min_cpu: cores,
            min_ram_gb: f64::from(cores) * 4.0,
            duration,
            deadline: arrival + duration + margin,
            max_latency_ms: 1e9,
            arrival,
            origin: None,
        });
        let mut subset: Vec<RegionId> = regions
            .iter()
            .filter(|_| rng.random_range(0..10) < 8)
            .cloned()
            .collect();
        if subset.is_empty() {
            subset = regions.clone();
        }
        eligible.push(subset);
    }
    // stable sort by arrival, keeping eligible lists paired
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|i| vms[*i].arrival);
    let vms: Vec<VmRequest> = order.iter().map(|i| vms[*i].clone()).collect();
    let eligible: Vec<Vec<RegionId>> = order.iter().map(|i| eligible[*i].clone()).collect();

    Instance {
        regions,
        series: series_map,
        per_region_capacity,
        window,
        vms,
        eligible,
    }
}

/// Brute-force oracle: enumerates every (region, start) pair directly
/// against its own occupancy ledger, summing carbon values with a plain
/// loop. Shares no code with the scheduler under test.
pub struct BruteForce {
    occupancy: BTreeMap<RegionId, Vec<u32>>,
    capacity: BTreeMap<RegionId, Option<u32>>,
    window: u64,
}

impl BruteForce {
    pub fn new(capacity: &BTreeMap<RegionId, Option<u32>>, window: u64) -> Self {
        BruteForce {
            occupancy: capacity
                .keys()
                .map(|r| (r.clone(), vec![0; window as usize]))
                .collect(),
            capacity: capacity.clone(),
            window,
        }
    }

    fn window_fits(&self, region: &RegionId, start: u64, duration: u64) -> bool {
        let Some(cap) = self.capacity.get(region) else {
            return false;
        };
        let Some(cap) = cap else {
            return true;
        };
        let counts = &self.occupancy[region];
        (start..start + duration).all(|slot| counts[slot as usize] < *cap)
    }

    /// Best feasible placement: minimal cost, then earliest start, then
    /// eligible-list order.
    pub fn best(
        &self,
        vm: &VmRequest,
        eligible: &[RegionId],
        series: &BTreeMap<RegionId, CarbonIntensitySeries>,
        now: SlotIndex,
    ) -> Option<(RegionId, SlotIndex, f64)> {
        let mut candidates: Vec<(f64, SlotIndex, usize)> = Vec::new();
        let lo = now.max(vm.arrival);
        if vm.deadline < vm.duration {
            return None;
        }
        let hi = vm.deadline - vm.duration;
        for (idx, r) in eligible.iter().enumerate() {
            for start in lo..=hi.min(self.window.saturating_sub(vm.duration)) {
                if !self.window_fits(r, start, vm.duration) {
                    continue;
                }
                let mut cost = 0.0;
                for slot in start..start + vm.duration {
                    cost += series[r].values[slot as usize];
                }
                candidates.push((cost, start, idx));
            }
        }
        candidates
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
            .map(|(cost, start, idx)| (eligible[idx].clone(), start, cost))
    }

    pub fn commit(&mut self, region: &RegionId, start: SlotIndex, duration: u64) {
        let counts = self.occupancy.get_mut(region).unwrap();
        for slot in start..start + duration {
            counts[slot as usize] += 1;
        }
    }

    pub fn max_occupancy(&self, region: &RegionId) -> u32 {
        self.occupancy[region].iter().copied().max().unwrap_or(0)
    }

    pub fn capacity_of(&self, region: &RegionId) -> Option<u32> {
        self.capacity[region]
    }
}
