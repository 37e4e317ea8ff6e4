//! Carbon-aware scheduling of virtual-machine workloads across regions and time.
//!
//! The library picks, for every VM request, the region and hourly start slot
//! that minimize the summed grid carbon intensity over the VM's runtime,
//! subject to its deadline and a per-region cap on simultaneous jobs. A
//! multi-region simulator replays the resulting schedule against host power
//! models to quantify emissions versus a carbon-agnostic round-robin baseline.
//!
//! Module map:
//! - [`carbon`]: hourly carbon-intensity series, CSV ingestion, slot math
//! - [`forecast`]: baseline forecasting methods, metrics, and the forecast store
//! - [`policy`]: region eligibility filtering (subsets, tags, latency ceilings)
//! - [`scheduler`]: the cost-minimizing placement search and round-robin baseline
//! - [`power`]: utilization-to-watts host power models
//! - [`sim`]: datacenter placement and emissions accounting
//! - [`trace`]: VM request trace ingestion
//! - [`experiment`]: batched scheduler-vs-baseline experiment runs
//! - [`report`]: report serialization and comparison tables

pub mod carbon;
pub mod experiment;
pub mod forecast;
pub mod policy;
pub mod power;
pub mod report;
pub mod scheduler;
pub mod sim;
pub mod trace;

pub use carbon::{CarbonIntensitySeries, Dataset, RegionId, SlotIndex};
pub use scheduler::{ScheduleDecision, VmRequest};
