//! Cluster simulator.
//!
//! Each job's step is a task graph (see the strategy builders in `plan`)
//! run by a deterministic event loop with FIFO GPUs and max-min fair links.
//! Every machine has one outbound and one inbound link at
//! `link_bytes_per_sec`, plus a local path for same-machine transfers.

mod cluster;
mod engine;
mod network;
mod plan;
mod report;
mod scenario;

use std::thread;

use thiserror::Error;

use crate::costmodel::{CostError, Strategy};
use crate::model::ModelError;

pub use cluster::{
    ClusterSpec, Placement, PlacementPolicy, Slot, SlotMap, DEFAULT_GPU_FLOPS, DEFAULT_INTRA,
    DEFAULT_LINK, DEFAULT_MEMCOPY,
};
pub use plan::Sharding;
pub use report::{
    ConsolidationEntry, ConsolidationReport, JobReport, SimReport, StepBreakdown, WorkerBreakdown,
};
pub use scenario::{
    bundled_scenario, parse_scenario, JobRequest, Scenario, SimJob, BUNDLED_SCENARIOS,
    DEFAULT_STEPS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid cluster: {0}")]
    InvalidCluster(String),
    #[error("{resource} must be a positive rate, got {value}")]
    ZeroRate { resource: String, value: f64 },
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("copy count must be at least 1")]
    ZeroCopies,
    #[error("placement overflow: {needed} GPUs requested, {available} free")]
    PlacementOverflow { needed: usize, available: usize },
    #[error("slot {slot} outside a cluster of {machines} machines x {gpus_per_machine} GPUs")]
    SlotOutOfRange {
        slot: String,
        machines: usize,
        gpus_per_machine: usize,
    },
    #[error("slot {0} is assigned twice")]
    SlotConflict(String),
    #[error("job `{job}`: {detail}")]
    PlacementMismatch { job: String, detail: String },
    #[error("model `{0}` has no split that offloads any layer")]
    NoOffloadSplit(String),
    #[error("scenario line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read scenario {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("simulation stalled at t={time}s")]
    Stalled { time: f64 },
}

impl SimError {
    /// Errors caused by the cluster being too small for the requested jobs.
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            SimError::PlacementOverflow { .. }
                | SimError::SlotOutOfRange { .. }
                | SimError::SlotConflict(_)
        )
    }
}

fn run_steps(scenario: &Scenario, steps: usize) -> Result<Vec<Vec<StepBreakdown>>, SimError> {
    scenario.validate()?;
    let plans: Vec<plan::Plan> = scenario
        .jobs
        .iter()
        .map(|j| plan::build(j, &scenario.cluster))
        .collect();
    let mut out = vec![Vec::with_capacity(steps); plans.len()];
    engine::run(&scenario.cluster, &plans, steps, |t| {
        out[t.job].push(report::breakdown(&plans[t.job], t.step, t.start, t.timing));
    })?;
    Ok(out)
}

/// The first step of every job, in job order.
pub fn simulate_step(scenario: &Scenario) -> Result<Vec<StepBreakdown>, SimError> {
    Ok(run_steps(scenario, 1)?
        .into_iter()
        .map(|mut s| s.remove(0))
        .collect())
}

/// Runs `scenario.steps` steps and averages them.
pub fn simulate_run(scenario: &Scenario) -> Result<SimReport, SimError> {
    let series = run_steps(scenario, scenario.steps)?;
    let jobs = scenario
        .jobs
        .iter()
        .zip(series)
        .map(|(job, steps)| job_report(job, &scenario.cluster, steps))
        .collect();
    Ok(SimReport { jobs })
}

fn job_report(job: &SimJob, cluster: &ClusterSpec, steps: Vec<StepBreakdown>) -> JobReport {
    let plan = plan::build(job, cluster);
    let n = steps.len().max(1) as f64;
    let avg_step_time = steps.iter().map(|s| s.max_step_time).sum::<f64>() / n;
    let total: f64 = steps.iter().flat_map(|s| &s.workers).map(|w| w.step_time).sum();
    let comm: f64 = steps
        .iter()
        .flat_map(|s| &s.workers)
        .map(|w| w.communication)
        .sum();
    let images = job.spec.worker_count as f64 * job.spec.model.batch_size as f64;
    JobReport {
        name: job.name.clone(),
        model: job.spec.model.name.clone(),
        strategy: job.spec.strategy.label().to_string(),
        split_index: match job.spec.strategy {
            Strategy::Ralp { split_index } => Some(split_index),
            _ => None,
        },
        worker_count: job.spec.worker_count,
        ps_count: job.spec.ps_count,
        batch_size: job.spec.model.batch_size,
        steps,
        avg_step_time,
        images_per_sec: if avg_step_time > 0.0 {
            images / avg_step_time
        } else {
            f64::INFINITY
        },
        bytes_on_wire_per_step: plan.wire_bytes(),
        comm_fraction: if total > 0.0 { comm / total } else { 0.0 },
    }
}

/// Runs independent scenarios on separate threads; results keep input order.
pub fn simulate_many(scenarios: &[Scenario]) -> Vec<Result<SimReport, SimError>> {
    thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| s.spawn(move || simulate_run(sc)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

/// Places `copies` copies of the scenario's jobs on its cluster and compares
/// each copy against the same copy running alone on the same slots.
///
/// Copy 0 keeps the original placement; later copies are placed with the
/// scenario's policy around the slots already taken.
pub fn simulate_consolidation(
    base: &Scenario,
    copies: usize,
) -> Result<ConsolidationReport, SimError> {
    base.validate()?;
    if copies == 0 {
        return Err(SimError::ZeroCopies);
    }
    let mut map = SlotMap::new(&base.cluster);
    for job in &base.jobs {
        map.claim(job.placement.slots())?;
    }
    let mut groups: Vec<Vec<SimJob>> = vec![base.jobs.clone()];
    for c in 1..copies {
        let mut group = Vec::with_capacity(base.jobs.len());
        for job in &base.jobs {
            let placement = map.place(job.spec.worker_count, job.spec.ps_count, base.policy)?;
            group.push(SimJob {
                name: format!("{}#{c}", job.name),
                placement,
                ..job.clone()
            });
        }
        groups.push(group);
    }

    let consolidated = Scenario {
        jobs: groups.iter().flatten().cloned().collect(),
        ..base.clone()
    };
    let isolated: Vec<Scenario> = groups
        .iter()
        .map(|g| Scenario {
            jobs: g.clone(),
            ..base.clone()
        })
        .collect();
    let mut all = vec![consolidated];
    all.extend(isolated);
    let mut results = simulate_many(&all).into_iter();
    let consolidated = results.next().expect("consolidated run")?;

    let mut entries = Vec::new();
    let mut jobs = consolidated.jobs.iter();
    for (c, result) in results.enumerate() {
        for alone in result?.jobs {
            let together = jobs.next().expect("same job count");
            entries.push(ConsolidationEntry {
                name: together.name.clone(),
                copy: c,
                isolated_step_time: alone.avg_step_time,
                consolidated_step_time: together.avg_step_time,
                slowdown: together.avg_step_time / alone.avg_step_time,
            });
        }
    }
    Ok(ConsolidationReport {
        copies,
        entries,
        consolidated,
    })
}
