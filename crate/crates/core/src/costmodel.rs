//! Closed-form per-step communication volumes and compute loads for the
//! three aggregation strategies.
//!
//! `W` is the number of synchronizing endpoints. Gradients and parameters
//! have the same size, so a push and a pull each move the full payload.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelGraph;
use crate::profiler::find_split;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("split index {index} out of range for a {layers}-layer model (need 1 <= split < {layers})")]
    SplitOutOfRange { index: usize, layers: usize },
    #[error("worker list is empty")]
    EmptyWorkerList,
    #[error("{strategy} needs {expected} parameter servers, got {got}")]
    PsCount {
        strategy: String,
        expected: String,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    BaselinePs,
    Ralp { split_index: usize },
    RingAllreduce,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::BaselinePs => "baseline",
            Strategy::Ralp { .. } => "ralp",
            Strategy::RingAllreduce => "ring",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Ralp { split_index } => write!(f, "ralp(split={split_index})"),
            s => f.write_str(s.label()),
        }
    }
}

/// One training job: a model, how it aggregates, and how many workers and
/// parameter servers it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub model: ModelGraph,
    pub strategy: Strategy,
    pub worker_count: usize,
    pub ps_count: usize,
}

impl JobSpec {
    pub fn new(
        model: ModelGraph,
        strategy: Strategy,
        worker_count: usize,
        ps_count: usize,
    ) -> Result<Self, CostError> {
        let job = JobSpec {
            model,
            strategy,
            worker_count,
            ps_count,
        };
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.worker_count == 0 {
            return Err(CostError::NoWorkers);
        }
        match self.strategy {
            Strategy::BaselinePs if self.ps_count == 0 => Err(CostError::PsCount {
                strategy: "baseline".into(),
                expected: "at least 1".into(),
                got: 0,
            }),
            Strategy::Ralp { split_index } => {
                check_split(&self.model, split_index)?;
                if self.ps_count != 1 {
                    return Err(CostError::PsCount {
                        strategy: "ralp".into(),
                        expected: "exactly 1".into(),
                        got: self.ps_count,
                    });
                }
                Ok(())
            }
            Strategy::RingAllreduce if self.ps_count != 0 => Err(CostError::PsCount {
                strategy: "ring".into(),
                expected: "0".into(),
                got: self.ps_count,
            }),
            _ => Ok(()),
        }
    }

    pub fn volumes(&self) -> Result<StrategyVolumes, CostError> {
        volumes_for(&self.model, self.strategy, self.worker_count)
    }

    /// GPUs the job occupies (one per worker and per PS).
    pub fn gpus(&self) -> usize {
        self.worker_count + self.ps_count
    }
}

/// Bytes moved per training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyVolumes {
    pub total_bytes_per_step: u64,
    pub per_worker_bytes: f64,
    pub parameter_sync_bytes: u64,
    pub activation_bytes: u64,
}

impl StrategyVolumes {
    fn new(parameter_sync_bytes: u64, activation_bytes: u64, workers: usize) -> Self {
        let total = parameter_sync_bytes + activation_bytes;
        StrategyVolumes {
            total_bytes_per_step: total,
            per_worker_bytes: total as f64 / workers as f64,
            parameter_sync_bytes,
            activation_bytes,
        }
    }
}

fn check_split(model: &ModelGraph, split_index: usize) -> Result<(), CostError> {
    if split_index == 0 || split_index >= model.num_layers() {
        return Err(CostError::SplitOutOfRange {
            index: split_index,
            layers: model.num_layers(),
        });
    }
    Ok(())
}

/// Every worker pushes gradients of size S and pulls parameters of size S.
pub fn volume_baseline(model: &ModelGraph, workers: usize) -> Result<StrategyVolumes, CostError> {
    if workers == 0 {
        return Err(CostError::NoWorkers);
    }
    let s = model.total_param_bytes();
    Ok(StrategyVolumes::new(2 * s * workers as u64, 0, workers))
}

/// Ring allreduce: reduce-scatter plus all-gather, `2 S (W - 1)` in total.
pub fn volume_ring(model: &ModelGraph, workers: usize) -> Result<StrategyVolumes, CostError> {
    if workers == 0 {
        return Err(CostError::NoWorkers);
    }
    let s = model.total_param_bytes();
    Ok(StrategyVolumes::new(2 * s * (workers as u64 - 1), 0, workers))
}

/// RALP: activations at the split cross the network in both directions, and
/// only front-segment parameters are synchronized over the network.
/// Back-segment aggregation stays inside the PS machine.
pub fn volume_ralp(
    model: &ModelGraph,
    split_index: usize,
    workers: usize,
) -> Result<StrategyVolumes, CostError> {
    if workers == 0 {
        return Err(CostError::NoWorkers);
    }
    check_split(model, split_index)?;
    let w = workers as u64;
    let activation = model.output_bytes_at(split_index).expect("split checked");
    let front: u64 = model.param_bytes()[..split_index].iter().sum();
    Ok(StrategyVolumes::new(2 * front * w, 2 * activation * w, workers))
}

pub fn volumes_for(
    model: &ModelGraph,
    strategy: Strategy,
    workers: usize,
) -> Result<StrategyVolumes, CostError> {
    match strategy {
        Strategy::BaselinePs => volume_baseline(model, workers),
        Strategy::RingAllreduce => volume_ring(model, workers),
        Strategy::Ralp { split_index } => volume_ralp(model, split_index, workers),
    }
}

/// Training FLOPs per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeLoad {
    pub worker_flops_per_step: u64,
    pub ps_flops_per_step: u64,
}

/// Backward is charged at twice the forward cost.
pub const TRAIN_FLOPS_FACTOR: u64 = 3;

/// Forward+backward FLOPs on one worker and on the PS for one step.
///
/// Without a split the worker runs the whole model and the PS only
/// aggregates (one add per parameter per worker). With a split the PS worker
/// runs the back segment once per arriving batch. `split_index` may equal
/// the layer count, leaving the PS idle.
pub fn compute_load(
    model: &ModelGraph,
    split_index: Option<usize>,
    workers: usize,
) -> Result<ComputeLoad, CostError> {
    if workers == 0 {
        return Err(CostError::NoWorkers);
    }
    let n = model.num_layers();
    let batch = model.batch_size;
    match split_index {
        None => Ok(ComputeLoad {
            worker_flops_per_step: TRAIN_FLOPS_FACTOR * model.forward_flops(0..n) * batch,
            ps_flops_per_step: model.total_param_count() * workers as u64,
        }),
        Some(s) => {
            if s == 0 || s > n {
                return Err(CostError::SplitOutOfRange { index: s, layers: n });
            }
            Ok(ComputeLoad {
                worker_flops_per_step: TRAIN_FLOPS_FACTOR * model.forward_flops(0..s) * batch,
                ps_flops_per_step: TRAIN_FLOPS_FACTOR
                    * model.forward_flops(s..n)
                    * batch
                    * workers as u64,
            })
        }
    }
}

/// One row of a strategy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub model: String,
    pub strategy: String,
    pub workers: usize,
    /// GPUs used: baseline pairs every worker with a PS, ring uses workers
    /// only, RALP adds a single PS GPU.
    pub gpus: usize,
    pub split_index: Option<usize>,
    pub volumes: StrategyVolumes,
    /// Set when RALP has nothing to offload and falls back to baseline.
    pub note: Option<String>,
}

impl VolumeRow {
    pub const CSV_HEADER: &'static str =
        "model,strategy,W,total_bytes,param_bytes,activation_bytes";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.model,
            self.strategy,
            self.workers,
            self.volumes.total_bytes_per_step,
            self.volumes.parameter_sync_bytes,
            self.volumes.activation_bytes
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Baseline,
    Ring,
    Ralp,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Baseline, StrategyKind::Ring, StrategyKind::Ralp];
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "ps" => Ok(StrategyKind::Baseline),
            "ring" | "allreduce" | "horovod" => Ok(StrategyKind::Ring),
            "ralp" => Ok(StrategyKind::Ralp),
            other => Err(format!("unknown strategy `{other}` (expected baseline, ring, ralp or all)")),
        }
    }
}

/// The network-cost-minimizing split for RALP, if it offloads anything.
pub fn offload_split(model: &ModelGraph) -> Option<usize> {
    let split = find_split(&model.param_bytes(), &model.output_bytes(), &model.kinds())
        .ok()
        .flatten()?;
    (split.index < model.num_layers()).then_some(split.index)
}

/// Volume table for every requested strategy and worker count, in
/// (worker count, strategy) order.
pub fn compare_strategies(
    model: &ModelGraph,
    workers: &[usize],
    strategies: &[StrategyKind],
) -> Result<Vec<VolumeRow>, CostError> {
    if workers.is_empty() {
        return Err(CostError::EmptyWorkerList);
    }
    let split = offload_split(model);
    let mut rows = Vec::new();
    for &w in workers {
        for &kind in strategies {
            let row = match kind {
                StrategyKind::Baseline => VolumeRow {
                    model: model.name.clone(),
                    strategy: "baseline".into(),
                    workers: w,
                    gpus: 2 * w,
                    split_index: None,
                    volumes: volume_baseline(model, w)?,
                    note: None,
                },
                StrategyKind::Ring => VolumeRow {
                    model: model.name.clone(),
                    strategy: "ring".into(),
                    workers: w,
                    gpus: w,
                    split_index: None,
                    volumes: volume_ring(model, w)?,
                    note: None,
                },
                StrategyKind::Ralp => match split {
                    Some(s) => VolumeRow {
                        model: model.name.clone(),
                        strategy: "ralp".into(),
                        workers: w,
                        gpus: w + 1,
                        split_index: Some(s),
                        volumes: volume_ralp(model, s, w)?,
                        note: None,
                    },
                    None => VolumeRow {
                        model: model.name.clone(),
                        strategy: "ralp".into(),
                        workers: w,
                        gpus: w + 1,
                        split_index: None,
                        volumes: volume_baseline(model, w)?,
                        note: Some("no offloadable split; baseline volumes".into()),
                    },
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// The two RALP resource configurations for a budget of `gpus` GPUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RalpConfig {
    pub label: &'static str,
    pub workers: usize,
    pub gpus: usize,
}

/// RALP-H uses N/2 workers plus one PS GPU (N/2+1 total); RALP-N uses N-1
/// workers plus one PS GPU (N total).
pub fn ralp_configs(gpus: usize) -> [RalpConfig; 2] {
    [
        RalpConfig {
            label: "ralp-h",
            workers: (gpus / 2).max(1),
            gpus: (gpus / 2).max(1) + 1,
        },
        RalpConfig {
            label: "ralp-n",
            workers: gpus.saturating_sub(1).max(1),
            gpus: gpus.saturating_sub(1).max(1) + 1,
        },
    ]
}
