//! Resource-aware layer placement for parameter-server CNN training.
//!
//! The crate decides whether a CNN, described as an ordered layer chain,
//! should be split between data-parallel workers and the parameter-server
//! machine, and where. It also tabulates per-step network volumes for the
//! baseline PS, the split placement ("RALP") and ring-allreduce, and runs a
//! deterministic discrete-event simulation of training steps on a modeled
//! GPU cluster with fair-shared network links.
//!
//! * [`model`]: layer chain IR, descriptor format and the benchmark catalog
//! * [`profiler`]: skewness factor, eligibility gate, split search
//! * [`costmodel`]: closed-form communication volumes and compute loads
//! * [`sim`]: cluster simulator and scenario files

pub mod costmodel;
pub mod model;
pub mod profiler;
pub mod sim;
pub mod units;

pub use costmodel::{
    compare_strategies, compute_load, volume_baseline, volume_ralp, volume_ring, JobSpec, Strategy,
    StrategyVolumes,
};
pub use model::{parse_model, Catalog, LayerKind, LayerSpec, ModelError, ModelGraph};
pub use profiler::{
    compute_skewness, find_split, gate_eligibility, profile, ProfileReport, ProfilerConfig,
    SkewnessMode,
};
