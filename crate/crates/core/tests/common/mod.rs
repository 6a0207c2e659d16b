//! Random models and scenarios shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use ralp_core::costmodel::offload_split;
use ralp_core::model::{Hyperparams, Shape};
use ralp_core::sim::{ClusterSpec, JobRequest, PlacementPolicy, Scenario, Sharding};
use ralp_core::{JobSpec, LayerKind, ModelGraph, Strategy};

/// A chain of `layers` entries mixing composite blocks, fully connected
/// layers and parameterless activations.
pub fn random_model<R: Rng>(rng: &mut R, layers: usize) -> ModelGraph {
    let mut spec = Vec::with_capacity(layers);
    for i in 0..layers {
        let hyper = match rng.gen_range(0..3) {
            0 => Hyperparams::Block {
                params: if rng.gen_bool(0.2) { 0 } else { rng.gen_range(1..200_000) },
                out: Shape::Flat(rng.gen_range(1..5_000)),
                flops: rng.gen_range(0..50_000_000),
            },
            1 => Hyperparams::FullyConnected {
                inputs: 0,
                outputs: rng.gen_range(1..800),
            },
            _ => Hyperparams::Activation,
        };
        spec.push((format!("l{i}"), hyper));
    }
    ModelGraph::from_layers(
        "synthetic",
        Shape::Flat(rng.gen_range(1..600)),
        rng.gen_range(1..64),
        4,
        spec,
    )
    .expect("synthetic chains are well formed")
}

/// Raw profiler inputs with every layer kind represented.
pub fn random_profile<R: Rng>(rng: &mut R, max_layers: usize) -> (Vec<u64>, Vec<u64>, Vec<LayerKind>) {
    const KINDS: [LayerKind; 10] = [
        LayerKind::Convolution,
        LayerKind::Pooling,
        LayerKind::FullyConnected,
        LayerKind::Normalization,
        LayerKind::Activation,
        LayerKind::Flatten,
        LayerKind::Concat,
        LayerKind::ResidualAdd,
        LayerKind::Loss,
        LayerKind::Block,
    ];
    let n = rng.gen_range(1..=max_layers);
    // Small value ranges make ties common.
    let scale = if rng.gen_bool(0.5) { 20 } else { 1 << 40 };
    let params = (0..n).map(|_| rng.gen_range(0..scale)).collect();
    let outputs = (0..n).map(|_| rng.gen_range(0..scale)).collect();
    let kinds = (0..n).map(|_| *KINDS.choose(rng).unwrap()).collect();
    (params, outputs, kinds)
}

pub fn random_cluster<R: Rng>(rng: &mut R) -> ClusterSpec {
    ClusterSpec {
        machines: rng.gen_range(1..=4),
        gpus_per_machine: rng.gen_range(1..=4),
        gpu_flops_per_sec: rng.gen_range(1e11..1e13),
        memcopy_bytes_per_sec: rng.gen_range(1e9..2e10),
        link_bytes_per_sec: rng.gen_range(1e8..1e10),
        intra_machine_bytes_per_sec: rng.gen_range(1e10..1e12),
    }
}

/// A valid scenario of one to three jobs on a random cluster.
pub fn random_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let cluster = random_cluster(rng);
    let mut free = cluster.total_gpus();
    let mut requests = Vec::new();
    for j in 0..rng.gen_range(1..=3) {
        if free == 0 {
            break;
        }
        let layers = rng.gen_range(2..12);
        let model = random_model(rng, layers);
        let split = offload_split(&model);
        let (strategy, ps) = match rng.gen_range(0..3) {
            0 if free >= 2 => (Strategy::BaselinePs, rng.gen_range(1..=(free - 1).min(3))),
            1 if free >= 2 && split.is_some() => (
                Strategy::Ralp {
                    split_index: split.unwrap(),
                },
                1,
            ),
            _ => (Strategy::RingAllreduce, 0),
        };
        let workers = rng.gen_range(1..=(free - ps).min(6));
        free -= workers + ps;
        let spec = JobSpec::new(model, strategy, workers, ps).expect("valid job");
        let sharding = if rng.gen_bool(0.5) {
            Sharding::RoundRobin
        } else {
            Sharding::Balanced
        };
        requests.push(JobRequest::new(spec).named(format!("job{j}")).sharding(sharding));
    }
    let policy = if rng.gen_bool(0.5) {
        PlacementPolicy::Spread
    } else {
        PlacementPolicy::Packed
    };
    let steps = rng.gen_range(1..=3);
    Scenario::build(cluster, policy, steps, requests).expect("fits by construction")
}
