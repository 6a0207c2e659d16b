//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ralp_core::model::{Hyperparams, Shape};
use ralp_core::sim::{ClusterSpec, JobRequest, PlacementPolicy, Scenario};
use ralp_core::{Catalog, JobSpec, ModelGraph, Strategy};

/// A chain of `layers` composite blocks followed by two FC layers.
pub fn synthetic_chain(layers: usize, seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec: Vec<(String, Hyperparams)> = (0..layers)
        .map(|i| {
            (
                format!("b{i}"),
                Hyperparams::Block {
                    params: rng.gen_range(0..2_000_000),
                    out: Shape::Flat(rng.gen_range(1_000..200_000)),
                    flops: rng.gen_range(1_000_000..1_000_000_000),
                },
            )
        })
        .collect();
    spec.push(("fc1".into(), Hyperparams::FullyConnected { inputs: 0, outputs: 4096 }));
    spec.push(("fc2".into(), Hyperparams::FullyConnected { inputs: 0, outputs: 1000 }));
    ModelGraph::from_layers("synthetic", Shape::Flat(4096), 64, 4, spec).expect("valid chain")
}

/// Raw per-layer inputs for the split search.
pub fn split_inputs(model: &ModelGraph) -> (Vec<u64>, Vec<u64>, Vec<ralp_core::LayerKind>) {
    (model.param_bytes(), model.output_bytes(), model.kinds())
}

/// One catalog job on the default cluster.
pub fn single_job(model: &str, strategy: Strategy, workers: usize, ps: usize, steps: usize) -> Scenario {
    let g = Catalog::bundled().lookup(model).expect("catalog model");
    let spec = JobSpec::new(g, strategy, workers, ps).expect("valid job");
    Scenario::build(
        ClusterSpec::default(),
        PlacementPolicy::Spread,
        steps,
        vec![JobRequest::new(spec)],
    )
    .expect("fits the default cluster")
}
