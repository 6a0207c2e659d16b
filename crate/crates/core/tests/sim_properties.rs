mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ralp_core::costmodel::volumes_for;
use ralp_core::model::{Hyperparams, Shape};
use ralp_core::sim::{
    simulate_consolidation, simulate_run, simulate_step, ClusterSpec, JobRequest, Placement,
    PlacementPolicy, Scenario, SimReport, Slot, SlotMap,
};
use ralp_core::{Catalog, JobSpec, ModelGraph, Strategy};

fn scenario(seed: u64) -> Scenario {
    common::random_scenario(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn single(cluster: ClusterSpec, spec: JobSpec, placement: Option<Placement>) -> Scenario {
    let mut req = JobRequest::new(spec);
    if let Some(p) = placement {
        req = req.at(p);
    }
    Scenario::build(cluster, PlacementPolicy::Spread, 2, vec![req]).unwrap()
}

fn check_conservation(s: &Scenario, r: &SimReport) -> Result<(), TestCaseError> {
    for (job, jr) in s.jobs.iter().zip(&r.jobs) {
        let v = volumes_for(&job.spec.model, job.spec.strategy, job.spec.worker_count).unwrap();
        prop_assert_eq!(jr.bytes_on_wire_per_step, v.total_bytes_per_step);
        prop_assert_eq!(jr.steps.len(), s.steps);
        for step in &jr.steps {
            prop_assert!(step.max_step_time >= step.avg_step_time);
            for w in &step.workers {
                prop_assert_eq!(w.category_sum(), w.step_time);
                prop_assert!(w.worker_computation >= 0.0 && w.memcopy >= 0.0);
                prop_assert!(w.ps_computation >= 0.0 && w.communication >= 0.0);
            }
        }
        let images = (job.spec.worker_count as u64 * job.spec.model.batch_size) as f64;
        prop_assert_eq!(jr.images_per_sec, images / jr.avg_step_time);
    }
    Ok(())
}

/// Compute-heavy front blocks followed by fully connected layers holding
/// most of the parameters, with a small activation at the cut.
fn skewed_model(rng: &mut ChaCha8Rng) -> Option<(ModelGraph, usize)> {
    let front = rng.gen_range(1..8);
    let mut layers: Vec<(String, Hyperparams)> = (0..front)
        .map(|i| {
            (
                format!("b{i}"),
                Hyperparams::Block {
                    params: rng.gen_range(0..2_000_000),
                    out: Shape::Flat(rng.gen_range(100..100_000)),
                    flops: rng.gen_range(1_000_000..2_000_000_000),
                },
            )
        })
        .collect();
    for i in 0..rng.gen_range(1..4) {
        layers.push((
            format!("fc{i}"),
            Hyperparams::FullyConnected {
                inputs: 0,
                outputs: rng.gen_range(10..5000),
            },
        ));
    }
    let g = ModelGraph::from_layers("skewed", Shape::Flat(1000), rng.gen_range(1..128), 4, layers).ok()?;
    let back: u64 = g.param_bytes()[front..].iter().sum();
    let cut = g.output_bytes_at(front)?;
    (2 * back > g.total_param_bytes() && cut < back).then_some((g, front))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn categories_and_wire_bytes_are_conserved(seed in any::<u64>()) {
        let s = scenario(seed);
        let r = simulate_run(&s).unwrap();
        check_conservation(&s, &r)?;
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let s = scenario(seed);
        let a = simulate_run(&s).unwrap();
        let b = simulate_run(&s).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    // Restricted to one job: with several jobs, slowing every flow also
    // shifts how their steps line up, and a job can occasionally meet less
    // contention than before.
    #[test]
    fn slower_links_never_speed_up_a_lone_job(seed in any::<u64>(), factor in 0.01f64..1.0) {
        let mut s = scenario(seed);
        s.jobs.truncate(1);
        let fast = simulate_run(&s).unwrap();
        let mut slow_cluster = s.cluster;
        slow_cluster.link_bytes_per_sec *= factor;
        let slow = simulate_run(&s.with_cluster(slow_cluster).unwrap()).unwrap();
        prop_assert!(slow.jobs[0].avg_step_time >= fast.jobs[0].avg_step_time);
        for (a, b) in fast.jobs[0].steps.iter().zip(&slow.jobs[0].steps) {
            prop_assert!(b.max_step_time >= a.max_step_time);
        }
    }

    #[test]
    fn ralp_beats_baseline_on_skewed_models(seed in any::<u64>(), workers in 1usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Some((g, split)) = skewed_model(&mut rng) else { return Ok(()) };
        let cluster = ClusterSpec::default();
        let placement = SlotMap::new(&cluster).place(workers, 1, PlacementPolicy::Spread).unwrap();
        let base = JobSpec::new(g.clone(), Strategy::BaselinePs, workers, 1).unwrap();
        let ralp = JobSpec::new(g, Strategy::Ralp { split_index: split }, workers, 1).unwrap();
        let tb = simulate_run(&single(cluster, base, Some(placement.clone()))).unwrap().jobs[0].avg_step_time;
        let tr = simulate_run(&single(cluster, ralp, Some(placement))).unwrap().jobs[0].avg_step_time;
        prop_assert!(tr <= tb, "ralp {} > baseline {}", tr, tb);
    }
}

fn lone_fc(batch: u64, params_out: u64) -> ModelGraph {
    ModelGraph::from_layers(
        "fc",
        Shape::Flat(1000),
        batch,
        4,
        vec![(
            "fc".into(),
            Hyperparams::FullyConnected {
                inputs: 0,
                outputs: params_out,
            },
        )],
    )
    .unwrap()
}

#[test]
fn infinite_network_leaves_no_communication() {
    let cluster = ClusterSpec {
        link_bytes_per_sec: f64::INFINITY,
        intra_machine_bytes_per_sec: f64::INFINITY,
        ..ClusterSpec::default()
    };
    let vgg = Catalog::bundled().lookup("vgg11").unwrap();
    for (strategy, ps) in [
        (Strategy::BaselinePs, 1),
        (Strategy::RingAllreduce, 0),
        (Strategy::Ralp { split_index: 13 }, 1),
    ] {
        let spec = JobSpec::new(vgg.clone(), strategy, 4, ps).unwrap();
        for step in simulate_step(&single(cluster, spec, None)).unwrap() {
            for w in &step.workers {
                // RALP workers served early by the PS idle at the barrier
                // until the last-served one (highest index) catches up; that
                // wait stays in communication.
                if matches!(strategy, Strategy::Ralp { .. }) && w.worker != step.workers.len() - 1 {
                    continue;
                }
                assert_eq!(w.communication, 0.0, "{strategy}: {w:?}");
                assert_eq!(w.step_time, w.worker_computation + w.memcopy + w.ps_computation);
            }
        }
    }
}

#[test]
fn lone_worker_compute_time_is_flops_over_rate() {
    let cluster = ClusterSpec::default();
    let g = Catalog::bundled().lookup("alexnet").unwrap();
    let flops = 3.0 * (g.forward_flops(0..g.num_layers()) * g.batch_size) as f64;
    let spec = JobSpec::new(g, Strategy::RingAllreduce, 1, 0).unwrap();
    let steps = simulate_step(&single(cluster, spec, None)).unwrap();
    let w = steps[0].workers[0];
    assert_eq!(w.worker_computation, flops / cluster.gpu_flops_per_sec);
    assert_eq!(w.step_time, w.worker_computation);
    assert_eq!(w.communication + w.memcopy + w.ps_computation, 0.0);
}

#[test]
fn two_jobs_on_one_link_finish_together() {
    // Compute, copies and aggregation are free, so only the push and pull
    // over the shared machine 0 -> machine 1 links remain.
    let cluster = ClusterSpec {
        machines: 2,
        gpus_per_machine: 2,
        gpu_flops_per_sec: f64::INFINITY,
        memcopy_bytes_per_sec: f64::INFINITY,
        link_bytes_per_sec: 1.0e9,
        intra_machine_bytes_per_sec: f64::INFINITY,
    };
    let g = lone_fc(1, 2_000);
    let bytes = g.total_param_bytes() as f64;
    let req = |gpu| {
        JobRequest::new(JobSpec::new(g.clone(), Strategy::BaselinePs, 1, 1).unwrap()).at(Placement {
            workers: vec![Slot::new(0, gpu)],
            ps: vec![Slot::new(1, gpu)],
        })
    };
    let s = Scenario::build(cluster, PlacementPolicy::Spread, 1, vec![req(0), req(1)]).unwrap();
    let steps = simulate_step(&s).unwrap();
    // Push and pull each take 2B/L under the equal split.
    let expected = 2.0 * (2.0 * bytes / cluster.link_bytes_per_sec);
    for step in steps {
        assert!((step.max_step_time - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn single_copy_consolidation_is_exactly_one() {
    let g = Catalog::bundled().lookup("lenet").unwrap();
    let spec = JobSpec::new(g, Strategy::BaselinePs, 3, 1).unwrap();
    let r = simulate_consolidation(&single(ClusterSpec::default(), spec, None), 1).unwrap();
    assert_eq!(r.entries.len(), 1);
    assert_eq!(r.entries[0].slowdown, 1.0);
}

#[test]
fn link_bound_copies_slow_down_by_their_count() {
    for k in [2usize, 3, 5] {
        let cluster = ClusterSpec {
            machines: 2,
            gpus_per_machine: k,
            gpu_flops_per_sec: f64::INFINITY,
            memcopy_bytes_per_sec: f64::INFINITY,
            link_bytes_per_sec: 1.0e9,
            intra_machine_bytes_per_sec: f64::INFINITY,
        };
        let spec = JobSpec::new(lone_fc(1, 50_000), Strategy::BaselinePs, 1, 1).unwrap();
        let base = single(
            cluster,
            spec,
            Some(Placement {
                workers: vec![Slot::new(0, 0)],
                ps: vec![Slot::new(1, 0)],
            }),
        );
        let r = simulate_consolidation(&base, k).unwrap();
        assert_eq!(r.entries.len(), k);
        for e in &r.entries {
            assert!((e.slowdown - k as f64).abs() < 1e-9, "k={k}: {e:?}");
        }
    }
}

#[test]
fn consolidation_rejects_overflow() {
    let g = Catalog::bundled().lookup("lenet").unwrap();
    let spec = JobSpec::new(g, Strategy::BaselinePs, 3, 1).unwrap();
    let err = simulate_consolidation(&single(ClusterSpec::default(), spec, None), 9).unwrap_err();
    assert!(err.is_capacity(), "{err}");
}

#[test]
fn ralp_moves_fewer_bytes_than_baseline() {
    let g = Catalog::bundled().lookup("vgg11").unwrap();
    let cluster = ClusterSpec::default();
    let base = JobSpec::new(g.clone(), Strategy::BaselinePs, 8, 8).unwrap();
    let ralp = JobSpec::new(g.clone(), Strategy::Ralp { split_index: 13 }, 8, 1).unwrap();
    let b = simulate_run(&single(cluster, base, None)).unwrap();
    let r = simulate_run(&single(cluster, ralp, None)).unwrap();
    let expected = ralp_core::volume_ralp(&g, 13, 8).unwrap().total_bytes_per_step;
    assert_eq!(r.jobs[0].bytes_on_wire_per_step, expected);
    assert!(r.jobs[0].bytes_on_wire_per_step < b.jobs[0].bytes_on_wire_per_step);
}

#[test]
fn reports_serialize() {
    let s = scenario(11);
    let r = simulate_run(&s).unwrap();
    let back: SimReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
    let csv = r.timeline_csv();
    let rows = csv.lines().count() - 1;
    let expected: usize = r.jobs.iter().map(|j| j.steps.len() * j.worker_count).sum();
    assert_eq!(rows, expected);
}
