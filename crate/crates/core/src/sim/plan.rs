//! Per-step task graphs for the three aggregation strategies.
//!
//! A plan is built once per job; the engine instantiates it for every step.

use serde::{Deserialize, Serialize};

use crate::costmodel::{Strategy, TRAIN_FLOPS_FACTOR};

use super::cluster::ClusterSpec;
use super::scenario::SimJob;

/// Time category a node is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Category {
    WorkerCompute,
    Memcopy,
    /// PS-side processing: aggregation, offloaded layers, ring reductions.
    PsCompute,
    Transfer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    /// Serial work on one GPU, FIFO with everything else on that GPU.
    Gpu { gpu: usize, seconds: f64 },
    Flow { src: usize, dst: usize, bytes: u64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub op: Op,
    pub category: Category,
    /// Worker whose data this node handles.
    pub owner: usize,
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Plan {
    pub nodes: Vec<Node>,
    pub workers: usize,
}

impl Plan {
    fn add(&mut self, op: Op, category: Category, owner: usize, deps: Vec<usize>) -> usize {
        debug_assert!(deps.iter().all(|&d| d < self.nodes.len()));
        self.nodes.push(Node {
            op,
            category,
            owner,
            deps,
        });
        self.nodes.len() - 1
    }

    /// Bytes of every worker/PS transfer, local or remote.
    pub fn wire_bytes(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| match n.op {
                Op::Flow { bytes, .. } => bytes,
                Op::Gpu { .. } => 0,
            })
            .sum()
    }
}

/// How a baseline job's parameters are spread over its parameter servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharding {
    /// Whole parameterized layers dealt to servers in turn, like the default
    /// variable placement of common PS frameworks.
    #[default]
    RoundRobin,
    /// Bytes split as evenly as possible.
    Balanced,
}

impl std::str::FromStr for Sharding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "round-robin" | "round_robin" | "layer" => Ok(Sharding::RoundRobin),
            "balanced" | "even" => Ok(Sharding::Balanced),
            other => Err(format!("unknown sharding `{other}` (expected round-robin or balanced)")),
        }
    }
}

/// Bytes held by each of `servers` parameter servers.
pub(crate) fn shard_bytes(param_bytes: &[u64], servers: usize, sharding: Sharding) -> Vec<u64> {
    let mut shards = vec![0u64; servers];
    match sharding {
        Sharding::RoundRobin => {
            for (k, &b) in param_bytes.iter().filter(|&&b| b > 0).enumerate() {
                shards[k % servers] += b;
            }
        }
        Sharding::Balanced => {
            let total: u64 = param_bytes.iter().sum();
            let n = servers as u64;
            for (j, s) in shards.iter_mut().enumerate() {
                *s = total / n + u64::from((j as u64) < total % n);
            }
        }
    }
    shards
}

pub(crate) fn build(job: &SimJob, cluster: &ClusterSpec) -> Plan {
    let ctx = Ctx::new(job, cluster);
    match job.spec.strategy {
        Strategy::BaselinePs => ctx.baseline(),
        Strategy::Ralp { split_index } => ctx.ralp(split_index),
        Strategy::RingAllreduce => ctx.ring(),
    }
}

struct Ctx<'a> {
    job: &'a SimJob,
    cluster: &'a ClusterSpec,
    batch: f64,
    elem: f64,
}

impl<'a> Ctx<'a> {
    fn new(job: &'a SimJob, cluster: &'a ClusterSpec) -> Self {
        Ctx {
            job,
            cluster,
            batch: job.spec.model.batch_size as f64,
            elem: job.spec.model.bytes_per_element as f64,
        }
    }

    fn worker_gpu(&self, w: usize) -> usize {
        self.cluster.gpu_index(self.job.placement.workers[w])
    }

    fn ps_gpu(&self, p: usize) -> usize {
        self.cluster.gpu_index(self.job.placement.ps[p])
    }

    fn worker_machine(&self, w: usize) -> usize {
        self.job.placement.workers[w].machine
    }

    fn ps_machine(&self, p: usize) -> usize {
        self.job.placement.ps[p].machine
    }

    fn compute(&self, gpu: usize, flops: f64) -> Op {
        Op::Gpu {
            gpu,
            seconds: flops / self.cluster.gpu_flops_per_sec,
        }
    }

    fn copy(&self, gpu: usize, bytes: u64) -> Op {
        Op::Gpu {
            gpu,
            seconds: bytes as f64 / self.cluster.memcopy_bytes_per_sec,
        }
    }

    /// One add per parameter held in `bytes`.
    fn aggregate(&self, gpu: usize, bytes: u64) -> Op {
        self.compute(gpu, bytes as f64 / self.elem)
    }

    fn model_flops(&self, range: std::ops::Range<usize>) -> f64 {
        self.job.spec.model.forward_flops(range) as f64 * self.batch
    }

    fn baseline(&self) -> Plan {
        use Category::*;
        let model = &self.job.spec.model;
        let workers = self.job.spec.worker_count;
        let servers = self.job.spec.ps_count;
        let total = model.total_param_bytes();
        let shards = shard_bytes(&model.param_bytes(), servers, self.job.sharding);
        let train = TRAIN_FLOPS_FACTOR as f64 * self.model_flops(0..model.num_layers());

        let mut plan = Plan {
            workers,
            ..Plan::default()
        };
        let mut push = vec![Vec::with_capacity(servers); workers];
        for (w, pushes) in push.iter_mut().enumerate() {
            let gpu = self.worker_gpu(w);
            let c = plan.add(self.compute(gpu, train), WorkerCompute, w, vec![]);
            let out = plan.add(self.copy(gpu, total), Memcopy, w, vec![c]);
            for (p, &bytes) in shards.iter().enumerate() {
                let flow = Op::Flow {
                    src: self.worker_machine(w),
                    dst: self.ps_machine(p),
                    bytes,
                };
                pushes.push(plan.add(flow, Transfer, w, vec![out]));
            }
        }
        let mut agg = vec![Vec::with_capacity(workers); servers];
        for (p, aggs) in agg.iter_mut().enumerate() {
            for (w, pushes) in push.iter().enumerate() {
                let op = self.aggregate(self.ps_gpu(p), shards[p]);
                aggs.push(plan.add(op, PsCompute, w, vec![pushes[p]]));
            }
        }
        for w in 0..workers {
            let pulls: Vec<usize> = (0..servers)
                .map(|p| {
                    let flow = Op::Flow {
                        src: self.ps_machine(p),
                        dst: self.worker_machine(w),
                        bytes: shards[p],
                    };
                    plan.add(flow, Transfer, w, agg[p].clone())
                })
                .collect();
            plan.add(self.copy(self.worker_gpu(w), total), Memcopy, w, pulls);
        }
        plan
    }

    fn ralp(&self, split: usize) -> Plan {
        use Category::*;
        let model = &self.job.spec.model;
        let workers = self.job.spec.worker_count;
        let n = model.num_layers();
        let activation = model.output_bytes_at(split).expect("split validated");
        let param_bytes = model.param_bytes();
        let front: u64 = param_bytes[..split].iter().sum();
        let back: u64 = param_bytes[split..].iter().sum();
        let front_fwd = self.model_flops(0..split);
        let back_train = TRAIN_FLOPS_FACTOR as f64 * self.model_flops(split..n);
        let ps_gpu = self.ps_gpu(0);
        let ps_machine = self.ps_machine(0);

        let mut plan = Plan {
            workers,
            ..Plan::default()
        };
        let mut sent = Vec::with_capacity(workers);
        for w in 0..workers {
            let gpu = self.worker_gpu(w);
            let f = plan.add(self.compute(gpu, front_fwd), WorkerCompute, w, vec![]);
            let out = plan.add(self.copy(gpu, activation), Memcopy, w, vec![f]);
            let flow = Op::Flow {
                src: self.worker_machine(w),
                dst: ps_machine,
                bytes: activation,
            };
            sent.push(plan.add(flow, Transfer, w, vec![out]));
        }
        // The PS GPU takes one activation batch at a time, in arrival order,
        // and also folds in that batch's back-segment gradients.
        let back_ops: Vec<usize> = sent
            .iter()
            .enumerate()
            .map(|(w, &s)| {
                let flops = back_train + back as f64 / self.elem;
                plan.add(self.compute(ps_gpu, flops), PsCompute, w, vec![s])
            })
            .collect();
        let mut pushed = Vec::with_capacity(workers);
        for (w, &b) in back_ops.iter().enumerate() {
            let gpu = self.worker_gpu(w);
            let flow = Op::Flow {
                src: ps_machine,
                dst: self.worker_machine(w),
                bytes: activation,
            };
            let g = plan.add(flow, Transfer, w, vec![b]);
            let into = plan.add(self.copy(gpu, activation), Memcopy, w, vec![g]);
            let bwd = plan.add(
                self.compute(gpu, (TRAIN_FLOPS_FACTOR - 1) as f64 * front_fwd),
                WorkerCompute,
                w,
                vec![into],
            );
            let out = plan.add(self.copy(gpu, front), Memcopy, w, vec![bwd]);
            let flow = Op::Flow {
                src: self.worker_machine(w),
                dst: ps_machine,
                bytes: front,
            };
            pushed.push(plan.add(flow, Transfer, w, vec![out]));
        }
        let mut done = back_ops.clone();
        for (w, &p) in pushed.iter().enumerate() {
            done.push(plan.add(self.aggregate(ps_gpu, front), PsCompute, w, vec![p]));
        }
        for w in 0..workers {
            let flow = Op::Flow {
                src: ps_machine,
                dst: self.worker_machine(w),
                bytes: front,
            };
            let pull = plan.add(flow, Transfer, w, done.clone());
            plan.add(self.copy(self.worker_gpu(w), front), Memcopy, w, vec![pull]);
        }
        plan
    }

    fn ring(&self) -> Plan {
        use Category::*;
        let model = &self.job.spec.model;
        let workers = self.job.spec.worker_count;
        let total = model.total_param_bytes();
        let train = TRAIN_FLOPS_FACTOR as f64 * self.model_flops(0..model.num_layers());

        let mut plan = Plan {
            workers,
            ..Plan::default()
        };
        let computed: Vec<usize> = (0..workers)
            .map(|w| plan.add(self.compute(self.worker_gpu(w), train), WorkerCompute, w, vec![]))
            .collect();
        if workers == 1 {
            return plan;
        }
        let copied: Vec<usize> = computed
            .iter()
            .enumerate()
            .map(|(w, &c)| plan.add(self.copy(self.worker_gpu(w), total), Memcopy, w, vec![c]))
            .collect();

        let wn = workers as u64;
        let chunk = |j: usize| total / wn + u64::from((j as u64) < total % wn);
        let rounds = 2 * (workers - 1);
        // ready[r]: node after which worker r may send its next chunk.
        let mut ready = copied.clone();
        let mut last_sent = vec![0usize; workers];
        for k in 0..rounds {
            let scatter = k < workers - 1;
            let sends: Vec<usize> = (0..workers)
                .map(|r| {
                    let j = if scatter {
                        (r + workers - k % workers) % workers
                    } else {
                        (r + 1 + workers - (k - (workers - 1)) % workers) % workers
                    };
                    let flow = Op::Flow {
                        src: self.worker_machine(r),
                        dst: self.worker_machine((r + 1) % workers),
                        bytes: chunk(j),
                    };
                    plan.add(flow, Transfer, r, vec![ready[r]])
                })
                .collect();
            for r in 0..workers {
                let from = (r + workers - 1) % workers;
                ready[r] = if scatter {
                    let j = (from + workers - k % workers) % workers;
                    let op = self.aggregate(self.worker_gpu(r), chunk(j));
                    plan.add(op, PsCompute, r, vec![sends[from]])
                } else {
                    sends[from]
                };
            }
            last_sent = sends;
        }
        for r in 0..workers {
            plan.add(
                self.copy(self.worker_gpu(r), total),
                Memcopy,
                r,
                vec![ready[r], last_sent[r]],
            );
        }
        plan
    }
}
