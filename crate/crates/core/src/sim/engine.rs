//! Single-threaded discrete-event loop.
//!
//! GPUs run one node at a time in FIFO order. Flows share machine links by
//! max-min fair share, recomputed whenever the set of active flows changes.
//! Simultaneous events are handled in (job, worker, node) order, which makes
//! every run reproducible.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::cluster::ClusterSpec;
use super::network::{max_min_rates, Links};
use super::plan::{Op, Plan};
use super::SimError;

/// Start and end time of every node of one job step.
pub(crate) struct StepTrace<'a> {
    pub job: usize,
    pub step: usize,
    pub start: f64,
    pub timing: &'a [(f64, f64)],
}

type Key = (usize, usize, usize);

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    key: Key,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap yields the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.key.cmp(&self.key))
    }
}

struct JobState<'a> {
    plan: &'a Plan,
    dependents: Vec<Vec<usize>>,
    roots: Vec<usize>,
    deps_left: Vec<usize>,
    timing: Vec<(f64, f64)>,
    left: usize,
    step: usize,
    start: f64,
}

impl<'a> JobState<'a> {
    fn new(plan: &'a Plan) -> Self {
        let mut dependents = vec![Vec::new(); plan.nodes.len()];
        for (i, node) in plan.nodes.iter().enumerate() {
            for &d in &node.deps {
                dependents[d].push(i);
            }
        }
        let roots = (0..plan.nodes.len())
            .filter(|&i| plan.nodes[i].deps.is_empty())
            .collect();
        JobState {
            plan,
            dependents,
            roots,
            deps_left: Vec::new(),
            timing: Vec::new(),
            left: 0,
            step: 0,
            start: 0.0,
        }
    }

    fn reset(&mut self, now: f64) {
        self.deps_left = self.plan.nodes.iter().map(|n| n.deps.len()).collect();
        self.timing = vec![(now, now); self.plan.nodes.len()];
        self.left = self.plan.nodes.len();
        self.start = now;
    }

    fn key(&self, job: usize, node: usize) -> Key {
        (job, self.plan.nodes[node].owner, node)
    }
}

struct Flow {
    key: Key,
    remaining: f64,
    path: Vec<usize>,
    rate: f64,
}

fn link_path(src: usize, dst: usize) -> Vec<usize> {
    if src == dst {
        vec![3 * src + 2]
    } else {
        vec![3 * src, 3 * dst + 1]
    }
}

/// Runs `steps` synchronous steps of every plan and reports each finished
/// step through `on_step`, in completion order.
pub(crate) fn run(
    cluster: &ClusterSpec,
    plans: &[Plan],
    steps: usize,
    mut on_step: impl FnMut(StepTrace<'_>),
) -> Result<(), SimError> {
    cluster.validate()?;
    if steps == 0 {
        return Err(SimError::ZeroSteps);
    }
    let mut capacity = Vec::with_capacity(3 * cluster.machines);
    for _ in 0..cluster.machines {
        capacity.push(cluster.link_bytes_per_sec);
        capacity.push(cluster.link_bytes_per_sec);
        capacity.push(cluster.intra_machine_bytes_per_sec);
    }
    let links = Links { capacity };

    let mut jobs: Vec<JobState> = plans.iter().map(JobState::new).collect();
    let mut gpu_busy = vec![false; cluster.total_gpus()];
    let mut gpu_queue: Vec<VecDeque<Key>> = vec![VecDeque::new(); cluster.total_gpus()];
    let mut heap: BinaryHeap<Event> = BinaryHeap::new();
    let mut flows: Vec<Flow> = Vec::new();
    let mut flows_dirty = false;
    let mut ready: Vec<Key> = Vec::new();
    let mut now = 0.0f64;
    let mut unfinished = 0usize;

    for (j, job) in jobs.iter_mut().enumerate() {
        job.reset(0.0);
        if job.left == 0 {
            // An empty plan has nothing to wait for.
            for step in 0..steps {
                on_step(StepTrace {
                    job: j,
                    step,
                    start: 0.0,
                    timing: &[],
                });
            }
            continue;
        }
        unfinished += 1;
        for &r in &job.roots {
            ready.push(job.key(j, r));
        }
    }

    while unfinished > 0 {
        ready.sort_unstable();
        for key in ready.drain(..) {
            let (j, _, n) = key;
            jobs[j].timing[n].0 = now;
            match jobs[j].plan.nodes[n].op {
                Op::Gpu { gpu, .. } => gpu_queue[gpu].push_back(key),
                Op::Flow { src, dst, bytes } => {
                    let path = link_path(src, dst);
                    let bounded = path.iter().any(|&l| links.capacity[l].is_finite());
                    if bytes == 0 || !bounded {
                        heap.push(Event { time: now, key });
                    } else {
                        flows.push(Flow {
                            key,
                            remaining: bytes as f64,
                            path,
                            rate: 0.0,
                        });
                        flows_dirty = true;
                    }
                }
            }
        }

        for g in 0..gpu_busy.len() {
            if gpu_busy[g] {
                continue;
            }
            if let Some(key) = gpu_queue[g].pop_front() {
                let (j, _, n) = key;
                let Op::Gpu { seconds, .. } = jobs[j].plan.nodes[n].op else {
                    unreachable!("only gpu nodes are queued")
                };
                jobs[j].timing[n].0 = now;
                gpu_busy[g] = true;
                heap.push(Event {
                    time: now + seconds,
                    key,
                });
            }
        }

        if flows_dirty {
            let paths: Vec<&[usize]> = flows.iter().map(|f| f.path.as_slice()).collect();
            let rates = max_min_rates(&links, &paths);
            for (f, r) in flows.iter_mut().zip(rates) {
                f.rate = r;
            }
            flows_dirty = false;
        }

        let flow_next = flows
            .iter()
            .map(|f| now + f.remaining / f.rate)
            .min_by(f64::total_cmp);
        let heap_next = heap.peek().map(|e| e.time);
        let next = match (flow_next, heap_next) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(SimError::Stalled { time: now }),
        };
        if !next.is_finite() {
            return Err(SimError::Stalled { time: now });
        }

        let dt = next - now;
        let mut done: Vec<Key> = Vec::new();
        flows.retain_mut(|f| {
            if now + f.remaining / f.rate <= next {
                done.push(f.key);
                false
            } else {
                f.remaining = (f.remaining - f.rate * dt).max(0.0);
                true
            }
        });
        if !done.is_empty() {
            flows_dirty = true;
        }
        while heap.peek().is_some_and(|e| e.time <= next) {
            let key = heap.pop().expect("peeked").key;
            let (j, _, n) = key;
            if let Op::Gpu { gpu, .. } = jobs[j].plan.nodes[n].op {
                gpu_busy[gpu] = false;
            }
            done.push(key);
        }
        now = next;

        done.sort_unstable();
        for (j, _, n) in done {
            let job = &mut jobs[j];
            job.timing[n].1 = now;
            job.left -= 1;
            for i in 0..job.dependents[n].len() {
                let d = job.dependents[n][i];
                job.deps_left[d] -= 1;
                if job.deps_left[d] == 0 {
                    ready.push(job.key(j, d));
                }
            }
        }

        for (j, job) in jobs.iter_mut().enumerate() {
            if job.left > 0 || job.step >= steps {
                continue;
            }
            on_step(StepTrace {
                job: j,
                step: job.step,
                start: job.start,
                timing: &job.timing,
            });
            job.step += 1;
            if job.step == steps {
                unfinished -= 1;
                continue;
            }
            job.reset(now);
            for &r in &job.roots {
                ready.push(job.key(j, r));
            }
        }
    }
    Ok(())
}
