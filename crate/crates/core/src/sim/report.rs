//! Step breakdowns and run reports.

use serde::{Deserialize, Serialize};

use super::plan::{Category, Op, Plan};

/// Time one worker spent in each category during one step.
///
/// At every instant a worker is charged to its own compute, else its own
/// memcopy, else PS-side processing of the job, else communication
/// (transfers and waiting on them). `step_time` equals
/// `worker_computation + memcopy + ps_computation + communication`,
/// summed in that order, exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerBreakdown {
    pub worker: usize,
    pub worker_computation: f64,
    pub ps_computation: f64,
    pub memcopy: f64,
    pub communication: f64,
    pub step_time: f64,
}

impl WorkerBreakdown {
    pub fn category_sum(&self) -> f64 {
        self.worker_computation + self.memcopy + self.ps_computation + self.communication
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBreakdown {
    pub step: usize,
    /// Simulation time at which the step began.
    pub start: f64,
    pub workers: Vec<WorkerBreakdown>,
    /// Mean worker step time.
    pub avg_step_time: f64,
    /// Slowest worker: the job's step time.
    pub max_step_time: f64,
}

/// Results for one job over all simulated steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub name: String,
    pub model: String,
    pub strategy: String,
    pub split_index: Option<usize>,
    pub worker_count: usize,
    pub ps_count: usize,
    pub batch_size: u64,
    pub steps: Vec<StepBreakdown>,
    /// Mean over steps of the job step time.
    pub avg_step_time: f64,
    pub images_per_sec: f64,
    pub bytes_on_wire_per_step: u64,
    /// Communication share of all worker-step time.
    pub comm_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub jobs: Vec<JobReport>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const TIMELINE_HEADER: &'static str =
        "job,step,worker,start,step_time,worker_computation,memcopy,ps_computation,communication";

    /// One row per job, step and worker.
    pub fn timeline_csv(&self) -> String {
        let mut out = String::from(Self::TIMELINE_HEADER);
        out.push('\n');
        for job in &self.jobs {
            for step in &job.steps {
                for w in &step.workers {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        job.name,
                        step.step,
                        w.worker,
                        step.start,
                        w.step_time,
                        w.worker_computation,
                        w.memcopy,
                        w.ps_computation,
                        w.communication
                    ));
                }
            }
        }
        out
    }
}

/// Per-job slowdown of a consolidated run against each job's isolated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationEntry {
    pub name: String,
    pub copy: usize,
    pub isolated_step_time: f64,
    pub consolidated_step_time: f64,
    pub slowdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub copies: usize,
    pub entries: Vec<ConsolidationEntry>,
    pub consolidated: SimReport,
}

impl ConsolidationReport {
    pub fn mean_slowdown(&self) -> f64 {
        self.entries.iter().map(|e| e.slowdown).sum::<f64>() / self.entries.len().max(1) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

type Interval = (f64, f64);

fn merge(mut v: Vec<Interval>) -> Vec<Interval> {
    v.retain(|i| i.1 > i.0);
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for i in v {
        match out.last_mut() {
            Some(last) if i.0 <= last.1 => last.1 = last.1.max(i.1),
            _ => out.push(i),
        }
    }
    out
}

/// Length of `a` not covered by `b`; both merged and sorted.
fn measure_minus(a: &[Interval], b: &[Interval]) -> f64 {
    let mut total = 0.0;
    for &(s, e) in a {
        let mut covered = 0.0;
        for &(bs, be) in b {
            let lo = bs.max(s);
            let hi = be.min(e);
            if hi > lo {
                covered += hi - lo;
            }
        }
        total += ((e - s) - covered).max(0.0);
    }
    total
}

/// Splits a measured span `d` so the four categories add up to it exactly.
/// Returns `(ps, communication, d)`; `d` only moves if rounding leaves no
/// non-negative communication value that closes the sum.
fn close(d: f64, wc: f64, mc: f64, ps: f64) -> (f64, f64, f64) {
    let ps = ps.min((d - wc - mc).max(0.0)).max(0.0);
    let base = wc + mc + ps;
    let mut comm = (d - base).max(0.0);
    for _ in 0..8 {
        let sum = base + comm;
        if sum == d {
            return (ps, comm, d);
        }
        comm = (comm + (d - sum)).max(0.0);
    }
    (ps, comm, base + comm)
}

pub(crate) fn breakdown(plan: &Plan, step: usize, start: f64, timing: &[(f64, f64)]) -> StepBreakdown {
    let ps_busy = merge(
        plan.nodes
            .iter()
            .zip(timing)
            .filter(|(n, _)| n.category == Category::PsCompute)
            .map(|(_, &t)| t)
            .collect(),
    );
    let mut workers = Vec::with_capacity(plan.workers);
    for w in 0..plan.workers {
        let mut end = start;
        let (mut wc, mut mc) = (0.0, 0.0);
        let mut own = Vec::new();
        for (node, &t) in plan.nodes.iter().zip(timing) {
            if node.owner != w {
                continue;
            }
            end = end.max(t.1);
            if let Op::Gpu { seconds, .. } = node.op {
                match node.category {
                    Category::WorkerCompute => wc += seconds,
                    Category::Memcopy => mc += seconds,
                    _ => continue,
                }
                own.push(t);
            }
        }
        let own = merge(own);
        let window: Vec<Interval> = ps_busy
            .iter()
            .map(|&(s, e)| (s.max(start), e.min(end)))
            .filter(|i| i.1 > i.0)
            .collect();
        let ps = measure_minus(&window, &own);
        let (ps, comm, d) = close(end - start, wc, mc, ps);
        workers.push(WorkerBreakdown {
            worker: w,
            worker_computation: wc,
            ps_computation: ps,
            memcopy: mc,
            communication: comm,
            step_time: d,
        });
    }
    let max_step_time = workers.iter().map(|w| w.step_time).fold(0.0, f64::max);
    let avg_step_time = if workers.is_empty() {
        0.0
    } else {
        (workers.iter().map(|w| w.step_time).sum::<f64>() / workers.len() as f64).min(max_step_time)
    };
    StepBreakdown {
        step,
        start,
        workers,
        avg_step_time,
        max_step_time,
    }
}
