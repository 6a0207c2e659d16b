//! Scenarios: a cluster, placed jobs and a step count, plus the text format
//! they are read from.
//!
//! ```text
//! # two jobs on the default cluster
//! cluster default link=7e9
//! steps 10
//! placement spread
//! job vgg11 strategy=baseline workers=8 ps=8
//! job ../models/mine.model strategy=ralp workers=3 split=auto workers_at=0.0,1.0,2.0 ps_at=3.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::costmodel::{offload_split, JobSpec, Strategy};
use crate::model::{parse_model, Catalog, ModelError, ModelGraph};

use super::cluster::{ClusterSpec, Placement, PlacementPolicy, Slot, SlotMap};
use super::plan::Sharding;
use super::SimError;

pub const DEFAULT_STEPS: usize = 10;

/// Scenario files shipped with the crate, by file name.
pub const BUNDLED_SCENARIOS: [(&str, &str); 3] = [
    (
        "vgg11_16gpu_baseline.scn",
        include_str!("../../scenarios/vgg11_16gpu_baseline.scn"),
    ),
    (
        "vgg11_16gpu_ralp.scn",
        include_str!("../../scenarios/vgg11_16gpu_ralp.scn"),
    ),
    ("lenet_3w1ps.scn", include_str!("../../scenarios/lenet_3w1ps.scn")),
];

/// Parses a bundled scenario; `name` may omit the `.scn` extension.
pub fn bundled_scenario(name: &str, catalog: &Catalog) -> Option<Result<Scenario, SimError>> {
    let file = if name.ends_with(".scn") {
        name.to_string()
    } else {
        format!("{name}.scn")
    };
    BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == file)
        .map(|(_, text)| parse_scenario(text, None, catalog))
}

/// A job with its GPU slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimJob {
    pub name: String,
    pub spec: JobSpec,
    pub placement: Placement,
    pub sharding: Sharding,
}

/// A job waiting for placement; `placement: None` defers to the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRequest {
    pub name: String,
    pub spec: JobSpec,
    pub placement: Option<Placement>,
    pub sharding: Sharding,
}

impl JobRequest {
    pub fn new(spec: JobSpec) -> Self {
        JobRequest {
            name: spec.model.name.clone(),
            spec,
            placement: None,
            sharding: Sharding::default(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn at(mut self, placement: Placement) -> Self {
        self.placement = Some(placement);
        self
    }

    pub fn sharding(mut self, sharding: Sharding) -> Self {
        self.sharding = sharding;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub cluster: ClusterSpec,
    pub policy: PlacementPolicy,
    pub steps: usize,
    pub jobs: Vec<SimJob>,
}

impl Scenario {
    /// Claims every explicit placement first, then places the remaining
    /// jobs in order with `policy`.
    pub fn build(
        cluster: ClusterSpec,
        policy: PlacementPolicy,
        steps: usize,
        requests: Vec<JobRequest>,
    ) -> Result<Self, SimError> {
        cluster.validate()?;
        if steps == 0 {
            return Err(SimError::ZeroSteps);
        }
        let mut map = SlotMap::new(&cluster);
        for r in &requests {
            r.spec.validate()?;
            if let Some(p) = &r.placement {
                check_counts(&r.name, &r.spec, p)?;
                map.claim(p.slots())?;
            }
        }
        let mut jobs = Vec::with_capacity(requests.len());
        for r in requests {
            let placement = match r.placement {
                Some(p) => p,
                None => map.place(r.spec.worker_count, r.spec.ps_count, policy)?,
            };
            jobs.push(SimJob {
                name: r.name,
                spec: r.spec,
                placement,
                sharding: r.sharding,
            });
        }
        let scenario = Scenario {
            cluster,
            policy,
            steps,
            jobs,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.cluster.validate()?;
        if self.steps == 0 {
            return Err(SimError::ZeroSteps);
        }
        let mut map = SlotMap::new(&self.cluster);
        for job in &self.jobs {
            job.spec.validate()?;
            check_counts(&job.name, &job.spec, &job.placement)?;
            map.claim(job.placement.slots())?;
        }
        Ok(())
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self, SimError> {
        let s = Scenario {
            steps,
            ..self.clone()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_cluster(&self, cluster: ClusterSpec) -> Result<Self, SimError> {
        let s = Scenario {
            cluster,
            ..self.clone()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path, catalog: &Catalog) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        parse_scenario(&text, path.parent(), catalog)
    }
}

fn check_counts(name: &str, spec: &JobSpec, p: &Placement) -> Result<(), SimError> {
    if p.workers.len() != spec.worker_count || p.ps.len() != spec.ps_count {
        return Err(SimError::PlacementMismatch {
            job: name.to_string(),
            detail: format!(
                "{} worker and {} ps slots for {} workers and {} ps",
                p.workers.len(),
                p.ps.len(),
                spec.worker_count,
                spec.ps_count
            ),
        });
    }
    Ok(())
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let line = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

struct LineCtx {
    line: usize,
}

impl LineCtx {
    fn err(&self, column: usize, message: impl Into<String>) -> SimError {
        SimError::Parse {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn pairs<'a>(&self, toks: &'a [Token<'a>]) -> Result<Vec<(&'a str, &'a str, usize)>, SimError> {
        let mut seen: Vec<&str> = Vec::new();
        let mut out = Vec::new();
        for t in toks {
            let (k, v) = t
                .text
                .split_once('=')
                .ok_or_else(|| self.err(t.column, format!("expected key=value, found `{}`", t.text)))?;
            if seen.contains(&k) {
                return Err(self.err(t.column, format!("duplicate key `{k}`")));
            }
            seen.push(k);
            out.push((k, v, t.column));
        }
        Ok(out)
    }

    fn rate(&self, v: &str, column: usize) -> Result<f64, SimError> {
        match v.parse::<f64>() {
            Ok(x) if x > 0.0 => Ok(x),
            _ => Err(self.err(column, format!("`{v}` is not a positive rate"))),
        }
    }

    fn count(&self, v: &str, column: usize) -> Result<usize, SimError> {
        v.parse::<usize>()
            .map_err(|_| self.err(column, format!("`{v}` is not a non-negative integer")))
    }

    fn slots(&self, v: &str, column: usize) -> Result<Vec<Slot>, SimError> {
        v.split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Slot>().map_err(|e| self.err(column, e)))
            .collect()
    }
}

fn is_path_like(s: &str) -> bool {
    s.contains('/') || s.contains('\\') || s.ends_with(".model")
}

fn load_model(reference: &str, base: Option<&Path>, catalog: &Catalog) -> Result<ModelGraph, SimError> {
    if catalog.contains(reference) || !is_path_like(reference) {
        return Ok(catalog.lookup(reference)?);
    }
    let path: PathBuf = match base {
        Some(b) if Path::new(reference).is_relative() => b.join(reference),
        _ => PathBuf::from(reference),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        SimError::Model(ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })?;
    Ok(parse_model(&text)?)
}

/// Parses scenario text. Model files named in `job` lines resolve relative
/// to `base`.
pub fn parse_scenario(text: &str, base: Option<&Path>, catalog: &Catalog) -> Result<Scenario, SimError> {
    let mut cluster = ClusterSpec::default();
    let mut policy = PlacementPolicy::default();
    let mut steps = DEFAULT_STEPS;
    let mut requests = Vec::new();
    let mut seen_cluster = false;

    for (i, raw) in text.lines().enumerate() {
        let ctx = LineCtx { line: i + 1 };
        let toks = tokens(raw);
        let Some(head) = toks.first() else { continue };
        match head.text {
            "cluster" => {
                if seen_cluster {
                    return Err(ctx.err(head.column, "duplicate cluster line"));
                }
                seen_cluster = true;
                let rest = match toks.get(1) {
                    Some(t) if t.text == "default" => &toks[2..],
                    _ => &toks[1..],
                };
                for (k, v, col) in ctx.pairs(rest)? {
                    match k {
                        "machines" => cluster.machines = ctx.count(v, col)?,
                        "gpus" | "gpus_per_machine" => cluster.gpus_per_machine = ctx.count(v, col)?,
                        "gpu_flops" => cluster.gpu_flops_per_sec = ctx.rate(v, col)?,
                        "memcopy" => cluster.memcopy_bytes_per_sec = ctx.rate(v, col)?,
                        "link" => cluster.link_bytes_per_sec = ctx.rate(v, col)?,
                        "intra" => cluster.intra_machine_bytes_per_sec = ctx.rate(v, col)?,
                        other => return Err(ctx.err(col, format!("unknown cluster key `{other}`"))),
                    }
                }
            }
            "steps" => {
                let t = toks.get(1).ok_or_else(|| ctx.err(head.column, "steps needs a value"))?;
                steps = ctx.count(t.text, t.column)?;
                if steps == 0 {
                    return Err(ctx.err(t.column, "steps must be at least 1"));
                }
                if let Some(extra) = toks.get(2) {
                    return Err(ctx.err(extra.column, "unexpected token"));
                }
            }
            "placement" => {
                let t = toks
                    .get(1)
                    .ok_or_else(|| ctx.err(head.column, "placement needs a policy"))?;
                policy = t.text.parse().map_err(|e: String| ctx.err(t.column, e))?;
            }
            "job" => requests.push(parse_job(&ctx, &toks, base, catalog)?),
            other => {
                return Err(ctx.err(
                    head.column,
                    format!("unknown directive `{other}` (expected cluster, steps, placement or job)"),
                ))
            }
        }
    }
    cluster.validate()?;
    Scenario::build(cluster, policy, steps, requests)
}

fn parse_job(
    ctx: &LineCtx,
    toks: &[Token<'_>],
    base: Option<&Path>,
    catalog: &Catalog,
) -> Result<JobRequest, SimError> {
    let model_tok = toks
        .get(1)
        .ok_or_else(|| ctx.err(toks[0].column, "job needs a model"))?;
    let mut model = load_model(model_tok.text, base, catalog)?;

    let mut strategy = None;
    let mut workers = None;
    let mut ps = None;
    let mut split: Option<(Option<usize>, usize)> = None;
    let mut name = None;
    let mut sharding = Sharding::default();
    let mut workers_at = None;
    let mut ps_at = None;
    for (k, v, col) in ctx.pairs(&toks[2..])? {
        match k {
            "strategy" => {
                strategy = Some(match v {
                    "baseline" | "ps" => "baseline",
                    "ralp" => "ralp",
                    "ring" | "allreduce" => "ring",
                    other => return Err(ctx.err(col, format!("unknown strategy `{other}`"))),
                })
            }
            "workers" => workers = Some(ctx.count(v, col)?),
            "ps" => ps = Some(ctx.count(v, col)?),
            "split" => split = Some((if v == "auto" { None } else { Some(ctx.count(v, col)?) }, col)),
            "batch" => {
                let b = ctx.count(v, col)? as u64;
                model = model.with_batch_size(b).map_err(|e| ctx.err(col, e.to_string()))?;
            }
            "shard" => sharding = v.parse().map_err(|e: String| ctx.err(col, e))?,
            "name" => name = Some(v.to_string()),
            "workers_at" => workers_at = Some(ctx.slots(v, col)?),
            "ps_at" => ps_at = Some(ctx.slots(v, col)?),
            other => return Err(ctx.err(col, format!("unknown job key `{other}`"))),
        }
    }
    let strategy = strategy.ok_or_else(|| ctx.err(model_tok.column, "job needs strategy="))?;
    let workers = workers.ok_or_else(|| ctx.err(model_tok.column, "job needs workers="))?;
    let strategy = match strategy {
        "ralp" => {
            let index = match split {
                Some((Some(i), _)) => i,
                _ => offload_split(&model).ok_or_else(|| SimError::NoOffloadSplit(model.name.clone()))?,
            };
            Strategy::Ralp { split_index: index }
        }
        other => {
            if let Some((_, col)) = split {
                return Err(ctx.err(col, format!("split= only applies to ralp, not {other}")));
            }
            if other == "ring" {
                Strategy::RingAllreduce
            } else {
                Strategy::BaselinePs
            }
        }
    };
    let ps = ps.unwrap_or(match strategy {
        Strategy::RingAllreduce => 0,
        _ => 1,
    });
    let spec = JobSpec::new(model, strategy, workers, ps)?;
    let mut req = JobRequest::new(spec).sharding(sharding);
    if let Some(n) = name {
        req = req.named(n);
    }
    match (workers_at, ps_at) {
        (None, None) => {}
        (w, p) => {
            req = req.at(Placement {
                workers: w.unwrap_or_default(),
                ps: p.unwrap_or_default(),
            })
        }
    }
    Ok(req)
}
