use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ralp_core::costmodel::{compare_strategies, offload_split, VolumeRow};
use ralp_core::model::BENCHMARKS;
use ralp_core::profiler::split_costs;
use ralp_core::units::{format_gib, gib};
use ralp_core::{
    parse_model, profile, volume_ralp, volume_ring, Catalog, ModelError, ModelGraph, ProfilerConfig,
};
use serde::Serialize;

use crate::args::{CatalogArgs, Format, ModelArg, ProfileArgs, SplitArgs, VolumesArgs};
use crate::exit::UsageError;

pub const CATALOG_DIR_VAR: &str = "RALP_CATALOG_DIR";

pub fn load_catalog() -> Result<Catalog> {
    match env::var_os(CATALOG_DIR_VAR) {
        Some(dir) => {
            let dir = Path::new(&dir);
            let cat = Catalog::from_dir(dir)
                .with_context(|| format!("loading catalog from {}", dir.display()))?;
            log::info!("catalog: {} models from {}", cat.names().len(), dir.display());
            Ok(cat)
        }
        None => Ok(Catalog::bundled()),
    }
}

fn is_path_like(s: &str) -> bool {
    s.contains('/') || s.contains('\\') || s.ends_with(".model")
}

/// Resolves a catalog name or descriptor path. Catalog names win unless a
/// file by that name exists.
pub fn load_model(reference: &str, catalog: &Catalog) -> Result<ModelGraph> {
    let path = Path::new(reference);
    let from_file = path.is_file() || (is_path_like(reference) && !catalog.contains(reference));
    let model = if from_file {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: reference.to_string(),
            message: e.to_string(),
        })?;
        parse_model(&text).with_context(|| format!("parsing {reference}"))?
    } else {
        catalog.lookup(reference)?
    };
    Ok(model)
}

fn load_with_batch(arg: &ModelArg, catalog: &Catalog) -> Result<ModelGraph> {
    let model = load_model(&arg.model, catalog)?;
    match arg.batch {
        Some(0) => Err(UsageError("--batch must be at least 1".into()).into()),
        Some(b) => Ok(model.with_batch_size(b)?),
        None => Ok(model),
    }
}

pub fn run_profile(args: &ProfileArgs) -> Result<String> {
    let catalog = load_catalog()?;
    let model = load_with_batch(&args.model, &catalog)?;
    let config = ProfilerConfig {
        threshold_k: args.threshold,
        skewness_mode: args.mode,
    };
    for w in config.warnings() {
        log::warn!("{w}");
    }
    let report = profile(&model, &config)?;
    Ok(report.to_json())
}

#[derive(Serialize)]
struct Candidate {
    index: usize,
    layer: String,
    kind: &'static str,
    cost_bytes: Option<u64>,
}

#[derive(Serialize)]
struct SplitReport {
    model: String,
    batch_size: u64,
    split_index: Option<usize>,
    split_layer: Option<String>,
    cost_bytes: Option<u64>,
    front_param_bytes: Option<u64>,
    back_param_bytes: Option<u64>,
    /// False when the cheapest boundary is after the last layer.
    offloads: bool,
    candidates: Vec<Candidate>,
}

pub fn run_split(args: &SplitArgs) -> Result<String> {
    let catalog = load_catalog()?;
    let model = load_with_batch(&args.model, &catalog)?;
    let params = model.param_bytes();
    let costs = split_costs(&params, &model.output_bytes(), &model.kinds())?;
    let best = costs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (c, i + 1)))
        .min();
    let candidates: Vec<Candidate> = model
        .layers
        .iter()
        .zip(&costs)
        .enumerate()
        .map(|(i, (l, c))| Candidate {
            index: i + 1,
            layer: l.name.clone(),
            kind: l.kind.token(),
            cost_bytes: *c,
        })
        .collect();
    let front = best.map(|(_, i)| params[..i].iter().sum::<u64>());
    let report = SplitReport {
        model: model.name.clone(),
        batch_size: model.batch_size,
        split_index: best.map(|b| b.1),
        split_layer: best.map(|(_, i)| model.layers[i - 1].name.clone()),
        cost_bytes: best.map(|b| b.0),
        front_param_bytes: front,
        back_param_bytes: front.map(|f| model.total_param_bytes() - f),
        offloads: offload_split(&model).is_some(),
        candidates,
    };
    match args.format {
        Format::Json => Ok(serde_json::to_string_pretty(&report)?),
        Format::Csv => {
            let mut out = String::from("index,layer,kind,cost_bytes\n");
            for c in &report.candidates {
                let cost = c.cost_bytes.map(|v| v.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{cost}", c.index, c.layer, c.kind)?;
            }
            Ok(out.trim_end().to_string())
        }
        Format::Table => {
            let mut out = format!("{} (batch {})\n", report.model, report.batch_size);
            for c in &report.candidates {
                let mark = if Some(c.index) == report.split_index { "*" } else { " " };
                let cost = match c.cost_bytes {
                    Some(v) => format_gib(v),
                    None => "-".into(),
                };
                writeln!(out, "{mark} {:>3} {:<24} {:<6} {cost:>12}", c.index, c.layer, c.kind)?;
            }
            match (report.split_index, &report.split_layer) {
                (Some(i), Some(name)) if report.offloads => {
                    write!(out, "split after layer {i} ({name}); layers {} and on go to the PS", i + 1)?
                }
                _ => write!(out, "no layer to offload; train on the standard PS architecture")?,
            }
            Ok(out)
        }
    }
}

fn volume_table(rows: &[VolumeRow]) -> Result<String> {
    let mut out = format!(
        "{:<14} {:<9} {:>4} {:>5} {:>6} {:>12} {:>12} {:>12}\n",
        "model", "strategy", "W", "GPUs", "split", "total", "params", "activations"
    );
    for r in rows {
        let split = r.split_index.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:<14} {:<9} {:>4} {:>5} {:>6} {:>12} {:>12} {:>12}",
            r.model,
            r.strategy,
            r.workers,
            r.gpus,
            split,
            format_gib(r.volumes.total_bytes_per_step),
            format_gib(r.volumes.parameter_sync_bytes),
            format_gib(r.volumes.activation_bytes)
        )?;
        if let Some(note) = &r.note {
            writeln!(out, "  note: {note}")?;
        }
    }
    Ok(out.trim_end().to_string())
}

#[derive(Serialize)]
struct ReferenceRow {
    model: String,
    workers: usize,
    model_bytes: u64,
    ring_bytes: u64,
    ralp_bytes: u64,
    model_gib: f64,
    ring_gib: f64,
    ralp_gib: f64,
}

const REFERENCE_MODELS: [&str; 3] = ["alexnet", "inception-v3", "vgg11"];

fn reference_table(catalog: &Catalog, format: Format) -> Result<String> {
    let w = 8;
    let mut rows = Vec::new();
    for name in REFERENCE_MODELS {
        let m = catalog.lookup(name)?;
        let split = offload_split(&m).with_context(|| format!("{name} has no offloadable split"))?;
        let ring = volume_ring(&m, w)?.total_bytes_per_step;
        let ralp = volume_ralp(&m, split, w)?.total_bytes_per_step;
        rows.push(ReferenceRow {
            model: m.name.clone(),
            workers: w,
            model_bytes: m.total_param_bytes(),
            ring_bytes: ring,
            ralp_bytes: ralp,
            model_gib: gib(m.total_param_bytes()),
            ring_gib: gib(ring),
            ralp_gib: gib(ralp),
        });
    }
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(&rows)?,
        Format::Csv => {
            let mut out = String::from("model,W,model_bytes,ring_bytes,ralp_bytes");
            for r in &rows {
                write!(out, "\n{},{},{},{},{}", r.model, r.workers, r.model_bytes, r.ring_bytes, r.ralp_bytes)?;
            }
            out
        }
        Format::Table => {
            let mut out = format!("{:<14} {:>12} {:>12} {:>12}", "model", "model size", "ring (W=8)", "ralp (W=8)");
            for r in &rows {
                write!(
                    out,
                    "\n{:<14} {:>12} {:>12} {:>12}",
                    r.model,
                    format_gib(r.model_bytes),
                    format_gib(r.ring_bytes),
                    format_gib(r.ralp_bytes)
                )?;
            }
            out
        }
    })
}

pub fn run_volumes(args: &VolumesArgs) -> Result<String> {
    let catalog = load_catalog()?;
    if args.reproduce_table3 {
        return reference_table(&catalog, args.format);
    }
    if let Some(&w) = args.workers.iter().find(|&&w| w == 0) {
        return Err(UsageError(format!("--workers entries must be at least 1, got {w}")).into());
    }
    let kinds = args.strategy_kinds();
    let mut rows = Vec::new();
    for name in &args.models {
        let arg = ModelArg {
            model: name.clone(),
            batch: args.batch,
        };
        let model = load_with_batch(&arg, &catalog)?;
        rows.extend(compare_strategies(&model, &args.workers, &kinds)?);
    }
    Ok(match args.format {
        Format::Json => serde_json::to_string_pretty(&rows)?,
        Format::Csv => {
            let mut out = VolumeRow::CSV_HEADER.to_string();
            for r in &rows {
                out.push('\n');
                out.push_str(&r.csv_line());
            }
            out
        }
        Format::Table => volume_table(&rows)?,
    })
}

#[derive(Serialize)]
struct CatalogEntry {
    name: String,
    layers: usize,
    batch_size: u64,
    param_count: u64,
    param_bytes: u64,
    skewness: f64,
    eligible: bool,
    split_index: Option<usize>,
    split_layer: Option<String>,
}

pub fn run_catalog(args: &CatalogArgs) -> Result<String> {
    let catalog = load_catalog()?;
    if let Some(name) = &args.name {
        return match catalog.source(name) {
            Some(text) => Ok(text.trim_end().to_string()),
            None => Err(catalog.lookup(name).unwrap_err().into()),
        };
    }
    // Benchmarks first in their usual order, then any extra models.
    let mut names: Vec<String> = BENCHMARKS
        .iter()
        .filter(|n| catalog.contains(n))
        .map(|n| n.to_string())
        .collect();
    let extra: Vec<String> = catalog.names().into_iter().filter(|n| !names.contains(n)).collect();
    names.extend(extra);

    let config = ProfilerConfig::default();
    let mut entries = Vec::new();
    for name in &names {
        let m = catalog.lookup(name).with_context(|| format!("catalog entry {name}"))?;
        let p = profile(&m, &config)?;
        entries.push(CatalogEntry {
            name: name.clone(),
            layers: m.num_layers(),
            batch_size: m.batch_size,
            param_count: m.total_param_count(),
            param_bytes: m.total_param_bytes(),
            skewness: p.skewness,
            eligible: p.eligible,
            split_index: p.split_index,
            split_layer: p.split_layer,
        });
    }
    Ok(match args.format {
        Format::Json => serde_json::to_string_pretty(&entries)?,
        Format::Csv => {
            let mut out = String::from("name,layers,batch_size,param_count,param_bytes,skewness,eligible,split_index");
            for e in &entries {
                let split = e.split_index.map(|s| s.to_string()).unwrap_or_default();
                write!(
                    out,
                    "\n{},{},{},{},{},{},{},{split}",
                    e.name, e.layers, e.batch_size, e.param_count, e.param_bytes, e.skewness, e.eligible
                )?;
            }
            out
        }
        Format::Table => {
            let mut out = format!(
                "{:<14} {:>6} {:>6} {:>12} {:>10} {:>9}  split",
                "model", "layers", "batch", "params", "size", "skewness"
            );
            for e in &entries {
                let split = match (&e.split_index, &e.split_layer) {
                    (Some(i), Some(l)) if e.eligible => format!("{i} ({l})"),
                    _ => "-".into(),
                };
                write!(
                    out,
                    "\n{:<14} {:>6} {:>6} {:>12} {:>10} {:>9.2}  {split}",
                    e.name,
                    e.layers,
                    e.batch_size,
                    e.param_count,
                    format_gib(e.param_bytes),
                    e.skewness
                )?;
            }
            out
        }
    })
}
