use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ralp_core::sim::{
    bundled_scenario, simulate_consolidation, simulate_many, ConsolidationReport, Scenario,
    SimError, SimReport,
};
use ralp_core::Catalog;

use crate::args::SimulateArgs;
use crate::commands::load_catalog;
use crate::exit::UsageError;

/// A file path if one exists, otherwise a bundled scenario name.
fn load_scenario(reference: &str, catalog: &Catalog) -> Result<Scenario, SimError> {
    let path = Path::new(reference);
    if !path.exists() {
        if let Some(found) = bundled_scenario(reference, catalog) {
            return found;
        }
    }
    Scenario::from_file(path, catalog)
}

fn job_lines(label: &str, report: &SimReport, out: &mut String) -> std::fmt::Result {
    for j in &report.jobs {
        writeln!(
            out,
            "{label}: {} ({} {}, W={}, PS={}): {:.1} images/sec, step {:.4} s, comm {:.1}%",
            j.name,
            j.model,
            j.strategy,
            j.worker_count,
            j.ps_count,
            j.images_per_sec,
            j.avg_step_time,
            j.comm_fraction * 100.0
        )?;
    }
    Ok(())
}

fn consolidation_lines(label: &str, report: &ConsolidationReport, out: &mut String) -> std::fmt::Result {
    for e in &report.entries {
        writeln!(
            out,
            "{label}: {} copy {}: isolated {:.4} s, consolidated {:.4} s, slowdown {:.2}x",
            e.name, e.copy, e.isolated_step_time, e.consolidated_step_time, e.slowdown
        )?;
    }
    writeln!(out, "{label}: mean slowdown over {} copies {:.2}x", report.copies, report.mean_slowdown())
}

/// One JSON document for a single scenario, an array for several.
fn json_of<T>(items: &[T], to_json: impl Fn(&T) -> String) -> String {
    if let [one] = items {
        return to_json(one);
    }
    let parts: Vec<String> = items.iter().map(to_json).collect();
    let indented: Vec<String> = parts.iter().map(|p| format!("  {}", p.replace('\n', "\n  "))).collect();
    format!("[\n{}\n]", indented.join(",\n"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn timeline(labels: &[String], reports: &[&SimReport]) -> String {
    let mut out = format!("scenario,{}\n", SimReport::TIMELINE_HEADER);
    for (label, r) in labels.iter().zip(reports) {
        for line in r.timeline_csv().lines().skip(1) {
            out.push_str(label);
            out.push(',');
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

pub fn run_simulate(args: &SimulateArgs) -> Result<String> {
    let catalog = load_catalog()?;
    let mut scenarios = Vec::with_capacity(args.scenarios.len());
    for reference in &args.scenarios {
        let mut s = load_scenario(reference, &catalog).with_context(|| format!("scenario {reference}"))?;
        if let Some(steps) = args.steps {
            s = s.with_steps(steps).with_context(|| format!("scenario {reference}"))?;
        }
        log::info!("{reference}: {} jobs, {} steps", s.jobs.len(), s.steps);
        scenarios.push(s);
    }
    let labels = &args.scenarios;
    let mut summary = String::new();

    if let Some(k) = args.consolidate {
        if k == 0 {
            return Err(UsageError("--consolidate needs at least 1 copy".into()).into());
        }
        let mut reports = Vec::with_capacity(scenarios.len());
        for (label, s) in labels.iter().zip(&scenarios) {
            let r = simulate_consolidation(s, k).with_context(|| format!("scenario {label}"))?;
            consolidation_lines(label, &r, &mut summary)?;
            reports.push(r);
        }
        if let Some(path) = &args.out {
            write_file(path, &json_of(&reports, ConsolidationReport::to_json))?;
        }
        if let Some(path) = &args.timeline {
            let runs: Vec<&SimReport> = reports.iter().map(|r| &r.consolidated).collect();
            write_file(path, &timeline(labels, &runs))?;
        }
    } else {
        let mut reports = Vec::with_capacity(scenarios.len());
        for (label, r) in labels.iter().zip(simulate_many(&scenarios)) {
            let r = r.with_context(|| format!("scenario {label}"))?;
            job_lines(label, &r, &mut summary)?;
            reports.push(r);
        }
        if let Some(path) = &args.out {
            write_file(path, &json_of(&reports, SimReport::to_json))?;
        }
        if let Some(path) = &args.timeline {
            let runs: Vec<&SimReport> = reports.iter().collect();
            write_file(path, &timeline(labels, &runs))?;
        }
    }
    Ok(summary.trim_end().to_string())
}
