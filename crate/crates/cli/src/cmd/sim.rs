use hypgcn_core::sim::{
    compare_static_dynamic, expected_valid_closed, pipeline_throughput, AllocationReport, Scenario, Throughput,
};
use serde::Serialize;

use super::{out_dir, REPORT_CSV, SUMMARY_JSON};
use crate::error::{CliError, CliResult};
use crate::report::{write_json, write_rows, Provenance, Report};
use crate::SimArgs;

pub const LAYERS_CSV: &str = "sim_layers.csv";

#[derive(Serialize)]
struct GroupRow<'a> {
    layer: &'a str,
    queues: usize,
    count: usize,
    dsps: usize,
    sparsity: f64,
    expected_valid: f64,
    mean_valid: f64,
    events: u64,
    cycles: u64,
    stall_cycles: u64,
    useful_macs: u64,
    efficiency: f64,
    delay_pct: f64,
    max_backlog: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    seed: u64,
    events: usize,
    allocation: &'a AllocationReport,
    throughput: Option<Throughput>,
}

pub fn run(a: &SimArgs) -> CliResult<()> {
    let dir = out_dir(&a.common.out)?;
    let mut scenario = Scenario::load(&a.scenario).map_err(CliError::at(&a.scenario))?;
    scenario.seed ^= a.common.seed;
    if let Some(e) = a.events {
        scenario.events = e;
    }
    let report = compare_static_dynamic(&scenario).map_err(CliError::at(&a.scenario))?;

    let mut r = Report::default();
    let mut groups = Vec::new();
    for (l, spec) in report.layers.iter().zip(&scenario.layers) {
        let sp = if spec.trace.is_some() {
            Provenance::Measured
        } else {
            Provenance::Analytic
        };
        r.push("sparsity", &l.name, l.sparsity, "fraction", sp);
        r.analytic("static_dsps", &l.name, l.static_dsps as f64, "DSP");
        r.analytic("dynamic_dsps", &l.name, l.dynamic_dsps as f64, "DSP");
        r.analytic("dsp_reduction", &l.name, 100.0 * l.reduction, "%");
        r.measured("efficiency", &l.name, 100.0 * l.efficiency, "%");
        r.measured("static_efficiency", &l.name, 100.0 * l.static_efficiency, "%");
        r.measured("max_delay", &l.name, l.max_delay_pct, "%");
        for g in &l.groups {
            let events = g.stats.events.max(1) as f64;
            groups.push(GroupRow {
                layer: &l.name,
                queues: g.queues,
                count: g.count,
                dsps: g.dsps,
                sparsity: l.sparsity,
                expected_valid: expected_valid_closed(g.queues, l.sparsity)?,
                mean_valid: g.stats.useful_macs as f64 / events,
                events: g.stats.events,
                cycles: g.stats.cycles,
                stall_cycles: g.stats.stall_cycles,
                useful_macs: g.stats.useful_macs,
                efficiency: g.stats.efficiency,
                delay_pct: g.stats.max_delay_pct,
                max_backlog: g.stats.max_backlog,
            });
        }
    }
    r.analytic("static_dsps", "all", report.static_dsps as f64, "DSP");
    r.analytic("dynamic_dsps", "all", report.dynamic_dsps as f64, "DSP");
    r.analytic("dsp_reduction", "all", 100.0 * report.reduction, "%");
    r.measured("efficiency", "all", 100.0 * report.efficiency, "%");
    r.measured("static_efficiency", "all", 100.0 * report.static_efficiency, "%");
    r.measured("max_delay", "all", report.max_delay_pct, "%");
    r.measured("pipeline_delay", "all", report.pipeline_delay_pct, "%");
    if let Some(t) = report.reference {
        r.analytic("reference_static_dsps", "all", t.static_dsps as f64, "DSP");
        r.analytic("reference_dynamic_dsps", "all", t.dynamic_dsps as f64, "DSP");
        r.analytic("reference_dsp_reduction", "all", 100.0 * t.reduction(), "%");
    }
    let throughput = match &scenario.pipeline {
        Some(p) => {
            let stages = if p.stage_cycles.is_empty() {
                vec![1]
            } else {
                p.stage_cycles.clone()
            };
            let t = pipeline_throughput(&stages, p.clock_hz, p.mac_units)?;
            r.analytic("peak_macs", "all", t.peak_macs_per_s / 1e9, "GMAC/s");
            r.analytic("peak_ops", "all", t.peak_ops_per_s / 1e9, "GOP/s");
            if !p.stage_cycles.is_empty() {
                r.analytic("fps", "all", t.fps, "frame/s");
                r.analytic("bottleneck_stage", "all", t.bottleneck as f64, "index");
            }
            Some(t)
        }
        None => None,
    };
    r.write_csv(&dir.join(REPORT_CSV))?;
    write_rows(&dir.join(LAYERS_CSV), &groups)?;
    write_json(
        &dir.join(SUMMARY_JSON),
        &Summary {
            scenario: &scenario.name,
            seed: scenario.seed,
            events: scenario.events,
            allocation: &report,
            throughput,
        },
    )?;

    for l in &report.layers {
        println!(
            "layer {:<6} s={:.4}  DSP {:>5} -> {:>5}  efficiency {:>6.2}%  max delay {:>5.2}%",
            l.name,
            l.sparsity,
            l.static_dsps,
            l.dynamic_dsps,
            100.0 * l.efficiency,
            l.max_delay_pct
        );
    }
    println!(
        "total  DSP {} -> {} ({:.2}% fewer), efficiency {:.2}% vs {:.2}% static",
        report.static_dsps,
        report.dynamic_dsps,
        100.0 * report.reduction,
        100.0 * report.efficiency,
        100.0 * report.static_efficiency
    );
    if let Some(t) = report.reference {
        println!(
            "reference totals {} -> {} ({:.2}% fewer)",
            t.static_dsps,
            t.dynamic_dsps,
            100.0 * t.reduction()
        );
    }
    Ok(())
}
