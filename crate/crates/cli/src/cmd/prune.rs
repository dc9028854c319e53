use hypgcn_core::io;
use hypgcn_core::prune::{compression_stats, hybrid_prune, PruneStats};
use serde::Serialize;

use super::{load_pruned, load_spec, out_dir, REPORT_CSV, SUMMARY_JSON};
use crate::error::{CliError, CliResult};
use crate::report::{write_json, Report};
use crate::PruneArgs;

pub const PRUNED_FILE: &str = "pruned.rfch";

#[derive(Serialize)]
struct Summary<'a> {
    spec: &'a str,
    model: &'a str,
    input_skip: bool,
    parameter_reduction_pct: f64,
    stats: &'a PruneStats,
}

pub fn run(a: &PruneArgs) -> CliResult<()> {
    let dir = out_dir(&a.common.out)?;
    let model = load_pruned(&a.model)?.model;
    let spec = load_spec(&a.spec)?;
    let pruned = hybrid_prune(&model, &spec).map_err(CliError::at(&a.spec))?;
    io::save_pruned(&dir.join(PRUNED_FILE), &pruned)?;

    let stats = compression_stats(&pruned);
    let mut r = Report::default();
    for (i, b) in stats.blocks.iter().enumerate() {
        let l = (i + 1).to_string();
        r.measured("kept_channels", &l, b.kept_channels as f64, "count");
        r.measured("kept_filters", &l, b.kept_filters as f64, "count");
        r.measured("params", &l, b.params as f64, "count");
        r.measured("nonzero_params", &l, b.nonzero_params as f64, "count");
        r.measured("temporal_nonzero", &l, b.temporal_nonzero as f64, "count");
        r.measured("graph_macs", &l, b.graph_macs as f64, "MAC");
        r.measured("graph_macs_skipped", &l, b.graph_macs_skipped as f64, "MAC");
    }
    let reduction = 100.0 * (1.0 - 1.0 / stats.compression_ratio);
    r.measured("total_params", "all", stats.total_params as f64, "count");
    r.measured("nonzero_params", "all", stats.nonzero_params as f64, "count");
    r.measured("compression_ratio", "all", stats.compression_ratio, "x");
    r.measured("parameter_reduction", "all", reduction, "%");
    r.measured("graph_skip_efficiency", "all", stats.graph_skip_efficiency, "fraction");
    r.measured("temporal_sparsity", "all", stats.temporal_sparsity, "fraction");
    r.write_csv(&dir.join(REPORT_CSV))?;
    write_json(
        &dir.join(SUMMARY_JSON),
        &Summary {
            spec: &spec.name,
            model: PRUNED_FILE,
            input_skip: spec.input_skip,
            parameter_reduction_pct: reduction,
            stats: &stats,
        },
    )?;
    println!(
        "{}: compression {:.3}x ({reduction:.2}% fewer parameters), graph skip {:.4}",
        spec.name, stats.compression_ratio, stats.graph_skip_efficiency
    );
    Ok(())
}
