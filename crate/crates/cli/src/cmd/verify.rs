use hypgcn_core::model::random_input;
use hypgcn_core::prune::hybrid_prune;
use hypgcn_core::reference::{model_forward_ref, model_forward_trace};
use hypgcn_core::sparse::{run_inference, sparse_block_forward, DenseTotals, StageCounters};
use hypgcn_core::{io, Error, PrunedModel, WorkCounters};
use rayon::prelude::*;
use serde::Serialize;

use super::{frames_or, load_pruned, load_spec, out_dir, sample_seed, REPORT_CSV, SUMMARY_JSON};
use crate::error::{CliError, CliResult};
use crate::report::{write_json, Report};
use crate::VerifyArgs;

#[derive(Clone, Debug, Serialize)]
struct Mismatch {
    sample: usize,
    /// 1-based block, or 0 when only the scores differ.
    block: usize,
    coordinate: [usize; 3],
    reference: f64,
    sparse: f64,
}

#[derive(Serialize)]
struct Summary {
    passed: bool,
    samples: usize,
    frames: usize,
    seed: u64,
    first_mismatch: Option<Mismatch>,
    dense_macs: u64,
    input_skipped: u64,
    structural_skipped: u64,
    zero_skipped: u64,
    performed: u64,
    graph_skip_efficiency: f64,
    combined_skip_efficiency: f64,
    stages: Vec<(&'static str, StageCounters)>,
}

fn load_target(a: &VerifyArgs) -> CliResult<PrunedModel> {
    let model = load_pruned(&a.model)?.model;
    let pruned = match (&a.pruned, &a.spec) {
        (Some(path), _) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            match io::pruned_from_bytes(&bytes) {
                Ok(p) => p,
                // A mask that disagrees with its weights fails verification.
                Err(e @ Error::Mask { .. }) => return Err(CliError::Verification(e.to_string())),
                Err(e) => return Err(CliError::at(path)(e)),
            }
        }
        (None, Some(spec)) => hybrid_prune(&model, &load_spec(spec)?).map_err(CliError::at(spec))?,
        (None, None) => PrunedModel::dense(model.clone()),
    };
    if pruned.model.config != model.config {
        return Err(CliError::Config("pruned model dimensions differ from --model".into()));
    }
    Ok(pruned)
}

/// Runs one sample on both paths; on a score mismatch, walks the blocks to
/// find the first differing tensor coordinate.
fn check_sample(
    p: &PrunedModel,
    frames: usize,
    seed: u64,
    i: usize,
) -> hypgcn_core::Result<(WorkCounters, Option<Mismatch>)> {
    let x = random_input(p.model.config.input_channels(), frames, sample_seed(seed, i));
    let (scores, counters) = run_inference(&x, p)?;
    let xs = p.input_skip.apply(&x);
    let expected = model_forward_ref(&xs, &p.model)?;
    if scores.iter().zip(&expected).all(|(a, b)| a.to_bits() == b.to_bits()) {
        return Ok((counters, None));
    }
    let trace = model_forward_trace(&xs, &p.model)?;
    let mut cur = xs;
    let mut scratch = WorkCounters::default();
    for (b, want) in trace.iter().enumerate() {
        cur = sparse_block_forward(&cur, p, b, &mut scratch)?;
        if let Some((c, t, v)) = want.first_difference(&cur) {
            let at = |f: &hypgcn_core::FeatureTensor| {
                if c < f.channels() && t < f.frames() {
                    f.get(c, t, v).to_f64()
                } else {
                    f64::NAN
                }
            };
            return Ok((
                counters,
                Some(Mismatch {
                    sample: i,
                    block: b + 1,
                    coordinate: [c, t, v],
                    reference: at(want),
                    sparse: at(&cur),
                }),
            ));
        }
    }
    let k = scores
        .iter()
        .zip(&expected)
        .position(|(a, b)| a.to_bits() != b.to_bits())
        .unwrap_or(0);
    Ok((
        counters,
        Some(Mismatch {
            sample: i,
            block: 0,
            coordinate: [k, 0, 0],
            reference: expected.get(k).copied().unwrap_or(f64::NAN),
            sparse: scores.get(k).copied().unwrap_or(f64::NAN),
        }),
    ))
}

pub fn run(a: &VerifyArgs) -> CliResult<()> {
    let dir = out_dir(&a.common.out)?;
    let pruned = load_target(a)?;
    let frames = frames_or(pruned.model.config.frames, a.frames)?;
    let seed = a.common.seed;
    log::info!("verifying {} samples of {frames} frames", a.samples);
    let results: Vec<_> = (0..a.samples)
        .into_par_iter()
        .map(|i| check_sample(&pruned, frames, seed, i))
        .collect();
    let mut total = WorkCounters::default();
    let mut first = None;
    for r in results {
        let (c, m) = r?;
        total += c;
        if first.is_none() {
            first = m;
        }
    }

    let cfg = &pruned.model.config;
    let n = a.samples as u64;
    let dense = DenseTotals::for_model(cfg, frames).sum() * n;
    let after = DenseTotals::for_model(cfg, pruned.input_skip.frames_after(frames)).sum() * n;
    let stages = total.stages();
    let performed = total.performed();
    let summary = Summary {
        passed: first.is_none(),
        samples: a.samples,
        frames,
        seed,
        first_mismatch: first.clone(),
        dense_macs: dense,
        input_skipped: dense - after,
        structural_skipped: stages.iter().map(|(_, s)| s.skipped_structural).sum(),
        zero_skipped: stages.iter().map(|(_, s)| s.skipped_zero).sum(),
        performed,
        graph_skip_efficiency: total.graph_skip_efficiency(),
        combined_skip_efficiency: if dense == 0 {
            0.0
        } else {
            1.0 - performed as f64 / dense as f64
        },
        stages: stages.to_vec(),
    };

    let mut r = Report::default();
    for (name, s) in &stages {
        r.measured("performed", name, s.performed as f64, "MAC");
        r.measured("skipped_structural", name, s.skipped_structural as f64, "MAC");
        r.measured("skipped_zero", name, s.skipped_zero as f64, "MAC");
        println!(
            "{name:<9} performed {:>14}  structural skip {:>14}  zero skip {:>14}",
            s.performed, s.skipped_structural, s.skipped_zero
        );
    }
    r.analytic("dense_macs", "all", dense as f64, "MAC");
    r.analytic("input_skipped", "all", summary.input_skipped as f64, "MAC");
    r.measured(
        "graph_skip_efficiency",
        "all",
        summary.graph_skip_efficiency,
        "fraction",
    );
    r.measured(
        "combined_skip_efficiency",
        "all",
        summary.combined_skip_efficiency,
        "fraction",
    );
    r.measured(
        "samples_passed",
        "all",
        if first.is_none() { n as f64 } else { 0.0 },
        "count",
    );
    r.write_csv(&dir.join(REPORT_CSV))?;
    write_json(&dir.join(SUMMARY_JSON), &summary)?;

    match first {
        None => {
            println!("PASS: {} samples bitwise equal", a.samples);
            Ok(())
        }
        Some(m) => Err(CliError::Verification(format!(
            "sample {} block {} at (c, t, v) = ({}, {}, {}): reference {} vs sparse {}",
            m.sample, m.block, m.coordinate[0], m.coordinate[1], m.coordinate[2], m.reference, m.sparse
        ))),
    }
}
