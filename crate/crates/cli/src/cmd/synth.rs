use hypgcn_core::model::Shortcut;
use hypgcn_core::{io, Model, ModelConfig};
use serde::Serialize;

use super::{out_dir, REPORT_CSV, SUMMARY_JSON};
use crate::error::{CliError, CliResult};
use crate::report::{write_json, Report};
use crate::SynthArgs;

pub const MODEL_FILE: &str = "model.rfch";

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    model: &'a str,
    config: &'a ModelConfig,
    weights: u64,
}

pub fn run(a: &SynthArgs) -> CliResult<()> {
    let dir = out_dir(&a.common.out)?;
    let mut config = match &a.widths {
        Some(widths) => {
            let mut c = ModelConfig::micro(3, widths, a.strides.as_deref().unwrap_or(&[]), 8);
            c.num_classes = a.classes;
            c
        }
        None => ModelConfig::standard(a.classes),
    };
    if let Some(f) = a.frames {
        config.frames = f;
    }
    let model = Model::synthesize(config, a.common.seed).map_err(CliError::from)?;
    io::save_model(&dir.join(MODEL_FILE), &model)?;

    let mut report = Report::default();
    let mut total = 0u64;
    for (i, b) in model.blocks.iter().enumerate() {
        let mut n = (b.spatial.weights.len() + b.temporal.weights.len()) as u64;
        if let Shortcut::Projection { weights, .. } = &b.shortcut {
            n += weights.len() as u64;
        }
        total += n;
        report.analytic("weights", &(i + 1).to_string(), n as f64, "count");
    }
    total += model.classifier.weights.len() as u64;
    report.analytic("weights", "classifier", model.classifier.weights.len() as f64, "count");
    report.write_csv(&dir.join(REPORT_CSV))?;
    write_json(
        &dir.join(SUMMARY_JSON),
        &Summary {
            seed: a.common.seed,
            model: MODEL_FILE,
            config: &model.config,
            weights: total,
        },
    )?;
    log::info!("wrote {}", dir.join(MODEL_FILE).display());
    Ok(())
}
