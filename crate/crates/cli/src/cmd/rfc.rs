use std::path::{Path, PathBuf};

use hypgcn_core::model::random_input;
use hypgcn_core::rfc::{
    decode_bank, encode_tensor, histogram_from_banks, read_stream, size_minibanks, storage_report, write_stream,
    EncodedBank, LayerStorage, SparsityHistogram, StorageConfig, StorageTotals,
};
use hypgcn_core::sparse::sparse_block_forward;
use hypgcn_core::{PrunedModel, WorkCounters};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frames_or, load_pruned, out_dir, sample_seed, REPORT_CSV, SUMMARY_JSON};
use crate::error::{CliError, CliResult};
use crate::report::{write_json, Provenance, Report};
use crate::RfcArgs;

/// Storage study, read from TOML:
///
/// ```toml
/// name = "table3"
/// [storage]              # optional, see StorageConfig
/// granularity = 512
/// [[layer]]
/// name = "l1.sconv"
/// histogram = [0.0, 0.29, 0.71, 0.0]   # or: trace = "dump.rfc"
/// lines = 15000                        # required with a histogram
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfcStudy {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub storage: StorageConfig,
    #[serde(rename = "layer", default)]
    pub layers: Vec<RfcLayer>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfcLayer {
    pub name: String,
    #[serde(default)]
    pub histogram: Option<[f64; 4]>,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub lines: Option<u64>,
}

struct Layer {
    name: String,
    hist: SparsityHistogram,
    lines: u64,
    nonzeros: Option<u64>,
    banks: Option<Vec<EncodedBank>>,
    provenance: Provenance,
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    storage: StorageConfig,
    layers: &'a [LayerStorage],
    totals: StorageTotals,
}

fn load_study(path: &Path) -> CliResult<(RfcStudy, Vec<Layer>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let study: RfcStudy = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if study.layers.is_empty() {
        return Err(CliError::Config(format!("{}: no layers", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut layers = Vec::with_capacity(study.layers.len());
    for l in &study.layers {
        let bad = |msg: String| CliError::Config(format!("{}: layer {}: {msg}", path.display(), l.name));
        layers.push(match (&l.histogram, &l.trace) {
            (Some(h), None) => Layer {
                name: l.name.clone(),
                hist: SparsityHistogram::new(*h).map_err(|e| bad(e.to_string()))?,
                lines: l.lines.ok_or_else(|| bad("a histogram needs `lines`".into()))?,
                nonzeros: None,
                banks: None,
                provenance: Provenance::Analytic,
            },
            (None, Some(t)) => {
                let file = base.join(t);
                let f = std::fs::File::open(&file).map_err(|e| bad(format!("{}: {e}", file.display())))?;
                let banks = read_stream(std::io::BufReader::new(f)).map_err(|e| bad(e.to_string()))?;
                measured_layer(&l.name, banks)?
            }
            _ => return Err(bad("exactly one of histogram and trace is required".into())),
        });
    }
    Ok((study, layers))
}

fn measured_layer(name: &str, banks: Vec<EncodedBank>) -> CliResult<Layer> {
    let hist = SparsityHistogram::from_counts(histogram_from_banks(&banks))
        .map_err(|e| CliError::Config(format!("layer {name}: {e}")))?;
    Ok(Layer {
        name: name.to_string(),
        hist,
        lines: banks.len() as u64,
        nonzeros: Some(banks.iter().map(|b| b.popcount() as u64).sum()),
        banks: Some(banks),
        provenance: Provenance::Measured,
    })
}

/// Block outputs of `samples` seeded inputs, encoded per block; sample 0 is
/// dumped to `block<i>.rfc`.
fn model_layers(p: &PrunedModel, frames: usize, samples: usize, seed: u64, dir: &Path) -> CliResult<Vec<Layer>> {
    let per_sample: Vec<hypgcn_core::Result<Vec<Vec<EncodedBank>>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = random_input(p.model.config.input_channels(), frames, sample_seed(seed, i));
            let mut cur = p.input_skip.apply(&x);
            let mut counters = WorkCounters::default();
            let mut out = Vec::with_capacity(p.model.blocks.len());
            for b in 0..p.model.blocks.len() {
                cur = sparse_block_forward(&cur, p, b, &mut counters)?;
                out.push(encode_tensor(&cur));
            }
            Ok(out)
        })
        .collect();
    let mut blocks: Vec<Vec<EncodedBank>> = vec![Vec::new(); p.model.blocks.len()];
    for (i, s) in per_sample.into_iter().enumerate() {
        for (b, banks) in s?.into_iter().enumerate() {
            if i == 0 {
                let f = std::fs::File::create(dir.join(format!("block{}.rfc", b + 1)))?;
                write_stream(std::io::BufWriter::new(f), &banks)?;
            }
            blocks[b].extend(banks);
        }
    }
    blocks
        .into_iter()
        .enumerate()
        .map(|(b, banks)| measured_layer(&format!("b{}.out", b + 1), banks))
        .collect()
}

/// Stores every bank into a layout sized from the layer's own histogram
/// and checks the decoded lanes against the stored ones.
fn roundtrip(layer: &Layer, banks: &[EncodedBank], granularity: usize) -> CliResult<()> {
    let mut layout = size_minibanks(&layer.hist, banks.len(), 1, granularity)?;
    for b in banks {
        layout
            .store_bank(b)
            .map_err(|e| CliError::Overflow(format!("layer {}: {e}", layer.name)))?;
    }
    for (line, b) in banks.iter().enumerate() {
        let back = layout.load_bank(line)?;
        if decode_bank(&back).map_err(hypgcn_core::Error::from)? != decode_bank(b).map_err(hypgcn_core::Error::from)? {
            return Err(CliError::Verification(format!(
                "layer {}: line {line} decodes differently",
                layer.name
            )));
        }
    }
    Ok(())
}

pub fn run(a: &RfcArgs) -> CliResult<()> {
    let dir = out_dir(&a.common.out)?;
    let (name, mut storage, layers) = match (&a.scenario, &a.model) {
        (Some(path), _) => {
            let (study, layers) = load_study(path)?;
            (study.name, study.storage, layers)
        }
        (None, Some(path)) => {
            let p = load_pruned(path)?;
            let frames = frames_or(p.model.config.frames, a.frames)?;
            let layers = model_layers(&p, frames, a.samples, a.common.seed, &dir)?;
            ("model".to_string(), StorageConfig::default(), layers)
        }
        (None, None) => return Err(CliError::Config("rfc needs --scenario or --model".into())),
    };
    if let Some(g) = a.granularity {
        storage.granularity = g;
    }

    let mut r = Report::default();
    let mut results = Vec::with_capacity(layers.len());
    for l in &layers {
        if let Some(banks) = &l.banks {
            roundtrip(l, banks, storage.granularity)?;
        }
        let s = storage_report(&l.name, &l.hist, l.lines, l.nonzeros, &storage)?;
        let p = l.provenance;
        for (c, f) in ["I", "II", "III", "IV"].iter().zip(l.hist.fractions()) {
            r.push(&format!("category_{c}"), &l.name, f, "fraction", p);
        }
        r.push("reduction_exact", &l.name, 100.0 * s.reduction_exact, "%", p);
        r.push("reduction_sized", &l.name, 100.0 * s.reduction_sized, "%", p);
        r.push("reduction_with_codes", &l.name, 100.0 * s.reduction_with_codes, "%", p);
        for (j, d) in s.depths.iter().enumerate() {
            r.push(&format!("depth_{}", j + 1), &l.name, *d as f64, "lines", p);
        }
        r.push("dense_bits", &l.name, s.dense_bits as f64, "bit", p);
        r.push("rfc_data_bits", &l.name, s.rfc_data_bits as f64, "bit", p);
        r.push("rfc_code_bits", &l.name, s.rfc_code_bits as f64, "bit", p);
        r.push("csc_bits", &l.name, s.csc_bits as f64, "bit", p);
        r.push("dense_load_cycles", &l.name, s.dense_load_cycles as f64, "cycle", p);
        r.push("rfc_load_cycles", &l.name, s.rfc_load_cycles as f64, "cycle", p);
        r.push("csc_load_cycles", &l.name, s.csc_load_cycles as f64, "cycle", p);
        println!(
            "{:<12} reduction {:>7.3}% (sized {:>7.3}%, with codes {:>7.3}%)",
            l.name,
            100.0 * s.reduction_exact,
            100.0 * s.reduction_sized,
            100.0 * s.reduction_with_codes
        );
        results.push(s);
    }
    let totals = StorageTotals::from_layers(&results);
    let p = if layers.iter().all(|l| l.provenance == Provenance::Analytic) {
        Provenance::Analytic
    } else {
        Provenance::Measured
    };
    r.push("reduction_sized", "all", 100.0 * totals.reduction_sized, "%", p);
    r.push(
        "reduction_with_codes",
        "all",
        100.0 * totals.reduction_with_codes,
        "%",
        p,
    );
    r.write_csv(&dir.join(REPORT_CSV))?;
    write_json(
        &dir.join(SUMMARY_JSON),
        &Summary {
            name: &name,
            storage,
            layers: &results,
            totals,
        },
    )?;
    Ok(())
}
