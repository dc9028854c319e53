//! Optimized inference: reordered dataflow with graph skipping, input
//! skipping and zero skipping.
//!
//! Every product that is executed lands in the same exact integer
//! accumulator as in the reference path, and every product that is skipped
//! is exactly zero, so outputs match the reference bit for bit.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::fixed::{requantize, FixedQ8p8};
use crate::graph::{GRAPH_LEN, K_V};
use crate::model::{ModelConfig, Shortcut, KERNEL_LEN, TEMPORAL_PAD};
use crate::prune::{check_block, PrunedModel};
use crate::reference::{apply_affine, classifier_scores, global_average_pool, residual_relu, DOUBLE_FRAC, TRIPLE_FRAC};
use crate::tensor::{FeatureTensor, VERTICES};

/// Temporal subsampling of the input sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSkip {
    #[default]
    Off,
    /// Keep frames 0, 2, 4, ...
    Even,
    /// Keep frames 1, 3, 5, ...
    Odd,
}

impl InputSkip {
    /// Frame count after skipping. Sequences shorter than two frames pass
    /// through unchanged.
    pub fn frames_after(self, frames: usize) -> usize {
        match self {
            _ if frames < 2 => frames,
            InputSkip::Off => frames,
            InputSkip::Even => frames.div_ceil(2),
            InputSkip::Odd => frames / 2,
        }
    }

    pub fn apply(self, f: &FeatureTensor) -> FeatureTensor {
        if f.frames() < 2 {
            return f.clone();
        }
        let keep: Vec<usize> = match self {
            InputSkip::Off => return f.clone(),
            InputSkip::Even => (0..f.frames()).step_by(2).collect(),
            InputSkip::Odd => (1..f.frames()).step_by(2).collect(),
        };
        f.select_frames(&keep)
    }

    pub fn code(self) -> u32 {
        match self {
            InputSkip::Off => 0,
            InputSkip::Even => 1,
            InputSkip::Odd => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        [InputSkip::Off, InputSkip::Even, InputSkip::Odd]
            .into_iter()
            .find(|s| s.code() == code)
    }
}

/// Keeps the even-indexed frames.
pub fn input_skip(f: &FeatureTensor) -> FeatureTensor {
    InputSkip::Even.apply(f)
}

/// MAC counts of one stage. `skipped_structural` covers work removed by
/// masks or zero weights; `skipped_zero` covers zero features and padding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StageCounters {
    pub performed: u64,
    pub skipped_structural: u64,
    pub skipped_zero: u64,
}

impl StageCounters {
    pub fn skipped(&self) -> u64 {
        self.skipped_structural + self.skipped_zero
    }

    pub fn total(&self) -> u64 {
        self.performed + self.skipped()
    }
}

impl AddAssign for StageCounters {
    fn add_assign(&mut self, o: Self) {
        self.performed += o.performed;
        self.skipped_structural += o.skipped_structural;
        self.skipped_zero += o.skipped_zero;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WorkCounters {
    /// Feature × graph products.
    pub graph: StageCounters,
    /// 1×1 convolution over graph products.
    pub spatial: StageCounters,
    /// 9×1 convolution.
    pub temporal: StageCounters,
    /// Projection shortcut.
    pub shortcut: StageCounters,
}

impl WorkCounters {
    pub fn stages(&self) -> [(&'static str, StageCounters); 4] {
        [
            ("graph", self.graph),
            ("spatial", self.spatial),
            ("temporal", self.temporal),
            ("shortcut", self.shortcut),
        ]
    }

    pub fn performed(&self) -> u64 {
        self.stages().iter().map(|(_, s)| s.performed).sum()
    }

    pub fn total(&self) -> u64 {
        self.stages().iter().map(|(_, s)| s.total()).sum()
    }

    pub fn graph_skip_efficiency(&self) -> f64 {
        ratio(self.graph.skipped_structural, self.graph.total())
    }
}

impl AddAssign for WorkCounters {
    fn add_assign(&mut self, o: Self) {
        self.graph += o.graph;
        self.spatial += o.spatial;
        self.temporal += o.temporal;
        self.shortcut += o.shortcut;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Dense-equivalent MACs per stage, from dimensions only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DenseTotals {
    pub graph: u64,
    pub spatial: u64,
    pub temporal: u64,
    pub shortcut: u64,
}

impl DenseTotals {
    pub fn sum(&self) -> u64 {
        self.graph + self.spatial + self.temporal + self.shortcut
    }

    /// Totals for a model run on `frames` input frames (after any input
    /// skipping).
    pub fn for_model(config: &ModelConfig, frames: usize) -> Self {
        let mut d = Self::default();
        for (b, t) in config.blocks.iter().zip(config.block_frames(frames)) {
            let (ic, oc) = (b.in_channels as u64, b.out_channels as u64);
            let t = t as u64;
            let t_out = t.div_ceil(b.stride as u64);
            let v = VERTICES as u64;
            d.graph += (K_V * GRAPH_LEN) as u64 * t * ic;
            d.spatial += K_V as u64 * ic * oc * t * v;
            d.temporal += oc * oc * KERNEL_LEN as u64 * t_out * v;
            if b.shortcut == crate::model::ShortcutKind::Projection {
                d.shortcut += oc * ic * t_out * v;
            }
        }
        d
    }
}

/// Skip figures of one inference against the unskipped dense workload.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SkipSummary {
    /// Dense MACs at full frame count.
    pub dense_macs: u64,
    /// MACs removed by input skipping alone.
    pub input_skipped: u64,
    pub structural_skipped: u64,
    pub zero_skipped: u64,
    pub performed: u64,
    pub graph_skip_efficiency: f64,
    /// `1 − performed / dense_macs`, all skip sources together.
    pub combined_skip_efficiency: f64,
}

impl SkipSummary {
    pub fn new(config: &ModelConfig, skip: InputSkip, counters: &WorkCounters) -> Self {
        let dense = DenseTotals::for_model(config, config.frames).sum();
        let after = DenseTotals::for_model(config, skip.frames_after(config.frames)).sum();
        let structural = counters.stages().iter().map(|(_, s)| s.skipped_structural).sum();
        let zero = counters.stages().iter().map(|(_, s)| s.skipped_zero).sum();
        let performed = counters.performed();
        Self {
            dense_macs: dense,
            input_skipped: dense - after,
            structural_skipped: structural,
            zero_skipped: zero,
            performed,
            graph_skip_efficiency: counters.graph_skip_efficiency(),
            combined_skip_efficiency: 1.0 - ratio(performed, dense),
        }
    }
}

/// One pruned block on the optimized path.
pub fn sparse_block_forward(
    f_in: &FeatureTensor,
    pruned: &PrunedModel,
    index: usize,
    counters: &mut WorkCounters,
) -> Result<FeatureTensor> {
    let block = pruned.model.blocks.get(index).ok_or(Error::OutOfRange {
        what: "block index",
        value: index as f64,
    })?;
    let masks = pruned.masks.get(index).ok_or_else(|| Error::Mask {
        block: index + 1,
        reason: "no mask record".into(),
    })?;
    block.validate()?;
    check_block(block, masks, pruned.cavity_axis).map_err(|e| e.in_block(index + 1))?;
    let c = block.config;
    ensure_dims("block input channels", c.in_channels, f_in.channels())?;
    let frames = f_in.frames();
    let plane = frames * VERTICES;
    let v = VERTICES as u64;

    // Spatial stage: per kept input channel, the exact graph product, then
    // scatter through each non-zero weight.
    let mut acc = vec![0i64; c.out_channels * plane];
    let mut g = vec![0i64; plane];
    for ic in 0..c.in_channels {
        if !masks.channels.is_kept(ic) {
            counters.graph.skipped_structural += (K_V * GRAPH_LEN * frames) as u64;
            counters.spatial.skipped_structural += (K_V * c.out_channels * plane) as u64;
            continue;
        }
        for k in 0..K_V {
            let graph = block.graphs.graph(k);
            for t in 0..frames {
                let row = f_in.row(ic, t);
                for col in 0..VERTICES {
                    g[t * VERTICES + col] = row
                        .iter()
                        .enumerate()
                        .map(|(p, x)| x.raw() as i64 * graph[p * VERTICES + col].raw() as i64)
                        .sum();
                }
            }
            counters.graph.performed += (GRAPH_LEN * frames) as u64;
            for oc in 0..c.out_channels {
                let w = block.spatial.weight(k, ic, oc).raw() as i64;
                if w == 0 {
                    counters.spatial.skipped_structural += plane as u64;
                    continue;
                }
                for (a, &x) in acc[oc * plane..(oc + 1) * plane].iter_mut().zip(&g) {
                    *a += w * x;
                }
                counters.spatial.performed += plane as u64;
            }
        }
    }
    let s = FeatureTensor::from_data(
        c.out_channels,
        frames,
        acc.into_iter().map(|a| requantize(a, TRIPLE_FRAC)).collect(),
    )?;
    let s = apply_affine(&s, &block.spatial_affine)?.relu();

    // Temporal stage.
    let temporal = &block.temporal;
    let out_frames = temporal.out_frames(frames);
    let out_plane = (out_frames * VERTICES) as u64;
    let mut out = vec![FixedQ8p8::ZERO; c.out_channels * out_frames * VERTICES];
    let mut tacc = vec![0i64; out_frames * VERTICES];
    for oc in 0..c.out_channels {
        if !masks.filters.is_kept(oc) {
            counters.temporal.skipped_structural += (temporal.in_channels * KERNEL_LEN) as u64 * out_plane;
            continue;
        }
        tacc.fill(0);
        for ic in 0..temporal.in_channels {
            for tap in 0..KERNEL_LEN {
                let w = temporal.weight(oc, ic, tap).raw() as i64;
                if w == 0 {
                    counters.temporal.skipped_structural += out_plane;
                    continue;
                }
                for to in 0..out_frames {
                    let src = (to * temporal.stride + tap) as isize - TEMPORAL_PAD as isize;
                    if src < 0 || src >= frames as isize {
                        counters.temporal.skipped_zero += v;
                        continue;
                    }
                    let row = s.row(ic, src as usize);
                    for (a, x) in tacc[to * VERTICES..(to + 1) * VERTICES].iter_mut().zip(row) {
                        if x.is_zero() {
                            counters.temporal.skipped_zero += 1;
                        } else {
                            *a += w * x.raw() as i64;
                            counters.temporal.performed += 1;
                        }
                    }
                }
            }
        }
        let dst = &mut out[oc * tacc.len()..(oc + 1) * tacc.len()];
        for (d, &a) in dst.iter_mut().zip(&tacc) {
            *d = requantize(a, DOUBLE_FRAC);
        }
    }
    let t = FeatureTensor::from_data(c.out_channels, out_frames, out)?;
    let t = apply_affine(&t, &block.temporal_affine)?;

    let shortcut = match &block.shortcut {
        Shortcut::Identity => f_in.clone(),
        Shortcut::MaskedIdentity(gate) => FeatureTensor::from_fn(c.in_channels, frames, |ch, tt, vv| {
            if gate[ch] {
                f_in.get(ch, tt, vv)
            } else {
                FixedQ8p8::ZERO
            }
        }),
        Shortcut::Projection { weights, affine } => {
            let mut p = vec![FixedQ8p8::ZERO; c.out_channels * out_frames * VERTICES];
            let mut pacc = vec![0i64; out_frames * VERTICES];
            for oc in 0..c.out_channels {
                pacc.fill(0);
                for ic in 0..c.in_channels {
                    let w = weights[oc * c.in_channels + ic].raw() as i64;
                    if w == 0 {
                        counters.shortcut.skipped_structural += out_plane;
                        continue;
                    }
                    for to in 0..out_frames {
                        let row = f_in.row(ic, to * c.stride);
                        for (a, x) in pacc[to * VERTICES..(to + 1) * VERTICES].iter_mut().zip(row) {
                            if x.is_zero() {
                                counters.shortcut.skipped_zero += 1;
                            } else {
                                *a += w * x.raw() as i64;
                                counters.shortcut.performed += 1;
                            }
                        }
                    }
                }
                for (d, &a) in p[oc * pacc.len()..(oc + 1) * pacc.len()].iter_mut().zip(&pacc) {
                    *d = requantize(a, DOUBLE_FRAC);
                }
            }
            apply_affine(&FeatureTensor::from_data(c.out_channels, out_frames, p)?, affine)?
        }
    };
    residual_relu(&t, &shortcut)
}

/// Optional input skip, every block on the sparse path, pooling and the
/// classifier.
pub fn run_inference(f_in: &FeatureTensor, pruned: &PrunedModel) -> Result<(Vec<f64>, WorkCounters)> {
    pruned.model.validate()?;
    let mut counters = WorkCounters::default();
    let mut x = pruned.input_skip.apply(f_in);
    for i in 0..pruned.model.blocks.len() {
        x = sparse_block_forward(&x, pruned, i, &mut counters)?;
    }
    let scores = classifier_scores(&pruned.model, &global_average_pool(&x))?;
    Ok((scores, counters))
}
