//! Hybrid pruning.
//!
//! Three stages, each a pure transform on an owned model:
//!
//! 1. [`apply_dataflow_reorg`] drops whole spatial input channels. With the
//!    reordered dataflow a dropped channel skips both its graph product and
//!    its 1×1 convolution. The channel is abandoned for the whole block, so
//!    the block's shortcut is gated on the same mask.
//! 2. [`propagate_coarse_temporal`] removes the temporal filters of block
//!    `l` whose output channels block `l + 1` no longer reads.
//! 3. [`apply_fine_grained`] zeroes taps of surviving temporal kernels
//!    according to a balanced [`CavityPattern`].

mod cavity;
mod spec;
mod stats;

pub use cavity::{CavityAxis, CavityPattern, CAV_70_1};
pub use spec::{BlockPruneSpec, PruneSpec, SkipPhase};
pub use stats::{compression_stats, graph_macs_per_channel, BlockStats, PruneStats};

use crate::error::{Error, Result};
use crate::fixed::FixedQ8p8;
use crate::graph::K_V;
use crate::model::{Block, Model, Shortcut, KERNEL_LEN};
use crate::sparse::InputSkip;

/// Kept (`true`) or dropped flag per channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChannelMask {
    bits: Vec<bool>,
}

impl ChannelMask {
    pub fn all(channels: usize) -> Self {
        Self {
            bits: vec![true; channels],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Mask with the listed channels dropped.
    pub fn dropping(channels: usize, dropped: &[usize]) -> Self {
        let mut m = Self::all(channels);
        for &c in dropped {
            m.bits[c] = false;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn is_kept(&self, channel: usize) -> bool {
        self.bits[channel]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn dropped_count(&self) -> usize {
        self.len() - self.kept_count()
    }

    pub fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn dropped(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }
}

/// Masks recorded for one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMasks {
    /// Spatial input channels.
    pub channels: ChannelMask,
    /// Temporal filters (output channels).
    pub filters: ChannelMask,
    pub pattern: CavityPattern,
}

impl BlockMasks {
    pub fn dense(block: &Block) -> Self {
        Self {
            channels: ChannelMask::all(block.config.in_channels),
            filters: ChannelMask::all(block.config.out_channels),
            pattern: CavityPattern::all_keep(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrunedModel {
    /// Weights with every masked position zeroed.
    pub model: Model,
    pub masks: Vec<BlockMasks>,
    pub cavity_axis: CavityAxis,
    pub input_skip: InputSkip,
}

impl PrunedModel {
    /// Wraps an unpruned model with all-keep masks.
    pub fn dense(model: Model) -> Self {
        let masks = model.blocks.iter().map(BlockMasks::dense).collect();
        Self {
            model,
            masks,
            cavity_axis: CavityAxis::default(),
            input_skip: InputSkip::Off,
        }
    }

    /// Verifies that every masked weight position holds zero.
    pub fn check_consistency(&self) -> Result<()> {
        if self.masks.len() != self.model.blocks.len() {
            return Err(Error::Mask {
                block: 0,
                reason: format!(
                    "{} mask records for {} blocks",
                    self.masks.len(),
                    self.model.blocks.len()
                ),
            });
        }
        for (i, (block, masks)) in self.model.blocks.iter().zip(&self.masks).enumerate() {
            check_block(block, masks, self.cavity_axis).map_err(|e| e.in_block(i + 1))?;
        }
        Ok(())
    }
}

fn mask_err(reason: String) -> Error {
    Error::Mask { block: 0, reason }
}

/// Mask/weight consistency of one block. Errors carry block 0; callers
/// attach the real index.
pub fn check_block(block: &Block, masks: &BlockMasks, axis: CavityAxis) -> Result<()> {
    let c = &block.config;
    if masks.channels.len() != c.in_channels || masks.filters.len() != c.out_channels {
        return Err(mask_err(format!(
            "mask sizes {}/{} do not match {}/{} channels",
            masks.channels.len(),
            masks.filters.len(),
            c.in_channels,
            c.out_channels
        )));
    }
    for ic in masks.channels.dropped() {
        for k in 0..K_V {
            for oc in 0..c.out_channels {
                if !block.spatial.weight(k, ic, oc).is_zero() {
                    return Err(mask_err(format!(
                        "dropped input channel {ic} has non-zero spatial weight (k={k}, oc={oc})"
                    )));
                }
            }
        }
    }
    match &block.shortcut {
        Shortcut::Identity if !masks.channels.is_full() => {
            return Err(mask_err("identity shortcut passes a dropped channel".into()));
        }
        Shortcut::MaskedIdentity(gate) if gate.as_slice() != masks.channels.bits() => {
            return Err(mask_err("shortcut gate disagrees with channel mask".into()));
        }
        Shortcut::Projection { weights, .. } => {
            for ic in masks.channels.dropped() {
                if (0..c.out_channels).any(|oc| !weights[oc * c.in_channels + ic].is_zero()) {
                    return Err(mask_err(format!(
                        "dropped input channel {ic} still feeds the projection shortcut"
                    )));
                }
            }
        }
        _ => {}
    }
    for oc in 0..c.out_channels {
        if !masks.filters.is_kept(oc) {
            if block.temporal.filter(oc).iter().any(|w| !w.is_zero()) {
                return Err(mask_err(format!("dropped temporal filter {oc} has non-zero taps")));
            }
            continue;
        }
        for ic in 0..block.temporal.in_channels {
            let phase = axis.phase_index(oc, ic);
            for tap in 0..KERNEL_LEN {
                if !masks.pattern.kept(tap, phase) && !block.temporal.weight(oc, ic, tap).is_zero() {
                    return Err(mask_err(format!(
                        "cavity-pruned tap {tap} of filter {oc}, channel {ic} is non-zero"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Channels to keep: drops the `floor(rate × in_channels)` input channels
/// with the smallest mean |w| over all neighbour sets and output channels;
/// equal means drop the lower index first.
pub fn select_drop_channels(w: &crate::model::SpatialConvLayer, rate: f64) -> Result<ChannelMask> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::OutOfRange {
            what: "channel drop rate",
            value: rate,
        });
    }
    let n = w.in_channels;
    let drop = (rate * n as f64).floor() as usize;
    // Every channel averages over the same K_V × out_channels weights, so
    // integer sums order exactly like the means.
    let mut score: Vec<(i64, usize)> = (0..n)
        .map(|ic| {
            let sum = (0..K_V)
                .flat_map(|k| (0..w.out_channels).map(move |oc| (k, oc)))
                .map(|(k, oc)| (w.weight(k, ic, oc).raw() as i64).abs())
                .sum();
            (sum, ic)
        })
        .collect();
    score.sort_unstable();
    let dropped: Vec<usize> = score[..drop].iter().map(|&(_, ic)| ic).collect();
    Ok(ChannelMask::dropping(n, &dropped))
}

/// Applies explicit per-block input-channel masks.
pub fn apply_channel_masks(model: &Model, masks: Vec<ChannelMask>) -> Result<PrunedModel> {
    model.validate()?;
    if masks.len() != model.blocks.len() {
        return Err(Error::InvalidConfig(format!(
            "{} channel masks for {} blocks",
            masks.len(),
            model.blocks.len()
        )));
    }
    let mut pruned = PrunedModel::dense(model.clone());
    for (i, (block, mask)) in pruned.model.blocks.iter_mut().zip(masks).enumerate() {
        let c = block.config;
        if mask.len() != c.in_channels {
            return Err(Error::InvalidConfig(format!(
                "block {}: mask covers {} channels, block has {}",
                i + 1,
                mask.len(),
                c.in_channels
            )));
        }
        for ic in mask.dropped() {
            for k in 0..K_V {
                for oc in 0..c.out_channels {
                    let idx = block.spatial.index(k, ic, oc);
                    block.spatial.weights[idx] = FixedQ8p8::ZERO;
                }
            }
        }
        if !mask.is_full() {
            block.shortcut = match std::mem::replace(&mut block.shortcut, Shortcut::Identity) {
                Shortcut::Identity => Shortcut::MaskedIdentity(mask.bits().to_vec()),
                Shortcut::MaskedIdentity(gate) => {
                    Shortcut::MaskedIdentity(gate.iter().zip(mask.bits()).map(|(a, b)| *a && *b).collect())
                }
                Shortcut::Projection { mut weights, affine } => {
                    for ic in mask.dropped() {
                        for oc in 0..c.out_channels {
                            weights[oc * c.in_channels + ic] = FixedQ8p8::ZERO;
                        }
                    }
                    Shortcut::Projection { weights, affine }
                }
            };
        }
        pruned.masks[i].channels = mask;
    }
    Ok(pruned)
}

/// Dataflow-reorganisation pruning: per-block channel selection by mean
/// |w|, then weight zeroing.
pub fn apply_dataflow_reorg(model: &Model, spec: &PruneSpec) -> Result<PrunedModel> {
    spec.validate(model.blocks.len())?;
    let masks = model
        .blocks
        .iter()
        .zip(&spec.blocks)
        .map(|(b, s)| select_drop_channels(&b.spatial, s.drop_rate))
        .collect::<Result<Vec<_>>>()?;
    let mut pruned = apply_channel_masks(model, masks)?;
    pruned.cavity_axis = spec.cavity_axis;
    pruned.input_skip = spec.input_skip_mode();
    Ok(pruned)
}

/// Removes temporal filters whose outputs the next block's spatial stage
/// has dropped.
pub fn propagate_coarse_temporal(mut pruned: PrunedModel) -> Result<PrunedModel> {
    let n = pruned.model.blocks.len();
    for l in 0..n.saturating_sub(1) {
        let next = pruned.masks[l + 1].channels.clone();
        let block = &mut pruned.model.blocks[l];
        if next.len() != block.config.out_channels {
            return Err(Error::dims(
                "next-block channel mask",
                block.config.out_channels,
                next.len(),
            ));
        }
        let per_filter = block.temporal.in_channels * KERNEL_LEN;
        for oc in next.dropped() {
            block.temporal.weights[oc * per_filter..(oc + 1) * per_filter].fill(FixedQ8p8::ZERO);
        }
        let filters = &mut pruned.masks[l].filters;
        *filters = ChannelMask::from_bits(filters.bits().iter().zip(next.bits()).map(|(a, b)| *a && *b).collect());
    }
    Ok(pruned)
}

/// Applies `pattern` to the surviving temporal filters of one block.
pub fn apply_fine_grained_block(mut pruned: PrunedModel, block: usize, pattern: &CavityPattern) -> PrunedModel {
    let axis = pruned.cavity_axis;
    let filters = pruned.masks[block].filters.clone();
    let temporal = &mut pruned.model.blocks[block].temporal;
    for oc in filters.kept() {
        for ic in 0..temporal.in_channels {
            let phase = axis.phase_index(oc, ic);
            for tap in 0..KERNEL_LEN {
                if !pattern.kept(tap, phase) {
                    let idx = temporal.index(oc, ic, tap);
                    temporal.weights[idx] = FixedQ8p8::ZERO;
                }
            }
        }
    }
    pruned.masks[block].pattern = pattern.clone();
    pruned
}

/// Applies `pattern` to every block.
pub fn apply_fine_grained(pruned: PrunedModel, pattern: &CavityPattern) -> PrunedModel {
    (0..pruned.model.blocks.len()).fold(pruned, |p, b| apply_fine_grained_block(p, b, pattern))
}

/// Full pipeline: dataflow reorganisation, coarse temporal propagation,
/// then each block's cavity pattern.
pub fn hybrid_prune(model: &Model, spec: &PruneSpec) -> Result<PrunedModel> {
    let pruned = propagate_coarse_temporal(apply_dataflow_reorg(model, spec)?)?;
    let mut pruned = pruned;
    for b in 0..pruned.model.blocks.len() {
        let pattern = spec.block_pattern(b)?;
        pruned = apply_fine_grained_block(pruned, b, &pattern);
    }
    pruned.check_consistency()?;
    Ok(pruned)
}
