use serde::Serialize;

use super::PrunedModel;
use crate::graph::{GRAPH_LEN, K_V};
use crate::model::Shortcut;
use crate::sparse::InputSkip;

/// Graph-product MACs one input channel costs over `frames` frames.
pub fn graph_macs_per_channel(frames: usize) -> u64 {
    (K_V * GRAPH_LEN * frames) as u64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockStats {
    pub in_channels: usize,
    pub kept_channels: usize,
    pub out_channels: usize,
    pub kept_filters: usize,
    pub frames: usize,
    pub params: u64,
    pub nonzero_params: u64,
    pub temporal_params: u64,
    pub temporal_nonzero: u64,
    pub graph_macs: u64,
    pub graph_macs_skipped: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PruneStats {
    pub total_params: u64,
    pub nonzero_params: u64,
    /// `total_params / nonzero_params`.
    pub compression_ratio: f64,
    /// Fraction of graph-product MACs removed by dropped input channels.
    pub graph_skip_efficiency: f64,
    /// Fraction of temporal weights that are zero.
    pub temporal_sparsity: f64,
    pub blocks: Vec<BlockStats>,
}

fn nonzero<'a>(w: impl IntoIterator<Item = &'a crate::fixed::FixedQ8p8>) -> u64 {
    w.into_iter().filter(|x| !x.is_zero()).count() as u64
}

/// Parameter and workload statistics. Parameters are the spatial,
/// temporal, projection and classifier weights; graphs, affines and biases
/// are excluded.
pub fn compression_stats(pruned: &PrunedModel) -> PruneStats {
    let model = &pruned.model;
    let frames = match pruned.input_skip {
        InputSkip::Off => model.config.frames,
        skip => skip.frames_after(model.config.frames),
    };
    let block_frames = model.config.block_frames(frames);
    let mut blocks = Vec::with_capacity(model.blocks.len());
    for ((block, masks), &t) in model.blocks.iter().zip(&pruned.masks).zip(&block_frames) {
        let mut params = (block.spatial.weights.len() + block.temporal.weights.len()) as u64;
        let mut nz = nonzero(&block.spatial.weights) + nonzero(&block.temporal.weights);
        if let Shortcut::Projection { weights, .. } = &block.shortcut {
            params += weights.len() as u64;
            nz += nonzero(weights);
        }
        let per = graph_macs_per_channel(t);
        let c = block.config;
        blocks.push(BlockStats {
            in_channels: c.in_channels,
            kept_channels: masks.channels.kept_count(),
            out_channels: c.out_channels,
            kept_filters: masks.filters.kept_count(),
            frames: t,
            params,
            nonzero_params: nz,
            temporal_params: block.temporal.weights.len() as u64,
            temporal_nonzero: nonzero(&block.temporal.weights),
            graph_macs: per * c.in_channels as u64,
            graph_macs_skipped: per * masks.channels.dropped_count() as u64,
        });
    }
    let classifier = model.classifier.weights.len() as u64;
    let classifier_nz = model.classifier.weights.iter().filter(|w| **w != 0.0).count() as u64;
    let total_params = blocks.iter().map(|b| b.params).sum::<u64>() + classifier;
    let nonzero_params = blocks.iter().map(|b| b.nonzero_params).sum::<u64>() + classifier_nz;
    let graph_total: u64 = blocks.iter().map(|b| b.graph_macs).sum();
    let graph_skipped: u64 = blocks.iter().map(|b| b.graph_macs_skipped).sum();
    let temporal_total: u64 = blocks.iter().map(|b| b.temporal_params).sum();
    let temporal_nz: u64 = blocks.iter().map(|b| b.temporal_nonzero).sum();
    PruneStats {
        total_params,
        nonzero_params,
        compression_ratio: if nonzero_params == 0 {
            f64::INFINITY
        } else {
            total_params as f64 / nonzero_params as f64
        },
        graph_skip_efficiency: if graph_total == 0 {
            0.0
        } else {
            graph_skipped as f64 / graph_total as f64
        },
        temporal_sparsity: if temporal_total == 0 {
            0.0
        } else {
            1.0 - temporal_nz as f64 / temporal_total as f64
        },
        blocks,
    }
}
