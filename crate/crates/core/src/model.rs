//! Model structure: ten graph-convolution blocks followed by a classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::fixed::FixedQ8p8;
use crate::graph::{AdjacencyStack, GRAPH_LEN, K_V};

/// Temporal kernel taps.
pub const KERNEL_LEN: usize = 9;
/// Zero padding on each end of the time axis.
pub const TEMPORAL_PAD: usize = 4;
/// Upper bound on channel counts; keeps every accumulation exact in `i64`.
pub const MAX_CHANNELS: usize = 1024;

/// 1×1 spatial convolution, weights indexed `(k, in_channel, out_channel)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpatialConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<FixedQ8p8>,
}

impl SpatialConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![FixedQ8p8::ZERO; K_V * in_channels * out_channels],
        }
    }

    #[inline]
    pub fn index(&self, k: usize, ic: usize, oc: usize) -> usize {
        (k * self.in_channels + ic) * self.out_channels + oc
    }

    #[inline]
    pub fn weight(&self, k: usize, ic: usize, oc: usize) -> FixedQ8p8 {
        self.weights[self.index(k, ic, oc)]
    }

    pub fn validate(&self) -> Result<()> {
        ensure_dims(
            "spatial weights",
            K_V * self.in_channels * self.out_channels,
            self.weights.len(),
        )
    }
}

/// 9×1 temporal convolution, weights indexed `(out_channel, in_channel, tap)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub weights: Vec<FixedQ8p8>,
}

impl TemporalConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            stride,
            weights: vec![FixedQ8p8::ZERO; out_channels * in_channels * KERNEL_LEN],
        }
    }

    pub fn kernel_len(&self) -> usize {
        KERNEL_LEN
    }

    #[inline]
    pub fn index(&self, oc: usize, ic: usize, tap: usize) -> usize {
        (oc * self.in_channels + ic) * KERNEL_LEN + tap
    }

    #[inline]
    pub fn weight(&self, oc: usize, ic: usize, tap: usize) -> FixedQ8p8 {
        self.weights[self.index(oc, ic, tap)]
    }

    /// All taps of filter `oc`.
    pub fn filter(&self, oc: usize) -> &[FixedQ8p8] {
        let n = self.in_channels * KERNEL_LEN;
        &self.weights[oc * n..(oc + 1) * n]
    }

    pub fn out_frames(&self, in_frames: usize) -> usize {
        in_frames.div_ceil(self.stride)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::InvalidConfig(format!(
                "temporal stride {} not in {{1, 2}}",
                self.stride
            )));
        }
        ensure_dims(
            "temporal weights",
            self.out_channels * self.in_channels * KERNEL_LEN,
            self.weights.len(),
        )
    }
}

/// Folded batch-norm: `y = scale · x + bias` per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePostOp {
    pub scale: Vec<f32>,
    pub bias: Vec<f32>,
}

impl AffinePostOp {
    pub fn identity(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            bias: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Scale and bias as Q8.8, the form used by the datapath.
    pub fn quantized(&self, channel: usize) -> (FixedQ8p8, FixedQ8p8) {
        (
            FixedQ8p8::quantize(self.scale[channel] as f64),
            FixedQ8p8::quantize(self.bias[channel] as f64),
        )
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        ensure_dims("affine scale", channels, self.scale.len())?;
        ensure_dims("affine bias", channels, self.bias.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortcutKind {
    Identity,
    Projection,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shortcut {
    Identity,
    /// Identity restricted to channels marked `true`; the rest contribute 0.
    MaskedIdentity(Vec<bool>),
    /// Strided 1×1 convolution, weights indexed `(out_channel, in_channel)`,
    /// followed by its own affine.
    Projection {
        weights: Vec<FixedQ8p8>,
        affine: AffinePostOp,
    },
}

impl Shortcut {
    pub fn kind(&self) -> ShortcutKind {
        match self {
            Shortcut::Identity | Shortcut::MaskedIdentity(_) => ShortcutKind::Identity,
            Shortcut::Projection { .. } => ShortcutKind::Projection,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub shortcut: ShortcutKind,
}

impl BlockConfig {
    pub fn new(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        let shortcut = if in_channels == out_channels && stride == 1 {
            ShortcutKind::Identity
        } else {
            ShortcutKind::Projection
        };
        Self {
            in_channels,
            out_channels,
            stride,
            shortcut,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frames: usize,
    pub num_classes: usize,
    pub classifier_bias: bool,
    pub blocks: Vec<BlockConfig>,
}

impl ModelConfig {
    /// Channel widths 64×4, 128×3, 256×3 with stride 2 entering blocks 5 and
    /// 8; 3 input channels, 300 frames.
    pub fn standard(num_classes: usize) -> Self {
        let widths = [64, 64, 64, 64, 128, 128, 128, 256, 256, 256];
        let mut blocks = Vec::with_capacity(widths.len());
        let mut in_channels = 3;
        for (i, &out) in widths.iter().enumerate() {
            let stride = if i == 4 || i == 7 { 2 } else { 1 };
            blocks.push(BlockConfig::new(in_channels, out, stride));
            in_channels = out;
        }
        Self {
            frames: 300,
            num_classes,
            classifier_bias: true,
            blocks,
        }
    }

    /// Small model for fuzzing: widths given per block, 3 input channels.
    pub fn micro(input_channels: usize, widths: &[usize], strides: &[usize], frames: usize) -> Self {
        let mut blocks = Vec::with_capacity(widths.len());
        let mut in_channels = input_channels;
        for (i, &out) in widths.iter().enumerate() {
            blocks.push(BlockConfig::new(in_channels, out, strides.get(i).copied().unwrap_or(1)));
            in_channels = out;
        }
        Self {
            frames,
            num_classes: 4,
            classifier_bias: true,
            blocks,
        }
    }

    pub fn input_channels(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.in_channels)
    }

    pub fn output_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.out_channels)
    }

    /// Frames entering each block for an input of `frames` frames.
    pub fn block_frames(&self, frames: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut t = frames;
        for b in &self.blocks {
            out.push(t);
            t = t.div_ceil(b.stride);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidConfig("model has no blocks".into()));
        }
        if self.frames == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig("frames and classes must be positive".into()));
        }
        let mut prev_out = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            let name = i + 1;
            if b.in_channels == 0 || b.out_channels == 0 {
                return Err(Error::InvalidConfig(format!("block {name} has zero channels")));
            }
            if b.in_channels > MAX_CHANNELS || b.out_channels > MAX_CHANNELS {
                return Err(Error::InvalidConfig(format!(
                    "block {name} exceeds {MAX_CHANNELS} channels"
                )));
            }
            if !matches!(b.stride, 1 | 2) {
                return Err(Error::InvalidConfig(format!("block {name} stride {}", b.stride)));
            }
            if i > 0 && b.in_channels != prev_out {
                return Err(Error::InvalidConfig(format!(
                    "block {name} expects {} input channels, previous block emits {prev_out}",
                    b.in_channels
                )));
            }
            if b.out_channels < prev_out {
                return Err(Error::InvalidConfig(format!(
                    "block {name} narrows channels from {prev_out} to {}",
                    b.out_channels
                )));
            }
            if (b.in_channels != b.out_channels || b.stride != 1) && b.shortcut != ShortcutKind::Projection {
                return Err(Error::InvalidConfig(format!(
                    "block {name} changes shape and needs a projection shortcut"
                )));
            }
            prev_out = b.out_channels;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub config: BlockConfig,
    pub graphs: AdjacencyStack,
    pub spatial: SpatialConvLayer,
    pub spatial_affine: AffinePostOp,
    pub temporal: TemporalConvLayer,
    pub temporal_affine: AffinePostOp,
    pub shortcut: Shortcut,
}

impl Block {
    /// All-zero weights, identity affines, skeleton graphs.
    pub fn zeros(config: BlockConfig) -> Self {
        let BlockConfig {
            in_channels: ic,
            out_channels: oc,
            stride,
            shortcut,
        } = config;
        let shortcut = match shortcut {
            ShortcutKind::Identity => Shortcut::Identity,
            ShortcutKind::Projection => Shortcut::Projection {
                weights: vec![FixedQ8p8::ZERO; oc * ic],
                affine: AffinePostOp::identity(oc),
            },
        };
        Self {
            config,
            graphs: AdjacencyStack::skeleton(),
            spatial: SpatialConvLayer::zeros(ic, oc),
            spatial_affine: AffinePostOp::identity(oc),
            temporal: TemporalConvLayer::zeros(oc, oc, stride),
            temporal_affine: AffinePostOp::identity(oc),
            shortcut,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        self.spatial.validate()?;
        self.temporal.validate()?;
        ensure_dims("spatial in", c.in_channels, self.spatial.in_channels)?;
        ensure_dims("spatial out", c.out_channels, self.spatial.out_channels)?;
        ensure_dims("temporal in", c.out_channels, self.temporal.in_channels)?;
        ensure_dims("temporal out", c.out_channels, self.temporal.out_channels)?;
        ensure_dims("temporal stride", c.stride, self.temporal.stride)?;
        self.spatial_affine.validate(c.out_channels)?;
        self.temporal_affine.validate(c.out_channels)?;
        match &self.shortcut {
            Shortcut::Identity => {}
            Shortcut::MaskedIdentity(gate) => ensure_dims("shortcut gate", c.in_channels, gate.len())?,
            Shortcut::Projection { weights, affine } => {
                ensure_dims("projection weights", c.out_channels * c.in_channels, weights.len())?;
                affine.validate(c.out_channels)?;
            }
        }
        if self.shortcut.kind() != c.shortcut {
            return Err(Error::InvalidConfig("shortcut kind disagrees with config".into()));
        }
        Ok(())
    }
}

/// Fully-connected classifier over pooled channels, weights `(class, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub blocks: Vec<Block>,
    pub classifier: Classifier,
}

impl Model {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let blocks = config.blocks.iter().map(|&b| Block::zeros(b)).collect();
        let channels = config.output_channels();
        let classifier = Classifier {
            weights: vec![0.0; config.num_classes * channels],
            bias: config.classifier_bias.then(|| vec![0.0; config.num_classes]),
        };
        Ok(Self {
            config,
            blocks,
            classifier,
        })
    }

    /// Seeded random weights: He-style normal conv weights (never exactly
    /// zero after quantization), near-identity affines, small dense `B_k`.
    pub fn synthesize(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut model.blocks {
            let c = block.config;
            let residue: Vec<f64> = (0..K_V * GRAPH_LEN).map(|_| rng.random_range(-0.05..0.05)).collect();
            block.graphs = AdjacencyStack::with_residue(&residue)?;
            fill_nonzero(&mut block.spatial.weights, (K_V * c.in_channels) as f64, &mut rng);
            fill_nonzero(
                &mut block.temporal.weights,
                (KERNEL_LEN * c.out_channels) as f64,
                &mut rng,
            );
            block.spatial_affine = random_affine(c.out_channels, &mut rng);
            block.temporal_affine = random_affine(c.out_channels, &mut rng);
            if let Shortcut::Projection { weights, affine } = &mut block.shortcut {
                fill_nonzero(weights, c.in_channels as f64, &mut rng);
                *affine = random_affine(c.out_channels, &mut rng);
            }
        }
        let fan_in = model.config.output_channels() as f64;
        let normal = Normal::new(0.0, (1.0 / fan_in).sqrt()).expect("finite std");
        for w in &mut model.classifier.weights {
            *w = normal.sample(&mut rng) as f32;
        }
        if let Some(bias) = &mut model.classifier.bias {
            for b in bias {
                *b = rng.random_range(-0.1f32..0.1);
            }
        }
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        ensure_dims("block count", self.config.blocks.len(), self.blocks.len())?;
        for (i, (b, c)) in self.blocks.iter().zip(&self.config.blocks).enumerate() {
            if b.config != *c {
                return Err(Error::InvalidConfig(format!("block {} config mismatch", i + 1)));
            }
            b.validate()?;
        }
        ensure_dims(
            "classifier weights",
            self.config.num_classes * self.config.output_channels(),
            self.classifier.weights.len(),
        )?;
        match (&self.classifier.bias, self.config.classifier_bias) {
            (Some(b), true) => ensure_dims("classifier bias", self.config.num_classes, b.len()),
            (None, false) => Ok(()),
            _ => Err(Error::InvalidConfig("classifier bias presence mismatch".into())),
        }
    }
}

fn fill_nonzero(weights: &mut [FixedQ8p8], fan_in: f64, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
    for w in weights {
        let x: f64 = normal.sample(rng);
        let q = FixedQ8p8::quantize(x);
        *w = if q.is_zero() {
            FixedQ8p8::from_raw(if x < 0.0 { -1 } else { 1 })
        } else {
            q
        };
    }
}

fn random_affine(channels: usize, rng: &mut ChaCha8Rng) -> AffinePostOp {
    AffinePostOp {
        scale: (0..channels).map(|_| rng.random_range(0.75f32..1.25)).collect(),
        bias: (0..channels).map(|_| rng.random_range(-0.1f32..0.1)).collect(),
    }
}

/// Seeded random input tensor with values in roughly `[-2, 2)`.
pub fn random_input(channels: usize, frames: usize, seed: u64) -> crate::tensor::FeatureTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    crate::tensor::FeatureTensor::from_fn(channels, frames, |_, _, _| {
        FixedQ8p8::from_raw(rng.random_range(-512..512))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shape() {
        let c = ModelConfig::standard(60);
        c.validate().unwrap();
        assert_eq!(c.blocks.len(), 10);
        assert_eq!(
            c.block_frames(300),
            vec![300, 300, 300, 300, 300, 150, 150, 150, 75, 75]
        );
        assert_eq!(c.blocks[0].shortcut, ShortcutKind::Projection);
        assert_eq!(c.blocks[1].shortcut, ShortcutKind::Identity);
        assert_eq!(c.blocks[4].stride, 2);
        assert_eq!(c.blocks[7].stride, 2);
    }

    #[test]
    fn rejects_identity_across_shape_change() {
        let mut c = ModelConfig::standard(60);
        c.blocks[4].shortcut = ShortcutKind::Identity;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_narrowing() {
        let c = ModelConfig::micro(3, &[8, 4], &[1, 1], 4);
        assert!(c.validate().is_err());
    }

    #[test]
    fn synthesized_weights_nonzero_and_deterministic() {
        let c = ModelConfig::micro(3, &[4, 8], &[1, 2], 6);
        let a = Model::synthesize(c.clone(), 7).unwrap();
        let b = Model::synthesize(c, 7).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.blocks.iter().all(|b| b.spatial.weights.iter().all(|w| !w.is_zero())));
    }
}
