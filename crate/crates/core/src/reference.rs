//! Dense reference inference.
//!
//! These functions are the correctness oracle for every optimized path. They
//! follow the original multiplication order (graph product, then 1×1
//! convolution, then the sum over the neighbour sets), accumulate exactly and
//! round once per output value.

use crate::error::{ensure_dims, Error, Result};
use crate::fixed::{requantize, Accumulator, FixedQ8p8};
use crate::graph::{AdjacencyStack, K_V};
use crate::model::{
    AffinePostOp, Block, Model, Shortcut, SpatialConvLayer, TemporalConvLayer, KERNEL_LEN, TEMPORAL_PAD,
};
use crate::tensor::{FeatureTensor, VERTICES};

/// Fractional bits of a feature × graph × weight product.
pub const TRIPLE_FRAC: u32 = 24;
/// Fractional bits of a feature × weight product.
pub const DOUBLE_FRAC: u32 = 16;

fn check_spatial(f_in: &FeatureTensor, w: &SpatialConvLayer) -> Result<()> {
    w.validate()?;
    ensure_dims("spatial input channels", w.in_channels, f_in.channels())
}

/// `Σ_k (f_in · G_k) ⊗ W_k` in the original order.
pub fn graph_spatial_forward_ref(
    f_in: &FeatureTensor,
    g: &AdjacencyStack,
    w: &SpatialConvLayer,
) -> Result<FeatureTensor> {
    check_spatial(f_in, w)?;
    let (ic_n, oc_n, frames) = (w.in_channels, w.out_channels, f_in.frames());
    let mut acc = vec![0i64; oc_n * frames * VERTICES];
    let mut graph_out = vec![0i64; ic_n * frames * VERTICES];
    for k in 0..K_V {
        // Graph phase: exact f_in × G_k, 16 fractional bits.
        for ic in 0..ic_n {
            for t in 0..frames {
                let row = f_in.row(ic, t);
                for col in 0..VERTICES {
                    let mut s = Accumulator::new();
                    for (p, &x) in row.iter().enumerate() {
                        s.mac2(x, g.entry(k, p, col));
                    }
                    graph_out[(ic * frames + t) * VERTICES + col] = s.raw();
                }
            }
        }
        // Convolution phase, merged over k.
        for oc in 0..oc_n {
            for ic in 0..ic_n {
                let wt = w.weight(k, ic, oc).raw() as i64;
                for t in 0..frames {
                    for col in 0..VERTICES {
                        acc[(oc * frames + t) * VERTICES + col] += wt * graph_out[(ic * frames + t) * VERTICES + col];
                    }
                }
            }
        }
    }
    FeatureTensor::from_data(
        oc_n,
        frames,
        acc.into_iter().map(|a| requantize(a, TRIPLE_FRAC)).collect(),
    )
}

/// Reordered form: per input channel, each graph product term is scaled by
/// the channel's weight inside the channel sum.
pub fn reordered_forward(f_in: &FeatureTensor, g: &AdjacencyStack, w: &SpatialConvLayer) -> Result<FeatureTensor> {
    check_spatial(f_in, w)?;
    let (ic_n, oc_n, frames) = (w.in_channels, w.out_channels, f_in.frames());
    let mut out = FeatureTensor::zeros(oc_n, frames);
    for t in 0..frames {
        for col in 0..VERTICES {
            for oc in 0..oc_n {
                let mut acc = Accumulator::new();
                for ic in 0..ic_n {
                    let row = f_in.row(ic, t);
                    for k in 0..K_V {
                        let wt = w.weight(k, ic, oc);
                        for (p, &x) in row.iter().enumerate() {
                            acc.mac3(g.entry(k, p, col), x, wt);
                        }
                    }
                }
                out.set(oc, t, col, acc.write_out(TRIPLE_FRAC));
            }
        }
    }
    Ok(out)
}

/// Per-vertex 9-tap convolution along time with zero padding of 4.
pub fn temporal_conv_ref(f_in: &FeatureTensor, w: &TemporalConvLayer) -> Result<FeatureTensor> {
    w.validate()?;
    ensure_dims("temporal input channels", w.in_channels, f_in.channels())?;
    let frames = f_in.frames();
    let out_frames = w.out_frames(frames);
    let mut out = FeatureTensor::zeros(w.out_channels, out_frames);
    for oc in 0..w.out_channels {
        for to in 0..out_frames {
            for v in 0..VERTICES {
                let mut acc = Accumulator::new();
                for ic in 0..w.in_channels {
                    for tap in 0..KERNEL_LEN {
                        let src = (to * w.stride + tap) as isize - TEMPORAL_PAD as isize;
                        if src < 0 || src >= frames as isize {
                            continue;
                        }
                        acc.mac2(w.weight(oc, ic, tap), f_in.get(ic, src as usize, v));
                    }
                }
                out.set(oc, to, v, acc.write_out(DOUBLE_FRAC));
            }
        }
    }
    Ok(out)
}

/// `scale · x + bias`, rounded once.
pub fn apply_affine(x: &FeatureTensor, affine: &AffinePostOp) -> Result<FeatureTensor> {
    affine.validate(x.channels())?;
    let mut out = x.clone();
    for c in 0..x.channels() {
        let (s, b) = affine.quantized(c);
        let bias = (b.raw() as i64) << FixedQ8p8::FRAC_BITS;
        for t in 0..x.frames() {
            for value in out.row_mut(c, t) {
                *value = requantize(value.raw() as i64 * s.raw() as i64 + bias, DOUBLE_FRAC);
            }
        }
    }
    Ok(out)
}

/// Strided 1×1 projection, weights `(out_channel, in_channel)`.
pub fn projection_ref(
    f_in: &FeatureTensor,
    weights: &[FixedQ8p8],
    out_channels: usize,
    stride: usize,
) -> Result<FeatureTensor> {
    let ic_n = f_in.channels();
    ensure_dims("projection weights", out_channels * ic_n, weights.len())?;
    let out_frames = f_in.frames().div_ceil(stride);
    let mut out = FeatureTensor::zeros(out_channels, out_frames);
    for oc in 0..out_channels {
        for to in 0..out_frames {
            for v in 0..VERTICES {
                let mut acc = Accumulator::new();
                for ic in 0..ic_n {
                    acc.mac2(weights[oc * ic_n + ic], f_in.get(ic, to * stride, v));
                }
                out.set(oc, to, v, acc.write_out(DOUBLE_FRAC));
            }
        }
    }
    Ok(out)
}

/// Shortcut branch of a block.
pub fn shortcut_ref(f_in: &FeatureTensor, block: &Block) -> Result<FeatureTensor> {
    match &block.shortcut {
        Shortcut::Identity => Ok(f_in.clone()),
        Shortcut::MaskedIdentity(gate) => {
            ensure_dims("shortcut gate", f_in.channels(), gate.len())?;
            Ok(FeatureTensor::from_fn(f_in.channels(), f_in.frames(), |c, t, v| {
                if gate[c] {
                    f_in.get(c, t, v)
                } else {
                    FixedQ8p8::ZERO
                }
            }))
        }
        Shortcut::Projection { weights, affine } => {
            let p = projection_ref(f_in, weights, block.config.out_channels, block.config.stride)?;
            apply_affine(&p, affine)
        }
    }
}

/// Saturating elementwise sum followed by ReLU.
pub fn residual_relu(main: &FeatureTensor, shortcut: &FeatureTensor) -> Result<FeatureTensor> {
    ensure_dims("residual channels", main.channels(), shortcut.channels())?;
    ensure_dims("residual frames", main.frames(), shortcut.frames())?;
    let data = main
        .data()
        .iter()
        .zip(shortcut.data())
        .map(|(a, b)| a.saturating_add(*b).relu())
        .collect();
    FeatureTensor::from_data(main.channels(), main.frames(), data)
}

/// Spatial stage, affine, ReLU, temporal stage, affine, shortcut add, ReLU.
pub fn block_forward_ref(f_in: &FeatureTensor, block: &Block) -> Result<FeatureTensor> {
    block.validate()?;
    ensure_dims("block input channels", block.config.in_channels, f_in.channels())?;
    let s = graph_spatial_forward_ref(f_in, &block.graphs, &block.spatial)?;
    let s = apply_affine(&s, &block.spatial_affine)?.relu();
    let t = temporal_conv_ref(&s, &block.temporal)?;
    let t = apply_affine(&t, &block.temporal_affine)?;
    residual_relu(&t, &shortcut_ref(f_in, block)?)
}

/// Mean of every channel over time and joints.
pub fn global_average_pool(x: &FeatureTensor) -> Vec<f64> {
    let n = (x.frames() * VERTICES) as f64;
    (0..x.channels())
        .map(|c| {
            let sum: i64 = (0..x.frames())
                .flat_map(|t| x.row(c, t).iter())
                .map(|v| v.raw() as i64)
                .sum();
            sum as f64 / FixedQ8p8::SCALE / n
        })
        .collect()
}

pub fn classifier_scores(model: &Model, pooled: &[f64]) -> Result<Vec<f64>> {
    let channels = model.config.output_channels();
    ensure_dims("pooled channels", channels, pooled.len())?;
    Ok((0..model.config.num_classes)
        .map(|cls| {
            let row = &model.classifier.weights[cls * channels..(cls + 1) * channels];
            let dot: f64 = row.iter().zip(pooled).map(|(&w, &x)| w as f64 * x).sum();
            dot + model.classifier.bias.as_ref().map_or(0.0, |b| b[cls] as f64)
        })
        .collect())
}

/// Runs every block and returns each block's output.
pub fn model_forward_trace(f_in: &FeatureTensor, model: &Model) -> Result<Vec<FeatureTensor>> {
    model.validate()?;
    let mut outs: Vec<FeatureTensor> = Vec::with_capacity(model.blocks.len());
    for block in &model.blocks {
        let input = outs.last().unwrap_or(f_in);
        outs.push(block_forward_ref(input, block)?);
    }
    Ok(outs)
}

/// Blocks in sequence, global average pool, classifier.
pub fn model_forward_ref(f_in: &FeatureTensor, model: &Model) -> Result<Vec<f64>> {
    let outs = model_forward_trace(f_in, model)?;
    let last = outs.last().ok_or_else(|| Error::InvalidConfig("no blocks".into()))?;
    classifier_scores(model, &global_average_pool(last))
}

/// Embeddings for the data-dependent similarity graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfSimilarityParams {
    pub in_channels: usize,
    pub embed_dim: usize,
    /// `(embed, channel)`.
    pub theta: Vec<f64>,
    /// `(embed, channel)`.
    pub phi: Vec<f64>,
}

/// Row-softmax of `θ(f)ᵀ φ(f) / (embed_dim · frames)`, a 25×25 row-major
/// matrix. Computed in floating point; never used by the optimized path.
pub fn self_similarity_ref(f_in: &FeatureTensor, p: &SelfSimilarityParams) -> Result<Vec<f64>> {
    ensure_dims("similarity channels", p.in_channels, f_in.channels())?;
    ensure_dims("theta", p.embed_dim * p.in_channels, p.theta.len())?;
    ensure_dims("phi", p.embed_dim * p.in_channels, p.phi.len())?;
    let frames = f_in.frames();
    let embed = |m: &[f64], e: usize, t: usize, v: usize| -> f64 {
        (0..p.in_channels)
            .map(|c| m[e * p.in_channels + c] * f_in.get(c, t, v).to_f64())
            .sum()
    };
    let mut a = vec![vec![0.0; p.embed_dim * frames]; VERTICES];
    let mut b = vec![vec![0.0; p.embed_dim * frames]; VERTICES];
    for v in 0..VERTICES {
        for e in 0..p.embed_dim {
            for t in 0..frames {
                a[v][e * frames + t] = embed(&p.theta, e, t, v);
                b[v][e * frames + t] = embed(&p.phi, e, t, v);
            }
        }
    }
    let norm = (p.embed_dim * frames).max(1) as f64;
    let mut out = vec![0.0; VERTICES * VERTICES];
    for v in 0..VERTICES {
        let logits: Vec<f64> = (0..VERTICES)
            .map(|u| a[v].iter().zip(&b[u]).map(|(x, y)| x * y).sum::<f64>() / norm)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for u in 0..VERTICES {
            out[v * VERTICES + u] = exps[u] / total;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockConfig, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(rng: &mut ChaCha8Rng, r: i16) -> FixedQ8p8 {
        FixedQ8p8::from_raw(rng.random_range(-r..=r))
    }

    /// Exact rational `n / 2^frac` rounded by the float quantizer, an
    /// independent route from `requantize`.
    fn oracle_round(n: i128, frac: u32) -> FixedQ8p8 {
        assert!(n.unsigned_abs() < 1 << 52);
        FixedQ8p8::quantize(n as f64 / (1u64 << frac) as f64)
    }

    fn random_stack(rng: &mut ChaCha8Rng) -> AdjacencyStack {
        AdjacencyStack::from_graphs((0..K_V * 625).map(|_| raw(rng, 300)).collect()).unwrap()
    }

    #[test]
    fn identity_graph_passes_channel_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = FeatureTensor::from_fn(3, 2, |_, _, _| raw(&mut rng, 500));
        let mut w = SpatialConvLayer::zeros(3, 4);
        let i = w.index(0, 0, 0);
        w.weights[i] = FixedQ8p8::ONE;
        // Identity in every k, but only W(k=0) is non-zero.
        let out = graph_spatial_forward_ref(&f, &AdjacencyStack::identity(), &w).unwrap();
        for t in 0..2 {
            assert_eq!(out.row(0, t), f.row(0, t));
            for oc in 1..4 {
                assert!(out.row(oc, t).iter().all(|x| x.is_zero()));
            }
        }
    }

    #[test]
    fn single_channel_matches_matrix_vector_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let f = FeatureTensor::from_fn(1, 1, |_, _, _| raw(&mut rng, 2000));
            let g = random_stack(&mut rng);
            let mut w = SpatialConvLayer::zeros(1, 1);
            w.weights[0] = raw(&mut rng, 600);
            let out = graph_spatial_forward_ref(&f, &g, &w).unwrap();
            for col in 0..VERTICES {
                let n: i128 = (0..VERTICES)
                    .map(|p| f.get(0, 0, p).raw() as i128 * g.entry(0, p, col).raw() as i128)
                    .sum::<i128>()
                    * w.weights[0].raw() as i128;
                assert_eq!(out.get(0, 0, col), oracle_round(n, 24));
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_stack(&mut rng);
        let mut w = SpatialConvLayer::zeros(2, 3);
        w.weights.iter_mut().for_each(|x| *x = raw(&mut rng, 300));
        let f = FeatureTensor::zeros(2, 3);
        assert_eq!(graph_spatial_forward_ref(&f, &g, &w).unwrap().count_zeros(), 3 * 3 * 25);
        assert_eq!(reordered_forward(&f, &g, &w).unwrap().count_zeros(), 3 * 3 * 25);
    }

    #[test]
    fn reordered_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let f = FeatureTensor::from_fn(2, 2, |_, _, _| raw(&mut rng, 1500));
            let g = random_stack(&mut rng);
            let mut w = SpatialConvLayer::zeros(2, 3);
            w.weights.iter_mut().for_each(|x| *x = raw(&mut rng, 400));
            let out = reordered_forward(&f, &g, &w).unwrap();
            for oc in 0..3 {
                for t in 0..2 {
                    for col in 0..VERTICES {
                        let mut n = 0i128;
                        for k in 0..K_V {
                            for ic in 0..2 {
                                for p in 0..VERTICES {
                                    n += f.get(ic, t, p).raw() as i128
                                        * g.entry(k, p, col).raw() as i128
                                        * w.weight(k, ic, oc).raw() as i128;
                                }
                            }
                        }
                        assert_eq!(out.get(oc, t, col), oracle_round(n, 24));
                    }
                }
            }
        }
    }

    #[test]
    fn zero_weight_channel_equals_channel_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = FeatureTensor::from_fn(3, 2, |_, _, _| raw(&mut rng, 1000));
        let g = random_stack(&mut rng);
        let mut w = SpatialConvLayer::zeros(3, 2);
        w.weights.iter_mut().for_each(|x| *x = raw(&mut rng, 400));
        for k in 0..K_V {
            for oc in 0..2 {
                let i = w.index(k, 1, oc);
                w.weights[i] = FixedQ8p8::ZERO;
            }
        }
        let f2 = FeatureTensor::from_fn(2, 2, |c, t, v| f.get(if c == 0 { 0 } else { 2 }, t, v));
        let mut w2 = SpatialConvLayer::zeros(2, 2);
        for k in 0..K_V {
            for oc in 0..2 {
                let (a, b) = (w2.index(k, 0, oc), w2.index(k, 1, oc));
                w2.weights[a] = w.weight(k, 0, oc);
                w2.weights[b] = w.weight(k, 2, oc);
            }
        }
        assert_eq!(
            reordered_forward(&f, &g, &w).unwrap(),
            reordered_forward(&f2, &g, &w2).unwrap()
        );
    }

    #[test]
    fn temporal_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = FeatureTensor::from_fn(2, 7, |_, _, _| raw(&mut rng, 3000));
        let mut w = TemporalConvLayer::zeros(2, 2, 1);
        for c in 0..2 {
            let i = w.index(c, c, 4);
            w.weights[i] = FixedQ8p8::ONE;
        }
        assert_eq!(temporal_conv_ref(&f, &w).unwrap(), f);
    }

    #[test]
    fn temporal_box_filter_on_constant() {
        let f = FeatureTensor::from_fn(3, 20, |_, _, _| FixedQ8p8::ONE);
        let mut w = TemporalConvLayer::zeros(3, 1, 1);
        w.weights.iter_mut().for_each(|x| *x = FixedQ8p8::ONE);
        let out = temporal_conv_ref(&f, &w).unwrap();
        assert_eq!(out.get(0, 10, 3).to_f64(), 27.0);
        // Edge frame sees 5 real taps per channel.
        assert_eq!(out.get(0, 0, 3).to_f64(), 15.0);
    }

    #[test]
    fn temporal_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for stride in [1, 2] {
            for frames in [1, 4, 5, 9] {
                let f = FeatureTensor::from_fn(2, frames, |_, _, _| raw(&mut rng, 800));
                let mut w = TemporalConvLayer::zeros(2, 3, stride);
                w.weights.iter_mut().for_each(|x| *x = raw(&mut rng, 300));
                let out = temporal_conv_ref(&f, &w).unwrap();
                assert_eq!(out.frames(), frames.div_ceil(stride));
                for oc in 0..3 {
                    for to in 0..out.frames() {
                        for v in 0..VERTICES {
                            let mut n = 0i128;
                            for ic in 0..2 {
                                for tap in 0..9 {
                                    let src = (to * stride + tap) as i64 - 4;
                                    if (0..frames as i64).contains(&src) {
                                        n += w.weight(oc, ic, tap).raw() as i128
                                            * f.get(ic, src as usize, v).raw() as i128;
                                    }
                                }
                            }
                            assert_eq!(out.get(oc, to, v), oracle_round(n, 16));
                        }
                    }
                }
            }
        }
    }

    fn params(c: usize, e: usize, rng: &mut ChaCha8Rng) -> SelfSimilarityParams {
        SelfSimilarityParams {
            in_channels: c,
            embed_dim: e,
            theta: (0..c * e).map(|_| rng.random_range(-1.0..1.0)).collect(),
            phi: (0..c * e).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn similarity_of_zero_input_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = self_similarity_ref(&FeatureTensor::zeros(3, 4), &params(3, 2, &mut rng)).unwrap();
        assert!(m.iter().all(|&x| (x - 1.0 / 25.0).abs() < 1e-15));
    }

    #[test]
    fn similarity_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let f = FeatureTensor::from_fn(3, 5, |_, _, _| raw(&mut rng, 1000));
            let m = self_similarity_ref(&f, &params(3, 4, &mut rng)).unwrap();
            for v in 0..25 {
                let s: f64 = m[v * 25..(v + 1) * 25].iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn similarity_single_channel_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = FeatureTensor::from_fn(1, 1, |_, _, _| raw(&mut rng, 300));
        let p = params(1, 1, &mut rng);
        let m = self_similarity_ref(&f, &p).unwrap();
        let wq = p.theta[0] * p.phi[0];
        for v in 0..25 {
            let logits: Vec<f64> = (0..25)
                .map(|u| f.get(0, 0, v).to_f64() * wq * f.get(0, 0, u).to_f64())
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for u in 0..25 {
                assert!((m[v * 25 + u] - logits[u].exp() / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_block_is_relu_of_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let block = Block::zeros(BlockConfig::new(4, 4, 1));
        let f = FeatureTensor::from_fn(4, 6, |_, _, _| raw(&mut rng, 2000));
        assert_eq!(block_forward_ref(&f, &block).unwrap(), f.relu());
    }

    #[test]
    fn block_matches_composed_ops_and_is_nonnegative() {
        let cfg = ModelConfig::micro(1, &[1], &[1], 5);
        let model = Model::synthesize(cfg, 12).unwrap();
        let b = &model.blocks[0];
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = FeatureTensor::from_fn(1, 5, |_, _, _| raw(&mut rng, 700));
        let out = block_forward_ref(&f, b).unwrap();
        // Composition of the individual operators, written out independently.
        let s = reordered_forward(&f, &b.graphs, &b.spatial).unwrap();
        let s = apply_affine(&s, &b.spatial_affine).unwrap().relu();
        let t = apply_affine(&temporal_conv_ref(&s, &b.temporal).unwrap(), &b.temporal_affine).unwrap();
        let expected = FeatureTensor::from_fn(1, 5, |c, tt, v| t.get(c, tt, v).saturating_add(f.get(c, tt, v)).relu());
        assert_eq!(out, expected);
        assert!(out.data().iter().all(|x| x.raw() >= 0));
    }

    #[test]
    fn zero_model_scores_zero() {
        let mut cfg = ModelConfig::micro(3, &[4, 4], &[1, 1], 4);
        cfg.classifier_bias = true;
        let model = Model::zeros(cfg).unwrap();
        let scores = model_forward_ref(&FeatureTensor::zeros(3, 4), &model).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn argmax_invariant_under_positive_scaling() {
        let cfg = ModelConfig::micro(3, &[4, 4], &[1, 2], 6);
        let mut model = Model::synthesize(cfg, 14).unwrap();
        model.classifier.bias = None;
        model.config.classifier_bias = false;
        let f = crate::model::random_input(3, 6, 15);
        let argmax = |s: &[f64]| s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let a = argmax(&model_forward_ref(&f, &model).unwrap());
        model.classifier.weights.iter_mut().for_each(|w| *w *= 3.5);
        assert_eq!(a, argmax(&model_forward_ref(&f, &model).unwrap()));
    }

    #[test]
    fn micro_model_matches_straight_line_composition() {
        let cfg = ModelConfig::micro(3, &[4, 4], &[1, 2], 6);
        let model = Model::synthesize(cfg, 16).unwrap();
        let f = crate::model::random_input(3, 6, 17);
        let mut x = f.clone();
        for b in &model.blocks {
            let s = apply_affine(
                &reordered_forward(&x, &b.graphs, &b.spatial).unwrap(),
                &b.spatial_affine,
            )
            .unwrap()
            .relu();
            let t = apply_affine(&temporal_conv_ref(&s, &b.temporal).unwrap(), &b.temporal_affine).unwrap();
            let sc = shortcut_ref(&x, b).unwrap();
            x = residual_relu(&t, &sc).unwrap();
        }
        let pooled = global_average_pool(&x);
        let expected: Vec<f64> = (0..4)
            .map(|cls| {
                (0..4)
                    .map(|c| model.classifier.weights[cls * 4 + c] as f64 * pooled[c])
                    .sum::<f64>()
                    + model.classifier.bias.as_ref().unwrap()[cls] as f64
            })
            .collect();
        assert_eq!(model_forward_ref(&f, &model).unwrap(), expected);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let w = SpatialConvLayer::zeros(3, 2);
        let f = FeatureTensor::zeros(2, 1);
        assert!(matches!(
            graph_spatial_forward_ref(&f, &AdjacencyStack::identity(), &w),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(temporal_conv_ref(&f, &TemporalConvLayer::zeros(3, 3, 1)).is_err());
    }
}
