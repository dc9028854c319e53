//! Binary model files. Layout (all little-endian) is documented in
//! `docs/FORMATS.md`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fixed::FixedQ8p8;
use crate::graph::{AdjacencyStack, GRAPH_LEN, K_V};
use crate::model::{AffinePostOp, Block, BlockConfig, Model, ModelConfig, Shortcut, ShortcutKind, KERNEL_LEN};
use crate::prune::{BlockMasks, CavityAxis, CavityPattern, ChannelMask, PrunedModel};
use crate::sparse::InputSkip;
use crate::tensor::VERTICES;

pub const MODEL_MAGIC: &[u8; 4] = b"RFCH";
pub const MASK_MAGIC: &[u8; 4] = b"MASK";
pub const VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn q(&mut self, v: &[FixedQ8p8]) {
        for x in v {
            self.0.extend_from_slice(&x.raw().to_le_bytes());
        }
    }
    fn bits(&mut self, bits: &[bool]) {
        for chunk in bits.chunks(8) {
            self.u8(chunk.iter().enumerate().fold(0, |b, (i, &on)| b | (on as u8) << i));
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format(format!("unexpected end of file at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn q(&mut self, n: usize) -> Result<Vec<FixedQ8p8>> {
        Ok(self
            .take(2 * n)?
            .chunks_exact(2)
            .map(|c| FixedQ8p8::from_raw(i16::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
    fn bits(&mut self, n: usize) -> Result<Vec<bool>> {
        let bytes = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn write_affine(w: &mut Writer, a: &AffinePostOp) {
    w.f32s(&a.scale);
    w.f32s(&a.bias);
}

fn read_affine(r: &mut Reader, n: usize) -> Result<AffinePostOp> {
    Ok(AffinePostOp {
        scale: r.f32s(n)?,
        bias: r.f32s(n)?,
    })
}

fn write_model_into(w: &mut Writer, m: &Model) {
    let c = &m.config;
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(VERSION as usize);
    w.u32(m.blocks.len());
    w.u32(c.frames);
    w.u32(VERTICES);
    w.u32(c.num_classes);
    w.u8(c.classifier_bias as u8);
    for b in &m.blocks {
        let bc = b.config;
        w.u32(bc.in_channels);
        w.u32(bc.out_channels);
        w.u32(bc.stride);
        w.u8(match bc.shortcut {
            ShortcutKind::Identity => 0,
            ShortcutKind::Projection => 1,
        });
        let g: Vec<f32> = b.graphs.graphs().iter().map(|x| x.to_f64() as f32).collect();
        w.f32s(&g);
        w.q(&b.spatial.weights);
        write_affine(w, &b.spatial_affine);
        w.q(&b.temporal.weights);
        write_affine(w, &b.temporal_affine);
        if let Shortcut::Projection { weights, affine } = &b.shortcut {
            w.q(weights);
            write_affine(w, affine);
        }
    }
    w.f32s(&m.classifier.weights);
    if let Some(bias) = &m.classifier.bias {
        w.f32s(bias);
    }
}

fn read_model_from(r: &mut Reader) -> Result<Model> {
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("missing RFCH magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let n_blocks = r.u32()?;
    let frames = r.u32()?;
    let vertices = r.u32()?;
    if vertices != VERTICES {
        return Err(Error::Format(format!("{vertices} vertices, expected {VERTICES}")));
    }
    let num_classes = r.u32()?;
    let classifier_bias = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::Format(format!("classifier bias flag {b}"))),
    };
    let mut configs = Vec::with_capacity(n_blocks);
    let mut blocks = Vec::with_capacity(n_blocks);
    for i in 0..n_blocks {
        let (ic, oc, stride) = (r.u32()?, r.u32()?, r.u32()?);
        let shortcut = match r.u8()? {
            0 => ShortcutKind::Identity,
            1 => ShortcutKind::Projection,
            s => return Err(Error::Format(format!("block {}: shortcut kind {s}", i + 1))),
        };
        if ic > crate::model::MAX_CHANNELS || oc > crate::model::MAX_CHANNELS {
            return Err(Error::Format(format!("block {}: {ic}×{oc} channels", i + 1)));
        }
        let config = BlockConfig {
            in_channels: ic,
            out_channels: oc,
            stride,
            shortcut,
        };
        let mut b = Block::zeros(config);
        let g = r.f32s(K_V * GRAPH_LEN)?;
        b.graphs = AdjacencyStack::from_graphs(g.iter().map(|&x| FixedQ8p8::quantize(x as f64)).collect())?;
        b.spatial.weights = r.q(K_V * ic * oc)?;
        b.spatial_affine = read_affine(r, oc)?;
        b.temporal.weights = r.q(oc * oc * KERNEL_LEN)?;
        b.temporal_affine = read_affine(r, oc)?;
        if shortcut == ShortcutKind::Projection {
            b.shortcut = Shortcut::Projection {
                weights: r.q(oc * ic)?,
                affine: read_affine(r, oc)?,
            };
        }
        configs.push(config);
        blocks.push(b);
    }
    let config = ModelConfig {
        frames,
        num_classes,
        classifier_bias,
        blocks: configs,
    };
    let channels = config.output_channels();
    let mut model = Model::zeros(config)?;
    model.blocks = blocks;
    model.classifier.weights = r.f32s(num_classes * channels)?;
    if classifier_bias {
        model.classifier.bias = Some(r.f32s(num_classes)?);
    }
    model.validate()?;
    Ok(model)
}

pub fn model_to_bytes(m: &Model) -> Vec<u8> {
    let mut w = Writer::default();
    write_model_into(&mut w, m);
    w.0
}

/// Model followed by its mask section.
pub fn pruned_to_bytes(p: &PrunedModel) -> Vec<u8> {
    let mut w = Writer::default();
    write_model_into(&mut w, &p.model);
    w.0.extend_from_slice(MASK_MAGIC);
    w.u32(VERSION as usize);
    w.u32(p.input_skip.code() as usize);
    w.u32(p.cavity_axis.code() as usize);
    w.u32(p.masks.len());
    for m in &p.masks {
        w.bits(m.channels.bits());
        w.bits(m.filters.bits());
        let name = m.pattern.name().as_bytes();
        w.u32(name.len());
        w.0.extend_from_slice(name);
        w.u32(m.pattern.period());
        w.bits(m.pattern.grid());
    }
    w.0
}

/// Reads a model file with or without a mask section; a plain model
/// comes back with all-keep masks.
pub fn pruned_from_bytes(bytes: &[u8]) -> Result<PrunedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let mut model = read_model_from(&mut r)?;
    if r.done() {
        return Ok(PrunedModel::dense(model));
    }
    if r.take(4)? != MASK_MAGIC {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported mask version {version}")));
    }
    let input_skip =
        InputSkip::from_code(r.u32()? as u32).ok_or_else(|| Error::Format("unknown input-skip code".into()))?;
    let cavity_axis =
        CavityAxis::from_code(r.u32()? as u32).ok_or_else(|| Error::Format("unknown cavity axis code".into()))?;
    let n = r.u32()?;
    if n != model.blocks.len() {
        return Err(Error::Format(format!(
            "{n} mask records for {} blocks",
            model.blocks.len()
        )));
    }
    let mut masks = Vec::with_capacity(n);
    for block in &mut model.blocks {
        let c = block.config;
        let channels = ChannelMask::from_bits(r.bits(c.in_channels)?);
        let filters = ChannelMask::from_bits(r.bits(c.out_channels)?);
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("pattern name is not UTF-8".into()))?
            .to_string();
        let period = r.u32()?;
        if period == 0 || period > 1 << 16 {
            return Err(Error::Format(format!("cavity period {period}")));
        }
        let pattern = CavityPattern::from_grid(name, period, r.bits(KERNEL_LEN * period)?)?;
        if c.shortcut == ShortcutKind::Identity && !channels.is_full() {
            block.shortcut = Shortcut::MaskedIdentity(channels.bits().to_vec());
        }
        masks.push(BlockMasks {
            channels,
            filters,
            pattern,
        });
    }
    if !r.done() {
        return Err(Error::Format("trailing bytes after mask section".into()));
    }
    let pruned = PrunedModel {
        model,
        masks,
        cavity_axis,
        input_skip,
    };
    pruned.check_consistency()?;
    Ok(pruned)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    Ok(pruned_from_bytes(bytes)?.model)
}

pub fn save_model(path: &Path, m: &Model) -> Result<()> {
    Ok(std::fs::write(path, model_to_bytes(m))?)
}

pub fn save_pruned(path: &Path, p: &PrunedModel) -> Result<()> {
    Ok(std::fs::write(path, pruned_to_bytes(p))?)
}

pub fn load_pruned(path: &Path) -> Result<PrunedModel> {
    pruned_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prune::{hybrid_prune, PruneSpec};

    fn micro() -> Model {
        Model::synthesize(ModelConfig::micro(3, &[8, 8, 16], &[1, 1, 2], 5), 4).unwrap()
    }

    #[test]
    fn model_roundtrip() {
        let m = micro();
        let bytes = model_to_bytes(&m);
        assert_eq!(&bytes[..4], b"RFCH");
        assert_eq!(model_from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let bytes = model_to_bytes(&micro());
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 25);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 4);
        assert_eq!(bytes[24], 1);
        // first block dims
        assert_eq!(u32::from_le_bytes(bytes[25..29].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[29..33].try_into().unwrap()), 8);
    }

    #[test]
    fn pruned_roundtrip_keeps_masks_and_gate() {
        let mut spec = PruneSpec::uniform(3, 0.5, "cav-70-1");
        spec.input_skip = true;
        let p = hybrid_prune(&micro(), &spec).unwrap();
        assert!(matches!(p.model.blocks[1].shortcut, Shortcut::MaskedIdentity(_)));
        let bytes = pruned_to_bytes(&p);
        // model prefix is a plain model file
        let prefix = model_to_bytes(&p.model);
        assert_eq!(&bytes[..prefix.len()], prefix.as_slice());
        assert_eq!(pruned_from_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = model_to_bytes(&micro());
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(model_from_bytes(&bad), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(model_from_bytes(&extra).is_err());
    }

    #[test]
    fn tampered_mask_fails_consistency() {
        let p = hybrid_prune(&micro(), &PruneSpec::uniform(3, 0.5, "dense")).unwrap();
        let mut q = p.clone();
        q.masks[2].channels = ChannelMask::all(8);
        // rewrite with a mask claiming full channels but the weights still zeroed: valid;
        // the reverse (dropping a channel whose weights are non-zero) must fail.
        let mut r = PrunedModel::dense(micro());
        r.masks[1].channels = ChannelMask::dropping(8, &[0]);
        assert!(pruned_from_bytes(&pruned_to_bytes(&q)).is_ok());
        assert!(matches!(
            pruned_from_bytes(&pruned_to_bytes(&r)),
            Err(Error::Mask { block: 2, .. })
        ));
    }
}
