use crate::error::{ensure_dims, Result};
use crate::fixed::FixedQ8p8;

/// Joints in the skeleton graph.
pub const VERTICES: usize = 25;

/// Activation tensor laid out channel-major, then time, then vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureTensor {
    channels: usize,
    frames: usize,
    data: Vec<FixedQ8p8>,
}

impl FeatureTensor {
    pub fn zeros(channels: usize, frames: usize) -> Self {
        Self {
            channels,
            frames,
            data: vec![FixedQ8p8::ZERO; channels * frames * VERTICES],
        }
    }

    pub fn from_data(channels: usize, frames: usize, data: Vec<FixedQ8p8>) -> Result<Self> {
        ensure_dims("feature tensor data", channels * frames * VERTICES, data.len())?;
        Ok(Self { channels, frames, data })
    }

    pub fn from_fn(channels: usize, frames: usize, mut f: impl FnMut(usize, usize, usize) -> FixedQ8p8) -> Self {
        let mut data = Vec::with_capacity(channels * frames * VERTICES);
        for c in 0..channels {
            for t in 0..frames {
                for v in 0..VERTICES {
                    data.push(f(c, t, v));
                }
            }
        }
        Self { channels, frames, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vertices(&self) -> usize {
        VERTICES
    }

    pub fn data(&self) -> &[FixedQ8p8] {
        &self.data
    }

    #[inline]
    pub fn index(&self, c: usize, t: usize, v: usize) -> usize {
        debug_assert!(c < self.channels && t < self.frames && v < VERTICES);
        (c * self.frames + t) * VERTICES + v
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, v: usize) -> FixedQ8p8 {
        self.data[self.index(c, t, v)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, v: usize, value: FixedQ8p8) {
        let i = self.index(c, t, v);
        self.data[i] = value;
    }

    /// The 25 joint values of channel `c` at frame `t`.
    #[inline]
    pub fn row(&self, c: usize, t: usize) -> &[FixedQ8p8] {
        let start = (c * self.frames + t) * VERTICES;
        &self.data[start..start + VERTICES]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, t: usize) -> &mut [FixedQ8p8] {
        let start = (c * self.frames + t) * VERTICES;
        &mut self.data[start..start + VERTICES]
    }

    pub fn map(&self, f: impl Fn(FixedQ8p8) -> FixedQ8p8) -> Self {
        Self {
            channels: self.channels,
            frames: self.frames,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn relu(&self) -> Self {
        self.map(FixedQ8p8::relu)
    }

    /// Feature vector across channels at `(t, v)`.
    pub fn vector(&self, t: usize, v: usize) -> impl Iterator<Item = FixedQ8p8> + '_ {
        (0..self.channels).map(move |c| self.get(c, t, v))
    }

    /// Keeps only the listed frames, in order.
    pub fn select_frames(&self, frames: &[usize]) -> Self {
        Self::from_fn(self.channels, frames.len(), |c, t, v| self.get(c, frames[t], v))
    }

    /// First `(channel, frame, vertex)` where the tensors differ, or `None`
    /// when shapes and contents agree.
    pub fn first_difference(&self, other: &Self) -> Option<(usize, usize, usize)> {
        if self.channels != other.channels || self.frames != other.frames {
            return Some((0, 0, 0));
        }
        self.data.iter().zip(&other.data).position(|(a, b)| a != b).map(|i| {
            let v = i % VERTICES;
            let t = (i / VERTICES) % self.frames;
            let c = i / (VERTICES * self.frames);
            (c, t, v)
        })
    }

    pub fn count_zeros(&self) -> usize {
        self.data.iter().filter(|x| x.is_zero()).count()
    }
}
