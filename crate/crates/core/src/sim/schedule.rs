use serde::Serialize;

use crate::error::{Error, Result};
use crate::prune::ChannelMask;
use crate::tensor::VERTICES;

/// One feature-buffer read of the spatial module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ScmAccess {
    /// Feature row (frame).
    pub row: usize,
    /// Graph column.
    pub column: usize,
    pub out_channel: usize,
    /// Buffer line; kept channels are stored contiguously.
    pub line: usize,
    /// Original input channel held by the line.
    pub channel: usize,
}

/// Channel-first access order: for each row, for each graph column, for
/// each output channel, every kept buffer line.
#[derive(Clone, Debug)]
pub struct ScmSchedule {
    rows: usize,
    out_channels: usize,
    kept: Vec<usize>,
    pos: usize,
}

impl Iterator for ScmSchedule {
    type Item = ScmAccess;

    fn next(&mut self) -> Option<ScmAccess> {
        let lines = self.kept.len();
        if self.pos >= scm_trace_len(self.rows, self.out_channels, lines) as usize {
            return None;
        }
        let i = self.pos;
        self.pos += 1;
        let line = i % lines;
        let oc = i / lines % self.out_channels;
        let column = i / (lines * self.out_channels) % VERTICES;
        let row = i / (lines * self.out_channels * VERTICES);
        Some(ScmAccess {
            row,
            column,
            out_channel: oc,
            line,
            channel: self.kept[line],
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = scm_trace_len(self.rows, self.out_channels, self.kept.len()) as usize - self.pos;
        (n, Some(n))
    }
}

impl ExactSizeIterator for ScmSchedule {}

pub fn scm_schedule(rows: usize, out_channels: usize, mask: &ChannelMask) -> ScmSchedule {
    ScmSchedule {
        rows,
        out_channels,
        kept: mask.kept().collect(),
        pos: 0,
    }
}

/// `rows × 25 × out_channels × kept_channels`.
pub fn scm_trace_len(rows: usize, out_channels: usize, kept_channels: usize) -> u64 {
    (rows * VERTICES * out_channels * kept_channels) as u64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Throughput {
    pub fps: f64,
    pub bottleneck: usize,
    pub peak_macs_per_s: f64,
    /// Two operations per MAC.
    pub peak_ops_per_s: f64,
    /// Stage cycles over the slowest stage's.
    pub utilization: Vec<f64>,
}

/// Layer-pipelined throughput: one sample leaves every `max(stage)` cycles.
pub fn pipeline_throughput(stage_cycles: &[u64], clock_hz: f64, mac_units: u64) -> Result<Throughput> {
    if stage_cycles.is_empty() || stage_cycles.contains(&0) {
        return Err(Error::InvalidConfig(
            "pipeline stages need positive cycle counts".into(),
        ));
    }
    if !(clock_hz > 0.0 && clock_hz.is_finite()) {
        return Err(Error::OutOfRange {
            what: "clock frequency",
            value: clock_hz,
        });
    }
    let (bottleneck, &max) = stage_cycles
        .iter()
        .enumerate()
        .max_by_key(|&(i, c)| (*c, std::cmp::Reverse(i)))
        .expect("non-empty");
    let peak = mac_units as f64 * clock_hz;
    Ok(Throughput {
        fps: clock_hz / max as f64,
        bottleneck,
        peak_macs_per_s: peak,
        peak_ops_per_s: 2.0 * peak,
        utilization: stage_cycles.iter().map(|&c| c as f64 / max as f64).collect(),
    })
}
