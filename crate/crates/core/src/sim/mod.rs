//! Cycle-approximate models of the spatial and temporal compute modules.

mod alloc;
mod schedule;

pub use alloc::{
    compare_static_dynamic, AllocationReport, LayerAllocation, LayerScenario, PeGroup, PipelineScenario,
    ReferenceTotals, Scenario, SparsitySource,
};
pub use schedule::{pipeline_throughput, scm_schedule, scm_trace_len, ScmAccess, ScmSchedule, Throughput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Expected valid multiplications per event of a six-queue sub-filter row,
/// evaluated term by term: `3(1−s)³ + 3s²(1−s) + 6s(1−s)²`.
pub fn expected_valid(s: f64) -> Result<f64> {
    check_sparsity(s)?;
    let d = 1.0 - s;
    Ok(3.0 * d * d * d + 3.0 * s * s * d + 6.0 * s * d * d)
}

/// Closed form of [`expected_valid`] generalized to `queues` queues:
/// `(queues / 2)(1 − s)`.
pub fn expected_valid_closed(queues: usize, s: f64) -> Result<f64> {
    check_sparsity(s)?;
    Ok(queues as f64 / 2.0 * (1.0 - s))
}

fn check_sparsity(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "feature sparsity",
            value: s,
        })
    }
}

/// `ceil(e_valid)` clamped to `[1, queue_count]`.
pub fn choose_dsp_count(e_valid: f64, queue_count: usize) -> usize {
    let n = if e_valid.is_finite() && e_valid > 0.0 {
        (e_valid - 1e-12).ceil() as usize
    } else {
        0
    };
    n.clamp(1, queue_count.max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DynMultPeConfig {
    pub queue_count: usize,
    pub dsp_count: usize,
    /// Total backlog at which the producer stalls.
    pub queue_depth: usize,
}

impl DynMultPeConfig {
    pub const DEFAULT_DEPTH: usize = 8;

    pub fn new(queue_count: usize, dsp_count: usize) -> Result<Self> {
        let cfg = Self {
            queue_count,
            dsp_count,
            queue_depth: Self::DEFAULT_DEPTH,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// One DSP per queue.
    pub fn static_baseline(queue_count: usize) -> Self {
        Self {
            queue_count,
            dsp_count: queue_count,
            queue_depth: Self::DEFAULT_DEPTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.queue_count == 0 || self.queue_count > 16 {
            return Err(Error::InvalidConfig(format!("{} queues", self.queue_count)));
        }
        if self.dsp_count == 0 || self.dsp_count > self.queue_count {
            return Err(Error::InvalidConfig(format!(
                "{} DSPs for {} queues",
                self.dsp_count, self.queue_count
            )));
        }
        if self.queue_depth == 0 {
            return Err(Error::InvalidConfig("queue depth 0".into()));
        }
        Ok(())
    }
}

/// Per-cycle joint (feature ∧ weight) valid bits, bit `q` = queue `q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubFilterStream {
    pub queue_count: usize,
    pub events: Vec<u16>,
}

impl SubFilterStream {
    /// Random stream under the expected-work event model: `queue_count / 2` feature
    /// positions per event, each non-zero with probability `1 − s`; position
    /// `p` feeds queue `2p` on even events and `2p + 1` on odd ones.
    pub fn random(queue_count: usize, s: f64, len: usize, seed: u64) -> Result<Self> {
        check_sparsity(s)?;
        if queue_count == 0 || queue_count % 2 != 0 || queue_count > 16 {
            return Err(Error::InvalidConfig(format!(
                "random streams need an even queue count up to 16, got {queue_count}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = (0..len)
            .map(|e| {
                (0..queue_count / 2)
                    .filter(|_| rng.random_bool(1.0 - s))
                    .fold(0u16, |acc, p| acc | 1 << (2 * p + e % 2))
            })
            .collect();
        Ok(Self { queue_count, events })
    }

    /// Stream of a sub-filter row: `weight_mask` marks the kept weights over
    /// 16 input channels, `feature_hots` the non-zero features per event.
    /// Queue `q` is the `q`-th kept weight.
    pub fn from_masks(weight_mask: u16, feature_hots: &[u16]) -> Self {
        let lanes: Vec<usize> = (0..16).filter(|&i| weight_mask >> i & 1 == 1).collect();
        let events = feature_hots
            .iter()
            .map(|&h| {
                lanes
                    .iter()
                    .enumerate()
                    .filter(|(_, &lane)| h >> lane & 1 == 1)
                    .fold(0u16, |acc, (q, _)| acc | 1 << q)
            })
            .collect();
        Self {
            queue_count: lanes.len(),
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Valid multiplications in the stream.
    pub fn valid(&self) -> u64 {
        self.events.iter().map(|e| e.count_ones() as u64).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimStats {
    pub dsp_count: usize,
    pub events: u64,
    pub cycles: u64,
    pub stall_cycles: u64,
    pub useful_macs: u64,
    /// `useful_macs / (dsp_count × cycles)`.
    pub efficiency: f64,
    /// Extra cycles over a stall-free run, percent of stream length.
    pub max_delay_pct: f64,
    pub max_backlog: usize,
}

/// Runs a Dyn-Mult-PE to drain. Each cycle it accepts the next event if
/// the total backlog is below the queue depth (otherwise the producer
/// stalls), then dispatches up to `dsp_count` pending items round-robin,
/// starting after the last queue served.
pub fn simulate_dyn_pe(cfg: &DynMultPeConfig, stream: &SubFilterStream) -> Result<SimStats> {
    cfg.validate()?;
    if stream.queue_count != cfg.queue_count {
        return Err(Error::dims("stream queues", cfg.queue_count, stream.queue_count));
    }
    let q = cfg.queue_count;
    let mut pending = vec![0usize; q];
    let mut backlog = 0usize;
    let mut next = 0usize;
    let mut last = q - 1;
    let (mut cycles, mut stalls, mut useful, mut max_backlog) = (0u64, 0u64, 0u64, 0usize);
    while next < stream.len() || backlog > 0 {
        cycles += 1;
        if next < stream.len() {
            if backlog < cfg.queue_depth {
                let e = stream.events[next];
                for (i, p) in pending.iter_mut().enumerate() {
                    if e >> i & 1 == 1 {
                        *p += 1;
                        backlog += 1;
                    }
                }
                next += 1;
            } else {
                stalls += 1;
            }
        }
        max_backlog = max_backlog.max(backlog);
        let mut free = cfg.dsp_count;
        while free > 0 && backlog > 0 {
            for step in 1..=q {
                if free == 0 {
                    break;
                }
                let i = (last + step) % q;
                if pending[i] > 0 {
                    pending[i] -= 1;
                    backlog -= 1;
                    free -= 1;
                    useful += 1;
                    last = i;
                }
            }
        }
    }
    let len = stream.len() as u64;
    Ok(SimStats {
        dsp_count: cfg.dsp_count,
        events: len,
        cycles,
        stall_cycles: stalls,
        useful_macs: useful,
        efficiency: if cycles == 0 {
            0.0
        } else {
            useful as f64 / (cfg.dsp_count as u64 * cycles) as f64
        },
        max_delay_pct: if len == 0 {
            0.0
        } else {
            (cycles - len) as f64 / len as f64 * 100.0
        },
        max_backlog,
    })
}
