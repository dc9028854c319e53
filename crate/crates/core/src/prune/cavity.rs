//! Cavity patterns: periodic keep-grids for sampling-like pruning of 9×1
//! temporal kernels.
//!
//! A pattern is a `9 × period` grid. Column `phase` is the keep-set for every
//! kernel whose phase index (input channel or filter index, modulo the
//! period) equals `phase`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::KERNEL_LEN;

/// Which kernel index selects the pattern column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CavityAxis {
    /// Phase = input channel mod period: a 16-channel sub-filter row then
    /// holds a fixed number of kept weights.
    #[default]
    InputChannel,
    /// Phase = filter (output channel) mod period.
    Filter,
}

impl CavityAxis {
    #[inline]
    pub fn phase_index(self, out_channel: usize, in_channel: usize) -> usize {
        match self {
            CavityAxis::InputChannel => in_channel,
            CavityAxis::Filter => out_channel,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            CavityAxis::InputChannel => 0,
            CavityAxis::Filter => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(CavityAxis::InputChannel),
            1 => Some(CavityAxis::Filter),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CavityPattern {
    name: String,
    period: usize,
    /// Row-major `(tap, phase)`.
    keep: Vec<bool>,
}

/// Interval/offset schedule of the shipped `cav-70-1` pattern, one entry per
/// kernel phase. Taps 0, 3 and 6 are kept three times per period, the other
/// six taps twice: 21 of 72 weights survive.
pub const CAV_70_1: [(usize, usize); 8] = [(3, 0), (4, 1), (3, 1), (4, 2), (3, 2), (4, 3), (3, 0), (4, 0)];

impl CavityPattern {
    /// Validates a raw grid.
    pub fn from_grid(name: impl Into<String>, period: usize, keep: Vec<bool>) -> Result<Self> {
        let name = name.into();
        if period == 0 {
            return Err(Error::InvalidConfig(format!("pattern `{name}` has period 0")));
        }
        if keep.len() != KERNEL_LEN * period {
            return Err(Error::dims("cavity grid", KERNEL_LEN * period, keep.len()));
        }
        let pattern = Self { name, period, keep };
        if let Some(phase) = (0..period).find(|&ph| pattern.kernel_kept(ph) == 0) {
            return Err(Error::DegeneratePattern {
                name: pattern.name,
                phase,
            });
        }
        let rows = pattern.row_counts();
        let (min, max) = (*rows.iter().min().unwrap(), *rows.iter().max().unwrap());
        if max - min > 1 {
            return Err(Error::BalanceViolation {
                name: pattern.name,
                min,
                max,
            });
        }
        Ok(pattern)
    }

    /// Builds a pattern from one `(interval, offset)` pair per kernel phase;
    /// phase `j` keeps taps `t` with `t ≡ offset (mod interval)`.
    pub fn from_schedule(name: impl Into<String>, schedule: &[(usize, usize)]) -> Result<Self> {
        let name = name.into();
        let period = schedule.len();
        if let Some(&(interval, _)) = schedule.iter().find(|(i, _)| *i == 0) {
            return Err(Error::InvalidConfig(format!(
                "pattern `{name}` has interval {interval}"
            )));
        }
        let mut keep = vec![false; KERNEL_LEN * period];
        for (phase, &(interval, offset)) in schedule.iter().enumerate() {
            for tap in 0..KERNEL_LEN {
                keep[tap * period + phase] = tap % interval == offset % interval;
            }
        }
        Self::from_grid(name, period, keep)
    }

    /// Keeps every tap.
    pub fn all_keep() -> Self {
        Self {
            name: "dense".into(),
            period: 1,
            keep: vec![true; KERNEL_LEN],
        }
    }

    pub fn cav_70_1() -> Self {
        Self::from_schedule("cav-70-1", &CAV_70_1).expect("shipped pattern is balanced")
    }

    /// Looks up a shipped pattern by name.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "dense" | "all-keep" | "none" => Ok(Self::all_keep()),
            "cav-70-1" => Ok(Self::cav_70_1()),
            other => Err(Error::UnknownPattern(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn grid(&self) -> &[bool] {
        &self.keep
    }

    #[inline]
    pub fn kept(&self, tap: usize, phase_index: usize) -> bool {
        self.keep[tap * self.period + phase_index % self.period]
    }

    pub fn is_all_keep(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }

    /// Times each tap row is kept over one period.
    pub fn row_counts(&self) -> Vec<usize> {
        (0..KERNEL_LEN)
            .map(|tap| (0..self.period).filter(|&ph| self.kept(tap, ph)).count())
            .collect()
    }

    /// Kept taps of the kernel at `phase`.
    pub fn kernel_kept(&self, phase: usize) -> usize {
        (0..KERNEL_LEN).filter(|&tap| self.kept(tap, phase)).count()
    }

    pub fn kept_total(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Fraction of weights removed.
    pub fn reduction(&self) -> f64 {
        1.0 - self.kept_total() as f64 / self.keep.len() as f64
    }

    /// Kept weights of tap row `tap` across `width` consecutive kernels
    /// starting at phase 0, i.e. the queue count of one sub-filter row.
    pub fn row_kept_over(&self, tap: usize, width: usize) -> usize {
        (0..width).filter(|&i| self.kept(tap, i)).count()
    }
}
