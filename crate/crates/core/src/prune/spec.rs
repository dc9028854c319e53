use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cavity::{CavityAxis, CavityPattern};
use crate::error::{Error, Result};
use crate::sparse::InputSkip;

/// Per-block pruning choices, read from a TOML file:
///
/// ```toml
/// name = "hybrid-86"
/// input_skip = true           # optional, default false
/// input_skip_phase = "even"   # optional: even | odd
/// pattern = "cav-70-1"        # default cavity pattern for every block
/// cavity_axis = "input-channel"  # optional: input-channel | filter
///
/// [[block]]
/// drop_rate = 0.0
///
/// [[block]]
/// drop_rate = 0.5
/// pattern = "dense"           # optional per-block override
/// ```
///
/// `drop_rate` is the fraction of spatial input channels removed; the
/// channel statistic is the mean |w| over all neighbour sets and output
/// channels. Block 1 must keep every channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub input_skip: bool,
    #[serde(default)]
    pub input_skip_phase: SkipPhase,
    #[serde(default = "default_pattern")]
    pub pattern: String,
    #[serde(default)]
    pub cavity_axis: CavityAxis,
    #[serde(rename = "block", default)]
    pub blocks: Vec<BlockPruneSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPruneSpec {
    #[serde(default)]
    pub drop_rate: f64,
    #[serde(default)]
    pub pattern: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipPhase {
    #[default]
    Even,
    Odd,
}

fn default_pattern() -> String {
    "dense".into()
}

impl PruneSpec {
    /// No channel drops, no cavity, no input skip.
    pub fn dense(blocks: usize) -> Self {
        Self {
            name: "dense".into(),
            input_skip: false,
            input_skip_phase: SkipPhase::Even,
            pattern: default_pattern(),
            cavity_axis: CavityAxis::default(),
            blocks: vec![
                BlockPruneSpec {
                    drop_rate: 0.0,
                    pattern: None,
                };
                blocks
            ],
        }
    }

    /// Same drop rate on every block but the first.
    pub fn uniform(blocks: usize, rate: f64, pattern: &str) -> Self {
        let mut spec = Self::dense(blocks);
        spec.name = format!("uniform-{rate}");
        spec.pattern = pattern.to_string();
        for b in spec.blocks.iter_mut().skip(1) {
            b.drop_rate = rate;
        }
        spec
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn input_skip_mode(&self) -> InputSkip {
        match (self.input_skip, self.input_skip_phase) {
            (false, _) => InputSkip::Off,
            (true, SkipPhase::Even) => InputSkip::Even,
            (true, SkipPhase::Odd) => InputSkip::Odd,
        }
    }

    pub fn block_pattern(&self, block: usize) -> Result<CavityPattern> {
        let name = self.blocks[block].pattern.as_deref().unwrap_or(&self.pattern);
        CavityPattern::named(name)
    }

    /// Checks the spec against a model with `block_count` blocks.
    pub fn validate(&self, block_count: usize) -> Result<()> {
        if self.blocks.len() != block_count {
            return Err(Error::InvalidConfig(format!(
                "spec lists {} blocks, model has {block_count}",
                self.blocks.len()
            )));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if !(0.0..1.0).contains(&b.drop_rate) {
                return Err(Error::InvalidConfig(format!(
                    "block {}: drop rate {} outside [0, 1)",
                    i + 1,
                    b.drop_rate
                )));
            }
            self.block_pattern(i)
                .map_err(|e| Error::InvalidConfig(format!("block {}: {e}", i + 1)))?;
        }
        if self.blocks.first().is_some_and(|b| b.drop_rate != 0.0) {
            return Err(Error::InvalidConfig(
                "block 1: spatial input channels cannot be dropped".into(),
            ));
        }
        Ok(())
    }
}
