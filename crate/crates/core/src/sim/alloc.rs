use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{choose_dsp_count, expected_valid_closed, simulate_dyn_pe, DynMultPeConfig, SimStats, SubFilterStream};
use crate::error::{Error, Result};
use crate::rfc::SparsityHistogram;

/// Simulation scenario, read from TOML:
///
/// ```toml
/// name = "table2"
/// seed = 7
/// events = 20000        # stream length simulated per PE group
/// queue_depth = 8
///
/// [reference_totals]    # optional published totals
/// static = 1149
/// dynamic = 882
///
/// [[layer]]
/// name = "1"
/// sparsity = 0.25       # or: histogram = [I, II, III, IV], or: trace = "file.rfc"
/// [[layer.pe]]
/// queues = 6
/// count = 9
/// # dsps = 4           # optional; default is ceil(E(D)) for the layer sparsity
///
/// [pipeline]            # optional
/// clock_hz = 172e6
/// mac_units = 3544
/// stage_cycles = [ ... ]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_events")]
    pub events: usize,
    #[serde(default = "default_depth")]
    pub queue_depth: usize,
    #[serde(default)]
    pub reference_totals: Option<ReferenceTotals>,
    #[serde(rename = "layer", default)]
    pub layers: Vec<LayerScenario>,
    #[serde(default)]
    pub pipeline: Option<PipelineScenario>,
}

fn default_events() -> usize {
    20_000
}

fn default_depth() -> usize {
    DynMultPeConfig::DEFAULT_DEPTH
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTotals {
    #[serde(rename = "static")]
    pub static_dsps: u64,
    #[serde(rename = "dynamic")]
    pub dynamic_dsps: u64,
}

impl ReferenceTotals {
    pub fn reduction(&self) -> f64 {
        1.0 - self.dynamic_dsps as f64 / self.static_dsps as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerScenario {
    pub name: String,
    #[serde(default)]
    pub sparsity: Option<f64>,
    #[serde(default)]
    pub histogram: Option<[f64; 4]>,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(rename = "pe", default)]
    pub pes: Vec<PeGroup>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeGroup {
    pub queues: usize,
    pub count: usize,
    #[serde(default)]
    pub dsps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineScenario {
    pub clock_hz: f64,
    pub mac_units: u64,
    #[serde(default)]
    pub stage_cycles: Vec<u64>,
}

/// Where a layer's feature sparsity comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SparsitySource {
    Scalar(f64),
    Histogram(SparsityHistogram),
    /// Hot codes of an RFC stream dump.
    Trace(Vec<u16>),
}

impl SparsitySource {
    pub fn sparsity(&self) -> f64 {
        match self {
            SparsitySource::Scalar(s) => *s,
            SparsitySource::Histogram(h) => 1.0 - h.estimated_density(),
            SparsitySource::Trace(hots) if hots.is_empty() => 1.0,
            SparsitySource::Trace(hots) => {
                let ones: u64 = hots.iter().map(|h| h.count_ones() as u64).sum();
                1.0 - ones as f64 / (16 * hots.len()) as f64
            }
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_toml(&std::fs::read_to_string(path)?)?;
        // Trace paths are relative to the scenario file.
        if let Some(dir) = path.parent() {
            for l in &mut s.layers {
                if let Some(t) = &mut l.trace {
                    if t.is_relative() {
                        *t = dir.join(&*t);
                    }
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("scenario has no layers".into()));
        }
        for l in &self.layers {
            let sources = [l.sparsity.is_some(), l.histogram.is_some(), l.trace.is_some()];
            if sources.iter().filter(|&&b| b).count() != 1 {
                return Err(Error::InvalidConfig(format!(
                    "layer {}: exactly one of sparsity, histogram, trace is required",
                    l.name
                )));
            }
            if l.pes.is_empty() {
                return Err(Error::InvalidConfig(format!("layer {}: no PE groups", l.name)));
            }
            for g in &l.pes {
                DynMultPeConfig {
                    queue_count: g.queues,
                    dsp_count: g.dsps.unwrap_or(g.queues),
                    queue_depth: self.queue_depth,
                }
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("layer {}: {e}", l.name)))?;
            }
        }
        if let Some(r) = self.reference_totals {
            if r.static_dsps == 0 {
                return Err(Error::InvalidConfig("reference static total is 0".into()));
            }
        }
        Ok(())
    }
}

impl LayerScenario {
    pub fn source(&self) -> Result<SparsitySource> {
        if let Some(s) = self.sparsity {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::OutOfRange {
                    what: "feature sparsity",
                    value: s,
                });
            }
            return Ok(SparsitySource::Scalar(s));
        }
        if let Some(h) = self.histogram {
            return Ok(SparsitySource::Histogram(SparsityHistogram::new(h)?));
        }
        let path = self
            .trace
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("layer {}: no sparsity source", self.name)))?;
        let banks = crate::rfc::read_stream(std::fs::File::open(path)?)?;
        Ok(SparsitySource::Trace(banks.iter().map(|b| b.hot).collect()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupResult {
    pub queues: usize,
    pub count: usize,
    pub dsps: usize,
    pub stats: SimStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerAllocation {
    pub name: String,
    pub sparsity: f64,
    pub static_dsps: u64,
    pub dynamic_dsps: u64,
    pub reduction: f64,
    /// Useful MACs over DSP-cycles, dynamic allocation.
    pub efficiency: f64,
    pub static_efficiency: f64,
    /// Worst group delay in the layer, percent.
    pub max_delay_pct: f64,
    pub groups: Vec<GroupResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AllocationReport {
    pub layers: Vec<LayerAllocation>,
    pub static_dsps: u64,
    pub dynamic_dsps: u64,
    pub reduction: f64,
    pub efficiency: f64,
    pub static_efficiency: f64,
    /// Worst per-layer delay, percent.
    pub max_delay_pct: f64,
    /// Delay of the slowest layer against the slowest static layer, percent.
    pub pipeline_delay_pct: f64,
    pub reference: Option<ReferenceTotals>,
}

/// Stream of a sub-filter row keeping `queues` weights spread over the 16
/// input channels, fed by recorded hot codes (repeated up to `len`).
fn trace_stream(queues: usize, hots: &[u16], len: usize) -> SubFilterStream {
    let mask = (0..queues).fold(0u16, |m, i| m | 1 << (i * 16 / queues));
    let events: Vec<u16> = hots.iter().copied().cycle().take(len).collect();
    SubFilterStream::from_masks(mask, &events)
}

/// Static (one DSP per queue) versus expected-work allocation of
/// `ceil(E(D))` DSPs. One PE per group is simulated on a seeded stream; all
/// PEs of a group share its figures.
pub fn compare_static_dynamic(scenario: &Scenario) -> Result<AllocationReport> {
    scenario.validate()?;
    let mut layers = Vec::with_capacity(scenario.layers.len());
    for (li, layer) in scenario.layers.iter().enumerate() {
        let source = layer.source()?;
        let s = source.sparsity();
        let mut groups = Vec::new();
        let (mut st_dsps, mut dy_dsps) = (0u64, 0u64);
        let (mut useful, mut dy_work, mut st_work) = (0f64, 0f64, 0f64);
        let mut worst = 0.0f64;
        for (gi, g) in layer.pes.iter().enumerate() {
            let dsps = match g.dsps {
                Some(d) => d,
                None => choose_dsp_count(expected_valid_closed(g.queues, s)?, g.queues),
            };
            let seed = scenario.seed ^ ((li as u64) << 32 | gi as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let stream = match &source {
                SparsitySource::Trace(hots) => trace_stream(g.queues, hots, scenario.events),
                _ => SubFilterStream::random(g.queues, s, scenario.events, seed)?,
            };
            let mut cfg = DynMultPeConfig::new(g.queues, dsps)?;
            cfg.queue_depth = scenario.queue_depth;
            let stats = simulate_dyn_pe(&cfg, &stream)?;
            let base = DynMultPeConfig {
                queue_count: g.queues,
                dsp_count: g.queues,
                queue_depth: scenario.queue_depth,
            };
            let st = simulate_dyn_pe(&base, &stream)?;
            let n = g.count as f64;
            useful += n * stats.useful_macs as f64;
            dy_work += n * (dsps as u64 * stats.cycles) as f64;
            st_work += n * (g.queues as u64 * st.cycles) as f64;
            st_dsps += (g.count * g.queues) as u64;
            dy_dsps += (g.count * dsps) as u64;
            worst = worst.max(stats.max_delay_pct);
            groups.push(GroupResult {
                queues: g.queues,
                count: g.count,
                dsps,
                stats,
            });
        }
        layers.push(LayerAllocation {
            name: layer.name.clone(),
            sparsity: s,
            static_dsps: st_dsps,
            dynamic_dsps: dy_dsps,
            reduction: 1.0 - dy_dsps as f64 / st_dsps as f64,
            efficiency: ratio(useful, dy_work),
            static_efficiency: ratio(useful, st_work),
            max_delay_pct: worst,
            groups,
        });
    }
    let static_dsps: u64 = layers.iter().map(|l| l.static_dsps).sum();
    let dynamic_dsps: u64 = layers.iter().map(|l| l.dynamic_dsps).sum();
    let weighted = |f: fn(&LayerAllocation) -> f64, w: fn(&LayerAllocation) -> u64| {
        let total: u64 = layers.iter().map(w).sum();
        ratio(layers.iter().map(|l| f(l) * w(l) as f64).sum(), total as f64)
    };
    let slowest = |pick: fn(&GroupResult) -> u64| layers.iter().flat_map(|l| &l.groups).map(pick).max().unwrap_or(0);
    let dyn_slowest = slowest(|g| g.stats.cycles);
    let events = slowest(|g| g.stats.events);
    Ok(AllocationReport {
        static_dsps,
        dynamic_dsps,
        reduction: 1.0 - dynamic_dsps as f64 / static_dsps as f64,
        efficiency: weighted(|l| l.efficiency, |l| l.dynamic_dsps),
        static_efficiency: weighted(|l| l.static_efficiency, |l| l.static_dsps),
        max_delay_pct: layers.iter().map(|l| l.max_delay_pct).fold(0.0, f64::max),
        pipeline_delay_pct: if events == 0 {
            0.0
        } else {
            (dyn_slowest.saturating_sub(events)) as f64 / events as f64 * 100.0
        },
        reference: scenario.reference_totals,
        layers,
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}
