use serde::{Deserialize, Serialize};

use super::{EncodedBank, MiniBankLayout, BANK_WIDTH, MINIBANKS, MINIBANK_WIDTH};
use crate::error::{Error, Result};

/// Sparsity category of a bank line: I needs one mini-bank, IV all four.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    I,
    II,
    III,
    IV,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::I, Category::II, Category::III, Category::IV];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Mini-banks a line of this category occupies.
    pub fn minibanks(self) -> usize {
        self.index() + 1
    }

    /// Category of a vector with zero-fraction `s`: I (75, 100], II (50, 75],
    /// III (25, 50], IV [0, 25]. A boundary value goes to the denser side.
    pub fn from_sparsity(s: f64) -> Category {
        if s > 0.75 {
            Category::I
        } else if s > 0.5 {
            Category::II
        } else if s > 0.25 {
            Category::III
        } else {
            Category::IV
        }
    }

    /// Category of a bank line by the mini-banks its non-zeros fill; an
    /// all-zero line counts as I.
    pub fn from_popcount(n: usize) -> Category {
        Self::ALL[super::minibanks_for(n).clamp(1, MINIBANKS) - 1]
    }

    /// Midpoint density, used to estimate non-zeros from a histogram.
    pub fn midpoint_density(self) -> f64 {
        [0.125, 0.375, 0.625, 0.875][self.index()]
    }
}

/// Fractions of lines in categories I..IV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityHistogram {
    fractions: [f64; 4],
}

impl SparsityHistogram {
    pub fn new(fractions: [f64; 4]) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "sparsity fractions {fractions:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(Self { fractions })
    }

    pub fn uniform() -> Self {
        Self { fractions: [0.25; 4] }
    }

    pub fn from_counts(counts: [u64; 4]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidConfig("histogram of zero lines".into()));
        }
        Self::new(counts.map(|c| c as f64 / n as f64))
    }

    pub fn fractions(&self) -> [f64; 4] {
        self.fractions
    }

    pub fn fraction(&self, c: Category) -> f64 {
        self.fractions[c.index()]
    }

    /// Mean mini-banks per line.
    pub fn mean_minibanks(&self) -> f64 {
        Category::ALL
            .iter()
            .map(|&c| self.fraction(c) * c.minibanks() as f64)
            .sum()
    }

    /// Storage saved against four full mini-banks per line, before any
    /// depth rounding.
    pub fn reduction(&self) -> f64 {
        1.0 - self.mean_minibanks() / MINIBANKS as f64
    }

    /// Fraction of lines needing at least `j + 1` mini-banks.
    pub fn tail(&self, j: usize) -> f64 {
        self.fractions[j..].iter().sum()
    }

    /// Expected non-zero fraction under midpoint densities.
    pub fn estimated_density(&self) -> f64 {
        Category::ALL
            .iter()
            .map(|&c| self.fraction(c) * c.midpoint_density())
            .sum()
    }
}

/// Line counts per category.
pub fn histogram_from_banks(banks: &[EncodedBank]) -> [u64; 4] {
    let mut counts = [0u64; 4];
    for b in banks {
        counts[Category::from_popcount(b.popcount() as usize).index()] += 1;
    }
    counts
}

fn ceil_tolerant(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

fn round_up(x: usize, granularity: usize) -> usize {
    if granularity <= 1 {
        x
    } else {
        x.div_ceil(granularity) * granularity
    }
}

/// Mini-bank depths for `vector_count × lines_per_vector` lines:
/// `d_j` = lines needing at least `j` mini-banks, rounded up to
/// `granularity`.
pub fn size_minibanks(
    hist: &SparsityHistogram,
    vector_count: usize,
    lines_per_vector: usize,
    granularity: usize,
) -> Result<MiniBankLayout> {
    let n = (vector_count * lines_per_vector) as f64;
    MiniBankLayout::new(std::array::from_fn(|j| {
        round_up(ceil_tolerant(n * hist.tail(j)), granularity)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StorageConfig {
    /// Depth quantum in lines.
    pub granularity: usize,
    pub value_bits: u64,
    pub hot_bits: u64,
    pub mbhot_bits: u64,
    /// Row index width of the CSC baseline (a 16-row column per line).
    pub csc_index_bits: u64,
    pub csc_pointer_bits: u64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            granularity: 512,
            value_bits: 16,
            hot_bits: 16,
            mbhot_bits: 4,
            csc_index_bits: 4,
            csc_pointer_bits: 16,
        }
    }
}

/// Storage and access figures of one layer, in bits and cycles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerStorage {
    pub name: String,
    pub lines: u64,
    pub depths: [usize; MINIBANKS],
    pub dense_bits: u64,
    pub rfc_data_bits: u64,
    pub rfc_code_bits: u64,
    pub csc_bits: u64,
    pub nonzeros: u64,
    /// `1 − mean mini-banks / 4`, before depth rounding.
    pub reduction_exact: f64,
    /// Data storage saved by the sized layout.
    pub reduction_sized: f64,
    /// Same, with hot and mbhot codes charged to the RFC side.
    pub reduction_with_codes: f64,
    pub dense_load_cycles: u64,
    pub rfc_load_cycles: u64,
    pub csc_load_cycles: u64,
}

fn saved(ours: u64, dense: u64) -> f64 {
    if dense == 0 {
        0.0
    } else {
        1.0 - ours as f64 / dense as f64
    }
}

/// Dense, RFC and CSC storage of a layer of `lines` bank lines.
/// `nonzeros` is the measured count if known, otherwise estimated from the
/// histogram's midpoint densities.
pub fn storage_report(
    name: &str,
    hist: &SparsityHistogram,
    lines: u64,
    nonzeros: Option<u64>,
    cfg: &StorageConfig,
) -> Result<LayerStorage> {
    let layout = size_minibanks(hist, lines as usize, 1, cfg.granularity)?;
    let depths = layout.depths();
    let lane = cfg.value_bits;
    let dense_bits = lines * BANK_WIDTH as u64 * lane;
    let rfc_data_bits = layout.slots() as u64 * MINIBANK_WIDTH as u64 * lane;
    let rfc_code_bits = lines * (cfg.hot_bits + cfg.mbhot_bits);
    let nonzeros =
        nonzeros.unwrap_or_else(|| (lines as f64 * BANK_WIDTH as f64 * hist.estimated_density()).round() as u64);
    let csc_bits = if lines == 0 {
        0
    } else {
        nonzeros * (lane + cfg.csc_index_bits) + (lines + 1) * cfg.csc_pointer_bits
    };
    Ok(LayerStorage {
        name: name.to_string(),
        lines,
        depths,
        dense_bits,
        rfc_data_bits,
        rfc_code_bits,
        csc_bits,
        nonzeros,
        reduction_exact: if lines == 0 { 0.0 } else { hist.reduction() },
        reduction_sized: saved(rfc_data_bits, dense_bits),
        reduction_with_codes: saved(rfc_data_bits + rfc_code_bits, dense_bits),
        dense_load_cycles: lines,
        rfc_load_cycles: lines,
        csc_load_cycles: nonzeros,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StorageTotals {
    pub dense_bits: u64,
    pub rfc_data_bits: u64,
    pub rfc_code_bits: u64,
    pub csc_bits: u64,
    pub reduction_sized: f64,
    pub reduction_with_codes: f64,
}

impl StorageTotals {
    pub fn from_layers(layers: &[LayerStorage]) -> Self {
        let mut t = Self::default();
        for l in layers {
            t.dense_bits += l.dense_bits;
            t.rfc_data_bits += l.rfc_data_bits;
            t.rfc_code_bits += l.rfc_code_bits;
            t.csc_bits += l.csc_bits;
        }
        t.reduction_sized = saved(t.rfc_data_bits, t.dense_bits);
        t.reduction_with_codes = saved(t.rfc_data_bits + t.rfc_code_bits, t.dense_bits);
        t
    }
}
