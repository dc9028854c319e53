use std::io::{Read, Write};

use super::{mbhot_for, EncodedBank, BANK_WIDTH, MINIBANKS, MINIBANK_WIDTH};
use crate::error::{Error, OverflowError, Result};
use crate::fixed::FixedQ8p8;

type Slice = [FixedQ8p8; MINIBANK_WIDTH];

/// Bank storage: four mini-banks of non-increasing depth, one write
/// pointer each, and separate hot / mbhot stores.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MiniBankLayout {
    depths: [usize; MINIBANKS],
    banks: [Vec<Slice>; MINIBANKS],
    hot_store: Vec<u16>,
    mbhot_store: Vec<u8>,
    /// Pointer values before each stored line, for random-line loads.
    line_ptrs: Vec<[usize; MINIBANKS]>,
}

impl MiniBankLayout {
    pub fn new(depths: [usize; MINIBANKS]) -> Result<Self> {
        if depths.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(format!(
                "mini-bank depths {depths:?} must be non-increasing"
            )));
        }
        Ok(Self {
            depths,
            banks: Default::default(),
            hot_store: Vec::new(),
            mbhot_store: Vec::new(),
            line_ptrs: Vec::new(),
        })
    }

    /// Every mini-bank `lines` deep.
    pub fn dense(lines: usize) -> Self {
        Self::new([lines; MINIBANKS]).expect("equal depths")
    }

    pub fn depths(&self) -> [usize; MINIBANKS] {
        self.depths
    }

    pub fn pointers(&self) -> [usize; MINIBANKS] {
        std::array::from_fn(|j| self.banks[j].len())
    }

    pub fn lines(&self) -> usize {
        self.hot_store.len()
    }

    /// Storage slots (4-lane mini-bank rows) provisioned.
    pub fn slots(&self) -> usize {
        self.depths.iter().sum()
    }

    /// Writes one line into the mini-banks its mbhot enables. Nothing is
    /// written if any enabled mini-bank is full.
    pub fn store_bank(&mut self, enc: &EncodedBank) -> Result<usize, OverflowError> {
        let line = self.lines();
        let used = enc.minibanks_used();
        if let Some(j) = (0..used).find(|&j| self.banks[j].len() >= self.depths[j]) {
            return Err(OverflowError {
                minibank: j + 1,
                line,
                depth: self.depths[j],
            });
        }
        self.line_ptrs.push(self.pointers());
        for j in 0..used {
            self.banks[j].push(enc.minibank(j));
        }
        self.hot_store.push(enc.hot);
        self.mbhot_store.push(enc.mbhot);
        Ok(line)
    }

    pub fn load_bank(&self, line: usize) -> Result<EncodedBank> {
        if line >= self.lines() {
            return Err(Error::OutOfRange {
                what: "bank line",
                value: line as f64,
            });
        }
        let mbhot = self.mbhot_store[line];
        let ptrs = self.line_ptrs[line];
        let mut packed = [FixedQ8p8::ZERO; BANK_WIDTH];
        for (j, (bank, &ptr)) in self.banks.iter().zip(&ptrs).enumerate() {
            // Disabled mini-banks output zero.
            if mbhot >> (MINIBANKS - 1 - j) & 1 == 1 {
                let lo = BANK_WIDTH - (j + 1) * MINIBANK_WIDTH;
                packed[lo..lo + MINIBANK_WIDTH].copy_from_slice(&bank[ptr]);
            }
        }
        Ok(EncodedBank {
            packed,
            hot: self.hot_store[line],
            mbhot,
        })
    }

    /// Clears contents and pointers at a layer boundary.
    pub fn reset(&mut self) {
        for b in &mut self.banks {
            b.clear();
        }
        self.hot_store.clear();
        self.mbhot_store.clear();
        self.line_ptrs.clear();
    }
}

/// Stream dump: per line `u16` hot, `u8` mbhot, then the packed values of
/// the enabled mini-banks (lanes `[16 − 4m, 16)` in ascending order) as
/// `i16`, all little-endian.
pub fn write_stream<W: Write>(mut w: W, banks: &[EncodedBank]) -> std::io::Result<()> {
    for b in banks {
        w.write_all(&b.hot.to_le_bytes())?;
        w.write_all(&[b.mbhot & 0xF])?;
        let m = b.minibanks_used();
        for x in &b.packed[BANK_WIDTH - m * MINIBANK_WIDTH..] {
            w.write_all(&x.raw().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_stream<R: Read>(mut r: R) -> Result<Vec<EncodedBank>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    let mut pos = 0;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*pos..*pos + n)
            .ok_or_else(|| Error::Format(format!("stream truncated at byte {}", *pos)))?;
        *pos += n;
        Ok(s)
    };
    while pos < bytes.len() {
        let hot = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
        let mbhot = take(&mut pos, 1)?[0];
        let m = super::minibanks_for(hot.count_ones() as usize);
        if mbhot != mbhot_for(hot.count_ones() as usize) {
            return Err(Error::Format(format!(
                "line {}: mbhot {mbhot:04b} disagrees with hot",
                out.len()
            )));
        }
        let mut packed = [FixedQ8p8::ZERO; BANK_WIDTH];
        for slot in &mut packed[BANK_WIDTH - m * MINIBANK_WIDTH..] {
            *slot = FixedQ8p8::from_raw(i16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()));
        }
        out.push(EncodedBank { packed, hot, mbhot });
    }
    Ok(out)
}
