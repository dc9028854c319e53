//! Runtime feature compression.
//!
//! A feature vector is split across channels into 16-lane banks. Each bank
//! is ReLU'd, its positive lanes flagged in a 16-bit hot code (bit `i` =
//! lane `i`) and packed, in lane order, into the top lanes
//! `[16 − n, 16)`. The mini-bank-hot code marks how many 4-lane mini-banks
//! the packed data needs, head first: bit 3 is mini-bank 1 (lanes 12..15),
//! bit 0 is mini-bank 4 (lanes 0..3).

mod sizing;
mod store;

pub use sizing::{
    histogram_from_banks, size_minibanks, storage_report, Category, LayerStorage, SparsityHistogram, StorageConfig,
    StorageTotals,
};
pub use store::{read_stream, write_stream, MiniBankLayout};

use crate::error::CodecError;
use crate::fixed::FixedQ8p8;
use crate::tensor::{FeatureTensor, VERTICES};

pub const BANK_WIDTH: usize = 16;
pub const MINIBANKS: usize = 4;
pub const MINIBANK_WIDTH: usize = BANK_WIDTH / MINIBANKS;

pub type BankVector = [FixedQ8p8; BANK_WIDTH];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EncodedBank {
    pub packed: BankVector,
    pub hot: u16,
    /// Low 4 bits used.
    pub mbhot: u8,
}

impl EncodedBank {
    pub const ZERO: Self = Self {
        packed: [FixedQ8p8::ZERO; BANK_WIDTH],
        hot: 0,
        mbhot: 0,
    };

    pub fn popcount(&self) -> u32 {
        self.hot.count_ones()
    }

    /// Mini-banks enabled by `mbhot`.
    pub fn minibanks_used(&self) -> usize {
        minibanks_for(self.popcount() as usize)
    }

    /// Lanes of mini-bank `j` (0-based, head first).
    pub fn minibank(&self, j: usize) -> [FixedQ8p8; MINIBANK_WIDTH] {
        let lo = BANK_WIDTH - (j + 1) * MINIBANK_WIDTH;
        self.packed[lo..lo + MINIBANK_WIDTH].try_into().unwrap()
    }
}

/// Mini-banks needed for `n` non-zero values.
pub fn minibanks_for(n: usize) -> usize {
    n.div_ceil(MINIBANK_WIDTH)
}

/// Leading-ones code with `ceil(n / 4)` ones.
pub fn mbhot_for(n: usize) -> u8 {
    let m = minibanks_for(n).min(MINIBANKS);
    (((1u16 << m) - 1) << (MINIBANKS - m)) as u8
}

pub fn relu_encode_bank(raw: &BankVector) -> EncodedBank {
    let mut hot = 0u16;
    for (i, x) in raw.iter().enumerate() {
        if x.raw() > 0 {
            hot |= 1 << i;
        }
    }
    let n = hot.count_ones() as usize;
    let mut packed = [FixedQ8p8::ZERO; BANK_WIDTH];
    for (slot, x) in (BANK_WIDTH - n..).zip(raw.iter().filter(|x| x.raw() > 0)) {
        packed[slot] = *x;
    }
    EncodedBank {
        packed,
        hot,
        mbhot: mbhot_for(n),
    }
}

/// Inverse of [`relu_encode_bank`]. Runs as four stages of four lanes; each
/// stage consumes packed values in order for the hot bits of its lanes.
pub fn decode_bank(enc: &EncodedBank) -> Result<BankVector, CodecError> {
    let n = enc.popcount();
    let packed_nz = enc.packed.iter().filter(|x| !x.is_zero()).count() as u32;
    if packed_nz != n {
        return Err(CodecError::PopcountMismatch {
            hot: n,
            packed: packed_nz,
        });
    }
    let expected = mbhot_for(n as usize);
    if enc.mbhot & 0xF != expected || enc.mbhot & 0xF0 != 0 {
        return Err(CodecError::MbhotMismatch {
            expected,
            found: enc.mbhot,
            popcount: n,
        });
    }
    let base = BANK_WIDTH - n as usize;
    if let Some(lane) = (0..base).find(|&l| !enc.packed[l].is_zero()) {
        return Err(CodecError::MisplacedLane { lane });
    }
    if let Some(lane) = (base..BANK_WIDTH).find(|&l| enc.packed[l].raw() <= 0) {
        return Err(CodecError::NonPositive {
            lane,
            raw: enc.packed[lane].raw(),
        });
    }
    let mut out = [FixedQ8p8::ZERO; BANK_WIDTH];
    let mut next = base;
    for (lane, o) in out.iter_mut().enumerate() {
        if enc.hot >> lane & 1 == 1 {
            *o = enc.packed[next];
            next += 1;
        }
    }
    Ok(out)
}

/// Banks per feature vector of `channels` channels.
pub fn banks_per_vector(channels: usize) -> usize {
    channels.div_ceil(BANK_WIDTH)
}

/// Splits every `(t, v)` feature vector of `f` into banks, zero-padding the
/// last bank; order is `(t, v, bank)`.
pub fn tensor_banks(f: &FeatureTensor) -> Vec<BankVector> {
    let lines = banks_per_vector(f.channels());
    let mut out = Vec::with_capacity(f.frames() * VERTICES * lines);
    for t in 0..f.frames() {
        for v in 0..VERTICES {
            for b in 0..lines {
                let mut bank = [FixedQ8p8::ZERO; BANK_WIDTH];
                for (lane, slot) in bank.iter_mut().enumerate() {
                    let c = b * BANK_WIDTH + lane;
                    if c < f.channels() {
                        *slot = f.get(c, t, v);
                    }
                }
                out.push(bank);
            }
        }
    }
    out
}

pub fn encode_tensor(f: &FeatureTensor) -> Vec<EncodedBank> {
    tensor_banks(f).iter().map(relu_encode_bank).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank_from_hot(hot: u16) -> BankVector {
        std::array::from_fn(|i| FixedQ8p8::from_raw(if hot >> i & 1 == 1 { 10 + i as i16 } else { -3 }))
    }

    #[test]
    fn worked_example() {
        let hot = 0b0001_1100_0000_0111;
        let enc = relu_encode_bank(&bank_from_hot(hot));
        assert_eq!(enc.hot, hot);
        assert_eq!(enc.popcount(), 6);
        assert_eq!(enc.mbhot, 0b1100);
        let head = enc.minibank(0);
        let second = enc.minibank(1);
        assert_eq!(head.iter().filter(|x| !x.is_zero()).count(), 4);
        assert_eq!(second.iter().filter(|x| !x.is_zero()).count(), 2);
        assert!(second[..2].iter().all(|x| x.is_zero()));
    }

    #[test]
    fn all_negative_and_all_positive() {
        let neg = relu_encode_bank(&[FixedQ8p8::from_raw(-5); 16]);
        assert_eq!(neg, EncodedBank::ZERO);
        let pos: BankVector = std::array::from_fn(|i| FixedQ8p8::from_raw(i as i16 + 1));
        let enc = relu_encode_bank(&pos);
        assert_eq!((enc.hot, enc.mbhot, enc.packed), (0xFFFF, 0b1111, pos));
    }

    #[test]
    fn mbhot_law() {
        let expected = [0b0000, 0b1000, 0b1000, 0b1000, 0b1000, 0b1100, 0b1100, 0b1100, 0b1100];
        for (n, &m) in expected.iter().enumerate() {
            assert_eq!(mbhot_for(n), m, "n = {n}");
        }
        assert_eq!(mbhot_for(13), 0b1111);
        assert_eq!(mbhot_for(16), 0b1111);
    }

    #[test]
    fn zero_bank_decodes_to_zero() {
        assert_eq!(decode_bank(&EncodedBank::ZERO).unwrap(), [FixedQ8p8::ZERO; 16]);
    }

    #[test]
    fn malformed_banks_rejected() {
        let mut enc = relu_encode_bank(&bank_from_hot(0b111));
        enc.hot = 0b1111;
        assert!(matches!(
            decode_bank(&enc),
            Err(CodecError::PopcountMismatch { hot: 4, packed: 3 })
        ));
        let mut enc = relu_encode_bank(&bank_from_hot(0b11111));
        enc.mbhot = 0b1000;
        assert!(matches!(decode_bank(&enc), Err(CodecError::MbhotMismatch { .. })));
        let mut enc = relu_encode_bank(&bank_from_hot(0b11));
        enc.packed.swap(14, 0);
        assert!(matches!(decode_bank(&enc), Err(CodecError::MisplacedLane { lane: 0 })));
        let mut enc = relu_encode_bank(&bank_from_hot(0b11));
        enc.packed[15] = FixedQ8p8::from_raw(-1);
        assert!(matches!(
            decode_bank(&enc),
            Err(CodecError::NonPositive { lane: 15, .. })
        ));
    }

    #[test]
    fn tensor_banks_pad_last_bank() {
        let f = FeatureTensor::from_fn(20, 2, |c, _, _| FixedQ8p8::from_raw(c as i16 + 1));
        let banks = tensor_banks(&f);
        assert_eq!(banks.len(), 2 * 25 * 2);
        assert_eq!(banks[1][3].raw(), 20);
        assert!(banks[1][4..].iter().all(|x| x.is_zero()));
    }

    proptest! {
        #[test]
        fn roundtrip_is_relu(raw in proptest::array::uniform16(any::<i16>())) {
            let bank: BankVector = raw.map(FixedQ8p8::from_raw);
            let enc = relu_encode_bank(&bank);
            prop_assert_eq!(decode_bank(&enc).unwrap(), bank.map(FixedQ8p8::relu));
            let positives: Vec<_> = bank.iter().filter(|x| x.raw() > 0).collect();
            let tail: Vec<_> = enc.packed[16 - positives.len()..].iter().collect();
            prop_assert_eq!(tail, positives);
        }
    }
}
