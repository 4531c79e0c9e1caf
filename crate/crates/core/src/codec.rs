//! Splitting k-bit codes into most-significant-first bit fields and putting
//! them back together.
//!
//! A [`BitSchedule`] holds cumulative bit positions `b_1 < ... < b_n = k`.
//! Stage `m` carries the field of each code from MSB offset `b_{m-1}` up to
//! `b_m`, so stage 1 holds the most significant bits.

use serde::{Deserialize, Serialize};

use crate::error::CodecError;
use crate::quant::MAX_BITS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BitSchedule {
    bits: u32,
    cumulative: Vec<u32>,
}

impl BitSchedule {
    pub fn new(bits: u32, cumulative: Vec<u32>) -> Result<Self, CodecError> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(CodecError::InvalidBits(bits));
        }
        let Some(&last) = cumulative.last() else {
            return Err(CodecError::EmptySchedule);
        };
        if cumulative[0] < 1 || cumulative.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CodecError::NotIncreasing(cumulative));
        }
        if last != bits {
            return Err(CodecError::WrongEnd { k: bits, last });
        }
        Ok(Self { bits, cumulative })
    }

    /// `step, 2*step, ...` capped at `bits`.
    pub fn uniform(bits: u32, step: u32) -> Result<Self, CodecError> {
        if step == 0 {
            return Err(CodecError::NotIncreasing(vec![0]));
        }
        let mut cumulative: Vec<u32> = (1..).map(|i| i * step).take_while(|&b| b < bits).collect();
        cumulative.push(bits);
        Self::new(bits, cumulative)
    }

    /// The 8-stage schedule 2, 4, ..., 16.
    pub fn default_16() -> Self {
        Self::uniform(16, 2).expect("valid default schedule")
    }

    /// Every stage carries a single bit.
    pub fn bitwise(bits: u32) -> Result<Self, CodecError> {
        Self::uniform(bits, 1)
    }

    /// Parses a comma separated list such as `"2,4,6,8"`.
    pub fn parse(bits: u32, text: &str) -> Result<Self, CodecError> {
        let cumulative = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u32>().map_err(|_| CodecError::Parse(text.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(bits, cumulative)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn stages(&self) -> usize {
        self.cumulative.len()
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cumulative
    }

    /// `b_m` for 1-based stage `m`, with `b_0 = 0`.
    pub fn position(&self, stage: usize) -> u32 {
        if stage == 0 {
            0
        } else {
            self.cumulative[stage - 1]
        }
    }

    /// Bits carried by stage `m`.
    pub fn width(&self, stage: usize) -> u32 {
        self.position(stage) - self.position(stage - 1)
    }

    pub fn widths(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.stages()).map(|m| self.width(m))
    }

    fn check_stage(&self, stage: usize) -> Result<(), CodecError> {
        if stage == 0 || stage > self.stages() {
            return Err(CodecError::StageOutOfRange {
                stage,
                stages: self.stages(),
            });
        }
        Ok(())
    }

    fn check_code(&self, code: u32) -> Result<(), CodecError> {
        if code >> self.bits != 0 {
            return Err(CodecError::CodeOutOfRange { code, k: self.bits });
        }
        Ok(())
    }

    fn check_fragment(&self, stage: usize, value: u32) -> Result<(), CodecError> {
        if value >> self.width(stage) != 0 {
            return Err(CodecError::FragmentOutOfRange {
                stage,
                value,
                width: self.width(stage),
            });
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for BitSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            bits: u32,
            cumulative: Vec<u32>,
        }
        let raw = Raw::deserialize(deserializer)?;
        BitSchedule::new(raw.bits, raw.cumulative).map_err(serde::de::Error::custom)
    }
}

/// Bit field of `code` for stage `m`.
pub fn divide(code: u32, sched: &BitSchedule, stage: usize) -> Result<u32, CodecError> {
    sched.check_stage(stage)?;
    sched.check_code(code)?;
    Ok(divide_unchecked(
        code,
        sched.bits,
        sched.position(stage - 1),
        sched.position(stage),
    ))
}

#[inline]
fn divide_unchecked(code: u32, bits: u32, lo: u32, hi: u32) -> u32 {
    let register = (1u32 << bits) - 1;
    // the left shift runs in a k-bit register
    ((code << lo) & register) >> (bits - hi + lo)
}

/// Places fragments `1..=fragments.len()` into a k-bit code.
pub fn concatenate(fragments: &[u32], sched: &BitSchedule) -> Result<u32, CodecError> {
    if fragments.len() > sched.stages() {
        return Err(CodecError::TooManyFragments {
            got: fragments.len(),
            stages: sched.stages(),
        });
    }
    fragments
        .iter()
        .enumerate()
        .try_fold(0, |code, (i, &f)| accumulate(code, f, sched, i + 1))
}

/// Adds stage `m`'s fragment to a partially assembled code.
pub fn accumulate(code: u32, fragment: u32, sched: &BitSchedule, stage: usize) -> Result<u32, CodecError> {
    sched.check_stage(stage)?;
    sched.check_fragment(stage, fragment)?;
    Ok(code | (fragment << (sched.bits - sched.position(stage))))
}

/// One stage's fragments for every element of a tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentPlane {
    pub stage: usize,
    pub width: u32,
    pub values: Vec<u16>,
}

pub fn divide_tensor(codes: &[u16], sched: &BitSchedule, stage: usize) -> Result<FragmentPlane, CodecError> {
    sched.check_stage(stage)?;
    let (lo, hi) = (sched.position(stage - 1), sched.position(stage));
    let values = codes
        .iter()
        .map(|&c| {
            let c = u32::from(c);
            sched.check_code(c)?;
            Ok(divide_unchecked(c, sched.bits, lo, hi) as u16)
        })
        .collect::<Result<_, CodecError>>()?;
    Ok(FragmentPlane {
        stage,
        width: hi - lo,
        values,
    })
}

/// All planes of a code sequence, stage 1 first.
pub fn divide_all(codes: &[u16], sched: &BitSchedule) -> Result<Vec<FragmentPlane>, CodecError> {
    (1..=sched.stages()).map(|m| divide_tensor(codes, sched, m)).collect()
}

/// ORs a plane into accumulated codes in place.
pub fn accumulate_tensor(codes: &mut [u16], plane: &FragmentPlane, sched: &BitSchedule) -> Result<(), CodecError> {
    sched.check_stage(plane.stage)?;
    if plane.values.len() != codes.len() {
        return Err(CodecError::PlaneLength {
            expected: codes.len(),
            actual: plane.values.len(),
        });
    }
    let width = sched.width(plane.stage);
    let shift = sched.bits - sched.position(plane.stage);
    for (code, &v) in codes.iter_mut().zip(&plane.values) {
        if u32::from(v) >> width != 0 {
            return Err(CodecError::FragmentOutOfRange {
                stage: plane.stage,
                value: v.into(),
                width,
            });
        }
        *code |= v << shift;
    }
    Ok(())
}

pub fn concat_tensor(planes: &[FragmentPlane], sched: &BitSchedule, len: usize) -> Result<Vec<u16>, CodecError> {
    let mut codes = vec![0u16; len];
    for plane in planes {
        accumulate_tensor(&mut codes, plane, sched)?;
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reads bits one at a time by absolute MSB offset.
    fn field_oracle(code: u32, k: u32, lo: u32, hi: u32) -> u32 {
        (lo..hi).fold(0, |acc, pos| (acc << 1) | ((code >> (k - 1 - pos)) & 1))
    }

    fn schedules(k: u32) -> Vec<BitSchedule> {
        let mut out = vec![BitSchedule::new(k, vec![k]).unwrap(), BitSchedule::bitwise(k).unwrap()];
        if k >= 2 {
            out.push(BitSchedule::uniform(k, 2).unwrap());
        }
        if k >= 4 {
            out.push(BitSchedule::new(k, vec![1, 3, k]).unwrap());
        }
        out
    }

    #[test]
    fn schedule_validation() {
        assert_eq!(BitSchedule::default_16().cumulative(), &[2, 4, 6, 8, 10, 12, 14, 16]);
        assert_eq!(
            BitSchedule::new(4, vec![1, 2, 4]).unwrap().widths().collect::<Vec<_>>(),
            [1, 1, 2]
        );
        assert!(matches!(BitSchedule::new(16, vec![]), Err(CodecError::EmptySchedule)));
        assert!(matches!(
            BitSchedule::new(16, vec![4, 2, 16]),
            Err(CodecError::NotIncreasing(_))
        ));
        assert!(matches!(
            BitSchedule::new(16, vec![0, 16]),
            Err(CodecError::NotIncreasing(_))
        ));
        assert!(matches!(
            BitSchedule::new(16, vec![2, 8]),
            Err(CodecError::WrongEnd { .. })
        ));
        assert!(matches!(BitSchedule::new(0, vec![0]), Err(CodecError::InvalidBits(0))));
        assert!(matches!(
            BitSchedule::new(17, vec![17]),
            Err(CodecError::InvalidBits(17))
        ));
        assert!(BitSchedule::parse(16, "4,2,16").is_err());
        assert!(matches!(BitSchedule::parse(16, "2,x,16"), Err(CodecError::Parse(_))));
        assert_eq!(BitSchedule::parse(16, "16").unwrap().stages(), 1);
        assert_eq!(BitSchedule::uniform(5, 2).unwrap().cumulative(), &[2, 4, 5]);
    }

    #[test]
    fn worked_example() {
        let s = BitSchedule::new(4, vec![1, 2, 4]).unwrap();
        let frags: Vec<u32> = (1..=3).map(|m| divide(0b1011, &s, m).unwrap()).collect();
        assert_eq!(frags, [1, 0, 3]);
        assert_eq!(concatenate(&[1, 0, 3], &s).unwrap(), 11);
        assert_eq!(concatenate(&[1, 0], &s).unwrap(), 8);
        assert_eq!(accumulate(8, 3, &s, 3).unwrap(), 11);
        assert_eq!(concatenate(&[0, 0, 0], &s).unwrap(), 0);
    }

    #[test]
    fn zero_and_all_ones() {
        for k in 1..=16 {
            for s in schedules(k) {
                let ones = (1u32 << k) - 1;
                for m in 1..=s.stages() {
                    assert_eq!(divide(0, &s, m).unwrap(), 0);
                    assert_eq!(divide(ones, &s, m).unwrap(), (1 << s.width(m)) - 1);
                }
            }
        }
    }

    #[test]
    fn accumulate_identities() {
        let s = BitSchedule::default_16();
        for f in 0..4 {
            assert_eq!(accumulate(0, f, &s, 1).unwrap(), concatenate(&[f], &s).unwrap());
        }
        for m in 1..=8 {
            assert_eq!(accumulate(0xABCD, 0, &s, m).unwrap(), 0xABCD);
        }
    }

    #[test]
    fn errors() {
        let s = BitSchedule::new(4, vec![1, 2, 4]).unwrap();
        assert!(matches!(divide(1, &s, 0), Err(CodecError::StageOutOfRange { .. })));
        assert!(matches!(divide(1, &s, 4), Err(CodecError::StageOutOfRange { .. })));
        assert!(matches!(divide(16, &s, 1), Err(CodecError::CodeOutOfRange { .. })));
        assert!(matches!(
            concatenate(&[2], &s),
            Err(CodecError::FragmentOutOfRange { .. })
        ));
        assert!(matches!(
            concatenate(&[0, 0, 0, 0], &s),
            Err(CodecError::TooManyFragments { .. })
        ));
    }

    #[test]
    fn divide_matches_bit_oracle() {
        for k in 1..=10 {
            for s in schedules(k) {
                for code in 0..(1u32 << k) {
                    for m in 1..=s.stages() {
                        assert_eq!(
                            divide(code, &s, m).unwrap(),
                            field_oracle(code, k, s.position(m - 1), s.position(m))
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn prefix_consistency() {
        for k in 1..=10 {
            for s in schedules(k) {
                for code in 0..(1u32 << k) {
                    let frags: Vec<u32> = (1..=s.stages()).map(|m| divide(code, &s, m).unwrap()).collect();
                    for m in 1..=s.stages() {
                        let low = k - s.position(m);
                        assert_eq!(concatenate(&frags[..m], &s).unwrap(), (code >> low) << low);
                    }
                }
            }
        }
    }

    #[test]
    fn accumulation_order_does_not_matter() {
        let s = BitSchedule::new(8, vec![1, 3, 4, 8]).unwrap();
        let orders: [[usize; 4]; 4] = [[1, 2, 3, 4], [4, 3, 2, 1], [2, 4, 1, 3], [3, 1, 4, 2]];
        for code in 0..256u32 {
            for order in orders {
                let got = order.iter().fold(0, |acc, &m| {
                    accumulate(acc, divide(code, &s, m).unwrap(), &s, m).unwrap()
                });
                assert_eq!(got, code);
            }
        }
    }

    #[test]
    fn tensor_lifts() {
        let s = BitSchedule::new(2, vec![1, 2]).unwrap();
        let planes = divide_all(&[0, 1, 3], &s).unwrap();
        assert_eq!(planes[0].values, [0, 0, 1]);
        assert_eq!(planes[1].values, [0, 1, 1]);
        assert_eq!(concat_tensor(&planes, &s, 3).unwrap(), [0, 1, 3]);

        let single = BitSchedule::new(7, vec![7]).unwrap();
        let codes: Vec<u16> = (0..128).collect();
        assert_eq!(divide_all(&codes, &single).unwrap()[0].values, codes);
    }

    #[test]
    fn no_information_inflation() {
        for k in 1..=16 {
            for s in schedules(k) {
                let codes = vec![0u16; 37];
                let total: usize = divide_all(&codes, &s)
                    .unwrap()
                    .iter()
                    .map(|p| p.values.len() * p.width as usize)
                    .sum();
                assert_eq!(total, 37 * k as usize);
            }
        }
    }

    #[test]
    fn plane_length_mismatch() {
        let s = BitSchedule::new(2, vec![1, 2]).unwrap();
        let plane = FragmentPlane {
            stage: 1,
            width: 1,
            values: vec![1, 0],
        };
        assert!(matches!(
            accumulate_tensor(&mut [0u16; 3], &plane, &s),
            Err(CodecError::PlaneLength { .. })
        ));
    }
}
