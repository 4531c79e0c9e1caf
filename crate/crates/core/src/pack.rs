//! MSB-first packing of fixed-width unsigned values into bytes.

/// Bytes needed for `count` values of `width` bits.
pub fn packed_len(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}

/// Packs `values` (each `< 2^width`) MSB-first. The final byte is
/// zero-padded in its low bits.
pub fn pack(values: &[u16], width: u32) -> Vec<u8> {
    debug_assert!((1..=16).contains(&width));
    let mut out = Vec::with_capacity(packed_len(values.len(), width));
    let mut acc: u32 = 0;
    let mut filled: u32 = 0;
    for &v in values {
        debug_assert!(u32::from(v) >> width == 0);
        acc = (acc << width) | u32::from(v);
        filled += width;
        while filled >= 8 {
            filled -= 8;
            out.push((acc >> filled) as u8);
        }
        acc &= (1 << filled) - 1;
    }
    if filled > 0 {
        out.push((acc << (8 - filled)) as u8);
    }
    out
}

/// Reads `count` values of `width` bits. `bytes` must hold at least
/// `packed_len(count, width)` bytes.
pub fn unpack(bytes: &[u8], width: u32, count: usize) -> Vec<u16> {
    debug_assert!(bytes.len() >= packed_len(count, width));
    let mask = (1u32 << width) - 1;
    let mut out = Vec::with_capacity(count);
    let mut acc: u32 = 0;
    let mut filled: u32 = 0;
    let mut src = bytes.iter();
    while out.len() < count {
        while filled < width {
            acc = (acc << 8) | u32::from(*src.next().expect("packed input too short"));
            filled += 8;
        }
        filled -= width;
        out.push(((acc >> filled) & mask) as u16);
        acc &= (1 << filled) - 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_bits_msb_first() {
        assert_eq!(pack(&[1, 0, 1, 1, 0, 0, 1, 0], 1), [0b1011_0010]);
    }

    #[test]
    fn padding_in_low_bits() {
        // 5 values * 2 bits = 10 bits -> 2 bytes
        let bytes = pack(&[3, 0, 1, 2, 3], 2);
        assert_eq!(bytes, [0b1100_0110, 0b1100_0000]);
        assert_eq!(packed_len(5, 2), 2);
    }

    #[test]
    fn wide_values_cross_bytes() {
        assert_eq!(pack(&[0xABCD], 16), [0xAB, 0xCD]);
        assert_eq!(pack(&[0b101, 0b011, 0b111], 3), [0b1010_1111, 0b1000_0000]);
        assert_eq!(unpack(&[0b1010_1111, 0b1000_0000], 3, 3), [0b101, 0b011, 0b111]);
    }

    proptest! {
        #[test]
        fn round_trip(width in 1u32..=16, raw in prop::collection::vec(any::<u16>(), 0..300)) {
            let values: Vec<u16> = raw.iter().map(|v| (u32::from(*v) & ((1 << width) - 1)) as u16).collect();
            let bytes = pack(&values, width);
            prop_assert_eq!(bytes.len(), packed_len(values.len(), width));
            prop_assert_eq!(unpack(&bytes, width, values.len()), values);
        }
    }
}
