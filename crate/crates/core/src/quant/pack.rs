//! Sub-byte code packing. Codes are laid out little-endian within each
//! byte: the first code occupies the lowest `b` bits.

use crate::error::{Error, Result};

fn check_bits(bits: u8) -> Result<()> {
    if matches!(bits, 2 | 4 | 8) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("unsupported bit width {bits}")))
    }
}

/// Bytes needed for `count` codes of `bits` bits.
pub fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack_codes(codes: &[u8], bits: u8) -> Result<Vec<u8>> {
    check_bits(bits)?;
    if bits == 8 {
        return Ok(codes.to_vec());
    }
    let per_byte = 8 / bits as usize;
    let limit = 1u8 << bits;
    let mut out = vec![0u8; packed_len(codes.len(), bits)];
    for (k, &c) in codes.iter().enumerate() {
        if c >= limit {
            return Err(Error::CodeOutOfRange { code: c as u32, bits });
        }
        out[k / per_byte] |= c << ((k % per_byte) * bits as usize);
    }
    Ok(out)
}

pub fn unpack_codes(bytes: &[u8], bits: u8, count: usize) -> Result<Vec<u8>> {
    check_bits(bits)?;
    if bytes.len() < packed_len(count, bits) {
        return Err(Error::Corrupt(format!(
            "{} bytes cannot hold {count} codes of {bits} bits",
            bytes.len()
        )));
    }
    if bits == 8 {
        return Ok(bytes[..count].to_vec());
    }
    let per_byte = 8 / bits as usize;
    let mask = (1u8 << bits) - 1;
    Ok((0..count)
        .map(|k| (bytes[k / per_byte] >> ((k % per_byte) * bits as usize)) & mask)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_bit_layout() {
        assert_eq!(pack_codes(&[0, 1, 2, 3], 2).unwrap(), vec![0xE4]);
        assert_eq!(pack_codes(&[1, 2], 4).unwrap(), vec![0x21]);
        assert_eq!(pack_codes(&[3], 2).unwrap(), vec![0x03]);
    }

    #[test]
    fn empty_in_empty_out() {
        for bits in [2, 4, 8] {
            assert!(pack_codes(&[], bits).unwrap().is_empty());
            assert!(unpack_codes(&[], bits, 0).unwrap().is_empty());
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(pack_codes(&[4], 2), Err(Error::CodeOutOfRange { code: 4, bits: 2 })));
        assert!(pack_codes(&[16], 4).is_err());
        assert!(pack_codes(&[0], 3).is_err());
        assert!(unpack_codes(&[0], 2, 5).is_err());
    }

    #[test]
    fn large_roundtrip() {
        let mut state = 0x2545F4914F6CDD1Du64;
        for bits in [2u8, 4, 8] {
            let codes: Vec<u8> = (0..100_000)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state % (1u64 << bits)) as u8
                })
                .collect();
            let packed = pack_codes(&codes, bits).unwrap();
            assert_eq!(packed.len(), packed_len(codes.len(), bits));
            assert_eq!(unpack_codes(&packed, bits, codes.len()).unwrap(), codes);
        }
    }

    proptest! {
        #[test]
        fn pack_unpack_identity(bits in prop::sample::select(vec![2u8, 4, 8]), raw in prop::collection::vec(any::<u8>(), 0..1000)) {
            let codes: Vec<u8> = raw.iter().map(|c| c & ((1u16 << bits) - 1) as u8).collect();
            let packed = pack_codes(&codes, bits).unwrap();
            prop_assert_eq!(packed.len(), (codes.len() * bits as usize).div_ceil(8));
            prop_assert_eq!(unpack_codes(&packed, bits, codes.len()).unwrap(), codes);
        }
    }
}
