//! The stored form of a compressed activation map and its byte encoding.
//!
//! Layout (all integers little-endian `u32`, reals little-endian `f32`):
//!
//! ```text
//! "AQT1" | bits | grouping (0 = per-row, 1 = block) | G (0 for per-row)
//!        | rows | cols | groups
//! groups × (zero_point, range)
//! ceil(rows·cols·bits / 8) packed code bytes
//! [explicit boundaries only] u32 count | count × f64 inner edges
//! ```

use serde::{Deserialize, Serialize};

use super::pack::{packed_len, unpack_codes};
use super::{Boundaries, Grouping, QuantScheme};
use crate::blockwise::{memory_report, MemoryReport};
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"AQT1";
pub const HEADER_BYTES: usize = 4 + 6 * 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMeta {
    pub zero_point: f32,
    pub range: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackedQuantTensor {
    scheme: QuantScheme,
    rows: usize,
    cols: usize,
    meta: Vec<GroupMeta>,
    codes: Vec<u8>,
}

impl PackedQuantTensor {
    pub fn from_parts(
        scheme: QuantScheme,
        rows: usize,
        cols: usize,
        meta: Vec<GroupMeta>,
        codes: Vec<u8>,
    ) -> Result<Self> {
        let groups = scheme.num_groups(rows, cols);
        if meta.len() != groups {
            return Err(Error::Corrupt(format!("{} group records, expected {groups}", meta.len())));
        }
        let need = packed_len(rows * cols, scheme.bits());
        if codes.len() != need {
            return Err(Error::Corrupt(format!("{} code bytes, expected {need}", codes.len())));
        }
        if let Some(m) = meta.iter().find(|m| !(m.range >= 0.0) || !m.range.is_finite() || !m.zero_point.is_finite()) {
            return Err(Error::Corrupt(format!("invalid group metadata {m:?}")));
        }
        Ok(Self {
            scheme,
            rows,
            cols,
            meta,
            codes,
        })
    }

    pub fn scheme(&self) -> &QuantScheme {
        &self.scheme
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn group_meta(&self) -> &[GroupMeta] {
        &self.meta
    }

    pub fn packed_codes(&self) -> &[u8] {
        &self.codes
    }

    /// Unpacked codes in row-major order.
    pub fn codes(&self) -> Result<Vec<u8>> {
        unpack_codes(&self.codes, self.scheme.bits(), self.rows * self.cols)
    }

    pub fn dequantize(&self) -> Result<DenseMatrix> {
        super::dequantize(self)
    }

    pub fn memory_report(&self) -> MemoryReport {
        memory_report(self.rows, self.cols, &self.scheme)
    }

    /// Bytes of per-tensor storage: group metadata plus packed codes.
    pub fn payload_bytes(&self) -> usize {
        self.meta.len() * 8 + self.codes.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (mode, g) = match self.scheme.grouping() {
            Grouping::PerRow => (0u32, 0u32),
            Grouping::Block(g) => (1, g as u32),
        };
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload_bytes());
        out.extend_from_slice(MAGIC);
        for v in [
            self.scheme.bits() as u32,
            mode,
            g,
            self.rows as u32,
            self.cols as u32,
            self.meta.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for m in &self.meta {
            out.extend_from_slice(&m.zero_point.to_le_bytes());
            out.extend_from_slice(&m.range.to_le_bytes());
        }
        out.extend_from_slice(&self.codes);
        if let Boundaries::Explicit(inner) = self.scheme.boundaries() {
            out.extend_from_slice(&(inner.len() as u32).to_le_bytes());
            for e in inner {
                out.extend_from_slice(&e.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let bits = r.u32()?;
        let mode = r.u32()?;
        let g = r.u32()? as usize;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let groups = r.u32()? as usize;
        let bits = u8::try_from(bits).map_err(|_| Error::Corrupt(format!("bit width {bits}")))?;
        let grouping = match mode {
            0 => Grouping::PerRow,
            1 => Grouping::Block(g),
            m => return Err(Error::Corrupt(format!("unknown grouping mode {m}"))),
        };
        let scheme = QuantScheme::new(bits, grouping, Boundaries::Uniform)
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        if groups != scheme.num_groups(rows, cols) {
            return Err(Error::Corrupt(format!("group count {groups} inconsistent with shape")));
        }
        let mut meta = Vec::with_capacity(groups);
        for _ in 0..groups {
            let zero_point = r.f32()?;
            let range = r.f32()?;
            meta.push(GroupMeta { zero_point, range });
        }
        let codes = r.take(packed_len(rows * cols, bits))?.to_vec();
        let scheme = if r.remaining() > 0 {
            let count = r.u32()? as usize;
            let inner = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            scheme
                .with_boundaries(Boundaries::Explicit(inner))
                .map_err(|e| Error::Corrupt(e.to_string()))?
        } else {
            scheme
        };
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        Self::from_parts(scheme, rows, cols, meta, codes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::quantize;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let h = DenseMatrix::from_vec(1, 4, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let p = quantize(&h, &QuantScheme::per_row(2).unwrap(), &mut SeededRng::new(0)).unwrap();
        let bytes = p.to_bytes();
        let mut expected = b"AQT1".to_vec();
        for v in [2u32, 0, 0, 1, 4, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&0f32.to_le_bytes());
        expected.extend_from_slice(&3f32.to_le_bytes());
        expected.push(0xE4);
        assert_eq!(bytes, expected);
        assert_eq!(bytes.len(), HEADER_BYTES + p.payload_bytes());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let h = DenseMatrix::from_fn(3, 5, |i, j| (i + j) as f32);
        let p = quantize(&h, &QuantScheme::block(4, 4).unwrap(), &mut SeededRng::new(0)).unwrap();
        let bytes = p.to_bytes();
        assert!(PackedQuantTensor::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(PackedQuantTensor::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 3;
        assert!(PackedQuantTensor::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[24] = 99; // group count
        assert!(PackedQuantTensor::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad.extend_from_slice(&[1, 2]);
        assert!(PackedQuantTensor::from_bytes(&bad).is_err());
        // negative range
        let mut bad = bytes;
        bad[HEADER_BYTES + 4..HEADER_BYTES + 8].copy_from_slice(&(-1f32).to_le_bytes());
        assert!(PackedQuantTensor::from_bytes(&bad).is_err());
    }

    #[test]
    fn explicit_boundaries_survive_encoding() {
        let scheme = QuantScheme::block(2, 8)
            .unwrap()
            .with_boundaries(Boundaries::Explicit(vec![1.1372, 1.8628]))
            .unwrap();
        let h = DenseMatrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f32);
        let p = quantize(&h, &scheme, &mut SeededRng::new(1)).unwrap();
        let q = PackedQuantTensor::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(p, q);
    }

    proptest! {
        #[test]
        fn encoding_is_lossless(
            rows in 1usize..12,
            cols in 1usize..12,
            bits in prop::sample::select(vec![2u8, 4, 8]),
            group in prop::option::of(1usize..40),
            seed in any::<u64>(),
        ) {
            let mut rng = SeededRng::new(seed);
            let h = DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal() as f32);
            let scheme = match group {
                None => QuantScheme::per_row(bits).unwrap(),
                Some(g) => QuantScheme::block(bits, g).unwrap(),
            };
            let p = quantize(&h, &scheme, &mut rng).unwrap();
            let bytes = p.to_bytes();
            let q = PackedQuantTensor::from_bytes(&bytes).unwrap();
            prop_assert_eq!(q.to_bytes(), bytes);
            prop_assert_eq!(q, p);
        }
    }
}
