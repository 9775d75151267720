//! Block-wise grouping of a projected activation matrix and the bit
//! accounting of its compressed form.
//!
//! The `N × R` matrix is flattened row-major and cut into contiguous blocks
//! of `G` values; each block gets its own zero-point and range. A trailing
//! short block is kept as is when `G` does not divide `N·R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{self, Grouping, PackedQuantTensor, QuantScheme};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

/// Bits per group of metadata: an `f32` zero-point and an `f32` range.
pub const METADATA_BITS_PER_GROUP: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockView {
    pub source_shape: (usize, usize),
    pub block_size: usize,
    pub num_blocks: usize,
    pub tail_len: usize,
}

impl BlockView {
    pub fn new(rows: usize, cols: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block size must be at least 1".into()));
        }
        let total = rows * cols;
        Ok(Self {
            source_shape: (rows, cols),
            block_size,
            num_blocks: total.div_ceil(block_size),
            tail_len: total % block_size,
        })
    }

    /// Flat index range covered by block `k`.
    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        let total = self.source_shape.0 * self.source_shape.1;
        let start = k * self.block_size;
        start..(start + self.block_size).min(total)
    }

    /// `(block, offset)` of matrix element `(i, j)`.
    pub fn locate(&self, i: usize, j: usize) -> (usize, usize) {
        let flat = i * self.source_shape.1 + j;
        (flat / self.block_size, flat % self.block_size)
    }
}

/// Row-major flattening of `h` into blocks of length `g`.
pub fn reshape_blocks(h: &DenseMatrix, g: usize) -> Result<(BlockView, Vec<f32>)> {
    let view = BlockView::new(h.rows(), h.cols(), g)?;
    Ok((view, h.data().to_vec()))
}

/// Inverse of [`reshape_blocks`].
pub fn unreshape_blocks(view: &BlockView, flat: Vec<f32>) -> Result<DenseMatrix> {
    let (rows, cols) = view.source_shape;
    DenseMatrix::from_vec(rows, cols, flat)
}

pub fn quantize_blockwise(h: &DenseMatrix, scheme: &QuantScheme, rng: &mut SeededRng) -> Result<PackedQuantTensor> {
    if !matches!(scheme.grouping(), Grouping::Block(_)) {
        return Err(Error::InvalidArgument("quantize_blockwise needs a Block(G) scheme".into()));
    }
    quant::quantize(h, scheme, rng)
}

pub fn dequantize_blockwise(p: &PackedQuantTensor) -> Result<DenseMatrix> {
    if !matches!(p.scheme().grouping(), Grouping::Block(_)) {
        return Err(Error::InvalidArgument("dequantize_blockwise needs a Block(G) tensor".into()));
    }
    quant::dequantize(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub elements: u64,
    pub code_bits: u64,
    pub metadata_bits: u64,
    pub total_bits: u64,
    /// Bytes actually occupied: metadata plus codes padded to a whole byte.
    pub bytes: u64,
    pub ratio_vs_fp32: f64,
}

impl MemoryReport {
    fn from_bits(elements: u64, code_bits: u64, metadata_bits: u64) -> Self {
        let total_bits = code_bits + metadata_bits;
        Self {
            elements,
            code_bits,
            metadata_bits,
            total_bits,
            bytes: metadata_bits / 8 + code_bits.div_ceil(8),
            ratio_vs_fp32: total_bits as f64 / (32 * elements) as f64,
        }
    }

    /// Uncompressed `f32` storage.
    pub fn fp32(n: usize, r_dim: usize) -> Self {
        let elements = (n * r_dim) as u64;
        Self::from_bits(elements, 32 * elements, 0)
    }
}

/// Storage cost of an `n × r_dim` matrix under `scheme`.
pub fn memory_report(n: usize, r_dim: usize, scheme: &QuantScheme) -> MemoryReport {
    let elements = (n * r_dim) as u64;
    let groups = scheme.num_groups(n, r_dim) as u64;
    MemoryReport::from_bits(elements, elements * scheme.bits() as u64, groups * METADATA_BITS_PER_GROUP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::quantize;

    #[test]
    fn block_counts() {
        let v = BlockView::new(4, 4, 8).unwrap();
        assert_eq!((v.num_blocks, v.tail_len), (2, 0));
        let v = BlockView::new(3, 3, 2).unwrap();
        assert_eq!((v.num_blocks, v.tail_len), (5, 1));
        assert_eq!(v.block_range(4), 8..9);
        assert_eq!(v.locate(2, 2), (4, 0));
        assert!(BlockView::new(2, 2, 0).is_err());
    }

    #[test]
    fn reshape_roundtrip() {
        let h = DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f32);
        let (view, flat) = reshape_blocks(&h, 2).unwrap();
        assert!(view.num_blocks * 2 >= 9 && 9 > (view.num_blocks - 1) * 2);
        assert_eq!(unreshape_blocks(&view, flat).unwrap(), h);
    }

    #[test]
    fn row_aligned_blocks_equal_per_row_stats() {
        let h = DenseMatrix::from_fn(6, 8, |i, j| ((i * 13 + j * 5) % 11) as f32 - 3.0);
        let block = quantize_blockwise(&h, &QuantScheme::block(2, 8).unwrap(), &mut SeededRng::new(0)).unwrap();
        let row = quantize(&h, &QuantScheme::per_row(2).unwrap(), &mut SeededRng::new(0)).unwrap();
        assert_eq!(block.group_meta(), row.group_meta());
    }

    #[test]
    fn outlier_only_affects_its_block() {
        let clean = DenseMatrix::from_fn(8, 8, |i, j| ((i + j) % 4) as f32 * 0.25);
        let mut dirty = clean.clone();
        dirty.set(3, 5, 1000.0);
        let scheme = QuantScheme::block(2, 16).unwrap();
        let a = quantize_blockwise(&clean, &scheme, &mut SeededRng::new(1)).unwrap();
        let b = quantize_blockwise(&dirty, &scheme, &mut SeededRng::new(1)).unwrap();
        let (hit, _) = BlockView::new(8, 8, 16).unwrap().locate(3, 5);
        for (k, (ma, mb)) in a.group_meta().iter().zip(b.group_meta()).enumerate() {
            if k == hit {
                assert!(mb.range > 900.0);
            } else {
                assert_eq!(ma, mb);
            }
        }
    }

    #[test]
    fn tail_block_is_short_not_padded() {
        let h = DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f32);
        let p = quantize_blockwise(&h, &QuantScheme::block(2, 4).unwrap(), &mut SeededRng::new(0)).unwrap();
        assert_eq!(p.group_meta().len(), 3);
        let tail = p.group_meta()[2];
        assert_eq!((tail.zero_point, tail.range), (8.0, 0.0));
        let back = dequantize_blockwise(&p).unwrap();
        assert_eq!(back.get(2, 2), 8.0);
    }

    #[test]
    fn constant_matrix_exact() {
        let h = DenseMatrix::filled(5, 7, -2.5);
        let p = quantize_blockwise(&h, &QuantScheme::block(4, 6).unwrap(), &mut SeededRng::new(0)).unwrap();
        assert_eq!(dequantize_blockwise(&p).unwrap(), h);
    }

    #[test]
    fn grouping_mode_is_checked() {
        let h = DenseMatrix::filled(2, 2, 1.0);
        let per_row = QuantScheme::per_row(2).unwrap();
        assert!(quantize_blockwise(&h, &per_row, &mut SeededRng::new(0)).is_err());
        let p = quantize(&h, &per_row, &mut SeededRng::new(0)).unwrap();
        assert!(dequantize_blockwise(&p).is_err());
    }

    #[test]
    fn report_arithmetic() {
        let r = memory_report(16, 64, &QuantScheme::block(2, 64).unwrap());
        assert_eq!(r.code_bits, 2048);
        assert_eq!(r.metadata_bits, 1024);
        assert_eq!(r.total_bits, 3072);
        assert_eq!(r.bytes, 384);
        assert_eq!(MemoryReport::fp32(16, 64).ratio_vs_fp32, 1.0);
        let per_row = memory_report(16, 64, &QuantScheme::per_row(2).unwrap());
        assert_eq!(per_row.metadata_bits, 16 * 64);
    }

    #[test]
    fn report_decreases_with_block_size() {
        let mut last = u64::MAX;
        let mut last_drop = u64::MAX;
        for g in [2usize, 4, 8, 16, 32, 64] {
            let r = memory_report(128, 64, &QuantScheme::block(2, g).unwrap());
            assert!(r.total_bits < last);
            if last != u64::MAX {
                let drop = last - r.total_bits;
                assert!(drop < last_drop);
                last_drop = drop;
            }
            last = r.total_bits;
        }
        let whole = memory_report(128, 64, &QuantScheme::block(2, 128 * 64).unwrap());
        assert_eq!(whole.total_bits, 128 * 64 * 2 + 64);
    }

    #[test]
    fn report_matches_serialized_payload() {
        let h = DenseMatrix::from_fn(10, 12, |i, j| (i as f32).sin() + j as f32);
        for scheme in [QuantScheme::block(2, 7).unwrap(), QuantScheme::per_row(4).unwrap()] {
            let p = quantize(&h, &scheme, &mut SeededRng::new(3)).unwrap();
            let report = memory_report(10, 12, &scheme);
            assert_eq!(p.payload_bytes() as u64, report.bytes);
            assert_eq!(p.to_bytes().len() as u64, crate::quant::HEADER_BYTES as u64 + report.bytes);
        }
    }
}
