//! Stochastic-rounding quantisation onto `b`-bit integer codes.
//!
//! A group of values `h` is stored as codes `SR((h - Z) / r · B)` together
//! with its zero-point `Z = min h` and range `r = max h - min h`, where
//! `B = 2^b - 1`. Rounding happens either on the integer grid (uniform bins)
//! or on an explicit edge grid `0 = α₀ < α₁ < … < α_B = B` (non-uniform
//! bins); in both cases the rounding probability is the relative position
//! inside the containing bin, so `E[code value] = h̄`.

mod pack;
mod packed;

pub use pack::{pack_codes, packed_len, unpack_codes};
pub use packed::{GroupMeta, PackedQuantTensor, HEADER_BYTES, MAGIC};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

/// Slack allowed on the normalised input before it is rejected.
pub const RANGE_TOLERANCE: f64 = 1e-6;

// Target number of elements handled by one RNG lane.
const LANE_ELEMS: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    PerRow,
    Block(usize),
}

/// Sorted bin edges on the normalised grid, endpoints pinned to `0` and `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    edges: Vec<f64>,
}

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArgument("need at least one bin".into()));
        }
        if edges[0] != 0.0 {
            return Err(Error::InvalidArgument("first edge must be 0".into()));
        }
        let levels = edges.len() - 1;
        if edges[levels] != levels as f64 {
            return Err(Error::InvalidArgument(format!("last edge must be {levels}")));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    /// Integer grid `0, 1, …, B`.
    pub fn uniform(levels: u32) -> Self {
        Self {
            edges: (0..=levels).map(f64::from).collect(),
        }
    }

    /// `[0, α, β, 3]`, the INT2 grid with a tunable central bin.
    pub fn int2(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(vec![0.0, alpha, beta, 3.0])
    }

    /// From the `B - 1` inner edges.
    pub fn from_inner(inner: &[f64]) -> Result<Self> {
        let levels = inner.len() + 1;
        let mut edges = Vec::with_capacity(levels + 1);
        edges.push(0.0);
        edges.extend_from_slice(inner);
        edges.push(levels as f64);
        Self::new(edges)
    }

    pub fn levels(&self) -> u32 {
        (self.edges.len() - 1) as u32
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.edges
    }

    pub fn inner(&self) -> &[f64] {
        &self.edges[1..self.edges.len() - 1]
    }

    /// Index `i` of the bin `[αᵢ, αᵢ₊₁)` holding `h`; the top edge belongs
    /// to the last bin.
    pub fn locate(&self, h: f64) -> usize {
        let last = self.edges.len() - 2;
        (self.edges.partition_point(|&e| e <= h).max(1) - 1).min(last)
    }

    /// Mirror image under `h → B - h`.
    pub fn mirrored(&self) -> Self {
        let top = self.edges[self.edges.len() - 1];
        Self {
            edges: self.edges.iter().rev().map(|e| top - e).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Boundaries {
    Uniform,
    /// Inner edges `α₁ … α_{B-1}`, strictly increasing inside `(0, B)`.
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    bits: u8,
    grouping: Grouping,
    boundaries: Boundaries,
}

impl QuantScheme {
    pub fn new(bits: u8, grouping: Grouping, boundaries: Boundaries) -> Result<Self> {
        if !matches!(bits, 2 | 4 | 8) {
            return Err(Error::InvalidArgument(format!("unsupported bit width {bits}")));
        }
        if let Grouping::Block(0) = grouping {
            return Err(Error::InvalidArgument("block size must be at least 1".into()));
        }
        let levels = (1u32 << bits) - 1;
        if let Boundaries::Explicit(inner) = &boundaries {
            if inner.len() != levels as usize - 1 {
                return Err(Error::InvalidArgument(format!(
                    "{} inner edges given, {} needed for {bits} bits",
                    inner.len(),
                    levels - 1
                )));
            }
            if inner.iter().any(|&e| !(e > 0.0 && e < levels as f64)) {
                return Err(Error::InvalidArgument("inner edges must lie in (0, B)".into()));
            }
            BinEdges::from_inner(inner)?;
        }
        Ok(Self {
            bits,
            grouping,
            boundaries,
        })
    }

    pub fn per_row(bits: u8) -> Result<Self> {
        Self::new(bits, Grouping::PerRow, Boundaries::Uniform)
    }

    pub fn block(bits: u8, group: usize) -> Result<Self> {
        Self::new(bits, Grouping::Block(group), Boundaries::Uniform)
    }

    pub fn with_boundaries(self, boundaries: Boundaries) -> Result<Self> {
        Self::new(self.bits, self.grouping, boundaries)
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// `B = 2^b - 1`.
    pub fn levels(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn grouping(&self) -> Grouping {
        self.grouping
    }

    pub fn boundaries(&self) -> &Boundaries {
        &self.boundaries
    }

    /// Full edge grid `α₀ = 0 … α_B = B`.
    pub fn edges(&self) -> BinEdges {
        match &self.boundaries {
            Boundaries::Uniform => BinEdges::uniform(self.levels()),
            Boundaries::Explicit(inner) => BinEdges::from_inner(inner).expect("validated on construction"),
        }
    }

    /// Number of quantisation groups for an `rows × cols` matrix.
    pub fn num_groups(&self, rows: usize, cols: usize) -> usize {
        match self.grouping {
            Grouping::PerRow => rows,
            Grouping::Block(g) => (rows * cols).div_ceil(g),
        }
    }

    fn group_len(&self, cols: usize) -> usize {
        match self.grouping {
            Grouping::PerRow => cols,
            Grouping::Block(g) => g,
        }
    }
}

fn check_normalized(h: f64, levels: u32) -> Result<f64> {
    let top = levels as f64;
    if !(h >= -RANGE_TOLERANCE && h <= top + RANGE_TOLERANCE) {
        return Err(Error::InvalidArgument(format!("normalised value {h} outside [0, {top}]")));
    }
    Ok(h.clamp(0.0, top))
}

/// Rounds `h ∈ [0, B]` on the integer grid using the uniform draw `u`.
#[inline]
pub fn round_uniform(h: f64, levels: u32, u: f64) -> u8 {
    let floor = h.floor();
    if floor >= levels as f64 {
        return levels as u8;
    }
    let frac = h - floor;
    (floor as u32 + u32::from(u < frac)) as u8
}

/// Rounds `h ∈ [0, B]` on an explicit edge grid using the uniform draw `u`.
#[inline]
pub fn round_on_edges(h: f64, edges: &BinEdges, u: f64) -> u8 {
    let e = edges.as_slice();
    let i = edges.locate(h);
    if h == e[i] {
        return i as u8;
    }
    if h == e[i + 1] {
        return (i + 1) as u8;
    }
    let p_up = (h - e[i]) / (e[i + 1] - e[i]);
    (i + usize::from(u < p_up)) as u8
}

/// Stochastic rounding on the integer grid: `⌊h⌋ + 1` with probability
/// `h - ⌊h⌋`, `⌊h⌋` otherwise.
pub fn sr_uniform(h: f64, levels: u32, rng: &mut SeededRng) -> Result<u8> {
    let h = check_normalized(h, levels)?;
    Ok(round_uniform(h, levels, rng.uniform()))
}

/// Stochastic rounding on an irregular grid: from bin `[αᵢ, αᵢ₊₁)` round up
/// to code `i + 1` with probability `(h - αᵢ) / δ`, down to `i` otherwise.
/// Values exactly on an edge map to that edge's code.
pub fn sr_nonuniform(h: f64, edges: &BinEdges, rng: &mut SeededRng) -> Result<u8> {
    let h = check_normalized(h, edges.levels())?;
    Ok(round_on_edges(h, edges, rng.uniform()))
}

/// Zero-point and range of a group.
fn group_stats(values: &[f32]) -> Result<(f32, f32)> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if !range.is_finite() {
        return Err(Error::InvalidArgument("group range overflows f32".into()));
    }
    Ok((lo, range))
}

fn quantize_group(
    values: &[f32],
    levels: u32,
    edges: Option<&BinEdges>,
    rng: &mut SeededRng,
    codes: &mut Vec<u8>,
) -> Result<GroupMeta> {
    let (zero_point, range) = group_stats(values)?;
    if range == 0.0 {
        codes.extend(std::iter::repeat_n(0u8, values.len()));
        return Ok(GroupMeta { zero_point, range });
    }
    let top = levels as f64;
    let scale = top / range as f64;
    for &v in values {
        let h = ((v as f64 - zero_point as f64) * scale).clamp(0.0, top);
        let u = rng.uniform();
        codes.push(match edges {
            None => round_uniform(h, levels, u),
            Some(e) => round_on_edges(h, e, u),
        });
    }
    Ok(GroupMeta { zero_point, range })
}

fn code_value_table(scheme: &QuantScheme) -> Vec<f64> {
    scheme.edges().as_slice().to_vec()
}

/// Quantises one vector: returns `(codes, Z, r)`.
pub fn quantize_row(h: &[f32], scheme: &QuantScheme, rng: &mut SeededRng) -> Result<(Vec<u8>, f32, f32)> {
    if h.is_empty() {
        return Err(Error::InvalidArgument("cannot quantize an empty vector".into()));
    }
    let edges = match scheme.boundaries() {
        Boundaries::Uniform => None,
        Boundaries::Explicit(_) => Some(scheme.edges()),
    };
    let mut codes = Vec::with_capacity(h.len());
    let meta = quantize_group(h, scheme.levels(), edges.as_ref(), rng, &mut codes)?;
    Ok((codes, meta.zero_point, meta.range))
}

/// `ĥ = r · value(code) / B + Z`, where `value(k)` is `k` on the uniform
/// grid and `αₖ` on an explicit grid.
pub fn dequantize_row(codes: &[u8], zero_point: f32, range: f32, scheme: &QuantScheme) -> Result<Vec<f32>> {
    let values = code_value_table(scheme);
    let mut out = Vec::with_capacity(codes.len());
    dequantize_into(codes, zero_point, range, scheme.levels(), &values, &mut out)?;
    Ok(out)
}

fn dequantize_into(
    codes: &[u8],
    zero_point: f32,
    range: f32,
    levels: u32,
    values: &[f64],
    out: &mut Vec<f32>,
) -> Result<()> {
    let scale = range as f64 / levels as f64;
    for &c in codes {
        let v = values.get(c as usize).ok_or(Error::CodeOutOfRange {
            code: c as u32,
            bits: 8,
        })?;
        out.push((scale * v + zero_point as f64) as f32);
    }
    Ok(())
}

/// Quantises a whole matrix with the scheme's grouping. Groups are split
/// into fixed-size lanes, each with its own RNG substream, so the result
/// does not depend on the thread count.
pub fn quantize(h: &DenseMatrix, scheme: &QuantScheme, rng: &mut SeededRng) -> Result<PackedQuantTensor> {
    let (rows, cols) = h.shape();
    if rows * cols == 0 {
        return Err(Error::InvalidArgument("cannot quantize an empty matrix".into()));
    }
    let data = h.data();
    let group_len = scheme.group_len(cols);
    let num_groups = scheme.num_groups(rows, cols);
    let groups_per_lane = (LANE_ELEMS / group_len).max(1);
    let lane_len = groups_per_lane * group_len;
    let edges = match scheme.boundaries() {
        Boundaries::Uniform => None,
        Boundaries::Explicit(_) => Some(scheme.edges()),
    };
    let levels = scheme.levels();
    let base = rng.fork();

    let lanes: Vec<(Vec<GroupMeta>, Vec<u8>)> = data
        .par_chunks(lane_len)
        .enumerate()
        .map(|(lane, chunk)| {
            let mut lane_rng = base.substream(lane as u64);
            let mut meta = Vec::with_capacity(groups_per_lane);
            let mut codes = Vec::with_capacity(chunk.len());
            for group in chunk.chunks(group_len) {
                meta.push(quantize_group(group, levels, edges.as_ref(), &mut lane_rng, &mut codes)?);
            }
            Ok((meta, codes))
        })
        .collect::<Result<_>>()?;

    let mut meta = Vec::with_capacity(num_groups);
    let mut codes = Vec::with_capacity(rows * cols);
    for (m, c) in lanes {
        meta.extend(m);
        codes.extend(c);
    }
    debug_assert_eq!(meta.len(), num_groups);
    let packed = pack_codes(&codes, scheme.bits())?;
    PackedQuantTensor::from_parts(scheme.clone(), rows, cols, meta, packed)
}

/// Normalised values `h̄ = (h - Z) / r · B` in row-major order, using the
/// same per-group statistics as [`quantize`]. Constant groups map to 0.
pub fn normalize_groups(h: &DenseMatrix, scheme: &QuantScheme) -> Result<Vec<f64>> {
    let (rows, cols) = h.shape();
    if rows * cols == 0 {
        return Err(Error::InvalidArgument("cannot normalize an empty matrix".into()));
    }
    let top = scheme.levels() as f64;
    let mut out = Vec::with_capacity(rows * cols);
    for group in h.data().chunks(scheme.group_len(cols)) {
        let (zero_point, range) = group_stats(group)?;
        if range == 0.0 {
            out.extend(std::iter::repeat_n(0.0, group.len()));
            continue;
        }
        let scale = top / range as f64;
        out.extend(group.iter().map(|&v| ((v as f64 - zero_point as f64) * scale).clamp(0.0, top)));
    }
    Ok(out)
}

/// Inverse of [`quantize`].
pub fn dequantize(p: &PackedQuantTensor) -> Result<DenseMatrix> {
    let (rows, cols) = p.shape();
    let codes = p.codes()?;
    let scheme = p.scheme();
    let group_len = scheme.group_len(cols);
    let values = code_value_table(scheme);
    let levels = scheme.levels();
    let mut out = Vec::with_capacity(rows * cols);
    for (group, meta) in codes.chunks(group_len).zip(p.group_meta()) {
        dequantize_into(group, meta.zero_point, meta.range, levels, &values, &mut out)?;
    }
    DenseMatrix::from_vec(rows, cols, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int2() -> QuantScheme {
        QuantScheme::per_row(2).unwrap()
    }

    #[test]
    fn scheme_validation() {
        assert!(QuantScheme::per_row(3).is_err());
        assert!(QuantScheme::block(2, 0).is_err());
        assert_eq!(int2().levels(), 3);
        assert_eq!(QuantScheme::per_row(8).unwrap().levels(), 255);
        assert!(int2().with_boundaries(Boundaries::Explicit(vec![1.2, 0.9])).is_err());
        assert!(int2().with_boundaries(Boundaries::Explicit(vec![0.0, 2.0])).is_err());
        assert!(int2().with_boundaries(Boundaries::Explicit(vec![1.0])).is_err());
        let s = int2().with_boundaries(Boundaries::Explicit(vec![1.2, 1.8])).unwrap();
        assert_eq!(s.edges().as_slice(), &[0.0, 1.2, 1.8, 3.0]);
    }

    #[test]
    fn bin_edges_locate() {
        let e = BinEdges::int2(0.8, 2.2).unwrap();
        assert_eq!(e.locate(0.0), 0);
        assert_eq!(e.locate(0.79), 0);
        assert_eq!(e.locate(0.8), 1);
        assert_eq!(e.locate(2.9), 2);
        assert_eq!(e.locate(3.0), 2);
        assert_eq!(e.mirrored().as_slice(), &[0.0, 3.0 - 2.2, 3.0 - 0.8, 3.0]);
        assert!(BinEdges::new(vec![0.0, 2.0, 1.0, 3.0]).is_err());
        assert!(BinEdges::new(vec![0.1, 1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn integers_round_to_themselves() {
        let mut rng = SeededRng::new(0);
        for _ in 0..100 {
            assert_eq!(sr_uniform(2.0, 3, &mut rng).unwrap(), 2);
            assert_eq!(sr_uniform(3.0, 3, &mut rng).unwrap(), 3);
            assert_eq!(sr_uniform(0.0, 3, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn half_rounds_both_ways_equally() {
        let mut rng = SeededRng::new(1);
        let n = 10_000;
        let ups = (0..n).filter(|_| sr_uniform(1.5, 3, &mut rng).unwrap() == 2).count();
        let downs = n - ups;
        assert!((ups as f64 / n as f64 - 0.5).abs() < 0.02);
        assert!((downs as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn mean_at_point_three() {
        let mut rng = SeededRng::new(2);
        let n = 100_000;
        let mean = (0..n).map(|_| sr_uniform(0.3, 3, &mut rng).unwrap() as f64).sum::<f64>() / n as f64;
        assert!((mean - 0.3).abs() < 0.01);
    }

    #[test]
    fn out_of_range_rejected_within_tolerance_clamped() {
        let mut rng = SeededRng::new(0);
        assert!(sr_uniform(-0.1, 3, &mut rng).is_err());
        assert!(sr_uniform(3.01, 3, &mut rng).is_err());
        assert_eq!(sr_uniform(3.0 + 1e-7, 3, &mut rng).unwrap(), 3);
        assert_eq!(sr_uniform(-1e-7, 3, &mut rng).unwrap(), 0);
        let e = BinEdges::uniform(3);
        assert!(sr_nonuniform(f64::NAN, &e, &mut rng).is_err());
    }

    #[test]
    fn uniform_edges_match_uniform_rounding() {
        let e = BinEdges::uniform(3);
        for k in 0..=300 {
            let h = k as f64 * 0.01;
            for u in [0.0, 0.13, 0.5, 0.77, 0.999] {
                assert_eq!(round_uniform(h, 3, u), round_on_edges(h, &e, u), "h={h} u={u}");
            }
        }
    }

    #[test]
    fn nonuniform_up_probability() {
        let e = BinEdges::int2(0.8, 2.2).unwrap();
        // P(up) = (1.5 - 0.8) / 1.4 = 0.5 exactly: u just below rounds up, just above down
        assert_eq!(round_on_edges(1.5, &e, 0.4999), 2);
        assert_eq!(round_on_edges(1.5, &e, 0.5001), 1);
        let mut rng = SeededRng::new(5);
        let n = 20_000;
        let ups = (0..n).filter(|_| sr_nonuniform(1.5, &e, &mut rng).unwrap() == 2).count();
        assert!((ups as f64 / n as f64 - 0.5).abs() < 0.02);
        // on an edge: deterministic
        for u in [0.0, 0.5, 0.99] {
            assert_eq!(round_on_edges(0.8, &e, u), 1);
            assert_eq!(round_on_edges(2.2, &e, u), 2);
        }
    }

    #[test]
    fn quantize_row_endpoints() {
        let mut rng = SeededRng::new(0);
        let (codes, z, r) = quantize_row(&[0.0, 1.0], &int2(), &mut rng).unwrap();
        assert_eq!((codes, z, r), (vec![0, 3], 0.0, 1.0));
    }

    #[test]
    fn constant_row_roundtrips_exactly() {
        let mut rng = SeededRng::new(0);
        let (codes, z, r) = quantize_row(&[5.0, 5.0, 5.0], &int2(), &mut rng).unwrap();
        assert_eq!((codes.clone(), z, r), (vec![0, 0, 0], 5.0, 0.0));
        assert_eq!(dequantize_row(&codes, z, r, &int2()).unwrap(), vec![5.0; 3]);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize_row(&[0, 3], 0.0, 1.0, &int2()).unwrap(), vec![0.0, 1.0]);
        let s = int2().with_boundaries(Boundaries::Explicit(vec![0.75, 2.25])).unwrap();
        assert_eq!(dequantize_row(&[0, 1, 2, 3], 1.0, 3.0, &s).unwrap(), vec![1.0, 1.75, 3.25, 4.0]);
        assert!(dequantize_row(&[4], 0.0, 1.0, &int2()).is_err());
    }

    #[test]
    fn empty_and_nonfinite_rows_rejected() {
        let mut rng = SeededRng::new(0);
        assert!(quantize_row(&[], &int2(), &mut rng).is_err());
        assert!(quantize_row(&[1.0, f32::NAN], &int2(), &mut rng).is_err());
    }

    #[test]
    fn roundtrip_error_within_one_bin() {
        let mut rng = SeededRng::new(9);
        for bits in [2u8, 4, 8] {
            let s = QuantScheme::per_row(bits).unwrap();
            let h: Vec<f32> = (0..64).map(|_| rng.standard_normal() as f32 * 3.0).collect();
            let (codes, z, r) = quantize_row(&h, &s, &mut rng).unwrap();
            let back = dequantize_row(&codes, z, r, &s).unwrap();
            let bound = r as f64 / s.levels() as f64 + 1e-5;
            for (a, b) in h.iter().zip(&back) {
                assert!(((a - b) as f64).abs() <= bound);
            }
        }
    }

    #[test]
    fn nonuniform_roundtrip_error_bounded_by_widest_bin() {
        let mut rng = SeededRng::new(10);
        let s = int2().with_boundaries(Boundaries::Explicit(vec![1.3, 1.7])).unwrap();
        let h: Vec<f32> = (0..256).map(|_| rng.standard_normal() as f32).collect();
        for _ in 0..50 {
            let (codes, z, r) = quantize_row(&h, &s, &mut rng).unwrap();
            let back = dequantize_row(&codes, z, r, &s).unwrap();
            let bound = r as f64 * 1.3 / 3.0 + 1e-5;
            for (a, b) in h.iter().zip(&back) {
                assert!(((a - b) as f64).abs() <= bound);
            }
        }
    }

    #[test]
    fn per_row_matrix_matches_row_statistics() {
        let mut rng = SeededRng::new(4);
        let h = DenseMatrix::from_fn(5, 7, |i, j| (i as f32 - 2.0) * (j as f32 + 0.5));
        let p = quantize(&h, &int2(), &mut rng).unwrap();
        assert_eq!(p.group_meta().len(), 5);
        for (i, m) in p.group_meta().iter().enumerate() {
            let row = h.row(i);
            let lo = row.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            assert_eq!(m.zero_point, lo);
            assert_eq!(m.range, hi - lo);
        }
        let back = dequantize(&p).unwrap();
        assert_eq!(back.shape(), (5, 7));
    }

    #[test]
    fn quantize_is_deterministic_per_seed() {
        let h = DenseMatrix::from_fn(300, 40, |i, j| ((i * 31 + j * 7) % 17) as f32 * 0.3);
        let s = QuantScheme::block(2, 16).unwrap();
        let a = quantize(&h, &s, &mut SeededRng::new(8)).unwrap();
        let b = quantize(&h, &s, &mut SeededRng::new(8)).unwrap();
        let c = quantize(&h, &s, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normalized_groups_span_the_grid() {
        let h = DenseMatrix::from_vec(2, 4, vec![1.0, 3.0, 2.0, 5.0, 7.0, 7.0, 7.0, 7.0]).unwrap();
        let v = normalize_groups(&h, &int2()).unwrap();
        assert_eq!(v, vec![0.0, 1.5, 0.75, 3.0, 0.0, 0.0, 0.0, 0.0]);
        let b = normalize_groups(&h, &QuantScheme::block(2, 2).unwrap()).unwrap();
        assert_eq!(&b[..4], &[0.0, 3.0, 0.0, 3.0]);
    }
}
