//! Fixed-edge histograms. Bins are half-open `[lo, hi)` except the last,
//! which is closed; out-of-range values land in separate tallies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
    total: f64,
    underflow: u64,
    overflow: u64,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument("histogram needs at least two edges".into()));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("histogram edges must be strictly increasing".into()));
    }
    Ok(())
}

/// `bins` equal-width edges spanning `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    edges
}

impl Histogram {
    /// Tallies `values` into bins defined by `edges`.
    pub fn build(values: impl IntoIterator<Item = f64>, edges: &[f64]) -> Result<Self> {
        check_edges(edges)?;
        let bins = edges.len() - 1;
        let lo = edges[0];
        let hi = edges[bins];
        let mut counts = vec![0.0; bins];
        let (mut underflow, mut overflow) = (0u64, 0u64);
        for v in values {
            if v < lo || v.is_nan() {
                underflow += 1;
            } else if v > hi {
                overflow += 1;
            } else if v == hi {
                counts[bins - 1] += 1.0;
            } else {
                // first edge strictly greater than v, minus one
                let idx = edges.partition_point(|&e| e <= v) - 1;
                counts[idx] += 1.0;
            }
        }
        let total = counts.iter().sum();
        Ok(Self {
            edges: edges.to_vec(),
            counts,
            total,
            underflow,
            overflow,
        })
    }

    /// Histogram from (possibly fractional) per-bin masses, e.g. a model
    /// distribution integrated over each bin.
    pub fn from_masses(edges: &[f64], masses: Vec<f64>) -> Result<Self> {
        check_edges(edges)?;
        if masses.len() != edges.len() - 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} masses for {} bins",
                masses.len(),
                edges.len() - 1
            )));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument("bin masses must be finite and non-negative".into()));
        }
        let total = masses.iter().sum();
        Ok(Self {
            edges: edges.to_vec(),
            counts: masses,
            total,
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Counts normalised by the in-range total.
    pub fn probabilities(&self) -> Vec<f64> {
        if self.total == 0.0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|c| c / self.total).collect()
    }

    /// Adds another histogram with the same edges into this one.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::InvalidArgument("cannot merge histograms with different edges".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }
}

/// Free-function form of [`Histogram::build`].
pub fn build_histogram(values: impl IntoIterator<Item = f64>, edges: &[f64]) -> Result<Histogram> {
    Histogram::build(values, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn single_value() {
        let h = Histogram::build([0.5], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[1.0, 0.0]);
        assert_eq!(h.total(), 1.0);
    }

    #[test]
    fn last_edge_is_closed_and_inner_edges_half_open() {
        let h = Histogram::build([2.0, 1.0, 0.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[1.0, 2.0]);
    }

    #[test]
    fn out_of_range_is_tracked() {
        let h = Histogram::build([-0.1, 2.1, 3.0, 1.5], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.underflow(), 1);
        assert_eq!(h.overflow(), 2);
        assert_eq!(h.total(), 1.0);
    }

    #[test]
    fn empty_input_and_bad_edges() {
        let h = Histogram::build(std::iter::empty(), &[0.0, 1.0]).unwrap();
        assert_eq!(h.counts(), &[0.0]);
        assert!(Histogram::build([1.0], &[0.0]).is_err());
        assert!(Histogram::build([1.0], &[0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_samples_are_binomial() {
        let mut rng = SeededRng::new(11);
        let n = 10_000;
        let h = Histogram::build((0..n).map(|_| rng.uniform() * 3.0), &uniform_edges(0.0, 3.0, 3)).unwrap();
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in h.counts() {
            assert!((c - n as f64 * p).abs() < 5.0 * sigma, "{c}");
        }
        assert_eq!(h.total(), n as f64);
    }

    #[test]
    fn merge_requires_same_edges() {
        let mut a = Histogram::build([0.5], &[0.0, 1.0]).unwrap();
        let b = Histogram::build([0.2], &[0.0, 1.0]).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.counts(), &[2.0]);
        let c = Histogram::build([0.2], &[0.0, 2.0]).unwrap();
        assert!(a.merge(&c).is_err());
    }
}
