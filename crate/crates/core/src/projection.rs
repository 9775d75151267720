//! Normalised Rademacher random projection `H·R` and its transpose
//! recovery `H_proj·Rᵀ`.
//!
//! Entries of the `D × R` matrix are `±1/√R`, so `E[R·Rᵀ] = I` and the
//! projection followed by recovery is unbiased. Only the seed is stored;
//! each row of the matrix is regenerated from its own RNG substream when
//! needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RademacherProjector {
    d_in: usize,
    d_out: usize,
    seed: u64,
}

impl RademacherProjector {
    pub fn new(d_in: usize, d_out: usize, seed: u64) -> Result<Self> {
        if d_out == 0 || d_out > d_in {
            return Err(Error::InvalidArgument(format!(
                "projection {d_in} -> {d_out} must satisfy 1 <= R <= D"
            )));
        }
        Ok(Self { d_in, d_out, seed })
    }

    /// Target dimension `R = ceil(D / ratio)`.
    pub fn from_ratio(d_in: usize, ratio: usize, seed: u64) -> Result<Self> {
        if ratio == 0 {
            return Err(Error::InvalidArgument("D/R ratio must be at least 1".into()));
        }
        Self::new(d_in, d_in.div_ceil(ratio), seed)
    }

    /// Same shape, different matrix.
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scale(&self) -> f32 {
        (1.0 / (self.d_out as f64).sqrt()) as f32
    }

    /// Row `i` of the projection matrix.
    pub fn row(&self, i: usize, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.d_out);
        let s = self.scale();
        let mut rng = SeededRng::new(self.seed).substream(i as u64);
        for chunk in out.chunks_mut(64) {
            let bits = rand::RngCore::next_u64(&mut rng);
            for (k, o) in chunk.iter_mut().enumerate() {
                *o = if (bits >> k) & 1 == 1 { s } else { -s };
            }
        }
    }

    /// The realised `D × R` matrix, for inspection and tests.
    pub fn matrix(&self) -> DenseMatrix {
        let mut data = vec![0.0f32; self.d_in * self.d_out];
        for (i, row) in data.chunks_mut(self.d_out).enumerate() {
            self.row(i, row);
        }
        DenseMatrix::from_raw(self.d_in, self.d_out, data)
    }

    /// `H_proj = H · R`.
    pub fn project(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.cols() != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "projecting {} columns with a {}x{} projector",
                h.cols(),
                self.d_in,
                self.d_out
            )));
        }
        let n = h.rows();
        let mut out = vec![0.0f32; n * self.d_out];
        let mut r_row = vec![0.0f32; self.d_out];
        for i in 0..self.d_in {
            self.row(i, &mut r_row);
            for (node, out_row) in out.chunks_mut(self.d_out).enumerate() {
                let x = h.get(node, i);
                if x == 0.0 {
                    continue;
                }
                for (o, &r) in out_row.iter_mut().zip(&r_row) {
                    *o += x * r;
                }
            }
        }
        Ok(DenseMatrix::from_raw(n, self.d_out, out))
    }

    /// `Ĥ = H_proj · Rᵀ`.
    pub fn recover(&self, h_proj: &DenseMatrix) -> Result<DenseMatrix> {
        if h_proj.cols() != self.d_out {
            return Err(Error::DimensionMismatch(format!(
                "recovering {} columns with a {}x{} projector",
                h_proj.cols(),
                self.d_in,
                self.d_out
            )));
        }
        let n = h_proj.rows();
        let mut out = vec![0.0f32; n * self.d_in];
        let mut r_row = vec![0.0f32; self.d_out];
        for i in 0..self.d_in {
            self.row(i, &mut r_row);
            for node in 0..n {
                out[node * self.d_in + i] = h_proj.row(node).iter().zip(&r_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(DenseMatrix::from_raw(n, self.d_in, out))
    }
}

pub fn project(h: &DenseMatrix, p: &RademacherProjector) -> Result<DenseMatrix> {
    p.project(h)
}

pub fn recover(h_proj: &DenseMatrix, p: &RademacherProjector) -> Result<DenseMatrix> {
    p.recover(h_proj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_alphabet_and_determinism() {
        let p = RademacherProjector::new(32, 4, 17).unwrap();
        let m = p.matrix();
        let s = 0.5f32;
        assert!(m.data().iter().all(|&v| v == s || v == -s));
        assert_eq!(m, p.matrix());
        let h = DenseMatrix::from_fn(3, 32, |i, j| (i as f32 - j as f32) * 0.1);
        assert_eq!(p.project(&h).unwrap(), p.project(&h).unwrap());
        assert_ne!(m, RademacherProjector::new(32, 4, 18).unwrap().matrix());
    }

    #[test]
    fn matches_dense_products() {
        let p = RademacherProjector::new(20, 5, 3).unwrap();
        let h = DenseMatrix::from_fn(4, 20, |i, j| ((i * 20 + j) % 7) as f32 - 3.0);
        let m = p.matrix();
        let proj = p.project(&h).unwrap();
        let dense = h.matmul(&m).unwrap();
        for (a, b) in proj.data().iter().zip(dense.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        let rec = p.recover(&proj).unwrap();
        let dense = proj.matmul_t(&m).unwrap();
        for (a, b) in rec.data().iter().zip(dense.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let p = RademacherProjector::new(16, 2, 0).unwrap();
        assert_eq!(p.project(&DenseMatrix::zeros(3, 16)).unwrap(), DenseMatrix::zeros(3, 2));
        assert_eq!(p.recover(&DenseMatrix::zeros(3, 2)).unwrap(), DenseMatrix::zeros(3, 16));
    }

    #[test]
    fn shape_errors() {
        let p = RademacherProjector::new(16, 2, 0).unwrap();
        assert!(p.project(&DenseMatrix::zeros(3, 15)).is_err());
        assert!(p.recover(&DenseMatrix::zeros(3, 3)).is_err());
        assert!(RademacherProjector::new(4, 5, 0).is_err());
        assert!(RademacherProjector::new(4, 0, 0).is_err());
        assert_eq!(RademacherProjector::from_ratio(64, 8, 0).unwrap().d_out(), 8);
        assert_eq!(RademacherProjector::from_ratio(63, 8, 0).unwrap().d_out(), 8);
    }

    #[test]
    fn norm_preserved_in_expectation() {
        // D = R: E‖H·R‖² = ‖H‖² since E[R·Rᵀ] = I
        let mut rng = SeededRng::new(5);
        let h = DenseMatrix::from_fn(6, 24, |_, _| rng.standard_normal() as f32);
        let target = h.frobenius_sq();
        let seeds = 200;
        let mean = (0..seeds)
            .map(|s| RademacherProjector::new(24, 24, s).unwrap().project(&h).unwrap().frobenius_sq())
            .sum::<f64>()
            / seeds as f64;
        assert!((mean / target - 1.0).abs() < 0.05, "{mean} vs {target}");
    }

    #[test]
    fn expected_gram_is_identity() {
        let (d, r) = (6, 3);
        let seeds = 10_000;
        let mut sum = vec![0.0f64; d * d];
        for s in 0..seeds {
            let m = RademacherProjector::new(d, r, s).unwrap().matrix();
            let g = m.matmul_t(&m).unwrap();
            for (acc, v) in sum.iter_mut().zip(g.data()) {
                *acc += *v as f64;
            }
        }
        // off-diagonal entries are means of sums of r independent ±1/r terms
        let sigma = (1.0 / r as f64 / seeds as f64).sqrt();
        for i in 0..d {
            for j in 0..d {
                let mean = sum[i * d + j] / seeds as f64;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((mean - want).abs() < 4.0 * sigma + 1e-6, "({i},{j}) {mean}");
            }
        }
    }

    #[test]
    fn recovery_error_variance_matches_analytic() {
        // Ĥᵢ - Hᵢ = Σ_{k≠i} H_k ⟨R_k, R_i⟩ with ⟨R_k, R_i⟩ of variance 1/R,
        // uncorrelated across k, so Var = (‖h‖² - hᵢ²) / R.
        let (d, r) = (64, 8);
        let mut rng = SeededRng::new(21);
        let h = DenseMatrix::from_fn(1, d, |_, _| rng.standard_normal() as f32);
        let energy = h.frobenius_sq();
        let seeds = 4000;
        let mut sq = vec![0.0f64; d];
        for s in 0..seeds {
            let p = RademacherProjector::new(d, r, s).unwrap();
            let rec = p.recover(&p.project(&h).unwrap()).unwrap();
            for (i, acc) in sq.iter_mut().enumerate() {
                let e = (rec.get(0, i) - h.get(0, i)) as f64;
                *acc += e * e;
            }
        }
        for i in [0usize, 7, 31, 63] {
            let hi = h.get(0, i) as f64;
            let analytic = (energy - hi * hi) / r as f64;
            let observed = sq[i] / seeds as f64;
            assert!((observed / analytic - 1.0).abs() < 0.1, "entry {i}: {observed} vs {analytic}");
        }
    }
}
