//! The clipped-normal model of normalised activations.
//!
//! `CN_[1/D]` is `N(μ, σ)` clamped to `[0, B]` with `μ = B/2` and
//! `σ = -μ / Φ⁻¹(1/D)`, so each clip atom (at `0` and at `B`) carries mass
//! exactly `1/D`. A row of `R` values min–max normalised to `[0, B]` always
//! has one value at each end, which is why activations projected to `R`
//! dimensions are modelled with `D = R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{uniform_edges, Histogram};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

/// Bin count shared by every JSD comparison.
pub const JSD_BINS: usize = 64;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Inverse standard-normal CDF: Acklam's rational approximation polished
/// with Halley steps on the `erfc`-based CDF.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile needs 0 < p < 1, got {p}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    for _ in 0..2 {
        // residual computed on the smaller tail to avoid cancellation
        let e = if x < 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// `(μ, σ)` of `CN_[1/D]` for `b`-bit codes.
pub fn cn_params(bits: u8, d: f64) -> Result<(f64, f64)> {
    if !(d >= 3.0) {
        return Err(Error::InvalidArgument(format!("clipped normal needs D >= 3, got {d}")));
    }
    if !(1..=8).contains(&bits) {
        return Err(Error::InvalidArgument(format!("unsupported bit width {bits}")));
    }
    let mu = ((1u32 << bits) - 1) as f64 / 2.0;
    let sigma = -mu / std_normal_quantile(1.0 / d)?;
    Ok((mu, sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClippedNormal {
    levels: u32,
    d_param: f64,
    mu: f64,
    sigma: f64,
    clip_mass: f64,
}

impl ClippedNormal {
    pub fn new(bits: u8, d: f64) -> Result<Self> {
        let (mu, sigma) = cn_params(bits, d)?;
        Ok(Self {
            levels: (1u32 << bits) - 1,
            d_param: d,
            mu,
            sigma,
            clip_mass: normal_cdf(-mu / sigma),
        })
    }

    /// Parameterised by `σ` directly; `D` is whatever makes the clip mass
    /// `1/D` (possibly infinite for tiny `σ`).
    pub fn from_sigma(bits: u8, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(1..=8).contains(&bits) {
            return Err(Error::InvalidArgument(format!("bad clipped normal: bits {bits}, sigma {sigma}")));
        }
        let levels = (1u32 << bits) - 1;
        let mu = levels as f64 / 2.0;
        let clip_mass = normal_cdf(-mu / sigma);
        Ok(Self {
            levels,
            d_param: 1.0 / clip_mass,
            mu,
            sigma,
            clip_mass,
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn d_param(&self) -> f64 {
        self.d_param
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Mass of each clip atom.
    pub fn clip_mass(&self) -> f64 {
        self.clip_mass
    }

    /// Density of the continuous part on `(0, B)`; zero elsewhere.
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= self.levels as f64 {
            return 0.0;
        }
        normal_pdf((x - self.mu) / self.sigma) / self.sigma
    }

    /// CDF including both atoms: `F(0) = 1/D`, `F(B) = 1`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x >= self.levels as f64 {
            1.0
        } else {
            normal_cdf((x - self.mu) / self.sigma)
        }
    }

    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Vec<f64> {
        let top = self.levels as f64;
        (0..n)
            .map(|_| (self.mu + self.sigma * rng.standard_normal()).clamp(0.0, top))
            .collect()
    }

    /// Probability of each bin `[eᵢ, eᵢ₊₁)` (last bin closed). The atom at
    /// `0` falls in the first bin when `e₀ = 0`, the atom at `B` in the last.
    pub fn bin_masses(&self, edges: &[f64]) -> Vec<f64> {
        let below = |x: f64| if x <= 0.0 { 0.0 } else { self.cdf(x) };
        let last = edges.len() - 2;
        (0..=last)
            .map(|i| {
                let hi = if i == last { self.cdf(edges[i + 1]) } else { below(edges[i + 1]) };
                hi - below(edges[i])
            })
            .collect()
    }

    pub fn model_histogram(&self, edges: &[f64]) -> Result<Histogram> {
        Histogram::from_masses(edges, self.bin_masses(edges))
    }
}

pub fn cn_pdf(x: f64, dist: &ClippedNormal) -> f64 {
    dist.pdf(x)
}

pub fn cn_cdf(x: f64, dist: &ClippedNormal) -> f64 {
    dist.cdf(x)
}

pub fn cn_sample(dist: &ClippedNormal, n: usize, rng: &mut SeededRng) -> Vec<f64> {
    dist.sample(n, rng)
}

/// Continuous uniform on `[0, B]`, binned.
pub fn uniform_model_histogram(levels: u32, edges: &[f64]) -> Result<Histogram> {
    let top = levels as f64;
    let masses = edges
        .windows(2)
        .map(|w| (w[1].min(top) - w[0].max(0.0)).max(0.0) / top)
        .collect();
    Histogram::from_masses(edges, masses)
}

/// The shared `[0, B]` binning used for distribution comparisons.
pub fn jsd_edges(levels: u32) -> Vec<f64> {
    uniform_edges(0.0, levels as f64, JSD_BINS)
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).ln()
    }
}

/// Jensen–Shannon divergence (natural log) between two histograms over the
/// same edges. Bounded by `ln 2`.
pub fn js_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.edges() != q.edges() {
        return Err(Error::InvalidArgument("histograms have different edges".into()));
    }
    if !(p.total() > 0.0 && q.total() > 0.0) {
        return Err(Error::InvalidArgument("histograms must have positive mass".into()));
    }
    let pp = p.probabilities();
    let qq = q.probabilities();
    let jsd = pp
        .iter()
        .zip(&qq)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * kl_term(a, m) + 0.5 * kl_term(b, m)
        })
        .sum::<f64>();
    Ok(jsd.max(0.0))
}

/// The naive fit: a normalised `N × R` activation matrix is modelled as
/// `CN_[1/R]`.
pub fn fit_cn_to_activations(h_proj_norm: &DenseMatrix, bits: u8) -> Result<ClippedNormal> {
    ClippedNormal::new(bits, h_proj_norm.cols() as f64)
}

/// JSD of `values` against the uniform model and against `dist`, using
/// [`JSD_BINS`] bins on `[0, B]`.
pub fn jsd_against_models(values: impl IntoIterator<Item = f64>, dist: &ClippedNormal) -> Result<(f64, f64)> {
    let edges = jsd_edges(dist.levels());
    let empirical = Histogram::build(values, &edges)?;
    jsd_pair_for_histogram(&empirical, dist)
}

pub fn jsd_pair_for_histogram(empirical: &Histogram, dist: &ClippedNormal) -> Result<(f64, f64)> {
    let uniform = uniform_model_histogram(dist.levels(), empirical.edges())?;
    let cn = dist.model_histogram(empirical.edges())?;
    Ok((js_divergence(empirical, &uniform)?, js_divergence(empirical, &cn)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    // Independent oracle: Φ from the Maclaurin series of erf.
    fn series_cdf(z: f64) -> f64 {
        let x = z / SQRT_2;
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        0.5 + sum / std::f64::consts::PI.sqrt()
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-8.0, 8.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if series_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_oracle_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        let oracle = bisect_quantile(1.0 / 16.0);
        assert!((oracle - (-1.534120544352546)).abs() < 1e-9);
        let q = std_normal_quantile(1.0 / 16.0).unwrap();
        assert!((q - oracle).abs() < 1e-9, "{q} vs {oracle}");
        assert!((q + 1.53412).abs() < 1e-5);
        for p in [0.001, 0.02, 0.1, 0.3, 0.7, 0.9, 0.99] {
            assert!((std_normal_quantile(p).unwrap() - bisect_quantile(p)).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn quantile_inverse_property() {
        for k in 1..1000 {
            let p = k as f64 / 1000.0;
            let x = std_normal_quantile(p).unwrap();
            assert!((normal_cdf(x) - p).abs() < 1e-8 * p.max(1e-3));
        }
        for p in [1e-12, 1e-9, 1.0 - 1e-9] {
            let x = std_normal_quantile(p).unwrap();
            assert!(((normal_cdf(x) - p) / p.min(1.0 - p)).abs() < 1e-8);
        }
    }

    #[test]
    fn quantile_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(std_normal_quantile(p).is_err());
        }
    }

    #[test]
    fn params() {
        let (mu, sigma) = cn_params(2, 16.0).unwrap();
        assert_eq!(mu, 1.5);
        assert!((sigma - 1.5 / 1.534120544352546).abs() < 1e-9);
        assert!((sigma - 0.97776).abs() < 1e-5);
        assert_eq!(cn_params(8, 16.0).unwrap().0, 127.5);
        assert!(cn_params(2, 2.0).is_err());
        let mut last = f64::INFINITY;
        for d in [3.0, 4.0, 16.0, 256.0, 1e6, 1e12] {
            let s = cn_params(2, d).unwrap().1;
            assert!(s > 0.0 && s < last);
            last = s;
        }
    }

    #[test]
    fn cdf_atoms_and_symmetry() {
        let cn = ClippedNormal::new(2, 16.0).unwrap();
        assert!((cn.cdf(0.0) - 1.0 / 16.0).abs() < 1e-14);
        assert!((cn.cdf(1.5) - 0.5).abs() < 1e-15);
        assert_eq!(cn.cdf(3.0), 1.0);
        assert_eq!(cn.cdf(-0.1), 0.0);
        assert!((cn.clip_mass() - 1.0 / 16.0).abs() < 1e-14);
        assert!((cn.pdf(1.0) - cn.pdf(2.0)).abs() < 1e-15);
        assert_eq!(cn.pdf(0.0), 0.0);
    }

    #[test]
    fn total_probability_is_one() {
        for d in [4.0, 16.0, 100.0, 2048.0] {
            let cn = ClippedNormal::new(2, d).unwrap();
            let cont = integrate(|x| cn.pdf(x), &[0.0, 1.5, 3.0], 1e-12, 500).unwrap().value;
            assert!((cont + 2.0 * cn.clip_mass() - 1.0).abs() < 1e-8);
            let masses: f64 = cn.bin_masses(&jsd_edges(3)).iter().sum();
            assert!((masses - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_clip_fraction() {
        let cn = ClippedNormal::new(2, 16.0).unwrap();
        let n = 1_000_000;
        let xs = cn.sample(n, &mut SeededRng::new(77));
        assert!(xs.iter().all(|&x| (0.0..=3.0).contains(&x)));
        let p = 1.0 / 16.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let zeros = xs.iter().filter(|&&x| x == 0.0).count() as f64;
        let tops = xs.iter().filter(|&&x| x == 3.0).count() as f64;
        assert!((zeros - n as f64 * p).abs() < 4.0 * sd);
        assert!((tops - n as f64 * p).abs() < 4.0 * sd);
        let mean = xs.iter().sum::<f64>() / n as f64;
        // clipped variance is below σ²; σ bounds it
        assert!((mean - 1.5).abs() < 4.0 * cn.sigma() / (n as f64).sqrt());
    }

    #[test]
    fn jsd_basic_properties() {
        let e = [0.0, 1.0, 2.0];
        let a = Histogram::from_masses(&e, vec![3.0, 1.0]).unwrap();
        let b = Histogram::from_masses(&e, vec![1.0, 1.0]).unwrap();
        assert_eq!(js_divergence(&a, &a).unwrap(), 0.0);
        let ab = js_divergence(&a, &b).unwrap();
        assert!((ab - js_divergence(&b, &a).unwrap()).abs() < 1e-15);
        assert!(ab > 0.0 && ab < std::f64::consts::LN_2);
        let left = Histogram::from_masses(&e, vec![1.0, 0.0]).unwrap();
        let right = Histogram::from_masses(&e, vec![0.0, 5.0]).unwrap();
        assert!((js_divergence(&left, &right).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let other = Histogram::from_masses(&[0.0, 1.0, 3.0], vec![1.0, 1.0]).unwrap();
        assert!(js_divergence(&a, &other).is_err());
        let empty = Histogram::from_masses(&e, vec![0.0, 0.0]).unwrap();
        assert!(js_divergence(&a, &empty).is_err());
    }

    #[test]
    fn jsd_uniform_vs_cn16_regression() {
        let cn = ClippedNormal::new(2, 16.0).unwrap();
        let edges = jsd_edges(3);
        let got = js_divergence(
            &uniform_model_histogram(3, &edges).unwrap(),
            &cn.model_histogram(&edges).unwrap(),
        )
        .unwrap();
        // oracle: direct summation with series-CDF bin masses
        let sigma = 1.5 / -bisect_quantile(1.0 / 16.0);
        let f = |x: f64| series_cdf((x - 1.5) / sigma);
        let mut jsd = 0.0;
        for i in 0..64 {
            let lo = if i == 0 { 0.0 } else { f(edges[i]) };
            let hi = if i == 63 { 1.0 } else { f(edges[i + 1]) };
            let p = 1.0 / 64.0;
            let q = hi - lo;
            let m = 0.5 * (p + q);
            jsd += 0.5 * p * (p / m).ln() + 0.5 * q * (q / m).ln();
        }
        assert!((got - jsd).abs() < 1e-10, "{got} vs {jsd}");
        assert!((got - JSD_UNIFORM_VS_CN16).abs() < 1e-10, "{got}");
    }

    const JSD_UNIFORM_VS_CN16: f64 = 0.030_308_733_708_559_71;

    #[test]
    fn empirical_cn_histogram_is_close_to_model() {
        let cn = ClippedNormal::new(2, 16.0).unwrap();
        let xs = cn.sample(1_000_000, &mut SeededRng::new(1));
        let (jsd_u, jsd_cn) = jsd_against_models(xs, &cn).unwrap();
        assert!(jsd_cn < 0.001, "{jsd_cn}");
        assert!(jsd_cn < jsd_u);
    }

    #[test]
    fn fit_uses_column_count() {
        for r in [16usize, 63, 32] {
            let m = DenseMatrix::zeros(4, r);
            assert_eq!(fit_cn_to_activations(&m, 2).unwrap().d_param(), r as f64);
        }
        assert!(fit_cn_to_activations(&DenseMatrix::zeros(4, 2), 2).is_err());
    }

    #[test]
    fn fit_is_self_consistent_on_synthetic_rows() {
        let cn = ClippedNormal::new(2, 32.0).unwrap();
        let xs = cn.sample(32 * 100, &mut SeededRng::new(4));
        let m = DenseMatrix::from_vec(100, 32, xs.iter().map(|&x| x as f32).collect()).unwrap();
        assert_eq!(fit_cn_to_activations(&m, 2).unwrap().d_param(), 32.0);
    }
}
