//! Stochastic-rounding variance as a function of the bin edges, its
//! expectation under the clipped-normal model, and INT2 edge optimisation.
//!
//! For `h` in bin `[αᵢ, αᵢ₊₁)` of width `δ`, SR variance is
//! `δ(h - αᵢ) - (h - αᵢ)²`. Only the containing bin contributes. The clip
//! atoms at `0` and `B` sit on edges and round deterministically, so the
//! expected variance is the integral over the continuous part only.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::ClippedNormal;
use crate::error::{Error, Result};
use crate::quant::{round_on_edges, round_uniform, BinEdges, RANGE_TOLERANCE};
use crate::quadrature;
use crate::rng::SeededRng;


pub const D_MIN: usize = 4;
pub const D_MAX: usize = 2048;
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Bumped whenever the optimiser or quadrature changes the table contents.
pub const TABLE_GENERATOR_VERSION: u32 = 1;
pub const TABLE_HEADER: &str = "D,alpha,beta,expected_variance";
/// Default SR draws per element when measuring variance reduction.
pub const DEFAULT_DRAWS: usize = 64;

const GOLDEN_TOL: f64 = 1e-9;
const SCAN_POINTS: usize = 150;
// EV improvements below this are treated as quadrature noise.
const REFINE_MIN_GAIN: f64 = 1e-13;

static BUILTIN_CSV: &str = include_str!("../data/boundary_table.csv");

/// SR variance at normalised value `h`.
pub fn sr_variance(h: f64, edges: &BinEdges) -> f64 {
    let e = edges.as_slice();
    let i = edges.locate(h);
    let width = e[i + 1] - e[i];
    let offset = h - e[i];
    (width * offset - offset * offset).max(0.0)
}

/// `E[Var(SR(h))]` for `h ~ dist`, by adaptive Gauss–Kronrod with panels
/// split at every edge and around the mode.
pub fn expected_variance(edges: &BinEdges, dist: &ClippedNormal) -> Result<f64> {
    if edges.levels() != dist.levels() {
        return Err(Error::InvalidArgument(format!(
            "{} bins but distribution over [0, {}]",
            edges.levels(),
            dist.levels()
        )));
    }
    let top = dist.levels() as f64;
    let (mu, sigma) = (dist.mu(), dist.sigma());
    let mut points: Vec<f64> = edges.as_slice().to_vec();
    for k in [-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0] {
        let p = mu + k * sigma;
        if p > 0.0 && p < top {
            points.push(p);
        }
    }
    let est = quadrature::integrate(|h| sr_variance(h, edges) * dist.pdf(h), &points, QUADRATURE_TOL, 4000)?;
    Ok(est.value)
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub expected_variance: f64,
}

impl TableEntry {
    pub fn edges(&self) -> BinEdges {
        BinEdges::int2(self.alpha, self.beta).expect("table edges are valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimum {
    pub alpha: f64,
    pub beta: f64,
    pub expected_variance: f64,
}

fn int2_objective(dist: &ClippedNormal, alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < beta && beta < 3.0) {
        return Ok(f64::INFINITY);
    }
    expected_variance(&BinEdges::int2(alpha, beta)?, dist)
}

/// Minimises the INT2 expected variance over `0 < α < β < 3`.
///
/// The search runs on the symmetric line `β = 3 - α` (coarse scan, then
/// golden section), then a compass search on the full 2-D objective checks
/// that no asymmetric move improves on it.
pub fn optimize_boundaries(dist: &ClippedNormal) -> Result<Optimum> {
    if dist.levels() != 3 {
        return Err(Error::InvalidArgument("boundary optimisation is INT2 only".into()));
    }
    let sym = |a: f64| int2_objective(dist, a, 3.0 - a);
    let step = 1.5 / SCAN_POINTS as f64;
    let mut best = (1usize, f64::INFINITY);
    for k in 1..SCAN_POINTS {
        let v = sym(k as f64 * step)?;
        if v < best.1 {
            best = (k, v);
        }
    }
    let lo = (best.0 - 1) as f64 * step;
    let hi = ((best.0 + 1) as f64 * step).min(1.5);
    let (alpha, ev) = golden_section(sym, lo.max(1e-12), hi, GOLDEN_TOL)?;
    if !(1e-6..=1.5 - 1e-6).contains(&alpha) {
        return Err(Error::OptimizerBoundary {
            d: dist.d_param(),
            alpha,
        });
    }
    let (alpha, beta, expected_variance) = refine_2d(dist, alpha, 3.0 - alpha, ev)?;
    Ok(Optimum {
        alpha,
        beta,
        expected_variance,
    })
}

fn refine_2d(dist: &ClippedNormal, mut alpha: f64, mut beta: f64, mut best: f64) -> Result<(f64, f64, f64)> {
    const DIRS: [(f64, f64); 8] = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
    ];
    let mut step = 1e-2;
    while step > 1e-8 {
        let mut moved = false;
        for (da, db) in DIRS {
            let (a, b) = (alpha + step * da, beta + step * db);
            let v = int2_objective(dist, a, b)?;
            if v < best - REFINE_MIN_GAIN {
                (alpha, beta, best) = (a, b, v);
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok((alpha, beta, best))
}

/// Optimal INT2 edges for every `D ∈ {4, …, 2048}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTable {
    entries: Vec<TableEntry>,
}

impl BoundaryTable {
    pub fn build() -> Result<Self> {
        Self::build_range(D_MIN, D_MAX)
    }

    pub fn build_range(lo: usize, hi: usize) -> Result<Self> {
        if lo < D_MIN || hi > D_MAX || lo > hi {
            return Err(Error::InvalidArgument(format!("table range {lo}..={hi} outside 4..=2048")));
        }
        let entries = (lo..=hi)
            .into_par_iter()
            .map(|d| optimize_entry(d).map_err(|e| Error::InvalidArgument(format!("D = {d}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static BoundaryTable {
        static TABLE: OnceLock<BoundaryTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            Self::from_csv(BUILTIN_CSV.as_bytes()).expect("embedded boundary table is well formed")
        })
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, d: usize) -> Result<&TableEntry> {
        let first = self.entries.first().map_or(usize::MAX, |e| e.d);
        d.checked_sub(first)
            .and_then(|i| self.entries.get(i))
            .filter(|e| e.d == d)
            .ok_or(Error::NoTableEntry(d))
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{TABLE_HEADER}")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{}", e.d, e.alpha, e.beta, e.expected_variance)?;
        }
        Ok(())
    }

    pub fn from_csv(r: impl BufRead) -> Result<Self> {
        let bad = |msg: String| Error::Parse {
            path: "boundary table".into(),
            message: msg,
        };
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != TABLE_HEADER {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("line {}: expected 4 fields", n + 2)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", n + 2)));
            let d = f[0].trim().parse::<usize>().map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
            if let Some(prev) = entries.last().map(|e: &TableEntry| e.d) {
                if d != prev + 1 {
                    return Err(bad(format!("line {}: D = {d} does not follow {prev}", n + 2)));
                }
            }
            entries.push(TableEntry {
                d,
                alpha: num(f[1])?,
                beta: num(f[2])?,
                expected_variance: num(f[3])?,
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub fn optimize_entry(d: usize) -> Result<TableEntry> {
    let dist = ClippedNormal::new(2, d as f64)?;
    let opt = optimize_boundaries(&dist)?;
    Ok(TableEntry {
        d,
        alpha: opt.alpha,
        beta: opt.beta,
        expected_variance: opt.expected_variance,
    })
}

pub fn build_boundary_table() -> Result<BoundaryTable> {
    BoundaryTable::build()
}

fn check_values(h_norm: &[f64], levels: u32) -> Result<()> {
    let top = levels as f64 + RANGE_TOLERANCE;
    match h_norm.iter().position(|&h| !(h >= -RANGE_TOLERANCE && h <= top)) {
        Some(i) => Err(Error::InvalidArgument(format!("value {} at {i} outside [0, {levels}]", h_norm[i]))),
        None => Ok(()),
    }
}

/// Squared SR error sums `(Σ(h - SR*(h))², Σ(h - SR(h))²)` over `draws`
/// rounds. Both roundings share each uniform draw.
fn paired_errors(h_norm: &[f64], edges_opt: &BinEdges, draws: usize, rng: &mut SeededRng) -> (f64, f64) {
    let levels = edges_opt.levels();
    let top = levels as f64;
    let grid = edges_opt.as_slice();
    let (mut opt, mut uni) = (0.0, 0.0);
    for _ in 0..draws {
        for &h in h_norm {
            let h = h.clamp(0.0, top);
            let u = rng.uniform();
            let a = h - grid[round_on_edges(h, edges_opt, u) as usize];
            let b = h - round_uniform(h, levels, u) as f64;
            opt += a * a;
            uni += b * b;
        }
    }
    (opt, uni)
}

/// `1 - Σ(h - SR*(h))² / Σ(h - SR(h))²` with `SR` on the integer grid and
/// `SR*` on `edges_opt`, each sum accumulated over `draws` SR rounds.
pub fn variance_reduction(h_norm: &[f64], edges_opt: &BinEdges, rng: &mut SeededRng, draws: usize) -> Result<f64> {
    check_values(h_norm, edges_opt.levels())?;
    let (opt, uni) = paired_errors(h_norm, edges_opt, draws.max(1), rng);
    if uni == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(1.0 - opt / uni)
}

/// Variance reduction obtained with the table entry for each candidate `D`,
/// all evaluated on identical SR draws (seeded by `seed`).
pub fn variance_reduction_curve(
    h_norm: &[f64],
    table: &BoundaryTable,
    candidates: &[usize],
    draws: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    check_values(h_norm, 3)?;
    candidates
        .par_iter()
        .map(|&d| {
            let edges = table.lookup(d)?.edges();
            let mut rng = SeededRng::new(seed);
            Ok((d, variance_reduction(h_norm, &edges, &mut rng, draws)?))
        })
        .collect()
}

/// Candidate `D` with the largest reduction.
pub fn observed_optimal_d(curve: &[(usize, f64)]) -> Option<usize> {
    curve
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(d, _)| d)
}

/// Expected variance over an `(α, β)` grid; infeasible points (`α ≥ β`)
/// are skipped.
pub fn expected_variance_grid(dist: &ClippedNormal, steps: usize) -> Result<Vec<(f64, f64, f64)>> {
    let pts: Vec<f64> = (1..steps).map(|k| 3.0 * k as f64 / steps as f64).collect();
    let pairs: Vec<(f64, f64)> = pts
        .iter()
        .flat_map(|&a| pts.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(a, b)| Ok((a, b, expected_variance(&BinEdges::int2(a, b)?, dist)?)))
        .collect()
}
