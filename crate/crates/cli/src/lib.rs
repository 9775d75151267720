//! Experiment drivers behind the `actcomp` command-line tool.
//!
//! Each function here backs one subcommand and returns plain rows, so the
//! same code feeds the CSV/JSON writers and the integration tests.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use actcomp::blockwise::MemoryReport;
use actcomp::data::GraphDataset;
use actcomp::dist::{jsd_against_models, ClippedNormal};
use actcomp::gnn::{train, Precision, SavedActivations, TrainConfig};
use actcomp::quant::{dequantize, quantize, Grouping, QuantScheme};
use actcomp::tensor::DenseMatrix;
use actcomp::{Error, Result, SeededRng};

pub mod app;

pub const SCHEMA_VERSION: u32 = 1;
pub const ACTIVATIONS_FILE: &str = "activations.json";
pub const SWEEP_G_OVER_R: [usize; 6] = [2, 4, 8, 16, 32, 64];
pub const THREADS_ENV: &str = "ACTCOMP_THREADS";

/// Caps rayon's global pool from `ACTCOMP_THREADS` when set. Only the
/// first call in a process has an effect.
pub fn init_threads() -> Result<()> {
    static INIT: std::sync::Once = std::sync::Once::new();
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    INIT.call_once(|| {
        // fails only if a pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    });
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationDump {
    pub schema_version: u32,
    pub seed: u64,
    pub layers: Vec<SavedActivations>,
}

pub fn save_activations(dir: &Path, seed: u64, layers: &[SavedActivations]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no compressed layers, nothing to save (use a quantised precision)".into()));
    }
    std::fs::create_dir_all(dir)?;
    let dump = ActivationDump {
        schema_version: SCHEMA_VERSION,
        seed,
        layers: layers.to_vec(),
    };
    std::fs::write(dir.join(ACTIVATIONS_FILE), serde_json::to_vec(&dump)?)?;
    Ok(())
}

pub fn load_activations(dir: &Path) -> Result<ActivationDump> {
    let path = dir.join(ACTIVATIONS_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::Parse {
        path: path.clone(),
        message: format!("no saved activations: {e}"),
    })?;
    let dump: ActivationDump = serde_json::from_slice(&bytes)?;
    if dump.layers.is_empty() {
        return Err(Error::Parse {
            path,
            message: "no saved activations".into(),
        });
    }
    Ok(dump)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JsdRow {
    pub layer: usize,
    pub r: usize,
    pub jsd_uniform: f64,
    pub jsd_clipped_normal: f64,
}

/// JSD of each layer's normalised activations against the uniform and the
/// fitted `CN_[1/R]` models, averaged over runs.
pub fn fit_dist(runs: &[ActivationDump]) -> Result<Vec<JsdRow>> {
    let first = runs.first().ok_or_else(|| Error::InvalidArgument("no saved activations".into()))?;
    let mut rows = Vec::with_capacity(first.layers.len());
    for (k, layer) in first.layers.iter().enumerate() {
        let (mut ju, mut jc) = (0.0, 0.0);
        for run in runs {
            let l = run.layers.get(k).filter(|l| l.layer == layer.layer && l.r == layer.r).ok_or_else(|| {
                Error::InvalidArgument(format!("runs disagree on layer {} (R = {})", layer.layer, layer.r))
            })?;
            let dist = ClippedNormal::new(l.bits, l.r as f64)?;
            let (u, c) = jsd_against_models(l.values.iter().copied(), &dist)?;
            ju += u;
            jc += c;
        }
        let n = runs.len() as f64;
        rows.push(JsdRow {
            layer: layer.layer,
            r: layer.r,
            jsd_uniform: ju / n,
            jsd_clipped_normal: jc / n,
        });
    }
    Ok(rows)
}

pub fn write_jsd_csv(rows: &[JsdRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "layer,R,jsd_uniform,jsd_clipped_normal")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.layer, r.r, r.jsd_uniform, r.jsd_clipped_normal)?;
    }
    Ok(())
}

/// Trains `repeats` models with consecutive seeds and returns their saved
/// activations.
pub fn train_for_activations(ds: &GraphDataset, config: &TrainConfig, repeats: usize) -> Result<Vec<ActivationDump>> {
    (0..repeats.max(1) as u64)
        .map(|k| {
            let cfg = TrainConfig {
                seed: config.seed + k,
                ..config.clone()
            };
            let out = train(ds, &cfg)?;
            if out.activations.is_empty() {
                return Err(Error::InvalidArgument("no saved activations: precision must be quantised".into()));
            }
            Ok(ActivationDump {
                schema_version: SCHEMA_VERSION,
                seed: cfg.seed,
                layers: out.activations,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub g_over_r: usize,
    pub test_accuracy: f64,
    pub fp32_test_accuracy: f64,
    pub seconds_per_epoch: f64,
    pub activation_bits: u64,
    pub fp32_bits: u64,
    pub memory_ratio: f64,
}

/// One training run per block size, plus an FP32 baseline for reference.
pub fn sweep(ds: &GraphDataset, config: &TrainConfig, g_over_r: &[usize]) -> Result<Vec<SweepRow>> {
    if config.precision == Precision::Fp32 {
        return Err(Error::InvalidArgument("sweep needs a quantised precision".into()));
    }
    let baseline = train(
        ds,
        &TrainConfig {
            precision: Precision::Fp32,
            vm: false,
            g_over_r: None,
            ..config.clone()
        },
    )?
    .report;
    g_over_r
        .iter()
        .map(|&k| {
            let r = train(
                ds,
                &TrainConfig {
                    g_over_r: Some(k),
                    ..config.clone()
                },
            )?
            .report;
            Ok(SweepRow {
                g_over_r: k,
                test_accuracy: r.accuracy.test,
                fp32_test_accuracy: baseline.accuracy.test,
                seconds_per_epoch: r.timing.mean_seconds_per_epoch,
                activation_bits: r.memory.total_bits,
                fp32_bits: r.memory.fp32_bits,
                memory_ratio: r.memory.ratio_vs_fp32,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "g_over_r,test_accuracy,fp32_test_accuracy,seconds_per_epoch,activation_bits,fp32_bits,memory_ratio")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.g_over_r, r.test_accuracy, r.fp32_test_accuracy, r.seconds_per_epoch, r.activation_bits, r.fp32_bits, r.memory_ratio
        )?;
    }
    Ok(())
}

/// Flat memory report for the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryJson {
    pub schema_version: u32,
    pub rows: usize,
    pub cols: usize,
    pub bits: u8,
    /// 0 for per-row grouping.
    pub group_size: usize,
    pub elements: u64,
    pub code_bits: u64,
    pub metadata_bits: u64,
    pub total_bits: u64,
    pub bytes: u64,
    pub ratio_vs_fp32: f64,
}

impl MemoryJson {
    pub fn new(rows: usize, cols: usize, scheme: &QuantScheme, m: &MemoryReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            rows,
            cols,
            bits: scheme.bits(),
            group_size: match scheme.grouping() {
                Grouping::PerRow => 0,
                Grouping::Block(g) => g,
            },
            elements: m.elements,
            code_bits: m.code_bits,
            metadata_bits: m.metadata_bits,
            total_bits: m.total_bits,
            bytes: m.bytes,
            ratio_vs_fp32: m.ratio_vs_fp32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub bits: u8,
    pub mode: &'static str,
    pub group_size: usize,
    pub elements: usize,
    pub quantize_elems_per_sec: f64,
    pub dequantize_elems_per_sec: f64,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u8>,
    pub groups: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rows: 4096,
            cols: 64,
            bits: vec![2, 4, 8],
            groups: (1..=12).map(|k| 1 << k).collect(),
            reps: 5,
            seed: 42,
        }
    }
}

fn time_scheme(h: &DenseMatrix, scheme: &QuantScheme, reps: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = SeededRng::new(seed);
    let (mut tq, mut td) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        let packed = quantize(h, scheme, &mut rng)?;
        tq = tq.min(t.elapsed().as_secs_f64());
        let t = Instant::now();
        std::hint::black_box(dequantize(&packed)?);
        td = td.min(t.elapsed().as_secs_f64());
    }
    let n = h.data().len() as f64;
    Ok((n / tq.max(1e-12), n / td.max(1e-12)))
}

/// Quantise/dequantise throughput (best of `reps`) for per-row and every
/// block size.
pub fn bench_quant(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rng = SeededRng::new(cfg.seed);
    let h = DenseMatrix::from_fn(cfg.rows, cfg.cols, |_, _| rng.standard_normal() as f32);
    let mut rows = Vec::new();
    for &bits in &cfg.bits {
        let per_row = QuantScheme::per_row(bits)?;
        let (q, d) = time_scheme(&h, &per_row, cfg.reps, cfg.seed)?;
        rows.push(BenchRow {
            bits,
            mode: "per-row",
            group_size: cfg.cols,
            elements: h.data().len(),
            quantize_elems_per_sec: q,
            dequantize_elems_per_sec: d,
        });
        for &g in &cfg.groups {
            let (q, d) = time_scheme(&h, &QuantScheme::block(bits, g)?, cfg.reps, cfg.seed)?;
            rows.push(BenchRow {
                bits,
                mode: "block",
                group_size: g,
                elements: h.data().len(),
                quantize_elems_per_sec: q,
                dequantize_elems_per_sec: d,
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "bits,mode,group_size,elements,quantize_elems_per_sec,dequantize_elems_per_sec")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.0},{:.0}",
            r.bits, r.mode, r.group_size, r.elements, r.quantize_elems_per_sec, r.dequantize_elems_per_sec
        )?;
    }
    Ok(())
}
