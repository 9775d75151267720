//! Layer stacks, cross-entropy loss and the full-batch training loop.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Activation, Aggregation, GnnLayer, GraphOps, LayerContext};
use crate::data::{GraphDataset, Split};
use crate::error::{Error, Result};
use crate::projection::RademacherProjector;
use crate::quant::{normalize_groups, Boundaries, Grouping, QuantScheme};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;
use crate::varopt::BoundaryTable;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const INIT_STREAM: u64 = 0;
const PROJECTION_STREAM: u64 = 100;
const ROUNDING_STREAM: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp32,
    Int8,
    Int4,
    Int2,
}

impl Precision {
    pub fn bits(self) -> Option<u8> {
        match self {
            Precision::Fp32 => None,
            Precision::Int8 => Some(8),
            Precision::Int4 => Some(4),
            Precision::Int2 => Some(2),
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" => Ok(Precision::Fp32),
            "int8" => Ok(Precision::Int8),
            "int4" => Ok(Precision::Int4),
            "int2" => Ok(Precision::Int2),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Fp32 => "fp32",
            Precision::Int8 => "int8",
            Precision::Int4 => "int4",
            Precision::Int2 => "int2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub precision: Precision,
    pub d_over_r: usize,
    /// Block size as a multiple of `R`; `None` quantises per row.
    pub g_over_r: Option<usize>,
    /// Use variance-minimised INT2 edges from the boundary table.
    pub vm: bool,
    pub epochs: usize,
    pub lr: f32,
    pub seed: u64,
    pub hidden: usize,
    pub layers: usize,
    pub aggregation: Aggregation,
    /// Draw a new projection matrix every step instead of once per run.
    #[serde(default = "default_true")]
    pub resample_projection: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            precision: Precision::Int2,
            d_over_r: 8,
            g_over_r: None,
            vm: false,
            epochs: 200,
            lr: 0.2,
            seed: 42,
            hidden: 64,
            layers: 2,
            aggregation: Aggregation::Gcn,
            resample_projection: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("layers, hidden and epochs must be positive".into()));
        }
        if self.d_over_r == 0 || self.g_over_r == Some(0) {
            return Err(Error::InvalidArgument("D/R and G/R must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        if self.vm && self.precision != Precision::Int2 {
            return Err(Error::InvalidArgument("variance-minimised edges are INT2 only".into()));
        }
        Ok(())
    }

    /// Scheme for a stored activation of width `r`.
    pub fn scheme_for(&self, r: usize) -> Result<Option<QuantScheme>> {
        let Some(bits) = self.precision.bits() else {
            return Ok(None);
        };
        let grouping = match self.g_over_r {
            None => Grouping::PerRow,
            Some(k) => Grouping::Block(k * r),
        };
        let boundaries = if self.vm {
            Boundaries::Explicit(BoundaryTable::builtin().lookup(r)?.edges().inner().to_vec())
        } else {
            Boundaries::Uniform
        };
        QuantScheme::new(bits, grouping, boundaries).map(Some)
    }
}

#[derive(Clone, Debug)]
pub struct GnnModel {
    pub layers: Vec<GnnLayer>,
}

impl GnnModel {
    pub fn build(config: &TrainConfig, in_dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        let root = SeededRng::new(config.seed);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let d_in = if l == 0 { in_dim } else { config.hidden };
            let last = l + 1 == config.layers;
            let d_out = if last { classes } else { config.hidden };
            let rows = match config.aggregation {
                Aggregation::Gcn => d_in,
                Aggregation::Sage => 2 * d_in,
            };
            let theta = DenseMatrix::glorot(rows, d_out, &mut root.substream(INIT_STREAM + l as u64));
            let quantized = config.precision.bits().is_some();
            let projector = if quantized && config.d_over_r > 1 {
                let seed = root.substream(PROJECTION_STREAM + l as u64).next_u64();
                Some(RademacherProjector::from_ratio(d_in, config.d_over_r, seed)?)
            } else {
                None
            };
            let width = projector.map_or(d_in, |p| p.d_out());
            let activation = if last { Activation::Identity } else { Activation::Relu };
            let mut layer = GnnLayer::new(theta, config.aggregation, activation, projector, config.scheme_for(width)?)?;
            layer.resample_projection = config.resample_projection;
            layers.push(layer);
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, ops: &GraphOps, x: &DenseMatrix, rng: &mut SeededRng) -> Result<(DenseMatrix, Vec<LayerContext>)> {
        let mut h = x.clone();
        let mut ctxs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, ctx) = layer.forward(ops.operator(layer.aggregation), &h, rng)?;
            ctxs.push(ctx);
            h = out;
        }
        Ok((h, ctxs))
    }

    /// Per-layer inputs and the final output, without saved state.
    pub fn infer(&self, ops: &GraphOps, x: &DenseMatrix) -> Result<(Vec<DenseMatrix>, DenseMatrix)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let out = layer.infer(ops.operator(layer.aggregation), &h)?;
            inputs.push(h);
            h = out;
        }
        Ok((inputs, h))
    }

    pub fn backward(&self, ops: &GraphOps, ctxs: &[LayerContext], grad_logits: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        if ctxs.len() != self.layers.len() {
            return Err(Error::InvalidArgument("one context per layer expected".into()));
        }
        let mut grads = vec![DenseMatrix::zeros(0, 0); self.layers.len()];
        let mut g = grad_logits.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (gt, gh) = layer.backward(ops.operator(layer.aggregation), &ctxs[l], &g)?;
            grads[l] = gt;
            g = gh;
        }
        Ok(grads)
    }

    pub fn step(&mut self, grads: &[DenseMatrix], lr: f32) -> Result<()> {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.theta.sub_scaled(g, lr)?;
        }
        Ok(())
    }
}

/// Mean softmax cross-entropy over `nodes` and its gradient with respect to
/// the logits (zero outside `nodes`).
pub fn cross_entropy(logits: &DenseMatrix, labels: &[usize], nodes: &[usize]) -> Result<(f64, DenseMatrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    let mut grad = DenseMatrix::zeros(n, c);
    if nodes.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / nodes.len() as f64;
    let mut loss = 0.0;
    for &i in nodes {
        let y = labels[i];
        if y >= c {
            return Err(Error::InvalidArgument(format!("label {y} at node {i} exceeds {c} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y] as f64;
        let g = grad.row_mut(i);
        for (k, &v) in row.iter().enumerate() {
            let p = (v as f64 - log_z).exp();
            g[k] = ((p - f64::from(u8::from(k == y))) * scale) as f32;
        }
    }
    Ok((loss * scale, grad))
}

fn accuracy(logits: &DenseMatrix, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let arg = (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best });
            arg == labels[i]
        })
        .count();
    correct as f64 / nodes.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMemory {
    pub layer: usize,
    pub d_in: usize,
    /// Width of the stored activation (`R`).
    pub stored_width: usize,
    pub bits: u64,
    pub fp32_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySummary {
    pub layers: Vec<LayerMemory>,
    pub total_bits: u64,
    pub fp32_bits: u64,
    pub ratio_vs_fp32: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds_per_epoch: Vec<f64>,
    pub mean_seconds_per_epoch: f64,
    pub epochs_per_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub dataset: DatasetSummary,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub accuracy: Accuracy,
    pub memory: MemorySummary,
    /// Wall-clock measurements; the only part that varies between runs.
    pub timing: Timing,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the `timing` section removed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Normalised projected activations of one layer, as seen by the
/// quantiser just before rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedActivations {
    pub layer: usize,
    pub rows: usize,
    /// Projected width `R`.
    pub r: usize,
    pub bits: u8,
    pub epoch: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub model: GnnModel,
    /// Taken at the epoch with the lowest validation loss; empty for FP32.
    pub activations: Vec<SavedActivations>,
}

fn fp32_layer_bits(layer: &GnnLayer, n: usize) -> u64 {
    let mask = if layer.activation == Activation::Relu { n * layer.d_out() } else { 0 };
    (32 * n * layer.d_in + mask) as u64
}

fn saved_activations(model: &GnnModel, ops: &GraphOps, x: &DenseMatrix, epoch: usize) -> Result<Vec<SavedActivations>> {
    let (inputs, _) = model.infer(ops, x)?;
    let mut out = Vec::new();
    for (l, (layer, h)) in model.layers.iter().zip(&inputs).enumerate() {
        let Some(scheme) = &layer.scheme else { continue };
        let proj = layer.project_input(h)?;
        out.push(SavedActivations {
            layer: l,
            rows: proj.rows(),
            r: proj.cols(),
            bits: scheme.bits(),
            epoch,
            // the CN_[1/R] fit assumes one min and one max per row of R values
            values: normalize_groups(&proj, &QuantScheme::per_row(scheme.bits())?)?,
        });
    }
    Ok(out)
}

/// Full-batch gradient descent on the training split.
pub fn train(ds: &GraphDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut model = GnnModel::build(config, ds.num_features(), ds.num_classes().max(2))?;
    let ops = GraphOps::new(&ds.adjacency)?;
    let x = &ds.features;
    let n = ds.num_nodes();
    let train_nodes = ds.nodes_in(Split::Train);
    let val_nodes = ds.nodes_in(Split::Val);
    let test_nodes = ds.nodes_in(Split::Test);
    let rounding = SeededRng::new(config.seed).substream(ROUNDING_STREAM);

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    let mut seconds = Vec::with_capacity(config.epochs);
    let mut layer_bits: Option<Vec<u64>> = None;
    let mut best: Option<(usize, f64, GnnModel)> = None;

    for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut rng = rounding.substream(epoch as u64);
        let (logits, ctxs) = model.forward(&ops, x, &mut rng)?;
        let (loss, grad) = cross_entropy(&logits, &ds.labels, &train_nodes)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: loss as f32,
            });
        }
        let (vloss, _) = cross_entropy(&logits, &ds.labels, &val_nodes)?;
        let bits: Vec<u64> = ctxs.iter().map(LayerContext::stored_bits).collect();
        match &layer_bits {
            None => layer_bits = Some(bits),
            Some(prev) if *prev != bits => {
                return Err(Error::InvalidArgument("stored activation size changed between epochs".into()));
            }
            Some(_) => {}
        }
        if best.as_ref().is_none_or(|b| vloss < b.1) {
            best = Some((epoch, vloss, model.clone()));
        }
        let grads = model.backward(&ops, &ctxs, &grad)?;
        model.step(&grads, config.lr)?;
        if model.layers.iter().any(|l| l.theta.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                epoch,
                loss: loss as f32,
            });
        }
        train_loss.push(loss);
        val_loss.push(vloss);
        seconds.push(start.elapsed().as_secs_f64());
    }

    let (_, logits) = model.infer(&ops, x)?;
    let accuracy = Accuracy {
        train: accuracy(&logits, &ds.labels, &train_nodes),
        val: accuracy(&logits, &ds.labels, &val_nodes),
        test: accuracy(&logits, &ds.labels, &test_nodes),
    };
    let layer_bits = layer_bits.unwrap_or_default();
    let layers: Vec<LayerMemory> = model
        .layers
        .iter()
        .zip(&layer_bits)
        .enumerate()
        .map(|(l, (layer, &bits))| LayerMemory {
            layer: l,
            d_in: layer.d_in,
            stored_width: layer.stored_width(),
            bits,
            fp32_bits: fp32_layer_bits(layer, n),
        })
        .collect();
    let total_bits = layers.iter().map(|l| l.bits).sum();
    let fp32_bits = layers.iter().map(|l| l.fp32_bits).sum();
    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    let activations = saved_activations(&best_model, &ops, x, best_epoch)?;
    let mean = seconds.iter().sum::<f64>() / seconds.len() as f64;
    let report = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        dataset: DatasetSummary {
            name: ds.name.clone(),
            nodes: n,
            edges: ds.adjacency.nnz() / 2,
            features: ds.num_features(),
            classes: ds.num_classes(),
        },
        train_loss,
        val_loss,
        best_epoch,
        accuracy,
        memory: MemorySummary {
            layers,
            total_bits,
            fp32_bits,
            ratio_vs_fp32: total_bits as f64 / fp32_bits as f64,
        },
        timing: Timing {
            seconds_per_epoch: seconds,
            mean_seconds_per_epoch: mean,
            epochs_per_second: if mean > 0.0 { 1.0 / mean } else { f64::INFINITY },
        },
    };
    Ok(TrainOutcome {
        report,
        model,
        activations,
    })
}
