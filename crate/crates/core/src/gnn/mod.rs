//! Graph convolution layers whose backward context is stored compressed.
//!
//! The forward pass is always exact. What changes with compression is the
//! copy of the layer input kept for the backward pass: instead of `H` the
//! layer keeps `Quant(RP(H))` and recovers `Ĥ = IRP(Dequant(·))` when the
//! weight gradient is needed. The ReLU derivative comes from an exact
//! 1-bit mask.

mod train;

pub use train::{
    cross_entropy, train, Accuracy, DatasetSummary, GnnModel, LayerMemory, MemorySummary, Precision,
    SavedActivations, Timing, TrainConfig, TrainOutcome, TrainReport, REPORT_SCHEMA_VERSION,
};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::projection::RademacherProjector;
use crate::quant::{quantize, PackedQuantTensor, QuantScheme};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// `σ(Â H Θ)` with the symmetric-normalised adjacency.
    Gcn,
    /// `σ([H | M H] Θ)` with the mean aggregator `M`.
    Sage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Propagation operators for a graph, built once per dataset.
#[derive(Clone, Debug)]
pub struct GraphOps {
    pub normalized: SparseAdjacency,
    pub mean: SparseAdjacency,
}

impl GraphOps {
    pub fn new(adjacency: &SparseAdjacency) -> Result<Self> {
        Ok(Self {
            normalized: adjacency.normalize()?,
            mean: adjacency.mean_aggregator(),
        })
    }

    pub fn operator(&self, agg: Aggregation) -> &SparseAdjacency {
        match agg {
            Aggregation::Gcn => &self.normalized,
            Aggregation::Sage => &self.mean,
        }
    }
}

/// Bit-packed ReLU derivative: bit `k` is set when pre-activation `k` was
/// positive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReluMask {
    len: usize,
    words: Vec<u64>,
}

impl ReluMask {
    pub fn from_preactivation(z: &DenseMatrix) -> Self {
        let mut words = vec![0u64; z.data().len().div_ceil(64)];
        for (k, &v) in z.data().iter().enumerate() {
            if v > 0.0 {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        Self {
            len: z.data().len(),
            words,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn bits(&self) -> u64 {
        self.len as u64
    }

    pub fn stored_bytes(&self) -> usize {
        self.len.div_ceil(8)
    }

    fn apply(&self, g: &mut DenseMatrix) {
        for (k, v) in g.data_mut().iter_mut().enumerate() {
            if !self.get(k) {
                *v = 0.0;
            }
        }
    }
}

/// Quantised, projected layer input plus what is needed to undo it.
#[derive(Clone, Debug)]
pub struct CompressedContext {
    pub saved: PackedQuantTensor,
    pub projector: Option<RademacherProjector>,
    pub mask: Option<ReluMask>,
    /// `(N, D_in)` of the original input.
    pub shape: (usize, usize),
}

#[derive(Clone, Debug)]
pub enum LayerContext {
    Fp32 { h_in: DenseMatrix, mask: Option<ReluMask> },
    Compressed(CompressedContext),
}

impl LayerContext {
    pub fn input_shape(&self) -> (usize, usize) {
        match self {
            LayerContext::Fp32 { h_in, .. } => h_in.shape(),
            LayerContext::Compressed(c) => c.shape,
        }
    }

    pub fn mask(&self) -> Option<&ReluMask> {
        match self {
            LayerContext::Fp32 { mask, .. } => mask.as_ref(),
            LayerContext::Compressed(c) => c.mask.as_ref(),
        }
    }

    /// Exact bit count of the stored state.
    pub fn stored_bits(&self) -> u64 {
        let mask = self.mask().map_or(0, ReluMask::bits);
        match self {
            LayerContext::Fp32 { h_in, .. } => 32 * h_in.data().len() as u64 + mask,
            LayerContext::Compressed(c) => c.saved.memory_report().total_bits + mask,
        }
    }

    /// Bytes held by the stored buffers.
    pub fn stored_bytes(&self) -> usize {
        let mask = self.mask().map_or(0, ReluMask::stored_bytes);
        match self {
            LayerContext::Fp32 { h_in, .. } => 4 * h_in.data().len() + mask,
            LayerContext::Compressed(c) => c.saved.payload_bytes() + mask,
        }
    }

    /// The layer input as seen by the backward pass.
    pub fn recover_input(&self) -> Result<DenseMatrix> {
        match self {
            LayerContext::Fp32 { h_in, .. } => Ok(h_in.clone()),
            LayerContext::Compressed(c) => {
                let h = c.saved.dequantize()?;
                match &c.projector {
                    Some(p) => p.recover(&h),
                    None => Ok(h),
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GnnLayer {
    pub theta: DenseMatrix,
    pub d_in: usize,
    pub aggregation: Aggregation,
    pub activation: Activation,
    pub projector: Option<RademacherProjector>,
    /// Draw a new projection matrix on every forward pass. When off, the
    /// layer's own projector is reused.
    pub resample_projection: bool,
    pub scheme: Option<QuantScheme>,
}

impl GnnLayer {
    pub fn new(
        theta: DenseMatrix,
        aggregation: Aggregation,
        activation: Activation,
        projector: Option<RademacherProjector>,
        scheme: Option<QuantScheme>,
    ) -> Result<Self> {
        let d_in = match aggregation {
            Aggregation::Gcn => theta.rows(),
            Aggregation::Sage if theta.rows().is_multiple_of(2) => theta.rows() / 2,
            Aggregation::Sage => {
                return Err(Error::DimensionMismatch("SAGE weights need 2·D_in rows".into()));
            }
        };
        if let Some(p) = &projector {
            if p.d_in() != d_in {
                return Err(Error::DimensionMismatch(format!("projector expects {} inputs, layer has {d_in}", p.d_in())));
            }
            if scheme.is_none() {
                return Err(Error::InvalidArgument("projection without quantization is not supported".into()));
            }
        }
        Ok(Self {
            theta,
            d_in,
            aggregation,
            activation,
            projector,
            resample_projection: true,
            scheme,
        })
    }

    pub fn with_fixed_projection(mut self) -> Self {
        self.resample_projection = false;
        self
    }

    pub fn d_out(&self) -> usize {
        self.theta.cols()
    }

    pub fn is_compressed(&self) -> bool {
        self.scheme.is_some()
    }

    /// Width of the stored activation (`R`, or `D_in` without projection).
    pub fn stored_width(&self) -> usize {
        self.projector.map_or(self.d_in, |p| p.d_out())
    }

    fn propagate(&self, a: &SparseAdjacency, h: &DenseMatrix) -> Result<DenseMatrix> {
        match self.aggregation {
            Aggregation::Gcn => a.spmm(h),
            Aggregation::Sage => h.hcat(&a.spmm(h)?),
        }
    }

    /// Input projected with the layer's own projector.
    pub fn project_input(&self, h_in: &DenseMatrix) -> Result<DenseMatrix> {
        match &self.projector {
            Some(p) => p.project(h_in),
            None => Ok(h_in.clone()),
        }
    }

    fn preactivation(&self, a: &SparseAdjacency, h_in: &DenseMatrix) -> Result<DenseMatrix> {
        let (n, d) = h_in.shape();
        if d != self.d_in || a.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "layer input {n}x{d}, expected {}x{}",
                a.n(),
                self.d_in
            )));
        }
        self.propagate(a, h_in)?.matmul(&self.theta)
    }

    /// Output without saving anything for the backward pass.
    pub fn infer(&self, a: &SparseAdjacency, h_in: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = self.preactivation(a, h_in)?;
        if self.activation == Activation::Relu {
            z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(z)
    }

    /// Exact output and the context for [`backward`](Self::backward). `a`
    /// is the operator matching the layer's aggregation.
    pub fn forward(&self, a: &SparseAdjacency, h_in: &DenseMatrix, rng: &mut SeededRng) -> Result<(DenseMatrix, LayerContext)> {
        let (n, d) = h_in.shape();
        let mut z = self.preactivation(a, h_in)?;
        let mask = match self.activation {
            Activation::Relu => {
                let m = ReluMask::from_preactivation(&z);
                z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                Some(m)
            }
            Activation::Identity => None,
        };
        let ctx = match &self.scheme {
            None => LayerContext::Fp32 {
                h_in: h_in.clone(),
                mask,
            },
            Some(scheme) => {
                let projector = match self.projector {
                    Some(p) if self.resample_projection => Some(p.with_seed(rng.next_u64())),
                    p => p,
                };
                let h_proj = match &projector {
                    Some(p) => p.project(h_in)?,
                    None => h_in.clone(),
                };
                LayerContext::Compressed(CompressedContext {
                    saved: quantize(&h_proj, scheme, rng)?,
                    projector,
                    mask,
                    shape: (n, d),
                })
            }
        };
        Ok((z, ctx))
    }

    /// `(∂L/∂Θ, ∂L/∂H_in)` given `∂L/∂H_out`.
    pub fn backward(&self, a: &SparseAdjacency, ctx: &LayerContext, grad_out: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        let (n, d) = ctx.input_shape();
        if d != self.d_in || grad_out.shape() != (n, self.d_out()) || a.n() != n {
            return Err(Error::DimensionMismatch("context does not match this layer".into()));
        }
        if let LayerContext::Compressed(c) = ctx {
            let dims = |p: &Option<RademacherProjector>| p.map(|p| (p.d_in(), p.d_out()));
            let seed_differs = !self.resample_projection && c.projector != self.projector;
            if dims(&c.projector) != dims(&self.projector) || seed_differs {
                return Err(Error::InvalidArgument("context was saved with a different projection".into()));
            }
        }
        let mut g = grad_out.clone();
        if let Some(mask) = ctx.mask() {
            mask.apply(&mut g);
        }
        let h_hat = ctx.recover_input()?;
        let grad_theta = self.propagate(a, &h_hat)?.t_matmul(&g)?;
        let gp = g.matmul_t(&self.theta)?;
        let grad_h = match self.aggregation {
            Aggregation::Gcn => a.spmm_transpose(&gp)?,
            Aggregation::Sage => {
                let mut self_part = gp.columns(0, d);
                self_part.add_assign(&a.spmm_transpose(&gp.columns(d, 2 * d))?)?;
                self_part
            }
        };
        Ok((grad_theta, grad_h))
    }
}
