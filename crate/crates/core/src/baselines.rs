//! Reference attention mechanisms: softmax scaled dot-product attention,
//! kernelized linear attention and the multi-head wrapper.

use crate::dense::{gemm, matmul, DenseMatrix, Trans};
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::sample::{seeded_rng, uniform_matrix};
use crate::scalar::Scalar;

/// Model width used by the default multi-head geometry.
pub const DEFAULT_MODEL_WIDTH: usize = 512;
/// Head count used by the default multi-head geometry.
pub const DEFAULT_HEADS: usize = 8;

/// Validated `(Q, K, V)`: `Q` and `K` are `n x d`, `V` is `n x d_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnInputs<S = f64> {
    q: DenseMatrix<S>,
    k: DenseMatrix<S>,
    v: DenseMatrix<S>,
}

impl<S: Scalar> AttnInputs<S> {
    pub fn new(q: DenseMatrix<S>, k: DenseMatrix<S>, v: DenseMatrix<S>) -> Result<Self> {
        if q.shape() != k.shape() {
            return Err(Error::DimensionMismatch {
                op: "attn_inputs",
                left: q.shape(),
                right: k.shape(),
            });
        }
        if v.rows() != q.rows() || q.rows() == 0 || q.cols() == 0 || v.cols() == 0 {
            return Err(Error::DimensionMismatch {
                op: "attn_inputs",
                left: q.shape(),
                right: v.shape(),
            });
        }
        Ok(Self { q, k, v })
    }

    /// Self-attention inputs `Q = K = V = x`.
    pub fn self_attention(x: DenseMatrix<S>) -> Result<Self> {
        Self::new(x.clone(), x.clone(), x)
    }

    pub fn q(&self) -> &DenseMatrix<S> {
        &self.q
    }

    pub fn k(&self) -> &DenseMatrix<S> {
        &self.k
    }

    pub fn v(&self) -> &DenseMatrix<S> {
        &self.v
    }

    /// Token count.
    pub fn n(&self) -> usize {
        self.q.rows()
    }

    /// Query/key width.
    pub fn d(&self) -> usize {
        self.q.cols()
    }

    pub fn d_v(&self) -> usize {
        self.v.cols()
    }

    pub fn with_q(&self, q: DenseMatrix<S>) -> Result<Self> {
        Self::new(q, self.k.clone(), self.v.clone())
    }

    pub fn into_parts(self) -> (DenseMatrix<S>, DenseMatrix<S>, DenseMatrix<S>) {
        (self.q, self.k, self.v)
    }
}

impl AttnInputs<f64> {
    /// `Q`, `K` of shape `n x d` and `V` of shape `n x d_v`, entries in `U[-1, 1)`.
    pub fn random(n: usize, d: usize, d_v: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let q = uniform_matrix(&mut rng, n, d, -1.0, 1.0);
        let k = uniform_matrix(&mut rng, n, d, -1.0, 1.0);
        let v = uniform_matrix(&mut rng, n, d_v, -1.0, 1.0);
        Self::new(q, k, v)
    }
}

/// Softmax weights `softmax(Q Kᵀ / √d)`, one row per query.
pub fn softmax_weights(inputs: &AttnInputs<f64>) -> Result<DenseMatrix<f64>> {
    let scale = 1.0 / (inputs.d() as f64).sqrt();
    let logits = gemm(inputs.q(), inputs.k(), Trans::No, Trans::ConjTrans)?;
    let n = logits.cols();
    let mut data = logits.into_data();
    for row in data.chunks_mut(n) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = ((*x - max) * scale).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    DenseMatrix::from_vec(inputs.n(), n, data)
}

/// Scaled dot-product attention `softmax(Q Kᵀ / √d) V`.
pub fn softmax_attention(inputs: &AttnInputs<f64>) -> Result<DenseMatrix<f64>> {
    matmul(&softmax_weights(inputs)?, inputs.v())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `φ(q)ᵀ φ(k) = 1 + (q/‖q‖)ᵀ (k/‖k‖)`, the first-order expansion of `exp`.
    NormalizedDotPlusOne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Lower bound on norms and on row denominators.
    pub epsilon: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::NormalizedDotPlusOne,
            epsilon: 1e-12,
        }
    }
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig {
                field: "epsilon",
                reason: format!("{} is not a positive finite number", self.epsilon),
            })
        }
    }
}

/// `φ(x) = [1; x / max(‖x‖₂, ε)]`, so a zero vector maps to `[1; 0 … 0]`.
pub fn kernel_feature_map(x: &[f64], spec: &KernelSpec) -> Vec<f64> {
    match spec.kind {
        KernelKind::NormalizedDotPlusOne => {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(spec.epsilon);
            std::iter::once(1.0).chain(x.iter().map(|v| v / norm)).collect()
        }
    }
}

fn feature_matrix(m: &DenseMatrix<f64>, spec: &KernelSpec) -> DenseMatrix<f64> {
    let data = (0..m.rows()).flat_map(|i| kernel_feature_map(m.row(i), spec)).collect();
    DenseMatrix::from_raw(m.rows(), m.cols() + 1, data)
}

/// Kernelized attention in the reordered form `φ(Q) (φ(K)ᵀ V)` with row
/// denominators `φ(Q) (φ(K)ᵀ 1)`. Cost is linear in `n`.
pub fn linear_kernel_attention(inputs: &AttnInputs<f64>, spec: &KernelSpec) -> Result<DenseMatrix<f64>> {
    spec.validate()?;
    let phi_q = feature_matrix(inputs.q(), spec);
    let phi_k = feature_matrix(inputs.k(), spec);
    let kv = gemm(&phi_k, inputs.v(), Trans::ConjTrans, Trans::No)?;
    let k_sum = DenseMatrix::from_raw(1, phi_k.cols(), {
        let mut s = vec![0.0; phi_k.cols()];
        for i in 0..phi_k.rows() {
            for (acc, &x) in s.iter_mut().zip(phi_k.row(i)) {
                *acc += x;
            }
        }
        s
    });
    let numer = matmul(&phi_q, &kv)?;
    let denom = gemm(&phi_q, &k_sum, Trans::No, Trans::ConjTrans)?;
    let mut inv = Vec::with_capacity(inputs.n());
    for (row, &value) in denom.data().iter().enumerate() {
        if value < spec.epsilon {
            return Err(Error::DegenerateDenominator { row, value });
        }
        inv.push(1.0 / value);
    }
    numer.scale_rows(&inv)
}

/// Per-head projections and output projection for [`multi_head`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadSpec {
    pub heads: usize,
    /// `d x (d / heads)` each.
    pub w_q: Vec<DenseMatrix<f64>>,
    pub w_k: Vec<DenseMatrix<f64>>,
    pub w_v: Vec<DenseMatrix<f64>>,
    /// `d x d`.
    pub w_o: DenseMatrix<f64>,
    pub mechanism: Mechanism,
}

impl MultiHeadSpec {
    /// Splits `d x d` projection matrices column-wise into `heads` blocks.
    pub fn from_full(
        heads: usize,
        w_q: &DenseMatrix<f64>,
        w_k: &DenseMatrix<f64>,
        w_v: &DenseMatrix<f64>,
        w_o: DenseMatrix<f64>,
        mechanism: Mechanism,
    ) -> Result<Self> {
        let d = w_o.rows();
        if heads == 0 || d % heads != 0 {
            return Err(Error::InvalidConfig {
                field: "heads",
                reason: format!("model width {d} is not divisible by {heads} heads"),
            });
        }
        let width = d / heads;
        let split = |w: &DenseMatrix<f64>| -> Result<Vec<DenseMatrix<f64>>> {
            if w.shape() != (d, d) {
                return Err(Error::DimensionMismatch {
                    op: "multi_head",
                    left: (d, d),
                    right: w.shape(),
                });
            }
            (0..heads).map(|h| w.column_block(h * width, width)).collect()
        };
        let spec = Self {
            heads,
            w_q: split(w_q)?,
            w_k: split(w_k)?,
            w_v: split(w_v)?,
            w_o,
            mechanism,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Uniform `[-1/√d, 1/√d]` projections.
    pub fn random(d: usize, heads: usize, mechanism: Mechanism, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = || uniform_matrix(&mut rng, d, d, -bound, bound);
        let (w_q, w_k, w_v, w_o) = (draw(), draw(), draw(), draw());
        Self::from_full(heads, &w_q, &w_k, &w_v, w_o, mechanism)
    }

    /// Default geometry: `d = 512`, eight heads of width 64.
    pub fn default_geometry(mechanism: Mechanism, seed: u64) -> Result<Self> {
        Self::random(DEFAULT_MODEL_WIDTH, DEFAULT_HEADS, mechanism, seed)
    }

    pub fn model_width(&self) -> usize {
        self.w_o.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model_width();
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::InvalidConfig {
                field: "heads",
                reason: format!("model width {d} is not divisible by {} heads", self.heads),
            });
        }
        let width = d / self.heads;
        if self.w_o.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                op: "multi_head",
                left: (d, d),
                right: self.w_o.shape(),
            });
        }
        for set in [&self.w_q, &self.w_k, &self.w_v] {
            if set.len() != self.heads {
                return Err(Error::InvalidConfig {
                    field: "heads",
                    reason: format!("expected {} projections, got {}", self.heads, set.len()),
                });
            }
            if let Some(bad) = set.iter().find(|w| w.shape() != (d, width)) {
                return Err(Error::DimensionMismatch {
                    op: "multi_head",
                    left: (d, width),
                    right: bad.shape(),
                });
            }
        }
        Ok(())
    }
}

/// `Concat(head_1, …, head_h) W_O` with `head_i = mechanism(Q W_Qᵢ, K W_Kᵢ, V W_Vᵢ)`.
/// Heads are evaluated and concatenated in order.
pub fn multi_head(inputs: &AttnInputs<f64>, spec: &MultiHeadSpec) -> Result<DenseMatrix<f64>> {
    spec.validate()?;
    let d = spec.model_width();
    for m in [inputs.q(), inputs.k(), inputs.v()] {
        if m.cols() != d {
            return Err(Error::DimensionMismatch {
                op: "multi_head",
                left: (inputs.n(), d),
                right: m.shape(),
            });
        }
    }
    let heads = (0..spec.heads)
        .map(|h| {
            let head_inputs = AttnInputs::new(
                matmul(inputs.q(), &spec.w_q[h])?,
                matmul(inputs.k(), &spec.w_k[h])?,
                matmul(inputs.v(), &spec.w_v[h])?,
            )?;
            spec.mechanism.apply(&head_inputs)
        })
        .collect::<Result<Vec<_>>>()?;
    matmul(&DenseMatrix::hstack(&heads)?, &spec.w_o)
}
