//! Tensor attention: the `n x n` positive semi-definite operator built from
//! `A = Q Kᴴ`, its normalizations, the factorized linear-time path and the
//! ReLU, element-exponential, matrix-exponential, causal and residual variants.
//!
//! Operator flavors, with `A = Q Kᴴ`:
//!
//! | side  | hadamard | operator                         |
//! |-------|----------|----------------------------------|
//! | Q     | no       | `A Aᴴ = Q (KᴴK) Qᴴ`              |
//! | K     | no       | `Aᴴ A = K (QᴴQ) Kᴴ`              |
//! | Q, K  | yes      | `X[i,j] = A[i,j] · conj(A[j,i])` |
//!
//! All four are Hermitian with a real non-negative diagonal; the two product
//! forms are also positive semi-definite, so `tr(T) = ‖A‖²_F`.

use crate::baselines::AttnInputs;
use crate::dense::{gemm, hadamard, matmul, trace, DenseMatrix, Trans};
use crate::error::{Error, Normalizer, Result};
use crate::expm::{expm, ExpmSpec};
use crate::scalar::{Scalar, ScalarKind};

/// Default normalizer threshold per token.
pub const TRACE_EPSILON_PER_TOKEN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Side {
    #[default]
    QSide,
    KSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Normalization {
    /// `T / tr(T)`
    #[default]
    Trace,
    /// `diag(T)⁻¹ T`
    Diag,
    /// `diag(T 1ₙ)⁻¹ T`
    Row,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TensorOpConfig {
    pub side: Side,
    pub hadamard: bool,
    pub normalization: Normalization,
    /// Smallest admissible normalizer; `None` means `1e-12 · n`.
    pub trace_epsilon: Option<f64>,
}

impl TensorOpConfig {
    pub fn new(side: Side, hadamard: bool, normalization: Normalization) -> Self {
        Self {
            side,
            hadamard,
            normalization,
            trace_epsilon: None,
        }
    }

    pub fn side(side: Side) -> Self {
        Self { side, ..Self::default() }
    }

    /// Effective threshold for `n` tokens.
    pub fn threshold(&self, n: usize) -> Result<f64> {
        match self.trace_epsilon {
            None => Ok(TRACE_EPSILON_PER_TOKEN * n as f64),
            Some(eps) if eps > 0.0 && eps.is_finite() => Ok(eps),
            Some(eps) => Err(Error::InvalidConfig {
                field: "trace_epsilon",
                reason: format!("{eps} is not a positive finite number"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSpec {
    lambda: f64,
}

impl ResidualSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda >= 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(Error::InvalidConfig {
                field: "lambda",
                reason: format!("{lambda} is not a non-negative finite number"),
            })
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `A = Q Kᴴ`, `N = KᴴK`, `G = QᴴQ` and the trace-normalized operator `T̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionIntermediates<S> {
    pub a: DenseMatrix<S>,
    pub n: DenseMatrix<S>,
    pub g: DenseMatrix<S>,
    pub t_hat: DenseMatrix<S>,
}

pub fn intermediates<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, cfg: &TensorOpConfig) -> Result<AttentionIntermediates<S>> {
    let t = build_tensor_operator(q, k, cfg)?;
    let threshold = cfg.threshold(q.rows())?;
    Ok(AttentionIntermediates {
        a: gemm(q, k, Trans::No, Trans::ConjTrans)?,
        n: gemm(k, k, Trans::ConjTrans, Trans::No)?,
        g: gemm(q, q, Trans::ConjTrans, Trans::No)?,
        t_hat: normalize_operator(&t, Normalization::Trace, threshold)?,
    })
}

fn same_shape<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, op: &'static str) -> Result<()> {
    if q.shape() == k.shape() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            left: q.shape(),
            right: k.shape(),
        })
    }
}

fn real_only<S: Scalar>(op: &'static str) -> Result<()> {
    match S::KIND {
        ScalarKind::Real64 => Ok(()),
        kind => Err(Error::ComplexNotSupported { op, kind }),
    }
}

/// Materializes the `n x n` operator selected by `cfg`.
///
/// The product flavors are formed as `A Aᴴ` or `Aᴴ A`, costing `O(n² d + n³)`.
pub fn build_tensor_operator<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, cfg: &TensorOpConfig) -> Result<DenseMatrix<S>> {
    same_shape(q, k, "build_tensor_operator")?;
    let a = gemm(q, k, Trans::No, Trans::ConjTrans)?;
    if cfg.hadamard {
        let n = a.rows();
        return DenseMatrix::from_fn(n, n, |i, j| a.get(i, j) * a.get(j, i).conj());
    }
    match cfg.side {
        Side::QSide => gemm(&a, &a, Trans::No, Trans::ConjTrans),
        Side::KSide => gemm(&a, &a, Trans::ConjTrans, Trans::No),
    }
}

/// Diagonal of `T_Q` (or `T_K`) in `O(n d²)` without forming any `n x n` matrix.
///
/// With `N = KᴴK`, `out[i] = Σ_kl Q[i,k] N[k,l] conj(Q[i,l])`: one pass forms
/// `W = Q N`, then each entry is the inner product of row `i` of `W` and `Q`.
/// Entries are clamped at zero.
pub fn diag_fast<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, side: Side) -> Result<Vec<f64>> {
    same_shape(q, k, "diag_fast")?;
    let (outer, inner) = match side {
        Side::QSide => (q, k),
        Side::KSide => (k, q),
    };
    let gram = gemm(inner, inner, Trans::ConjTrans, Trans::No)?;
    let w = matmul(outer, &gram)?;
    Ok((0..outer.rows())
        .map(|i| {
            let v: S = w.row(i).iter().zip(outer.row(i)).map(|(&x, &y)| x * y.conj()).sum();
            v.re().max(0.0)
        })
        .collect())
}

/// Diagonal of the materialized operator: `O(n² d + n³)`.
pub fn diag_materialized<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, side: Side) -> Result<Vec<f64>> {
    let t = build_tensor_operator(q, k, &TensorOpConfig::side(side))?;
    Ok(t.diagonal().into_iter().map(|x| x.re()).collect())
}

/// `tr(T) = sum(N ⊙ Gᵀ)` with `N = KᴴK`, `G = QᴴQ`; equal for both sides.
/// For real input this is `sum((KᵀK) ⊙ (QᵀQ))`.
pub fn factorized_trace<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>) -> Result<f64> {
    same_shape(q, k, "factorized_trace")?;
    let n = gemm(k, k, Trans::ConjTrans, Trans::No)?;
    let g = gemm(q, q, Trans::ConjTrans, Trans::No)?;
    Ok(hadamard(&n, &g.transpose())?.sum().re())
}

/// Applies `normalization` to a materialized operator.
pub fn normalize_operator<S: Scalar>(t: &DenseMatrix<S>, normalization: Normalization, threshold: f64) -> Result<DenseMatrix<S>> {
    let degenerate = |which| Error::DegenerateNormalizer { which, threshold };
    match normalization {
        Normalization::Trace => {
            let value = trace(t)?.re();
            if !(value >= threshold) {
                return Err(degenerate(Normalizer::Trace { value }));
            }
            t.scale(S::from_real(1.0 / value))
        }
        Normalization::Diag => {
            if !t.is_square() {
                return Err(Error::NotSquare {
                    op: "normalize_operator",
                    rows: t.rows(),
                    cols: t.cols(),
                });
            }
            let factors = diagonal_reciprocals(t.diagonal().into_iter().map(|x| x.re()), threshold)?;
            t.scale_rows(&factors)
        }
        Normalization::Row => t.scale_rows(&row_reciprocals(&t.row_sums(), threshold)?),
    }
}

fn diagonal_reciprocals<S: Scalar>(diag: impl Iterator<Item = f64>, threshold: f64) -> Result<Vec<S>> {
    diag.enumerate()
        .map(|(index, value)| {
            if value >= threshold {
                Ok(S::from_real(1.0 / value))
            } else {
                Err(Error::DegenerateNormalizer {
                    which: Normalizer::Diagonal { index, value },
                    threshold,
                })
            }
        })
        .collect()
}

/// Real row sums must be at least `threshold`; complex ones must have modulus at least `threshold`.
fn row_reciprocals<S: Scalar>(sums: &[S], threshold: f64) -> Result<Vec<S>> {
    sums.iter()
        .enumerate()
        .map(|(index, &s)| {
            let value = match S::KIND {
                ScalarKind::Real64 => s.re(),
                ScalarKind::Complex128 => s.modulus(),
            };
            if value >= threshold {
                Ok(S::one() / s)
            } else {
                Err(Error::DegenerateNormalizer {
                    which: Normalizer::RowSum { index, value },
                    threshold,
                })
            }
        })
        .collect()
}

/// Materializes `T`, normalizes it and applies it to `V`. `O(n²)` memory.
pub fn tensor_attention_naive<S: Scalar>(inputs: &AttnInputs<S>, cfg: &TensorOpConfig) -> Result<DenseMatrix<S>> {
    let threshold = cfg.threshold(inputs.n())?;
    let t = build_tensor_operator(inputs.q(), inputs.k(), cfg)?;
    matmul(&normalize_operator(&t, cfg.normalization, threshold)?, inputs.v())
}

/// Unnormalized `T V` in factorized form: `Q (N (Qᴴ V))` for the Q side,
/// `K (G (Kᴴ V))` for the K side. Never forms an `n x n` matrix.
pub fn factorized_apply<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, side: Side, v: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    same_shape(q, k, "factorized_apply")?;
    let (outer, inner) = match side {
        Side::QSide => (q, k),
        Side::KSide => (k, q),
    };
    let gram = gemm(inner, inner, Trans::ConjTrans, Trans::No)?;
    let projected = gemm(outer, v, Trans::ConjTrans, Trans::No)?;
    matmul(outer, &matmul(&gram, &projected)?)
}

/// Trace-normalized tensor attention in `O(n d²)`:
/// `sum((KᵀK) ⊙ (QᵀQ))⁻¹ · Q (KᵀK) (Qᵀ V)` (roles swapped for the K side).
pub fn tensor_attention_linear<S: Scalar>(inputs: &AttnInputs<S>, side: Side) -> Result<DenseMatrix<S>> {
    tensor_attention_linear_normalized(inputs, &TensorOpConfig::side(side))
}

/// Linear-time path for every normalization of the product flavors.
///
/// Diagonal normalizers come from [`diag_fast`] and row sums from
/// `T 1ₙ = Q (N (Qᴴ 1ₙ))`. The Hadamard flavor has no factorized form and
/// is rejected.
pub fn tensor_attention_linear_normalized<S: Scalar>(inputs: &AttnInputs<S>, cfg: &TensorOpConfig) -> Result<DenseMatrix<S>> {
    if cfg.hadamard {
        return Err(Error::InvalidConfig {
            field: "hadamard",
            reason: "the Hadamard operator has no linear-time factorization".into(),
        });
    }
    let threshold = cfg.threshold(inputs.n())?;
    let (q, k) = (inputs.q(), inputs.k());
    let tv = factorized_apply(q, k, cfg.side, inputs.v())?;
    match cfg.normalization {
        Normalization::Trace => {
            let value = factorized_trace(q, k)?;
            if !(value >= threshold) {
                return Err(Error::DegenerateNormalizer {
                    which: Normalizer::Trace { value },
                    threshold,
                });
            }
            tv.scale(S::from_real(1.0 / value))
        }
        Normalization::Diag => {
            let diag = diag_fast(q, k, cfg.side)?;
            tv.scale_rows(&diagonal_reciprocals(diag.into_iter(), threshold)?)
        }
        Normalization::Row => {
            let ones = DenseMatrix::from_raw(inputs.n(), 1, vec![S::one(); inputs.n()]);
            let sums = factorized_apply(q, k, cfg.side, &ones)?.into_data();
            tv.scale_rows(&row_reciprocals(&sums, threshold)?)
        }
    }
}

/// `ReLU[T]` normalized and applied to `V`. Trace and diagonal normalizers are
/// unaffected by the clamp since the diagonal is non-negative.
pub fn tensor_attention_relu<S: Scalar>(inputs: &AttnInputs<S>, cfg: &TensorOpConfig) -> Result<DenseMatrix<S>> {
    real_only::<S>("tensor_attention_relu")?;
    let threshold = cfg.threshold(inputs.n())?;
    let t = build_tensor_operator(inputs.q(), inputs.k(), cfg)?;
    let clamped = relu(&t);
    matmul(&normalize_operator(&clamped, cfg.normalization, threshold)?, inputs.v())
}

/// Entrywise `max(x, 0)`.
pub fn relu<S: Scalar>(t: &DenseMatrix<S>) -> DenseMatrix<S> {
    t.map(|x| if x.re() < 0.0 { S::zero() } else { x })
}

/// `exp.(T / tr(T)) V` with the exponential applied entrywise. Always trace-normalized.
pub fn tensor_attention_elem_exp<S: Scalar>(inputs: &AttnInputs<S>, cfg: &TensorOpConfig) -> Result<DenseMatrix<S>> {
    real_only::<S>("tensor_attention_elem_exp")?;
    let threshold = cfg.threshold(inputs.n())?;
    let t = build_tensor_operator(inputs.q(), inputs.k(), cfg)?;
    let t_hat = normalize_operator(&t, Normalization::Trace, threshold)?;
    let kernel = t_hat.try_map("tensor_attention_elem_exp", |x| S::from_real(x.re().exp()))?;
    matmul(&kernel, inputs.v())
}

/// `e^{T / tr(T)} V` with the matrix exponential evaluated per `spec`.
pub fn tensor_attention_expm<S: Scalar>(inputs: &AttnInputs<S>, cfg: &TensorOpConfig, spec: &ExpmSpec) -> Result<DenseMatrix<S>> {
    let threshold = cfg.threshold(inputs.n())?;
    let t = build_tensor_operator(inputs.q(), inputs.k(), cfg)?;
    let t_hat = normalize_operator(&t, Normalization::Trace, threshold)?;
    matmul(&expm(&t_hat, spec)?, inputs.v())
}

/// Causal variant: `tril(T)` normalized and applied to `V`. Trace and
/// diagonal normalizers equal those of `T`; row sums are taken over `j ≤ i`.
pub fn tensor_attention_masked<S: Scalar>(inputs: &AttnInputs<S>, cfg: &TensorOpConfig) -> Result<DenseMatrix<S>> {
    let threshold = cfg.threshold(inputs.n())?;
    let t = build_tensor_operator(inputs.q(), inputs.k(), cfg)?.tril();
    matmul(&normalize_operator(&t, cfg.normalization, threshold)?, inputs.v())
}

/// Unnormalized `(T + λ tr(T) I) V`. The product flavors are evaluated as
/// `T V + λ tr(T) V` without forming `T`.
pub fn tensor_attention_residual<S: Scalar>(inputs: &AttnInputs<S>, cfg: &TensorOpConfig, res: &ResidualSpec) -> Result<DenseMatrix<S>> {
    let (tv, tr) = if cfg.hadamard {
        let t = build_tensor_operator(inputs.q(), inputs.k(), cfg)?;
        (matmul(&t, inputs.v())?, trace(&t)?.re())
    } else {
        (
            factorized_apply(inputs.q(), inputs.k(), cfg.side, inputs.v())?,
            factorized_trace(inputs.q(), inputs.k())?,
        )
    };
    tv.add(&inputs.v().scale(S::from_real(res.lambda() * tr))?)
}
