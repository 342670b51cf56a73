//! Brute-force references for the identities the fast paths rely on.
//!
//! Everything here works directly on row-major entry slices with explicit
//! index loops and does not call into the fast kernels it is used to check.

use crate::baselines::AttnInputs;
use crate::dense::DenseMatrix;
use crate::error::{Error, Normalizer, Result};
use crate::interaction::OutputOrientation;
use crate::mechanism::Mechanism;
use crate::scalar::Scalar;
use crate::tensor_attention::{Normalization, Side, TensorOpConfig};

/// Largest `rows * cols` accepted by [`kron_vec_check`].
pub const KRON_CHECK_MAX_ELEMENTS: usize = 64;
/// Largest token count accepted by [`naive_reference`].
pub const NAIVE_MAX_TOKENS: usize = 256;
/// Tolerance used by the Kronecker and trace identity reports.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// One named identity with its measured deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCheck {
    pub fn new(name: impl Into<String>, max_deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
        }
    }
}

/// Vectorization convention fed to [`kron_vec_check_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecConvention {
    ColumnStacking,
    /// Wrong on purpose: the bijection check must reject it.
    RowStacking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KronVecReport {
    pub checks: Vec<IdentityCheck>,
}

impl KronVecReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().map(|c| c.max_deviation).fold(0.0, f64::max)
    }
}

fn at<S: Scalar>(m: &DenseMatrix<S>, i: usize, j: usize) -> S {
    m.data()[i * m.cols() + j]
}

fn vec_of(m: &DenseMatrix<f64>, convention: VecConvention) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            let idx = match convention {
                VecConvention::ColumnStacking => j * r + i,
                VecConvention::RowStacking => i * c + j,
            };
            out[idx] = at(m, i, j);
        }
    }
    out
}

fn product_qkt(q: &DenseMatrix<f64>, k: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let (n, d) = q.shape();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for c in 0..d {
                acc += at(q, i, c) * at(k, j, c);
            }
            out[i * n + j] = acc;
        }
    }
    DenseMatrix::from_raw(n, n, out)
}

/// Checks `X ⊗ Y` against `vec(X) vec(Y)ᵀ`: equal entry multisets, and
/// entry `(i p + k, j q + l)` of the Kronecker product equals entry
/// `(j m + i, l p + k)` of the outer product (`X` is `m x n`, `Y` is `p x q`).
fn kron_outer_checks(label: &str, x: &DenseMatrix<f64>, y: &DenseMatrix<f64>, convention: VecConvention) -> Vec<IdentityCheck> {
    let (m, n) = x.shape();
    let (p, q) = y.shape();
    let vx = vec_of(x, convention);
    let vy = vec_of(y, convention);

    let mut kron_entries = Vec::with_capacity(m * n * p * q);
    let mut outer_entries = Vec::with_capacity(m * n * p * q);
    let mut bijection_dev: f64 = 0.0;
    for i in 0..m {
        for j in 0..n {
            for k in 0..p {
                for l in 0..q {
                    let kron_entry = at(x, i, j) * at(y, k, l);
                    let outer_entry = vx[j * m + i] * vy[l * p + k];
                    bijection_dev = bijection_dev.max((kron_entry - outer_entry).abs());
                    kron_entries.push(kron_entry);
                }
            }
        }
    }
    for a in &vx {
        for b in &vy {
            outer_entries.push(a * b);
        }
    }
    kron_entries.sort_by(f64::total_cmp);
    outer_entries.sort_by(f64::total_cmp);
    let multiset_dev = kron_entries
        .iter()
        .zip(&outer_entries)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    vec![
        IdentityCheck::new(format!("{label}: entry multiset"), multiset_dev, IDENTITY_TOLERANCE),
        IdentityCheck::new(format!("{label}: index bijection"), bijection_dev, IDENTITY_TOLERANCE),
    ]
}

/// Kronecker / vectorization identities under the column-stacking convention.
pub fn kron_vec_check(q: &DenseMatrix<f64>, k: &DenseMatrix<f64>) -> Result<KronVecReport> {
    kron_vec_check_with(q, k, VecConvention::ColumnStacking)
}

/// [`kron_vec_check`] with the vectorization convention under test made explicit.
///
/// Checks (a) `Q ⊗ K ≅ vec(Q) vec(K)ᵀ`, (b) `M ⊗ M ≅ vec(M) vec(M)ᵀ` for
/// `M = Q Kᵀ`, and (c) `tr(M ⊗ M) = tr(M)²` together with the partial trace
/// `Tr_W(M ⊗ M) = tr(M) · M`.
pub fn kron_vec_check_with(q: &DenseMatrix<f64>, k: &DenseMatrix<f64>, convention: VecConvention) -> Result<KronVecReport> {
    for m in [q, k] {
        let elements = m.rows() * m.cols();
        if elements > KRON_CHECK_MAX_ELEMENTS {
            return Err(Error::ShapeTooLarge {
                elements,
                limit: KRON_CHECK_MAX_ELEMENTS,
            });
        }
    }
    if q.shape() != k.shape() {
        return Err(Error::DimensionMismatch {
            op: "kron_vec_check",
            left: q.shape(),
            right: k.shape(),
        });
    }

    let mut checks = kron_outer_checks("Q⊗K ≅ vec(Q)vec(K)ᵀ", q, k, convention);
    let m = product_qkt(q, k);
    checks.extend(kron_outer_checks("(QKᵀ)⊗(QKᵀ) ≅ vec(QKᵀ)vec(QKᵀ)ᵀ", &m, &m, convention));

    // (c) traces of M ⊗ M, entry M[i,j] M[k,l] at (i n + k, j n + l)
    let n = m.rows();
    let tr_m: f64 = (0..n).map(|i| at(&m, i, i)).sum();
    // M ⊗ M flattened row-major with side n²
    let side = n * n;
    let mut big = vec![0.0; side * side];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    big[(i * n + k) * side + (j * n + l)] = at(&m, i, j) * at(&m, k, l);
                }
            }
        }
    }
    let full_trace: f64 = (0..side).map(|r| big[r * side + r]).sum();
    let scale = tr_m.abs().powi(2).max(1.0);
    checks.push(IdentityCheck::new(
        "tr((QKᵀ)⊗(QKᵀ)) = tr(QKᵀ)²",
        (full_trace - tr_m * tr_m).abs() / scale,
        IDENTITY_TOLERANCE,
    ));

    // trace out W by index contraction
    let mut reduced = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            reduced[i * n + j] = (0..n).map(|k| big[(i * n + k) * side + (j * n + k)]).sum();
        }
    }
    let mut pt_dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            pt_dev = pt_dev.max((reduced[i * n + j] - tr_m * at(&m, i, j)).abs());
        }
    }
    checks.push(IdentityCheck::new(
        "Tr_W((QKᵀ)⊗(QKᵀ)) = tr(QKᵀ)·QKᵀ",
        pt_dev / scale,
        IDENTITY_TOLERANCE,
    ));
    Ok(KronVecReport { checks })
}

/// `tr(AB)`, `sum(A ⊙ B)` and `sum(A ⊙ Bᵀ)` for square `A`, `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceIdentityReport {
    pub trace_ab: f64,
    pub hadamard_sum: f64,
    pub hadamard_transpose_sum: f64,
    pub b_symmetric: bool,
    /// `tr(AB) = sum(A ⊙ Bᵀ)`, which holds for all square `A`, `B`.
    pub general_holds: bool,
    /// `tr(AB) = sum(A ⊙ B)`; only evaluated when `B` is symmetric.
    pub symmetric_holds: Option<bool>,
}

pub fn trace_identity_report(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> Result<TraceIdentityReport> {
    for m in [a, b] {
        if !m.is_square() {
            return Err(Error::NotSquare {
                op: "trace_identity_report",
                rows: m.rows(),
                cols: m.cols(),
            });
        }
    }
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op: "trace_identity_report",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let n = a.rows();
    let mut trace_ab = 0.0;
    let mut hadamard_sum = 0.0;
    let mut hadamard_transpose_sum = 0.0;
    let mut b_symmetric = true;
    let mut magnitude: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace_ab += at(a, i, j) * at(b, j, i);
            hadamard_sum += at(a, i, j) * at(b, i, j);
            hadamard_transpose_sum += at(a, i, j) * at(b, j, i);
            magnitude += (at(a, i, j) * at(b, j, i)).abs();
            if at(b, i, j) != at(b, j, i) {
                b_symmetric = false;
            }
        }
    }
    let close = |x: f64, y: f64| (x - y).abs() <= IDENTITY_TOLERANCE * magnitude.max(1.0);
    Ok(TraceIdentityReport {
        trace_ab,
        hadamard_sum,
        hadamard_transpose_sum,
        b_symmetric,
        general_holds: close(trace_ab, hadamard_transpose_sum),
        symmetric_holds: b_symmetric.then(|| close(trace_ab, hadamard_sum)),
    })
}

/// Loop-only tensor operator: product flavors as `Σ_l A[i,l] conj(A[j,l])`
/// (Q side) or `Σ_l conj(A[l,i]) A[l,j]` (K side), Hadamard as `A[i,j] conj(A[j,i])`.
pub fn naive_tensor_operator<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, side: Side, hadamard: bool) -> Result<DenseMatrix<S>> {
    if q.shape() != k.shape() {
        return Err(Error::DimensionMismatch {
            op: "naive_tensor_operator",
            left: q.shape(),
            right: k.shape(),
        });
    }
    let (n, d) = q.shape();
    let mut a = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = S::zero();
            for c in 0..d {
                acc += at(q, i, c) * at(k, j, c).conj();
            }
            a[i * n + j] = acc;
        }
    }
    let mut t = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            t[i * n + j] = if hadamard {
                a[i * n + j] * a[j * n + i].conj()
            } else {
                let mut acc = S::zero();
                for l in 0..n {
                    acc += match side {
                        Side::QSide => a[i * n + l] * a[j * n + l].conj(),
                        Side::KSide => a[l * n + i].conj() * a[l * n + j],
                    };
                }
                acc
            };
        }
    }
    DenseMatrix::from_raw(n, n, t).finite("naive_tensor_operator")
}

fn naive_normalize(t: &mut [f64], n: usize, normalization: Normalization, threshold: f64) -> Result<()> {
    let degenerate = |which| Error::DegenerateNormalizer { which, threshold };
    match normalization {
        Normalization::Trace => {
            let value: f64 = (0..n).map(|i| t[i * n + i]).sum();
            if !(value >= threshold) {
                return Err(degenerate(Normalizer::Trace { value }));
            }
            t.iter_mut().for_each(|x| *x /= value);
        }
        Normalization::Diag | Normalization::Row => {
            let mut divisors = Vec::with_capacity(n);
            for i in 0..n {
                let value = if normalization == Normalization::Diag {
                    t[i * n + i]
                } else {
                    (0..n).map(|j| t[i * n + j]).sum()
                };
                if !(value >= threshold) {
                    return Err(degenerate(if normalization == Normalization::Diag {
                        Normalizer::Diagonal { index: i, value }
                    } else {
                        Normalizer::RowSum { index: i, value }
                    }));
                }
                divisors.push(value);
            }
            for i in 0..n {
                for j in 0..n {
                    t[i * n + j] /= divisors[i];
                }
            }
        }
    }
    Ok(())
}

fn apply_to(t: &[f64], n: usize, v: &DenseMatrix<f64>) -> Result<DenseMatrix<f64>> {
    let dv = v.cols();
    let mut out = vec![0.0; n * dv];
    for i in 0..n {
        for j in 0..n {
            for c in 0..dv {
                out[i * dv + c] += t[i * n + j] * at(v, j, c);
            }
        }
    }
    DenseMatrix::from_raw(n, dv, out).finite("naive_reference")
}

fn tensor_matrix(inputs: &AttnInputs<f64>, cfg: &TensorOpConfig) -> Result<Vec<f64>> {
    Ok(naive_tensor_operator(inputs.q(), inputs.k(), cfg.side, cfg.hadamard)?.into_data())
}

/// Double/triple-loop evaluation of `mechanism` with no algebraic shortcuts.
pub fn naive_reference(inputs: &AttnInputs<f64>, mechanism: &Mechanism) -> Result<DenseMatrix<f64>> {
    let (n, d) = (inputs.n(), inputs.d());
    if n > NAIVE_MAX_TOKENS {
        return Err(Error::ShapeTooLarge {
            elements: n,
            limit: NAIVE_MAX_TOKENS,
        });
    }
    let (q, k, v) = (inputs.q(), inputs.k(), inputs.v());
    match mechanism {
        Mechanism::Softmax => {
            let mut w = vec![0.0; n * n];
            for i in 0..n {
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    let mut s = 0.0;
                    for c in 0..d {
                        s += at(q, i, c) * at(k, j, c);
                    }
                    w[i * n + j] = s / (d as f64).sqrt();
                    max = max.max(w[i * n + j]);
                }
                let mut z = 0.0;
                for j in 0..n {
                    w[i * n + j] = (w[i * n + j] - max).exp();
                    z += w[i * n + j];
                }
                for j in 0..n {
                    w[i * n + j] /= z;
                }
            }
            apply_to(&w, n, v)
        }
        Mechanism::LinearKernel(spec) => {
            let norm = |m: &DenseMatrix<f64>, i: usize| (0..d).map(|c| at(m, i, c).powi(2)).sum::<f64>().sqrt().max(spec.epsilon);
            let mut w = vec![0.0; n * n];
            for i in 0..n {
                let mut z = 0.0;
                for j in 0..n {
                    let mut dot = 0.0;
                    for c in 0..d {
                        dot += at(q, i, c) * at(k, j, c);
                    }
                    w[i * n + j] = 1.0 + dot / (norm(q, i) * norm(k, j));
                    z += w[i * n + j];
                }
                if z < spec.epsilon {
                    return Err(Error::DegenerateDenominator { row: i, value: z });
                }
                for j in 0..n {
                    w[i * n + j] /= z;
                }
            }
            apply_to(&w, n, v)
        }
        Mechanism::TensorNaive(cfg) | Mechanism::TensorLinear(cfg) => {
            let mut t = tensor_matrix(inputs, cfg)?;
            naive_normalize(&mut t, n, cfg.normalization, cfg.threshold(n)?)?;
            apply_to(&t, n, v)
        }
        Mechanism::TensorRelu(cfg) => {
            let mut t = tensor_matrix(inputs, cfg)?;
            t.iter_mut().for_each(|x| *x = x.max(0.0));
            naive_normalize(&mut t, n, cfg.normalization, cfg.threshold(n)?)?;
            apply_to(&t, n, v)
        }
        Mechanism::TensorElemExp(cfg) => {
            let mut t = tensor_matrix(inputs, cfg)?;
            naive_normalize(&mut t, n, Normalization::Trace, cfg.threshold(n)?)?;
            t.iter_mut().for_each(|x| *x = x.exp());
            apply_to(&t, n, v)
        }
        Mechanism::TensorExpm(cfg, _) => {
            let mut t = tensor_matrix(inputs, cfg)?;
            naive_normalize(&mut t, n, Normalization::Trace, cfg.threshold(n)?)?;
            apply_to(&series_exp(&t, n), n, v)
        }
        Mechanism::TensorMasked(cfg) => {
            let mut t = tensor_matrix(inputs, cfg)?;
            for i in 0..n {
                for j in (i + 1)..n {
                    t[i * n + j] = 0.0;
                }
            }
            naive_normalize(&mut t, n, cfg.normalization, cfg.threshold(n)?)?;
            apply_to(&t, n, v)
        }
        Mechanism::TensorResidual(cfg, res) => {
            let mut t = tensor_matrix(inputs, cfg)?;
            let tr: f64 = (0..n).map(|i| t[i * n + i]).sum();
            for i in 0..n {
                t[i * n + i] += res.lambda() * tr;
            }
            apply_to(&t, n, v)
        }
        Mechanism::Interaction(cfg) => {
            if inputs.d_v() != d {
                return Err(Error::DvMismatch { d, d_v: inputs.d_v() });
            }
            let mut b = vec![0.0; d * d];
            for r in 0..d {
                for c in 0..d {
                    for i in 0..n {
                        b[r * d + c] += at(q, i, r) * at(k, i, c);
                    }
                }
            }
            let mut op = vec![0.0; d * d];
            for r in 0..d {
                for c in 0..d {
                    op[r * d + c] = if cfg.hadamard {
                        b[r * d + c] * b[c * d + r]
                    } else {
                        (0..d)
                            .map(|l| match cfg.side {
                                Side::QSide => b[r * d + l] * b[c * d + l],
                                Side::KSide => b[l * d + r] * b[l * d + c],
                            })
                            .sum()
                    };
                }
            }
            let tr: f64 = (0..d).map(|i| op[i * d + i]).sum();
            let threshold = cfg.trace_epsilon.unwrap_or(1e-12 * d as f64);
            if !(tr >= threshold) {
                return Err(Error::DegenerateNormalizer {
                    which: Normalizer::Trace { value: tr },
                    threshold,
                });
            }
            // (𝕋 Vᵀ)[r, i] = Σ_c 𝕋[r, c] V[i, c] / tr
            let mut out = vec![0.0; d * n];
            for r in 0..d {
                for i in 0..n {
                    out[r * n + i] = (0..d).map(|c| op[r * d + c] * at(v, i, c)).sum::<f64>() / tr;
                }
            }
            let literal = DenseMatrix::from_raw(d, n, out);
            Ok(match cfg.output_orientation {
                OutputOrientation::AsWritten => literal,
                OutputOrientation::TransposedBack => literal.transpose(),
            })
        }
    }
}

/// Parses `id` and evaluates [`naive_reference`].
pub fn naive_reference_by_id(inputs: &AttnInputs<f64>, id: &str) -> Result<DenseMatrix<f64>> {
    naive_reference(inputs, &id.parse()?)
}

/// Power series for `exp` of an `n x n` matrix with spectral radius at most one,
/// summed until terms drop below `1e-18`.
fn series_exp(t: &[f64], n: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n * n];
    let mut term = vec![0.0; n * n];
    for i in 0..n {
        sum[i * n + i] = 1.0;
        term[i * n + i] = 1.0;
    }
    for k in 1..200 {
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let x = term[i * n + l];
                for j in 0..n {
                    next[i * n + j] += x * t[l * n + j];
                }
            }
        }
        let mut largest: f64 = 0.0;
        for (s, x) in sum.iter_mut().zip(next.iter_mut()) {
            *x /= k as f64;
            *s += *x;
            largest = largest.max(x.abs());
        }
        term = next;
        if largest < 1e-18 {
            break;
        }
    }
    sum
}

/// Central-difference gradient of `uᵀ · mechanism(Q, K, V) · w` with respect
/// to `vec(Q)` (column-stacking order).
pub fn fd_probe(mechanism: &Mechanism, inputs: &AttnInputs<f64>, probe_u: &[f64], probe_w: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidConfig {
            field: "h",
            reason: format!("step {h} outside [1e-7, 1e-3]"),
        });
    }
    let probe = |q: DenseMatrix<f64>| -> Result<f64> {
        let out = mechanism.apply(&inputs.with_q(q)?)?;
        if probe_u.len() != out.rows() || probe_w.len() != out.cols() {
            return Err(Error::DimensionMismatch {
                op: "fd_probe",
                left: out.shape(),
                right: (probe_u.len(), probe_w.len()),
            });
        }
        let mut acc = 0.0;
        for i in 0..out.rows() {
            for j in 0..out.cols() {
                acc += probe_u[i] * at(&out, i, j) * probe_w[j];
            }
        }
        Ok(acc)
    };
    let (n, d) = inputs.q().shape();
    let base = inputs.q().data().to_vec();
    let mut grad = vec![0.0; n * d];
    for j in 0..d {
        for i in 0..n {
            let mut plus = base.clone();
            plus[i * d + j] += h;
            let mut minus = base.clone();
            minus[i * d + j] -= h;
            let f_plus = probe(DenseMatrix::from_vec(n, d, plus)?)?;
            let f_minus = probe(DenseMatrix::from_vec(n, d, minus)?)?;
            grad[j * n + i] = (f_plus - f_minus) / (2.0 * h);
        }
    }
    Ok(grad)
}
