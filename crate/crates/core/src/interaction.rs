//! Tensor interaction: the `d x d` channel-space operator built from
//! `B = Qᴴ K`, applied to `Vᵀ`. Its size does not depend on the token count.

use crate::baselines::AttnInputs;
use crate::dense::{gemm, matmul, trace, DenseMatrix, Trans};
use crate::error::{Error, Normalizer, Result};
use crate::scalar::Scalar;
use crate::tensor_attention::{Side, TRACE_EPSILON_PER_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OutputOrientation {
    /// `d x n`, literally `𝕋 Vᵀ / tr(𝕋)`.
    AsWritten,
    /// `n x d`, the transpose of the above.
    #[default]
    TransposedBack,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InteractionConfig {
    pub side: Side,
    pub hadamard: bool,
    pub output_orientation: OutputOrientation,
    /// Smallest admissible trace; `None` means `1e-12 · d`.
    pub trace_epsilon: Option<f64>,
}

impl InteractionConfig {
    pub fn side(side: Side) -> Self {
        Self { side, ..Self::default() }
    }

    fn threshold(&self, d: usize) -> Result<f64> {
        match self.trace_epsilon {
            None => Ok(TRACE_EPSILON_PER_TOKEN * d as f64),
            Some(eps) if eps > 0.0 && eps.is_finite() => Ok(eps),
            Some(eps) => Err(Error::InvalidConfig {
                field: "trace_epsilon",
                reason: format!("{eps} is not a positive finite number"),
            }),
        }
    }
}

/// `B Bᴴ` (Q side), `Bᴴ B` (K side) or `B[i,j] · conj(B[j,i])` (Hadamard) with `B = Qᴴ K`.
pub fn build_interaction_operator<S: Scalar>(q: &DenseMatrix<S>, k: &DenseMatrix<S>, cfg: &InteractionConfig) -> Result<DenseMatrix<S>> {
    if q.shape() != k.shape() {
        return Err(Error::DimensionMismatch {
            op: "build_interaction_operator",
            left: q.shape(),
            right: k.shape(),
        });
    }
    let b = gemm(q, k, Trans::ConjTrans, Trans::No)?;
    if cfg.hadamard {
        let d = b.rows();
        return DenseMatrix::from_fn(d, d, |i, j| b.get(i, j) * b.get(j, i).conj());
    }
    match cfg.side {
        Side::QSide => gemm(&b, &b, Trans::No, Trans::ConjTrans),
        Side::KSide => gemm(&b, &b, Trans::ConjTrans, Trans::No),
    }
}

/// `tr(𝕋)⁻¹ 𝕋 Vᵀ`, oriented per `cfg`. Requires `d_v = d`.
pub fn tensor_interaction<S: Scalar>(inputs: &AttnInputs<S>, cfg: &InteractionConfig) -> Result<DenseMatrix<S>> {
    let d = inputs.d();
    if inputs.d_v() != d {
        return Err(Error::DvMismatch { d, d_v: inputs.d_v() });
    }
    let threshold = cfg.threshold(d)?;
    let op = build_interaction_operator(inputs.q(), inputs.k(), cfg)?;
    let value = trace(&op)?.re();
    if !(value >= threshold) {
        return Err(Error::DegenerateNormalizer {
            which: Normalizer::Trace { value },
            threshold,
        });
    }
    let scaled = op.scale(S::from_real(1.0 / value))?;
    match cfg.output_orientation {
        OutputOrientation::AsWritten => matmul(&scaled, &inputs.v().transpose()),
        // (𝕋̂ Vᵀ)ᵀ = V 𝕋̂ᵀ
        OutputOrientation::TransposedBack => gemm(inputs.v(), &scaled.transpose(), Trans::No, Trans::No),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{seeded_rng, uniform_matrix};

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn running() -> (DenseMatrix, DenseMatrix, DenseMatrix) {
        (
            m(&[&[1.0, 0.0], &[1.0, 1.0]]),
            m(&[&[1.0, 1.0], &[0.0, 1.0]]),
            m(&[&[1.0, 2.0], &[3.0, 4.0]]),
        )
    }

    #[test]
    fn operator_examples() {
        let i2 = DenseMatrix::<f64>::identity(2);
        assert_eq!(build_interaction_operator(&i2, &i2, &InteractionConfig::default()).unwrap(), i2);
        let (q, k, _) = running();
        let t = build_interaction_operator(&q, &k, &InteractionConfig::default()).unwrap();
        assert_eq!(t, m(&[&[5.0, 2.0], &[2.0, 1.0]]));
        // B = [[1,2],[0,1]]: Bᵀ B = [[1,2],[2,5]]
        let tk = build_interaction_operator(&q, &k, &InteractionConfig::side(Side::KSide)).unwrap();
        assert_eq!(tk, m(&[&[1.0, 2.0], &[2.0, 5.0]]));
        let z = DenseMatrix::<f64>::zeros(2, 2);
        assert_eq!(build_interaction_operator(&z, &k, &InteractionConfig::default()).unwrap(), z);
    }

    #[test]
    fn interaction_examples() {
        let (q, k, v) = running();
        let i2 = DenseMatrix::<f64>::identity(2);
        let literal = InteractionConfig {
            output_orientation: OutputOrientation::AsWritten,
            ..InteractionConfig::default()
        };
        let trivial = AttnInputs::new(i2.clone(), i2, v.clone()).unwrap();
        assert_eq!(tensor_interaction(&trivial, &literal).unwrap(), m(&[&[0.5, 1.5], &[1.0, 2.0]]));
        assert_eq!(
            tensor_interaction(&trivial, &InteractionConfig::default()).unwrap(),
            v.scale(0.5).unwrap()
        );

        let inputs = AttnInputs::new(q, k, v.clone()).unwrap();
        let out = tensor_interaction(&inputs, &literal).unwrap();
        let expected = matmul(&m(&[&[5.0, 2.0], &[2.0, 1.0]]), &v.transpose())
            .unwrap()
            .scale(1.0 / 6.0)
            .unwrap();
        assert!(out.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn interaction_errors() {
        let (q, k, _) = running();
        let wide_v = DenseMatrix::zeros(2, 3);
        let inputs = AttnInputs::new(q, k.clone(), wide_v).unwrap();
        assert_eq!(
            tensor_interaction(&inputs, &InteractionConfig::default()).unwrap_err(),
            Error::DvMismatch { d: 2, d_v: 3 }
        );
        let zero = AttnInputs::new(DenseMatrix::zeros(2, 2), k, DenseMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            tensor_interaction(&zero, &InteractionConfig::default()),
            Err(Error::DegenerateNormalizer { .. })
        ));
    }

    #[test]
    fn operator_size_is_independent_of_n() {
        let mut rng = seeded_rng(3);
        for n in [1, 5, 50, 500] {
            let q = uniform_matrix(&mut rng, n, 4, -1.0, 1.0);
            let k = uniform_matrix(&mut rng, n, 4, -1.0, 1.0);
            assert_eq!(
                build_interaction_operator(&q, &k, &InteractionConfig::default()).unwrap().shape(),
                (4, 4)
            );
        }
    }

    #[test]
    fn hadamard_variant_is_symmetric_with_nonnegative_diagonal() {
        let mut rng = seeded_rng(4);
        let q = uniform_matrix(&mut rng, 9, 5, -1.0, 1.0);
        let k = uniform_matrix(&mut rng, 9, 5, -1.0, 1.0);
        let cfg = InteractionConfig {
            hadamard: true,
            ..InteractionConfig::default()
        };
        let t = build_interaction_operator(&q, &k, &cfg).unwrap();
        assert_eq!(t.hermitian_deviation(), 0.0);
        assert!(t.diagonal().iter().all(|&x| x >= 0.0));
    }
}
