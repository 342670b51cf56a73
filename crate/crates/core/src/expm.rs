//! Matrix exponential by truncated Taylor series or `[m/n]` Padé approximant,
//! with optional scaling and squaring.

use crate::dense::{matmul, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Condition estimate above which a Padé denominator counts as singular.
pub const MAX_DENOMINATOR_CONDITION: f64 = 1e12;

/// Default `‖A‖₁` bound below which no scaling is applied.
pub const DEFAULT_SCALING_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpmMethod {
    /// `Σ_{k=0}^{terms} A^k / k!`
    Taylor { terms: usize },
    /// Numerator degree `m`, denominator degree `n`.
    Pade { m: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpmSpec {
    pub method: ExpmMethod,
    /// When set, `A` is scaled by `2^-s` until `‖A‖₁ ≤ threshold` and the
    /// approximant is squared `s` times.
    pub scaling_threshold: Option<f64>,
}

impl ExpmSpec {
    pub fn taylor(terms: usize) -> Self {
        Self {
            method: ExpmMethod::Taylor { terms },
            scaling_threshold: Some(DEFAULT_SCALING_THRESHOLD),
        }
    }

    pub fn pade(m: usize, n: usize) -> Self {
        Self {
            method: ExpmMethod::Pade { m, n },
            scaling_threshold: Some(DEFAULT_SCALING_THRESHOLD),
        }
    }

    pub fn without_scaling(mut self) -> Self {
        self.scaling_threshold = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            ExpmMethod::Taylor { terms } if terms < 1 => {
                return Err(Error::InvalidConfig {
                    field: "taylor_terms",
                    reason: "must be at least 1".into(),
                })
            }
            ExpmMethod::Pade { m, n } if m < 1 || n < 1 => {
                return Err(Error::InvalidConfig {
                    field: "pade_degree",
                    reason: format!("[{m}/{n}] needs both degrees at least 1"),
                })
            }
            _ => {}
        }
        match self.scaling_threshold {
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::InvalidConfig {
                field: "scaling_threshold",
                reason: format!("{t} is not a positive finite number"),
            }),
            _ => Ok(()),
        }
    }
}

impl Default for ExpmSpec {
    fn default() -> Self {
        Self::pade(6, 6)
    }
}

fn require_square<S: Scalar>(a: &DenseMatrix<S>, op: &'static str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            op,
            rows: a.rows(),
            cols: a.cols(),
        })
    }
}

/// Matrix exponential as configured by `spec`.
pub fn expm<S: Scalar>(a: &DenseMatrix<S>, spec: &ExpmSpec) -> Result<DenseMatrix<S>> {
    spec.validate()?;
    require_square(a, "expm")?;

    let squarings = match spec.scaling_threshold {
        Some(threshold) => {
            let norm = a.one_norm();
            if norm > threshold {
                (norm / threshold).log2().ceil() as i32
            } else {
                0
            }
        }
        None => 0,
    };
    let scaled = if squarings > 0 {
        a.scale(S::from_real((-squarings as f64).exp2()))?
    } else {
        a.clone()
    };

    let mut result = match spec.method {
        ExpmMethod::Taylor { terms } => expm_taylor(&scaled, terms)?,
        ExpmMethod::Pade { m, n } => expm_pade(&scaled, m, n)?,
    };
    for _ in 0..squarings {
        result = matmul(&result, &result)?;
    }
    Ok(result)
}

/// Truncated series `Σ_{k=0}^{terms} A^k / k!`, evaluated as given with no scaling.
pub fn expm_taylor<S: Scalar>(a: &DenseMatrix<S>, terms: usize) -> Result<DenseMatrix<S>> {
    require_square(a, "expm_taylor")?;
    if terms < 1 {
        return Err(Error::InvalidConfig {
            field: "taylor_terms",
            reason: "must be at least 1".into(),
        });
    }
    let mut term = DenseMatrix::identity(a.rows());
    let mut sum = term.clone();
    for k in 1..=terms {
        term = matmul(&term, a)?.scale(S::from_real(1.0 / k as f64))?;
        sum = sum.add(&term)?;
    }
    Ok(sum)
}

/// Coefficients of the `[m/n]` Padé approximant of `exp(x)`:
/// numerator `Σ p_j x^j` and denominator `Σ q_j x^j`.
pub fn pade_coefficients(m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    // p_j = (m+n-j)! m! / ((m+n)! j! (m-j)!), q_j = (-1)^j (m+n-j)! n! / ((m+n)! j! (n-j)!)
    let series = |deg: usize, sign: f64| {
        let mut c = Vec::with_capacity(deg + 1);
        let mut v = 1.0;
        c.push(v);
        for j in 1..=deg {
            v *= sign * (deg - j + 1) as f64 / (j as f64 * (m + n - j + 1) as f64);
            c.push(v);
        }
        c
    };
    (series(m, 1.0), series(n, -1.0))
}

fn matrix_polynomial<S: Scalar>(powers: &[DenseMatrix<S>], coeffs: &[f64]) -> Result<DenseMatrix<S>> {
    let mut acc = powers[0].scale(S::from_real(coeffs[0]))?;
    for (power, &c) in powers.iter().zip(coeffs).skip(1) {
        acc = acc.add(&power.scale(S::from_real(c))?)?;
    }
    Ok(acc)
}

/// The `[m/n]` Padé approximant `Q(A)⁻¹ P(A)`, evaluated as given with no scaling.
///
/// `Q(A) X = P(A)` is solved by LU with partial pivoting; the denominator is
/// rejected when its 1-norm condition number exceeds [`MAX_DENOMINATOR_CONDITION`].
pub fn expm_pade<S: Scalar>(a: &DenseMatrix<S>, m: usize, n: usize) -> Result<DenseMatrix<S>> {
    require_square(a, "expm_pade")?;
    if m < 1 || n < 1 {
        return Err(Error::InvalidConfig {
            field: "pade_degree",
            reason: format!("[{m}/{n}] needs both degrees at least 1"),
        });
    }
    let (p, q) = pade_coefficients(m, n);
    let mut powers = vec![DenseMatrix::identity(a.rows()), a.clone()];
    while powers.len() <= m.max(n) {
        let next = matmul(powers.last().unwrap(), a)?;
        powers.push(next);
    }
    let numer = matrix_polynomial(&powers, &p)?;
    let denom = matrix_polynomial(&powers, &q)?;

    let lu = Lu::factor(&denom)?;
    let condition = denom.one_norm() * lu.inverse_one_norm();
    if !(condition <= MAX_DENOMINATOR_CONDITION) {
        return Err(Error::SingularDenominator { condition });
    }
    lu.solve(&numer)
}

/// LU factorization with partial pivoting, `P A = L U`, stored packed.
pub struct Lu<S> {
    n: usize,
    packed: Vec<S>,
    perm: Vec<usize>,
}

impl<S: Scalar> Lu<S> {
    /// Fails with [`Error::SingularDenominator`] on an exactly zero pivot.
    pub fn factor(a: &DenseMatrix<S>) -> Result<Self> {
        require_square(a, "lu")?;
        let n = a.rows();
        let mut lu = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| lu[x * n + col].modulus().total_cmp(&lu[y * n + col].modulus()))
                .unwrap();
            if lu[pivot * n + col].modulus() == 0.0 {
                return Err(Error::SingularDenominator { condition: f64::INFINITY });
            }
            if pivot != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot * n + j);
                }
                perm.swap(col, pivot);
            }
            let diag = lu[col * n + col];
            for r in (col + 1)..n {
                let factor = lu[r * n + col] / diag;
                lu[r * n + col] = factor;
                for j in (col + 1)..n {
                    let u = lu[col * n + j];
                    lu[r * n + j] -= factor * u;
                }
            }
        }
        Ok(Self { n, packed: lu, perm })
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
        let n = self.n;
        if b.rows() != n {
            return Err(Error::DimensionMismatch {
                op: "lu_solve",
                left: (n, n),
                right: b.shape(),
            });
        }
        let k = b.cols();
        let mut x: Vec<S> = Vec::with_capacity(n * k);
        for &p in &self.perm {
            x.extend_from_slice(b.row(p));
        }
        // forward substitution, unit lower triangle
        for i in 0..n {
            for p in 0..i {
                let l = self.packed[i * n + p];
                for j in 0..k {
                    let v = x[p * k + j];
                    x[i * k + j] -= l * v;
                }
            }
        }
        // back substitution
        for i in (0..n).rev() {
            for p in (i + 1)..n {
                let u = self.packed[i * n + p];
                for j in 0..k {
                    let v = x[p * k + j];
                    x[i * k + j] -= u * v;
                }
            }
            let d = self.packed[i * n + i];
            for j in 0..k {
                x[i * k + j] = x[i * k + j] / d;
            }
        }
        DenseMatrix::from_raw(n, k, x).finite("lu_solve")
    }

    /// `‖A⁻¹‖₁`, infinite if the solve overflows.
    pub fn inverse_one_norm(&self) -> f64 {
        self.solve(&DenseMatrix::identity(self.n))
            .map_or(f64::INFINITY, |inv| inv.one_norm())
    }
}
