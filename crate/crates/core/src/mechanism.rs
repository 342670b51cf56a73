//! A closed set of attention mechanisms addressable by a string id.
//!
//! Ids are a base name followed by optional `:`-separated modifiers, e.g.
//! `tensor_attention_naive:k:hadamard:row` or `tensor_attention_residual:lambda=0.5`.
//! Hyphens and underscores are interchangeable.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{linear_kernel_attention, softmax_attention, AttnInputs, KernelSpec};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::expm::{ExpmMethod, ExpmSpec};
use crate::interaction::{tensor_interaction, InteractionConfig, OutputOrientation};
use crate::tensor_attention::{
    tensor_attention_elem_exp, tensor_attention_expm, tensor_attention_linear_normalized, tensor_attention_masked, tensor_attention_naive,
    tensor_attention_relu, tensor_attention_residual, Normalization, ResidualSpec, Side, TensorOpConfig,
};

pub const DEFAULT_RESIDUAL_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    Softmax,
    LinearKernel(KernelSpec),
    TensorNaive(TensorOpConfig),
    TensorLinear(TensorOpConfig),
    TensorRelu(TensorOpConfig),
    TensorElemExp(TensorOpConfig),
    TensorExpm(TensorOpConfig, ExpmSpec),
    TensorMasked(TensorOpConfig),
    TensorResidual(TensorOpConfig, ResidualSpec),
    Interaction(InteractionConfig),
}

impl Mechanism {
    pub fn apply(&self, inputs: &AttnInputs<f64>) -> Result<DenseMatrix<f64>> {
        match self {
            Mechanism::Softmax => softmax_attention(inputs),
            Mechanism::LinearKernel(spec) => linear_kernel_attention(inputs, spec),
            Mechanism::TensorNaive(cfg) => tensor_attention_naive(inputs, cfg),
            Mechanism::TensorLinear(cfg) => tensor_attention_linear_normalized(inputs, cfg),
            Mechanism::TensorRelu(cfg) => tensor_attention_relu(inputs, cfg),
            Mechanism::TensorElemExp(cfg) => tensor_attention_elem_exp(inputs, cfg),
            Mechanism::TensorExpm(cfg, spec) => tensor_attention_expm(inputs, cfg, spec),
            Mechanism::TensorMasked(cfg) => tensor_attention_masked(inputs, cfg),
            Mechanism::TensorResidual(cfg, res) => tensor_attention_residual(inputs, cfg, res),
            Mechanism::Interaction(cfg) => tensor_interaction(inputs, cfg),
        }
    }

    /// True for the tensor attention and tensor interaction families.
    pub fn is_tensor(&self) -> bool {
        !matches!(self, Mechanism::Softmax | Mechanism::LinearKernel(_))
    }

    /// One representative of every family and every operator flavor.
    pub fn catalog() -> Vec<Mechanism> {
        [
            "softmax_attention",
            "linear_kernel_attention",
            "tensor_attention_naive",
            "tensor_attention_naive:k",
            "tensor_attention_naive:hadamard",
            "tensor_attention_naive:diag",
            "tensor_attention_naive:k:diag",
            "tensor_attention_linear",
            "tensor_attention_linear:k",
            "tensor_attention_linear:diag",
            "tensor_attention_relu",
            "tensor_attention_relu:row",
            "tensor_attention_elem_exp",
            "tensor_attention_expm",
            "tensor_attention_expm:taylor",
            "tensor_attention_masked",
            "tensor_attention_residual",
            "tensor_attention_residual:k",
            "tensor_interaction",
            "tensor_interaction:k",
            "tensor_interaction:hadamard",
        ]
        .iter()
        .map(|id| id.parse().expect("catalog ids parse"))
        .collect()
    }
}

const BASE_NAMES: &[&str] = &[
    "softmax_attention",
    "linear_kernel_attention",
    "tensor_attention_naive",
    "tensor_attention_linear",
    "tensor_attention_relu",
    "tensor_attention_elem_exp",
    "tensor_attention_expm",
    "tensor_attention_masked",
    "tensor_attention_residual",
    "tensor_interaction",
];

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_lowercase().replace('-', "_");
        let mut parts = normalized.split(':');
        let base = parts.next().unwrap_or_default();
        let base = match base {
            "softmax" => "softmax_attention",
            "linear_kernel" => "linear_kernel_attention",
            other => other,
        };
        if !BASE_NAMES.contains(&base) {
            return Err(Error::UnknownVariant(s.to_string()));
        }

        let mut cfg = TensorOpConfig::default();
        let mut expm = ExpmSpec::default();
        let mut lambda = DEFAULT_RESIDUAL_LAMBDA;
        let mut as_written = false;
        for modifier in parts {
            match modifier {
                "q" => cfg.side = Side::QSide,
                "k" => cfg.side = Side::KSide,
                "hadamard" => cfg.hadamard = true,
                "trace" => cfg.normalization = Normalization::Trace,
                "diag" => cfg.normalization = Normalization::Diag,
                "row" => cfg.normalization = Normalization::Row,
                "taylor" => expm = ExpmSpec::taylor(30),
                "pade" => expm = ExpmSpec::pade(6, 6),
                "as_written" => as_written = true,
                m if m.starts_with("lambda=") => {
                    lambda = m["lambda=".len()..].parse().map_err(|_| Error::UnknownVariant(s.to_string()))?;
                }
                _ => return Err(Error::UnknownVariant(s.to_string())),
            }
        }

        let untouched = cfg == TensorOpConfig::default();
        let mechanism = match base {
            "softmax_attention" if untouched => Mechanism::Softmax,
            "linear_kernel_attention" if untouched => Mechanism::LinearKernel(KernelSpec::default()),
            "tensor_attention_naive" => Mechanism::TensorNaive(cfg),
            "tensor_attention_linear" if !cfg.hadamard => Mechanism::TensorLinear(cfg),
            "tensor_attention_relu" => Mechanism::TensorRelu(cfg),
            "tensor_attention_elem_exp" => Mechanism::TensorElemExp(cfg),
            "tensor_attention_expm" => Mechanism::TensorExpm(cfg, expm),
            "tensor_attention_masked" => Mechanism::TensorMasked(cfg),
            "tensor_attention_residual" => Mechanism::TensorResidual(cfg, ResidualSpec::new(lambda)?),
            "tensor_interaction" if cfg.normalization == Normalization::Trace => Mechanism::Interaction(InteractionConfig {
                side: cfg.side,
                hadamard: cfg.hadamard,
                output_orientation: if as_written {
                    OutputOrientation::AsWritten
                } else {
                    OutputOrientation::TransposedBack
                },
                trace_epsilon: None,
            }),
            _ => return Err(Error::UnknownVariant(s.to_string())),
        };
        Ok(mechanism)
    }
}

fn write_cfg(f: &mut fmt::Formatter<'_>, cfg: &TensorOpConfig) -> fmt::Result {
    if cfg.side == Side::KSide {
        f.write_str(":k")?;
    }
    if cfg.hadamard {
        f.write_str(":hadamard")?;
    }
    match cfg.normalization {
        Normalization::Trace => Ok(()),
        Normalization::Diag => f.write_str(":diag"),
        Normalization::Row => f.write_str(":row"),
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Softmax => f.write_str("softmax_attention"),
            Mechanism::LinearKernel(_) => f.write_str("linear_kernel_attention"),
            Mechanism::TensorNaive(cfg) => {
                f.write_str("tensor_attention_naive")?;
                write_cfg(f, cfg)
            }
            Mechanism::TensorLinear(cfg) => {
                f.write_str("tensor_attention_linear")?;
                write_cfg(f, cfg)
            }
            Mechanism::TensorRelu(cfg) => {
                f.write_str("tensor_attention_relu")?;
                write_cfg(f, cfg)
            }
            Mechanism::TensorElemExp(cfg) => {
                f.write_str("tensor_attention_elem_exp")?;
                write_cfg(f, cfg)
            }
            Mechanism::TensorExpm(cfg, spec) => {
                f.write_str("tensor_attention_expm")?;
                write_cfg(f, cfg)?;
                match spec.method {
                    ExpmMethod::Taylor { .. } => f.write_str(":taylor"),
                    ExpmMethod::Pade { .. } => Ok(()),
                }
            }
            Mechanism::TensorMasked(cfg) => {
                f.write_str("tensor_attention_masked")?;
                write_cfg(f, cfg)
            }
            Mechanism::TensorResidual(cfg, res) => {
                f.write_str("tensor_attention_residual")?;
                write_cfg(f, cfg)?;
                if res.lambda() != DEFAULT_RESIDUAL_LAMBDA {
                    write!(f, ":lambda={}", res.lambda())?;
                }
                Ok(())
            }
            Mechanism::Interaction(cfg) => {
                f.write_str("tensor_interaction")?;
                if cfg.side == Side::KSide {
                    f.write_str(":k")?;
                }
                if cfg.hadamard {
                    f.write_str(":hadamard")?;
                }
                if cfg.output_orientation == OutputOrientation::AsWritten {
                    f.write_str(":as_written")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for m in Mechanism::catalog() {
            let id = m.to_string();
            assert_eq!(id.parse::<Mechanism>().unwrap(), m, "{id}");
        }
        let odd: Mechanism = "tensor-attention-residual:k:lambda=0.25".parse().unwrap();
        assert_eq!(odd.to_string(), "tensor_attention_residual:k:lambda=0.25");
    }

    #[test]
    fn aliases_and_rejections() {
        assert_eq!("softmax".parse::<Mechanism>().unwrap(), Mechanism::Softmax);
        assert!(matches!(
            "tensor-interaction".parse::<Mechanism>().unwrap(),
            Mechanism::Interaction(_)
        ));
        for bad in [
            "nope",
            "softmax:k",
            "tensor_attention_linear:hadamard",
            "tensor_interaction:row",
            "tensor_attention_naive:bogus",
            "tensor_attention_residual:lambda=-1",
        ] {
            assert!(bad.parse::<Mechanism>().is_err(), "{bad}");
        }
    }

    #[test]
    fn every_catalog_entry_runs() {
        let inputs = AttnInputs::random(5, 4, 4, 0).unwrap();
        for m in Mechanism::catalog() {
            let out = m.apply(&inputs);
            assert!(out.is_ok(), "{m}: {out:?}");
            assert_eq!(out.unwrap().shape(), (5, 4), "{m}");
        }
    }
}
