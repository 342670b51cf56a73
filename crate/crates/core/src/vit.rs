//! Forward-only pre-LN vision transformer encoder with a pluggable attention
//! mechanism. Consumes already flattened patch vectors.

use crate::baselines::{multi_head, AttnInputs, MultiHeadSpec};
use crate::dense::{matmul, DenseMatrix};
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::sample::{checksum, seeded_rng, uniform_matrix, uniform_vector, SeededRng};

pub const LAYER_NORM_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed(pub u64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VitConfig {
    pub patch_dim: usize,
    pub d: usize,
    pub d_ff: usize,
    pub num_patches: usize,
    pub layers: usize,
    pub heads: usize,
    pub mechanism: Mechanism,
}

impl VitConfig {
    /// Softmax attention with a single head.
    pub fn new(patch_dim: usize, d: usize, d_ff: usize, num_patches: usize, layers: usize) -> Self {
        Self {
            patch_dim,
            d,
            d_ff,
            num_patches,
            layers,
            heads: 1,
            mechanism: Mechanism::Softmax,
        }
    }

    /// `d_ff = 4d`.
    pub fn with_default_mlp(patch_dim: usize, d: usize, num_patches: usize, layers: usize) -> Self {
        Self::new(patch_dim, d, 4 * d, num_patches, layers)
    }

    pub fn mechanism(mut self, mechanism: Mechanism) -> Self {
        self.mechanism = mechanism;
        self
    }

    pub fn heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("patch_dim", self.patch_dim),
            ("d", self.d),
            ("d_ff", self.d_ff),
            ("num_patches", self.num_patches),
            ("heads", self.heads),
        ] {
            if value == 0 {
                return Err(Error::InvalidConfig {
                    field,
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl LayerNorm {
    pub fn identity(d: usize) -> Self {
        Self {
            scale: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    pub fn apply(&self, x: &DenseMatrix<f64>) -> Result<DenseMatrix<f64>> {
        if x.cols() != self.scale.len() {
            return Err(Error::DimensionMismatch {
                op: "layer_norm",
                left: (x.rows(), self.scale.len()),
                right: x.shape(),
            });
        }
        let z = standardize_rows(x);
        DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| z.get(i, j) * self.scale[j] + self.shift[j])
    }
}

/// `(x - mean) / sqrt(var + ε)` per row, before scale and shift.
pub fn standardize_rows(x: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let d = x.cols() as f64;
    let mut out = x.clone().into_data();
    for row in out.chunks_mut(x.cols().max(1)) {
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + LAYER_NORM_EPSILON).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    DenseMatrix::from_raw(x.rows(), x.cols(), out)
}

/// Tanh approximation.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attention: MultiHeadSpec,
    pub ln2: LayerNorm,
    /// `d x d_ff`.
    pub w1: DenseMatrix<f64>,
    pub b1: Vec<f64>,
    /// `d_ff x d`.
    pub w2: DenseMatrix<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViTParams {
    pub config: VitConfig,
    /// `patch_dim x d`.
    pub e: DenseMatrix<f64>,
    /// `(N + 1) x d`.
    pub e_pos: DenseMatrix<f64>,
    pub x_class: Vec<f64>,
    pub layers: Vec<EncoderLayer>,
    pub final_ln: LayerNorm,
}

impl ViTParams {
    /// Hash of every parameter in a fixed order.
    pub fn checksum(&self) -> u64 {
        let mut all = Vec::new();
        all.extend_from_slice(self.e.data());
        all.extend_from_slice(self.e_pos.data());
        all.extend_from_slice(&self.x_class);
        for layer in &self.layers {
            for ln in [&layer.ln1, &layer.ln2] {
                all.extend_from_slice(&ln.scale);
                all.extend_from_slice(&ln.shift);
            }
            let mh = &layer.attention;
            for w in mh.w_q.iter().chain(&mh.w_k).chain(&mh.w_v) {
                all.extend_from_slice(w.data());
            }
            all.extend_from_slice(mh.w_o.data());
            all.extend_from_slice(layer.w1.data());
            all.extend_from_slice(&layer.b1);
            all.extend_from_slice(layer.w2.data());
            all.extend_from_slice(&layer.b2);
        }
        all.extend_from_slice(&self.final_ln.scale);
        all.extend_from_slice(&self.final_ln.shift);
        checksum(&all)
    }
}

/// Uniform `[-1/√d, 1/√d]` weights and biases; LayerNorm starts at scale 1, shift 0.
pub fn vit_init(config: &VitConfig, seed: RngSeed) -> Result<ViTParams> {
    config.validate()?;
    let d = config.d;
    let bound = 1.0 / (d as f64).sqrt();
    let mut rng = seeded_rng(seed.0);
    let mat = |rng: &mut SeededRng, r, c| uniform_matrix(rng, r, c, -bound, bound);

    let e = mat(&mut rng, config.patch_dim, d);
    let e_pos = mat(&mut rng, config.num_patches + 1, d);
    let x_class = uniform_vector(&mut rng, d, -bound, bound);
    let mut layers = Vec::with_capacity(config.layers);
    for _ in 0..config.layers {
        let (w_q, w_k, w_v, w_o) = (mat(&mut rng, d, d), mat(&mut rng, d, d), mat(&mut rng, d, d), mat(&mut rng, d, d));
        let attention = MultiHeadSpec::from_full(config.heads, &w_q, &w_k, &w_v, w_o, config.mechanism)?;
        layers.push(EncoderLayer {
            ln1: LayerNorm::identity(d),
            attention,
            ln2: LayerNorm::identity(d),
            w1: mat(&mut rng, d, config.d_ff),
            b1: uniform_vector(&mut rng, config.d_ff, -bound, bound),
            w2: mat(&mut rng, config.d_ff, d),
            b2: uniform_vector(&mut rng, d, -bound, bound),
        });
    }
    Ok(ViTParams {
        config: *config,
        e,
        e_pos,
        x_class,
        layers,
        final_ln: LayerNorm::identity(d),
    })
}

/// `[x_class; patches · E] + E_pos`, shape `(N + 1) x d`.
pub fn embed(params: &ViTParams, patches: &DenseMatrix<f64>) -> Result<DenseMatrix<f64>> {
    let cfg = &params.config;
    if patches.shape() != (cfg.num_patches, cfg.patch_dim) {
        return Err(Error::DimensionMismatch {
            op: "vit_forward",
            left: (cfg.num_patches, cfg.patch_dim),
            right: patches.shape(),
        });
    }
    let projected = matmul(patches, &params.e)?;
    let class = DenseMatrix::from_vec(1, cfg.d, params.x_class.clone())?;
    let mut rows = class.into_data();
    rows.extend_from_slice(projected.data());
    DenseMatrix::from_vec(cfg.num_patches + 1, cfg.d, rows)?.add(&params.e_pos)
}

/// `attend(LN₁(z)) + z`.
pub fn attention_sublayer<F>(z: &DenseMatrix<f64>, layer: &EncoderLayer, attend: F) -> Result<DenseMatrix<f64>>
where
    F: FnOnce(&DenseMatrix<f64>) -> Result<DenseMatrix<f64>>,
{
    attend(&layer.ln1.apply(z)?)?.add(z)
}

/// `MLP(LN₂(z')) + z'`.
pub fn mlp_sublayer(z: &DenseMatrix<f64>, layer: &EncoderLayer) -> Result<DenseMatrix<f64>> {
    let x = layer.ln2.apply(z)?;
    let hidden = matmul(&x, &layer.w1)?;
    let hidden = DenseMatrix::from_fn(hidden.rows(), hidden.cols(), |i, j| gelu(hidden.get(i, j) + layer.b1[j]))?;
    let out = matmul(&hidden, &layer.w2)?;
    DenseMatrix::from_fn(out.rows(), out.cols(), |i, j| out.get(i, j) + layer.b2[j] + z.get(i, j))
}

pub fn encoder_layer(z: &DenseMatrix<f64>, layer: &EncoderLayer) -> Result<DenseMatrix<f64>> {
    let z_prime = attention_sublayer(z, layer, |x| multi_head(&AttnInputs::self_attention(x.clone())?, &layer.attention))?;
    mlp_sublayer(&z_prime, layer)
}

/// Final LayerNorm of the class token after all encoder layers; length `d`.
pub fn vit_forward(params: &ViTParams, patches: &DenseMatrix<f64>) -> Result<Vec<f64>> {
    let mut z = embed(params, patches)?;
    for layer in &params.layers {
        z = encoder_layer(&z, layer)?;
    }
    let class = DenseMatrix::from_vec(1, params.config.d, z.row(0).to_vec())?;
    Ok(params.final_ln.apply(&class)?.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(layers: usize) -> VitConfig {
        VitConfig::with_default_mlp(6, 8, 4, layers)
    }

    fn patches(seed: u64) -> DenseMatrix<f64> {
        uniform_matrix(&mut seeded_rng(seed), 4, 6, -1.0, 1.0)
    }

    #[test]
    fn init_is_deterministic() {
        let a = vit_init(&small(2), RngSeed(3)).unwrap();
        let b = vit_init(&small(2), RngSeed(3)).unwrap();
        let c = vit_init(&small(2), RngSeed(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        assert_ne!(a.checksum(), c.checksum());
        assert_eq!(a.layers[0].w1.shape(), (8, 32));
    }

    #[test]
    fn init_rejects_zero_counts() {
        assert!(vit_init(&VitConfig::new(0, 8, 32, 4, 1), RngSeed(0)).is_err());
        assert!(vit_init(&small(1).heads(3), RngSeed(0)).is_err());
    }

    #[test]
    fn embedding_adds_class_token() {
        let params = vit_init(&small(1), RngSeed(0)).unwrap();
        let z = embed(&params, &patches(1)).unwrap();
        assert_eq!(z.shape(), (5, 8));
        for j in 0..8 {
            assert_eq!(z.get(0, j), params.x_class[j] + params.e_pos.get(0, j));
        }
        assert!(embed(&params, &DenseMatrix::zeros(3, 6)).is_err());
    }

    #[test]
    fn zero_layers_normalizes_the_class_token() {
        let params = vit_init(&small(0), RngSeed(9)).unwrap();
        let y = vit_forward(&params, &patches(2)).unwrap();
        let z0: Vec<f64> = (0..8).map(|j| params.x_class[j] + params.e_pos.get(0, j)).collect();
        let mean = z0.iter().sum::<f64>() / 8.0;
        let var = z0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        for j in 0..8 {
            let expected = (z0[j] - mean) / (var + LAYER_NORM_EPSILON).sqrt();
            assert!((y[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_attention_leaves_the_residual_stream() {
        let params = vit_init(&small(1), RngSeed(5)).unwrap();
        let z = embed(&params, &patches(3)).unwrap();
        let out = attention_sublayer(&z, &params.layers[0], |x| Ok(DenseMatrix::zeros(x.rows(), x.cols()))).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn layer_norm_statistics() {
        let x = uniform_matrix(&mut seeded_rng(8), 6, 16, -10.0, 10.0);
        let z = standardize_rows(&x);
        for i in 0..6 {
            let row = z.row(i);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-6, "{var}");
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_191_990_607_614_4).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_and_tensor_runs_are_reproducible() {
        let mechanisms: [Mechanism; 2] = [Mechanism::Softmax, "tensor_attention_linear".parse().unwrap()];
        for mech in mechanisms {
            let params = vit_init(&small(2).mechanism(mech), RngSeed(11)).unwrap();
            let a = vit_forward(&params, &patches(4)).unwrap();
            let b = vit_forward(&params, &patches(4)).unwrap();
            assert_eq!(a.len(), 8);
            assert_eq!(checksum(&a), checksum(&b));
            assert!(a.iter().all(|v| v.is_finite()));
            // LayerNorm output with unit scale has squared norm d·var/(var+ε) ≤ d
            let norm_sq: f64 = a.iter().map(|v| v * v).sum();
            assert!(norm_sq <= 8.0 + 1e-9);
        }
    }
}
