//! Fixed-seed identity suite behind `tattn verify`.

use std::io::Write;

use tattn_core::dense::{gemm, kron, matmul, partial_trace, trace, PartialTraceSpec, TracedSide};
use tattn_core::expm::{expm_pade, expm_taylor};
use tattn_core::interaction::{build_interaction_operator, InteractionConfig};
use tattn_core::oracle::{
    fd_probe, kron_vec_check, kron_vec_check_with, naive_reference, trace_identity_report, IdentityCheck, VecConvention,
};
use tattn_core::sample::{seeded_rng, uniform_complex_matrix, uniform_matrix, uniform_vector};
use tattn_core::tensor_attention::{
    build_tensor_operator, diag_fast, diag_materialized, factorized_trace, relu, tensor_attention_linear, tensor_attention_naive, Side,
    TensorOpConfig,
};
use tattn_core::{AttnInputs, DenseMatrix, Mechanism, Trans};

use crate::error::CliError;

pub const SEEDS: u64 = 20;
pub const TOLERANCE: f64 = 1e-10;
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<IdentityCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// One tab-separated line per identity: status, name, deviation, tolerance.
    pub fn render(&self, out: &mut impl Write) -> std::io::Result<()> {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(
                out,
                "{status}\t{}\tmax_dev={:.3e}\ttol={:.0e}",
                c.name, c.max_deviation, c.tolerance
            )?;
        }
        let failed: Vec<_> = self.failures().map(|c| c.name.as_str()).collect();
        if failed.is_empty() {
            writeln!(out, "all {} identities hold", self.checks.len())
        } else {
            writeln!(
                out,
                "{} of {} identities failed: {}",
                failed.len(),
                self.checks.len(),
                failed.join("; ")
            )
        }
    }
}

fn pair(seed: u64, n: usize, d: usize) -> (DenseMatrix, DenseMatrix) {
    let mut rng = seeded_rng(seed);
    (uniform_matrix(&mut rng, n, d, -1.0, 1.0), uniform_matrix(&mut rng, n, d, -1.0, 1.0))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Runs every identity. With `negative_control`, also runs a check planted to fail.
pub fn run_verify(negative_control: bool) -> Result<VerifyReport, CliError> {
    let mut checks = Vec::new();
    let seeds = 0..SEEDS;
    let shapes = [(2, 1), (3, 2), (8, 4), (16, 8), (32, 3)];

    let mut dev = 0.0f64;
    for seed in seeds.clone() {
        for &(n, d) in &shapes {
            let inputs = AttnInputs::random(n, d, d, seed)?;
            for side in [Side::QSide, Side::KSide] {
                let naive = tensor_attention_naive(&inputs, &TensorOpConfig::side(side))?;
                dev = dev.max(naive.max_abs_diff(&tensor_attention_linear(&inputs, side)?));
            }
        }
    }
    checks.push(IdentityCheck::new("linear path = materialized path", dev, TOLERANCE));

    let (mut frob, mut sides, mut factored) = (0.0f64, 0.0f64, 0.0f64);
    for seed in seeds.clone() {
        for &(n, d) in &shapes {
            let (q, k) = pair(seed, n, d);
            let expected = gemm(&q, &k, Trans::No, Trans::ConjTrans)?.frobenius_norm_sq();
            let t_q = trace(&build_tensor_operator(&q, &k, &TensorOpConfig::side(Side::QSide))?)?;
            let t_k = trace(&build_tensor_operator(&q, &k, &TensorOpConfig::side(Side::KSide))?)?;
            let hadamard_sum = gemm(&k, &k, Trans::ConjTrans, Trans::No)?
                .data()
                .iter()
                .zip(gemm(&q, &q, Trans::ConjTrans, Trans::No)?.data())
                .map(|(a, b)| a * b)
                .sum::<f64>();
            frob = frob.max(rel(t_q, expected));
            sides = sides.max(rel(t_k, t_q));
            factored = factored.max(rel(hadamard_sum, t_q)).max(rel(factorized_trace(&q, &k)?, t_q));
        }
    }
    checks.push(IdentityCheck::new("tr(T) = ‖QKᵀ‖²_F", frob, TOLERANCE));
    checks.push(IdentityCheck::new("tr(T_Q) = tr(T_K)", sides, TOLERANCE));
    checks.push(IdentityCheck::new("tr(T) = sum((KᵀK) ⊙ (QᵀQ))", factored, TOLERANCE));

    let (mut neg_diag, mut psd) = (0.0f64, 0.0f64);
    for seed in seeds.clone() {
        let (q, k) = pair(seed, 12, 3);
        let mut rng = seeded_rng(seed + 1000);
        for side in [Side::QSide, Side::KSide] {
            let t = build_tensor_operator(&q, &k, &TensorOpConfig::side(side))?;
            neg_diag = neg_diag.max(max_of(t.diagonal().iter().map(|&x| -x)));
            for _ in 0..20 {
                let x = DenseMatrix::column(&uniform_vector(&mut rng, 12, -1.0, 1.0))?;
                let form = gemm(&x, &matmul(&t, &x)?, Trans::ConjTrans, Trans::No)?.get(0, 0);
                // normalized so the tolerance reads as -1e-10 · ‖T‖_F · ‖x‖²
                psd = psd.max(-form / (t.frobenius_norm() * x.frobenius_norm_sq()));
            }
        }
    }
    checks.push(IdentityCheck::new("diag(T) ≥ 0", neg_diag, 0.0));
    checks.push(IdentityCheck::new("xᵀTx ≥ 0", psd, TOLERANCE));

    let mut dev = 0.0f64;
    for seed in seeds.clone() {
        let (q, k) = pair(seed, 40, 5);
        for side in [Side::QSide, Side::KSide] {
            let fast = diag_fast(&q, &k, side)?;
            let slow = diag_materialized(&q, &k, side)?;
            dev = dev.max(max_of(fast.iter().zip(&slow).map(|(a, b)| (a - b).abs())));
        }
    }
    checks.push(IdentityCheck::new("fast diagonal = materialized diagonal", dev, TOLERANCE));

    let (mut general, mut symmetric) = (0.0f64, 0.0f64);
    for seed in seeds.clone() {
        let mut rng = seeded_rng(seed);
        let a = uniform_matrix(&mut rng, 5, 5, -1.0, 1.0);
        let b = uniform_matrix(&mut rng, 5, 5, -1.0, 1.0);
        let r = trace_identity_report(&a, &b)?;
        general = general.max((r.trace_ab - r.hadamard_transpose_sum).abs());
        let s = trace_identity_report(&a, &b.add(&b.transpose())?)?;
        symmetric = symmetric.max((s.trace_ab - s.hadamard_sum).abs());
    }
    checks.push(IdentityCheck::new("tr(AB) = sum(A ⊙ Bᵀ)", general, TOLERANCE));
    checks.push(IdentityCheck::new("tr(AB) = sum(A ⊙ B) for symmetric B", symmetric, TOLERANCE));
    let a = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]])?;
    let r = trace_identity_report(&a, &a.transpose())?;
    let boundary = (r.trace_ab - 1.0).abs() + r.hadamard_sum.abs() + (r.hadamard_transpose_sum - 1.0).abs();
    checks.push(IdentityCheck::new("tr(AB) ≠ sum(A ⊙ B) for A=[[0,1],[0,0]], B=Aᵀ", boundary, 0.0));

    let mut dev = 0.0f64;
    for seed in seeds.clone() {
        let raw = uniform_matrix(&mut seeded_rng(seed), 4, 4, -1.0, 1.0);
        let a = raw.scale(1.0 / raw.one_norm())?;
        dev = dev.max(expm_taylor(&a, 30)?.max_abs_diff(&expm_pade(&a, 6, 6)?));
    }
    checks.push(IdentityCheck::new("Taylor(30) = Padé[6/6] on ‖A‖₁ ≤ 1", dev, 1e-8));
    let nil = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]])?;
    let unipotent = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]])?;
    let nil_dev = expm_pade(&nil, 6, 6)?
        .max_abs_diff(&unipotent)
        .max(expm_taylor(&nil, 30)?.max_abs_diff(&unipotent));
    checks.push(IdentityCheck::new("exp([[0,1],[0,0]]) = [[1,1],[0,1]]", nil_dev, 0.0));
    let scalar = expm_pade(&DenseMatrix::from_rows(&[[1.0]])?, 2, 2)?.get(0, 0);
    checks.push(IdentityCheck::new("Padé[2/2] at 1 = 19/7", (scalar - 19.0 / 7.0).abs(), 1e-12));

    let mut dev = 0.0f64;
    for seed in seeds.clone() {
        let (q, k) = pair(seed, 10, 3);
        for hadamard in [false, true] {
            let t = build_tensor_operator(
                &q,
                &k,
                &TensorOpConfig {
                    hadamard,
                    ..TensorOpConfig::default()
                },
            )?;
            dev = dev.max((trace(&relu(&t))? - trace(&t)?).abs());
        }
    }
    checks.push(IdentityCheck::new("tr(ReLU(T)) = tr(T)", dev, 0.0));

    let mut dev = 0.0f64;
    for seed in seeds.clone() {
        let (q, k) = pair(seed, 4, 4);
        dev = dev.max(kron_vec_check(&q, &k)?.max_deviation());
    }
    checks.push(IdentityCheck::new("Q⊗K ≅ vec(Q)vec(K)ᵀ (column stacking)", dev, 1e-12));

    let mut dev = 0.0f64;
    for seed in seeds.clone() {
        let mut rng = seeded_rng(seed);
        for dim in [2, 3] {
            let a = uniform_matrix(&mut rng, dim, dim, -1.0, 1.0);
            let b = uniform_matrix(&mut rng, dim, dim, -1.0, 1.0);
            let ab = kron(&a, &b)?;
            let spec = |traced_side| PartialTraceSpec {
                dim_v: dim,
                dim_w: dim,
                traced_side,
            };
            let keep_v = partial_trace(&ab, spec(TracedSide::TraceOutW))?;
            let keep_w = partial_trace(&ab, spec(TracedSide::TraceOutV))?;
            dev = dev
                .max(keep_v.max_abs_diff(&a.scale(trace(&b)?)?))
                .max(keep_w.max_abs_diff(&b.scale(trace(&a)?)?))
                .max((trace(&keep_v)? - trace(&ab)?).abs());
        }
    }
    checks.push(IdentityCheck::new("Tr_W(A⊗B) = tr(B)·A, Tr_V(A⊗B) = tr(A)·B", dev, 1e-12));

    let (mut tr_dev, mut oracle_dev) = (0.0f64, 0.0f64);
    let interaction: Mechanism = "tensor_interaction".parse().map_err(CliError::Core)?;
    for seed in seeds.clone() {
        let inputs = AttnInputs::random(9, 4, 4, seed)?;
        let op = build_interaction_operator(inputs.q(), inputs.k(), &InteractionConfig::default())?;
        let b = gemm(inputs.q(), inputs.k(), Trans::ConjTrans, Trans::No)?;
        tr_dev = tr_dev.max(rel(trace(&op)?, b.frobenius_norm_sq()));
        oracle_dev = oracle_dev.max(interaction.apply(&inputs)?.max_abs_diff(&naive_reference(&inputs, &interaction)?));
    }
    checks.push(IdentityCheck::new("tr(𝕋) = ‖QᵀK‖²_F", tr_dev, TOLERANCE));
    checks.push(IdentityCheck::new("tensor interaction = loop oracle", oracle_dev, TOLERANCE));

    let mut dev = 0.0f64;
    for seed in 0..5 {
        let inputs = AttnInputs::random(10, 4, 4, seed)?;
        for mech in Mechanism::catalog() {
            dev = dev.max(mech.apply(&inputs)?.max_abs_diff(&naive_reference(&inputs, &mech)?));
        }
    }
    checks.push(IdentityCheck::new("every mechanism = loop oracle", dev, TOLERANCE));

    let naive: Mechanism = "tensor_attention_naive".parse()?;
    let linear: Mechanism = "tensor_attention_linear".parse()?;
    let mut dev = 0.0f64;
    for seed in 0..10 {
        let inputs = AttnInputs::random(4, 3, 3, seed)?;
        let mut rng = seeded_rng(seed + 77);
        let u = uniform_vector(&mut rng, 4, -1.0, 1.0);
        let w = uniform_vector(&mut rng, 3, -1.0, 1.0);
        let g1 = fd_probe(&naive, &inputs, &u, &w, 1e-5)?;
        let g2 = fd_probe(&linear, &inputs, &u, &w, 1e-5)?;
        dev = dev.max(max_of(g1.iter().zip(&g2).map(|(a, b)| (a - b).abs())));
    }
    checks.push(IdentityCheck::new(
        "∇ naive path = ∇ linear path (central differences)",
        dev,
        FD_TOLERANCE,
    ));

    let (mut herm, mut cdiag, mut cpsd) = (0.0f64, 0.0f64, 0.0f64);
    for seed in seeds {
        let mut rng = seeded_rng(seed);
        let q = uniform_complex_matrix(&mut rng, 6, 3, -1.0, 1.0);
        let k = uniform_complex_matrix(&mut rng, 6, 3, -1.0, 1.0);
        let t = build_tensor_operator(&q, &k, &TensorOpConfig::default())?;
        herm = herm.max(t.hermitian_deviation());
        cdiag = cdiag.max(max_of(t.diagonal().iter().map(|z| z.im.abs().max(-z.re))));
        for _ in 0..20 {
            let x = uniform_complex_matrix(&mut rng, 6, 1, -1.0, 1.0);
            let form = gemm(&x, &matmul(&t, &x)?, Trans::ConjTrans, Trans::No)?.get(0, 0);
            cpsd = cpsd.max(-form.re / (t.frobenius_norm() * x.frobenius_norm_sq()));
        }
    }
    checks.push(IdentityCheck::new("complex T is Hermitian", herm, 1e-12));
    checks.push(IdentityCheck::new("complex diag(T) real and ≥ 0", cdiag, 1e-12));
    checks.push(IdentityCheck::new("complex xᴴTx ≥ 0", cpsd, TOLERANCE));

    if negative_control {
        let (q, k) = pair(0, 3, 2);
        let report = kron_vec_check_with(&q, &k, VecConvention::RowStacking)?;
        checks.push(IdentityCheck::new(
            "negative control: Q⊗K ≅ vec(Q)vec(K)ᵀ under row stacking",
            report.max_deviation(),
            1e-12,
        ));
    }

    Ok(VerifyReport { checks })
}
