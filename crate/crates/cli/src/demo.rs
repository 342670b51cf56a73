//! `tattn demo`: one forward pass of the encoder with a chosen mechanism.

use std::io::Write;
use std::time::{Duration, Instant};

use tattn_core::baselines::DEFAULT_HEADS;
use tattn_core::sample::{checksum, seeded_rng, uniform_matrix};
use tattn_core::vit::{vit_forward, vit_init, RngSeed, VitConfig};
use tattn_core::Mechanism;

use crate::error::CliError;

pub const DEFAULT_PATCHES: usize = 16;
pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoArgs {
    pub mechanism: Mechanism,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
}

impl Default for DemoArgs {
    fn default() -> Self {
        Self {
            mechanism: Mechanism::Softmax,
            seed: 0,
            n: DEFAULT_PATCHES,
            d: DEFAULT_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSummary {
    pub mechanism: String,
    pub heads: usize,
    pub output: Vec<f64>,
    pub norm: f64,
    pub checksum: u64,
    pub elapsed: Duration,
}

/// Narrowest head the baselines are split into. Width-1 heads make the
/// normalized kernel scores exactly ±1, so whole rows can cancel to zero.
pub const MIN_HEAD_WIDTH: usize = 8;

/// Tensor mechanisms run single-headed; softmax and the kernel baseline use
/// the usual eight heads when each head stays at least [`MIN_HEAD_WIDTH`] wide.
pub fn heads_for(mechanism: &Mechanism, d: usize) -> usize {
    if mechanism.is_tensor() || d % DEFAULT_HEADS != 0 || d / DEFAULT_HEADS < MIN_HEAD_WIDTH {
        1
    } else {
        DEFAULT_HEADS
    }
}

pub fn run_demo(args: &DemoArgs) -> Result<DemoSummary, CliError> {
    if args.n == 0 || args.d == 0 {
        return Err(CliError::config("n", "patch count and width must be positive"));
    }
    let heads = heads_for(&args.mechanism, args.d);
    let config = VitConfig::with_default_mlp(args.d, args.d, args.n, DEFAULT_LAYERS)
        .mechanism(args.mechanism)
        .heads(heads);
    let params = vit_init(&config, RngSeed(args.seed))?;
    let patches = uniform_matrix(&mut seeded_rng(args.seed.wrapping_add(1)), args.n, args.d, -1.0, 1.0);
    let start = Instant::now();
    let output = vit_forward(&params, &patches)?;
    let elapsed = start.elapsed();
    Ok(DemoSummary {
        mechanism: args.mechanism.to_string(),
        heads,
        norm: output.iter().map(|v| v * v).sum::<f64>().sqrt(),
        checksum: checksum(&output),
        output,
        elapsed,
    })
}

pub fn print_demo(summary: &DemoSummary, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "mechanism: {} ({} head{})",
        summary.mechanism,
        summary.heads,
        if summary.heads == 1 { "" } else { "s" }
    )?;
    writeln!(out, "output norm: {:.12}", summary.norm)?;
    writeln!(out, "checksum: {:016x}", summary.checksum)?;
    writeln!(out, "forward time: {:.3} ms", summary.elapsed.as_secs_f64() * 1e3)
}
