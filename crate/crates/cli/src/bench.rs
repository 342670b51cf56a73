//! Wall-clock scaling measurements with deterministic inputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use tattn_core::sample::checksum;
use tattn_core::tensor_attention::{diag_fast, diag_materialized, Side};
use tattn_core::AttnInputs;

use crate::config::{BenchConfig, BenchVariant, Format};
use crate::error::CliError;

/// Medians below this are dominated by timer resolution.
pub const TIMER_RESOLUTION_FLOOR: Duration = Duration::from_micros(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchRecord {
    pub variant: String,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub rep: usize,
    pub wall_nanos: u64,
    pub checksum: u64,
}

/// Runs `variant` once and returns the checksum of its output.
pub fn run_variant(variant: &BenchVariant, inputs: &AttnInputs<f64>) -> Result<u64, CliError> {
    Ok(match variant {
        BenchVariant::Mechanism(m) => checksum(m.apply(inputs)?.data()),
        BenchVariant::DiagFast => checksum(&diag_fast(inputs.q(), inputs.k(), Side::QSide)?),
        BenchVariant::DiagMaterialized => checksum(&diag_materialized(inputs.q(), inputs.k(), Side::QSide)?),
    })
}

fn run_cell(variant: &BenchVariant, n: usize, cfg: &BenchConfig) -> Result<Vec<BenchRecord>, CliError> {
    let mut records = Vec::with_capacity(cfg.seeds.len() * cfg.repetitions);
    for &seed in &cfg.seeds {
        let inputs = AttnInputs::random(n, cfg.d, cfg.d_v, seed)?;
        for _ in 0..cfg.warmup {
            run_variant(variant, &inputs)?;
        }
        for rep in 0..cfg.repetitions {
            let start = Instant::now();
            let sum = run_variant(variant, &inputs)?;
            let elapsed = start.elapsed();
            records.push(BenchRecord {
                variant: variant.to_string(),
                n,
                d: cfg.d,
                seed,
                rep,
                wall_nanos: (elapsed.as_nanos() as u64).max(1),
                checksum: sum,
            });
        }
    }
    Ok(records)
}

/// One record per `(variant, n, seed, rep)`, ordered by variant then `n`.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, CliError> {
    cfg.validate()?;
    let cells: Vec<(BenchVariant, usize)> = cfg
        .variants
        .iter()
        .flat_map(|v| cfg.n_values.iter().map(move |&n| (*v, n)))
        .collect();
    let results: Vec<Vec<BenchRecord>> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| CliError::config("threads", e.to_string()))?;
        pool.install(|| cells.par_iter().map(|(v, n)| run_cell(v, *n, cfg)).collect::<Result<_, _>>())?
    } else {
        cells.iter().map(|(v, n)| run_cell(v, *n, cfg)).collect::<Result<_, _>>()?
    };
    Ok(results.into_iter().flatten().collect())
}

pub fn median(values: &mut [u64]) -> u64 {
    values.sort_unstable();
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub variant: String,
    pub n: usize,
    pub median_nanos: u64,
    /// `time(n) / time(previous n)`; `None` for the first size.
    pub ratio: Option<f64>,
    /// `n / previous n`.
    pub size_factor: Option<f64>,
}

/// Median time per `(variant, n)` and the ratio between consecutive sizes.
pub fn summarize(records: &[BenchRecord]) -> Vec<ScalingRow> {
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, usize), Vec<u64>> = BTreeMap::new();
    for r in records {
        if !order.contains(&r.variant) {
            order.push(r.variant.clone());
        }
        cells.entry((r.variant.clone(), r.n)).or_default().push(r.wall_nanos);
    }
    let mut rows = Vec::new();
    for variant in order {
        let mut prev: Option<(usize, u64)> = None;
        for ((_, n), times) in cells.range_mut((variant.clone(), 0)..=(variant.clone(), usize::MAX)) {
            let m = median(times);
            rows.push(ScalingRow {
                variant: variant.clone(),
                n: *n,
                median_nanos: m,
                ratio: prev.map(|(_, t)| m as f64 / t as f64),
                size_factor: prev.map(|(pn, _)| *n as f64 / pn as f64),
            });
            prev = Some((*n, m));
        }
    }
    rows
}

pub fn print_summary(rows: &[ScalingRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{:<40} {:>8} {:>14} {:>10}", "variant", "n", "median_ns", "ratio")?;
    for row in rows {
        let ratio = match (row.ratio, row.size_factor) {
            (Some(r), Some(f)) if f == 2.0 => format!("{r:.2}"),
            (Some(r), Some(f)) => format!("{r:.2} (x{f:.2} n)"),
            _ => "-".into(),
        };
        writeln!(out, "{:<40} {:>8} {:>14} {:>10}", row.variant, row.n, row.median_nanos, ratio)?;
        if row.median_nanos < TIMER_RESOLUTION_FLOOR.as_nanos() as u64 {
            writeln!(
                out,
                "warning: {} at n={} has a median below 1µs; timings are at the clock's resolution",
                row.variant, row.n
            )?;
        }
    }
    Ok(())
}

pub fn write_records(records: &[BenchRecord], format: Format, out: impl Write) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            if records.is_empty() {
                w.write_record(["variant", "n", "d", "seed", "rep", "wall_nanos", "checksum"])?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(variant: &str, n: usize, wall_nanos: u64) -> BenchRecord {
        BenchRecord {
            variant: variant.into(),
            n,
            d: 2,
            seed: 0,
            rep: 0,
            wall_nanos,
            checksum: 0,
        }
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [5, 1, 3]), 3);
        assert_eq!(median(&mut [4, 1, 3, 2]), 2);
    }

    #[test]
    fn summary_ratios() {
        let records = [
            record("a", 10, 100),
            record("a", 10, 300),
            record("a", 10, 200),
            record("a", 20, 400),
            record("b", 10, 7),
        ];
        let rows = summarize(&records);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].median_nanos, 200);
        assert_eq!(rows[1].ratio, Some(2.0));
        assert_eq!(rows[1].size_factor, Some(2.0));
        assert_eq!(rows[2].variant, "b");
        assert_eq!(rows[2].ratio, None);
        let mut text = Vec::new();
        print_summary(&rows, &mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.contains("2.00"));
        assert!(text.contains("below 1µs"));
    }

    #[test]
    fn csv_header_is_fixed() {
        let mut out = Vec::new();
        write_records(&[record("a", 1, 5)], Format::Csv, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "variant,n,d,seed,rep,wall_nanos,checksum\na,1,2,0,0,5,0\n");
        let mut empty = Vec::new();
        write_records(&[], Format::Csv, &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "variant,n,d,seed,rep,wall_nanos,checksum\n");
    }

    #[test]
    fn jsonl_has_the_same_fields() {
        let mut out = Vec::new();
        write_records(&[record("a", 1, 5), record("b", 2, 6)], Format::Jsonl, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        let mut expected = vec!["variant", "n", "d", "seed", "rep", "wall_nanos", "checksum"];
        expected.sort();
        let mut keys_sorted = keys.clone();
        keys_sorted.sort();
        assert_eq!(keys_sorted, expected);
    }

    #[test]
    fn reps_share_a_checksum() {
        let cfg = BenchConfig {
            variants: vec!["tensor_attention_linear".parse().unwrap(), BenchVariant::DiagFast],
            n_values: vec![8, 16],
            d: 3,
            d_v: 3,
            seeds: vec![4],
            repetitions: 3,
            warmup: 0,
            ..BenchConfig::default()
        };
        let records = run_bench(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 2 * 3);
        for chunk in records.chunks(3) {
            assert!(chunk.iter().all(|r| r.checksum == chunk[0].checksum && r.wall_nanos > 0));
        }
        let again = run_bench(&BenchConfig { threads: 2, ..cfg }).unwrap();
        let sums = |rs: &[BenchRecord]| rs.iter().map(|r| (r.variant.clone(), r.n, r.checksum)).collect::<Vec<_>>();
        assert_eq!(sums(&records), sums(&again));
    }
}
