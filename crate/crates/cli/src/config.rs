//! Flat `key = value` benchmark configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! variants = tensor_attention_linear, diag_fast
//! n_values = 1024, 2048, 4096
//! d = 32
//! repetitions = 5
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tattn_core::Mechanism;

use crate::error::CliError;

pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(CliError::config("format", format!("expected csv or jsonl, got {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

/// What a benchmark cell times: a full mechanism or just the operator diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchVariant {
    Mechanism(Mechanism),
    /// `diag(T_Q)` in `O(n d²)` without forming `T`.
    DiagFast,
    /// `diag(T_Q)` read off the fully materialized `n x n` operator.
    DiagMaterialized,
}

impl FromStr for BenchVariant {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().replace('-', "_").as_str() {
            "diag_fast" => Ok(BenchVariant::DiagFast),
            "diag_materialized" | "diag_naive" => Ok(BenchVariant::DiagMaterialized),
            _ => s
                .parse()
                .map(BenchVariant::Mechanism)
                .map_err(|_| CliError::config("variants", format!("unknown variant {:?}", s.trim()))),
        }
    }
}

impl fmt::Display for BenchVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchVariant::Mechanism(m) => m.fmt(f),
            BenchVariant::DiagFast => f.write_str("diag_fast"),
            BenchVariant::DiagMaterialized => f.write_str("diag_materialized"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub variants: Vec<BenchVariant>,
    pub n_values: Vec<usize>,
    pub d: usize,
    pub d_v: usize,
    pub seeds: Vec<u64>,
    pub repetitions: usize,
    pub warmup: usize,
    /// `None` writes records to stdout.
    pub output_path: Option<PathBuf>,
    pub format: Format,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            variants: vec![BenchVariant::Mechanism("tensor_attention_linear".parse().expect("known id"))],
            n_values: vec![1024, 2048, 4096],
            d: 32,
            d_v: 32,
            seeds: vec![0],
            repetitions: 5,
            warmup: 1,
            output_path: None,
            format: Format::Csv,
            threads: 1,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub threads: Option<usize>,
    pub format: Option<Format>,
    pub output_path: Option<PathBuf>,
}

fn list<T: FromStr>(field: &'static str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::config(field, format!("cannot parse {s:?}"))))
        .collect()
}

fn count(field: &'static str, value: &str) -> Result<usize, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::config(field, format!("expected a non-negative integer, got {:?}", value.trim())))
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = BenchConfig::default();
        let mut d_v = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config("config", format!("line {}: expected key = value", lineno + 1)));
            };
            match key.trim() {
                "variants" => {
                    cfg.variants = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect::<Result<_, _>>()?
                }
                "n_values" => cfg.n_values = list("n_values", value)?,
                "d" => cfg.d = count("d", value)?,
                "d_v" => d_v = Some(count("d_v", value)?),
                "seeds" => cfg.seeds = list("seeds", value)?,
                "repetitions" => cfg.repetitions = count("repetitions", value)?,
                "warmup" => cfg.warmup = count("warmup", value)?,
                "output_path" => cfg.output_path = Some(PathBuf::from(value.trim())),
                "format" => cfg.format = value.parse()?,
                "threads" => cfg.threads = count("threads", value)?,
                other => return Err(CliError::config("config", format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        cfg.d_v = d_v.unwrap_or(cfg.d);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(mut self, overrides: &Overrides) -> Self {
        if let Some(t) = overrides.threads {
            self.threads = t;
        }
        if let Some(f) = overrides.format {
            self.format = f;
        }
        if let Some(p) = &overrides.output_path {
            self.output_path = Some(p.clone());
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.variants.is_empty() {
            return Err(CliError::config("variants", "at least one variant is required"));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(CliError::config("n_values", "need at least one positive count"));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("n_values", "must be strictly increasing"));
        }
        if self.d == 0 || self.d_v == 0 {
            return Err(CliError::config("d", "dimensions must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds", "at least one seed is required"));
        }
        if self.repetitions < MIN_REPETITIONS {
            return Err(CliError::config("repetitions", format!("must be at least {MIN_REPETITIONS}")));
        }
        if self.threads == 0 {
            return Err(CliError::config("threads", "must be at least 1"));
        }
        let interaction = self
            .variants
            .iter()
            .any(|v| matches!(v, BenchVariant::Mechanism(Mechanism::Interaction(_))));
        if interaction && self.d_v != self.d {
            return Err(CliError::config("d_v", "tensor_interaction needs d_v = d"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let cfg = BenchConfig::parse(
            "# sweep\nvariants = tensor_attention_linear, diag-fast\nn_values = 8, 16\nd = 4\nseeds = 1,2\nrepetitions = 3\nwarmup = 0\nformat = jsonl\n",
        )
        .unwrap();
        assert_eq!(cfg.variants.len(), 2);
        assert_eq!(cfg.variants[1], BenchVariant::DiagFast);
        assert_eq!(cfg.n_values, vec![8, 16]);
        assert_eq!((cfg.d, cfg.d_v), (4, 4));
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.format, Format::Jsonl);
        cfg.validate().unwrap();
    }

    #[test]
    fn flags_win() {
        let cfg = BenchConfig::parse("format = jsonl\nthreads = 2\n").unwrap().apply(&Overrides {
            threads: Some(1),
            format: Some(Format::Csv),
            output_path: Some("x.csv".into()),
        });
        assert_eq!(cfg.threads, 1);
        assert_eq!(cfg.format, Format::Csv);
        assert_eq!(cfg.output_path, Some(PathBuf::from("x.csv")));
    }

    fn field_of(err: CliError) -> &'static str {
        match err {
            CliError::Config { field, .. } => field,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let bad = |text: &str| BenchConfig::parse(text).and_then(|c| c.validate()).unwrap_err();
        assert_eq!(field_of(bad("n_values = 16, 8")), "n_values");
        assert_eq!(field_of(bad("n_values = 8, 8")), "n_values");
        assert_eq!(field_of(bad("repetitions = 2")), "repetitions");
        assert_eq!(field_of(bad("variants = flash")), "variants");
        assert_eq!(field_of(bad("d = x")), "d");
        assert_eq!(field_of(bad("format = xml")), "format");
        assert_eq!(field_of(bad("colour = red")), "config");
        assert_eq!(field_of(bad("variants = tensor_interaction\nd = 4\nd_v = 3")), "d_v");
    }
}
