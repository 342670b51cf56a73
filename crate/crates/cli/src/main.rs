use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use tattn_cli::bench::{print_summary, run_bench, summarize, write_records};
use tattn_cli::demo::{print_demo, run_demo, DemoArgs, DEFAULT_PATCHES, DEFAULT_WIDTH};
use tattn_cli::verify::run_verify;
use tattn_cli::{BenchConfig, CliError, Format, Overrides};
use tattn_core::Mechanism;

#[derive(Parser)]
#[command(
    name = "tattn",
    version,
    about = "Tensor attention kernels: identity checks, scaling benchmarks, demo forward pass"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every algebraic identity at fixed seeds; exits 1 if any fails.
    Verify {
        /// Add a check that is built to fail.
        #[arg(long)]
        negative_control: bool,
    },
    /// Time variants over a sweep of sequence lengths.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one encoder forward pass and print a summary.
    Demo {
        #[arg(long, default_value = "softmax_attention", value_parser = parse_mechanism)]
        mechanism: Mechanism,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_PATCHES)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_WIDTH)]
        d: usize,
    },
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    s.parse().map_err(|e: tattn_core::Error| e.to_string())
}

fn bench(config: PathBuf, overrides: Overrides) -> Result<(), CliError> {
    let cfg = BenchConfig::load(&config)?.apply(&overrides);
    cfg.validate()?;
    let records = run_bench(&cfg)?;
    match &cfg.output_path {
        Some(path) => {
            write_records(&records, cfg.format, BufWriter::new(File::create(path)?))?;
            print_summary(&summarize(&records), &mut io::stdout().lock())?;
        }
        None => {
            write_records(&records, cfg.format, io::stdout().lock())?;
            print_summary(&summarize(&records), &mut io::stderr().lock())?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Verify { negative_control } => {
            let report = run_verify(negative_control)?;
            report.render(&mut io::stdout().lock())?;
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Bench {
            config,
            threads,
            format,
            out,
        } => {
            bench(
                config,
                Overrides {
                    threads,
                    format,
                    output_path: out,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo { mechanism, seed, n, d } => {
            let summary = run_demo(&DemoArgs { mechanism, seed, n, d })?;
            print_demo(&summary, &mut io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if err.use_stderr() => {
            let _ = err.print();
            let _ = writeln!(io::stderr(), "\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
        Err(err) => err.exit(),
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            let _ = writeln!(io::stderr(), "error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
