use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emdict::bench::{self, KeyDist, Mix, Selection, VerifyOptions, WorkloadSpec};

#[derive(Parser)]
#[command(name = "emdict", version, about = "External-memory dictionary harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run dictionary, baseline and oracle in lockstep.
    Verify(Common),
    /// Emit one CSV row per (structure, lambda).
    Sweep(Common),
    /// Emit per-op I/O lines.
    Trace(Common),
}

#[derive(Args)]
struct Common {
    /// Maximum live keys.
    #[arg(long, default_value_t = 1 << 18)]
    n: u64,
    /// Words per page.
    #[arg(long = "B", default_value_t = 64)]
    b: usize,
    /// Cache size in words.
    #[arg(long = "M", default_value_t = 1 << 16)]
    m: u64,
    /// Trade-off parameter; a comma-separated list for sweep. Also the
    /// baseline fan-out.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<u64>,
    /// Base-case threshold; derived from lambda when omitted.
    #[arg(long)]
    tmin: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Insert:delete:lookup percentages.
    #[arg(long, default_value = "45:10:45")]
    mix: String,
    #[arg(long, default_value_t = 1_000_000)]
    ops: u64,
    /// new, baseline or both.
    #[arg(long, default_value = "both")]
    structure: String,
    /// Key distribution: u2n (uniform over [n_max]) or u64.
    #[arg(long, default_value = "u2n")]
    keys: String,
    /// verify: save the dictionary here afterwards, reload it and recheck.
    #[arg(long)]
    page_file: Option<PathBuf>,
    /// verify: corrupt the first log page after this op index.
    #[arg(long)]
    fault_after: Option<u64>,
}

impl Common {
    fn spec(&self, lambda: u64) -> emdict::Result<WorkloadSpec> {
        Ok(WorkloadSpec {
            n_max: self.n,
            page_words: self.b,
            cache_words: self.m,
            lambda,
            t_min: self.tmin,
            seed: self.seed,
            mix: self.mix.parse::<Mix>()?,
            ops: self.ops,
            keys: self.keys.parse::<KeyDist>()?,
        })
    }

    fn single_lambda(&self) -> emdict::Result<u64> {
        match self.lambda[..] {
            [] => Ok(emdict::dictionary::DEFAULT_LAMBDA),
            [l] => Ok(l),
            _ => Err(emdict::Error::BadParameters("expected a single lambda".into())),
        }
    }
}

fn run(cli: Cli) -> emdict::Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Verify(c) => {
            let spec = c.spec(c.single_lambda()?)?;
            let opts = VerifyOptions {
                selection: c.structure.parse::<Selection>()?,
                page_file: c.page_file.clone(),
                fault_after: c.fault_after,
            };
            let r = bench::verify(&spec, &opts)?;
            match &r.disagreement {
                None => {
                    writeln!(
                        out,
                        "PASS ops={} lookups={} reload_checked={}",
                        r.ops, r.lookups, r.reload_checked
                    )?;
                    Ok(ExitCode::SUCCESS)
                }
                Some(d) => {
                    writeln!(out, "FAIL {d}")?;
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Sweep(c) => {
            let lambdas = if c.lambda.is_empty() {
                vec![8, 16, 32, 64]
            } else {
                c.lambda.clone()
            };
            let rows = bench::sweep(&c.spec(lambdas[0])?, &lambdas, c.structure.parse()?)?;
            bench::write_csv(&rows, &mut out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace(c) => {
            let spec = c.spec(c.single_lambda()?)?;
            bench::trace(&spec, c.structure.parse()?, &mut out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
