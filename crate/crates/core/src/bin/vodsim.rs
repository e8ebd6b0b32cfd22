use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use vodsim::cli::{parse_scenario, parse_seed_range, run_experiment, ExperimentOptions, Scenario};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Baseline {
    NoProxy,
}

/// Hierarchical VoD prefix-caching and chaining simulator.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Scenario file; defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive range, e.g. 1..10.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum)]
    chaining: Option<OnOff>,
    /// Run every configuration with chaining on and off.
    #[arg(long)]
    ab_chaining: bool,
    /// Add a paired run without proxies.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Write one event trace per run.
    #[arg(long)]
    trace: bool,
    /// Output directory [default: $VODSIM_OUT, else ./vodsim-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match real_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vodsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(args: Args) -> vodsim::Result<()> {
    let mut sc = match &args.scenario {
        Some(p) => parse_scenario(p)?,
        None => Scenario::default(),
    };
    if let Some(s) = args.seed {
        sc.config.seed = s;
        sc.seeds = vec![s];
    }
    if let Some(r) = &args.seeds {
        sc.seeds = parse_seed_range(r).map_err(vodsim::Error::InvalidArgument)?;
    }
    if let Some(c) = args.chaining {
        sc.config.chaining = matches!(c, OnOff::On);
    }
    let opts = ExperimentOptions {
        ab_chaining: args.ab_chaining,
        baseline: args.baseline.is_some(),
        trace: args.trace,
    };
    let out = args
        .out
        .or_else(|| sc.out_dir.clone())
        .or_else(|| std::env::var_os("VODSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("vodsim-out"));

    let exp = run_experiment(&sc, &opts)?;
    let written = exp.write(&out)?;
    print!("{}", exp.summary());
    println!("\nwrote {} file(s) to {}", written.len(), out.display());
    Ok(())
}
