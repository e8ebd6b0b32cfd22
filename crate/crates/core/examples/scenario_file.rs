//! Parses a scenario, runs it with a baseline and traces, and writes the
//! result files to a scratch directory.

use vodsim::cli::{parse_scenario_str, run_experiment, ExperimentOptions};

const SCENARIO: &str = "\
[run]
name = small
seeds = 1..3
duration_min = 300

[topology]
lpsgs = 3
ps_per_lpsg = 3
clients_per_ps = 10

[chaining]
d = 3
g_sec = 10

[sweep]
sweep = x_scale:0.2,0.4
";

fn main() -> vodsim::Result<()> {
    let scenario = parse_scenario_str(SCENARIO)?;
    let opts = ExperimentOptions { ab_chaining: true, baseline: true, trace: true };
    let exp = run_experiment(&scenario, &opts)?;
    let dir = std::env::temp_dir().join("vodsim-scenario-example");
    let written = exp.write(&dir)?;
    println!("{} files under {}", written.len(), dir.display());
    print!("{}", exp.summary());
    Ok(())
}
