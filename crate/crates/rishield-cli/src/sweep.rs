//! `rishield sweep`: optimize over a seed range, aggregate the results.

use crate::manifest::Manifest;
use crate::optimize::{solve_instance, OptimizeArgs};
use crate::CliError;
use clap::Args;
use rishield::scenario::load_scenario;
use std::fs;
use std::io::Write as _;
use std::path::Path;

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub optimize: OptimizeArgs,

    /// First channel/solver seed of the sweep.
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,

    /// Number of seeds.
    #[arg(long, default_value_t = 10)]
    pub seed_count: u64,
}

pub fn run(args: &SweepArgs, _seed: u64, out_dir: &Path) -> Result<(), CliError> {
    if args.seed_count == 0 {
        return Err(CliError::Usage("seed range is empty".into()));
    }
    let scenario = load_scenario(&args.optimize.scenario)?;
    if scenario.ris.is_none() {
        return Err(CliError::Usage("scenario has no RIS panel".into()));
    }

    let mut rows = Vec::new();
    for seed in args.seed_start..args.seed_start + args.seed_count {
        log::info!("sweep seed {seed}");
        let (_, outcome, _) = solve_instance(&args.optimize, &scenario, seed)?;
        rows.push((seed, outcome));
    }

    let mut csv = Vec::new();
    writeln!(
        csv,
        "seed,objective,smse,sum_rate_before,sum_rate_after"
    )?;
    for (seed, o) in &rows {
        writeln!(
            csv,
            "{},{:.9e},{:.9e},{:.9e},{:.9e}",
            seed, o.objective, o.smse_after, o.sum_rate_before, o.sum_rate_after
        )?;
    }
    let stats = |f: fn(&crate::optimize::OptimizeOutcome) -> f64| {
        let vals: Vec<f64> = rows.iter().map(|(_, o)| f(o)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean, min, max)
    };
    let obj = stats(|o| o.objective);
    let smse = stats(|o| o.smse_after);
    let before = stats(|o| o.sum_rate_before);
    let after = stats(|o| o.sum_rate_after);
    for (name, s) in [("mean", 0usize), ("min", 1), ("max", 2)] {
        let pick = |t: (f64, f64, f64)| match s {
            0 => t.0,
            1 => t.1,
            _ => t.2,
        };
        writeln!(
            csv,
            "{},{:.9e},{:.9e},{:.9e},{:.9e}",
            name,
            pick(obj),
            pick(smse),
            pick(before),
            pick(after)
        )?;
    }
    fs::write(out_dir.join("sweep.csv"), csv)?;

    let mut manifest = Manifest::new("sweep", args.seed_start);
    manifest.option("scenario", args.optimize.scenario.display());
    manifest.option("seed_start", args.seed_start);
    manifest.option("seed_count", args.seed_count);
    manifest.option("restarts", args.optimize.restarts);
    manifest.option("binary_seeds", args.optimize.binary_seeds);
    manifest.option("fixed_w_mrt", args.optimize.fixed_w_mrt);
    manifest.input(&args.optimize.scenario)?;
    manifest.output("sweep.csv");
    manifest.write(out_dir)
}
