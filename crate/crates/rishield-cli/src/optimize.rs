//! `rishield optimize`: solve the shield problem for a scenario.

use crate::manifest::Manifest;
use crate::CliError;
use clap::Args;
use rishield::channel::{ChannelParams, ChannelSet};
use rishield::metrics::{link_report, write_link_report_csv};
use rishield::optimizer::{
    brute_force_1bit, mrt_precoder, render_report, solve_shield, solve_shield_with_precoder,
    SolverOptions,
};
use rishield::ris::{quantize_1bit, RisConfig};
use rishield::scenario::{load_scenario, Scenario};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct OptimizeArgs {
    /// Scenario file (TOML); must define a RIS panel.
    #[arg(long)]
    pub scenario: PathBuf,

    /// Protected receiver indices (comma-separated). Default: every
    /// receiver labelled "protected" in the scenario.
    #[arg(long, value_delimiter = ',')]
    pub protected: Vec<usize>,

    /// Random solver restarts.
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,

    /// Iteration cap per ascent phase and on outer alternations.
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,

    /// Initial ascent step.
    #[arg(long, default_value_t = 0.1)]
    pub step_init: f64,

    /// Absolute objective-improvement tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    /// Seed the restart pool with every 1-bit mask (needs N <= 12).
    #[arg(long)]
    pub binary_seeds: bool,

    /// Also run the exhaustive 1-bit oracle (needs N <= 20) and report
    /// the gap.
    #[arg(long)]
    pub brute_force: bool,

    /// Hold the precoder at maximum-ratio service and optimize v only.
    #[arg(long)]
    pub fixed_w_mrt: bool,

    /// Phase of the reflect state used when quantizing, radians.
    #[arg(long, default_value_t = 0.0)]
    pub reflect_phase: f64,

    /// Amplitude threshold of the 1-bit quantizer, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub quantize_threshold: f64,

    /// Rician K factor of the direct link, dB.
    #[arg(long, default_value_t = 10.0)]
    pub k_direct_db: f64,

    /// Rician K factor of the RIS legs, dB.
    #[arg(long, default_value_t = 10.0)]
    pub k_ris_db: f64,
}

pub struct OptimizeOutcome {
    pub objective: f64,
    pub sum_rate_before: f64,
    pub sum_rate_after: f64,
    pub smse_after: f64,
}

pub fn protected_set(args: &OptimizeArgs, scenario: &Scenario) -> Result<Vec<usize>, CliError> {
    let ids = if args.protected.is_empty() {
        scenario.protected_ids()
    } else {
        args.protected.clone()
    };
    if ids.is_empty() {
        return Err(CliError::Usage(
            "protected set is empty: pass --protected or label receivers".into(),
        ));
    }
    Ok(ids)
}

pub fn channel_params(args: &OptimizeArgs, scenario: &Scenario) -> ChannelParams {
    let mut params = ChannelParams::new(scenario.wavelength_m());
    params.k_direct_db = args.k_direct_db;
    params.k_ris_db = args.k_ris_db;
    params
}

/// Solve once and compute report figures; shared with `sweep`.
pub fn solve_instance(
    args: &OptimizeArgs,
    scenario: &Scenario,
    seed: u64,
) -> Result<(rishield::optimizer::ShieldSolution, OptimizeOutcome, ChannelSet), CliError> {
    let params = channel_params(args, scenario);
    let channels = ChannelSet::from_scenario(scenario, &params, seed)?;
    let protected = protected_set(args, scenario)?;
    let budget = scenario.tx_power_mw();
    let opts = SolverOptions {
        restarts: args.restarts,
        max_iters: args.max_iters,
        step_init: args.step_init,
        tol: args.tol,
        seed,
        include_binary_seeds: args.binary_seeds,
    };

    let solution = if args.fixed_w_mrt {
        let precoder = mrt_precoder(&channels, budget)?;
        solve_shield_with_precoder(&channels, &protected, &precoder, &opts)?
    } else {
        solve_shield(&channels, &protected, budget, &opts)?
    };

    // "Before": unconfigured, fully reflecting panel with plain
    // maximum-ratio service.
    let ris = scenario.ris.as_ref().expect("channel synthesis required a panel");
    let before_cfg = RisConfig::full_reflect(ris.rows, ris.cols);
    let before_pre = mrt_precoder(&channels, budget)?;
    let before = link_report(&before_cfg, &before_pre, &channels)?;
    let after_cfg = solution.config.clone().with_shape(ris.rows, ris.cols)?;
    let after = link_report(&after_cfg, &solution.precoder, &channels)?;
    let smse_after = rishield::optimizer::smse(&after_cfg, &solution.precoder, &channels, &protected)?;

    let outcome = OptimizeOutcome {
        objective: solution.objective,
        sum_rate_before: before.sum_rate,
        sum_rate_after: after.sum_rate,
        smse_after,
    };

    Ok((solution, outcome, channels))
}

pub fn run(args: &OptimizeArgs, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let ris = scenario
        .ris
        .as_ref()
        .ok_or_else(|| CliError::Usage("scenario has no RIS panel".into()))?
        .clone();
    if !(args.quantize_threshold > 0.0 && args.quantize_threshold < 1.0) {
        return Err(CliError::Usage("quantize threshold must lie in (0, 1)".into()));
    }

    let (solution, _outcome, channels) = solve_instance(args, &scenario, seed)?;
    let protected = protected_set(args, &scenario)?;
    let budget = scenario.tx_power_mw();

    let brute = if args.brute_force {
        let opts = SolverOptions {
            restarts: args.restarts,
            max_iters: args.max_iters,
            step_init: args.step_init,
            tol: args.tol,
            seed,
            include_binary_seeds: args.binary_seeds,
        };
        Some(brute_force_1bit(&channels, &protected, budget, &opts)?)
    } else {
        None
    };

    let after_cfg = solution.config.clone().with_shape(ris.rows, ris.cols)?;
    let quantized = quantize_1bit(&after_cfg, args.quantize_threshold)?;

    fs::write(
        out_dir.join("report.txt"),
        render_report(&solution, &quantized, brute.as_ref()),
    )?;
    fs::write(out_dir.join("mask.txt"), quantized.to_string())?;

    let before_cfg = RisConfig::full_reflect(ris.rows, ris.cols);
    let before_pre = mrt_precoder(&channels, budget)?;
    let mut csv = Vec::new();
    write_link_report_csv(&mut csv, &link_report(&before_cfg, &before_pre, &channels)?)?;
    fs::write(out_dir.join("links_before.csv"), csv)?;
    let mut csv = Vec::new();
    write_link_report_csv(&mut csv, &link_report(&after_cfg, &solution.precoder, &channels)?)?;
    fs::write(out_dir.join("links_after.csv"), csv)?;

    let mut manifest = Manifest::new("optimize", seed);
    manifest.option("scenario", args.scenario.display());
    manifest.option("protected", format!("{:?}", protected));
    manifest.option("restarts", args.restarts);
    manifest.option("max_iters", args.max_iters);
    manifest.option("step_init", args.step_init);
    manifest.option("tol", args.tol);
    manifest.option("binary_seeds", args.binary_seeds);
    manifest.option("brute_force", args.brute_force);
    manifest.option("fixed_w_mrt", args.fixed_w_mrt);
    manifest.option("reflect_phase", args.reflect_phase);
    manifest.option("quantize_threshold", args.quantize_threshold);
    manifest.option("k_direct_db", args.k_direct_db);
    manifest.option("k_ris_db", args.k_ris_db);
    manifest.input(&args.scenario)?;
    for name in ["report.txt", "mask.txt", "links_before.csv", "links_after.csv"] {
        manifest.output(name);
    }
    manifest.write(out_dir)
}
