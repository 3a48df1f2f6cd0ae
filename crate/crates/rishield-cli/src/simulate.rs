//! `rishield simulate`: coverage maps of a scenario under a panel mode.

use crate::manifest::Manifest;
use crate::CliError;
use clap::Args;
use rishield::geom::Point2;
use rishield::raytracer::{
    grid_stats, trace_coverage, write_coverage_csv, write_coverage_pgm, GridSpec, RisMode,
    TraceOptions,
};
use rishield::ris::BitMask;
use rishield::scenario::load_scenario;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// `name:x0,y0,x1,y1` rectangle for region statistics.
#[derive(Debug, Clone)]
pub struct StatsRect {
    name: String,
    min: Point2,
    max: Point2,
}

fn parse_stats_rect(s: &str) -> Result<StatsRect, String> {
    let (name, rest) = s
        .split_once(':')
        .ok_or_else(|| "expected name:x0,y0,x1,y1".to_string())?;
    let coords: Vec<f64> = rest
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let [x0, y0, x1, y1] = coords[..] else {
        return Err("expected four coordinates".to_string());
    };
    Ok(StatsRect {
        name: name.to_string(),
        min: Point2::new(x0.min(x1), y0.min(y1)),
        max: Point2::new(x0.max(x1), y0.max(y1)),
    })
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,

    /// Panel mode: off | absorb-all | mask (mask needs --ris-mask).
    #[arg(long, default_value = "off")]
    pub ris: String,

    /// 1-bit mask file ('1'/'0' rows) for --ris mask.
    #[arg(long)]
    pub ris_mask: Option<PathBuf>,

    /// Wall-bounce order of the tracer (<= 3).
    #[arg(long, default_value_t = 2)]
    pub max_order: usize,

    /// Grid cell size, metres.
    #[arg(long, default_value_t = 0.1)]
    pub cell_m: f64,

    /// Coherent phasor summation instead of power summation.
    #[arg(long)]
    pub phasor: bool,

    /// Heatmap floor, dBm (maps to black).
    #[arg(long, default_value_t = -90.0)]
    pub floor_dbm: f64,

    /// Heatmap ceiling, dBm (maps to white).
    #[arg(long, default_value_t = -10.0)]
    pub ceil_dbm: f64,

    /// Region statistics rectangles, repeatable: name:x0,y0,x1,y1.
    #[arg(long, value_parser = parse_stats_rect)]
    pub stats_rect: Vec<StatsRect>,
}

pub fn run(args: &SimulateArgs, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;

    let (mode, mode_name) = match args.ris.as_str() {
        "off" => (RisMode::Off, "off"),
        "absorb-all" => (RisMode::AbsorbAll, "absorb_all"),
        "mask" => {
            let path = args
                .ris_mask
                .as_ref()
                .ok_or_else(|| CliError::Usage("--ris mask requires --ris-mask".into()))?;
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let mask: BitMask = text.parse()?;
            if let Some(ris) = &scenario.ris {
                if mask.rows() != ris.rows || mask.cols() != ris.cols {
                    return Err(CliError::Usage(format!(
                        "mask is {}x{}, panel is {}x{}",
                        mask.rows(),
                        mask.cols(),
                        ris.rows,
                        ris.cols
                    )));
                }
            }
            (RisMode::Mask(mask), "mask")
        }
        other => return Err(CliError::Usage(format!("unknown ris mode '{other}'"))),
    };

    let opts = TraceOptions {
        max_order: args.max_order,
        ris_mode: mode,
        phasor: args.phasor,
    };
    let (min, max) = scenario.bounding_box();
    let grid = GridSpec::covering(min, max, args.cell_m, 0.0);
    log::info!(
        "tracing {}x{} cells, mode {}",
        grid.rows,
        grid.cols,
        mode_name
    );
    let coverage = trace_coverage(&scenario, &opts, &grid)?;

    let csv_name = format!("coverage_{mode_name}.csv");
    let pgm_name = format!("coverage_{mode_name}.pgm");
    let mut csv = Vec::new();
    write_coverage_csv(&mut csv, &coverage)?;
    fs::write(out_dir.join(&csv_name), csv)?;
    let mut pgm = Vec::new();
    write_coverage_pgm(&mut pgm, &coverage, args.floor_dbm, args.ceil_dbm)?;
    fs::write(out_dir.join(&pgm_name), pgm)?;

    // Region statistics: the whole grid plus any requested rectangles.
    let mut stats = Vec::new();
    writeln!(
        stats,
        "region,mode,median_dbm,max_dbm,min_dbm,cells,sentinel_cells"
    )?;
    let whole_max = Point2::new(
        grid.origin.x + grid.cols as f64 * grid.cell_m,
        grid.origin.y + grid.rows as f64 * grid.cell_m,
    );
    let mut regions = vec![StatsRect {
        name: "all".into(),
        min: grid.origin,
        max: whole_max,
    }];
    regions.extend(args.stats_rect.iter().cloned());
    for r in &regions {
        let st = grid_stats(&coverage, r.min, r.max)?;
        writeln!(
            stats,
            "{},{},{:.4},{:.4},{:.4},{},{}",
            r.name, mode_name, st.median_dbm, st.max_dbm, st.min_dbm, st.cells, st.sentinel_cells
        )?;
    }
    let stats_name = format!("stats_{mode_name}.csv");
    fs::write(out_dir.join(&stats_name), stats)?;

    let mut manifest = Manifest::new("simulate", seed);
    manifest.option("scenario", args.scenario.display());
    manifest.option("ris", &args.ris);
    if let Some(p) = &args.ris_mask {
        manifest.option("ris_mask", p.display());
    }
    manifest.option("max_order", args.max_order);
    manifest.option("cell_m", args.cell_m);
    manifest.option("phasor", args.phasor);
    manifest.option("floor_dbm", args.floor_dbm);
    manifest.option("ceil_dbm", args.ceil_dbm);
    manifest.input(&args.scenario)?;
    if let Some(p) = &args.ris_mask {
        manifest.input(p)?;
    }
    manifest.output(&csv_name);
    manifest.output(&pgm_name);
    manifest.output(&stats_name);
    manifest.write(out_dir)
}
