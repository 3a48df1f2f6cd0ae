//! `rishield pattern`: reflectarray cuts, lobe tables and 2D maps.

use crate::manifest::Manifest;
use crate::CliError;
use clap::Args;
use rishield::pattern::{
    array_factor_cut, find_lobes, full_pattern, write_cut_csv, write_lobes_csv, write_pattern_csv,
    write_pattern_pgm, CutAxis, ElementGrid,
};
use rishield::ris::{make_pattern, BitMask, PatternKind};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct PatternArgs {
    /// Canonical mask: full-reflect | half-alternating | center-square-absorb.
    #[arg(long, conflicts_with = "mask_file")]
    pub preset: Option<String>,

    /// 1-bit mask file ('1'/'0' rows).
    #[arg(long)]
    pub mask_file: Option<PathBuf>,

    /// Panel rows (preset masks; checked against mask files).
    #[arg(long, default_value_t = 10)]
    pub rows: usize,

    /// Panel columns.
    #[arg(long, default_value_t = 10)]
    pub cols: usize,

    /// Cut axis: col | row.
    #[arg(long, default_value = "col")]
    pub axis: String,

    /// Samples across u in [-1, 1].
    #[arg(long, default_value_t = 1024)]
    pub resolution: usize,

    /// Lobe detection threshold, dB relative to the peak (negative).
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    pub threshold_db: f64,

    /// Also emit the 2D (u, v) map as CSV and PGM (map resolution is
    /// capped at 257 samples per axis).
    #[arg(long)]
    pub emit_full: bool,
}

fn parse_preset(name: &str) -> Result<PatternKind, CliError> {
    match name {
        "full-reflect" => Ok(PatternKind::FullReflect),
        "half-alternating" => Ok(PatternKind::HalfAlternating),
        "center-square-absorb" => Ok(PatternKind::CenterSquareAbsorb),
        other => Err(CliError::Usage(format!("unknown preset '{other}'"))),
    }
}

pub fn run(args: &PatternArgs, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let mask: BitMask = match (&args.preset, &args.mask_file) {
        (Some(name), None) => make_pattern(parse_preset(name)?, args.rows, args.cols)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let mask: BitMask = text.parse()?;
            if mask.rows() != args.rows || mask.cols() != args.cols {
                return Err(CliError::Usage(format!(
                    "mask file is {}x{}, expected {}x{}",
                    mask.rows(),
                    mask.cols(),
                    args.rows,
                    args.cols
                )));
            }
            mask
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --preset or --mask-file is required".into(),
            ))
        }
    };

    let axis = match args.axis.as_str() {
        "col" => CutAxis::Col,
        "row" => CutAxis::Row,
        other => return Err(CliError::Usage(format!("unknown axis '{other}'"))),
    };
    if args.threshold_db.is_nan() || args.threshold_db >= 0.0 {
        return Err(CliError::Usage("threshold must be negative dB".into()));
    }

    let grid = ElementGrid::from_mask(&mask);
    let cut = array_factor_cut(&grid, axis, args.resolution)?;
    let lobes = find_lobes(&cut, args.threshold_db)?;

    let mut buf = Vec::new();
    write_cut_csv(&mut buf, &cut)?;
    fs::write(out_dir.join("cut.csv"), buf)?;
    let mut buf = Vec::new();
    write_lobes_csv(&mut buf, &lobes)?;
    fs::write(out_dir.join("lobes.csv"), buf)?;
    println!("lobes at {} dB: {}", args.threshold_db, lobes.len());

    let mut manifest = Manifest::new("pattern", seed);
    if let Some(p) = &args.preset {
        manifest.option("preset", p);
    }
    if let Some(p) = &args.mask_file {
        manifest.option("mask_file", p.display());
        manifest.input(p)?;
    }
    manifest.option("rows", args.rows);
    manifest.option("cols", args.cols);
    manifest.option("axis", &args.axis);
    manifest.option("resolution", args.resolution);
    manifest.option("threshold_db", args.threshold_db);
    manifest.option("emit_full", args.emit_full);
    manifest.output("cut.csv");
    manifest.output("lobes.csv");

    if args.emit_full {
        let map = full_pattern(&grid, args.resolution.min(257))?;
        let mut buf = Vec::new();
        write_pattern_csv(&mut buf, &map)?;
        fs::write(out_dir.join("pattern.csv"), buf)?;
        let mut buf = Vec::new();
        write_pattern_pgm(&mut buf, &map)?;
        fs::write(out_dir.join("pattern.pgm"), buf)?;
        manifest.output("pattern.csv");
        manifest.output("pattern.pgm");
    }
    manifest.write(out_dir)
}
