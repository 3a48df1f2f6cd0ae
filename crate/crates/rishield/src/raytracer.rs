//! Desk-scale 2D image-method propagation engine.
//!
//! Paths between two points are the direct segment plus specular bounce
//! chains of bounded order, built by mirroring the source across wall lines.
//! Each path carries the free-space loss of its unfolded length plus one
//! material loss per wall crossing and per bounce. Cell powers sum
//! non-coherently over paths, which removes fast-fading speckle and makes
//! "more absorption never raises power" an exact cell-wise invariant; a
//! phasor mode exists behind a flag for experimentation.
//!
//! The RIS panel overlays its host wall: a crossing of the panel footprint
//! or a bounce landing on it picks up an extra mode-dependent loss on top of
//! the wall's own. Paths touching the panel more than once are discarded
//! (in every mode, so all modes trace the same path set).

use rayon::prelude::*;
use std::io::{self, Write};
use thiserror::Error;

use crate::channel::path_loss_gain;
use crate::geom::{Point2, Segment};
use crate::mw_to_dbm;
use crate::ris::BitMask;
use crate::scenario::Scenario;

/// Wall-bounce order cap; beyond this the desk-scale enumeration explodes.
pub const MAX_ORDER_LIMIT: usize = 3;

/// Tolerance for "a bounce point lies on the RIS footprint", metres.
const RIS_HIT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("max_order must be <= {MAX_ORDER_LIMIT}, got {0}")]
    BadMaxOrder(usize),
    #[error("grid does not overlap the scenario")]
    GridOutsideScenario,
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("region does not intersect the grid")]
    EmptyRegion,
    #[error("region contains no finite-power cells")]
    NoFiniteCells,
    #[error("scenario has no RIS panel but a RIS mode was requested")]
    NoRisPanel,
}

/// How the panel behaves during a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum RisMode {
    /// Panel inert; its host wall alone interacts.
    Off,
    /// Every element absorbing: crossings and bounces both attenuated by
    /// the panel's absorption depth.
    AbsorbAll,
    /// 1-bit mask: bounces scaled by the reflecting fraction (capped at the
    /// absorption depth so full absorption stays the worst case), crossings
    /// attenuated by the absorption depth scaled by the absorbing fraction.
    Mask(BitMask),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOptions {
    pub max_order: usize,
    pub ris_mode: RisMode,
    /// Coherent phasor summation instead of power summation.
    pub phasor: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            max_order: 2,
            ris_mode: RisMode::Off,
            phasor: false,
        }
    }
}

/// One interaction along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub point: Point2,
    pub loss_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionKind {
    WallCrossing(usize),
    WallBounce(usize),
    RisCrossing,
    RisBounce,
}

/// A propagation path: vertices from source to target with bounce points in
/// between, its interactions, unfolded length and total loss.
#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    pub vertices: Vec<Point2>,
    pub interactions: Vec<Interaction>,
    pub length_m: f64,
    pub loss_db: f64,
}

/// Rectangular cell lattice. `origin` is the minimum corner; cell (r, c)
/// has its centre at `origin + ((c + 0.5) cell, (r + 0.5) cell)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point2,
    pub cell_m: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    /// Grid covering a bounding box with the given margin.
    pub fn covering(min: Point2, max: Point2, cell_m: f64, margin_m: f64) -> Self {
        let origin = Point2::new(min.x - margin_m, min.y - margin_m);
        let width = (max.x - min.x) + 2.0 * margin_m;
        let height = (max.y - min.y) + 2.0 * margin_m;
        Self {
            origin,
            cell_m,
            rows: (height / cell_m).ceil().max(1.0) as usize,
            cols: (width / cell_m).ceil().max(1.0) as usize,
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_m,
            self.origin.y + (row as f64 + 0.5) * self.cell_m,
        )
    }
}

/// Received power per cell, dBm; `-inf` marks cells with no signal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub spec: GridSpec,
    pub power_dbm: Vec<f64>,
}

impl CoverageGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.power_dbm[row * self.spec.cols + col]
    }
}

/// Order statistics of a grid region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStats {
    pub median_dbm: f64,
    pub max_dbm: f64,
    pub min_dbm: f64,
    /// Finite cells that entered the statistics.
    pub cells: usize,
    /// No-signal cells in the region, excluded from the statistics.
    pub sentinel_cells: usize,
}

// ---------------------------------------------------------------------------
// Path enumeration
// ---------------------------------------------------------------------------

struct Tracer<'a> {
    scenario: &'a Scenario,
    ris_segment: Option<Segment>,
    ris_cross_extra_db: f64,
    ris_bounce_extra_db: f64,
}

impl<'a> Tracer<'a> {
    fn new(scenario: &'a Scenario, mode: &RisMode) -> Result<Self, TraceError> {
        let (ris_segment, absorption) = match &scenario.ris {
            Some(r) => (Some(r.segment), r.absorption_db),
            None => (None, 0.0),
        };
        if ris_segment.is_none() && !matches!(mode, RisMode::Off) {
            return Err(TraceError::NoRisPanel);
        }
        let (cross, bounce) = match mode {
            RisMode::Off => (0.0, 0.0),
            RisMode::AbsorbAll => (absorption, absorption),
            RisMode::Mask(mask) => {
                let reflect = mask.reflect_fraction();
                let absorb = 1.0 - reflect;
                let bounce = if reflect > 0.0 {
                    (-10.0 * reflect.log10()).min(absorption)
                } else {
                    absorption
                };
                (absorption * absorb, bounce)
            }
        };
        Ok(Self {
            scenario,
            ris_segment,
            ris_cross_extra_db: cross,
            ris_bounce_extra_db: bounce,
        })
    }

    /// Assemble the path for a bounce-wall sequence (empty = direct).
    /// Returns `None` for invalid geometry or more than one RIS touch.
    fn build_path(&self, from: Point2, to: Point2, sequence: &[usize]) -> Option<RayPath> {
        let walls = &self.scenario.walls;

        // Forward image chain of the source.
        let mut images = Vec::with_capacity(sequence.len() + 1);
        images.push(from);
        for &wi in sequence {
            let prev = *images.last().unwrap();
            images.push(walls[wi].segment.mirror(prev));
        }

        // Backward pass: reflection points from the last bounce to the first.
        let mut rev_points = vec![to];
        for i in (0..sequence.len()).rev() {
            let target = *rev_points.last().unwrap();
            let (point, _t) = walls[sequence[i]].segment.crossing(images[i + 1], target)?;
            rev_points.push(point);
        }

        let mut vertices = Vec::with_capacity(sequence.len() + 2);
        vertices.push(from);
        vertices.extend(rev_points[1..].iter().rev().copied()); // bounce points in path order
        vertices.push(to);

        let mut interactions = Vec::new();
        let mut ris_touches = 0usize;

        // Bounce losses.
        for (k, &wi) in sequence.iter().enumerate() {
            let point = vertices[k + 1];
            interactions.push(Interaction {
                kind: InteractionKind::WallBounce(wi),
                point,
                loss_db: walls[wi].material.reflection_loss_db,
            });
            if let Some(ris) = &self.ris_segment {
                if ris.contains_point(point, RIS_HIT_TOL) {
                    ris_touches += 1;
                    interactions.push(Interaction {
                        kind: InteractionKind::RisBounce,
                        point,
                        loss_db: self.ris_bounce_extra_db,
                    });
                }
            }
        }

        // Crossing losses per leg. A leg never re-crosses its own bounce
        // walls: the crossing test excludes its endpoints.
        let mut length = 0.0;
        for leg in vertices.windows(2) {
            let (p, q) = (leg[0], leg[1]);
            length += p.dist(q);
            for (wi, wall) in walls.iter().enumerate() {
                if let Some((point, _)) = wall.segment.crossing(p, q) {
                    interactions.push(Interaction {
                        kind: InteractionKind::WallCrossing(wi),
                        point,
                        loss_db: wall.material.transmission_loss_db,
                    });
                }
            }
            if let Some(ris) = &self.ris_segment {
                if let Some((point, _)) = ris.crossing(p, q) {
                    ris_touches += 1;
                    interactions.push(Interaction {
                        kind: InteractionKind::RisCrossing,
                        point,
                        loss_db: self.ris_cross_extra_db,
                    });
                }
            }
        }

        // Signals bounced or filtered by the surface more than once carry
        // negligible power; drop such paths in every mode.
        if ris_touches > 1 {
            return None;
        }

        let lambda = self.scenario.wavelength_m();
        let fspl_db = -10.0
            * path_loss_gain(length.max(1e-12), lambda, 2.0)
                .expect("validated geometry")
                .log10();
        let loss_db = fspl_db + interactions.iter().map(|i| i.loss_db).sum::<f64>();
        Some(RayPath {
            vertices,
            interactions,
            length_m: length,
            loss_db,
        })
    }

    fn enumerate(&self, from: Point2, to: Point2, max_order: usize) -> Vec<RayPath> {
        let mut paths = Vec::new();
        if let Some(direct) = self.build_path(from, to, &[]) {
            paths.push(direct);
        }
        let n_walls = self.scenario.walls.len();
        let mut sequence = Vec::with_capacity(max_order);
        self.enumerate_rec(from, to, max_order, n_walls, &mut sequence, &mut paths);
        paths
    }

    fn enumerate_rec(
        &self,
        from: Point2,
        to: Point2,
        remaining_order: usize,
        n_walls: usize,
        sequence: &mut Vec<usize>,
        paths: &mut Vec<RayPath>,
    ) {
        if remaining_order == 0 {
            return;
        }
        for wi in 0..n_walls {
            if sequence.last() == Some(&wi) {
                continue; // consecutive bounces off the same wall are impossible
            }
            sequence.push(wi);
            if let Some(path) = self.build_path(from, to, sequence) {
                paths.push(path);
            }
            self.enumerate_rec(from, to, remaining_order - 1, n_walls, sequence, paths);
            sequence.pop();
        }
    }
}

/// Enumerate propagation paths between two points: the direct segment plus
/// image-method bounce chains up to `opts.max_order`.
pub fn enumerate_paths(
    scenario: &Scenario,
    from: Point2,
    to: Point2,
    opts: &TraceOptions,
) -> Result<Vec<RayPath>, TraceError> {
    if opts.max_order > MAX_ORDER_LIMIT {
        return Err(TraceError::BadMaxOrder(opts.max_order));
    }
    let tracer = Tracer::new(scenario, &opts.ris_mode)?;
    Ok(tracer.enumerate(from, to, opts.max_order))
}

/// Sum path gains at one probe point, in linear units of transmit power.
fn point_gain(tracer: &Tracer, lambda: f64, from: Point2, to: Point2, opts: &TraceOptions) -> f64 {
    let paths = tracer.enumerate(from, to, opts.max_order);
    if opts.phasor {
        let mut re = 0.0;
        let mut im = 0.0;
        for p in &paths {
            let amp = 10f64.powf(-p.loss_db / 20.0);
            let phase = -std::f64::consts::TAU * p.length_m / lambda;
            re += amp * phase.cos();
            im += amp * phase.sin();
        }
        re * re + im * im
    } else {
        paths.iter().map(|p| 10f64.powf(-p.loss_db / 10.0)).sum()
    }
}

/// Trace received power from the transmitter over a cell grid.
pub fn trace_coverage(
    scenario: &Scenario,
    opts: &TraceOptions,
    grid: &GridSpec,
) -> Result<CoverageGrid, TraceError> {
    if opts.max_order > MAX_ORDER_LIMIT {
        return Err(TraceError::BadMaxOrder(opts.max_order));
    }
    if !(grid.cell_m > 0.0) || grid.rows == 0 || grid.cols == 0 {
        return Err(TraceError::BadGrid("cell size and shape must be positive".into()));
    }
    // Free-space scenes have no built extent to check against.
    if !scenario.walls.is_empty() {
        let (smin, smax) = scenario.bounding_box();
        let gmax = Point2::new(
            grid.origin.x + grid.cols as f64 * grid.cell_m,
            grid.origin.y + grid.rows as f64 * grid.cell_m,
        );
        if grid.origin.x > smax.x || gmax.x < smin.x || grid.origin.y > smax.y || gmax.y < smin.y {
            return Err(TraceError::GridOutsideScenario);
        }
    }

    let tracer = Tracer::new(scenario, &opts.ris_mode)?;
    let tx = scenario.tx.position;
    let ptx_mw = scenario.tx_power_mw();
    let lambda = scenario.wavelength_m();

    let power_dbm: Vec<f64> = (0..grid.rows * grid.cols)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / grid.cols, idx % grid.cols);
            let gain = point_gain(&tracer, lambda, tx, grid.cell_center(r, c), opts);
            mw_to_dbm(ptx_mw * gain)
        })
        .collect();

    Ok(CoverageGrid {
        spec: *grid,
        power_dbm,
    })
}

/// Order statistics over the cells whose centres fall in `[min, max]`.
pub fn grid_stats(grid: &CoverageGrid, min: Point2, max: Point2) -> Result<GridStats, TraceError> {
    let mut values = Vec::new();
    let mut sentinels = 0usize;
    let mut in_region = 0usize;
    for r in 0..grid.spec.rows {
        for c in 0..grid.spec.cols {
            let p = grid.spec.cell_center(r, c);
            if p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y {
                in_region += 1;
                let v = grid.get(r, c);
                if v.is_finite() {
                    values.push(v);
                } else {
                    sentinels += 1;
                }
            }
        }
    }
    if in_region == 0 {
        return Err(TraceError::EmptyRegion);
    }
    if values.is_empty() {
        return Err(TraceError::NoFiniteCells);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    Ok(GridStats {
        median_dbm: median,
        max_dbm: values[n - 1],
        min_dbm: values[0],
        cells: n,
        sentinel_cells: sentinels,
    })
}

// ---------------------------------------------------------------------------
// Emitters
// ---------------------------------------------------------------------------

/// CSV rows `x,y,power_dbm`, row-major from the minimum corner.
pub fn write_coverage_csv<W: Write>(out: &mut W, grid: &CoverageGrid) -> io::Result<()> {
    writeln!(out, "x,y,power_dbm")?;
    for r in 0..grid.spec.rows {
        for c in 0..grid.spec.cols {
            let p = grid.spec.cell_center(r, c);
            writeln!(out, "{:.4},{:.4},{:.4}", p.x, p.y, grid.get(r, c))?;
        }
    }
    Ok(())
}

/// Binary 8-bit PGM heatmap; `[floor_dbm, ceil_dbm]` maps linearly to
/// `[0, 255]`, the no-signal sentinel to 0. Top image row is maximum y.
pub fn write_coverage_pgm<W: Write>(
    out: &mut W,
    grid: &CoverageGrid,
    floor_dbm: f64,
    ceil_dbm: f64,
) -> io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", grid.spec.cols, grid.spec.rows)?;
    let span = (ceil_dbm - floor_dbm).max(1e-12);
    let mut bytes = Vec::with_capacity(grid.spec.rows * grid.spec.cols);
    for r in (0..grid.spec.rows).rev() {
        for c in 0..grid.spec.cols {
            let v = grid.get(r, c);
            let byte = if v.is_finite() {
                (((v - floor_dbm) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            };
            bytes.push(byte);
        }
    }
    out.write_all(&bytes)
}
