//! Reflectarray radiation patterns under normal-incidence illumination.
//!
//! Element coefficients sit on a rows x cols half-wavelength grid, so the
//! array factor along one axis is `AF(u) = |sum_e c_e exp(j pi k_e u)|` with
//! `k_e` the element index along that axis and `u = sin(theta)` the
//! direction cosine. Working in u keeps grating-lobe positions affine: an
//! on/off taper with a full-wavelength period aliases replicas of the main
//! beam to `|u| = 1`. Magnitudes are relative; the element factor is
//! isotropic over the half space. Illumination is a normally incident plane
//! wave; oblique incidence can be modelled by pre-multiplying the element
//! coefficients with the incident phase ramp before building the grid.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::{self, Write};
use thiserror::Error;

use crate::ris::{BitMask, RisConfig};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("resolution {got} too low, need at least {need}")]
    ResolutionTooLow { got: usize, need: usize },
    #[error("lobe threshold must be negative dB, got {0}")]
    BadThreshold(f64),
    #[error("aperture is empty")]
    EmptyAperture,
}

/// Complex element coefficients on the panel grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGrid {
    rows: usize,
    cols: usize,
    coeffs: Vec<Complex64>,
}

impl ElementGrid {
    pub fn new(rows: usize, cols: usize, coeffs: Vec<Complex64>) -> Result<Self, PatternError> {
        if rows == 0 || cols == 0 || coeffs.len() != rows * cols {
            return Err(PatternError::EmptyAperture);
        }
        Ok(Self { rows, cols, coeffs })
    }

    /// 1-bit mask: reflect -> 1, absorb -> 0.
    pub fn from_mask(mask: &BitMask) -> Self {
        Self {
            rows: mask.rows(),
            cols: mask.cols(),
            coeffs: mask
                .bits()
                .iter()
                .map(|b| {
                    if *b {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect(),
        }
    }

    /// Continuous configuration: the physical reflection coefficients
    /// `alpha_i e^{j phi_i}`.
    pub fn from_config(cfg: &RisConfig) -> Self {
        Self {
            rows: cfg.rows(),
            cols: cfg.cols(),
            coeffs: cfg.phi_diagonal(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sum of coefficient magnitudes = broadside AF for non-negative tapers.
    pub fn coefficient_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn coefficient_energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Which grid axis the cut scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutAxis {
    Row,
    Col,
}

/// `|AF|` sampled on a uniform u-grid over [-1, 1], endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationCut {
    pub samples: Vec<(f64, f64)>,
}

impl RadiationCut {
    pub fn max_magnitude(&self) -> f64 {
        self.samples.iter().map(|(_, m)| *m).fold(0.0, f64::max)
    }
}

/// A detected pattern maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lobe {
    pub u_peak: f64,
    pub magnitude: f64,
    /// dB relative to the cut's global maximum; <= 0.
    pub level_db_rel_max: f64,
}

/// 2D magnitude map over direction cosines (u, v) on a resolution^2 grid;
/// entries outside the visible disk u^2 + v^2 <= 1 are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMap {
    pub resolution: usize,
    /// Row-major; row index scans v, column index scans u.
    pub magnitude: Vec<f64>,
}

impl PatternMap {
    pub fn get(&self, vi: usize, ui: usize) -> f64 {
        self.magnitude[vi * self.resolution + ui]
    }
}

fn u_samples(resolution: usize) -> impl Iterator<Item = f64> {
    let last = (resolution - 1) as f64;
    (0..resolution).map(move |k| -1.0 + 2.0 * k as f64 / last)
}

/// Axis cut of the array factor. `resolution` must satisfy Nyquist on the
/// aperture (at least 2 max(rows, cols) samples).
pub fn array_factor_cut(
    grid: &ElementGrid,
    axis: CutAxis,
    resolution: usize,
) -> Result<RadiationCut, PatternError> {
    let need = 2 * grid.rows.max(grid.cols);
    if resolution < need {
        return Err(PatternError::ResolutionTooLow {
            got: resolution,
            need,
        });
    }
    // Collapse the orthogonal axis first.
    let (n_axis, line) = match axis {
        CutAxis::Col => {
            let mut s = vec![Complex64::new(0.0, 0.0); grid.cols];
            for (e, coeff) in grid.coeffs.iter().enumerate() {
                s[e % grid.cols] += coeff;
            }
            (grid.cols, s)
        }
        CutAxis::Row => {
            let mut s = vec![Complex64::new(0.0, 0.0); grid.rows];
            for (e, coeff) in grid.coeffs.iter().enumerate() {
                s[e / grid.cols] += coeff;
            }
            (grid.rows, s)
        }
    };
    let samples = u_samples(resolution)
        .map(|u| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, coeff) in line.iter().enumerate().take(n_axis) {
                acc += coeff * Complex64::from_polar(1.0, PI * k as f64 * u);
            }
            (u, acc.norm())
        })
        .collect();
    Ok(RadiationCut { samples })
}

/// Detect pattern maxima at or above `threshold_db` (relative to the global
/// maximum). A maximum is a sample strictly greater than both neighbours; a
/// plateau of equal samples counts once at its leftmost sample; the
/// endpoints are eligible as one-sided maxima. Sorted by magnitude
/// descending.
pub fn find_lobes(cut: &RadiationCut, threshold_db: f64) -> Result<Vec<Lobe>, PatternError> {
    if !(threshold_db < 0.0) {
        return Err(PatternError::BadThreshold(threshold_db));
    }
    let mags: Vec<f64> = cut.samples.iter().map(|(_, m)| *m).collect();
    let max = cut.max_magnitude();
    if max <= 0.0 {
        return Ok(Vec::new());
    }
    let n = mags.len();
    let mut lobes = Vec::new();
    let mut i = 0;
    while i < n {
        // Maximal run of equal values starting at i.
        let mut j = i;
        while j + 1 < n && mags[j + 1] == mags[i] {
            j += 1;
        }
        let rises_left = i == 0 || mags[i - 1] < mags[i];
        let falls_right = j == n - 1 || mags[j + 1] < mags[i];
        if rises_left && falls_right && mags[i] > 0.0 {
            let level = 20.0 * (mags[i] / max).log10();
            if level >= threshold_db {
                lobes.push(Lobe {
                    u_peak: cut.samples[i].0,
                    magnitude: mags[i],
                    level_db_rel_max: level,
                });
            }
        }
        i = j + 1;
    }
    lobes.sort_by(|a, b| {
        b.magnitude
            .partial_cmp(&a.magnitude)
            .unwrap()
            .then(a.u_peak.partial_cmp(&b.u_peak).unwrap())
    });
    Ok(lobes)
}

/// Full 2D pattern over (u, v). Evaluated separably: per-row column sums
/// over u, then the row phase over v.
pub fn full_pattern(grid: &ElementGrid, resolution: usize) -> Result<PatternMap, PatternError> {
    let need = 2 * grid.rows.max(grid.cols);
    if resolution < need {
        return Err(PatternError::ResolutionTooLow {
            got: resolution,
            need,
        });
    }
    let us: Vec<f64> = u_samples(resolution).collect();
    // row_sum[r][ui] = sum_c c_rc exp(j pi c u).
    let mut row_sums = vec![Complex64::new(0.0, 0.0); grid.rows * resolution];
    for r in 0..grid.rows {
        for (ui, &u) in us.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..grid.cols {
                acc += grid.coeffs[r * grid.cols + c] * Complex64::from_polar(1.0, PI * c as f64 * u);
            }
            row_sums[r * resolution + ui] = acc;
        }
    }
    let mut magnitude = vec![0.0; resolution * resolution];
    for (vi, &v) in us.iter().enumerate() {
        for (ui, &u) in us.iter().enumerate() {
            if u * u + v * v > 1.0 + 1e-12 {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..grid.rows {
                acc += row_sums[r * resolution + ui] * Complex64::from_polar(1.0, PI * r as f64 * v);
            }
            magnitude[vi * resolution + ui] = acc.norm();
        }
    }
    Ok(PatternMap {
        resolution,
        magnitude,
    })
}

// ---------------------------------------------------------------------------
// Emitters
// ---------------------------------------------------------------------------

/// CSV rows `u,mag_linear,mag_db_rel`.
pub fn write_cut_csv<W: Write>(out: &mut W, cut: &RadiationCut) -> io::Result<()> {
    writeln!(out, "u,mag_linear,mag_db_rel")?;
    let max = cut.max_magnitude();
    for (u, m) in &cut.samples {
        let rel = if *m > 0.0 && max > 0.0 {
            20.0 * (m / max).log10()
        } else {
            f64::NEG_INFINITY
        };
        writeln!(out, "{:.6},{:.6e},{:.4}", u, m, rel)?;
    }
    Ok(())
}

/// CSV rows `u_peak,magnitude,level_db_rel_max`, strongest lobe first.
pub fn write_lobes_csv<W: Write>(out: &mut W, lobes: &[Lobe]) -> io::Result<()> {
    writeln!(out, "u_peak,magnitude,level_db_rel_max")?;
    for l in lobes {
        writeln!(out, "{:.6},{:.6e},{:.4}", l.u_peak, l.magnitude, l.level_db_rel_max)?;
    }
    Ok(())
}

/// CSV rows `u,v,magnitude` over the map grid.
pub fn write_pattern_csv<W: Write>(out: &mut W, map: &PatternMap) -> io::Result<()> {
    writeln!(out, "u,v,magnitude")?;
    let us: Vec<f64> = u_samples(map.resolution).collect();
    for (vi, &v) in us.iter().enumerate() {
        for (ui, &u) in us.iter().enumerate() {
            writeln!(out, "{:.6},{:.6},{:.6e}", u, v, map.get(vi, ui))?;
        }
    }
    Ok(())
}

/// 8-bit PGM of the map, linear in magnitude relative to the map maximum.
pub fn write_pattern_pgm<W: Write>(out: &mut W, map: &PatternMap) -> io::Result<()> {
    let max = map.magnitude.iter().copied().fold(0.0, f64::max).max(1e-300);
    write!(out, "P5\n{} {}\n255\n", map.resolution, map.resolution)?;
    let mut bytes = Vec::with_capacity(map.resolution * map.resolution);
    for vi in (0..map.resolution).rev() {
        for ui in 0..map.resolution {
            bytes.push(((map.get(vi, ui) / max).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out.write_all(&bytes)
}
