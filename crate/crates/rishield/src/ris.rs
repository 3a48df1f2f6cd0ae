//! RIS configurations: the reflection vector `v`, its diagonal matrix form,
//! 1-bit reflect/absorb masks and the canonical mask patterns.
//!
//! `v` has length N+1; entries 1..N are per-element reflection coefficients
//! `alpha_i e^{-j phi_i}` with `|alpha_i| <= 1` (passive surface), and the
//! last entry is pinned to 1 so the direct path is always selected by the
//! same bilinear form. Element-to-grid mapping is row-major with row 0 at
//! the top of the panel; every module shares it.

use crate::channel::CVec;
use num_complex::Complex64;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Numerical slack on the passivity bound.
pub const AMP_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RisError {
    #[error("config has {got} entries, want rows*cols+1 = {want}")]
    BadLength { got: usize, want: usize },
    #[error("element {index} has amplitude {amp} > 1")]
    Active { index: usize, amp: f64 },
    #[error("last entry must be exactly 1")]
    Unpinned,
    #[error("pattern {0:?} undefined for a {1}x{2} grid")]
    PatternTooSmall(PatternKind, usize, usize),
    #[error("amplitude threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("bad mask text: {0}")]
    BadMaskText(String),
}

/// 1-bit state grid: `true` = reflect, `false` = absorb. Row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self, RisError> {
        if bits.len() != rows * cols {
            return Err(RisError::BadLength {
                got: bits.len(),
                want: rows * cols,
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Self {
            rows,
            cols,
            bits: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn count_reflecting(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Fraction of elements in the reflect state.
    pub fn reflect_fraction(&self) -> f64 {
        self.count_reflecting() as f64 / self.bits.len() as f64
    }
}

/// Text format: one line of '1'/'0' per row, top row first.
impl fmt::Display for BitMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            for c in 0..self.cols {
                f.write_str(if self.get(r, c) { "1" } else { "0" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for BitMask {
    type Err = RisError;

    fn from_str(s: &str) -> Result<Self, RisError> {
        let rows: Vec<&str> = s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(RisError::BadMaskText("empty mask".into()));
        }
        let cols = rows[0].len();
        let mut bits = Vec::with_capacity(rows.len() * cols);
        for (i, line) in rows.iter().enumerate() {
            if line.len() != cols {
                return Err(RisError::BadMaskText(format!(
                    "row {i} has {} columns, want {cols}",
                    line.len()
                )));
            }
            for ch in line.chars() {
                match ch {
                    '1' => bits.push(true),
                    '0' => bits.push(false),
                    other => {
                        return Err(RisError::BadMaskText(format!("invalid character '{other}'")))
                    }
                }
            }
        }
        BitMask::new(rows.len(), cols, bits)
    }
}

/// The three canonical 1-bit configurations of the reflectarray studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// Every element reflects.
    FullReflect,
    /// Alternating columns reflect/absorb, column 0 reflecting. The
    /// periodic wavelength-pitch taper is what produces grating lobes.
    HalfAlternating,
    /// All reflect except a centred 4x4 absorbing block.
    CenterSquareAbsorb,
}

/// Build one of the canonical masks.
pub fn make_pattern(kind: PatternKind, rows: usize, cols: usize) -> Result<BitMask, RisError> {
    if rows == 0 || cols == 0 {
        return Err(RisError::PatternTooSmall(kind, rows, cols));
    }
    match kind {
        PatternKind::FullReflect => Ok(BitMask::filled(rows, cols, true)),
        PatternKind::HalfAlternating => {
            let mut m = BitMask::filled(rows, cols, false);
            for r in 0..rows {
                for c in (0..cols).step_by(2) {
                    m.set(r, c, true);
                }
            }
            Ok(m)
        }
        PatternKind::CenterSquareAbsorb => {
            if rows < 4 || cols < 4 {
                return Err(RisError::PatternTooSmall(kind, rows, cols));
            }
            let r0 = (rows - 4) / 2;
            let c0 = (cols - 4) / 2;
            let mut m = BitMask::filled(rows, cols, true);
            for r in r0..r0 + 4 {
                for c in c0..c0 + 4 {
                    m.set(r, c, false);
                }
            }
            Ok(m)
        }
    }
}

/// A continuous RIS configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RisConfig {
    v: CVec,
    rows: usize,
    cols: usize,
}

impl RisConfig {
    /// Wrap a reflection vector, checking passivity and the pinned entry.
    pub fn from_v(v: CVec, rows: usize, cols: usize) -> Result<Self, RisError> {
        let n = rows * cols;
        if v.len() != n + 1 {
            return Err(RisError::BadLength {
                got: v.len(),
                want: n + 1,
            });
        }
        for (i, z) in v.iter().take(n).enumerate() {
            let amp = z.norm();
            if amp > 1.0 + AMP_SLACK {
                return Err(RisError::Active { index: i, amp });
            }
        }
        if (v[n] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(RisError::Unpinned);
        }
        Ok(Self { v, rows, cols })
    }

    /// Every element reflecting with zero phase.
    pub fn full_reflect(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        Self {
            v: CVec::from_element(n + 1, Complex64::new(1.0, 0.0)),
            rows,
            cols,
        }
    }

    pub fn v(&self) -> &CVec {
        &self.v
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    /// Reinterpret the element vector on a different grid shape
    /// (the element count must match).
    pub fn with_shape(self, rows: usize, cols: usize) -> Result<Self, RisError> {
        RisConfig::from_v(self.v, rows, cols)
    }

    /// The physical per-element reflection coefficients `alpha_i e^{j phi_i}`
    /// (conjugates of the first N entries of `v`).
    pub fn phi_diagonal(&self) -> Vec<Complex64> {
        self.v.iter().take(self.elements()).map(|z| z.conj()).collect()
    }
}

/// The diagonal N x N matrix `Phi = diag(v[1..N]^H)`.
pub fn phi_from_v(cfg: &RisConfig) -> crate::channel::CMat {
    let n = cfg.elements();
    let diag = cfg.phi_diagonal();
    crate::channel::CMat::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Continuous configuration from a 1-bit mask: reflecting elements get
/// `e^{-j reflect_phase}`, absorbing elements 0.
pub fn v_from_bits(mask: &BitMask, reflect_phase: f64) -> RisConfig {
    let n = mask.bits().len();
    let on = Complex64::from_polar(1.0, -reflect_phase);
    let mut v = CVec::from_element(n + 1, Complex64::new(1.0, 0.0));
    for (i, bit) in mask.bits().iter().enumerate() {
        v[i] = if *bit { on } else { Complex64::new(0.0, 0.0) };
    }
    RisConfig {
        v,
        rows: mask.rows(),
        cols: mask.cols(),
    }
}

/// Collapse a continuous configuration to 1 bit per element:
/// reflect iff `|v_i| >= amp_threshold` (ties reflect).
pub fn quantize_1bit(cfg: &RisConfig, amp_threshold: f64) -> Result<BitMask, RisError> {
    if !(amp_threshold > 0.0 && amp_threshold < 1.0) {
        return Err(RisError::BadThreshold(amp_threshold));
    }
    let bits = cfg
        .v()
        .iter()
        .take(cfg.elements())
        .map(|z| z.norm() >= amp_threshold)
        .collect();
    BitMask::new(cfg.rows(), cfg.cols(), bits)
}
