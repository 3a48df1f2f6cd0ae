//! RIS-aided electromagnetic shielding toolkit.
//!
//! A reconfigurable intelligent surface (RIS) mounted on a wall can be driven
//! so that a chosen room receives as little signal as possible while the rest
//! of the floor plan stays served. This crate provides the pieces needed to
//! study that idea end to end:
//!
//! * [`scenario`] — floor-plan description (walls, materials, devices, RIS
//!   panel) with a TOML file format and validation,
//! * [`channel`] — Rician channel synthesis for the tx–RIS–receiver link set
//!   and the stacked effective channel that turns the cascade into the
//!   bilinear form `v^H H̄_u w`,
//! * [`ris`] — reflection-coefficient vectors, 1-bit reflect/absorb masks and
//!   the canonical mask patterns,
//! * [`optimizer`] — the sum-MSE shield objective and a multi-start projected
//!   gradient solver, certified against a binary brute-force oracle,
//! * [`metrics`] — per-user SINR / rate / MSE / received-power reports,
//! * [`raytracer`] — a 2D image-method coverage tracer for indoor blackout
//!   experiments,
//! * [`pattern`] — reflectarray array-factor cuts, 2D radiation maps and lobe
//!   detection (grating-lobe studies).
//!
//! All synthesis and solver entry points are deterministic functions of their
//! explicit seed.

// `!(x > 0.0)` style argument checks are deliberate: they reject NaN along
// with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod geom;
pub mod metrics;
pub mod optimizer;
pub mod pattern;
pub mod raytracer;
pub mod ris;
pub mod scenario;

pub use channel::{ChannelParams, ChannelSet, PathGeometry};
pub use geom::{Point2, Segment};
pub use num_complex::Complex64;
pub use optimizer::{Precoder, ShieldSolution, SolverOptions};
pub use ris::{BitMask, PatternKind, RisConfig};
pub use scenario::Scenario;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// dBm to linear milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Linear milliwatts to dBm. Zero or negative power maps to `-inf`, the
/// sentinel used throughout for "no signal".
pub fn mw_to_dbm(mw: f64) -> f64 {
    if mw > 0.0 {
        10.0 * mw.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// dB to linear power ratio.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
