//! Channel synthesis for the tx–RIS–receiver link set.
//!
//! For each receiver `u` the system carries a direct link `h_d,u` (Sigma
//! entries), the tx–RIS matrix `G` (N x Sigma) and the RIS–receiver link
//! `h_u` (N entries). Stacking the element-wise cascade over the direct row
//! gives the effective channel
//!
//! ```text
//! H̄_u = [ diag(h_u^H) G ]     ((N+1) x Sigma)
//!       [ h_d,u^H       ]
//! ```
//!
//! so that `(h_u^H Phi G + h_d,u^H) w = v^H H̄_u w` for the reflection vector
//! `v` with pinned last entry 1. Every quantity downstream (MSE, SINR,
//! received power, the shield objective) is built from that bilinear form.
//!
//! Links mix a geometric line-of-sight ray with Rayleigh multipath using a
//! Rician factor K: `sqrt(K/(K+1)) * LoS + sqrt(1/(K+1)) * NLoS`. Gaussians
//! come from a seeded counter-based generator (ChaCha) via Box-Muller, with
//! one derived seed per (link, receiver) so adding a receiver never perturbs
//! the channels of the others.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::io::{self, BufRead, Write};
use thiserror::Error;

use crate::db_to_lin;
use crate::geom::{Point2, Segment};
use crate::scenario::Scenario;

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("sin of angle must lie in [-1, 1], got {0}")]
    BadSinAngle(f64),
    #[error("steering vector needs at least one element")]
    EmptySteering,
    #[error("non-positive input: {0}")]
    NonPositive(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cascade vector must have last entry pinned to 1")]
    UnpinnedCascadeVector,
    #[error("scenario has no RIS panel")]
    NoRisPanel,
    #[error("bad dump format: {0}")]
    BadDump(String),
}

// ---------------------------------------------------------------------------
// Steering and path loss
// ---------------------------------------------------------------------------

/// Uniform linear array steering vector at half-wavelength pitch:
/// entry k = exp(j pi k sin_angle). Unit-modulus entries, ||a||^2 = n.
pub fn steering_vector(n_elems: usize, sin_angle: f64) -> Result<CVec, ChannelError> {
    if n_elems == 0 {
        return Err(ChannelError::EmptySteering);
    }
    if !(-1.0..=1.0).contains(&sin_angle) || sin_angle.is_nan() {
        return Err(ChannelError::BadSinAngle(sin_angle));
    }
    Ok(CVec::from_fn(n_elems, |k, _| {
        Complex64::from_polar(1.0, PI * k as f64 * sin_angle)
    }))
}

/// Planar-array steering as the Kronecker product of row and column ULA
/// steering, row-major element order (element (r, c) -> index r*cols + c).
pub fn upa_steering(
    rows: usize,
    cols: usize,
    sin_row: f64,
    sin_col: f64,
) -> Result<CVec, ChannelError> {
    let ar = steering_vector(rows, sin_row)?;
    let ac = steering_vector(cols, sin_col)?;
    Ok(CVec::from_fn(rows * cols, |k, _| ar[k / cols] * ac[k % cols]))
}

/// Linear power gain of a propagation leg: (lambda / 4 pi)^2 d^-exponent,
/// with the distance clamped below 1 m. Exponent 2 is free space.
pub fn path_loss_gain(d_m: f64, lambda_m: f64, exponent: f64) -> Result<f64, ChannelError> {
    if !(d_m > 0.0) {
        return Err(ChannelError::NonPositive("distance"));
    }
    if !(lambda_m > 0.0) {
        return Err(ChannelError::NonPositive("wavelength"));
    }
    if !(exponent >= 0.0 && exponent.is_finite()) {
        return Err(ChannelError::NonPositive("exponent"));
    }
    let d = d_m.max(1.0);
    let a = lambda_m / (4.0 * PI);
    Ok(a * a * d.powf(-exponent))
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Lengths, departure/arrival angles and visibility flags of the three legs
/// serving one receiver. Angles are radians in [-pi, pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    /// Direct tx-rx length, m.
    pub d_direct: f64,
    /// Direct angle of departure at the tx array.
    pub theta_direct: f64,
    /// tx-RIS length, m.
    pub d_tx_ris: f64,
    /// Angle of departure at the tx toward the RIS.
    pub psi_dep: f64,
    /// Angle of arrival at the RIS from the tx.
    pub psi_arr: f64,
    /// RIS-rx length, m.
    pub d_ris_rx: f64,
    /// Angle of departure at the RIS toward the receiver.
    pub psi_ris_rx: f64,
    pub los_direct: bool,
    pub los_ris_rx: bool,
}

impl PathGeometry {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for d in [self.d_direct, self.d_tx_ris, self.d_ris_rx] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ChannelError::NonPositive("path length"));
            }
        }
        for a in [self.theta_direct, self.psi_dep, self.psi_arr, self.psi_ris_rx] {
            if !(-PI..PI).contains(&a) {
                return Err(ChannelError::BadSinAngle(a));
            }
        }
        Ok(())
    }

    /// Derive geometry from positions. The tx array axis points along +y,
    /// the RIS element axis along its mounting segment; departure/arrival
    /// angles are taken against the respective array axis, so the steering
    /// argument is the projection of the unit direction onto that axis.
    pub fn from_points(
        tx: Point2,
        ris: &Segment,
        rx: Point2,
        los_direct: bool,
        los_ris_rx: bool,
    ) -> Self {
        let proj = |from: Point2, to: Point2, axis: (f64, f64)| -> (f64, f64) {
            let d = from.dist(to).max(1e-9);
            let ux = (to.x - from.x) / d;
            let uy = (to.y - from.y) / d;
            let s = (ux * axis.0 + uy * axis.1).clamp(-1.0, 1.0);
            (d, s.asin())
        };
        let tx_axis = (0.0, 1.0);
        let ris_axis = ris.direction();
        let ris_mid = ris.midpoint();
        let (d_direct, theta_direct) = proj(tx, rx, tx_axis);
        let (d_tx_ris, psi_dep) = proj(tx, ris_mid, tx_axis);
        let (_, psi_arr) = proj(ris_mid, tx, ris_axis);
        let (d_ris_rx, psi_ris_rx) = proj(ris_mid, rx, ris_axis);
        Self {
            d_direct,
            theta_direct,
            d_tx_ris,
            psi_dep,
            psi_arr,
            d_ris_rx,
            psi_ris_rx,
            los_direct,
            los_ris_rx,
        }
    }
}

// ---------------------------------------------------------------------------
// Synthesis parameters and RNG plumbing
// ---------------------------------------------------------------------------

/// Knobs of the statistical model. `lambda_m` anchors all path-loss values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub lambda_m: f64,
    /// Rician factor on the direct link when it has line of sight, dB.
    pub k_direct_db: f64,
    /// Rician factor on the RIS legs, dB.
    pub k_ris_db: f64,
    /// Path-loss exponent of line-of-sight legs (and of the RIS legs'
    /// multipath, which shares the leg's near-LoS geometry).
    pub exp_los: f64,
    /// Path-loss exponent of the direct link's multipath component.
    pub exp_nlos_direct: f64,
}

impl ChannelParams {
    pub fn new(lambda_m: f64) -> Self {
        Self {
            lambda_m,
            k_direct_db: 10.0,
            k_ris_db: 10.0,
            exp_los: 2.0,
            exp_nlos_direct: 3.0,
        }
    }
}

/// splitmix64; used to derive independent per-link seeds from a master seed.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream identifiers of the three link families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkStream {
    TxRis,
    Direct(u32),
    RisRx(u32),
}

/// Seed for one link of one receiver. Streams are disjoint by construction:
/// the derived seed depends only on (master, link kind, receiver index).
pub fn derive_seed(master: u64, link: LinkStream) -> u64 {
    let tag = match link {
        LinkStream::TxRis => 1u64 << 32,
        LinkStream::Direct(u) => (2u64 << 32) | u as u64,
        LinkStream::RisRx(u) => (3u64 << 32) | u as u64,
    };
    splitmix64(master ^ splitmix64(tag))
}

/// Circularly-symmetric complex Gaussian with unit second moment,
/// via Box-Muller on two uniform draws.
fn std_complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random();
    Complex64::from_polar((-u1.ln()).sqrt(), 2.0 * PI * u2)
}

fn rician_weights(k_db: f64, los: bool) -> (f64, f64) {
    if los {
        let k = db_to_lin(k_db);
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    } else {
        (0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// Link synthesis
// ---------------------------------------------------------------------------

/// Direct tx-rx link `h_d,u`: Rician mix of a steered LoS ray (exponent
/// `exp_los`) and Rayleigh multipath (exponent `exp_nlos_direct`).
/// Deterministic per seed.
pub fn synth_direct(
    geom: &PathGeometry,
    n_tx: usize,
    params: &ChannelParams,
    seed: u64,
) -> Result<CVec, ChannelError> {
    geom.validate()?;
    let g_los = path_loss_gain(geom.d_direct, params.lambda_m, params.exp_los)?;
    let g_nlos = path_loss_gain(geom.d_direct, params.lambda_m, params.exp_nlos_direct)?;
    let (w_los, w_nlos) = rician_weights(params.k_direct_db, geom.los_direct);
    let a = steering_vector(n_tx, geom.theta_direct.sin())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let los_amp = w_los * g_los.sqrt();
    let nlos_amp = w_nlos * g_nlos.sqrt();
    Ok(CVec::from_iterator(
        n_tx,
        a.iter()
            .map(|ak| los_amp * ak + nlos_amp * std_complex_gaussian(&mut rng)),
    ))
}

/// tx-RIS matrix `G` (N x Sigma): rank-one steered LoS outer product plus
/// Rayleigh multipath, both at the leg's exponent. Entries are drawn in
/// row-major element order.
pub fn synth_tx_ris(
    geom: &PathGeometry,
    n_ris: usize,
    n_tx: usize,
    params: &ChannelParams,
    seed: u64,
) -> Result<CMat, ChannelError> {
    geom.validate()?;
    if n_ris == 0 || n_tx == 0 {
        return Err(ChannelError::DimensionMismatch(
            "tx-RIS link needs positive dimensions".into(),
        ));
    }
    let g1 = path_loss_gain(geom.d_tx_ris, params.lambda_m, params.exp_los)?;
    let (w_los, w_nlos) = rician_weights(params.k_ris_db, true);
    let a_ris = steering_vector(n_ris, geom.psi_arr.sin())?;
    let a_tx = steering_vector(n_tx, geom.psi_dep.sin())?;
    let los_amp = w_los * g1.sqrt();
    let nlos_amp = w_nlos * g1.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n_ris * n_tx);
    for r in 0..n_ris {
        for c in 0..n_tx {
            let los = a_ris[r] * a_tx[c].conj();
            entries.push(los_amp * los + nlos_amp * std_complex_gaussian(&mut rng));
        }
    }
    Ok(CMat::from_row_slice(n_ris, n_tx, &entries))
}

/// RIS-rx link `h_u`: same contract as [`synth_direct`] with RIS-side
/// steering and the RIS-leg exponent for both mix components.
pub fn synth_ris_rx(
    geom: &PathGeometry,
    n_ris: usize,
    params: &ChannelParams,
    seed: u64,
) -> Result<CVec, ChannelError> {
    geom.validate()?;
    let g2 = path_loss_gain(geom.d_ris_rx, params.lambda_m, params.exp_los)?;
    let (w_los, w_nlos) = rician_weights(params.k_ris_db, geom.los_ris_rx);
    let a = steering_vector(n_ris, geom.psi_ris_rx.sin())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let los_amp = w_los * g2.sqrt();
    let nlos_amp = w_nlos * g2.sqrt();
    Ok(CVec::from_iterator(
        n_ris,
        a.iter()
            .map(|ak| los_amp * ak + nlos_amp * std_complex_gaussian(&mut rng)),
    ))
}

// ---------------------------------------------------------------------------
// Effective channel and cascade
// ---------------------------------------------------------------------------

/// Stack `diag(h_u^H) G` over `h_d,u^H` into the (N+1) x Sigma effective
/// channel.
pub fn compose_effective(h_ris: &CVec, g: &CMat, h_direct: &CVec) -> Result<CMat, ChannelError> {
    let n = h_ris.len();
    let sigma = h_direct.len();
    if g.nrows() != n || g.ncols() != sigma {
        return Err(ChannelError::DimensionMismatch(format!(
            "G is {}x{}, want {}x{}",
            g.nrows(),
            g.ncols(),
            n,
            sigma
        )));
    }
    Ok(CMat::from_fn(n + 1, sigma, |i, j| {
        if i < n {
            h_ris[i].conj() * g[(i, j)]
        } else {
            h_direct[j].conj()
        }
    }))
}

/// The cascade gain `v^H H̄_u w`. Requires the pinned last entry `v_{N+1}=1`.
pub fn cascade_gain(v: &CVec, h_bar: &CMat, w: &CVec) -> Result<Complex64, ChannelError> {
    if v.len() != h_bar.nrows() || w.len() != h_bar.ncols() {
        return Err(ChannelError::DimensionMismatch(format!(
            "v {} / H {}x{} / w {}",
            v.len(),
            h_bar.nrows(),
            h_bar.ncols(),
            w.len()
        )));
    }
    let pin = v[v.len() - 1];
    if (pin - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
        return Err(ChannelError::UnpinnedCascadeVector);
    }
    Ok(v.dotc(&(h_bar * w)))
}

/// All channels of one scene realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// tx-RIS matrix, N x Sigma.
    pub g: CMat,
    /// Direct links, one Sigma-vector per receiver.
    pub h_direct: Vec<CVec>,
    /// RIS-receiver links, one N-vector per receiver.
    pub h_ris: Vec<CVec>,
    /// Composed effective channels, one (N+1) x Sigma matrix per receiver.
    pub h_bar: Vec<CMat>,
    /// Noise power sigma_n^2 (linear).
    pub sigma2: f64,
}

impl ChannelSet {
    /// Compose the effective channels from raw links.
    pub fn new(
        g: CMat,
        h_direct: Vec<CVec>,
        h_ris: Vec<CVec>,
        sigma2: f64,
    ) -> Result<Self, ChannelError> {
        if h_direct.len() != h_ris.len() {
            return Err(ChannelError::DimensionMismatch(
                "per-receiver link counts differ".into(),
            ));
        }
        // Zero is allowed for noise-free study instances.
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(ChannelError::NonPositive("noise power"));
        }
        let h_bar = h_direct
            .iter()
            .zip(&h_ris)
            .map(|(hd, hr)| compose_effective(hr, &g, hd))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            g,
            h_direct,
            h_ris,
            h_bar,
            sigma2,
        })
    }

    /// Synthesize every link of a scenario. LoS flags come from wall
    /// blockage (a leg is LoS when it crosses no wall), seeds from the
    /// master seed via [`derive_seed`]. Requires a RIS panel.
    pub fn from_scenario(
        s: &Scenario,
        params: &ChannelParams,
        master_seed: u64,
    ) -> Result<Self, ChannelError> {
        let ris = s.ris.as_ref().ok_or(ChannelError::NoRisPanel)?;
        let n = ris.elements();
        let sigma = s.tx.antennas;
        let blocked = |a: Point2, b: Point2| {
            s.walls
                .iter()
                .any(|w| w.segment.crossing(a, b).is_some())
        };
        let ris_mid = ris.segment.midpoint();
        let mut h_direct = Vec::with_capacity(s.receivers.len());
        let mut h_ris = Vec::with_capacity(s.receivers.len());
        let mut g = None;
        for (u, rx) in s.receivers.iter().enumerate() {
            let geom = PathGeometry::from_points(
                s.tx.position,
                &ris.segment,
                rx.position,
                !blocked(s.tx.position, rx.position),
                !blocked(ris_mid, rx.position),
            );
            if g.is_none() {
                g = Some(synth_tx_ris(
                    &geom,
                    n,
                    sigma,
                    params,
                    derive_seed(master_seed, LinkStream::TxRis),
                )?);
            }
            h_direct.push(synth_direct(
                &geom,
                sigma,
                params,
                derive_seed(master_seed, LinkStream::Direct(u as u32)),
            )?);
            h_ris.push(synth_ris_rx(
                &geom,
                n,
                params,
                derive_seed(master_seed, LinkStream::RisRx(u as u32)),
            )?);
        }
        let g = match g {
            Some(g) => g,
            // No receivers: still synthesize G from the tx-RIS geometry.
            None => {
                let geom = PathGeometry::from_points(
                    s.tx.position,
                    &ris.segment,
                    ris_mid,
                    true,
                    true,
                );
                synth_tx_ris(&geom, n, sigma, params, derive_seed(master_seed, LinkStream::TxRis))?
            }
        };
        Self::new(g, h_direct, h_ris, s.noise_mw())
    }

    pub fn n_elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_users(&self) -> usize {
        self.h_direct.len()
    }
}

// ---------------------------------------------------------------------------
// Matrix dump (interleaved re/im CSV)
// ---------------------------------------------------------------------------

/// Write a complex matrix as CSV: a `rows,cols` header line, then one line
/// per row with interleaved `re,im` entries.
pub fn write_matrix_csv<W: Write>(out: &mut W, m: &CMat) -> io::Result<()> {
    writeln!(out, "{},{}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let mut fields = Vec::with_capacity(2 * m.ncols());
        for c in 0..m.ncols() {
            fields.push(format!("{}", m[(r, c)].re));
            fields.push(format!("{}", m[(r, c)].im));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<CMat, ChannelError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| ChannelError::BadDump("missing header".into()))?
        .map_err(|e| ChannelError::BadDump(e.to_string()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|e| ChannelError::BadDump(format!("bad header: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(ChannelError::BadDump("header must be rows,cols".into()));
    };
    let mut entries = Vec::with_capacity(rows * cols);
    for line in lines {
        let line = line.map_err(|e| ChannelError::BadDump(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|e| ChannelError::BadDump(format!("bad value: {e}")))?;
        if vals.len() != 2 * cols {
            return Err(ChannelError::BadDump(format!(
                "row has {} values, want {}",
                vals.len(),
                2 * cols
            )));
        }
        for pair in vals.chunks_exact(2) {
            entries.push(Complex64::new(pair[0], pair[1]));
        }
    }
    if entries.len() != rows * cols {
        return Err(ChannelError::BadDump(format!(
            "{} entries, want {}",
            entries.len(),
            rows * cols
        )));
    }
    Ok(CMat::from_row_slice(rows, cols, &entries))
}
