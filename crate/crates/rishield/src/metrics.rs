//! Link-quality figures: per-user SINR, rate, MSE and received power.
//!
//! Power bookkeeping convention: channels carry absolute linear gains (path
//! loss included) and the precoder carries transmit amplitude in sqrt-mW, so
//! `|v^H H̄_u w_j|^2` is already milliwatts against the 1 mW reference and
//! maps to dBm with a plain `10 log10`. Exactly zero power is reported as
//! the `-inf` sentinel.

use crate::channel::{cascade_gain, ChannelSet};
use crate::mw_to_dbm;
use crate::optimizer::{mse_u, Precoder, SolverError};
use crate::ris::RisConfig;
use num_complex::Complex64;
use std::io::{self, Write};

/// Per-user link figures plus the system sum rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub users: Vec<UserLink>,
    /// `sum_u log2(1 + sinr_u)`, bits/s/Hz.
    pub sum_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserLink {
    pub user: usize,
    pub sinr_linear: f64,
    pub rate_bps_hz: f64,
    pub mse: f64,
    pub rx_power_dbm: f64,
}

fn cascade_row(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
    u: usize,
) -> Result<Vec<Complex64>, SolverError> {
    (0..precoder.w().ncols())
        .map(|j| Ok(cascade_gain(cfg.v(), &channels.h_bar[u], &precoder.column(j))?))
        .collect()
}

/// `|v^H H̄_u w_u|^2 / (sum_{j != u} |v^H H̄_u w_j|^2 + sigma_n^2)`.
pub fn sinr_u(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
    u: usize,
) -> Result<f64, SolverError> {
    if u >= channels.n_users() {
        return Err(SolverError::BadReceiverIndex(u, channels.n_users()));
    }
    let gains = cascade_row(cfg, precoder, channels, u)?;
    let signal = gains[u].norm_sqr();
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != u)
        .map(|(_, g)| g.norm_sqr())
        .sum();
    Ok(signal / (interference + channels.sigma2))
}

/// System sum rate `sum_u log2(1 + sinr_u)` over every receiver.
pub fn sum_rate(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
) -> Result<f64, SolverError> {
    let mut acc = 0.0;
    for u in 0..channels.n_users() {
        acc += (1.0 + sinr_u(cfg, precoder, channels, u)?).log2();
    }
    Ok(acc)
}

/// Total received power at receiver `u` in dBm
/// (`10 log10 sum_j |v^H H̄_u w_j|^2`); `-inf` when every term is zero.
pub fn rx_power_dbm(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
    u: usize,
) -> Result<f64, SolverError> {
    if u >= channels.n_users() {
        return Err(SolverError::BadReceiverIndex(u, channels.n_users()));
    }
    let gains = cascade_row(cfg, precoder, channels, u)?;
    let mw: f64 = gains.iter().map(|g| g.norm_sqr()).sum();
    Ok(mw_to_dbm(mw))
}

/// Evaluate every figure for every receiver.
pub fn link_report(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
) -> Result<LinkReport, SolverError> {
    let mut users = Vec::with_capacity(channels.n_users());
    let mut sum = 0.0;
    for u in 0..channels.n_users() {
        let sinr = sinr_u(cfg, precoder, channels, u)?;
        let rate = (1.0 + sinr).log2();
        sum += rate;
        users.push(UserLink {
            user: u,
            sinr_linear: sinr,
            rate_bps_hz: rate,
            mse: mse_u(cfg, precoder, channels, u)?,
            rx_power_dbm: rx_power_dbm(cfg, precoder, channels, u)?,
        });
    }
    Ok(LinkReport {
        users,
        sum_rate: sum,
    })
}

/// CSV form: header, one row per user, then a `# sum_rate_bps_hz` comment.
pub fn write_link_report_csv<W: Write>(out: &mut W, report: &LinkReport) -> io::Result<()> {
    writeln!(out, "user,sinr_linear,rate_bps_hz,mse,rx_power_dbm")?;
    for u in &report.users {
        writeln!(
            out,
            "{},{:.9e},{:.9e},{:.9e},{:.4}",
            u.user, u.sinr_linear, u.rate_bps_hz, u.mse, u.rx_power_dbm
        )?;
    }
    writeln!(out, "# sum_rate_bps_hz,{:.9e}", report.sum_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{CMat, CVec};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    /// Scalar two-user system with unit direct channels and a dead RIS.
    fn two_user_channels(sigma2: f64) -> ChannelSet {
        ChannelSet::new(
            CMat::zeros(1, 1),
            vec![CVec::from_vec(vec![one()]), CVec::from_vec(vec![one() * 2.0])],
            vec![CVec::zeros(1), CVec::zeros(1)],
            sigma2,
        )
        .unwrap()
    }

    fn absorb_cfg(n: usize) -> RisConfig {
        let mut v = CVec::zeros(n + 1);
        v[n] = one();
        RisConfig::from_v(v, 1, n).unwrap()
    }

    #[test]
    fn sinr_examples() {
        let ch = two_user_channels(0.5);
        let cfg = absorb_cfg(1);
        // Only w_0 active: no interference for user 0.
        let w = Precoder::new(
            CMat::from_row_slice(1, 2, &[one() * 0.8, Complex64::new(0.0, 0.0)]),
            2.0,
        )
        .unwrap();
        let s0 = sinr_u(&cfg, &w, &ch, 0).unwrap();
        assert_relative_eq!(s0, (0.8f64).powi(2) / 0.5, epsilon = 1e-12);
        // w_u = 0 -> SINR 0.
        assert_eq!(sinr_u(&cfg, &w, &ch, 1).unwrap(), 0.0);
    }

    #[test]
    fn sinr_matches_cascade_terms() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let cx = |r: &mut rand_chacha::ChaCha8Rng| {
            Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)
        };
        let n = 3;
        let users = 2;
        let ch = ChannelSet::new(
            CMat::from_fn(n, 2, |_, _| cx(&mut rng)),
            (0..users).map(|_| CVec::from_fn(2, |_, _| cx(&mut rng))).collect(),
            (0..users).map(|_| CVec::from_fn(n, |_, _| cx(&mut rng))).collect(),
            0.3,
        )
        .unwrap();
        let cfg = RisConfig::full_reflect(1, n);
        let w = Precoder::new(CMat::from_fn(2, 2, |_, _| cx(&mut rng) * 0.5), 10.0).unwrap();
        for u in 0..users {
            let g: Vec<Complex64> = (0..users)
                .map(|j| cascade_gain(cfg.v(), &ch.h_bar[u], &w.column(j)).unwrap())
                .collect();
            let want = g[u].norm_sqr()
                / (g.iter().enumerate().filter(|(j, _)| *j != u).map(|(_, z)| z.norm_sqr()).sum::<f64>()
                    + 0.3);
            assert_relative_eq!(sinr_u(&cfg, &w, &ch, u).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn sum_rate_examples() {
        let ch = two_user_channels(1.0);
        let cfg = absorb_cfg(1);
        // W = 0 -> zero rate.
        let w0 = Precoder::zeros(1, 2, 1.0).unwrap();
        assert_eq!(sum_rate(&cfg, &w0, &ch).unwrap(), 0.0);

        // Single user at SINR 1 -> exactly 1 bit/s/Hz.
        let ch1 = ChannelSet::new(
            CMat::zeros(1, 1),
            vec![CVec::from_vec(vec![one()])],
            vec![CVec::zeros(1)],
            1.0,
        )
        .unwrap();
        let w = Precoder::new(CMat::from_row_slice(1, 1, &[one()]), 1.0).unwrap();
        assert_relative_eq!(sum_rate(&absorb_cfg(1), &w, &ch1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reflect_beats_absorb_when_ris_path_dominates() {
        // Strong RIS path, weak direct path.
        let ch = ChannelSet::new(
            CMat::from_row_slice(2, 1, &[one(), one()]),
            vec![CVec::from_vec(vec![one() * 0.01])],
            vec![CVec::from_vec(vec![one(), one()])],
            0.1,
        )
        .unwrap();
        let w = Precoder::new(CMat::from_row_slice(1, 1, &[one()]), 1.0).unwrap();
        let reflect = RisConfig::full_reflect(1, 2);
        let absorb = absorb_cfg(2);
        let r_reflect = sum_rate(&reflect, &w, &ch).unwrap();
        let r_absorb = sum_rate(&absorb, &w, &ch).unwrap();
        assert!(
            r_absorb < r_reflect,
            "absorb {r_absorb} must fall below reflect {r_reflect}"
        );
    }

    #[test]
    fn rx_power_examples() {
        let ch1 = ChannelSet::new(
            CMat::zeros(1, 1),
            vec![CVec::from_vec(vec![one()])],
            vec![CVec::zeros(1)],
            1.0,
        )
        .unwrap();
        let cfg = absorb_cfg(1);
        // Unit channel, unit (1 mW) precoder -> 0 dBm.
        let w = Precoder::new(CMat::from_row_slice(1, 1, &[one()]), 4.0).unwrap();
        assert_relative_eq!(rx_power_dbm(&cfg, &w, &ch1, 0).unwrap(), 0.0, epsilon = 1e-12);

        // Doubling the transmit power adds 10 log10(2) dB.
        let w2 = Precoder::new(CMat::from_row_slice(1, 1, &[one() * 2f64.sqrt()]), 4.0).unwrap();
        assert_relative_eq!(
            rx_power_dbm(&cfg, &w2, &ch1, 0).unwrap(),
            10.0 * 2f64.log10(),
            epsilon = 1e-9
        );

        // All-zero coefficients -> sentinel.
        let w0 = Precoder::zeros(1, 1, 1.0).unwrap();
        assert_eq!(rx_power_dbm(&cfg, &w0, &ch1, 0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn global_precoder_phase_leaves_sinr_unchanged() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let cx = |r: &mut rand_chacha::ChaCha8Rng| {
            Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)
        };
        let ch = ChannelSet::new(
            CMat::from_fn(4, 2, |_, _| cx(&mut rng)),
            vec![CVec::from_fn(2, |_, _| cx(&mut rng)), CVec::from_fn(2, |_, _| cx(&mut rng))],
            vec![CVec::from_fn(4, |_, _| cx(&mut rng)), CVec::from_fn(4, |_, _| cx(&mut rng))],
            0.2,
        )
        .unwrap();
        let cfg = RisConfig::full_reflect(2, 2);
        let w = CMat::from_fn(2, 2, |_, _| cx(&mut rng));
        let rot = Complex64::from_polar(1.0, 1.234);
        let p1 = Precoder::new(w.clone(), 10.0).unwrap();
        let p2 = Precoder::new(w * rot, 10.0).unwrap();
        for u in 0..2 {
            assert_relative_eq!(
                sinr_u(&cfg, &p1, &ch, u).unwrap(),
                sinr_u(&cfg, &p2, &ch, u).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn mse_sinr_consistency_single_user() {
        // Zero interference: mse = |g w - 1|^2 + sigma^2, sinr = |g w|^2 / sigma^2,
        // both from the same cascade gain.
        let g = Complex64::new(0.6, -0.3);
        let ch = ChannelSet::new(
            CMat::zeros(1, 1),
            vec![CVec::from_vec(vec![g.conj()])], // h_d^H w = g w
            vec![CVec::zeros(1)],
            0.04,
        )
        .unwrap();
        let cfg = absorb_cfg(1);
        let wv = Complex64::new(0.9, 0.2);
        let w = Precoder::new(CMat::from_row_slice(1, 1, &[wv]), 2.0).unwrap();
        let gw = g * wv;
        assert_relative_eq!(
            mse_u(&cfg, &w, &ch, 0).unwrap(),
            (gw - one()).norm_sqr() + 0.04,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            sinr_u(&cfg, &w, &ch, 0).unwrap(),
            gw.norm_sqr() / 0.04,
            epsilon = 1e-12
        );
    }

    #[test]
    fn report_rates_consistent() {
        let ch = two_user_channels(0.5);
        let cfg = absorb_cfg(1);
        let w = Precoder::new(
            CMat::from_row_slice(1, 2, &[one() * 0.4, one() * 0.3]),
            1.0,
        )
        .unwrap();
        let rep = link_report(&cfg, &w, &ch).unwrap();
        let mut sum = 0.0;
        for u in &rep.users {
            assert_relative_eq!(u.rate_bps_hz, (1.0 + u.sinr_linear).log2(), epsilon = 1e-12);
            assert!(u.sinr_linear >= 0.0);
            sum += u.rate_bps_hz;
        }
        assert_relative_eq!(rep.sum_rate, sum, epsilon = 1e-12);

        let mut buf = Vec::new();
        write_link_report_csv(&mut buf, &rep).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("user,sinr_linear"));
        assert_eq!(text.lines().count(), 1 + 2 + 1);
    }
}
