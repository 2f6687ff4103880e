//! Random propagation: Rayleigh communication channels, ULA steering vectors, bistatic path
//! gains and Swerling-I target reflectivity.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cn, cn_matrix, CMat, CVec, J};
use crate::scenario::{azimuth, wrap_angle, Point, Scenario};

/// Half-wavelength ULA response: element t is exp(j t pi sin(phi)).
pub fn steering_vector(phi: f64, m: usize) -> CVec {
    let s = PI * phi.sin();
    CVec::from_iterator(m, (0..m).map(|t| (J * (t as f64 * s)).exp()))
}

/// Bistatic gain of the AP k -> target -> AP r path.
pub fn sensing_path_gain(d_tk: f64, d_tr: f64, lambda_c: f64) -> Result<f64> {
    if !(d_tk > 0.0 && d_tr > 0.0) {
        return Err(Error::Config(format!("path distances must be positive, got {d_tk}, {d_tr}")));
    }
    Ok(lambda_c * lambda_c / ((4.0 * PI).powi(3) * d_tk * d_tk * d_tr * d_tr))
}

/// Communication channels `h[i][k]` (UE i, transmit AP k), each `m_ue x m_ap`.
#[derive(Debug, Clone)]
pub struct CommChannelSet {
    pub h: Vec<Vec<CMat>>,
    pub omega: Vec<Vec<f64>>,
}

impl CommChannelSet {
    pub fn n_ue(&self) -> usize {
        self.h.len()
    }

    pub fn n_tx(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }
}

/// Large-scale gain d^-exponent.
pub fn pathloss(d: f64, exponent: f64) -> f64 {
    d.powf(-exponent)
}

pub fn draw_comm_channels<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> CommChannelSet {
    let cfg = &sc.cfg;
    let mut h = Vec::with_capacity(cfg.n_ue);
    let mut omega = Vec::with_capacity(cfg.n_ue);
    for ue in &sc.layout.ue_pos {
        let mut row = Vec::with_capacity(cfg.n_tx);
        let mut om = Vec::with_capacity(cfg.n_tx);
        for ap in &sc.layout.tx_ap_pos {
            let g = pathloss(ue.distance(ap), cfg.pathloss_exp);
            row.push(cn_matrix(rng, cfg.m_ue, cfg.m_ap, 1.0) * Complex64::new(g.sqrt(), 0.0));
            om.push(g);
        }
        h.push(row);
        omega.push(om);
    }
    CommChannelSet { h, omega }
}

/// Target geometry seen by every AP. Angles are in each AP's local array frame, whose
/// boresight points at the centre of the search area.
#[derive(Debug, Clone)]
pub struct SensingGeometry {
    pub phi_tx: Vec<f64>,
    pub phi_rx: Vec<f64>,
    pub boresight_tx: Vec<f64>,
    pub boresight_rx: Vec<f64>,
    /// `beta[r][k]`
    pub beta: Vec<Vec<f64>>,
}

/// Boresight of an array at `ap`: towards the origin, or along +x for an AP at the origin.
pub fn boresight(ap: Point) -> f64 {
    azimuth(ap, Point::new(0.0, 0.0)).unwrap_or(0.0)
}

/// Direction of `target` as seen from `ap`, in the AP's local frame.
pub fn local_angle(ap: Point, target: Point) -> Result<f64> {
    Ok(wrap_angle(azimuth(ap, target)? - boresight(ap)))
}

pub fn sensing_geometry(sc: &Scenario) -> Result<SensingGeometry> {
    let l = &sc.layout;
    let t = l.target_pos;
    let phi_tx = l.tx_ap_pos.iter().map(|&p| local_angle(p, t)).collect::<Result<Vec<_>>>()?;
    let phi_rx = l.rx_ap_pos.iter().map(|&p| local_angle(p, t)).collect::<Result<Vec<_>>>()?;
    let beta = l
        .rx_ap_pos
        .iter()
        .map(|r| {
            l.tx_ap_pos
                .iter()
                .map(|k| sensing_path_gain(t.distance(k), t.distance(r), sc.lin.lambda_c))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensingGeometry {
        phi_tx,
        phi_rx,
        boresight_tx: l.tx_ap_pos.iter().map(|&p| boresight(p)).collect(),
        boresight_rx: l.rx_ap_pos.iter().map(|&p| boresight(p)).collect(),
        beta,
    })
}

/// One Swerling-I block of bistatic reflectivities `alpha[(r, k)]`.
#[derive(Debug, Clone)]
pub struct RcsDraw {
    pub alpha: DMatrix<Complex64>,
    pub sigma2: f64,
    pub rho: f64,
}

/// alpha_{r,k} = sqrt(rho) c_r + sqrt(1 - rho) e_{r,k} with c_r, e_{r,k} i.i.d. CN(0, sigma^2).
pub fn draw_rcs<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> RcsDraw {
    let (n_rx, n_tx) = (sc.cfg.n_rx, sc.cfg.n_tx);
    let sigma2 = sc.lin.sigma_rcs2;
    let rho = sc.cfg.rcs_correlation;
    let mut alpha = DMatrix::zeros(n_rx, n_tx);
    for r in 0..n_rx {
        let common = cn(rng, sigma2);
        for k in 0..n_tx {
            let own = cn(rng, sigma2);
            alpha[(r, k)] = common * rho.sqrt() + own * (1.0 - rho).sqrt();
        }
    }
    RcsDraw { alpha, sigma2, rho }
}

/// cov(alpha_{r,j}, alpha_{r,k}): sigma^2 on the diagonal, rho sigma^2 elsewhere.
pub fn rcs_covariance(sc: &Scenario, r: usize, k: usize, j: usize) -> Result<Complex64> {
    let (n_rx, n_tx) = (sc.cfg.n_rx, sc.cfg.n_tx);
    if r >= n_rx || k >= n_tx || j >= n_tx {
        return Err(Error::Index(format!("(r={r}, k={k}, j={j}) with n_rx={n_rx}, n_tx={n_tx}")));
    }
    let s2 = sc.lin.sigma_rcs2;
    Ok(Complex64::new(if k == j { s2 } else { sc.cfg.rcs_correlation * s2 }, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::scenario::{default_layout, validate_config, SimulationConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scenario(f: impl FnOnce(&mut SimulationConfig)) -> Scenario {
        let mut cfg = SimulationConfig::preset(crate::scenario::Preset::Desk);
        f(&mut cfg);
        cfg.known_aps = cfg.known_aps.min(cfg.n_tx);
        let mut layout = default_layout();
        layout.tx_ap_pos.truncate(cfg.n_tx);
        layout.rx_ap_pos.truncate(cfg.n_rx);
        validate_config(&cfg, &layout).unwrap()
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 4);
        assert!(a.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let a = steering_vector(PI / 2.0, 2);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let a = steering_vector(PI / 6.0, 2);
        assert!((a[1] - J).norm() < 1e-15);
    }

    #[test]
    fn path_gain_examples() {
        let lc = 0.1578;
        let g = sensing_path_gain(100.0, 100.0, lc).unwrap();
        assert_relative_eq!(g, lc * lc / ((4.0 * PI).powi(3) * 1e8), max_relative = 1e-14);
        let g2 = sensing_path_gain(200.0, 100.0, lc).unwrap();
        assert_relative_eq!(g / g2, 4.0, max_relative = 1e-14);
        assert_eq!(sensing_path_gain(30.0, 70.0, lc).unwrap(), sensing_path_gain(70.0, 30.0, lc).unwrap());
        assert!(sensing_path_gain(0.0, 1.0, lc).is_err());
        assert!(sensing_path_gain(1.0, -1.0, lc).is_err());
    }

    #[test]
    fn pathloss_examples() {
        assert_eq!(pathloss(1.0, 3.0), 1.0);
        assert_relative_eq!(pathloss(10.0, 3.0), 1e-3, max_relative = 1e-14);
    }

    #[test]
    fn normalized_channel_entries_have_unit_variance() {
        let sc = scenario(|c| {
            c.m_ap = 25;
            c.m_ue = 25;
        });
        // 16 links * 625 entries = 10^4 samples
        let set = draw_comm_channels(&sc, &mut stream(5, Stream::CommChannel));
        let mut acc = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut n = 0usize;
        for i in 0..sc.cfg.n_ue {
            for k in 0..sc.cfg.n_tx {
                let s = set.omega[i][k].sqrt();
                for z in set.h[i][k].iter() {
                    acc += (z / s).norm_sqr();
                    mean += z / s;
                    n += 1;
                }
            }
        }
        assert_eq!(n, 25 * 25 * 32);
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        assert!(mean.norm() / (n as f64) < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn reference_layout_local_angles_are_unambiguous() {
        let sc = scenario(|_| {});
        let g = sensing_geometry(&sc).unwrap();
        for phi in g.phi_tx.iter().chain(&g.phi_rx) {
            assert!(phi.abs() < PI / 2.0, "{phi}");
        }
        let t = sc.layout.target_pos;
        let k = 6;
        let d = t.distance(&sc.layout.tx_ap_pos[k]);
        let r = t.distance(&sc.layout.rx_ap_pos[2]);
        assert_relative_eq!(g.beta[2][k], sensing_path_gain(d, r, sc.lin.lambda_c).unwrap(), max_relative = 0.0);
    }

    #[test]
    fn rcs_fully_correlated_is_constant_across_aps() {
        let sc = scenario(|c| c.rcs_correlation = 1.0);
        let d = draw_rcs(&sc, &mut stream(1, Stream::Rcs));
        for r in 0..sc.cfg.n_rx {
            for k in 1..sc.cfg.n_tx {
                assert_eq!(d.alpha[(r, k)], d.alpha[(r, 0)]);
            }
        }
    }

    #[test]
    fn rcs_statistics() {
        let sc = scenario(|c| {
            c.rcs_correlation = 0.0;
            c.n_rx = 1;
            c.n_tx = 2;
            c.sigma_rcs_dbsm = 10.0;
        });
        let mut rng = stream(2, Stream::Rcs);
        let n = 10_000;
        let (mut var, mut cross, mut mean) = (0.0, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for _ in 0..n {
            let d = draw_rcs(&sc, &mut rng);
            var += d.alpha[(0, 0)].norm_sqr();
            cross += d.alpha[(0, 0)] * d.alpha[(0, 1)].conj();
            mean += d.alpha[(0, 0)];
        }
        let nf = n as f64;
        assert!((var / nf - 10.0).abs() < 0.5, "variance {}", var / nf);
        assert!((cross / nf).norm() < 3.0 * 10.0 / 100.0, "cross {}", cross / nf);
        assert!((mean / nf).norm() < 4.0 * 10f64.sqrt() / nf.sqrt());
    }

    #[test]
    fn rcs_covariance_examples() {
        let sc = scenario(|c| c.rcs_correlation = 0.0);
        assert_eq!(rcs_covariance(&sc, 0, 1, 1).unwrap().re, sc.lin.sigma_rcs2);
        assert_eq!(rcs_covariance(&sc, 0, 1, 2).unwrap().re, 0.0);
        let sc = scenario(|c| c.rcs_correlation = 1.0);
        assert_relative_eq!(rcs_covariance(&sc, 3, 0, 7).unwrap().re, 10.0, max_relative = 1e-12);
        assert!(rcs_covariance(&sc, 4, 0, 0).is_err());
        assert!(rcs_covariance(&sc, 0, 8, 0).is_err());
    }

    proptest! {
        #[test]
        fn steering_vector_is_unit_modulus(phi in -PI..PI, m in 1usize..64) {
            let a = steering_vector(phi, m);
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
            let gram = (a.adjoint() * &a)[(0, 0)];
            prop_assert!((gram.re - m as f64).abs() < 1e-9);
            // a^T a* = m
            let t = a.iter().zip(a.iter()).map(|(x, y)| x * y.conj()).sum::<Complex64>();
            prop_assert!((t.re - m as f64).abs() < 1e-9 && t.im.abs() < 1e-9);
        }

        #[test]
        fn path_gain_decreases(d1 in 1.0f64..1e3, d2 in 1.0f64..1e3, bump in 1e-3f64..10.0) {
            let g = sensing_path_gain(d1, d2, 0.15).unwrap();
            prop_assert!(sensing_path_gain(d1 + bump, d2, 0.15).unwrap() < g);
            prop_assert!(sensing_path_gain(d1, d2 + bump, 0.15).unwrap() < g);
        }
    }
}
