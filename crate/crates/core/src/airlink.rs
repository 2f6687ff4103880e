//! Symbols, transmit/receive signal synthesis and the two SINR metrics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{rcs_covariance, steering_vector, CommChannelSet, RcsDraw, SensingGeometry};
use crate::error::{Error, Result};
use crate::linalg::{c, cn, cn_matrix, norm2, CMat, CVec};
use crate::scenario::Scenario;

/// Rows `0..n_ue` carry the UE data streams, the last row the sensing waveform.
#[derive(Debug, Clone)]
pub struct SymbolBlock {
    pub s: CMat,
}

impl SymbolBlock {
    pub fn len(&self) -> usize {
        self.s.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.s.ncols() == 0
    }

    pub fn streams(&self) -> usize {
        self.s.nrows()
    }

    /// sum_n s[n] s[n]^H
    pub fn gram(&self) -> CMat {
        &self.s * self.s.adjoint()
    }
}

/// Per-AP precoders `w[k]`, each `m_ap x (n_ue + 1)`; the last column is the sensing precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub w: Vec<CMat>,
}

impl PrecoderSet {
    pub fn zeros(n_tx: usize, m_ap: usize, n_ue: usize) -> Self {
        PrecoderSet { w: vec![CMat::zeros(m_ap, n_ue + 1); n_tx] }
    }

    pub fn n_tx(&self) -> usize {
        self.w.len()
    }

    pub fn m_ap(&self) -> usize {
        self.w.first().map_or(0, |w| w.nrows())
    }

    pub fn n_ue(&self) -> usize {
        self.w.first().map_or(0, |w| w.ncols() - 1)
    }

    pub fn ap_power(&self, k: usize) -> f64 {
        self.w[k].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.w.iter().flat_map(|w| w.iter()).map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &PrecoderSet) -> f64 {
        self.w
            .iter()
            .zip(&other.w)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, f: f64) -> PrecoderSet {
        PrecoderSet { w: self.w.iter().map(|w| w * c(f)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveBeamformers {
    pub u: Vec<CVec>,
}

const QPSK: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Unit-power QPSK data rows and a unit-power complex Gaussian sensing row.
pub fn draw_symbols<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> SymbolBlock {
    let (n_ue, n) = (sc.cfg.n_ue, sc.cfg.block_len);
    let mut s = CMat::zeros(n_ue + 1, n);
    for col in 0..n {
        for row in 0..n_ue {
            let re = if rng.random::<bool>() { QPSK } else { -QPSK };
            let im = if rng.random::<bool>() { QPSK } else { -QPSK };
            s[(row, col)] = Complex64::new(re, im);
        }
        s[(n_ue, col)] = cn(rng, 1.0);
    }
    SymbolBlock { s }
}

fn check_block(wset: &PrecoderSet, s: &SymbolBlock) -> Result<()> {
    if wset.w.iter().any(|w| w.ncols() != s.streams()) {
        return Err(Error::Dimension(format!(
            "precoders have {} columns, symbol block has {} streams",
            wset.n_ue() + 1,
            s.streams()
        )));
    }
    Ok(())
}

/// x_k[n] = W_k s[n] for every symbol of the block.
pub fn transmit_signal(wset: &PrecoderSet, s: &SymbolBlock, k: usize) -> Result<CMat> {
    check_block(wset, s)?;
    let w = wset.w.get(k).ok_or_else(|| Error::Index(format!("transmit AP {k}")))?;
    Ok(w * &s.s)
}

/// Received block at UE i: (noisy, noiseless).
pub fn ue_received<R: Rng + ?Sized>(
    channels: &CommChannelSet,
    wset: &PrecoderSet,
    s: &SymbolBlock,
    i: usize,
    sigma_i2: f64,
    noise_rng: &mut R,
) -> Result<(CMat, CMat)> {
    check_block(wset, s)?;
    if channels.n_tx() != wset.n_tx() {
        return Err(Error::Dimension("channel and precoder AP counts differ".into()));
    }
    let row = channels.h.get(i).ok_or_else(|| Error::Index(format!("UE {i}")))?;
    let m_ue = row[0].nrows();
    let mut clean = CMat::zeros(m_ue, s.len());
    for (h, w) in row.iter().zip(&wset.w) {
        if h.ncols() != w.nrows() {
            return Err(Error::Dimension("channel columns differ from AP antennas".into()));
        }
        clean += h * (w * &s.s);
    }
    let noisy = &clean + cn_matrix(noise_rng, m_ue, s.len(), sigma_i2);
    Ok((noisy, clean))
}

/// SINR of UE i's stream from AP k through receive beamformer u.
pub fn comm_sinr_with(h: &CMat, w_k: &CMat, u: &CVec, i: usize, sigma_i2: f64) -> Result<f64> {
    let un = norm2(u);
    if un <= 0.0 || !un.is_finite() {
        return Err(Error::Numerical("receive beamformer has zero norm".into()));
    }
    if h.nrows() != u.len() || h.ncols() != w_k.nrows() {
        return Err(Error::Dimension("comm_sinr operand shapes".into()));
    }
    // effective row u^H H_{i,k} W_k
    let g = u.adjoint() * h * w_k;
    let desired = g[(0, i)].norm_sqr();
    let interference: f64 = (0..g.ncols()).filter(|&l| l != i).map(|l| g[(0, l)].norm_sqr()).sum();
    Ok(desired / (interference + sigma_i2 * un))
}

pub fn comm_sinr(
    channels: &CommChannelSet,
    wset: &PrecoderSet,
    u_i: &CVec,
    i: usize,
    k: usize,
    sigma_i2: f64,
) -> Result<f64> {
    let h = channels
        .h
        .get(i)
        .and_then(|r| r.get(k))
        .ok_or_else(|| Error::Index(format!("link (UE {i}, AP {k})")))?;
    let w = wset.w.get(k).ok_or_else(|| Error::Index(format!("AP {k}")))?;
    comm_sinr_with(h, w, u_i, i, sigma_i2)
}

/// Smallest gamma_{i,k} over all UEs and APs.
pub fn min_comm_sinr(
    channels: &CommChannelSet,
    wset: &PrecoderSet,
    u: &ReceiveBeamformers,
    sigma_i2: f64,
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for i in 0..channels.n_ue() {
        for k in 0..channels.n_tx() {
            worst = worst.min(comm_sinr(channels, wset, &u.u[i], i, k, sigma_i2)?);
        }
    }
    Ok(worst)
}

/// Block received at sensing AP r: (noisy, noiseless). `xset[k]` is AP k's transmit block.
pub fn rx_ap_received<R: Rng + ?Sized>(
    geom: &SensingGeometry,
    rcs: &RcsDraw,
    xset: &[CMat],
    r: usize,
    sigma_n2: f64,
    noise_rng: &mut R,
) -> Result<(CMat, CMat)> {
    if xset.len() != geom.phi_tx.len() || r >= geom.phi_rx.len() {
        return Err(Error::Dimension("transmit blocks or receive index do not match geometry".into()));
    }
    let m_ap = xset[0].nrows();
    let n = xset[0].ncols();
    let a_r = steering_vector(geom.phi_rx[r], m_ap);
    // combined scalar stream sum_k alpha sqrt(beta) a^T(phi_k) x_k[n]
    let mut combined = CMat::zeros(1, n);
    for (k, x) in xset.iter().enumerate() {
        if x.nrows() != m_ap || x.ncols() != n {
            return Err(Error::Dimension(format!("transmit block {k} shape")));
        }
        let a_k = steering_vector(geom.phi_tx[k], m_ap);
        let gain = rcs.alpha[(r, k)] * geom.beta[r][k].sqrt();
        combined += (a_k.transpose() * x) * gain;
    }
    let clean = &a_r * combined;
    let noisy = &clean + cn_matrix(noise_rng, m_ap, n, sigma_n2);
    Ok((noisy, clean))
}

/// phi-weights summed over receive APs: entry (k, j) is sum_r sqrt(beta_rk beta_rj) a^H(phi_r) cov(alpha_rj, alpha_rk) a(phi_r).
pub fn sensing_weights(sc: &Scenario, geom: &SensingGeometry) -> Result<DMatrix<Complex64>> {
    let (n_rx, n_tx, m) = (sc.cfg.n_rx, sc.cfg.n_tx, sc.cfg.m_ap);
    let mut phi = DMatrix::zeros(n_tx, n_tx);
    for r in 0..n_rx {
        let a_r = steering_vector(geom.phi_rx[r], m);
        let aa = a_r.dotc(&a_r);
        for k in 0..n_tx {
            for j in 0..n_tx {
                let cov = rcs_covariance(sc, r, j, k)?;
                phi[(k, j)] += c((geom.beta[r][k] * geom.beta[r][j]).sqrt()) * aa * cov;
            }
        }
    }
    Ok(phi)
}

/// zeta = 1 / ((N - 1) M_AP N_Rx sigma_n^2)
pub fn zeta(sc: &Scenario) -> f64 {
    1.0 / ((sc.cfg.block_len as f64 - 1.0) * sc.cfg.m_ap as f64 * sc.cfg.n_rx as f64 * sc.lin.sigma_n2)
}

/// Sensing SINR for symbol Gram matrix `gram = sum_n s[n] s[n]^H`.
pub fn sensing_sinr_gram(sc: &Scenario, geom: &SensingGeometry, wset: &PrecoderSet, gram: &CMat) -> Result<f64> {
    let n_tx = wset.n_tx();
    if n_tx != sc.cfg.n_tx || gram.nrows() != wset.n_ue() + 1 {
        return Err(Error::Dimension("sensing_sinr operands".into()));
    }
    let phi = sensing_weights(sc, geom)?;
    let m = wset.m_ap();
    // g_k = a^T(phi_k) W_k, so W_k^H A_kj W_j = g_k^H g_j
    let g: Vec<nalgebra::RowDVector<Complex64>> = (0..n_tx)
        .map(|k| steering_vector(geom.phi_tx[k], m).transpose() * &wset.w[k])
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for k in 0..n_tx {
        for j in 0..n_tx {
            // tr(g_k^H g_j S) = g_j S g_k^H
            let term = phi[(k, j)] * (&g[j] * gram * g[k].adjoint())[(0, 0)];
            scale += term.norm();
            total += term;
        }
    }
    if total.im.abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "sensing SINR accumulated a non-Hermitian residual {:.3e} (scale {:.3e})",
            total.im, scale
        )));
    }
    Ok(zeta(sc) * total.re)
}

pub fn sensing_sinr(sc: &Scenario, geom: &SensingGeometry, wset: &PrecoderSet, s: &SymbolBlock) -> Result<f64> {
    sensing_sinr_gram(sc, geom, wset, &s.gram())
}
