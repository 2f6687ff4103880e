//! Pilot-based channel estimation, interference observation and the zero-forcing start.

use num_complex::Complex64;
use rand::Rng;

use crate::airlink::{PrecoderSet, SymbolBlock};
use crate::channel::CommChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{cn_matrix, min_norm_solve, CMat, CVec};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// `m_ue x m_ap`
    pub h_hat: CMat,
    /// Variance assumed for every entry of the estimation error.
    pub sigma_err2: f64,
}

/// Least-squares estimate `y x^H (x x^H)^{-1}`.
pub fn ls_channel_estimate(y_pilot: &CMat, x_pilot: &CMat, sigma_err2: f64) -> Result<ChannelEstimate> {
    if y_pilot.ncols() != x_pilot.ncols() {
        return Err(Error::Dimension("pilot blocks differ in length".into()));
    }
    if !(sigma_err2 > 0.0 && sigma_err2.is_finite()) {
        return Err(Error::Config("channel error variance must be positive".into()));
    }
    let (m, n) = x_pilot.shape();
    if n < m {
        return Err(Error::Singular(format!("{n} pilot symbols cannot resolve {m} antennas")));
    }
    let gram = x_pilot * x_pilot.adjoint();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("pilot Gram matrix is not invertible".into()))?;
    // H = y x^H G^{-1}  <=>  H^H = G^{-1} x y^H
    let h_hat = chol.solve(&(x_pilot * y_pilot.adjoint())).adjoint();
    if h_hat.iter().any(|z| !z.is_finite()) {
        return Err(Error::Singular("pilot Gram matrix is ill-conditioned".into()));
    }
    Ok(ChannelEstimate { h_hat, sigma_err2 })
}

/// QPSK pilots with total power `p_t` per symbol vector.
pub fn draw_pilots<R: Rng + ?Sized>(m_ap: usize, n: usize, p_t: f64, rng: &mut R) -> CMat {
    let a = (p_t / m_ap as f64 / 2.0).sqrt();
    CMat::from_fn(m_ap, n, |_, _| {
        let re = if rng.random::<bool>() { a } else { -a };
        let im = if rng.random::<bool>() { a } else { -a };
        Complex64::new(re, im)
    })
}

/// Pilot transmission over `h` followed by the least-squares fit.
pub fn estimate_channel<R: Rng + ?Sized>(
    h: &CMat,
    n: usize,
    p_t: f64,
    sigma_i2: f64,
    sigma_err2: f64,
    rng: &mut R,
) -> Result<ChannelEstimate> {
    let x = draw_pilots(h.ncols(), n, p_t, rng);
    let y = h * &x + cn_matrix(rng, h.nrows(), n, sigma_i2);
    ls_channel_estimate(&y, &x, sigma_err2)
}

/// What the adversary `a` sees of AP k once its own stream is removed: `(y, x)` with
/// `y = H_{a,k} x + noise` and `x[n] = sum_{l != a} w_l s_l[n] + w_t s_t[n]`.
pub fn interference_observation<R: Rng + ?Sized>(
    channels: &CommChannelSet,
    wset: &PrecoderSet,
    s: &SymbolBlock,
    a: usize,
    k: usize,
    sigma_i2: f64,
    noise_rng: &mut R,
) -> Result<(CMat, CMat)> {
    let h = channels
        .h
        .get(a)
        .and_then(|r| r.get(k))
        .ok_or_else(|| Error::Index(format!("link (UE {a}, AP {k})")))?;
    let w = wset.w.get(k).ok_or_else(|| Error::Index(format!("AP {k}")))?;
    if w.ncols() != s.streams() || h.ncols() != w.nrows() {
        return Err(Error::Dimension("interference observation operands".into()));
    }
    let mut w_other = w.clone();
    w_other.column_mut(a).fill(Complex64::new(0.0, 0.0));
    let x = &w_other * &s.s;
    let y = h * &x + cn_matrix(noise_rng, h.nrows(), s.len(), sigma_i2);
    Ok((y, x))
}

/// Minimum-norm least-squares solution of `h_hat x = y`.
pub fn zf_init(est: &ChannelEstimate, y: &CVec) -> CVec {
    min_norm_solve(&est.h_hat, y)
}

/// Column-wise [`zf_init`] over a block.
pub fn zf_block(est: &ChannelEstimate, y: &CMat) -> CMat {
    let cols: Vec<CVec> = y.column_iter().map(|c| zf_init(est, &c.into_owned())).collect();
    CMat::from_fn(est.h_hat.ncols(), y.ncols(), |r, j| cols[j][r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cn_vector, fro2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_pilots_recover_channel() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let h = cn_matrix(&mut r, 2, 4, 1.0);
        // DFT rows are orthogonal: x x^H = N I
        let n = 8;
        let x = CMat::from_fn(4, n, |i, j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64));
        let est = ls_channel_estimate(&(&h * &x), &x, 1.0).unwrap();
        assert!((est.h_hat - h).norm() < 1e-10);
    }

    #[test]
    fn too_few_pilots_is_an_error() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let x = draw_pilots(4, 3, 1.0, &mut r);
        let y = cn_matrix(&mut r, 2, 3, 1.0);
        assert!(matches!(ls_channel_estimate(&y, &x, 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn estimate_error_falls_with_pilot_length() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let (m_ue, m_ap) = (2, 8);
        let mse = |n: usize, r: &mut ChaCha8Rng| {
            let mut tot = 0.0;
            for _ in 0..100 {
                let h = cn_matrix(r, m_ue, m_ap, 1.0);
                let est = estimate_channel(&h, n, 1.0, 0.1, 1.0, r).unwrap();
                tot += fro2(&(est.h_hat - h));
            }
            tot / 100.0
        };
        let a = mse(64, &mut r);
        let b = mse(128, &mut r);
        assert!(b < a, "{b} !< {a}");
    }

    fn random_set(r: &mut ChaCha8Rng, m_ap: usize, n_ue: usize) -> PrecoderSet {
        PrecoderSet { w: vec![cn_matrix(r, m_ap, n_ue + 1, 1.0)] }
    }

    fn symbols(r: &mut ChaCha8Rng, streams: usize, n: usize) -> SymbolBlock {
        SymbolBlock { s: cn_matrix(r, streams, n, 1.0) }
    }

    #[test]
    fn lone_adversary_sees_only_sensing_stream() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let ch = CommChannelSet { h: vec![vec![cn_matrix(&mut r, 2, 3, 1.0)]], omega: vec![vec![1.0]] };
        let w = random_set(&mut r, 3, 1);
        let s = symbols(&mut r, 2, 5);
        let (_, x) = interference_observation(&ch, &w, &s, 0, 0, 1.0, &mut r).unwrap();
        let expect = w.w[0].column(1) * s.s.row(1);
        assert!((x - expect).norm() < 1e-12);
    }

    #[test]
    fn single_interferer_without_sensing() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let ch = CommChannelSet {
            h: vec![vec![cn_matrix(&mut r, 2, 3, 1.0)], vec![cn_matrix(&mut r, 2, 3, 1.0)]],
            omega: vec![vec![1.0], vec![1.0]],
        };
        let mut w = random_set(&mut r, 3, 2);
        w.w[0].column_mut(2).fill(c(0.0));
        let s = symbols(&mut r, 3, 5);
        let (_, x) = interference_observation(&ch, &w, &s, 1, 0, 1.0, &mut r).unwrap();
        let expect = w.w[0].column(0) * s.s.row(0);
        assert!((x - expect).norm() < 1e-12);
    }

    #[test]
    fn observation_noise_has_configured_variance() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let h = cn_matrix(&mut r, 2, 3, 1.0);
        let ch = CommChannelSet { h: vec![vec![h.clone()]], omega: vec![vec![1.0]] };
        let w = random_set(&mut r, 3, 1);
        let s = symbols(&mut r, 2, 10_000);
        let (y, x) = interference_observation(&ch, &w, &s, 0, 0, 0.7, &mut r).unwrap();
        let noise = y - &h * x;
        let var = fro2(&noise) / (2.0 * 10_000.0);
        assert!((var - 0.7).abs() < 0.03, "{var}");
    }

    #[test]
    fn zf_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let h = cn_matrix(&mut r, 3, 3, 1.0);
        let x = cn_vector(&mut r, 3, 1.0);
        let est = ChannelEstimate { h_hat: h.clone(), sigma_err2: 1.0 };
        assert!((zf_init(&est, &(&h * &x)) - &x).norm() < 1e-10);

        // rank one: output is a multiple of the single row direction
        let row = cn_vector(&mut r, 4, 1.0);
        let scale = cn_vector(&mut r, 2, 1.0);
        let h1 = &scale * row.adjoint();
        let est = ChannelEstimate { h_hat: h1, sigma_err2: 1.0 };
        let out = zf_init(&est, &cn_vector(&mut r, 2, 1.0));
        let proj = &row * (row.dotc(&out) / row.norm_squared());
        assert!((out - proj).norm() < 1e-8);

        // wide random: exact fit
        let h = cn_matrix(&mut r, 2, 6, 1.0);
        let y = cn_vector(&mut r, 2, 1.0);
        let est = ChannelEstimate { h_hat: h.clone(), sigma_err2: 1.0 };
        assert!((&h * zf_init(&est, &y) - y).norm() < 1e-8);
    }
}
