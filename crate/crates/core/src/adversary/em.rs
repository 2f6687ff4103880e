//! Variational EM recovery of an AP's interference signal under a Student-t observation
//! model with an uncertain channel.
//!
//! All `N` observed columns share one channel posterior and one noise-scale posterior, so
//! the statistics below are sums over the block.

use super::estimation::{zf_block, ChannelEstimate};
use crate::error::{Error, Result};
use crate::linalg::{c, fro2, hpd_inverse, CMat};

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    /// Posterior mean of the channel, `m_ue x m_ap`.
    pub e_h: CMat,
    /// Posterior row covariance of the channel, `m_ap x m_ap`.
    pub omega_h: CMat,
    /// Posterior mean of the noise precision scale.
    pub e_u: f64,
    /// Current signal estimate, one column per observed symbol.
    pub x_hat: CMat,
    /// Student-t degrees of freedom.
    pub v: f64,
    pub c_stat: f64,
    pub iter: usize,
    /// `m_step_objective` after each M-step.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl EmState {
    /// Prior state: channel mean at the estimate, covariance `sigma_err2 I`, signal `x0`.
    pub fn new(est: &ChannelEstimate, x0: CMat, v: f64) -> Self {
        let m = est.h_hat.ncols();
        EmState {
            e_h: est.h_hat.clone(),
            omega_h: CMat::identity(m, m) * c(est.sigma_err2),
            e_u: 1.0,
            x_hat: x0,
            v,
            c_stat: 0.0,
            iter: 0,
            objective_history: Vec::new(),
            converged: false,
        }
    }
}

fn check(state: &EmState, y: &CMat) -> Result<()> {
    let (m_ue, m_ap) = state.e_h.shape();
    if y.nrows() != m_ue || state.x_hat.nrows() != m_ap || state.x_hat.ncols() != y.ncols() {
        return Err(Error::Dimension("EM operands".into()));
    }
    Ok(())
}

/// One E-step, updating C, E[u], the channel covariance and the channel mean in that order.
/// `sigma_a2` is the adversary's receiver noise power.
pub fn em_e_step(state: &EmState, est: &ChannelEstimate, y: &CMat, sigma_a2: f64) -> Result<EmState> {
    check(state, y)?;
    let m_ap = state.e_h.ncols();
    let n_bar = y.ncols() as f64;
    let x = &state.x_hat;

    let resid = fro2(&(y - &state.e_h * x));
    let spread = (x.adjoint() * &state.omega_h * x).trace().re * m_ap as f64;
    let c_stat = (resid + spread) / sigma_a2;
    if !c_stat.is_finite() {
        return Err(Error::Numerical("EM statistic C is not finite".into()));
    }
    let e_u = (state.v + 2.0 * n_bar) / (state.v + c_stat);

    let w = e_u / sigma_a2;
    let prec = CMat::identity(m_ap, m_ap) * c(1.0 / est.sigma_err2) + x * x.adjoint() * c(w);
    let omega = hpd_inverse(&prec).ok_or_else(|| Error::Singular("channel posterior precision".into()))?;
    let omega = (&omega + omega.adjoint()) * c(0.5);
    let e_h_adj = &omega * (est.h_hat.adjoint() * c(1.0 / est.sigma_err2) + x * y.adjoint() * c(w));

    Ok(EmState {
        e_h: e_h_adj.adjoint(),
        omega_h: omega,
        e_u,
        c_stat,
        ..state.clone()
    })
}

/// Cholesky factor `V` with `V^H V = m_ap Omega`.
fn penalty_factor(state: &EmState) -> Result<CMat> {
    let m_ap = state.e_h.ncols() as f64;
    let ch = (&state.omega_h * c(m_ap))
        .cholesky()
        .ok_or_else(|| Error::Singular("channel covariance is not positive definite".into()))?;
    Ok(ch.l().adjoint())
}

/// `||y - E[H] x||^2 + ||V x||^2` summed over the block.
pub fn m_step_objective(state: &EmState, y: &CMat, x: &CMat) -> Result<f64> {
    let v = penalty_factor(state)?;
    Ok(fro2(&(y - &state.e_h * x)) + fro2(&(v * x)))
}

/// Closed-form minimizer `(E[H]^H E[H] + V^H V)^{-1} E[H]^H y`.
pub fn em_m_step(state: &EmState, y: &CMat) -> Result<CMat> {
    check(state, y)?;
    let v = penalty_factor(state)?;
    let lhs = state.e_h.adjoint() * &state.e_h + v.adjoint() * &v;
    let rhs = state.e_h.adjoint() * y;
    let ch = lhs
        .cholesky()
        .ok_or_else(|| Error::Singular("M-step normal matrix".into()))?;
    Ok(ch.solve(&rhs))
}

/// Alternates E- and M-steps from the zero-forcing start until the signal update is at most
/// `tol` in Frobenius norm or `max_iter` iterations ran. On the cap `converged` stays false
/// and the iterate with the smallest objective is returned.
pub fn run_em(est: &ChannelEstimate, y: &CMat, sigma_a2: f64, v: f64, tol: f64, max_iter: usize) -> Result<EmState> {
    let x0 = zf_block(est, y);
    let mut state = EmState::new(est, x0, v);
    let mut best: Option<(f64, EmState)> = None;
    while state.iter < max_iter {
        let mut next = em_e_step(&state, est, y, sigma_a2)?;
        let x = em_m_step(&next, y)?;
        let obj = m_step_objective(&next, y, &x)?;
        let step = fro2(&(&x - &state.x_hat)).sqrt();
        next.x_hat = x;
        next.iter = state.iter + 1;
        next.objective_history.push(obj);
        state = next;
        if step <= tol {
            state.converged = true;
            return Ok(state);
        }
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, state.clone()));
        }
    }
    match best {
        Some((_, mut b)) => {
            b.objective_history = state.objective_history;
            b.iter = state.iter;
            Ok(b)
        }
        None => Ok(state),
    }
}

/// `sum |x|^2` of the difference, the recovery error used to compare estimators.
pub fn recovery_error(x_hat: &CMat, x: &CMat) -> f64 {
    fro2(&(x_hat - x))
}
