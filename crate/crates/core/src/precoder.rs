//! Iterative transmit/receive precoder design (convex-concave procedure).
//!
//! Every outer iteration solves two convex subproblems around the previous precoders,
//! sums their solutions, projects each AP back onto its power budget and refreshes the
//! UE receive beamformers with the MMSE rule. The subproblems separate across transmit
//! APs, so each one is assembled and solved per AP.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::airlink::{comm_sinr_with, min_comm_sinr, sensing_sinr_gram, sensing_weights, zeta, PrecoderSet, ReceiveBeamformers};
use crate::channel::{steering_vector, CommChannelSet, SensingGeometry};
use crate::error::{Error, Result};
use crate::linalg::{c, cn_matrix, cn_vector, fro2, norm2, CMat, CVec};
use crate::scenario::Scenario;
use crate::socp::{self, lift_quadratic_bound, AffineExpr, ComplexLayout, ConeProgram, SocConstraint, SolveStatus, SolverSettings};

/// Redraws allowed when repairing an infeasible random start.
pub const REPAIR_ATTEMPTS: usize = 20;
/// Relative slack accepted on the SINR constraints.
pub const SINR_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub gamma_t: f64,
    pub max_violation: f64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct CccpState {
    pub w: PrecoderSet,
    pub u: ReceiveBeamformers,
    pub p: usize,
    /// Design sensing SINR (symbol Gram replaced by its mean) after each iterate, starting at p = 0.
    pub gamma_t_history: Vec<f64>,
    /// Last `(tau, mu)` per `[i][k]`, in the units of the SINR terms.
    pub slack: Vec<Vec<(f64, f64)>>,
    pub trace: Vec<TraceEntry>,
    /// Set when the run had to be abandoned; the realization is excluded from statistics.
    pub flagged: Option<String>,
}

impl CccpState {
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trace {
            out.push_str(&format!(
                "iter {} gamma_t {:.9e} max_violation {:.3e} status {}\n",
                t.iteration, t.gamma_t, t.max_violation, t.status
            ));
        }
        out
    }
}

/// One per-AP convex subproblem. Variables are `[Re vec W_k; Im vec W_k; tau_i; mu_i] `
/// with `W_k` measured in units of `sqrt(P_T)` and the SINR terms of UE i scaled by `1/norm[i]`.
#[derive(Debug, Clone)]
pub struct ApProgram {
    pub k: usize,
    pub program: ConeProgram,
    pub layout: ComplexLayout,
    /// Original objective = `scale * objective . x + offset`.
    pub scale: f64,
    pub offset: f64,
    /// Per-UE scaling of the SINR terms.
    pub norm: Vec<f64>,
}

impl ApProgram {
    fn w_len(&self) -> usize {
        self.layout.real_len()
    }

    pub fn pack(&self, sc: &Scenario, w_k: &CMat) -> DVector<f64> {
        let root = sc.lin.p_t.sqrt();
        let scaled: Vec<Complex64> = w_k.iter().map(|z| z / root).collect();
        self.layout.pack(&scaled, self.program.num_vars)
    }

    pub fn unpack(&self, sc: &Scenario, x: &DVector<f64>) -> CMat {
        let root = sc.lin.p_t.sqrt();
        let m = sc.cfg.m_ap;
        let vals = self.layout.unpack(x);
        CMat::from_iterator(m, vals.len() / m, vals.into_iter().map(|z| z * root))
    }

    /// Subproblem objective for precoder `w_k`, in sensing-SINR units.
    pub fn value_at(&self, sc: &Scenario, w_k: &CMat) -> f64 {
        let x = self.pack(sc, w_k);
        self.scale * self.program.objective.rows(0, self.w_len()).dot(&x.rows(0, self.w_len())) + self.offset
    }
}

/// `b = H^H u` for every (UE, AP) pair: UE i sees column l of AP k as `b^H w_l`.
fn effective_channels(channels: &CommChannelSet, u: &ReceiveBeamformers) -> Vec<Vec<CVec>> {
    (0..channels.n_ue())
        .map(|i| (0..channels.n_tx()).map(|k| channels.h[i][k].adjoint() * &u.u[i]).collect())
        .collect()
}

fn check_dims(sc: &Scenario, channels: &CommChannelSet, state: &CccpState) -> Result<()> {
    let (n_tx, n_ue, m) = (sc.cfg.n_tx, sc.cfg.n_ue, sc.cfg.m_ap);
    let ok = channels.n_tx() == n_tx
        && channels.n_ue() == n_ue
        && state.w.n_tx() == n_tx
        && state.w.m_ap() == m
        && state.w.n_ue() == n_ue
        && state.u.u.len() == n_ue
        && channels.h.iter().flatten().all(|h| h.ncols() == m && h.nrows() == sc.cfg.m_ue)
        && state.u.u.iter().all(|u| u.len() == sc.cfg.m_ue);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension("precoder subproblem operands".into()))
    }
}

/// Empty program for AP k holding the linearized SINR constraints and the power cone.
fn constrained_program(
    sc: &Scenario,
    b: &[Vec<CVec>],
    w0: &CMat,
    u: &ReceiveBeamformers,
    k: usize,
) -> Result<(ConeProgram, ComplexLayout, Vec<f64>)> {
    let (n_ue, m) = (sc.cfg.n_ue, sc.cfg.m_ap);
    let cols = n_ue + 1;
    let layout = ComplexLayout { len: m * cols };
    let wl = layout.real_len();
    let n = wl + 2 * n_ue;
    let tau = |i: usize| wl + i;
    let mu = |i: usize| wl + n_ue + i;
    let root = sc.lin.p_t.sqrt();
    let mut prog = ConeProgram::new(n);
    let mut norms = Vec::with_capacity(n_ue);

    for i in 0..n_ue {
        let bik = &b[i][k];
        let noise = sc.lin.sigma_i2 * norm2(&u.u[i]);
        let c0 = (bik.adjoint() * w0.column(i))[(0, 0)];
        let norm = c0.norm_sqr() + noise;
        norms.push(norm);
        // bt^H x_l equals b^H w_l / sqrt(norm)
        let bt: Vec<Complex64> = bik.iter().map(|z| z.conj() * (root / norm.sqrt())).collect();
        let c0t = c0 / norm.sqrt();

        // linearized desired power: 2 Re(c0* bt^H x_i) - |c0|^2 >= tau
        let g: Vec<Complex64> = bt.iter().map(|z| z * c0t.conj()).collect();
        let (re, _) = layout.linear_rows(n, i * m, &g);
        let mut a = -re * 2.0;
        a[tau(i)] = 1.0;
        prog.add_affine(a, -c0t.norm_sqr());

        // interference plus noise <= mu
        let rows = 2 * n_ue + 1;
        let mut mm = DMatrix::zeros(rows, n);
        let mut mv = DVector::zeros(rows);
        let mut r = 0;
        for l in (0..cols).filter(|&l| l != i) {
            let (re, im) = layout.linear_rows(n, l * m, &bt);
            mm.row_mut(r).copy_from(&re.transpose());
            mm.row_mut(r + 1).copy_from(&im.transpose());
            r += 2;
        }
        mv[r] = (noise / norm).sqrt();
        let mut coef = DVector::zeros(n);
        coef[mu(i)] = 1.0;
        prog.add_soc(lift_quadratic_bound(&mm, &mv, &AffineExpr { coef, constant: 0.0 })?);

        // tau >= Gamma mu
        let mut a = DVector::zeros(n);
        a[mu(i)] = sc.lin.gamma;
        a[tau(i)] = -1.0;
        prog.add_affine(a, 0.0);
    }

    // per-AP power: ||vec W_k|| <= sqrt(P_T)
    let mut a = DMatrix::zeros(wl, n);
    a.view_mut((0, 0), (wl, wl)).fill_with_identity();
    prog.add_soc(SocConstraint { a, b: DVector::zeros(wl), c: DVector::zeros(n), d: 1.0 });
    Ok((prog, layout, norms))
}

/// Sets `Re sum_{m,l} coef[m,l] W[m,l]` (original units) as the normalized objective.
fn set_objective(sc: &Scenario, prog: &mut ConeProgram, layout: &ComplexLayout, coef: &CMat) -> f64 {
    let n = prog.num_vars;
    let root = sc.lin.p_t.sqrt();
    let g: Vec<Complex64> = coef.iter().map(|z| z * root).collect();
    let (re, _) = layout.linear_rows(n, 0, &g);
    let scale = re.norm();
    if scale > 0.0 && scale.is_finite() {
        prog.objective = re / scale;
        scale
    } else {
        prog.objective = DVector::zeros(n);
        1.0
    }
}

fn design_n(sc: &Scenario) -> f64 {
    sc.cfg.block_len as f64
}

/// Linearized self-term subproblem, one program per transmit AP.
pub fn build_p1(
    sc: &Scenario,
    channels: &CommChannelSet,
    geom: &SensingGeometry,
    state: &CccpState,
) -> Result<Vec<ApProgram>> {
    check_dims(sc, channels, state)?;
    let phi = sensing_weights(sc, geom)?;
    let zn = zeta(sc) * design_n(sc);
    let b = effective_channels(channels, &state.u);
    let m = sc.cfg.m_ap;
    (0..sc.cfg.n_tx)
        .map(|k| {
            let w0 = &state.w.w[k];
            let (mut program, layout, norm) = constrained_program(sc, &b, w0, &state.u, k)?;
            let a = steering_vector(geom.phi_tx[k], m);
            let g0 = a.transpose() * w0;
            let phik = phi[(k, k)].re;
            // d/dW of zn phi |a^T W|^2 at W0: coef[m, l] = 2 zn phi a_m conj(g0_l)
            let coef = CMat::from_fn(m, w0.ncols(), |r, l| a[r] * g0[l].conj() * (2.0 * zn * phik));
            let scale = set_objective(sc, &mut program, &layout, &coef);
            let offset = -zn * phik * g0.iter().map(|z| z.norm_sqr()).sum::<f64>();
            Ok(ApProgram { k, program, layout, scale, offset, norm })
        })
        .collect()
}

/// Cross-term subproblem with the other APs frozen at the previous iterate.
pub fn build_p2(
    sc: &Scenario,
    channels: &CommChannelSet,
    geom: &SensingGeometry,
    state: &CccpState,
) -> Result<Vec<ApProgram>> {
    check_dims(sc, channels, state)?;
    let phi = sensing_weights(sc, geom)?;
    let zn = zeta(sc) * design_n(sc);
    let b = effective_channels(channels, &state.u);
    let m = sc.cfg.m_ap;
    let g0: Vec<_> = (0..sc.cfg.n_tx).map(|j| steering_vector(geom.phi_tx[j], m).transpose() * &state.w.w[j]).collect();
    (0..sc.cfg.n_tx)
        .map(|k| {
            let w0 = &state.w.w[k];
            let (mut program, layout, norm) = constrained_program(sc, &b, w0, &state.u, k)?;
            let a = steering_vector(geom.phi_tx[k], m);
            // Re sum_l conj(g_k[l]) t_l with t = zn sum_{j != k} phi_kj g_j
            let mut t = nalgebra::RowDVector::<Complex64>::zeros(w0.ncols());
            for j in (0..sc.cfg.n_tx).filter(|&j| j != k) {
                t += &g0[j] * (phi[(k, j)] * zn);
            }
            let coef = CMat::from_fn(m, w0.ncols(), |r, l| a[r] * t[l].conj());
            let scale = set_objective(sc, &mut program, &layout, &coef);
            Ok(ApProgram { k, program, layout, scale, offset: 0.0, norm })
        })
        .collect()
}

/// `W1 + W2`, each AP scaled back onto its power budget if needed.
pub fn combine_solutions(w1: &PrecoderSet, w2: &PrecoderSet, p_t: f64) -> Result<PrecoderSet> {
    if w1.n_tx() != w2.n_tx() || w1.w.iter().zip(&w2.w).any(|(a, b)| a.shape() != b.shape()) {
        return Err(Error::Dimension("combined precoder sets differ in shape".into()));
    }
    let w = w1
        .w
        .iter()
        .zip(&w2.w)
        .map(|(a, b)| {
            let s = a + b;
            let p = fro2(&s);
            if p > p_t {
                s * c((p_t / p).sqrt())
            } else {
                s
            }
        })
        .collect();
    Ok(PrecoderSet { w })
}

/// MMSE receive beamformer of UE i: sum_k (H (sum_{l != i} w_l w_l^H) H^H + sigma^2 I)^{-1} H w_i.
/// The sensing column is left out of the interference covariance.
pub fn mmse_update(channels: &CommChannelSet, wset: &PrecoderSet, sigma_i2: f64, i: usize) -> Result<CVec> {
    if i >= channels.n_ue() || wset.n_tx() != channels.n_tx() {
        return Err(Error::Index(format!("UE {i}")));
    }
    assert!(sigma_i2 > 0.0, "MMSE update needs positive noise power");
    let m_ue = channels.h[i][0].nrows();
    let mut u = CVec::zeros(m_ue);
    for (k, w) in wset.w.iter().enumerate() {
        let h = &channels.h[i][k];
        let mut cov = CMat::identity(m_ue, m_ue) * c(sigma_i2);
        for l in (0..wset.n_ue()).filter(|&l| l != i) {
            let hw = h * w.column(l);
            cov += &hw * hw.adjoint();
        }
        let rhs = h * w.column(i);
        let sol = cov
            .cholesky()
            .ok_or_else(|| Error::Singular("MMSE covariance".into()))?
            .solve(&rhs);
        u += sol;
    }
    Ok(u)
}

/// Outcome of the randomized start.
#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub w: PrecoderSet,
    pub u: ReceiveBeamformers,
    /// Repair rounds used; 0 when the random draw was already feasible.
    pub repairs: usize,
    pub feasible: bool,
}

fn sinr_ok(sc: &Scenario, channels: &CommChannelSet, w: &PrecoderSet, u: &ReceiveBeamformers) -> Result<bool> {
    Ok(min_comm_sinr(channels, w, u, sc.lin.sigma_i2)? >= sc.lin.gamma * (1.0 - SINR_SLACK))
}

/// Projection of `v` onto the orthogonal complement of the columns of `b`.
fn project_out(b: &CMat, v: &CVec) -> CVec {
    if b.ncols() == 0 {
        return v.clone();
    }
    let gram = b.adjoint() * b;
    match gram.cholesky() {
        Some(ch) => v - b * ch.solve(&(b.adjoint() * v)),
        None => v.clone(),
    }
}

fn scale_to_power(w: &mut CMat, p: f64) {
    let cur = fro2(w);
    if cur > 0.0 {
        *w *= c((p / cur).sqrt());
    }
}

/// Random precoders at full power and random unit receive beamformers. An infeasible draw
/// is repaired by steering UE streams away from the other UEs and shifting power to them.
pub fn init_precoders<R: Rng + ?Sized>(sc: &Scenario, channels: &CommChannelSet, rng: &mut R) -> Result<InitOutcome> {
    let (n_tx, n_ue, m, m_ue) = (sc.cfg.n_tx, sc.cfg.n_ue, sc.cfg.m_ap, sc.cfg.m_ue);
    let p_t = sc.lin.p_t;
    let mut w = PrecoderSet {
        w: (0..n_tx)
            .map(|_| {
                let mut wk = cn_matrix(rng, m, n_ue + 1, 1.0);
                scale_to_power(&mut wk, p_t);
                wk
            })
            .collect(),
    };
    let u = ReceiveBeamformers {
        u: (0..n_ue)
            .map(|_| {
                let v = cn_vector(rng, m_ue, 1.0);
                let n = norm2(&v).sqrt();
                v / c(n)
            })
            .collect(),
    };
    if sinr_ok(sc, channels, &w, &u)? {
        return Ok(InitOutcome { w, u, repairs: 0, feasible: true });
    }
    let b = effective_channels(channels, &u);
    for attempt in 1..=REPAIR_ATTEMPTS {
        let ue_share = 1.0 - 0.5f64.powi(attempt as i32);
        for k in 0..n_tx {
            let all = stack(m, (0..n_ue).map(|i| &b[i][k]));
            let mut wk = CMat::zeros(m, n_ue + 1);
            for i in 0..n_ue {
                let others = stack(m, (0..n_ue).filter(|&l| l != i).map(|l| &b[l][k]));
                let mut col = project_out(&others, &cn_vector(rng, m, 1.0));
                scale_to_power_vec(&mut col, p_t * ue_share / n_ue as f64);
                wk.set_column(i, &col);
            }
            let mut col = project_out(&all, &cn_vector(rng, m, 1.0));
            scale_to_power_vec(&mut col, p_t * (1.0 - ue_share));
            wk.set_column(n_ue, &col);
            w.w[k] = wk;
        }
        if sinr_ok(sc, channels, &w, &u)? {
            return Ok(InitOutcome { w, u, repairs: attempt, feasible: true });
        }
    }
    Ok(InitOutcome { w, u, repairs: REPAIR_ATTEMPTS, feasible: false })
}

fn stack<'a>(rows: usize, cols: impl Iterator<Item = &'a CVec>) -> CMat {
    let cols: Vec<&CVec> = cols.collect();
    CMat::from_fn(rows, cols.len(), |r, j| cols[j][r])
}

fn scale_to_power_vec(v: &mut CVec, p: f64) {
    let cur = norm2(v);
    if cur > 0.0 {
        *v *= c((p / cur).sqrt());
    }
}

/// Sensing SINR with the symbol Gram matrix replaced by its mean `N I`.
pub fn design_sensing_sinr(sc: &Scenario, geom: &SensingGeometry, w: &PrecoderSet) -> Result<f64> {
    let k = sc.cfg.n_ue + 1;
    let gram = CMat::identity(k, k) * c(design_n(sc));
    sensing_sinr_gram(sc, geom, w, &gram)
}

/// Largest relative violation of the SINR and power constraints.
pub fn max_violation(sc: &Scenario, channels: &CommChannelSet, w: &PrecoderSet, u: &ReceiveBeamformers) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..sc.cfg.n_ue {
        for k in 0..sc.cfg.n_tx {
            let g = comm_sinr_with(&channels.h[i][k], &w.w[k], &u.u[i], i, sc.lin.sigma_i2)?;
            worst = worst.max((sc.lin.gamma - g) / sc.lin.gamma.max(f64::MIN_POSITIVE));
        }
    }
    for k in 0..sc.cfg.n_tx {
        worst = worst.max(w.ap_power(k) / sc.lin.p_t - 1.0);
    }
    Ok(worst)
}

fn solve_all(sc: &Scenario, progs: &[ApProgram]) -> Result<std::result::Result<(PrecoderSet, Vec<Vec<(f64, f64)>>), String>> {
    let settings = SolverSettings { tol: sc.cfg.solver_tol, max_iter: sc.cfg.solver_max_iter };
    let n_ue = sc.cfg.n_ue;
    let mut w = Vec::with_capacity(progs.len());
    let mut slack = vec![Vec::with_capacity(progs.len()); n_ue];
    for ap in progs {
        let sol = socp::solve(&ap.program, &settings)?;
        if sol.status != SolveStatus::Optimal {
            return Ok(Err(format!("subproblem for AP {} ended with status {:?}", ap.k, sol.status)));
        }
        w.push(ap.unpack(sc, &sol.x));
        let wl = ap.w_len();
        for (i, s) in slack.iter_mut().enumerate() {
            s.push((sol.x[wl + i] * ap.norm[i], sol.x[wl + n_ue + i] * ap.norm[i]));
        }
    }
    Ok(Ok((PrecoderSet { w }, slack)))
}

fn relative_change(new: f64, diff: f64) -> f64 {
    if new > 0.0 {
        diff / new
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs the outer loop from a random (repaired) start.
pub fn run_algorithm1<R: Rng + ?Sized>(
    sc: &Scenario,
    channels: &CommChannelSet,
    geom: &SensingGeometry,
    rng: &mut R,
) -> Result<CccpState> {
    let init = init_precoders(sc, channels, rng)?;
    let mut state = CccpState {
        gamma_t_history: vec![design_sensing_sinr(sc, geom, &init.w)?],
        w: init.w,
        u: init.u,
        p: 0,
        slack: Vec::new(),
        trace: Vec::new(),
        flagged: None,
    };
    state.trace.push(TraceEntry {
        iteration: 0,
        gamma_t: state.gamma_t_history[0],
        max_violation: max_violation(sc, channels, &state.w, &state.u)?,
        status: if init.feasible { format!("init repairs={}", init.repairs) } else { "init infeasible".into() },
    });
    if !init.feasible {
        state.flagged = Some(format!("no feasible start after {} repair attempts", REPAIR_ATTEMPTS));
        return Ok(state);
    }
    run_from(sc, channels, geom, state)
}

/// Continues the outer loop from `state`.
pub fn run_from(sc: &Scenario, channels: &CommChannelSet, geom: &SensingGeometry, mut state: CccpState) -> Result<CccpState> {
    let n_ue = sc.cfg.n_ue;
    while state.p < sc.cfg.i_max {
        let p1 = build_p1(sc, channels, geom, &state)?;
        let p2 = build_p2(sc, channels, geom, &state)?;
        #[cfg(debug_assertions)]
        for ap in &p1 {
            let exact = self_term(sc, geom, &state.w, ap.k)?;
            let lin = ap.value_at(sc, &state.w.w[ap.k]);
            debug_assert!((lin - exact).abs() <= 1e-9 * exact.abs().max(1e-300), "Taylor anchor {lin} vs {exact}");
        }
        let (w1, slack) = match solve_all(sc, &p1)? {
            Ok(v) => v,
            Err(msg) => return Ok(flag(state, msg)),
        };
        let (w2, _) = match solve_all(sc, &p2)? {
            Ok(v) => v,
            Err(msg) => return Ok(flag(state, msg)),
        };
        let w_new = combine_solutions(&w1, &w2, sc.lin.p_t)?;

        // MMSE refresh, keeping the old beamformer if the new one would break a SINR constraint
        let mut u_new = state.u.clone();
        for i in 0..n_ue {
            let cand = mmse_update(channels, &w_new, sc.lin.sigma_i2, i)?;
            let ok = (0..sc.cfg.n_tx).all(|k| {
                comm_sinr_with(&channels.h[i][k], &w_new.w[k], &cand, i, sc.lin.sigma_i2)
                    .is_ok_and(|g| g >= sc.lin.gamma * (1.0 - SINR_SLACK))
            });
            if ok {
                u_new.u[i] = cand;
            }
        }

        let dw = relative_change(w_new.frobenius(), w_new.distance(&state.w));
        let du = (0..n_ue)
            .map(|i| relative_change(norm2(&u_new.u[i]).sqrt(), norm2(&(&u_new.u[i] - &state.u.u[i])).sqrt()))
            .fold(0.0, f64::max);

        state.w = w_new;
        state.u = u_new;
        state.slack = slack;
        state.p += 1;
        let gt = design_sensing_sinr(sc, geom, &state.w)?;
        state.gamma_t_history.push(gt);
        state.trace.push(TraceEntry {
            iteration: state.p,
            gamma_t: gt,
            max_violation: max_violation(sc, channels, &state.w, &state.u)?,
            status: "optimal".into(),
        });
        if dw <= sc.cfg.eps_cccp && du <= sc.cfg.eps_cccp {
            break;
        }
    }
    Ok(state)
}

fn flag(mut state: CccpState, msg: String) -> CccpState {
    if let Some(t) = state.trace.last().cloned() {
        state.trace.push(TraceEntry { iteration: state.p + 1, status: msg.clone(), ..t });
    }
    state.flagged = Some(msg);
    state
}

/// Exact self-term `zeta N phi_kk |a^T W_k|^2` of AP k, computed through the full sensing SINR
/// with every other AP silenced.
pub fn self_term(sc: &Scenario, geom: &SensingGeometry, w: &PrecoderSet, k: usize) -> Result<f64> {
    let mut only = PrecoderSet::zeros(w.n_tx(), w.m_ap(), w.n_ue());
    only.w[k] = w.w[k].clone();
    design_sensing_sinr(sc, geom, &only)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_comm_channels, sensing_geometry};
    use crate::rng::{stream, Stream};
    use crate::scenario::{default_layout, validate_config, Point, Preset, SimulationConfig};
    use rand::SeedableRng;

    fn small(f: impl FnOnce(&mut SimulationConfig)) -> Scenario {
        let mut cfg = SimulationConfig::preset(Preset::Desk);
        cfg.n_tx = 2;
        cfg.n_rx = 1;
        cfg.n_ue = 1;
        cfg.m_ap = 4;
        cfg.m_ue = 2;
        cfg.known_aps = 2;
        cfg.block_len = 16;
        f(&mut cfg);
        let mut layout = default_layout();
        layout.tx_ap_pos.truncate(cfg.n_tx);
        layout.rx_ap_pos.truncate(cfg.n_rx);
        layout.ue_pos.truncate(cfg.n_ue);
        validate_config(&cfg, &layout).unwrap()
    }

    fn setup(sc: &Scenario, seed: u64) -> (CommChannelSet, SensingGeometry, CccpState) {
        let ch = draw_comm_channels(sc, &mut stream(seed, Stream::CommChannel));
        let geom = sensing_geometry(sc).unwrap();
        let init = init_precoders(sc, &ch, &mut stream(seed, Stream::Init)).unwrap();
        assert!(init.feasible);
        let state = CccpState {
            gamma_t_history: vec![],
            w: init.w,
            u: init.u,
            p: 0,
            slack: vec![],
            trace: vec![],
            flagged: None,
        };
        (ch, geom, state)
    }

    #[test]
    fn init_meets_power_and_norms() {
        let sc = small(|_| {});
        let (_, _, st) = setup(&sc, 3);
        for u in &st.u.u {
            assert!((norm2(u) - 1.0).abs() < 1e-12);
        }
        // random draw keeps full power; repairs keep the budget
        for k in 0..sc.cfg.n_tx {
            assert!((st.w.ap_power(k) / sc.lin.p_t - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let sc = small(|c| c.n_ue = 2);
        let ch = draw_comm_channels(&sc, &mut stream(4, Stream::CommChannel));
        let a = init_precoders(&sc, &ch, &mut stream(4, Stream::Init)).unwrap();
        let b = init_precoders(&sc, &ch, &mut stream(4, Stream::Init)).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn taylor_anchor() {
        let sc = small(|c| {
            c.n_tx = 4;
            c.n_ue = 2;
            c.m_ap = 6;
            c.known_aps = 4;
        });
        let (ch, geom, st) = setup(&sc, 5);
        let progs = build_p1(&sc, &ch, &geom, &st).unwrap();
        for ap in &progs {
            let exact = self_term(&sc, &geom, &st.w, ap.k).unwrap();
            // independent evaluation: zeta N phi |a^T W|^2 with phi from the path gains
            let a = steering_vector(geom.phi_tx[ap.k], sc.cfg.m_ap);
            let g = a.transpose() * &st.w.w[ap.k];
            let phi: f64 = (0..sc.cfg.n_rx)
                .map(|r| geom.beta[r][ap.k] * sc.cfg.m_ap as f64 * sc.lin.sigma_rcs2)
                .sum();
            let oracle = zeta(&sc) * sc.cfg.block_len as f64 * phi * g.iter().map(|z| z.norm_sqr()).sum::<f64>();
            assert!((exact - oracle).abs() <= 1e-9 * oracle, "{exact} vs {oracle}");
            let lin = ap.value_at(&sc, &st.w.w[ap.k]);
            assert!((lin - exact).abs() <= 1e-9 * exact, "{lin} vs {exact}");
        }
    }

    #[test]
    fn zero_threshold_makes_slack_link_nonnegativity() {
        let sc = small(|c| c.gamma_db = f64::NEG_INFINITY);
        assert_eq!(sc.lin.gamma, 0.0);
        let (ch, geom, st) = setup(&sc, 6);
        let progs = build_p1(&sc, &ch, &geom, &st).unwrap();
        let wl = progs[0].layout.real_len();
        // the tau >= Gamma mu row is tau >= 0
        let row = &progs[0].program.affine[1];
        assert_eq!(row.a[wl], -1.0);
        assert_eq!(row.a[wl + 1], 0.0);
        assert_eq!(row.b, 0.0);
    }

    #[test]
    fn uncorrelated_rcs_gives_zero_cross_objective() {
        let sc = small(|c| c.rcs_correlation = 0.0);
        let (ch, geom, st) = setup(&sc, 7);
        for ap in build_p2(&sc, &ch, &geom, &st).unwrap() {
            assert!(ap.program.objective.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_ap_has_empty_cross_objective() {
        let sc = small(|c| {
            c.n_tx = 1;
            c.known_aps = 1;
        });
        let (ch, geom, st) = setup(&sc, 8);
        let progs = build_p2(&sc, &ch, &geom, &st).unwrap();
        assert_eq!(progs.len(), 1);
        assert!(progs[0].program.objective.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn combine_rules() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p_t = 4.0;
        let mut w1 = PrecoderSet { w: vec![cn_matrix(&mut r, 3, 2, 1.0)] };
        scale_to_power(&mut w1.w[0], 2.0);
        let zero = PrecoderSet::zeros(1, 3, 1);
        assert_eq!(combine_solutions(&w1, &zero, p_t).unwrap(), w1);
        let mut q = w1.clone();
        scale_to_power(&mut q.w[0], p_t / 4.0);
        let s = combine_solutions(&q, &q, p_t).unwrap();
        assert!((s.ap_power(0) - p_t).abs() < 1e-12);
        assert_eq!(s.w[0], &q.w[0] * c(2.0));
        let big = w1.scaled(3.0);
        let s = combine_solutions(&big, &w1, p_t).unwrap();
        assert!((s.ap_power(0) - p_t).abs() < 1e-9);
    }

    fn one_link(h: CMat, w: CMat) -> (CommChannelSet, PrecoderSet) {
        (CommChannelSet { h: vec![vec![h]], omega: vec![vec![1.0]] }, PrecoderSet { w: vec![w] })
    }

    #[test]
    fn mmse_identity_channel() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let w = cn_matrix(&mut r, 3, 2, 1.0);
        let (ch, ws) = one_link(CMat::identity(3, 3), w.clone());
        let u = mmse_update(&ch, &ws, 0.5, 0).unwrap();
        let expect = w.column(0) / c(0.5);
        assert!((u - expect).norm() < 1e-12);
    }

    #[test]
    fn mmse_large_noise_matches_matched_filter() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = cn_matrix(&mut r, 4, 3, 1.0);
        let h = cn_matrix(&mut r, 2, 4, 1.0);
        let (ch, ws) = one_link(h.clone(), w.clone());
        let s2 = 1e9;
        let u = mmse_update(&ch, &ws, s2, 0).unwrap() * c(s2);
        let mf = &h * w.column(0);
        assert!((u - &mf).norm() < 1e-6 * mf.norm());
    }

    #[test]
    fn mmse_matches_descent_on_mse() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (m, m_ue, n_ue) = (4, 3, 3);
        let mut w = cn_matrix(&mut r, m, n_ue + 1, 1.0);
        w.column_mut(n_ue).fill(Complex64::new(0.0, 0.0));
        let h = cn_matrix(&mut r, m_ue, m, 1.0);
        let s2 = 0.3;
        let (ch, ws) = one_link(h.clone(), w.clone());
        let u = mmse_update(&ch, &ws, s2, 0).unwrap();
        // E|s_0 - u^H y|^2 = 1 - 2 Re(u^H h0) + u^H R u, R = sum_l h_l h_l^H + s2 I
        let hw = &h * &w;
        let rmat = &hw * hw.adjoint() + CMat::identity(m_ue, m_ue) * c(s2);
        let h0: CVec = hw.column(0).into();
        let mut v = CVec::zeros(m_ue);
        let step = 0.5 / rmat.norm();
        for _ in 0..20000 {
            let grad = &rmat * &v - &h0;
            v -= grad * c(step);
        }
        let cos = (u.dotc(&v)).norm() / (u.norm() * v.norm());
        assert!(cos.min(1.0).acos() < 1e-3, "angle {}", cos.acos());
    }

    /// Best value of `Re(conj(t0) w_ue + conj(t1) w_t)` for one single-antenna AP with unit channel,
    /// start (0.9, 0.3), Gamma = 1, sigma^2 = 0.1 and unit power: a fine grid over real `w_ue`,
    /// with `w_t` on the boundary of its feasible disc along `t1`.
    fn grid_optimum(t0: f64, t1: Complex64) -> (f64, f64) {
        let steps = 1_000_000;
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for a in 0..=steps {
            let wu = a as f64 / steps as f64;
            let r2 = (1.0 - wu * wu).min(2.0 * 0.9 * wu - 0.81 - 0.1);
            if r2 < 0.0 {
                continue;
            }
            let v = t0 * wu + r2.sqrt() * t1.norm();
            if v > best {
                best = v;
                arg = wu;
            }
        }
        (best, arg)
    }

    fn scalar_scenario(n_tx: usize) -> Scenario {
        small(|c| {
            c.n_tx = n_tx;
            c.known_aps = n_tx;
            c.m_ap = 1;
            c.m_ue = 1;
            c.gamma_db = 0.0;
            c.p_t_dbm = 0.0;
            c.sigma_i_dbm = -10.0;
            c.rcs_correlation = 1.0;
        })
    }

    fn scalar_state(w: Vec<CMat>) -> CccpState {
        CccpState {
            w: PrecoderSet { w },
            u: ReceiveBeamformers { u: vec![CVec::from_element(1, c(1.0))] },
            p: 0,
            gamma_t_history: vec![],
            slack: vec![],
            trace: vec![],
            flagged: None,
        }
    }

    #[test]
    fn scalar_instance_against_grid() {
        let sc = scalar_scenario(1);
        let ch = CommChannelSet { h: vec![vec![CMat::from_element(1, 1, c(1.0))]], omega: vec![vec![1.0]] };
        let geom = sensing_geometry(&sc).unwrap();
        let st = scalar_state(vec![CMat::from_row_slice(1, 2, &[c(0.9), c(0.3)])]);
        let ap = &build_p1(&sc, &ch, &geom, &st).unwrap()[0];
        let sol = socp::solve(&ap.program, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let w = ap.unpack(&sc, &sol.x);
        // the self-term gradient is proportional to conj(g0) = (0.9, 0.3)
        let (best, wu) = grid_optimum(0.9, c(0.3));
        let got = 0.9 * w[(0, 0)].re + 0.3 * w[(0, 1)].re;
        assert!((got - best).abs() < 1e-4 * best, "{got} vs {best}");
        assert!((w[(0, 0)].re - wu).abs() < 1e-3, "{} vs {wu}", w[(0, 0)]);
        assert!(w[(0, 0)].im.abs() < 1e-5 && w[(0, 1)].im.abs() < 1e-5);
    }

    #[test]
    fn two_ap_cross_instance_against_grid() {
        let sc = scalar_scenario(2);
        let one = CMat::from_element(1, 1, c(1.0));
        let ch = CommChannelSet { h: vec![vec![one.clone(), one]], omega: vec![vec![1.0, 1.0]] };
        let geom = sensing_geometry(&sc).unwrap();
        let w1 = CMat::from_row_slice(1, 2, &[c(0.5), Complex64::new(0.2, 0.6)]);
        let st = scalar_state(vec![CMat::from_row_slice(1, 2, &[c(0.9), c(0.3)]), w1.clone()]);
        let ap = &build_p2(&sc, &ch, &geom, &st).unwrap()[0];
        let sol = socp::solve(&ap.program, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let w = ap.unpack(&sc, &sol.x);
        // AP 0 sees the frozen AP 1 through t proportional to a^T W_1 = w1 (single antenna)
        let (t0, t1) = (w1[(0, 0)], w1[(0, 1)]);
        let (best, _) = grid_optimum(t0.re, t1);
        let got = (w[(0, 0)] * t0.conj() + w[(0, 1)] * t1.conj()).re;
        assert!((got - best).abs() < 1e-4 * best, "{got} vs {best}");
    }

    #[test]
    fn one_outer_iteration_with_unit_limit() {
        let sc = small(|c| c.i_max = 1);
        let ch = draw_comm_channels(&sc, &mut stream(9, Stream::CommChannel));
        let geom = sensing_geometry(&sc).unwrap();
        let st = run_algorithm1(&sc, &ch, &geom, &mut stream(9, Stream::Init)).unwrap();
        assert!(st.flagged.is_none(), "{:?}", st.flagged);
        assert_eq!(st.p, 1);
        assert_eq!(st.gamma_t_history.len(), 2);
        assert_eq!(st.trace_text().lines().count(), 2);
    }

    #[test]
    fn repeat_runs_are_identical() {
        let sc = small(|c| c.n_ue = 2);
        let ch = draw_comm_channels(&sc, &mut stream(10, Stream::CommChannel));
        let geom = sensing_geometry(&sc).unwrap();
        let a = run_algorithm1(&sc, &ch, &geom, &mut stream(10, Stream::Init)).unwrap();
        let b = run_algorithm1(&sc, &ch, &geom, &mut stream(10, Stream::Init)).unwrap();
        assert_eq!(a.gamma_t_history, b.gamma_t_history);
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn iterates_stay_feasible_and_improve_sensing() {
        let mut improved = 0;
        let runs = 50;
        for seed in 0..runs {
            let sc = small(|_| {});
            let ch = draw_comm_channels(&sc, &mut stream(seed, Stream::CommChannel));
            let geom = sensing_geometry(&sc).unwrap();
            let st = run_algorithm1(&sc, &ch, &geom, &mut stream(seed, Stream::Init)).unwrap();
            assert!(st.flagged.is_none(), "seed {seed}: {:?}", st.flagged);
            assert_eq!(st.gamma_t_history.len(), st.p + 1);
            for k in 0..sc.cfg.n_tx {
                assert!(st.w.ap_power(k) <= sc.lin.p_t * (1.0 + 1e-6));
            }
            for i in 0..sc.cfg.n_ue {
                for k in 0..sc.cfg.n_tx {
                    let g = crate::airlink::comm_sinr(&ch, &st.w, &st.u.u[i], i, k, sc.lin.sigma_i2).unwrap();
                    assert!(g >= sc.lin.gamma * (1.0 - SINR_SLACK), "seed {seed}: {g}");
                }
            }
            if st.gamma_t_history.last().unwrap() >= &st.gamma_t_history[0] {
                improved += 1;
            }
        }
        assert!(improved * 10 >= runs * 9, "improved in {improved}/{runs}");
    }

    #[test]
    fn anchor_point_is_off_target_for_other_layouts() {
        // the target position does not enter the constraints, only the objective
        let sc = small(|_| {});
        let mut moved = sc.clone();
        moved.layout.target_pos = Point::new(120.0, -80.0);
        let (ch, geom, st) = setup(&sc, 11);
        let geom2 = sensing_geometry(&moved).unwrap();
        let a = build_p1(&sc, &ch, &geom, &st).unwrap();
        let b = build_p1(&moved, &ch, &geom2, &st).unwrap();
        assert_eq!(a[0].program.affine, b[0].program.affine);
        assert_ne!(a[0].program.objective, b[0].program.objective);
    }
}
