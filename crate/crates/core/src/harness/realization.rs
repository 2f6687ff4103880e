use serde::{Deserialize, Serialize};

use crate::adversary::{
    angle_grid, em::recovery_error, estimate_beampattern, estimate_channel, estimation::zf_block, interference_observation,
    run_em, vote_and_localize, BeampatternEstimate, LocalizationResult,
};
use crate::airlink::{draw_symbols, min_comm_sinr, sensing_sinr};
use crate::channel::{draw_comm_channels, local_angle, sensing_geometry};
use crate::error::Result;
use crate::precoder::run_algorithm1;
use crate::rng::{stream, stream_with, Stream};
use crate::scenario::Scenario;

/// What the adversary recovered from one transmit AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApRecovery {
    /// Beampattern peak in the AP's local frame.
    pub peak_angle: f64,
    /// Direction of the target in the same frame.
    pub true_angle: f64,
    pub em_iterations: usize,
    pub em_converged: bool,
    /// Squared recovery error of the interference block.
    pub err_em: f64,
    pub err_zf: f64,
}

/// Outcome of one channel realization.
///
/// JSON layout: `q`, `seed`, `flagged` (null or cause), `cccp_iterations`, `gamma_t` (sensing
/// SINR on the realized symbols, linear), `gamma_t_design`, `min_comm_sinr` (linear),
/// `aps` (one [`ApRecovery`] per transmit AP; empty when flagged before the attack) and
/// `localization` (null when flagged): `lines` (global ray angles), `votes` (row-major
/// grid), `chosen_cell`, `target_cell`, `correct`, `missed`, `tied`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub q: u64,
    pub seed: u64,
    pub flagged: Option<String>,
    pub cccp_iterations: usize,
    pub gamma_t: f64,
    pub gamma_t_design: f64,
    pub min_comm_sinr: f64,
    pub aps: Vec<ApRecovery>,
    pub localization: Option<LocalizationResult>,
    #[serde(skip)]
    pub cccp_trace: String,
}

fn flagged(q: u64, seed: u64, cause: String, iterations: usize, trace: String) -> RealizationRecord {
    RealizationRecord {
        q,
        seed,
        flagged: Some(cause),
        cccp_iterations: iterations,
        gamma_t: f64::NAN,
        gamma_t_design: f64::NAN,
        min_comm_sinr: f64::NAN,
        aps: Vec::new(),
        localization: None,
        cccp_trace: trace,
    }
}

/// Channels, precoder design, transmission and the full attack for realization `q`.
pub fn run_realization(sc: &Scenario, q: u64, seed: u64) -> Result<RealizationRecord> {
    let cfg = &sc.cfg;
    let channels = draw_comm_channels(sc, &mut stream(seed, Stream::CommChannel));
    let geom = sensing_geometry(sc)?;
    let state = run_algorithm1(sc, &channels, &geom, &mut stream(seed, Stream::Init))?;
    let trace = state.trace_text();
    if let Some(cause) = state.flagged {
        return Ok(flagged(q, seed, cause, state.p, trace));
    }
    let symbols = draw_symbols(sc, &mut stream(seed, Stream::Symbols));
    let gamma_t = sensing_sinr(sc, &geom, &state.w, &symbols)?;
    let min_sinr = min_comm_sinr(&channels, &state.w, &state.u, sc.lin.sigma_i2)?;

    let a = sc.layout.adversary_index;
    let thetas = angle_grid(cfg.angle_grid_size);
    let mut aps = Vec::with_capacity(cfg.n_tx);
    let mut cause = None;
    for k in 0..cfg.n_tx {
        let est = estimate_channel(
            &channels.h[a][k],
            cfg.block_len,
            sc.lin.p_t,
            sc.lin.sigma_i2,
            cfg.sigma_err2,
            &mut stream_with(seed, Stream::Pilots, k as u64),
        )?;
        let (y, x) = interference_observation(
            &channels,
            &state.w,
            &symbols,
            a,
            k,
            sc.lin.sigma_i2,
            &mut stream_with(seed, Stream::AdversaryNoise, k as u64),
        )?;
        let em = run_em(&est, &y, sc.lin.sigma_i2, cfg.em_dof, cfg.em_cov_tol, cfg.em_max_iter)?;
        if !em.converged && cause.is_none() {
            cause = Some(format!("EM reached its iteration cap on AP {k}"));
        }
        let bp = estimate_beampattern(&em.x_hat, &thetas);
        aps.push(ApRecovery {
            peak_angle: bp.peak_angle(),
            true_angle: local_angle(sc.layout.tx_ap_pos[k], sc.layout.target_pos)?,
            em_iterations: em.iter,
            em_converged: em.converged,
            err_em: recovery_error(&em.x_hat, &x),
            err_zf: recovery_error(&zf_block(&est, &y), &x),
        });
    }
    let mut rec = RealizationRecord {
        q,
        seed,
        flagged: cause,
        cccp_iterations: state.p,
        gamma_t,
        gamma_t_design: *state.gamma_t_history.last().expect("history starts at the initial point"),
        min_comm_sinr: min_sinr,
        aps,
        localization: None,
        cccp_trace: trace,
    };
    rec.localization = relocalize(sc, &rec)?;
    Ok(rec)
}

/// Votes with the first `known_aps` recovered peaks on the grid of `sc`; `None` for a
/// flagged realization.
pub fn relocalize(sc: &Scenario, rec: &RealizationRecord) -> Result<Option<LocalizationResult>> {
    if rec.flagged.is_some() || rec.aps.is_empty() {
        return Ok(None);
    }
    let bps: Vec<BeampatternEstimate> = rec.aps[..sc.cfg.known_aps]
        .iter()
        .map(|ap| BeampatternEstimate { theta_grid: vec![ap.peak_angle], b: vec![1.0] })
        .collect();
    let mut rng = stream_with(rec.seed, Stream::Vote, 0);
    vote_and_localize(&bps, &sc.layout, &sc.grid, &mut rng).map(Some)
}
