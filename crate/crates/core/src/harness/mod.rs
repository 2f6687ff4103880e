//! Monte-Carlo driver: one realization end to end, parameter sweeps, result files.

mod output;
mod realization;

pub use output::{emit_csv, emit_json, format_row, read_csv, CsvSink, CSV_HEADER};
pub use realization::{relocalize, run_realization, ApRecovery, RealizationRecord};

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::realization_seed;
use crate::scenario::{validate_config, NetworkLayout, Point, SearchGrid, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Single,
    /// Target moved along y = -x; sweep values are the x coordinate.
    TargetSweep,
    /// Search-grid cell size in meters.
    CellsizeSweep,
    /// Number of transmit APs known to the adversary (the first K in layout order).
    KnownapsSweep,
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "single" => Ok(ExperimentKind::Single),
            "target" | "target_sweep" => Ok(ExperimentKind::TargetSweep),
            "cellsize" | "cellsize_sweep" => Ok(ExperimentKind::CellsizeSweep),
            "knownaps" | "knownaps_sweep" => Ok(ExperimentKind::KnownapsSweep),
            other => Err(Error::Config(format!("unknown experiment kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub sweep_values: Vec<f64>,
    /// UE antenna counts to repeat the experiment for; empty means the configured one.
    pub m_ue_values: Vec<usize>,
    /// `key=value` config deltas applied to every point.
    pub overrides: Vec<String>,
    /// CSV written row by row while the experiment runs.
    pub output_path: Option<PathBuf>,
    /// Per-realization records, one JSON object per line.
    pub records_path: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Fill `wall_time_s`; off by default so repeated runs give identical files.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, sweep_values: Vec<f64>) -> Self {
        ExperimentSpec {
            kind,
            sweep_values,
            m_ue_values: Vec::new(),
            overrides: Vec::new(),
            output_path: None,
            records_path: None,
            jobs: 0,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub m_ue: usize,
    pub n_tx: usize,
    pub p_d: f64,
    pub q_used: usize,
    pub flagged: usize,
    pub mean_gamma_t: f64,
    pub mean_min_comm_sinr: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

fn check_spec(spec: &ExperimentSpec, cfg: &SimulationConfig) -> Result<()> {
    if spec.kind != ExperimentKind::Single && spec.sweep_values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    for &v in &spec.sweep_values {
        match spec.kind {
            ExperimentKind::CellsizeSweep => {
                SearchGrid::new(cfg.grid_extent, v)?;
            }
            ExperimentKind::KnownapsSweep => {
                if v.fract() != 0.0 || v < 1.0 || v > cfg.n_tx as f64 {
                    return Err(Error::Config(format!("known AP count {v} outside 1..={}", cfg.n_tx)));
                }
            }
            ExperimentKind::TargetSweep => {
                if !v.is_finite() || v.abs() > cfg.grid_extent / 2.0 {
                    return Err(Error::Config(format!("target x = {v} lies outside the search area")));
                }
            }
            ExperimentKind::Single => {}
        }
    }
    Ok(())
}

/// Runs realizations `0..Q` of one configuration in the current pool, ordered by index.
fn realizations(cfg: &SimulationConfig, layout: &NetworkLayout) -> Result<Vec<RealizationRecord>> {
    let sc = validate_config(cfg, layout)?;
    (0..cfg.q_realizations as u64)
        .into_par_iter()
        .map(|q| run_realization(&sc, q, realization_seed(cfg.seed, q)))
        .collect()
}

fn summarize(
    sweep_value: f64,
    cfg: &SimulationConfig,
    records: &[RealizationRecord],
    hits: &[Option<bool>],
    started: Instant,
    timing: bool,
) -> Result<ResultRow> {
    let used: Vec<usize> = (0..records.len()).filter(|&i| hits[i].is_some()).collect();
    if used.is_empty() {
        return Err(Error::Experiment(format!("every realization was flagged at sweep value {sweep_value}")));
    }
    let n = used.len() as f64;
    let correct = used.iter().filter(|&&i| hits[i] == Some(true)).count() as f64;
    Ok(ResultRow {
        sweep_value,
        m_ue: cfg.m_ue,
        n_tx: cfg.n_tx,
        p_d: correct / n,
        q_used: used.len(),
        flagged: records.len() - used.len(),
        mean_gamma_t: used.iter().map(|&i| records[i].gamma_t).sum::<f64>() / n,
        mean_min_comm_sinr: used.iter().map(|&i| records[i].min_comm_sinr).sum::<f64>() / n,
        wall_time_s: if timing { started.elapsed().as_secs_f64() } else { 0.0 },
        seed: cfg.seed,
    })
}

/// Runs the experiment and returns one row per (UE antenna count, sweep value).
pub fn run_experiment(spec: &ExperimentSpec, cfg: &SimulationConfig, layout: &NetworkLayout) -> Result<Vec<ResultRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?;
    let mut base = cfg.clone();
    for o in &spec.overrides {
        base.set_str(o)?;
    }
    check_spec(spec, &base)?;
    let m_ues = if spec.m_ue_values.is_empty() { vec![base.m_ue] } else { spec.m_ue_values.clone() };
    let mut sink = spec.output_path.as_ref().map(|p| CsvSink::create(p)).transpose()?;
    let mut records_out = spec
        .records_path
        .as_ref()
        .map(|p| std::fs::File::create(p).map(std::io::BufWriter::new))
        .transpose()?;
    let mut rows = Vec::new();

    let mut push = |row: ResultRow, recs: &[RealizationRecord], rows: &mut Vec<ResultRow>| -> Result<()> {
        if let Some(s) = sink.as_mut() {
            s.write(&row)?;
        }
        if let Some(w) = records_out.as_mut() {
            use std::io::Write;
            for r in recs {
                serde_json::to_writer(&mut *w, &(row.sweep_value, r))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        rows.push(row);
        Ok(())
    };

    for m_ue in m_ues {
        let mut cfg = base.clone();
        cfg.m_ue = m_ue;
        match spec.kind {
            ExperimentKind::Single => {
                let t = Instant::now();
                let recs = pool.install(|| realizations(&cfg, layout))?;
                let hits: Vec<_> = recs.iter().map(|r| r.localization.as_ref().map(|l| l.correct)).collect();
                let row = summarize(layout.target_pos.x, &cfg, &recs, &hits, t, spec.timing)?;
                push(row, &recs, &mut rows)?;
            }
            ExperimentKind::TargetSweep => {
                for &x in &spec.sweep_values {
                    let t = Instant::now();
                    let mut lay = layout.clone();
                    lay.target_pos = Point::new(x, -x);
                    let recs = pool.install(|| realizations(&cfg, &lay))?;
                    let hits: Vec<_> = recs.iter().map(|r| r.localization.as_ref().map(|l| l.correct)).collect();
                    let row = summarize(x, &cfg, &recs, &hits, t, spec.timing)?;
                    push(row, &recs, &mut rows)?;
                }
            }
            ExperimentKind::CellsizeSweep | ExperimentKind::KnownapsSweep => {
                // the transmission does not depend on the swept quantity: simulate once, re-vote per value
                let t = Instant::now();
                let recs = pool.install(|| realizations(&cfg, layout))?;
                for &v in &spec.sweep_values {
                    let mut vcfg = cfg.clone();
                    if spec.kind == ExperimentKind::CellsizeSweep {
                        vcfg.cell_size = v;
                    } else {
                        vcfg.known_aps = v as usize;
                    }
                    let sc = validate_config(&vcfg, layout)?;
                    let mut hits = Vec::with_capacity(recs.len());
                    let mut revoted = Vec::with_capacity(recs.len());
                    for r in &recs {
                        let loc = relocalize(&sc, r)?;
                        hits.push(loc.as_ref().map(|l| l.correct));
                        revoted.push(RealizationRecord { localization: loc, ..r.clone() });
                    }
                    let row = summarize(v, &vcfg, &recs, &hits, t, spec.timing)?;
                    push(row, &revoted, &mut rows)?;
                }
            }
        }
    }
    Ok(rows)
}
