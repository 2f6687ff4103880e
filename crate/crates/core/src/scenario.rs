//! Configuration, network geometry, unit conversion and the adversary's search grid.
//!
//! Powers are kept in linear milliwatts and angles in radians once a [`Scenario`] has been
//! validated. The configuration file is flat TOML whose keys are the field names of
//! [`SimulationConfig`] plus the layout keys `tx_ap_pos`, `rx_ap_pos`, `ue_pos`,
//! `target_pos` and `adversary_index`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Global azimuth of the vector `to - from`, in (-pi, pi].
pub fn azimuth(from: Point, to: Point) -> Result<f64> {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let a = dy.atan2(dx);
    Ok(if a == -PI { PI } else { a })
}

/// Every tunable of one simulation. Powers in dB units here; see [`LinearUnits`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ue: usize,
    pub m_ap: usize,
    pub m_ue: usize,
    /// Symbols per coherent block.
    pub block_len: usize,
    pub p_t_dbm: f64,
    /// Communication SINR threshold in dB.
    pub gamma_db: f64,
    pub sigma_i_dbm: f64,
    pub sigma_n_dbm: f64,
    pub sigma_rcs_dbsm: f64,
    pub rcs_correlation: f64,
    pub carrier_freq_hz: f64,
    pub pathloss_exp: f64,
    pub eps_cccp: f64,
    pub i_max: usize,
    /// Channel-estimation error variance assumed by the adversary (linear).
    pub sigma_err2: f64,
    pub em_cov_tol: f64,
    pub em_dof: f64,
    pub em_max_iter: usize,
    pub q_realizations: usize,
    pub angle_grid_size: usize,
    pub grid_extent: f64,
    pub cell_size: f64,
    /// The adversary knows the positions of the first `known_aps` transmit APs.
    pub known_aps: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_tx: 8,
            n_rx: 4,
            n_ue: 4,
            m_ap: 64,
            m_ue: 8,
            block_len: 128,
            p_t_dbm: 50.0,
            gamma_db: 3.0,
            sigma_i_dbm: -94.0,
            sigma_n_dbm: -94.0,
            sigma_rcs_dbsm: 10.0,
            rcs_correlation: 1.0,
            carrier_freq_hz: 1.9e9,
            pathloss_exp: 3.0,
            eps_cccp: 0.1,
            i_max: 10,
            sigma_err2: 10.0,
            em_cov_tol: 1e-5,
            em_dof: 3.0,
            em_max_iter: 200,
            q_realizations: 100,
            angle_grid_size: 361,
            grid_extent: 1000.0,
            cell_size: 50.0,
            known_aps: 8,
            solver_tol: 1e-7,
            solver_max_iter: 200,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-scale parameters.
    Paper,
    /// Reduced scale for quick runs: 16 AP antennas, 64-symbol blocks, 50 realizations.
    Desk,
}

impl SimulationConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => SimulationConfig::default(),
            Preset::Desk => SimulationConfig {
                m_ap: 16,
                block_len: 64,
                q_realizations: 50,
                angle_grid_size: 181,
                ..SimulationConfig::default()
            },
        }
    }

    /// Sets one field from a TOML value. Used by config files, CLI `--set` and sweep overrides.
    pub fn set(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
            match v {
                toml::Value::Float(f) => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(Error::Config(format!("{key}: expected a number, got {v}"))),
            }
        }
        fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
            match v {
                toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                _ => Err(Error::Config(format!("{key}: expected a non-negative integer, got {v}"))),
            }
        }
        match key {
            "n_tx" => self.n_tx = as_usize(key, value)?,
            "n_rx" => self.n_rx = as_usize(key, value)?,
            "n_ue" => self.n_ue = as_usize(key, value)?,
            "m_ap" => self.m_ap = as_usize(key, value)?,
            "m_ue" => self.m_ue = as_usize(key, value)?,
            "block_len" => self.block_len = as_usize(key, value)?,
            "p_t_dbm" => self.p_t_dbm = as_f64(key, value)?,
            "gamma_db" => self.gamma_db = as_f64(key, value)?,
            "sigma_i_dbm" => self.sigma_i_dbm = as_f64(key, value)?,
            "sigma_n_dbm" => self.sigma_n_dbm = as_f64(key, value)?,
            "sigma_rcs_dbsm" => self.sigma_rcs_dbsm = as_f64(key, value)?,
            "rcs_correlation" => self.rcs_correlation = as_f64(key, value)?,
            "carrier_freq_hz" => self.carrier_freq_hz = as_f64(key, value)?,
            "pathloss_exp" => self.pathloss_exp = as_f64(key, value)?,
            "eps_cccp" => self.eps_cccp = as_f64(key, value)?,
            "i_max" => self.i_max = as_usize(key, value)?,
            "sigma_err2" => self.sigma_err2 = as_f64(key, value)?,
            "em_cov_tol" => self.em_cov_tol = as_f64(key, value)?,
            "em_dof" => self.em_dof = as_f64(key, value)?,
            "em_max_iter" => self.em_max_iter = as_usize(key, value)?,
            "q_realizations" => self.q_realizations = as_usize(key, value)?,
            "angle_grid_size" => self.angle_grid_size = as_usize(key, value)?,
            "grid_extent" => self.grid_extent = as_f64(key, value)?,
            "cell_size" => self.cell_size = as_f64(key, value)?,
            "known_aps" => self.known_aps = as_usize(key, value)?,
            "solver_tol" => self.solver_tol = as_f64(key, value)?,
            "solver_max_iter" => self.solver_max_iter = as_usize(key, value)?,
            "seed" => match value {
                toml::Value::Integer(i) => self.seed = *i as u64,
                _ => return Err(Error::Config(format!("seed: expected an integer, got {value}"))),
            },
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key=value` where value is a TOML literal.
    pub fn set_str(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        let value = parse_toml_literal(v.trim())?;
        self.set(k.trim(), &value)
    }
}

fn parse_toml_literal(s: &str) -> Result<toml::Value> {
    let table: toml::Table = format!("v = {s}").parse()?;
    Ok(table["v"].clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub tx_ap_pos: Vec<Point>,
    pub rx_ap_pos: Vec<Point>,
    pub ue_pos: Vec<Point>,
    pub target_pos: Point,
    pub adversary_index: usize,
}

/// The reference deployment: 8 transmit APs on the border of the area, 4 receive APs and
/// 4 UEs on the diagonals, target at (-75, 75), UE 0 is the adversary.
pub fn default_layout() -> NetworkLayout {
    let p = Point::new;
    NetworkLayout {
        tx_ap_pos: vec![
            p(-500.0, -500.0),
            p(500.0, 500.0),
            p(-500.0, 500.0),
            p(500.0, -500.0),
            p(0.0, -500.0),
            p(0.0, 500.0),
            p(-500.0, 0.0),
            p(500.0, 0.0),
        ],
        rx_ap_pos: vec![p(250.0, 250.0), p(-250.0, -250.0), p(-250.0, 250.0), p(250.0, -250.0)],
        ue_pos: vec![p(300.0, 300.0), p(-300.0, -300.0), p(-300.0, 300.0), p(300.0, -300.0)],
        target_pos: p(-75.0, 75.0),
        adversary_index: 0,
    }
}

/// Reference deployment with only the four edge-midpoint transmit APs.
pub fn default_layout_four_tx() -> NetworkLayout {
    let mut l = default_layout();
    l.tx_ap_pos = l.tx_ap_pos[4..].to_vec();
    l
}

/// Layout matching `n_tx`: the four-AP variant when `n_tx == 4`, otherwise the eight-AP one.
pub fn layout_for(n_tx: usize) -> NetworkLayout {
    if n_tx == 4 {
        default_layout_four_tx()
    } else {
        default_layout()
    }
}

impl NetworkLayout {
    pub fn set(&mut self, key: &str, value: &toml::Value) -> Result<bool> {
        fn points(key: &str, v: &toml::Value) -> Result<Vec<Point>> {
            v.clone()
                .try_into::<Vec<[f64; 2]>>()
                .map(|ps| ps.into_iter().map(Point::from).collect())
                .map_err(|e| Error::Config(format!("{key}: {e}")))
        }
        match key {
            "tx_ap_pos" => self.tx_ap_pos = points(key, value)?,
            "rx_ap_pos" => self.rx_ap_pos = points(key, value)?,
            "ue_pos" => self.ue_pos = points(key, value)?,
            "target_pos" => {
                let p: [f64; 2] = value.clone().try_into().map_err(|e| Error::Config(format!("{key}: {e}")))?;
                self.target_pos = p.into();
            }
            "adversary_index" => match value {
                toml::Value::Integer(i) if *i >= 0 => self.adversary_index = *i as usize,
                _ => return Err(Error::Config(format!("{key}: expected a non-negative integer"))),
            },
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Reads a flat TOML file on top of `cfg` and `layout`.
pub fn load_config_file(path: &Path, cfg: &mut SimulationConfig, layout: &mut NetworkLayout) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    apply_table(&text.parse::<toml::Table>()?, cfg, layout)
}

pub fn apply_table(table: &toml::Table, cfg: &mut SimulationConfig, layout: &mut NetworkLayout) -> Result<()> {
    for (k, v) in table {
        if !layout.set(k, v)? {
            cfg.set(k, v)?;
        }
    }
    Ok(())
}

/// Square search area centred on the origin, divided into square cells indexed row-major with
/// row 0 at the top (largest y) and column 0 at the left (smallest x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub extent: f64,
    pub cell_size: f64,
}

impl SearchGrid {
    pub fn new(extent: f64, cell_size: f64) -> Result<Self> {
        if !(extent > 0.0 && cell_size > 0.0) {
            return Err(Error::Config("grid extent and cell size must be positive".into()));
        }
        let ratio = extent / cell_size;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!("cell size {cell_size} does not divide extent {extent}")));
        }
        Ok(SearchGrid { extent, cell_size })
    }

    pub fn per_side(&self) -> usize {
        (self.extent / self.cell_size).round() as usize
    }

    pub fn num_cells(&self) -> usize {
        self.per_side() * self.per_side()
    }

    pub fn half(&self) -> f64 {
        self.extent / 2.0
    }

    /// Row and column of `p`. A point on a shared edge goes to the cell with the smaller index.
    pub fn row_col_of(&self, p: Point) -> Option<(usize, usize)> {
        let h = self.half();
        if !p.is_finite() || p.x.abs() > h || p.y.abs() > h {
            return None;
        }
        let n = self.per_side();
        let u = (p.x + h) / self.cell_size;
        let v = (h - p.y) / self.cell_size;
        let col = (u.ceil() as isize - 1).clamp(0, n as isize - 1) as usize;
        let row = (v.ceil() as isize - 1).clamp(0, n as isize - 1) as usize;
        Some((row, col))
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        self.row_col_of(p).map(|(r, c)| r * self.per_side() + c)
    }

    pub fn center_of(&self, cell: usize) -> Point {
        let n = self.per_side();
        let (row, col) = (cell / n, cell % n);
        let h = self.half();
        Point::new(
            -h + (col as f64 + 0.5) * self.cell_size,
            h - (row as f64 + 0.5) * self.cell_size,
        )
    }
}

/// Linear-unit view of the configured powers and the carrier wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearUnits {
    /// Per-AP transmit power budget, mW.
    pub p_t: f64,
    pub gamma: f64,
    /// UE noise power, mW.
    pub sigma_i2: f64,
    /// Receive-AP noise power, mW.
    pub sigma_n2: f64,
    /// RCS variance, m^2.
    pub sigma_rcs2: f64,
    /// Carrier wavelength, m.
    pub lambda_c: f64,
}

/// A configuration that passed [`validate_config`]. Immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: SimulationConfig,
    pub layout: NetworkLayout,
    pub grid: SearchGrid,
    pub lin: LinearUnits,
}

pub fn validate_config(cfg: &SimulationConfig, layout: &NetworkLayout) -> Result<Scenario> {
    let counts = [
        ("n_tx", cfg.n_tx),
        ("n_rx", cfg.n_rx),
        ("n_ue", cfg.n_ue),
        ("m_ap", cfg.m_ap),
        ("m_ue", cfg.m_ue),
        ("block_len", cfg.block_len),
        ("i_max", cfg.i_max),
        ("em_max_iter", cfg.em_max_iter),
        ("q_realizations", cfg.q_realizations),
        ("angle_grid_size", cfg.angle_grid_size),
        ("solver_max_iter", cfg.solver_max_iter),
    ];
    for (name, v) in counts {
        if v == 0 {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
    }
    if cfg.block_len < cfg.m_ap {
        return Err(Error::Config(format!(
            "block_len {} is shorter than m_ap {}; pilot Gram matrix would be singular",
            cfg.block_len, cfg.m_ap
        )));
    }
    if cfg.block_len < 2 {
        return Err(Error::Config("block_len must be at least 2".into()));
    }
    if cfg.angle_grid_size < 2 {
        return Err(Error::Config("angle_grid_size must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&cfg.rcs_correlation) {
        return Err(Error::Config("rcs_correlation must lie in [0, 1]".into()));
    }
    for (name, v) in [
        ("eps_cccp", cfg.eps_cccp),
        ("em_cov_tol", cfg.em_cov_tol),
        ("em_dof", cfg.em_dof),
        ("solver_tol", cfg.solver_tol),
        ("sigma_err2", cfg.sigma_err2),
        ("carrier_freq_hz", cfg.carrier_freq_hz),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive and finite")));
        }
    }
    if cfg.known_aps == 0 || cfg.known_aps > cfg.n_tx {
        return Err(Error::Config(format!("known_aps must lie in 1..={}", cfg.n_tx)));
    }
    for (name, got, want) in [
        ("tx_ap_pos", layout.tx_ap_pos.len(), cfg.n_tx),
        ("rx_ap_pos", layout.rx_ap_pos.len(), cfg.n_rx),
        ("ue_pos", layout.ue_pos.len(), cfg.n_ue),
    ] {
        if got != want {
            return Err(Error::Dimension(format!("{name} has {got} entries, expected {want}")));
        }
    }
    if layout.adversary_index >= cfg.n_ue {
        return Err(Error::Config("adversary_index out of range".into()));
    }
    let all = layout
        .tx_ap_pos
        .iter()
        .chain(&layout.rx_ap_pos)
        .chain(&layout.ue_pos)
        .chain(std::iter::once(&layout.target_pos));
    if all.into_iter().any(|p| !p.is_finite()) {
        return Err(Error::Config("non-finite position".into()));
    }
    let grid = SearchGrid::new(cfg.grid_extent, cfg.cell_size)?;
    let lin = LinearUnits {
        p_t: db_to_linear(cfg.p_t_dbm),
        gamma: db_to_linear(cfg.gamma_db),
        sigma_i2: db_to_linear(cfg.sigma_i_dbm),
        sigma_n2: db_to_linear(cfg.sigma_n_dbm),
        sigma_rcs2: db_to_linear(cfg.sigma_rcs_dbsm),
        lambda_c: SPEED_OF_LIGHT / cfg.carrier_freq_hz,
    };
    Ok(Scenario {
        cfg: cfg.clone(),
        layout: layout.clone(),
        grid,
        lin,
    })
}
