//! Beampattern replica, direction rays and grid voting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{boresight, steering_vector};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scenario::{NetworkLayout, Point, SearchGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternEstimate {
    /// Local-frame angles.
    pub theta_grid: Vec<f64>,
    pub b: Vec<f64>,
}

impl BeampatternEstimate {
    /// Index of the largest entry (the first one on ties).
    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (z, v) in self.b.iter().enumerate() {
            if *v > self.b[best] {
                best = z;
            }
        }
        best
    }

    pub fn peak_angle(&self) -> f64 {
        self.theta_grid[self.peak_index()]
    }
}

/// `z` uniformly spaced angles from -pi/2 to pi/2 inclusive.
pub fn angle_grid(z: usize) -> Vec<f64> {
    use std::f64::consts::FRAC_PI_2;
    if z < 2 {
        return vec![0.0; z];
    }
    (0..z).map(|i| -FRAC_PI_2 + std::f64::consts::PI * i as f64 / (z - 1) as f64).collect()
}

/// Radiated power toward each grid angle, `a^T(theta) R a*(theta)` with `R = X X^H / N`.
pub fn estimate_beampattern(x_hat: &CMat, theta_grid: &[f64]) -> BeampatternEstimate {
    let (m, n) = x_hat.shape();
    let b = theta_grid
        .iter()
        .map(|&th| {
            if n == 0 {
                return 0.0;
            }
            let a = steering_vector(th, m);
            let row = a.transpose() * x_hat;
            row.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64
        })
        .collect();
    BeampatternEstimate { theta_grid: theta_grid.to_vec(), b }
}

/// Cells crossed by the ray from `origin` along global angle `angle`, in order. Each cell
/// touched by a segment of positive length is listed once; an empty list means the ray
/// misses the area.
pub fn traverse_ray(grid: &SearchGrid, origin: Point, angle: f64) -> Vec<usize> {
    let h = grid.half();
    let (dx, dy) = (angle.cos(), angle.sin());
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for (o, d) in [(origin.x, dx), (origin.y, dy)] {
        if d.abs() < 1e-15 {
            if o.abs() > h {
                return Vec::new();
            }
            continue;
        }
        let (a, b) = ((-h - o) / d, (h - o) / d);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    let eps = 1e-9 * grid.cell_size;
    if !(t1 - t0 > eps) {
        return Vec::new();
    }
    let n = grid.per_side();
    let mut ts = vec![t0, t1];
    for (o, d) in [(origin.x, dx), (origin.y, dy)] {
        if d.abs() < 1e-15 {
            continue;
        }
        for j in 0..=n {
            let line = -h + j as f64 * grid.cell_size;
            let t = (line - o) / d;
            if t > t0 && t < t1 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    let mut cells = Vec::new();
    let mut seen = vec![false; grid.num_cells()];
    for w in ts.windows(2) {
        if w[1] - w[0] <= eps {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let p = Point::new(origin.x + tm * dx, origin.y + tm * dy);
        if let Some(cell) = grid.cell_of(p) {
            if !seen[cell] {
                seen[cell] = true;
                cells.push(cell);
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    /// Global direction of each known AP's ray.
    pub lines: Vec<f64>,
    pub votes: Vec<u32>,
    pub chosen_cell: usize,
    pub target_cell: Option<usize>,
    pub correct: bool,
    /// Known APs whose ray missed the area.
    pub missed: Vec<usize>,
    /// Number of cells sharing the winning count.
    pub tied: usize,
}

/// Casts one ray per beampattern (AP `k` uses `layout.tx_ap_pos[k]`) and picks the cell with
/// the most votes, ties broken uniformly at random.
pub fn vote_and_localize<R: Rng + ?Sized>(
    bps: &[BeampatternEstimate],
    layout: &NetworkLayout,
    grid: &SearchGrid,
    rng: &mut R,
) -> Result<LocalizationResult> {
    if bps.is_empty() {
        return Err(Error::Config("localization needs at least one known AP".into()));
    }
    if bps.len() > layout.tx_ap_pos.len() {
        return Err(Error::Dimension("more beampatterns than transmit APs".into()));
    }
    let mut votes = vec![0u32; grid.num_cells()];
    let mut lines = Vec::with_capacity(bps.len());
    let mut missed = Vec::new();
    for (k, bp) in bps.iter().enumerate() {
        let ap = layout.tx_ap_pos[k];
        let angle = boresight(ap) + bp.peak_angle();
        lines.push(angle);
        let cells = traverse_ray(grid, ap, angle);
        if cells.is_empty() {
            missed.push(k);
        }
        for cell in cells {
            votes[cell] += 1;
        }
    }
    let top = *votes.iter().max().expect("grid has cells");
    let winners: Vec<usize> = (0..votes.len()).filter(|&i| votes[i] == top).collect();
    let chosen_cell = winners[rng.random_range(0..winners.len())];
    let target_cell = grid.cell_of(layout.target_pos);
    Ok(LocalizationResult {
        lines,
        votes,
        chosen_cell,
        target_cell,
        correct: target_cell == Some(chosen_cell),
        missed,
        tied: winners.len(),
    })
}

/// Fraction of correct localizations.
pub fn detection_probability(results: &[LocalizationResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Experiment("no localization results to average".into()));
    }
    Ok(results.iter().filter(|r| r.correct).count() as f64 / results.len() as f64)
}
