//! Product cone R+^l x Q^{m_1} x ... x Q^{m_p}: Jordan algebra, Nesterov-Todd scaling and
//! step-to-boundary computations.

use nalgebra::DVector;

#[derive(Debug, Clone)]
pub(crate) struct ConeLayout {
    /// Dimension of the nonnegative orthant block (stored first).
    pub orthant: usize,
    /// (offset, dim) of each second-order cone.
    pub socs: Vec<(usize, usize)>,
    pub total: usize,
}

impl ConeLayout {
    pub fn new(orthant: usize, soc_dims: &[usize]) -> Self {
        let mut socs = Vec::with_capacity(soc_dims.len());
        let mut off = orthant;
        for &d in soc_dims {
            socs.push((off, d));
            off += d;
        }
        ConeLayout { orthant, socs, total: off }
    }

    /// Barrier degree: one per orthant coordinate and one per cone.
    pub fn degree(&self) -> usize {
        self.orthant + self.socs.len()
    }

    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.total);
        for i in 0..self.orthant {
            e[i] = 1.0;
        }
        for &(o, _) in &self.socs {
            e[o] = 1.0;
        }
        e
    }

    /// Smallest t with u + t e in the cone (negative when u is interior).
    pub fn max_violation(&self, u: &DVector<f64>) -> f64 {
        let mut t = f64::NEG_INFINITY;
        for i in 0..self.orthant {
            t = t.max(-u[i]);
        }
        for &(o, d) in &self.socs {
            let tail = u.rows(o + 1, d - 1).norm();
            t = t.max(tail - u[o]);
        }
        t
    }

    pub fn product(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.total);
        for i in 0..self.orthant {
            out[i] = u[i] * v[i];
        }
        for &(o, d) in &self.socs {
            out[o] = u.rows(o, d).dot(&v.rows(o, d));
            for t in 1..d {
                out[o + t] = u[o] * v[o + t] + v[o] * u[o + t];
            }
        }
        out
    }

    /// Solves lambda o x = d for x.
    pub fn divide(&self, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.total);
        for i in 0..self.orthant {
            out[i] = d[i] / lambda[i];
        }
        for &(o, dim) in &self.socs {
            let l0 = lambda[o];
            let l1 = lambda.rows(o + 1, dim - 1);
            let d1 = d.rows(o + 1, dim - 1);
            let det = l0 * l0 - l1.norm_squared();
            let x0 = (l0 * d[o] - l1.dot(&d1)) / det;
            out[o] = x0;
            for t in 1..dim {
                out[o + t] = (d[o + t] - x0 * lambda[o + t]) / l0;
            }
        }
        out
    }

    /// Largest alpha >= 0 keeping u + alpha du in the cone (u interior). Infinity if unbounded.
    pub fn step_to_boundary(&self, u: &DVector<f64>, du: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.orthant {
            if du[i] < 0.0 {
                alpha = alpha.min(-u[i] / du[i]);
            }
        }
        for &(o, d) in &self.socs {
            alpha = alpha.min(soc_step(&u.as_slice()[o..o + d], &du.as_slice()[o..o + d]));
        }
        alpha
    }
}

fn soc_step(u: &[f64], du: &[f64]) -> f64 {
    // f(alpha) = a alpha^2 + 2 b alpha + c, the J-norm of u + alpha du
    let tail = |x: &[f64], y: &[f64]| x[1..].iter().zip(&y[1..]).map(|(p, q)| p * q).sum::<f64>();
    let a = du[0] * du[0] - tail(du, du);
    let b = u[0] * du[0] - tail(u, du);
    let c = (u[0] * u[0] - tail(u, u)).max(0.0);
    let scale = du[0].abs() + tail(du, du).sqrt();
    if scale == 0.0 {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    if a.abs() <= 1e-14 * scale * scale {
        if b < 0.0 {
            best = -c / (2.0 * b);
        }
    } else {
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let q = -(b + b.signum() * disc.sqrt());
            for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
                if r > 0.0 && r < best {
                    best = r;
                }
            }
        }
    }
    // crossing the apex also ends the positive sheet
    if du[0] < 0.0 {
        best = best.min(-u[0] / du[0]);
    }
    best
}

/// Nesterov-Todd scaling W with W z = W^{-1} s = lambda.
#[derive(Debug, Clone)]
pub(crate) struct NtScaling {
    /// sqrt(s / z) on the orthant.
    d: DVector<f64>,
    /// (beta, v) per cone; W = beta (2 v v^T - J).
    soc: Vec<(f64, DVector<f64>)>,
    pub lambda: DVector<f64>,
}

fn jnorm(x: &[f64]) -> f64 {
    let t: f64 = x[1..].iter().map(|v| v * v).sum();
    (x[0] * x[0] - t).max(f64::MIN_POSITIVE).sqrt()
}

impl NtScaling {
    pub fn new(layout: &ConeLayout, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let d = DVector::from_fn(layout.orthant, |i, _| (s[i] / z[i]).sqrt());
        let mut soc = Vec::with_capacity(layout.socs.len());
        for &(o, dim) in &layout.socs {
            let sv = &s.as_slice()[o..o + dim];
            let zv = &z.as_slice()[o..o + dim];
            let (sn, zn) = (jnorm(sv), jnorm(zv));
            let sb: Vec<f64> = sv.iter().map(|v| v / sn).collect();
            let zb: Vec<f64> = zv.iter().map(|v| v / zn).collect();
            let dot: f64 = sb.iter().zip(&zb).map(|(a, b)| a * b).sum();
            let gamma = ((1.0 + dot) / 2.0).sqrt();
            let mut w = DVector::zeros(dim);
            w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
            for t in 1..dim {
                w[t] = (sb[t] - zb[t]) / (2.0 * gamma);
            }
            // W = beta (2 v v^T - J) with v = (wbar + e) / sqrt(2 (wbar_0 + 1))
            w[0] += 1.0;
            let norm = (2.0 * w[0]).sqrt();
            let w = w / norm;
            soc.push(((sn / zn).sqrt(), w));
        }
        let mut sc = NtScaling { d, soc, lambda: DVector::zeros(layout.total) };
        sc.lambda = sc.apply_w(layout, z);
        sc
    }

    pub fn apply_w(&self, layout: &ConeLayout, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(layout.total);
        for i in 0..layout.orthant {
            out[i] = self.d[i] * v[i];
        }
        for (&(o, dim), (beta, w)) in layout.socs.iter().zip(&self.soc) {
            let vs = v.rows(o, dim);
            let wv = w.dot(&vs);
            for t in 0..dim {
                let jv = if t == 0 { vs[0] } else { -vs[t] };
                out[o + t] = beta * (2.0 * w[t] * wv - jv);
            }
        }
        out
    }

    pub fn apply_winv(&self, layout: &ConeLayout, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(layout.total);
        for i in 0..layout.orthant {
            out[i] = v[i] / self.d[i];
        }
        for (&(o, dim), (beta, w)) in layout.socs.iter().zip(&self.soc) {
            let vs = v.rows(o, dim);
            // (1/beta)(2 J w w^T J - J) v
            let jw_v = w[0] * vs[0] - w.rows(1, dim - 1).dot(&vs.rows(1, dim - 1));
            for t in 0..dim {
                let jw = if t == 0 { w[0] } else { -w[t] };
                let jv = if t == 0 { vs[0] } else { -vs[t] };
                out[o + t] = (2.0 * jw * jw_v - jv) / beta;
            }
        }
        out
    }

    /// Orthant diagonal of W^{-2}.
    pub fn orthant_winv2(&self) -> impl Iterator<Item = f64> + '_ {
        self.d.iter().map(|d| 1.0 / (d * d))
    }

    /// W^{-2} of cone i is beta^{-2} (I + 4 |w|^2 v v^T - 2 v w^T - 2 w v^T), v = J w.
    /// Returns (beta^{-2}, w, v, |w|^2).
    pub fn soc_winv2_parts(&self, i: usize) -> (f64, &DVector<f64>, DVector<f64>, f64) {
        let (beta, w) = &self.soc[i];
        let mut v = -w.clone();
        v[0] = w[0];
        (1.0 / (beta * beta), w, v, w.norm_squared())
    }
}
