//! Homogeneous primal-dual interior-point method with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector.
//!
//! Internally the program is put in the form
//!   minimize c^T x  subject to  G x + s = h,  s in K
//! with dual  maximize -h^T z  subject to  G^T z + c = 0,  z in K,
//! and embedded in the self-dual system with extra variables tau, kappa so that
//! infeasibility shows up as a certificate instead of divergence.

use nalgebra::{DMatrix, DVector};

use super::cone::{ConeLayout, NtScaling};
use super::{ConeProgram, ConeSolution, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

const STEP: f64 = 0.99;
const REFINE_STEPS: usize = 2;

struct Standard {
    g: DMatrix<f64>,
    h: DVector<f64>,
    c: DVector<f64>,
    layout: ConeLayout,
    /// Orthant rows of G^T, one column per affine row.
    gt_orth: DMatrix<f64>,
    /// Per cone: (G_i^T, G_i^T G_i).
    gt_soc: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Standard {
    fn new(prog: &ConeProgram) -> Self {
        let n = prog.num_vars;
        let dims: Vec<usize> = prog.soc.iter().map(|s| s.a.nrows() + 1).collect();
        let layout = ConeLayout::new(prog.affine.len(), &dims);
        let mut g = DMatrix::zeros(layout.total, n);
        let mut h = DVector::zeros(layout.total);
        for (i, row) in prog.affine.iter().enumerate() {
            g.row_mut(i).copy_from(&row.a.transpose());
            h[i] = row.b;
        }
        for (s, &(o, d)) in prog.soc.iter().zip(&layout.socs) {
            g.row_mut(o).copy_from(&(-s.c.transpose()));
            h[o] = s.d;
            g.rows_mut(o + 1, d - 1).copy_from(&(-&s.a));
            h.rows_mut(o + 1, d - 1).copy_from(&s.b);
        }
        let gt_orth = g.rows(0, layout.orthant).transpose();
        let gt_soc = layout
            .socs
            .iter()
            .map(|&(o, d)| {
                let gt = g.rows(o, d).transpose();
                let gtg = &gt * gt.transpose();
                (gt, gtg)
            })
            .collect();
        Standard { g, h, c: -&prog.objective, layout, gt_orth, gt_soc }
    }

    fn n(&self) -> usize {
        self.g.ncols()
    }

    /// G^T W^{-2} G
    fn normal_matrix(&self, sc: &NtScaling) -> DMatrix<f64> {
        let n = self.n();
        let mut k = DMatrix::zeros(n, n);
        for (j, wj) in sc.orthant_winv2().enumerate() {
            let col = self.gt_orth.column(j);
            k.ger(wj, &col, &col, 1.0);
        }
        for (i, (gt, gtg)) in self.gt_soc.iter().enumerate() {
            let (ib2, w, v, ww) = sc.soc_winv2_parts(i);
            let p = gt * &v;
            let q = gt * w;
            k += gtg * ib2;
            k.ger(4.0 * ww * ib2, &p, &p, 1.0);
            k.ger(-2.0 * ib2, &p, &q, 1.0);
            k.ger(-2.0 * ib2, &q, &p, 1.0);
        }
        k
    }
}

struct Kkt<'a> {
    std: &'a Standard,
    sc: &'a NtScaling,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> Kkt<'a> {
    fn factor(std: &'a Standard, sc: &'a NtScaling) -> Result<Self> {
        let k = std.normal_matrix(sc);
        let chol = regularized_cholesky(k)?;
        Ok(Kkt { std, sc, chol })
    }

    fn winv2(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = &self.std.layout;
        self.sc.apply_winv(l, &self.sc.apply_winv(l, v))
    }

    fn w2(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = &self.std.layout;
        self.sc.apply_w(l, &self.sc.apply_w(l, v))
    }

    fn reduced(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let g = &self.std.g;
        let rhs = r1 + g.transpose() * self.winv2(r2);
        let dx = self.chol.solve(&rhs);
        let dz = self.winv2(&(g * &dx - r2));
        (dx, dz)
    }

    /// Solves [0 G^T; G -W^2] [dx; dz] = [r1; r2] with iterative refinement.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let g = &self.std.g;
        let (mut dx, mut dz) = self.reduced(r1, r2);
        for _ in 0..REFINE_STEPS {
            let e1 = r1 - g.transpose() * &dz;
            let e2 = r2 - (g * &dx - self.w2(&dz));
            let (cx, cz) = self.reduced(&e1, &e2);
            dx += cx;
            dz += cz;
        }
        (dx, dz)
    }
}

fn regularized_cholesky(k: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = k.nrows();
    let scale = (0..n).map(|i| k[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut delta = 1e-13 * scale;
    for _ in 0..8 {
        let mut kr = k.clone();
        for i in 0..n {
            kr[(i, i)] += delta;
        }
        if let Some(ch) = kr.cholesky() {
            return Ok(ch);
        }
        delta *= 100.0;
    }
    Err(Error::Numerical("normal equations could not be factored".into()))
}

struct Iterate {
    x: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

fn initial_point(std: &Standard) -> Result<Iterate> {
    let l = &std.layout;
    let gtg = std.g.transpose() * &std.g;
    let ch = regularized_cholesky(gtg)?;
    let x = ch.solve(&(std.g.transpose() * &std.h));
    let mut s = &std.h - &std.g * &x;
    let mut z = &std.g * ch.solve(&(-&std.c));
    let e = l.identity();
    for v in [&mut s, &mut z] {
        let a = l.max_violation(v);
        if a >= -1e-8 * v.norm().max(1.0) {
            *v += &e * (1.0 + a.max(0.0));
        }
    }
    Ok(Iterate { x, s, z, tau: 1.0, kappa: 1.0 })
}

/// Solves `prog` to relative tolerance `settings.tol`.
pub fn solve(prog: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution> {
    prog.validate()?;
    let std = Standard::new(prog);
    let l = &std.layout;
    let (g, h, c) = (&std.g, &std.h, &std.c);
    let hnorm = h.norm().max(1.0);
    let cnorm = c.norm().max(1.0);
    let degree = l.degree() as f64 + 1.0;
    let tol = settings.tol;

    let mut it = initial_point(&std)?;
    let mut best: Option<(f64, ConeSolution)> = None;

    for iter in 0..=settings.max_iter {
        let rx = g.transpose() * &it.z + c * it.tau;
        let rz = g * &it.x + &it.s - h * it.tau;
        let cx = c.dot(&it.x);
        let hz = h.dot(&it.z);
        let rt = it.kappa + cx + hz;
        let sz = it.s.dot(&it.z);
        let mu = (sz + it.tau * it.kappa) / degree;

        let pres = rz.norm() / it.tau / hnorm;
        let dres = rx.norm() / it.tau / cnorm;
        let pcost = cx / it.tau;
        let dcost = -hz / it.tau;
        let gap = sz / (it.tau * it.tau);
        let gap_ok = gap <= tol * pcost.abs().min(dcost.abs()).max(1.0);

        let finish = |status: SolveStatus, it: &Iterate, dual: DVector<f64>| {
            let x = &it.x / it.tau;
            ConeSolution {
                status,
                objective_value: -c.dot(&x),
                x,
                dual_bound: -dcost,
                dual,
                iterations: iter,
                primal_residual: pres,
                dual_residual: dres,
                gap,
            }
        };

        if pres <= tol && dres <= tol && gap_ok {
            return Ok(finish(SolveStatus::Optimal, &it, &it.z / it.tau));
        }
        if hz < 0.0 {
            let pinf = (g.transpose() * &it.z).norm() / -hz / cnorm;
            if pinf <= tol {
                let ray = &it.z / -hz;
                let mut sol = finish(SolveStatus::Infeasible, &it, ray);
                sol.x.fill(f64::NAN);
                sol.objective_value = f64::NAN;
                return Ok(sol);
            }
        }
        if cx < 0.0 {
            let dinf = (g * &it.x + &it.s).norm() / -cx / hnorm;
            if dinf <= tol {
                let mut sol = finish(SolveStatus::Unbounded, &it, DVector::zeros(l.total));
                sol.x = &it.x / -cx;
                return Ok(sol);
            }
        }
        let merit = pres.max(dres).max(gap / pcost.abs().max(1.0));
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            best = Some((merit, finish(SolveStatus::IterationLimit, &it, &it.z / it.tau)));
        }
        if iter == settings.max_iter {
            break;
        }

        let sc = NtScaling::new(l, &it.s, &it.z);
        let kkt = match Kkt::factor(&std, &sc) {
            Ok(k) => k,
            Err(_) => break,
        };
        let (x1, z1) = kkt.solve(&-c, h);
        let denom = c.dot(&x1) + h.dot(&z1) - it.kappa / it.tau;

        let lambda = &sc.lambda;
        let direction = |sigma: f64, d_s: &DVector<f64>, d_tk: f64| {
            let w_ld = sc.apply_w(l, &l.divide(lambda, d_s));
            let r1 = &rx * -(1.0 - sigma);
            let r2 = &rz * -(1.0 - sigma) - &w_ld;
            let (x2, z2) = kkt.solve(&r1, &r2);
            let dtau = (-(1.0 - sigma) * rt - c.dot(&x2) - h.dot(&z2) - d_tk / it.tau) / denom;
            let dx = x2 + &x1 * dtau;
            let dz = z2 + &z1 * dtau;
            let ds = sc.apply_w(l, &(l.divide(lambda, d_s) - sc.apply_w(l, &dz)));
            let dkappa = (d_tk - it.kappa * dtau) / it.tau;
            (dx, ds, dz, dtau, dkappa)
        };
        let max_step = |ds: &DVector<f64>, dz: &DVector<f64>, dtau: f64, dkappa: f64| {
            let mut a = l.step_to_boundary(&it.s, ds).min(l.step_to_boundary(&it.z, dz));
            if dtau < 0.0 {
                a = a.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-it.kappa / dkappa);
            }
            a
        };

        // predictor
        let ll = l.product(lambda, lambda);
        let (_, ds_a, dz_a, dtau_a, dkappa_a) = direction(0.0, &-&ll, -it.tau * it.kappa);
        let alpha_a = max_step(&ds_a, &dz_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3).clamp(0.0, 1.0);

        // corrector
        let corr = l.product(&sc.apply_winv(l, &ds_a), &sc.apply_w(l, &dz_a));
        let d_s = -&ll + l.identity() * (sigma * mu) - corr;
        let d_tk = -it.tau * it.kappa + sigma * mu - dtau_a * dkappa_a;
        let (dx, ds, dz, dtau, dkappa) = direction(sigma, &d_s, d_tk);
        let alpha = (STEP * max_step(&ds, &dz, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-14) || !dx.iter().all(|v| v.is_finite()) {
            break;
        }
        it.x += dx * alpha;
        it.s += ds * alpha;
        it.z += dz * alpha;
        it.tau += dtau * alpha;
        it.kappa += dkappa * alpha;
    }
    Ok(best.map(|(_, s)| s).expect("at least one iterate is recorded"))
}

#[cfg(test)]
mod tests {
    use super::super::{SocConstraint, SolverSettings};
    use super::*;
    use rand::{Rng, SeedableRng};

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn single_bound() {
        let mut p = ConeProgram::new(1);
        p.objective[0] = 1.0;
        p.add_affine(DVector::from_element(1, 1.0), 1.0);
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "{}", sol.x[0]);
        assert!((sol.objective_value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unit_ball_maximizer_is_normalized_objective() {
        let cvec = DVector::from_vec(vec![3.0, -4.0, 1.0]);
        let mut p = ConeProgram::new(3);
        p.objective = cvec.clone();
        p.add_soc(SocConstraint { a: DMatrix::identity(3, 3), b: DVector::zeros(3), c: DVector::zeros(3), d: 1.0 });
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expect = &cvec / cvec.norm();
        assert!((&sol.x - expect).norm() < 1e-6);
        assert!((sol.objective_value - cvec.norm()).abs() < 1e-6);
        assert!(sol.objective_value <= sol.dual_bound + 1e-9);
    }

    #[test]
    fn empty_interval_is_infeasible() {
        let mut p = ConeProgram::new(1);
        p.objective[0] = 1.0;
        p.add_affine(DVector::from_element(1, 1.0), 0.0);
        p.add_affine(DVector::from_element(1, -1.0), -1.0);
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        // Farkas ray: z >= 0, G^T z = 0, h^T z < 0
        let z = &sol.dual;
        assert!(z.iter().all(|v| *v >= -1e-9));
        assert!((z[0] - z[1]).abs() < 1e-6);
        assert!((0.0 * z[0] - 1.0 * z[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut p = ConeProgram::new(2);
        p.objective[0] = 1.0;
        p.add_affine(DVector::from_vec(vec![0.0, 1.0]), 1.0);
        p.add_affine(DVector::from_vec(vec![-1.0, 0.0]), 0.0);
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let cvec = DVector::from_vec(vec![1.0, 2.0]);
        let mut p = ConeProgram::new(2);
        p.objective = cvec;
        p.add_soc(SocConstraint { a: DMatrix::identity(2, 2), b: DVector::zeros(2), c: DVector::zeros(2), d: 1.0 });
        let sol = solve(&p, &SolverSettings { tol: 1e-7, max_iter: 1 }).unwrap();
        assert_eq!(sol.status, SolveStatus::IterationLimit);
    }

    #[test]
    fn mixed_problem_against_closed_form() {
        // maximize x0 + x1 s.t. ||(x0, x1)|| <= 2, x0 <= 1  ->  x = (1, sqrt(3))
        let mut p = ConeProgram::new(2);
        p.objective = DVector::from_vec(vec![1.0, 1.0]);
        p.add_affine(DVector::from_vec(vec![1.0, 0.0]), 1.0);
        p.add_soc(SocConstraint { a: DMatrix::identity(2, 2), b: DVector::zeros(2), c: DVector::zeros(2), d: 2.0 });
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
        assert!((sol.x[1] - 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn random_programs_satisfy_constraints_and_permutation_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..10 {
            let n = 6;
            let mut p = ConeProgram::new(n);
            p.objective = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            // bounded by a ball, plus random cuts and cones that keep 0 feasible
            p.add_soc(SocConstraint { a: DMatrix::identity(n, n), b: DVector::zeros(n), c: DVector::zeros(n), d: 3.0 });
            for _ in 0..4 {
                p.add_affine(DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)), rng.random_range(0.1..1.0));
            }
            for _ in 0..2 {
                let a = DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
                let b = DVector::from_fn(3, |_, _| rng.random_range(-0.2..0.2));
                let cc = DVector::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
                p.add_soc(SocConstraint { a, b, c: cc, d: 1.0 });
            }
            let sol = solve(&p, &settings()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
            assert!(p.max_violation(&sol.x) <= 1e-6, "trial {trial}: {}", p.max_violation(&sol.x));
            assert!(sol.objective_value <= sol.dual_bound + 1e-7);

            // reversed variable order
            let perm: Vec<usize> = (0..n).rev().collect();
            let mut q = p.clone();
            q.objective = DVector::from_fn(n, |i, _| p.objective[perm[i]]);
            for (qa, pa) in q.affine.iter_mut().zip(&p.affine) {
                qa.a = DVector::from_fn(n, |i, _| pa.a[perm[i]]);
            }
            for (qs, ps) in q.soc.iter_mut().zip(&p.soc) {
                qs.a = DMatrix::from_fn(ps.a.nrows(), n, |r, i| ps.a[(r, perm[i])]);
                qs.c = DVector::from_fn(n, |i, _| ps.c[perm[i]]);
            }
            let sq = solve(&q, &settings()).unwrap();
            for i in 0..n {
                assert!((sq.x[i] - sol.x[perm[i]]).abs() < 1e-6, "trial {trial} var {i}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let mut p = ConeProgram::new(2);
        p.objective = DVector::from_vec(vec![0.3, -0.7]);
        p.add_soc(SocConstraint { a: DMatrix::identity(2, 2), b: DVector::zeros(2), c: DVector::zeros(2), d: 1.0 });
        let a = solve(&p, &settings()).unwrap();
        let b = solve(&p, &settings()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}
