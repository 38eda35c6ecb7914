//! Sequential quadratic programming with a damped BFGS Hessian, an ℓ₁ merit
//! line search and box bounds carried as linear constraints of every QP.
//!
//! Iterates never leave the box: each QP keeps `x + d` inside it and the box
//! is convex, so every point on the segment is inside as well. Nonlinear
//! equalities are driven to zero by the QP linearization and finished off by
//! a minimum-norm Newton projection over the variables not held at a bound.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{cholesky, cholesky_solve, dot, norm_inf, Mat};
use crate::qp::{self, QpError, Row};
use crate::{Error, Result};

/// Value and gradient of one function.
pub(crate) type Valued = (f64, Vec<f64>);

pub(crate) trait Nlp {
    fn dim(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn objective(&self, x: &[f64]) -> Result<Valued>;
    /// Each must vanish at a solution.
    fn equalities(&self, x: &[f64]) -> Result<Vec<Valued>>;
    /// Each must be non-negative at a solution.
    fn inequalities(&self, x: &[f64]) -> Result<Vec<Valued>>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub eq_tol: f64,
    pub ineq_tol: f64,
    pub step_tol: f64,
    pub max_evaluations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Point {
    x: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    eq: Vec<Valued>,
    ineq: Vec<Valued>,
}

impl Point {
    fn violation(&self) -> f64 {
        self.eq.iter().map(|(h, _)| libm::fabs(*h)).sum::<f64>()
            + self.ineq.iter().map(|(c, _)| libm::fmax(0.0, -c)).sum::<f64>()
    }

    fn feasible(&self, s: &Settings) -> bool {
        self.eq.iter().all(|(h, _)| libm::fabs(*h) <= s.eq_tol)
            && self.ineq.iter().all(|(c, _)| *c >= -s.ineq_tol)
    }

    fn sq_violation(&self) -> f64 {
        self.eq.iter().map(|(h, _)| h * h).sum::<f64>()
            + self
                .ineq
                .iter()
                .map(|(c, _)| {
                    let m = libm::fmin(0.0, *c);
                    m * m
                })
                .sum::<f64>()
    }

    /// ∇f − Σ λ ∇c over the nonlinear constraints.
    fn lagrangian_grad(&self, eq_mult: &[f64], ineq_mult: &[f64]) -> Vec<f64> {
        let mut g = self.grad.clone();
        for ((_, gc), l) in self.eq.iter().zip(eq_mult).chain(self.ineq.iter().zip(ineq_mult)) {
            for (gi, ci) in g.iter_mut().zip(gc) {
                *gi -= l * ci;
            }
        }
        g
    }
}

struct Driver<'p, P: Nlp> {
    problem: &'p P,
    settings: Settings,
    evaluations: usize,
}

impl<P: Nlp> Driver<'_, P> {
    fn clamp(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(self.problem.lower()).zip(self.problem.upper()) {
            *xi = xi.max(*lo).min(*hi);
        }
    }

    fn eval(&mut self, x: Vec<f64>) -> Result<Point> {
        self.evaluations += 1;
        let (f, grad) = self.problem.objective(&x)?;
        let eq = self.problem.equalities(&x)?;
        let ineq = self.problem.inequalities(&x)?;
        if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Infeasible("objective is not finite".into()));
        }
        Ok(Point {
            x,
            f,
            grad,
            eq,
            ineq,
        })
    }

    fn out_of_budget(&self) -> bool {
        self.evaluations >= self.settings.max_evaluations
    }

    fn bound_rows(&self, x: &[f64]) -> Vec<Row> {
        let n = x.len();
        let mut rows = Vec::new();
        for i in 0..n {
            let lo = self.problem.lower()[i];
            let hi = self.problem.upper()[i];
            if lo.is_finite() {
                let mut normal = vec![0.0; n];
                normal[i] = 1.0;
                rows.push(Row {
                    normal,
                    rhs: lo - x[i],
                });
            }
            if hi.is_finite() {
                let mut normal = vec![0.0; n];
                normal[i] = -1.0;
                rows.push(Row {
                    normal,
                    rhs: x[i] - hi,
                });
            }
        }
        rows
    }

    /// Variables not held at a bound.
    fn free(&self, x: &[f64]) -> Vec<bool> {
        x.iter()
            .zip(self.problem.lower())
            .zip(self.problem.upper())
            .map(|((xi, lo), hi)| {
                let tol = 1e-12 * (1.0 + libm::fabs(*xi));
                *xi > lo + tol && *xi < hi - tol
            })
            .collect()
    }

    /// One Gauss–Newton step on the squared constraint violation, subject to
    /// the bounds. Used when the linearized constraints are inconsistent.
    fn restore(&mut self, pt: &Point) -> Result<Option<Point>> {
        let n = pt.x.len();
        let mut g = Mat::identity(n);
        for v in g.data.iter_mut() {
            *v *= 1e-10;
        }
        let mut a = vec![0.0; n];
        let residuals = pt
            .eq
            .iter()
            .cloned()
            .chain(pt.ineq.iter().filter(|(c, _)| *c < 0.0).cloned());
        for (r, j) in residuals {
            for i in 0..n {
                a[i] += r * j[i];
                for k in 0..n {
                    g[(i, k)] += j[i] * j[k];
                }
            }
        }
        let bounds = self.bound_rows(&pt.x);
        let d = match qp::solve(&g, &a, &[], &bounds) {
            Ok(sol) => sol.x,
            Err(_) => return Ok(None),
        };
        let theta0 = pt.sq_violation();
        let mut alpha = 1.0;
        while alpha > 1e-10 && !self.out_of_budget() {
            let mut x: Vec<f64> = pt.x.iter().zip(&d).map(|(x, d)| x + alpha * d).collect();
            self.clamp(&mut x);
            if let Ok(trial) = self.eval(x) {
                if trial.sq_violation() < theta0 * (1.0 - 1e-4 * alpha) {
                    return Ok(Some(trial));
                }
            }
            alpha *= 0.5;
        }
        Ok(None)
    }

    /// Minimum-norm Newton projection onto the equalities over the free
    /// variables.
    fn polish(&mut self, mut pt: Point) -> Point {
        for _ in 0..20 {
            if pt.eq.is_empty() || pt.eq.iter().all(|(h, _)| libm::fabs(*h) <= 1e-3 * self.settings.eq_tol) {
                break;
            }
            let free = self.free(&pt.x);
            let m = pt.eq.len();
            let jac: Vec<Vec<f64>> = pt
                .eq
                .iter()
                .map(|(_, g)| g.iter().zip(&free).map(|(v, f)| if *f { *v } else { 0.0 }).collect())
                .collect();
            let mut jjt = Mat::zeros(m, m);
            for i in 0..m {
                for k in 0..m {
                    jjt[(i, k)] = dot(&jac[i], &jac[k]);
                }
            }
            let Some(l) = cholesky(&jjt) else { break };
            let h: Vec<f64> = pt.eq.iter().map(|(h, _)| *h).collect();
            let w = cholesky_solve(&l, &h);
            let mut x = pt.x.clone();
            for (i, wi) in w.iter().enumerate() {
                for (xk, jk) in x.iter_mut().zip(&jac[i]) {
                    *xk -= wi * jk;
                }
            }
            self.clamp(&mut x);
            match self.eval(x) {
                Ok(next) if next.violation() < pt.violation() => pt = next,
                _ => break,
            }
        }
        pt
    }
}

fn bfgs_update(b: &mut Mat, s: &[f64], y: &[f64]) {
    let n = s.len();
    let bs = b.mul_vec(s);
    let sbs = dot(s, &bs);
    if !(sbs > 1e-300) {
        return;
    }
    let sy = dot(s, y);
    // Powell damping keeps B positive definite.
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let r: Vec<f64> = y.iter().zip(&bs).map(|(y, bs)| theta * y + (1.0 - theta) * bs).collect();
    let sr = dot(s, &r);
    if !(sr > 1e-300) {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
        }
    }
}

pub(crate) fn minimize<P: Nlp>(problem: &P, x0: &[f64], settings: Settings) -> Result<Outcome> {
    let n = problem.dim();
    let mut driver = Driver {
        problem,
        settings,
        evaluations: 0,
    };
    let mut x = x0.to_vec();
    driver.clamp(&mut x);
    let mut pt = driver.eval(x)?;
    let mut hess = Mat::identity(n);
    let mut fresh_hessian = true;
    let mut penalty = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut failed_restorations = 0;

    while !driver.out_of_budget() {
        iterations += 1;
        let eq_rows: Vec<Row> = pt
            .eq
            .iter()
            .map(|(h, g)| Row {
                normal: g.clone(),
                rhs: -h,
            })
            .collect();
        let mut ineq_rows: Vec<Row> = pt
            .ineq
            .iter()
            .map(|(c, g)| Row {
                normal: g.clone(),
                rhs: -c,
            })
            .collect();
        let n_general = ineq_rows.len();
        ineq_rows.extend(driver.bound_rows(&pt.x));

        let sol = match qp::solve(&hess, &pt.grad, &eq_rows, &ineq_rows) {
            Ok(sol) => sol,
            Err(QpError::NotPositiveDefinite) | Err(QpError::IterationLimit) if !fresh_hessian => {
                hess = Mat::identity(n);
                fresh_hessian = true;
                continue;
            }
            Err(QpError::Infeasible) => {
                match driver.restore(&pt)? {
                    Some(next) => {
                        pt = next;
                        failed_restorations = 0;
                        continue;
                    }
                    None => {
                        failed_restorations += 1;
                        if failed_restorations > 1 || pt.feasible(&settings) {
                            return Err(Error::Infeasible(
                                "constraints cannot be satisfied within the bounds".into(),
                            ));
                        }
                        continue;
                    }
                }
            }
            Err(_) => break,
        };
        let d = sol.x;
        let eq_mult = sol.eq_mult;
        let ineq_mult = &sol.ineq_mult[..n_general];

        if norm_inf(&d) <= settings.step_tol * (1.0 + norm_inf(&pt.x)) && pt.feasible(&settings) {
            converged = true;
            break;
        }

        let lam_max = eq_mult
            .iter()
            .chain(ineq_mult)
            .fold(0.0f64, |m, l| m.max(libm::fabs(*l)));
        if penalty < 1.1 * lam_max {
            penalty = 1.5 * lam_max;
        }
        let viol0 = pt.violation();
        let merit0 = pt.f + penalty * viol0;
        let slope = dot(&pt.grad, &d) - penalty * viol0;

        let mut accepted: Option<Point> = None;
        let mut alpha = 1.0;
        while alpha > 1e-12 && !driver.out_of_budget() {
            let mut x: Vec<f64> = pt.x.iter().zip(&d).map(|(x, d)| x + alpha * d).collect();
            driver.clamp(&mut x);
            if let Ok(trial) = driver.eval(x) {
                let merit = trial.f + penalty * trial.violation();
                if merit <= merit0 + 1e-4 * alpha * slope.min(0.0) {
                    accepted = Some(trial);
                    break;
                }
                if alpha == 1.0 && !trial.eq.is_empty() {
                    // second-order correction against the Maratos effect
                    let corrected = driver.polish(trial);
                    let merit = corrected.f + penalty * corrected.violation();
                    if merit <= merit0 + 1e-4 * slope.min(0.0) {
                        accepted = Some(corrected);
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }

        let Some(next) = accepted else {
            if fresh_hessian {
                break;
            }
            hess = Mat::identity(n);
            fresh_hessian = true;
            continue;
        };

        let s: Vec<f64> = next.x.iter().zip(&pt.x).map(|(a, b)| a - b).collect();
        let g_new = next.lagrangian_grad(&eq_mult, ineq_mult);
        let g_old = pt.lagrangian_grad(&eq_mult, ineq_mult);
        let y: Vec<f64> = g_new.iter().zip(&g_old).map(|(a, b)| a - b).collect();
        bfgs_update(&mut hess, &s, &y);
        fresh_hessian = false;
        pt = next;

        if norm_inf(&s) <= 1e-3 * settings.step_tol * (1.0 + norm_inf(&pt.x)) && pt.feasible(&settings) {
            converged = true;
            break;
        }
    }

    let pt = driver.polish(pt);
    let converged = converged && pt.feasible(&settings);
    Ok(Outcome {
        x: pt.x,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hock–Schittkowski problem 71.
    struct Hs071 {
        lower: [f64; 4],
        upper: [f64; 4],
    }

    impl Nlp for Hs071 {
        fn dim(&self) -> usize {
            4
        }
        fn lower(&self) -> &[f64] {
            &self.lower
        }
        fn upper(&self) -> &[f64] {
            &self.upper
        }
        fn objective(&self, x: &[f64]) -> Result<Valued> {
            let f = x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2];
            let g = vec![
                x[3] * (2.0 * x[0] + x[1] + x[2]),
                x[0] * x[3],
                x[0] * x[3] + 1.0,
                x[0] * (x[0] + x[1] + x[2]),
            ];
            Ok((f, g))
        }
        fn equalities(&self, x: &[f64]) -> Result<Vec<Valued>> {
            let h = x.iter().map(|v| v * v).sum::<f64>() - 40.0;
            Ok(vec![(h, x.iter().map(|v| 2.0 * v).collect())])
        }
        fn inequalities(&self, x: &[f64]) -> Result<Vec<Valued>> {
            let c = x[0] * x[1] * x[2] * x[3] - 25.0;
            Ok(vec![(
                c,
                vec![x[1] * x[2] * x[3], x[0] * x[2] * x[3], x[0] * x[1] * x[3], x[0] * x[1] * x[2]],
            )])
        }
    }

    #[test]
    fn solves_hs071() {
        let p = Hs071 {
            lower: [1.0; 4],
            upper: [5.0; 4],
        };
        let settings = Settings {
            eq_tol: 1e-10,
            ineq_tol: 1e-10,
            step_tol: 1e-9,
            max_evaluations: 10_000,
        };
        let out = minimize(&p, &[1.0, 5.0, 5.0, 1.0], settings).unwrap();
        assert!(out.converged, "{out:?}");
        let expected = [1.0, 4.742_999_64, 3.821_149_98, 1.379_408_29];
        for (x, e) in out.x.iter().zip(expected) {
            assert!((x - e).abs() < 1e-6, "{:?}", out.x);
        }
        let f = p.objective(&out.x).unwrap().0;
        assert!((f - 17.014_017_14).abs() < 1e-6);
    }
}
