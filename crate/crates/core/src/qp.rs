//! Dense strictly convex QP by the Goldfarb–Idnani dual active-set method:
//!
//! ```text
//! minimize ½ xᵀG x + aᵀx   s.t.  eqᵢ·x = bᵢ,  ineqⱼ·x ≥ bⱼ
//! ```
//!
//! The method starts at the unconstrained minimum and adds violated
//! constraints one at a time, so no feasible starting point is needed.
//! Projections are rebuilt from scratch on every step; problems here have a
//! handful of variables.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dot, spd_inverse, Mat};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Row {
    pub normal: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers with `G x + a = Σ λ·normal` over equalities and
    /// inequalities; inequality multipliers are non-negative.
    pub eq_mult: Vec<f64>,
    pub ineq_mult: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum QpError {
    NotPositiveDefinite,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Copy)]
struct Active {
    /// Index into eq rows when `eq`, otherwise into ineq rows.
    index: usize,
    eq: bool,
    /// +1 or −1; equalities are flipped so the initial slack is ≤ 0.
    sign: f64,
    u: f64,
}

struct State<'a> {
    ginv: Mat,
    eq: &'a [Row],
    ineq: &'a [Row],
    x: Vec<f64>,
    active: Vec<Active>,
}

impl State<'_> {
    fn row(&self, eq: bool, index: usize) -> &Row {
        if eq {
            &self.eq[index]
        } else {
            &self.ineq[index]
        }
    }

    fn normal(&self, c: &Active) -> Vec<f64> {
        let r = self.row(c.eq, c.index);
        r.normal.iter().map(|v| v * c.sign).collect()
    }

    fn slack(&self, eq: bool, index: usize, sign: f64) -> f64 {
        let r = self.row(eq, index);
        sign * (dot(&r.normal, &self.x) - r.rhs)
    }

    /// Primal step direction `z = H n` and dual direction `r = N* n`.
    fn directions(&self, np: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = np.len();
        let ginv_np = self.ginv.mul_vec(np);
        let q = self.active.len();
        if q == 0 {
            return Some((ginv_np, Vec::new()));
        }
        let normals: Vec<Vec<f64>> = self.active.iter().map(|c| self.normal(c)).collect();
        let w: Vec<Vec<f64>> = normals.iter().map(|nj| self.ginv.mul_vec(nj)).collect();
        let mut m = Mat::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                m[(i, j)] = dot(&normals[i], &w[j]);
            }
        }
        let minv = spd_inverse(&m)?;
        let v: Vec<f64> = w.iter().map(|wj| dot(wj, np)).collect();
        let r = minv.mul_vec(&v);
        let mut z = ginv_np;
        for (j, wj) in w.iter().enumerate() {
            for k in 0..n {
                z[k] -= wj[k] * r[j];
            }
        }
        Some((z, r))
    }

    /// Adds constraint (eq, index, sign), whose slack is currently ≤ 0.
    /// Returns false when it turned out to be redundant with the active set.
    fn add(&mut self, eq: bool, index: usize, sign: f64, budget: &mut usize) -> Result<bool, QpError> {
        let np: Vec<f64> = self.row(eq, index).normal.iter().map(|v| v * sign).collect();
        let np_scale = dot(&np, &self.ginv.mul_vec(&np));
        let mut u_p = 0.0;
        loop {
            if *budget == 0 {
                return Err(QpError::IterationLimit);
            }
            *budget -= 1;
            let s_p = self.slack(eq, index, sign);
            let (z, r) = self.directions(&np).ok_or(QpError::Infeasible)?;
            let zn = dot(&z, &np);
            let degenerate = !(zn > 1e-13 * np_scale);
            if degenerate && eq && libm::fabs(s_p) <= 1e-12 * (1.0 + libm::fabs(self.row(eq, index).rhs)) {
                return Ok(false);
            }
            let t2 = if degenerate { f64::INFINITY } else { -s_p / zn };

            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, c) in self.active.iter().enumerate() {
                if !c.eq && r[j] > 1e-14 {
                    let t = c.u / r[j];
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            if !degenerate {
                for (xk, zk) in self.x.iter_mut().zip(&z) {
                    *xk += t * zk;
                }
            }
            for (c, rj) in self.active.iter_mut().zip(&r) {
                c.u -= t * rj;
            }
            u_p += t;
            if t2 <= t1 {
                self.active.push(Active {
                    index,
                    eq,
                    sign,
                    u: u_p,
                });
                return Ok(true);
            }
            self.active.remove(drop.expect("finite t1 has a blocking constraint"));
        }
    }
}

pub(crate) fn solve(g: &Mat, a: &[f64], eq: &[Row], ineq: &[Row]) -> Result<QpSolution, QpError> {
    let n = a.len();
    let ginv = spd_inverse(g).ok_or(QpError::NotPositiveDefinite)?;
    let x: Vec<f64> = ginv.mul_vec(a).into_iter().map(|v| -v).collect();
    let mut st = State {
        ginv,
        eq,
        ineq,
        x,
        active: Vec::new(),
    };
    let mut budget = 50 * (n + eq.len() + ineq.len()) + 100;

    for i in 0..eq.len() {
        let s = st.slack(true, i, 1.0);
        let sign = if s > 0.0 { -1.0 } else { 1.0 };
        st.add(true, i, sign, &mut budget)?;
    }

    loop {
        let mut worst = None;
        let mut worst_s = 0.0;
        for (i, row) in ineq.iter().enumerate() {
            if st.active.iter().any(|c| !c.eq && c.index == i) {
                continue;
            }
            let norm = libm::sqrt(dot(&row.normal, &row.normal)).max(1e-300);
            let s = st.slack(false, i, 1.0) / norm;
            if s < -1e-12 * (1.0 + libm::fabs(row.rhs) / norm) && s < worst_s {
                worst_s = s;
                worst = Some(i);
            }
        }
        let Some(p) = worst else { break };
        st.add(false, p, 1.0, &mut budget)?;
    }

    let mut eq_mult = vec![0.0; eq.len()];
    let mut ineq_mult = vec![0.0; ineq.len()];
    for c in &st.active {
        if c.eq {
            eq_mult[c.index] = c.sign * c.u;
        } else {
            ineq_mult[c.index] = c.u;
        }
    }
    Ok(QpSolution {
        x: st.x,
        eq_mult,
        ineq_mult,
    })
}
