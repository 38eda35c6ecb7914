//! Parameter design: choose nominals that hold the response on target while
//! minimizing the variance transmitted to it.
//!
//! Each variable's standard deviation is re-evaluated from its link model at
//! every trial nominal, so power-link variances move with the design and
//! fixed-sigma variances do not. The objective gradient is exact: the
//! transmitted variance is evaluated over dual numbers, which nests one level
//! above the duals used for the transfer-function partials.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::Cell;

use crate::expr::Expr;
use crate::scalar::{Dual, Scalar};
use crate::sqp::{self, Nlp, Valued};
use crate::variance::{
    contributions, design_gradient, slot_map, transmit, unique_names, CorrelationSet,
    DesignVariable, SignConvention, TransmitOptions, VarianceDecomposition, DEFAULT_COV_LIMIT,
};
use crate::{Assignment, Error, Result};

/// A parameter-design problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub transfer: Expr,
    /// Required response value.
    pub target: f64,
    pub variables: Vec<DesignVariable>,
    pub correlations: CorrelationSet,
    /// Expressions required to be `≥ 0` at a solution.
    pub constraints: Vec<Expr>,
    pub cov_limit: f64,
    pub sign_convention: SignConvention,
}

impl Study {
    pub fn new(transfer: Expr, target: f64, variables: Vec<DesignVariable>) -> Result<Self> {
        let study = Self {
            transfer,
            target,
            variables,
            correlations: CorrelationSet::new(),
            constraints: Vec::new(),
            cov_limit: DEFAULT_COV_LIMIT,
            sign_convention: SignConvention::Signed,
        };
        study.validate()?;
        Ok(study)
    }

    pub fn with_correlations(mut self, correlations: CorrelationSet) -> Result<Self> {
        self.correlations = correlations;
        self.validate()?;
        Ok(self)
    }

    pub fn with_constraints(mut self, constraints: Vec<Expr>) -> Result<Self> {
        self.constraints = constraints;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.target.is_finite() {
            return Err(Error::InvalidArgument("target must be finite".into()));
        }
        if !(self.cov_limit > 0.0) {
            return Err(Error::InvalidArgument("cov_limit must be positive".into()));
        }
        let names = unique_names(&self.variables)?;
        for v in &self.variables {
            v.validate()?;
        }
        slot_map(&self.transfer, &names)?;
        for c in &self.constraints {
            slot_map(c, &names)?;
        }
        self.correlations.resolve(&names)?;
        Ok(())
    }

    pub fn nominals(&self) -> Assignment {
        self.variables.iter().map(|v| (v.name.as_str(), v.nominal)).collect()
    }

    pub fn transmit_options(&self) -> TransmitOptions {
        TransmitOptions {
            cov_limit: self.cov_limit,
            sign: self.sign_convention,
        }
    }

    /// The variables moved to the nominals in `point`; names missing from
    /// `point` are an error.
    pub fn variables_at(&self, point: &Assignment) -> Result<Vec<DesignVariable>> {
        self.variables
            .iter()
            .map(|v| {
                let nominal = point
                    .get(&v.name)
                    .ok_or_else(|| Error::MissingBinding(v.name.clone()))?;
                Ok(DesignVariable { nominal, ..v.clone() })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Response residual allowed, relative to `max(1, |target|)`.
    pub eq_tol: f64,
    /// Absolute slack allowed on bounds and inequality constraints.
    pub con_tol: f64,
    /// Stationarity: step length relative to `1 + |x|∞`.
    pub step_tol: f64,
    /// Cap on objective evaluations.
    pub max_evaluations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eq_tol: 1e-8,
            con_tol: 1e-10,
            step_tol: 1e-8,
            max_evaluations: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feasibility {
    /// `f(x) − target`.
    pub equality_residual: f64,
    /// (bound label, amount by which it is exceeded).
    pub bound_violations: Vec<(String, f64)>,
    /// (constraint, value) for constraints below zero.
    pub inequality_violations: Vec<(String, f64)>,
    /// Bounds and inequalities holding with equality.
    pub active: Vec<String>,
}

impl Feasibility {
    pub fn is_feasible(&self, target: f64, tols: &Tolerances) -> bool {
        libm::fabs(self.equality_residual) <= tols.eq_tol * libm::fmax(1.0, libm::fabs(target))
            && self.bound_violations.iter().all(|(_, v)| *v <= tols.con_tol)
            && self.inequality_violations.iter().all(|(_, v)| *v >= -tols.con_tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSolution {
    pub nominals: Assignment,
    pub transmitted_variance: f64,
    pub achieved_response: f64,
    pub decomposition: VarianceDecomposition,
    pub feasibility: Feasibility,
    pub iterations: usize,
    pub converged: bool,
}

const ACTIVE_TOL: f64 = 1e-8;

fn feasibility(study: &Study, point: &Assignment, response: f64) -> Result<Feasibility> {
    let mut report = Feasibility {
        equality_residual: response - study.target,
        ..Default::default()
    };
    for v in &study.variables {
        let x = point
            .get(&v.name)
            .ok_or_else(|| Error::MissingBinding(v.name.clone()))?;
        if let Some(lo) = v.lower {
            let label = format!("{} >= {lo}", v.name);
            if x < lo {
                report.bound_violations.push((label.clone(), lo - x));
            }
            if libm::fabs(x - lo) <= ACTIVE_TOL * libm::fmax(1.0, libm::fabs(lo)) {
                report.active.push(label);
            }
        }
        if let Some(hi) = v.upper {
            let label = format!("{} <= {hi}", v.name);
            if x > hi {
                report.bound_violations.push((label.clone(), x - hi));
            }
            if libm::fabs(x - hi) <= ACTIVE_TOL * libm::fmax(1.0, libm::fabs(hi)) {
                report.active.push(label);
            }
        }
    }
    for c in &study.constraints {
        let value = c.evaluate(point)?;
        let label = format!("{c} >= 0");
        if value < 0.0 {
            report.inequality_violations.push((label.clone(), value));
        }
        if libm::fabs(value) <= ACTIVE_TOL {
            report.active.push(label);
        }
    }
    Ok(report)
}

/// Reports response, transmitted variance and feasibility at `point`
/// without optimizing. Candidate evaluations never claim convergence.
pub fn evaluate_candidate(study: &Study, point: &Assignment) -> Result<DesignSolution> {
    let vars = study.variables_at(point)?;
    let decomposition = transmit(
        &study.transfer,
        &vars,
        &study.correlations,
        study.transmit_options(),
    )?;
    let achieved_response = study.transfer.evaluate(point)?;
    let nominals: Assignment = vars.iter().map(|v| (v.name.as_str(), v.nominal)).collect();
    Ok(DesignSolution {
        feasibility: feasibility(study, &nominals, achieved_response)?,
        nominals,
        transmitted_variance: decomposition.total,
        achieved_response,
        decomposition,
        iterations: 0,
        converged: false,
    })
}

struct Problem<'s> {
    study: &'s Study,
    transfer_map: Vec<usize>,
    constraint_maps: Vec<Vec<usize>>,
    pairs: Vec<(usize, usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    response_scale: f64,
    objective_scale: Cell<f64>,
}

impl<'s> Problem<'s> {
    fn new(study: &'s Study) -> Result<Self> {
        study.validate()?;
        let names = unique_names(&study.variables)?;
        Ok(Self {
            transfer_map: slot_map(&study.transfer, &names)?,
            constraint_maps: study
                .constraints
                .iter()
                .map(|c| slot_map(c, &names))
                .collect::<Result<_>>()?,
            pairs: study.correlations.resolve(&names)?,
            lower: study
                .variables
                .iter()
                .map(|v| v.lower.unwrap_or(f64::NEG_INFINITY))
                .collect(),
            upper: study
                .variables
                .iter()
                .map(|v| v.upper.unwrap_or(f64::INFINITY))
                .collect(),
            response_scale: libm::fmax(1.0, libm::fabs(study.target)),
            objective_scale: Cell::new(1.0),
            study,
        })
    }

    fn transmitted<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let sigma = self
            .study
            .variables
            .iter()
            .zip(x)
            .map(|(v, &mu)| {
                v.link.sigma_at(mu).ok_or_else(|| Error::InvalidVariable {
                    variable: v.name.clone(),
                    reason: format!("power link needs a positive nominal, got {}", mu.value()),
                })
            })
            .collect::<Result<Vec<S>>>()?;
        let grad = design_gradient(&self.study.transfer, &self.transfer_map, x)?;
        Ok(contributions(&grad, &sigma, &self.pairs, self.study.sign_convention).total)
    }

    fn value_and_gradient(e: &Expr, map: &[usize], x: &[f64]) -> Result<Valued> {
        let value = e.eval_slots(&map.iter().map(|&i| x[i]).collect::<Vec<_>>())?;
        let grad = design_gradient(e, map, x)?;
        Ok((value, grad))
    }

    fn point(&self, x: &[f64]) -> Assignment {
        self.study
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.name.as_str(), xi))
            .collect()
    }
}

impl Nlp for Problem<'_> {
    fn dim(&self) -> usize {
        self.study.variables.len()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, x: &[f64]) -> Result<Valued> {
        let scale = self.objective_scale.get();
        let value = self.transmitted(x)? * scale;
        let mut seeded: Vec<Dual<f64>> = x.iter().map(|&v| Dual::new(v, 0.0)).collect();
        let mut grad = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            seeded[k].du = 1.0;
            grad.push(self.transmitted(&seeded)?.du * scale);
            seeded[k].du = 0.0;
        }
        Ok((value, grad))
    }

    fn equalities(&self, x: &[f64]) -> Result<Vec<Valued>> {
        let (f, mut g) = Self::value_and_gradient(&self.study.transfer, &self.transfer_map, x)?;
        g.iter_mut().for_each(|v| *v /= self.response_scale);
        Ok(alloc::vec![((f - self.study.target) / self.response_scale, g)])
    }

    fn inequalities(&self, x: &[f64]) -> Result<Vec<Valued>> {
        self.study
            .constraints
            .iter()
            .zip(&self.constraint_maps)
            .map(|(c, map)| Self::value_and_gradient(c, map, x))
            .collect()
    }
}

/// Minimizes transmitted variance subject to `f = target`, the variables'
/// bounds and the study's inequality constraints, starting from `init`.
///
/// A run that stops short of the tolerances returns the best point found
/// with `converged = false`. When `init` is feasible the result never has a
/// larger transmitted variance than `init`.
pub fn optimize(study: &Study, init: &Assignment, tols: &Tolerances) -> Result<DesignSolution> {
    if !(tols.eq_tol > 0.0 && tols.con_tol > 0.0 && tols.step_tol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let problem = Problem::new(study)?;
    let x0: Vec<f64> = study
        .variables
        .iter()
        .map(|v| init.get(&v.name).ok_or_else(|| Error::MissingBinding(v.name.clone())))
        .collect::<Result<_>>()?;

    let start = evaluate_candidate(study, &problem.point(&x0)).ok();
    let start_feasible = start
        .as_ref()
        .filter(|s| s.feasibility.is_feasible(study.target, tols));
    if let Some(s) = &start {
        if s.transmitted_variance > 0.0 {
            problem.objective_scale.set(1.0 / s.transmitted_variance);
        }
    }

    let settings = sqp::Settings {
        eq_tol: tols.eq_tol,
        ineq_tol: tols.con_tol,
        step_tol: tols.step_tol,
        max_evaluations: tols.max_evaluations,
    };
    let outcome = sqp::minimize(&problem, &x0, settings)?;
    let mut solution = evaluate_candidate(study, &problem.point(&outcome.x))?;
    solution.iterations = outcome.iterations;
    solution.converged =
        outcome.converged && solution.feasibility.is_feasible(study.target, tols);

    if let Some(start) = start_feasible {
        let worse = solution.transmitted_variance > start.transmitted_variance;
        if worse || !solution.feasibility.is_feasible(study.target, tols) {
            let mut fallback = start.clone();
            fallback.iterations = outcome.iterations;
            return Ok(fallback);
        }
    }
    Ok(solution)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub nominals: Assignment,
    pub transmitted_variance: f64,
    /// Covariance term of the swept pair at the optimum.
    pub covariance_contribution: f64,
    pub converged: bool,
}

/// Re-optimizes `study` for each correlation value of `pair`, starting each
/// run from the study nominals.
pub fn sweep_correlation(
    study: &Study,
    pair: (&str, &str),
    rhos: &[f64],
    sign: SignConvention,
) -> Result<Vec<SweepRow>> {
    let (a, b) = pair;
    for name in [a, b] {
        if !study.variables.iter().any(|v| v.name == name) {
            return Err(Error::UnknownVariable(name.to_string()));
        }
    }
    let init = study.nominals();
    let tols = Tolerances::default();
    rhos.iter()
        .map(|&rho| {
            let mut s = study.clone();
            s.correlations.set(a, b, rho)?;
            s.sign_convention = sign;
            let sol = optimize(&s, &init, &tols)?;
            Ok(SweepRow {
                rho,
                covariance_contribution: sol.decomposition.pair(a, b).unwrap_or(0.0),
                nominals: sol.nominals,
                transmitted_variance: sol.transmitted_variance,
                converged: sol.converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variance::LinkModel;
    use alloc::vec;

    fn single(target: f64) -> Study {
        let x = DesignVariable::new("x", 2.0, LinkModel::fixed_sigma(0.1).unwrap())
            .with_bounds(Some(0.0), Some(10.0));
        Study::new(Expr::parse("x").unwrap(), target, vec![x]).unwrap()
    }

    #[test]
    fn single_variable_is_pinned_by_the_target() {
        let s = single(2.5);
        let sol = optimize(&s, &s.nominals(), &Tolerances::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.nominals.get("x"), Some(2.5));
        assert!((sol.transmitted_variance - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let s = single(25.0);
        assert!(matches!(
            optimize(&s, &s.nominals(), &Tolerances::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn candidate_reports_violations() {
        let s = single(2.5).with_constraints(vec![Expr::parse("3 - x").unwrap()]).unwrap();
        let sol = evaluate_candidate(&s, &Assignment::from_pairs([("x", 11.0)])).unwrap();
        assert_eq!(sol.feasibility.equality_residual, 8.5);
        assert_eq!(sol.feasibility.bound_violations, [("x <= 10".into(), 1.0)]);
        assert_eq!(sol.feasibility.inequality_violations.len(), 1);
        assert!(!sol.converged);
    }

    #[test]
    fn study_validation() {
        let x = DesignVariable::new("x", 1.0, LinkModel::fixed_sigma(0.1).unwrap());
        assert_eq!(
            Study::new(Expr::parse("x + y").unwrap(), 1.0, vec![x.clone()]),
            Err(Error::UnknownVariable("y".into()))
        );
        let s = Study::new(Expr::parse("x").unwrap(), 1.0, vec![x]).unwrap();
        assert!(s.clone().with_constraints(vec![Expr::parse("q").unwrap()]).is_err());
        let c = CorrelationSet::from_entries([("x", "Q", 0.1)]).unwrap();
        assert_eq!(s.with_correlations(c), Err(Error::UnknownVariable("Q".into())));
    }

    #[test]
    fn rejects_nonpositive_tolerances() {
        let s = single(2.5);
        let tols = Tolerances {
            eq_tol: 0.0,
            ..Default::default()
        };
        assert!(optimize(&s, &s.nominals(), &tols).is_err());
    }
}
