//! First-order variance transmission with correlation terms.
//!
//! For a transfer function `f` with gradient `g` at the nominals, standard
//! deviations `σ` and pairwise correlations `ρ`:
//!
//! ```text
//! var(f) ≈ Σᵢ gᵢ² σᵢ²  +  Σ_{i<j} 2 gᵢ gⱼ σᵢ σⱼ ρᵢⱼ
//! ```
//!
//! The first sum is exact for affine `f`; otherwise it is adequate while each
//! variable's standard deviation stays small relative to its nominal, which
//! is what the validity warnings flag.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::expr::{validate_name, Expr};
use crate::gradient::partials_at;
use crate::linalg::{psd_factor, Mat};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Coefficient of variation above which the linearization is flagged.
pub const DEFAULT_COV_LIMIT: f64 = 0.20;

/// Pivot tolerance used when checking correlation matrices.
pub(crate) const PSD_TOL: f64 = 1e-12;

/// How a variable's standard deviation depends on its nominal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkModel {
    /// σ does not move with the nominal (`p = 0`).
    FixedSigma { sigma: f64 },
    /// σ = c·μ^p. `p = 1` is a constant coefficient of variation `c`.
    Power { c: f64, p: f64 },
}

impl LinkModel {
    pub fn fixed_sigma(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and non-negative, got {sigma}"
            )));
        }
        Ok(LinkModel::FixedSigma { sigma })
    }

    pub fn fixed_variance(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance must be non-negative, got {variance}"
            )));
        }
        Self::fixed_sigma(libm::sqrt(variance))
    }

    pub fn power(c: f64, p: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "power link needs finite c >= 0 and finite p, got c={c}, p={p}"
            )));
        }
        Ok(LinkModel::Power { c, p })
    }

    /// Constant coefficient of variation: σ = cov·μ.
    pub fn constant_cov(cov: f64) -> Result<Self> {
        Self::power(cov, 1.0)
    }

    /// Standard deviation at nominal `mu`, or `None` when the power link is
    /// undefined there (non-positive nominal with `p ≠ 0`).
    pub fn sigma_at<S: Scalar>(&self, mu: S) -> Option<S> {
        match *self {
            LinkModel::FixedSigma { sigma } => Some(S::constant(sigma)),
            LinkModel::Power { c, p } => {
                if p == 0.0 {
                    Some(S::constant(c))
                } else if mu.value() > 0.0 {
                    Some(S::constant(c) * mu.powf(p))
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignVariable {
    pub name: String,
    pub nominal: f64,
    pub link: LinkModel,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl DesignVariable {
    pub fn new(name: impl Into<String>, nominal: f64, link: LinkModel) -> Self {
        Self {
            name: name.into(),
            nominal,
            link,
            lower: None,
            upper: None,
        }
    }

    pub fn with_bounds(mut self, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    /// Name, finiteness and bound ordering, including `lower ≤ nominal ≤ upper`.
    pub fn validate(&self) -> Result<()> {
        validate_name(&self.name)?;
        let bad = |reason: String| Error::InvalidVariable {
            variable: self.name.clone(),
            reason,
        };
        if !self.nominal.is_finite() {
            return Err(bad("nominal must be finite".into()));
        }
        if let (Some(lo), Some(hi)) = (self.lower, self.upper) {
            if lo > hi {
                return Err(bad(format!("lower bound {lo} exceeds upper bound {hi}")));
            }
        }
        if let Some(lo) = self.lower {
            if self.nominal < lo {
                return Err(bad(format!("nominal {} below lower bound {lo}", self.nominal)));
            }
        }
        if let Some(hi) = self.upper {
            if self.nominal > hi {
                return Err(bad(format!("nominal {} above upper bound {hi}", self.nominal)));
            }
        }
        sigma_of(self)?;
        Ok(())
    }
}

/// Standard deviation of `v` at its nominal under its link model.
pub fn sigma_of(v: &DesignVariable) -> Result<f64> {
    v.link
        .sigma_at(v.nominal)
        .ok_or_else(|| Error::InvalidVariable {
            variable: v.name.clone(),
            reason: format!(
                "power link needs a positive nominal, got {}",
                v.nominal
            ),
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

/// Pairwise correlations between design variables. Pairs are unordered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrelationSet {
    entries: Vec<Correlation>,
}

impl CorrelationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: Into<String>,
    {
        let mut set = Self::new();
        for (a, b, rho) in entries {
            set.insert(a, b, rho)?;
        }
        Ok(set)
    }

    /// Adds a pair; an existing entry for the same unordered pair is an error.
    pub fn insert(&mut self, a: impl Into<String>, b: impl Into<String>, rho: f64) -> Result<()> {
        let (a, b) = (a.into(), b.into());
        let err = |reason| Error::InvalidCorrelation {
            a: a.clone(),
            b: b.clone(),
            reason,
        };
        if a == b {
            return Err(err("a variable cannot be correlated with itself"));
        }
        if !(libm::fabs(rho) <= 1.0) {
            return Err(err("rho must lie in [-1, 1]"));
        }
        if self.position(&a, &b).is_some() {
            return Err(err("duplicate pair"));
        }
        self.entries.push(Correlation { a, b, rho });
        Ok(())
    }

    /// Sets rho for a pair, adding it if absent.
    pub fn set(&mut self, a: &str, b: &str, rho: f64) -> Result<()> {
        match self.position(a, b) {
            Some(i) => {
                if !(libm::fabs(rho) <= 1.0) {
                    return Err(Error::InvalidCorrelation {
                        a: a.to_string(),
                        b: b.to_string(),
                        reason: "rho must lie in [-1, 1]",
                    });
                }
                self.entries[i].rho = rho;
                Ok(())
            }
            None => self.insert(a, b, rho),
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.position(a, b).map(|i| self.entries[i].rho)
    }

    pub fn entries(&self) -> &[Correlation] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn position(&self, a: &str, b: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|c| (c.a == a && c.b == b) || (c.a == b && c.b == a))
    }

    /// Resolves names to indices into `names` and checks that the implied
    /// correlation matrix is positive semi-definite.
    pub(crate) fn resolve(&self, names: &[&str]) -> Result<Vec<(usize, usize, f64)>> {
        let index = |n: &str| {
            names
                .iter()
                .position(|m| *m == n)
                .ok_or_else(|| Error::UnknownVariable(n.to_string()))
        };
        let mut pairs = Vec::with_capacity(self.entries.len());
        for c in &self.entries {
            pairs.push((index(&c.a)?, index(&c.b)?, c.rho));
        }
        if !pairs.is_empty() {
            correlation_factor(names.len(), &pairs)?;
        }
        Ok(pairs)
    }
}

/// Lower-triangular factor of the correlation matrix.
pub(crate) fn correlation_factor(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Mat> {
    let mut m = Mat::identity(n);
    for &(i, j, rho) in pairs {
        m[(i, j)] = rho;
        m[(j, i)] = rho;
    }
    psd_factor(&m, PSD_TOL).ok_or(Error::NotPositiveSemidefinite)
}

/// Whether covariance terms keep their sign or enter as magnitudes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SignConvention {
    /// `2 gᵢ gⱼ σᵢ σⱼ ρ` as is: the multivariate delta method.
    #[default]
    Signed,
    /// `|2 gᵢ gⱼ σᵢ σⱼ ρ|`, so correlation can only add variance.
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitOptions {
    pub cov_limit: f64,
    pub sign: SignConvention,
}

impl Default for TransmitOptions {
    fn default() -> Self {
        Self {
            cov_limit: DEFAULT_COV_LIMIT,
            sign: SignConvention::Signed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairContribution {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    /// `gᵢ² σᵢ²` in declaration order.
    pub per_variable: Vec<(String, f64)>,
    /// Covariance terms in correlation-set order.
    pub per_pair: Vec<PairContribution>,
    /// Sum of the above, variables first.
    pub total: f64,
    /// Variables whose σ/|μ| exceeds the coefficient-of-variation limit.
    pub validity_warnings: Vec<String>,
}

impl VarianceDecomposition {
    pub fn variable(&self, name: &str) -> Option<f64> {
        self.per_variable
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// Symmetric in `a` and `b`.
    pub fn pair(&self, a: &str, b: &str) -> Option<f64> {
        self.per_pair
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.value)
    }

    pub fn covariance_total(&self) -> f64 {
        self.per_pair.iter().map(|p| p.value).sum()
    }
}

pub(crate) struct Contributions<S> {
    pub per_variable: Vec<S>,
    pub per_pair: Vec<S>,
    pub total: S,
}

pub(crate) fn contributions<S: Scalar>(
    grad: &[S],
    sigma: &[S],
    pairs: &[(usize, usize, f64)],
    sign: SignConvention,
) -> Contributions<S> {
    let per_variable: Vec<S> = grad
        .iter()
        .zip(sigma)
        .map(|(&g, &s)| {
            let gs = g * s;
            gs * gs
        })
        .collect();
    let per_pair: Vec<S> = pairs
        .iter()
        .map(|&(a, b, rho)| {
            // canonical index order
            let (i, j) = (a.min(b), a.max(b));
            let term = S::constant(2.0 * rho) * grad[i] * grad[j] * sigma[i] * sigma[j];
            match sign {
                SignConvention::Signed => term,
                SignConvention::Magnitude => term.abs(),
            }
        })
        .collect();
    let mut total = S::constant(0.0);
    for &c in per_variable.iter().chain(&per_pair) {
        total = total + c;
    }
    Contributions {
        per_variable,
        per_pair,
        total,
    }
}

/// Gradient of `e` in design-variable order; variables `e` does not use get
/// zero. `slot_map[k]` is the design-variable index of expression slot `k`.
pub(crate) fn design_gradient<S: Scalar>(
    e: &Expr,
    slot_map: &[usize],
    nominals: &[S],
) -> Result<Vec<S>> {
    let slots: Vec<S> = slot_map.iter().map(|&i| nominals[i]).collect();
    let g = partials_at(e, &slots)?;
    let mut out: Vec<S> = nominals.iter().map(|_| S::constant(0.0)).collect();
    for (k, &i) in slot_map.iter().enumerate() {
        out[i] = g[k];
    }
    Ok(out)
}

/// Maps each variable of `e` to its index in `names`.
pub(crate) fn slot_map(e: &Expr, names: &[&str]) -> Result<Vec<usize>> {
    e.variables()
        .iter()
        .map(|v| {
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| Error::UnknownVariable(v.clone()))
        })
        .collect()
}

pub(crate) fn unique_names(vars: &[DesignVariable]) -> Result<Vec<&str>> {
    let mut seen = BTreeSet::new();
    for v in vars {
        if !seen.insert(v.name.as_str()) {
            return Err(Error::DuplicateVariable(v.name.clone()));
        }
    }
    Ok(vars.iter().map(|v| v.name.as_str()).collect())
}

/// Propagates the variables' variances and correlations through `e` at the
/// variables' nominals.
pub fn transmit(
    e: &Expr,
    vars: &[DesignVariable],
    corr: &CorrelationSet,
    opts: TransmitOptions,
) -> Result<VarianceDecomposition> {
    let names = unique_names(vars)?;
    let map = slot_map(e, &names)?;
    let pairs = corr.resolve(&names)?;
    let nominals: Vec<f64> = vars.iter().map(|v| v.nominal).collect();
    let sigma = vars.iter().map(sigma_of).collect::<Result<Vec<_>>>()?;
    let grad = design_gradient(e, &map, &nominals)?;
    let c = contributions(&grad, &sigma, &pairs, opts.sign);

    let validity_warnings = vars
        .iter()
        .zip(&sigma)
        .filter(|(v, &s)| {
            let mu = libm::fabs(v.nominal);
            s > 0.0 && (mu == 0.0 || s / mu > opts.cov_limit)
        })
        .map(|(v, _)| v.name.clone())
        .collect();

    Ok(VarianceDecomposition {
        per_variable: names
            .iter()
            .map(|n| n.to_string())
            .zip(c.per_variable)
            .collect(),
        per_pair: corr
            .entries()
            .iter()
            .zip(c.per_pair)
            .map(|(p, value)| PairContribution {
                a: p.a.clone(),
                b: p.b.clone(),
                value,
            })
            .collect(),
        total: c.total,
        validity_warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Variable(String),
    Pair(String, String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Variable(n) => f.write_str(n),
            Source::Pair(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedContribution {
    pub source: Source,
    pub contribution: f64,
    /// Fraction of the total; negative for variance-reducing covariance terms.
    pub share: f64,
}

/// Sources ordered by |contribution|, largest first; ties broken by name.
pub fn rank_contributions(d: &VarianceDecomposition) -> Result<Vec<RankedContribution>> {
    if !(d.total > 0.0) {
        return Err(Error::ZeroTotal);
    }
    let mut ranked: Vec<RankedContribution> = d
        .per_variable
        .iter()
        .map(|(n, c)| (Source::Variable(n.clone()), *c))
        .chain(
            d.per_pair
                .iter()
                .map(|p| (Source::Pair(p.a.clone(), p.b.clone()), p.value)),
        )
        .map(|(source, contribution)| RankedContribution {
            source,
            contribution,
            share: contribution / d.total,
        })
        .collect();
    ranked.sort_by(|x, y| {
        libm::fabs(y.contribution)
            .partial_cmp(&libm::fabs(x.contribution))
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.source.to_string().cmp(&y.source.to_string()))
    });
    Ok(ranked)
}
