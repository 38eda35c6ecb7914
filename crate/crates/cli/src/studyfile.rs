//! JSON study files.
//!
//! ```json
//! {
//!   "transfer": "pi*(D^2 - B^2)*L/4",
//!   "target": 3.72,
//!   "variables": [
//!     {"name": "D", "nominal": 1.69, "link": {"kind": "power-link", "p": 1, "c": 0.0209}, "upper": 2}
//!   ],
//!   "correlations": [{"a": "D", "b": "B", "rho": 0.3}],
//!   "constraints": ["D - B"],
//!   "cov_limit": 0.2
//! }
//! ```
//!
//! Unknown keys are rejected. `correlations`, `constraints`, `cov_limit`,
//! `sign_convention` and `dimensions` are optional.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use varsynth::{
    CorrelationSet, DesignVariable, DimensionedVariable, Expr, LinkModel, Rational,
    SignConvention, Study, DEFAULT_COV_LIMIT,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub transfer: String,
    pub target: f64,
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub correlations: Vec<CorrelationSpec>,
    /// Expressions required to be `≥ 0`.
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_convention: Option<SignSpec>,
    /// Base-dimension exponents used by `pi-reduce`. May name quantities
    /// that are not design variables, such as the response.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dimensions: Vec<DimensionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    pub nominal: f64,
    pub link: LinkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LinkSpec {
    FixedSigma { sigma: f64 },
    PowerLink { p: f64, c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignSpec {
    Signed,
    Magnitude,
}

impl From<SignSpec> for SignConvention {
    fn from(s: SignSpec) -> Self {
        match s {
            SignSpec::Signed => SignConvention::Signed,
            SignSpec::Magnitude => SignConvention::Magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSpec {
    pub name: String,
    /// Base dimension to exponent, written as an integer or a `"p/q"` string.
    pub exponents: BTreeMap<String, Exponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Integer(i64),
    Fraction(String),
}

impl Exponent {
    fn to_rational(&self) -> Option<Rational> {
        match self {
            Exponent::Integer(n) => Some(Rational::from_integer(*n)),
            Exponent::Fraction(s) => {
                let (n, d) = s.split_once('/').unwrap_or((s, "1"));
                let n: i64 = n.trim().parse().ok()?;
                let d: i64 = d.trim().parse().ok()?;
                (d != 0).then(|| Rational::new(n, d))
            }
        }
    }
}

/// Reads and validates a study file.
pub fn load_study(path: impl AsRef<Path>) -> Result<Study, CliError> {
    load_study_file(path)?.to_study()
}

/// Reads a study file without validating its contents.
pub fn load_study_file(path: impl AsRef<Path>) -> Result<StudyFile, CliError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

impl StudyFile {
    /// Validates every field and builds the study. Errors name the first
    /// offending field, e.g. `variables[1].link.sigma`.
    pub fn to_study(&self) -> Result<Study, CliError> {
        let transfer =
            Expr::parse(&self.transfer).map_err(|e| CliError::validation("transfer", e))?;
        if !self.target.is_finite() {
            return Err(CliError::validation("target", "must be a finite number"));
        }

        let mut variables = Vec::with_capacity(self.variables.len());
        for (i, v) in self.variables.iter().enumerate() {
            let field = format!("variables[{i}]");
            if self.variables[..i].iter().any(|w| w.name == v.name) {
                return Err(CliError::validation(
                    format!("{field}.name"),
                    format!("duplicate variable `{}`", v.name),
                ));
            }
            let link = match v.link {
                LinkSpec::FixedSigma { sigma } => LinkModel::fixed_sigma(sigma)
                    .map_err(|e| CliError::validation(format!("{field}.link.sigma"), e))?,
                LinkSpec::PowerLink { p, c } => LinkModel::power(c, p)
                    .map_err(|e| CliError::validation(format!("{field}.link"), e))?,
            };
            let dv = DesignVariable::new(v.name.as_str(), v.nominal, link)
                .with_bounds(v.lower, v.upper);
            dv.validate().map_err(|e| CliError::validation(field, e))?;
            variables.push(dv);
        }
        if variables.is_empty() {
            return Err(CliError::validation("variables", "at least one variable is required"));
        }
        let declared = |n: &str| self.variables.iter().any(|v| v.name == n);
        for name in transfer.variables() {
            if !declared(name) {
                return Err(CliError::validation(
                    "transfer",
                    format!("uses undeclared variable `{name}`"),
                ));
            }
        }

        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (i, text) in self.constraints.iter().enumerate() {
            let field = format!("constraints[{i}]");
            let c = Expr::parse(text).map_err(|e| CliError::validation(&field, e))?;
            if let Some(name) = c.variables().iter().find(|n| !declared(n)) {
                return Err(CliError::validation(
                    field,
                    format!("uses undeclared variable `{name}`"),
                ));
            }
            constraints.push(c);
        }

        let mut correlations = CorrelationSet::new();
        for (i, c) in self.correlations.iter().enumerate() {
            for (key, name) in [("a", &c.a), ("b", &c.b)] {
                if !declared(name) {
                    return Err(CliError::validation(
                        format!("correlations[{i}].{key}"),
                        format!("unknown variable `{name}`"),
                    ));
                }
            }
            correlations
                .insert(c.a.as_str(), c.b.as_str(), c.rho)
                .map_err(|e| CliError::validation(format!("correlations[{i}]"), e))?;
        }

        let mut study = Study::new(transfer, self.target, variables)
            .map_err(|e| CliError::validation("variables", e))?
            .with_constraints(constraints)
            .map_err(|e| CliError::validation("constraints", e))?
            .with_correlations(correlations)
            .map_err(|e| CliError::validation("correlations", e))?;
        if let Some(limit) = self.cov_limit {
            if !(limit > 0.0 && limit.is_finite()) {
                return Err(CliError::validation("cov_limit", "must be a positive number"));
            }
            study.cov_limit = limit;
        } else {
            study.cov_limit = DEFAULT_COV_LIMIT;
        }
        if let Some(sign) = self.sign_convention {
            study.sign_convention = sign.into();
        }
        Ok(study)
    }

    /// The `dimensions` section as dimensioned variables, in file order.
    pub fn dimensioned_variables(&self) -> Result<Vec<DimensionedVariable>, CliError> {
        if self.dimensions.is_empty() {
            return Err(CliError::validation("dimensions", "the study declares no dimensions"));
        }
        self.dimensions
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut exponents = Vec::with_capacity(d.exponents.len());
                for (dim, e) in &d.exponents {
                    let r = e.to_rational().ok_or_else(|| {
                        CliError::validation(
                            format!("dimensions[{i}].exponents.{dim}"),
                            "expected an integer or a \"p/q\" fraction",
                        )
                    })?;
                    exponents.push((dim.as_str(), r));
                }
                Ok(DimensionedVariable::new(d.name.as_str(), exponents))
            })
            .collect()
    }
}
