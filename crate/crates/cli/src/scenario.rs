//! Command-line overrides applied on top of a study file.

use std::str::FromStr;

use varsynth::{Assignment, SignConvention, Study};

use crate::CliError;

/// `NAME=VALUE`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fix {
    pub name: String,
    pub value: f64,
}

impl FromStr for Fix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
        Ok(Fix {
            name: name.trim().to_string(),
            value: parse_number(value)?,
        })
    }
}

/// `A:B=VALUE`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoOverride {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

impl FromStr for RhoOverride {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (pair, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected A:B=VALUE, got `{s}`"))?;
        let (a, b) = pair
            .split_once(':')
            .ok_or_else(|| format!("expected A:B=VALUE, got `{s}`"))?;
        Ok(RhoOverride {
            a: a.trim().to_string(),
            b: b.trim().to_string(),
            rho: parse_number(value)?,
        })
    }
}

/// `A:B=r1,r2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub a: String,
    pub b: String,
    pub rhos: Vec<f64>,
}

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected A:B=RHO[,RHO...], got `{s}`");
        let (pair, values) = s.split_once('=').ok_or_else(bad)?;
        let (a, b) = pair.split_once(':').ok_or_else(bad)?;
        let rhos = values
            .split(',')
            .map(parse_number)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepSpec {
            a: a.trim().to_string(),
            b: b.trim().to_string(),
            rhos,
        })
    }
}

/// `LO,HI`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s
            .split_once(',')
            .ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
        Ok(Range {
            lo: parse_number(lo)?,
            hi: parse_number(hi)?,
        })
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", s.trim()))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{}` is not finite", s.trim()))
    }
}

/// Scenario flags shared by the verbs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub fix: Vec<Fix>,
    pub rho: Vec<RhoOverride>,
    pub sign_convention: Option<SignConvention>,
}

impl Overrides {
    /// Applies correlations and the sign convention to `study`.
    pub fn apply(&self, study: &mut Study) -> Result<(), CliError> {
        for r in &self.rho {
            for name in [&r.a, &r.b] {
                if !study.variables.iter().any(|v| v.name == *name) {
                    return Err(CliError::validation("--rho", format!("unknown variable `{name}`")));
                }
            }
            study
                .correlations
                .set(&r.a, &r.b, r.rho)
                .map_err(|e| CliError::validation("--rho", e))?;
        }
        study
            .validate()
            .map_err(|e| CliError::validation("--rho", e))?;
        if let Some(s) = self.sign_convention {
            study.sign_convention = s;
        }
        Ok(())
    }

    /// Study nominals with the `--fix` values substituted.
    pub fn point(&self, study: &Study) -> Result<Assignment, CliError> {
        let mut a = study.nominals();
        for f in &self.fix {
            if a.set(&f.name, f.value).is_none() {
                return Err(CliError::validation("--fix", format!("unknown variable `{}`", f.name)));
            }
        }
        Ok(a)
    }

    /// Pins every `--fix` variable: nominal and both bounds set to the value.
    pub fn pin(&self, study: &mut Study) -> Result<(), CliError> {
        for f in &self.fix {
            let v = study
                .variables
                .iter_mut()
                .find(|v| v.name == f.name)
                .ok_or_else(|| CliError::validation("--fix", format!("unknown variable `{}`", f.name)))?;
            v.nominal = f.value;
            v.lower = Some(f.value);
            v.upper = Some(f.value);
        }
        study
            .validate()
            .map_err(|e| CliError::validation("--fix", e))
    }
}
