//! Report files: JSON for machines, aligned text for people.
//!
//! JSON numbers use the shortest representation that round-trips; text uses
//! six significant digits. Reports carry no timestamps, so identical inputs
//! give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use varsynth::{
    rank_contributions, sigma_of, Assignment, DesignVariable, Feasibility, RankedContribution,
    SignConvention, VarianceDecomposition,
};

use crate::error::exit;
use crate::CliError;

/// How a command finished, beyond hard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
    CheckFailed,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => exit::SUCCESS,
            Status::NotConverged => exit::NOT_CONVERGED,
            Status::CheckFailed => exit::CHECK_FAILED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub json: String,
    pub text: String,
    pub status: Status,
}

impl Report {
    pub(crate) fn new(value: &impl Serialize, text: String, status: Status) -> Self {
        let mut json = serde_json::to_string_pretty(value).expect("report serializes");
        json.push('\n');
        Self { json, text, status }
    }

    /// Writes the JSON report to `out` and the text report next to it with a
    /// `.txt` extension. Returns the text path.
    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let text_path = text_path(out);
        if text_path == out {
            return Err(CliError::validation(
                "--out",
                "the JSON report path must not end in .txt",
            ));
        }
        write_file(out, &self.json)?;
        write_file(&text_path, &self.text)?;
        Ok(text_path)
    }
}

pub fn text_path(out: &Path) -> PathBuf {
    out.with_extension("txt")
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `x` to six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.5e}");
    let (mantissa, exp) = s.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub(crate) fn percent(share: f64) -> String {
    format!("{:.1}%", 100.0 * share)
}

/// Left-aligned columns separated by two spaces.
pub(crate) fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            let _ = write!(line, "{cell:<w$}", w = width[c]);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub(crate) struct Named {
    pub name: String,
    pub value: f64,
}

pub(crate) fn named(vars: &[DesignVariable], a: &Assignment) -> Vec<Named> {
    vars.iter()
        .filter_map(|v| a.get(&v.name).map(|value| Named { name: v.name.clone(), value }))
        .collect()
}

pub(crate) fn assignment_text(vars: &[DesignVariable], a: &Assignment) -> String {
    named(vars, a)
        .iter()
        .map(|n| format!("{} = {}", n.name, sig6(n.value)))
        .collect::<Vec<_>>()
        .join(", ")
}

pub(crate) fn sign_name(s: SignConvention) -> &'static str {
    match s {
        SignConvention::Signed => "signed",
        SignConvention::Magnitude => "magnitude",
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct VariableTerm {
    pub name: String,
    pub sigma: f64,
    pub contribution: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct PairTerm {
    pub a: String,
    pub b: String,
    pub rho: f64,
    pub contribution: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct DecompositionJson {
    pub sign_convention: &'static str,
    pub per_variable: Vec<VariableTerm>,
    pub per_pair: Vec<PairTerm>,
    pub total: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct RankJson {
    pub source: String,
    pub contribution: f64,
    pub share: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct WarningJson {
    pub variable: String,
    pub coefficient_of_variation: f64,
    pub limit: f64,
}

/// JSON and text views of a decomposition at `vars`' nominals.
pub(crate) struct DecompositionView {
    pub json: DecompositionJson,
    pub ranking: Option<Vec<RankJson>>,
    pub warnings: Vec<WarningJson>,
    pub notes: Vec<String>,
    pub text: String,
}

pub(crate) fn decomposition_view(
    vars: &[DesignVariable],
    rho: impl Fn(&str, &str) -> f64,
    d: &VarianceDecomposition,
    sign: SignConvention,
    cov_limit: f64,
) -> DecompositionView {
    let sigma = |name: &str| {
        vars.iter()
            .find(|v| v.name == name)
            .and_then(|v| sigma_of(v).ok())
            .unwrap_or(f64::NAN)
    };
    let json = DecompositionJson {
        sign_convention: sign_name(sign),
        per_variable: d
            .per_variable
            .iter()
            .map(|(n, c)| VariableTerm { name: n.clone(), sigma: sigma(n), contribution: *c })
            .collect(),
        per_pair: d
            .per_pair
            .iter()
            .map(|p| PairTerm {
                a: p.a.clone(),
                b: p.b.clone(),
                rho: rho(&p.a, &p.b),
                contribution: p.value,
            })
            .collect(),
        total: d.total,
    };
    let warnings: Vec<WarningJson> = d
        .validity_warnings
        .iter()
        .map(|n| {
            let v = vars.iter().find(|v| v.name == *n).unwrap();
            WarningJson {
                variable: n.clone(),
                coefficient_of_variation: sigma(n) / v.nominal.abs(),
                limit: cov_limit,
            }
        })
        .collect();

    let mut notes = Vec::new();
    let ranked: Option<Vec<RankedContribution>> = rank_contributions(d).ok();
    if ranked.is_none() {
        notes.push("total transmitted variance is zero; the ranking is undefined".to_string());
    }

    let mut rows = vec![vec!["source".to_string(), "contribution".into(), "share".into()]];
    match &ranked {
        Some(r) => rows.extend(r.iter().map(|c| {
            vec![c.source.to_string(), sig6(c.contribution), percent(c.share)]
        })),
        None => rows.extend(
            d.per_variable
                .iter()
                .map(|(n, c)| vec![n.clone(), sig6(*c), "-".into()]),
        ),
    }
    rows.push(vec!["total".into(), sig6(d.total), String::new()]);
    let mut text = table(&rows);
    if !d.per_pair.is_empty() {
        let _ = writeln!(text, "covariance terms are {}", sign_name(sign));
    }
    for w in &warnings {
        let _ = writeln!(
            text,
            "warning: {} has coefficient of variation {}, above the linearization limit {}",
            w.variable,
            sig6(w.coefficient_of_variation),
            sig6(w.limit)
        );
    }
    for n in &notes {
        let _ = writeln!(text, "note: {n}");
    }

    DecompositionView {
        json,
        ranking: ranked.map(|r| {
            r.into_iter()
                .map(|c| RankJson {
                    source: c.source.to_string(),
                    contribution: c.contribution,
                    share: c.share,
                })
                .collect()
        }),
        warnings,
        notes,
        text,
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct Violation {
    pub constraint: String,
    pub amount: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct FeasibilityJson {
    pub equality_residual: f64,
    pub bound_violations: Vec<Violation>,
    pub inequality_violations: Vec<Violation>,
    pub active: Vec<String>,
}

impl From<&Feasibility> for FeasibilityJson {
    fn from(f: &Feasibility) -> Self {
        let list = |v: &[(String, f64)]| {
            v.iter()
                .map(|(c, a)| Violation { constraint: c.clone(), amount: *a })
                .collect()
        };
        Self {
            equality_residual: f.equality_residual,
            bound_violations: list(&f.bound_violations),
            inequality_violations: list(&f.inequality_violations),
            active: f.active.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0324735123), "0.0324735");
        assert_eq!(sig6(3.71784914), "3.71785");
        assert_eq!(sig6(2.0), "2");
        assert_eq!(sig6(-1.5e-7), "-1.5e-7");
        assert_eq!(sig6(123456789.0), "1.23457e8");
        assert_eq!(sig6(9.9999996), "10");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn text_path_swaps_extension() {
        assert_eq!(text_path(Path::new("out/report.json")), Path::new("out/report.txt"));
        assert_eq!(text_path(Path::new("report")), Path::new("report.txt"));
    }
}
