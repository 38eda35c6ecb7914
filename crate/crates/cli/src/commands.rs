//! The analyses behind each verb. Each returns a [`Report`]; writing files
//! is left to the caller.

use std::fmt::Write as _;

use serde::Serialize;
use varsynth::{
    optimize, reduce, simulate, sweep_correlation, transmit, Assignment,
    DesignSolution, Study, Tolerances,
};

use crate::report::{
    assignment_text, decomposition_view, named, sig6, sign_name, table, DecompositionJson,
    FeasibilityJson, Named, RankJson, Report, Status, WarningJson,
};
use crate::scenario::SweepSpec;
use crate::studyfile::StudyFile;
use crate::CliError;

#[derive(Serialize)]
struct AnalyzeJson<'a> {
    command: &'static str,
    transfer: String,
    target: f64,
    point: Vec<Named>,
    response: f64,
    decomposition: DecompositionJson,
    ranking: Option<Vec<RankJson>>,
    validity_warnings: Vec<WarningJson>,
    notes: &'a [String],
}

/// Response, decomposition, ranking and validity warnings at `point`
/// (default: the study nominals).
pub fn run_analyze(study: &Study, point: Option<&Assignment>) -> Result<Report, CliError> {
    let nominals = study.nominals();
    let point = point.unwrap_or(&nominals);
    let vars = study.variables_at(point)?;
    let response = study.transfer.evaluate(point)?;
    let d = transmit(&study.transfer, &vars, &study.correlations, study.transmit_options())?;
    let rho = |a: &str, b: &str| study.correlations.get(a, b).unwrap_or(0.0);
    let view = decomposition_view(&vars, rho, &d, study.sign_convention, study.cov_limit);

    let mut text = String::new();
    let _ = writeln!(text, "transfer  {}", study.transfer);
    let _ = writeln!(text, "point     {}", assignment_text(&vars, point));
    let _ = writeln!(
        text,
        "response  {} (target {})\n",
        sig6(response),
        sig6(study.target)
    );
    text.push_str(&view.text);

    let json = AnalyzeJson {
        command: "analyze",
        transfer: study.transfer.to_string(),
        target: study.target,
        point: named(&vars, point),
        response,
        decomposition: view.json,
        ranking: view.ranking,
        validity_warnings: view.warnings,
        notes: &view.notes,
    };
    Ok(Report::new(&json, text, Status::Success))
}

#[derive(Serialize)]
struct SolutionJson {
    command: &'static str,
    converged: bool,
    iterations: usize,
    target: f64,
    achieved_response: f64,
    transmitted_variance: f64,
    nominals: Vec<Named>,
    decomposition: DecompositionJson,
    ranking: Option<Vec<RankJson>>,
    validity_warnings: Vec<WarningJson>,
    feasibility: FeasibilityJson,
}

fn solution_report(study: &Study, sol: &DesignSolution) -> Result<Report, CliError> {
    let vars = study.variables_at(&sol.nominals)?;
    let rho = |a: &str, b: &str| study.correlations.get(a, b).unwrap_or(0.0);
    let view = decomposition_view(
        &vars,
        rho,
        &sol.decomposition,
        study.sign_convention,
        study.cov_limit,
    );
    let f = &sol.feasibility;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} after {} iterations",
        if sol.converged { "converged" } else { "NOT converged" },
        sol.iterations
    );
    let _ = writeln!(text, "nominals  {}", assignment_text(&vars, &sol.nominals));
    let _ = writeln!(
        text,
        "response  {} (target {}, residual {})",
        sig6(sol.achieved_response),
        sig6(study.target),
        sig6(f.equality_residual)
    );
    let _ = writeln!(text, "variance  {}\n", sig6(sol.transmitted_variance));
    text.push_str(&view.text);
    if !f.active.is_empty() {
        let _ = writeln!(text, "\nactive: {}", f.active.join("; "));
    }
    for (c, a) in f.bound_violations.iter().chain(&f.inequality_violations) {
        let _ = writeln!(text, "violated: {c} (by {})", sig6(a.abs()));
    }

    let json = SolutionJson {
        command: "optimize",
        converged: sol.converged,
        iterations: sol.iterations,
        target: study.target,
        achieved_response: sol.achieved_response,
        transmitted_variance: sol.transmitted_variance,
        nominals: named(&vars, &sol.nominals),
        decomposition: view.json,
        ranking: view.ranking,
        validity_warnings: view.warnings,
        feasibility: f.into(),
    };
    let status = if sol.converged {
        Status::Success
    } else {
        Status::NotConverged
    };
    Ok(Report::new(&json, text, status))
}

/// Optimizes from the study nominals. A run that does not converge still
/// reports the best point found, with [`Status::NotConverged`].
pub fn run_optimize(study: &Study, tols: &Tolerances) -> Result<Report, CliError> {
    let sol = optimize(study, &study.nominals(), tols)?;
    solution_report(study, &sol)
}

#[derive(Serialize)]
struct SweepRowJson {
    rho: f64,
    converged: bool,
    nominals: Vec<Named>,
    transmitted_variance: f64,
    covariance_contribution: f64,
}

#[derive(Serialize)]
struct SweepJson {
    command: &'static str,
    pair: [String; 2],
    sign_convention: &'static str,
    rows: Vec<SweepRowJson>,
}

/// Re-optimizes for each correlation value of a pair.
pub fn run_sweep(study: &Study, sweep: &SweepSpec) -> Result<Report, CliError> {
    for name in [&sweep.a, &sweep.b] {
        if !study.variables.iter().any(|v| v.name == *name) {
            return Err(CliError::validation("--sweep", format!("unknown variable `{name}`")));
        }
    }
    let rows = sweep_correlation(study, (&sweep.a, &sweep.b), &sweep.rhos, study.sign_convention)
        .map_err(|e| match e {
            varsynth::Error::InvalidCorrelation { .. } | varsynth::Error::NotPositiveSemidefinite => {
                CliError::validation("--sweep", e)
            }
            e => e.into(),
        })?;

    let mut grid = vec![vec![
        "rho".to_string(),
        "nominals".into(),
        "variance".into(),
        "covariance".into(),
        String::new(),
    ]];
    for r in &rows {
        grid.push(vec![
            sig6(r.rho),
            assignment_text(&study.variables, &r.nominals),
            sig6(r.transmitted_variance),
            sig6(r.covariance_contribution),
            if r.converged { String::new() } else { "not converged".into() },
        ]);
    }
    let mut text = format!(
        "correlation sweep over {}:{}, {} covariance terms\n\n",
        sweep.a,
        sweep.b,
        sign_name(study.sign_convention)
    );
    text.push_str(&table(&grid));

    let status = if rows.iter().all(|r| r.converged) {
        Status::Success
    } else {
        Status::NotConverged
    };
    let json = SweepJson {
        command: "sweep",
        pair: [sweep.a.clone(), sweep.b.clone()],
        sign_convention: sign_name(study.sign_convention),
        rows: rows
            .into_iter()
            .map(|r| SweepRowJson {
                rho: r.rho,
                converged: r.converged,
                nominals: named(&study.variables, &r.nominals),
                transmitted_variance: r.transmitted_variance,
                covariance_contribution: r.covariance_contribution,
            })
            .collect(),
    };
    Ok(Report::new(&json, text, status))
}

/// Relative gap allowed between the Monte-Carlo and delta-method variances.
pub const DEFAULT_MAX_RELATIVE_GAP: f64 = 0.02;
/// Gaps within this many Monte-Carlo standard errors always pass.
pub const STANDARD_ERRORS: f64 = 3.0;

#[derive(Serialize)]
struct McJson {
    command: &'static str,
    n: usize,
    seed: u64,
    delta_variance: f64,
    mc_mean: f64,
    mc_variance: f64,
    se_mean: f64,
    se_variance: f64,
    failures: usize,
    gap: f64,
    relative_gap: f64,
    max_relative_gap: f64,
    standard_errors: f64,
    pass: bool,
}

/// Compares the delta-method variance with a Monte-Carlo estimate at the
/// nominals. The check passes when the gap is within `max_relative_gap` of
/// the delta-method value or within three standard errors.
pub fn run_mc_check(study: &Study, n: usize, seed: u64, max_relative_gap: f64) -> Result<Report, CliError> {
    if n < 2 {
        return Err(CliError::validation("--n", "at least two samples are required"));
    }
    if !(max_relative_gap >= 0.0) {
        return Err(CliError::validation("--max-gap", "must be non-negative"));
    }
    let delta = transmit(
        &study.transfer,
        &study.variables,
        &study.correlations,
        study.transmit_options(),
    )?;
    let mc = simulate(&study.transfer, &study.variables, &study.correlations, n, seed)?;
    let gap = mc.variance - delta.total;
    let relative_gap = if delta.total != 0.0 {
        gap / delta.total
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let pass = relative_gap.abs() < max_relative_gap || gap.abs() <= STANDARD_ERRORS * mc.se_variance;

    let rows = vec![
        vec!["delta-method variance".to_string(), sig6(delta.total)],
        vec![
            "Monte-Carlo variance".into(),
            format!("{} ± {}", sig6(mc.variance), sig6(mc.se_variance)),
        ],
        vec!["Monte-Carlo mean".into(), format!("{} ± {}", sig6(mc.mean), sig6(mc.se_mean))],
        vec!["relative gap".into(), sig6(relative_gap)],
        vec!["samples".into(), format!("{} (seed {}, {} failed)", n, seed, mc.failures)],
    ];
    let mut text = table(&rows);
    let _ = writeln!(
        text,
        "\n{}: gap must be below {} relative or within {} standard errors",
        if pass { "PASS" } else { "FAIL" },
        sig6(max_relative_gap),
        STANDARD_ERRORS
    );
    if study.sign_convention != varsynth::SignConvention::Signed && !delta.per_pair.is_empty() {
        text.push_str("note: covariance terms are magnitudes; Monte-Carlo sampling is always signed\n");
    }

    let json = McJson {
        command: "mc-check",
        n,
        seed,
        delta_variance: delta.total,
        mc_mean: mc.mean,
        mc_variance: mc.variance,
        se_mean: mc.se_mean,
        se_variance: mc.se_variance,
        failures: mc.failures,
        gap,
        relative_gap,
        max_relative_gap,
        standard_errors: STANDARD_ERRORS,
        pass,
    };
    let status = if pass { Status::Success } else { Status::CheckFailed };
    Ok(Report::new(&json, text, status))
}

#[derive(Serialize)]
struct PowerJson {
    name: String,
    exponent: String,
}

#[derive(Serialize)]
struct GroupJson {
    expression: String,
    powers: Vec<PowerJson>,
}

#[derive(Serialize)]
struct PiJson {
    command: &'static str,
    variables: Vec<String>,
    rank: usize,
    groups: Vec<GroupJson>,
}

/// Dimensionless groups for the study's `dimensions` section.
pub fn run_pi_reduce(file: &StudyFile, repeating: Option<&[String]>) -> Result<Report, CliError> {
    let vars = file.dimensioned_variables()?;
    let names: Option<Vec<&str>> = repeating.map(|r| r.iter().map(String::as_str).collect());
    let groups = reduce(&vars, names.as_deref()).map_err(|e| match e {
        varsynth::Error::Dimension(_) | varsynth::Error::UnknownVariable(_) => {
            CliError::validation("--repeating", e)
        }
        e => CliError::validation("dimensions", e),
    })?;
    let rank = vars.len() - groups.len();

    let mut text = format!(
        "{} variables, dimension matrix rank {rank}, {} groups\n\n",
        vars.len(),
        groups.len()
    );
    for (i, g) in groups.iter().enumerate() {
        let _ = writeln!(text, "pi{i} = {g}");
    }
    let json = PiJson {
        command: "pi-reduce",
        variables: vars.iter().map(|v| v.name.clone()).collect(),
        rank,
        groups: groups
            .iter()
            .map(|g| GroupJson {
                expression: g.to_string(),
                powers: g
                    .powers
                    .iter()
                    .map(|(n, p)| PowerJson { name: n.clone(), exponent: p.to_string() })
                    .collect(),
            })
            .collect(),
    };
    Ok(Report::new(&json, text, Status::Success))
}
