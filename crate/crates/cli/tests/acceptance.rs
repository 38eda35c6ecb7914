//! Acceptance criteria for the toolkit. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varsynth::{
    check_gradient, evaluate_candidate, optimize, partials, reduce, simulate, sweep_correlation,
    transmit, Assignment, CorrelationSet, DesignSolution, DesignVariable, DimensionedVariable,
    Expr, LinkModel, SignConvention, Study, Tolerances, TransmitOptions,
};
use varsynth_cli::{load_study, run_analyze};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("studies").join(name)
}

fn study(name: &str) -> Study {
    load_study(bundled(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn near(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{label} = {got}, expected {want} ± {tol}"))
    }
}

fn nominals_near(label: &str, a: &Assignment, want: [f64; 3], tol: f64) -> Result<(), String> {
    for (name, w) in ["D", "B", "L"].into_iter().zip(want) {
        near(&format!("{label} {name}"), a.get(name).unwrap(), w, tol)?;
    }
    Ok(())
}

fn optimum(s: &Study) -> Result<DesignSolution, String> {
    let sol = optimize(s, &s.nominals(), &Tolerances::default()).map_err(|e| e.to_string())?;
    if !sol.converged {
        return Err("optimizer did not converge".into());
    }
    Ok(sol)
}

fn fmt3(a: &Assignment) -> String {
    format!(
        "{{{:.4}, {:.4}, {:.4}}}",
        a.get("D").unwrap(),
        a.get("B").unwrap(),
        a.get("L").unwrap()
    )
}

// 1
fn decomposition() -> Outcome {
    let r = run_analyze(&study("glass_beads_p1.json"), None).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&r.json).unwrap();
    let d = &v["decomposition"];
    let mut got = Vec::new();
    for (k, (name, want)) in [("D", 0.0325), ("B", 0.0090), ("L", 0.0201)].into_iter().enumerate() {
        let term = &d["per_variable"][k];
        if term["name"] != name {
            return Err(format!("unexpected variable order at {k}"));
        }
        let c = term["contribution"].as_f64().unwrap();
        near(name, c, want, 5e-4)?;
        got.push(format!("{name} {c:.6}"));
    }
    let total = d["total"].as_f64().unwrap();
    near("total", total, 0.0616, 5e-4)?;
    Ok(format!("{}, total {total:.6}", got.join(", ")))
}

// 2
fn derivatives() -> Outcome {
    let e = Expr::parse("pi*(D^2 - B^2)*L/4").unwrap();
    let a = Assignment::from_pairs([("D", 1.69), ("B", 0.625), ("L", 1.92)]);
    let g = partials(&e, &a).map_err(|e| e.to_string())?;
    for (name, want) in [("D", 25.98), ("B", 3.55), ("L", 3.75)] {
        near(&format!("(dV/d{name})^2"), g.get(name).unwrap().powi(2), want, 0.01)?;
    }
    let disc = check_gradient(&e, &a, 1e-6).map_err(|e| e.to_string())?;
    if disc.is_nan() || disc >= 1e-6 {
        return Err(format!("dual vs central difference discrepancy {disc:e}"));
    }
    Ok(format!("squared partials {:.4}/{:.4}/{:.4}, discrepancy {disc:.1e}",
        g.get("D").unwrap().powi(2), g.get("B").unwrap().powi(2), g.get("L").unwrap().powi(2)))
}

// 3
fn constant_cov() -> Outcome {
    let sol = optimum(&study("glass_beads_p1.json"))?;
    nominals_near("p=1", &sol.nominals, [2.0, 0.6, 1.30], 0.01)?;
    near("variance", sol.transmitted_variance, 0.0529, 5e-4)?;
    for bound in ["D <= 2", "B >= 0.6"] {
        if !sol.feasibility.active.iter().any(|a| a == bound) {
            return Err(format!("`{bound}` not active: {:?}", sol.feasibility.active));
        }
    }
    Ok(format!("{} variance {:.6}, active {:?}", fmt3(&sol.nominals), sol.transmitted_variance, sol.feasibility.active))
}

// 4
fn fixed_variance() -> Outcome {
    let sol = optimum(&study("glass_beads_p0.json"))?;
    nominals_near("p=0", &sol.nominals, [1.74, 0.6, 1.77], 0.01)?;
    near("variance", sol.transmitted_variance, 0.0601, 5e-4)?;
    near("variance", sol.transmitted_variance, 0.060079, 5e-4)?;
    Ok(format!("{} variance {:.6}", fmt3(&sol.nominals), sol.transmitted_variance))
}

// 5
fn hybrid() -> Outcome {
    let sol = optimum(&study("glass_beads_hybrid.json"))?;
    nominals_near("hybrid", &sol.nominals, [2.0, 0.6, 1.3], 0.01)?;
    near("variance", sol.transmitted_variance, 0.044830, 1e-3)?;
    Ok(format!("{} variance {:.6}", fmt3(&sol.nominals), sol.transmitted_variance))
}

// 6
fn cross_evaluation() -> Outcome {
    let p1 = optimum(&study("glass_beads_p1.json"))?;
    let c = evaluate_candidate(&study("glass_beads_p0.json"), &p1.nominals).map_err(|e| e.to_string())?;
    near("variance under p=0", c.transmitted_variance, 0.068470, 5e-4)?;
    Ok(format!("p=1 optimum {} under p=0: {:.6}", fmt3(&p1.nominals), c.transmitted_variance))
}

fn sweep(name: &str, rhos: &[f64]) -> Result<Vec<varsynth::SweepRow>, String> {
    let rows = sweep_correlation(&study(name), ("D", "B"), rhos, SignConvention::Magnitude)
        .map_err(|e| e.to_string())?;
    if let Some(r) = rows.iter().find(|r| !r.converged) {
        return Err(format!("rho {} did not converge", r.rho));
    }
    Ok(rows)
}

// 7
fn correlation_sweep() -> Outcome {
    let rhos = [0.0, 0.1, 0.2, 0.3];
    let rows = sweep("glass_beads_p1.json", &rhos)?;
    let variance = [0.052896, 0.054926, 0.056956, 0.058986];
    let contribution = [0.0, 0.0020, 0.0041, 0.0061];
    for (k, r) in rows.iter().enumerate() {
        near(&format!("p=1 rho {} variance", r.rho), r.transmitted_variance, variance[k], 5e-4)?;
        near(&format!("p=1 rho {} contribution", r.rho), r.covariance_contribution, contribution[k], 2e-4)?;
        nominals_near(&format!("p=1 rho {}", r.rho), &r.nominals, [2.0, 0.6, 1.3], 0.01)?;
    }
    let p0 = sweep("glass_beads_p0.json", &[0.3])?;
    nominals_near("p=0 rho 0.3", &p0[0].nominals, [1.80, 0.6, 1.65], 0.02)?;
    near("p=0 rho 0.3 variance", p0[0].transmitted_variance, 0.068259, 1e-3)?;
    Ok(format!(
        "p=1 variances {:?}; p=0 at rho 0.3: {} variance {:.6}",
        rows.iter().map(|r| format!("{:.6}", r.transmitted_variance)).collect::<Vec<_>>(),
        fmt3(&p0[0].nominals),
        p0[0].transmitted_variance
    ))
}

// 8
fn hybrid_sweep() -> Outcome {
    let rows = sweep("glass_beads_hybrid.json", &[0.0, 0.1, 0.2, 0.3])?;
    let variance = [0.044830, 0.046615, 0.048403, 0.050190];
    for (k, r) in rows.iter().enumerate() {
        near(&format!("rho {} variance", r.rho), r.transmitted_variance, variance[k], 5e-4)?;
        nominals_near(&format!("rho {}", r.rho), &r.nominals, [2.0, 0.6, 1.3], 0.01)?;
    }
    Ok(format!(
        "variances {:?}",
        rows.iter().map(|r| format!("{:.6}", r.transmitted_variance)).collect::<Vec<_>>()
    ))
}

// 9
fn monte_carlo() -> Outcome {
    let s = study("glass_beads_p1.json");
    let delta = transmit(&s.transfer, &s.variables, &s.correlations, TransmitOptions::default())
        .map_err(|e| e.to_string())?
        .total;
    let mut worst: f64 = 0.0;
    let mut runs = Vec::new();
    for seed in 0..10 {
        let mc = simulate(&s.transfer, &s.variables, &s.correlations, 1_000_000, seed)
            .map_err(|e| e.to_string())?;
        let gap = (mc.variance - delta).abs() / delta;
        if gap >= 0.02 {
            return Err(format!("seed {seed}: relative gap {gap:.4}"));
        }
        worst = worst.max(gap);
        runs.push(mc);
    }
    for a in &runs {
        for b in &runs {
            let se = (a.se_variance.powi(2) + b.se_variance.powi(2)).sqrt();
            if (a.variance - b.variance).abs() > 4.0 * se {
                return Err(format!("seeds {} and {} disagree", a.seed, b.seed));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..5 {
        let n = rng.random_range(3..=6);
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let coef: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let text = names
            .iter()
            .zip(&coef)
            .map(|(v, a)| format!("({a})*{v}"))
            .collect::<Vec<_>>()
            .join(" + ");
        let e = Expr::parse(&format!("{text} + 2")).unwrap();
        let vars: Vec<DesignVariable> = names
            .iter()
            .map(|v| {
                DesignVariable::new(v.as_str(), rng.random_range(-1.0..1.0),
                    LinkModel::fixed_sigma(rng.random_range(0.1..2.0)).unwrap())
            })
            .collect();
        let corr = CorrelationSet::from_entries([("x0", "x1", rng.random_range(-0.8..0.8))]).unwrap();
        let d = transmit(&e, &vars, &corr, TransmitOptions::default()).unwrap().total;
        let mc = simulate(&e, &vars, &corr, 1_000_000, 100 + case).map_err(|e| e.to_string())?;
        if (mc.variance - d).abs() > 3.0 * mc.se_variance {
            return Err(format!("affine case {case}: mc {} ± {}, delta {d}", mc.variance, mc.se_variance));
        }
    }
    Ok(format!("bead worst relative gap {worst:.4} over 10 seeds; 5 affine studies within 3 standard errors"))
}

// 10
fn pi_reduction() -> Outcome {
    let vars = [("V", 3), ("D", 1), ("B", 1), ("L", 1)]
        .map(|(n, e)| DimensionedVariable::with_integer_exponents(n, [("length", e)]));
    let groups = reduce(&vars, Some(&["B"])).map_err(|e| e.to_string())?;
    let shown: Vec<String> = groups.iter().map(|g| g.to_string()).collect();
    if shown != ["V*B^(-3)", "D*B^(-1)", "L*B^(-1)"] {
        return Err(format!("groups {shown:?}"));
    }
    for g in &groups {
        if !g.is_dimensionless(&vars).unwrap() {
            return Err(format!("{g} is not dimensionless"));
        }
    }
    let volume = Expr::parse("pi*(D^2 - B^2)*L/4").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b = rng.random_range(0.1..2.0);
        let mut a = Assignment::from_pairs([
            ("D", b + rng.random_range(0.01..3.0)),
            ("B", b),
            ("L", rng.random_range(0.1..5.0)),
        ]);
        a.set("V", volume.evaluate(&a).unwrap());
        let pi: Vec<f64> = groups.iter().map(|g| g.evaluate(&a).unwrap()).collect();
        let rhs = std::f64::consts::PI / 4.0 * (pi[1] * pi[1] - 1.0) * pi[2];
        worst = worst.max((pi[0] - rhs).abs() / pi[0].abs());
    }
    if worst >= 1e-12 {
        return Err(format!("relative error {worst:e}"));
    }
    Ok(format!("{}; identity error {worst:.1e}", shown.join(", ")))
}

struct Random {
    study: Study,
    /// Same study with the transfer function scaled by `k`.
    scaled: Study,
    k: f64,
}

fn random_study(rng: &mut ChaCha8Rng) -> Random {
    let n = rng.random_range(3..=6);
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let mut terms: Vec<String> = names
        .iter()
        .map(|v| format!("{:.3}*{v}^{}", rng.random_range(0.5..2.0), rng.random_range(1..=3)))
        .collect();
    terms.push(format!("{:.3}*x0*x1", rng.random_range(0.0..1.0)));
    let transfer = terms.join(" + ");
    let vars: Vec<DesignVariable> = names
        .iter()
        .map(|v| {
            let link = if rng.random_bool(0.5) {
                LinkModel::fixed_sigma(rng.random_range(0.01..0.1)).unwrap()
            } else {
                LinkModel::constant_cov(rng.random_range(0.01..0.05)).unwrap()
            };
            DesignVariable::new(v.as_str(), rng.random_range(0.5..2.0), link)
                .with_bounds(Some(0.25), Some(4.0))
        })
        .collect();
    // disjoint pairs keep the correlation matrix positive semi-definite
    let mut corr = CorrelationSet::new();
    for k in 0..n / 2 {
        if rng.random_bool(0.7) {
            corr.insert(names[2 * k].as_str(), names[2 * k + 1].as_str(), rng.random_range(-0.9..0.9))
                .unwrap();
        }
    }
    let e = Expr::parse(&transfer).unwrap();
    let target = e.evaluate(&vars.iter().map(|v| (v.name.as_str(), v.nominal)).collect()).unwrap();
    let constraints = vec![Expr::parse("8 - x0 - x1").unwrap()];
    let make = |e: Expr, target: f64| {
        Study::new(e, target, vars.clone())
            .unwrap()
            .with_correlations(corr.clone())
            .unwrap()
            .with_constraints(constraints.clone())
            .unwrap()
    };
    let k = rng.random_range(-5.0..5.0);
    Random {
        study: make(e, target),
        scaled: make(Expr::parse(&format!("{k}*({transfer})")).unwrap(), k * target),
        k,
    }
}

// 11
fn property_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = TransmitOptions::default();
    let tols = Tolerances::default();
    let (mut converged, mut total) = (0, 0);
    for case in 0..60 {
        let Random { study: s, scaled, k } = random_study(&mut rng);
        let fail = |what: &str| Err(format!("case {case} ({} variables): {what}", s.variables.len()));
        let d = transmit(&s.transfer, &s.variables, &s.correlations, opts).unwrap();

        // decomposition sums to total
        let mut sum = 0.0;
        d.per_variable.iter().for_each(|(_, c)| sum += c);
        d.per_pair.iter().for_each(|p| sum += p.value);
        if sum.to_bits() != d.total.to_bits() || d.per_variable.iter().any(|(_, c)| *c < 0.0) {
            return fail("decomposition does not sum to the total");
        }

        // quadratic scaling
        let ds = transmit(&scaled.transfer, &s.variables, &s.correlations, opts).unwrap();
        let magnitude: f64 = d.per_variable.iter().map(|v| v.1).sum::<f64>()
            + d.per_pair.iter().map(|p| p.value.abs()).sum::<f64>();
        if (ds.total - k * k * d.total).abs() > 1e-12 * k * k * magnitude {
            return fail("quadratic scaling");
        }

        // zero-variance absorption
        let silent: Vec<DesignVariable> = s
            .variables
            .iter()
            .map(|v| DesignVariable { link: LinkModel::fixed_sigma(0.0).unwrap(), ..v.clone() })
            .collect();
        if transmit(&s.transfer, &silent, &s.correlations, opts).unwrap().total != 0.0 {
            return fail("zero variance does not give zero total");
        }

        // pair symmetry
        let swapped = CorrelationSet::from_entries(
            s.correlations.entries().iter().map(|c| (c.b.clone(), c.a.clone(), c.rho)),
        )
        .unwrap();
        let dw = transmit(&s.transfer, &s.variables, &swapped, opts).unwrap();
        for c in s.correlations.entries() {
            if d.pair(&c.a, &c.b) != dw.pair(&c.a, &c.b) || d.pair(&c.a, &c.b) != d.pair(&c.b, &c.a) {
                return fail("pair contribution depends on order");
            }
        }

        // optimizer feasibility and descent from a feasible start
        let init = s.nominals();
        let start = evaluate_candidate(&s, &init).unwrap();
        let sol = optimize(&s, &init, &tols).map_err(|e| format!("case {case}: {e}"))?;
        total += 1;
        if sol.converged {
            converged += 1;
            if !sol.feasibility.is_feasible(s.target, &tols) {
                return fail("converged solution is infeasible");
            }
        }
        if sol.transmitted_variance > start.transmitted_variance + 1e-12 {
            return fail("optimizer increased the transmitted variance");
        }
    }
    if converged < total {
        return Err(format!("only {converged} of {total} optimizations converged"));
    }
    Ok(format!("60 random studies of 3-6 variables; {converged}/{total} optimizations converged"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("decomposition golden values", decomposition),
        ("derivative golden values and dual/central-difference agreement", derivatives),
        ("parameter design, constant coefficient of variation", constant_cov),
        ("parameter design, fixed variances", fixed_variance),
        ("parameter design, hybrid link", hybrid),
        ("cross-evaluation under fixed variances", cross_evaluation),
        ("correlation sweeps, magnitude convention", correlation_sweep),
        ("hybrid correlation sweep", hybrid_sweep),
        ("Monte-Carlo agreement", monte_carlo),
        ("Pi reduction", pi_reduction),
        ("property suite over random studies", property_suite),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} [PRIMARY] PASS  {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} [PRIMARY] FAIL  {name}: {why}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
