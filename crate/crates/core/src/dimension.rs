//! Buckingham-Pi reduction over exact rational exponents.
//!
//! Variables are columns of a dimension matrix (rows are base dimensions).
//! A set of repeating variables spanning its column space is chosen; every
//! other variable then forms one dimensionless group with them, so the
//! groups are a basis of the matrix's nullspace.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_rational::Ratio;

use crate::{Assignment, Error, Result};

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionedVariable {
    pub name: String,
    /// Base dimension (`"L"`, `"M"`, `"T"`, ...) to exponent. Absent means zero.
    pub exponents: BTreeMap<String, Rational>,
}

impl DimensionedVariable {
    pub fn new<I, S>(name: impl Into<String>, exponents: I) -> Self
    where
        I: IntoIterator<Item = (S, Rational)>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            exponents: exponents
                .into_iter()
                .map(|(k, v)| (k.into(), v))
                .filter(|(_, v)| *v != Rational::from_integer(0))
                .collect(),
        }
    }

    /// A variable with integer exponents.
    pub fn with_integer_exponents<S: Into<String>>(
        name: impl Into<String>,
        exponents: impl IntoIterator<Item = (S, i64)>,
    ) -> Self {
        Self::new(
            name,
            exponents
                .into_iter()
                .map(|(k, v)| (k, Rational::from_integer(v))),
        )
    }

    fn exponent(&self, dim: &str) -> Rational {
        self.exponents.get(dim).copied().unwrap_or_else(zero)
    }
}

/// A product of powers of variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiGroup {
    pub powers: Vec<(String, Rational)>,
}

impl PiGroup {
    pub fn exponent(&self, name: &str) -> Rational {
        self.powers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| *p)
            .unwrap_or_else(zero)
    }

    /// Net exponent of every base dimension, zero entries dropped.
    pub fn net_dimension(&self, vars: &[DimensionedVariable]) -> Result<BTreeMap<String, Rational>> {
        let mut net: BTreeMap<String, Rational> = BTreeMap::new();
        for (name, power) in &self.powers {
            let v = vars
                .iter()
                .find(|v| v.name == *name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            for (dim, e) in &v.exponents {
                *net.entry(dim.clone()).or_insert_with(zero) += *e * *power;
            }
        }
        net.retain(|_, e| *e != zero());
        Ok(net)
    }

    pub fn is_dimensionless(&self, vars: &[DimensionedVariable]) -> Result<bool> {
        Ok(self.net_dimension(vars)?.is_empty())
    }

    pub fn evaluate(&self, a: &Assignment) -> Result<f64> {
        let mut out = 1.0;
        for (name, p) in &self.powers {
            let x = a.get(name).ok_or_else(|| Error::MissingBinding(name.clone()))?;
            out *= libm::pow(x, *p.numer() as f64 / *p.denom() as f64);
        }
        Ok(out)
    }
}

/// Expression syntax, e.g. `V*B^(-3)`.
impl fmt::Display for PiGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, p)) in self.powers.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            f.write_str(name)?;
            if *p == Rational::from_integer(1) {
                continue;
            }
            if p.is_integer() && *p.numer() > 0 {
                write!(f, "^{}", p.numer())?;
            } else {
                write!(f, "^({p})")?;
            }
        }
        Ok(())
    }
}

fn zero() -> Rational {
    Rational::from_integer(0)
}

/// Row-reduces `m` in place; returns the pivot columns.
fn rref(m: &mut [Vec<Rational>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        let Some(p) = (row..m.len()).find(|&r| m[r][col] != zero()) else {
            continue;
        };
        m.swap(row, p);
        let lead = m[row][col];
        for v in m[row].iter_mut() {
            *v /= lead;
        }
        for r in 0..m.len() {
            if r != row && m[r][col] != zero() {
                let factor = m[r][col];
                for c in 0..m[r].len() {
                    let delta = factor * m[row][c];
                    m[r][c] -= delta;
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == m.len() {
            break;
        }
    }
    pivots
}

/// Dimension matrix restricted to `columns`, optionally augmented.
fn matrix(dims: &[String], vars: &[&DimensionedVariable], extra: Option<&DimensionedVariable>) -> Vec<Vec<Rational>> {
    dims.iter()
        .map(|d| {
            let mut row: Vec<Rational> = vars.iter().map(|v| v.exponent(d)).collect();
            if let Some(x) = extra {
                row.push(-x.exponent(d));
            }
            row
        })
        .collect()
}

fn rank(dims: &[String], vars: &[&DimensionedVariable]) -> usize {
    let mut m = matrix(dims, vars, None);
    rref(&mut m, vars.len()).len()
}

/// Dimensionless groups for `vars`: one per non-repeating variable, each with
/// that variable to the first power. With no `repeating` set, the first
/// maximal independent set in name order is used.
pub fn reduce(vars: &[DimensionedVariable], repeating: Option<&[&str]>) -> Result<Vec<PiGroup>> {
    if vars.is_empty() {
        return Err(Error::Dimension("no variables given".into()));
    }
    let mut seen = BTreeSet::new();
    for v in vars {
        if !seen.insert(v.name.as_str()) {
            return Err(Error::DuplicateVariable(v.name.clone()));
        }
    }
    let dims: Vec<String> = vars
        .iter()
        .flat_map(|v| v.exponents.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let all: Vec<&DimensionedVariable> = vars.iter().collect();
    let full_rank = rank(&dims, &all);

    let basis: Vec<&DimensionedVariable> = match repeating {
        Some(names) => {
            let mut chosen = Vec::new();
            for n in names {
                let v = vars
                    .iter()
                    .find(|v| v.name == *n)
                    .ok_or_else(|| Error::UnknownVariable(n.to_string()))?;
                if chosen.iter().any(|c: &&DimensionedVariable| c.name == v.name) {
                    return Err(Error::Dimension(format!("`{n}` repeated twice")));
                }
                chosen.push(v);
            }
            if chosen.len() != full_rank {
                return Err(Error::Dimension(format!(
                    "{} repeating variables given, the dimension matrix has rank {full_rank}",
                    chosen.len()
                )));
            }
            if rank(&dims, &chosen) != full_rank {
                return Err(Error::Dimension(
                    "repeating variables are not dimensionally independent".into(),
                ));
            }
            chosen
        }
        None => {
            let mut sorted = all.clone();
            sorted.sort_by(|a, b| a.name.cmp(&b.name));
            let mut chosen: Vec<&DimensionedVariable> = Vec::new();
            for v in sorted {
                if chosen.len() == full_rank {
                    break;
                }
                chosen.push(v);
                if rank(&dims, &chosen) < chosen.len() {
                    chosen.pop();
                }
            }
            chosen
        }
    };

    let mut groups = Vec::with_capacity(vars.len() - full_rank);
    for v in vars {
        if basis.iter().any(|b| b.name == v.name) {
            continue;
        }
        // basis·k = −dim(v)
        let mut m = matrix(&dims, &basis, Some(v));
        let pivots = rref(&mut m, basis.len());
        debug_assert_eq!(pivots.len(), basis.len());
        let mut powers = alloc::vec![(v.name.clone(), Rational::from_integer(1))];
        let mut k = alloc::vec![zero(); basis.len()];
        for (row, &col) in pivots.iter().enumerate() {
            k[col] = m[row][basis.len()];
        }
        if m.iter().skip(pivots.len()).any(|r| r[basis.len()] != zero()) {
            return Err(Error::Dimension(format!(
                "`{}` is not expressible in the repeating variables",
                v.name
            )));
        }
        for (b, p) in basis.iter().zip(k) {
            if p != zero() {
                powers.push((b.name.clone(), p));
            }
        }
        groups.push(PiGroup { powers });
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    fn bead() -> Vec<DimensionedVariable> {
        vec![
            DimensionedVariable::with_integer_exponents("V", [("L", 3)]),
            DimensionedVariable::with_integer_exponents("D", [("L", 1)]),
            DimensionedVariable::with_integer_exponents("B", [("L", 1)]),
            DimensionedVariable::with_integer_exponents("Len", [("L", 1)]),
        ]
    }

    #[test]
    fn bead_groups() {
        let vars = bead();
        let groups = reduce(&vars, Some(&["B"])).unwrap();
        let shown: Vec<String> = groups.iter().map(|g| g.to_string()).collect();
        assert_eq!(shown, ["V*B^(-3)", "D*B^(-1)", "Len*B^(-1)"]);
        assert_eq!(groups[0].exponent("B"), r(-3));
        for g in &groups {
            assert!(g.is_dimensionless(&vars).unwrap());
        }
        // the default basis picks B too
        assert_eq!(reduce(&vars, None).unwrap(), groups);
    }

    #[test]
    fn already_dimensionless() {
        let vars = vec![DimensionedVariable::with_integer_exponents::<&str>("x", [])];
        let groups = reduce(&vars, None).unwrap();
        assert_eq!(groups, [PiGroup { powers: vec![("x".into(), r(1))] }]);
    }

    #[test]
    fn newton_second_law() {
        let vars = vec![
            DimensionedVariable::with_integer_exponents("F", [("M", 1), ("L", 1), ("T", -2)]),
            DimensionedVariable::with_integer_exponents("m", [("M", 1)]),
            DimensionedVariable::with_integer_exponents("a", [("L", 1), ("T", -2)]),
        ];
        let groups = reduce(&vars, Some(&["m", "a"])).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].exponent("F"), r(1));
        assert_eq!(groups[0].exponent("m"), r(-1));
        assert_eq!(groups[0].exponent("a"), r(-1));
    }

    #[test]
    fn fractional_exponents() {
        // pendulum: period, length, gravity -> T·sqrt(g/l)
        let vars = vec![
            DimensionedVariable::with_integer_exponents("t", [("T", 1)]),
            DimensionedVariable::with_integer_exponents("l", [("L", 1)]),
            DimensionedVariable::with_integer_exponents("g", [("L", 1), ("T", -2)]),
        ];
        let groups = reduce(&vars, Some(&["l", "g"])).unwrap();
        assert_eq!(groups[0].exponent("g"), Rational::new(1, 2));
        assert_eq!(groups[0].exponent("l"), Rational::new(-1, 2));
        assert!(groups[0].is_dimensionless(&vars).unwrap());
        assert_eq!(groups[0].to_string(), "t*l^(-1/2)*g^(1/2)");
    }

    #[test]
    fn invalid_repeating_sets() {
        let vars = bead();
        assert!(matches!(reduce(&vars, Some(&["B", "D"])), Err(Error::Dimension(_))));
        assert!(matches!(reduce(&vars, Some(&[])), Err(Error::Dimension(_))));
        assert!(matches!(reduce(&vars, Some(&["Q"])), Err(Error::UnknownVariable(_))));
        assert!(matches!(reduce(&[], None), Err(Error::Dimension(_))));
        let newton = vec![
            DimensionedVariable::with_integer_exponents("F", [("M", 1), ("L", 1), ("T", -2)]),
            DimensionedVariable::with_integer_exponents("m", [("M", 1)]),
            DimensionedVariable::with_integer_exponents("a", [("L", 1), ("T", -2)]),
            DimensionedVariable::with_integer_exponents("w", [("M", 2)]),
        ];
        assert!(matches!(
            reduce(&newton, Some(&["m", "w"])),
            Err(Error::Dimension(_))
        ));
    }
}
