//! Exact first partial derivatives by forward-mode dual numbers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::expr::Expr;
use crate::scalar::{Dual, Scalar};
use crate::{Assignment, Error, Result};

/// Partial derivatives of an expression at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub point: Assignment,
    /// One entry per variable of the differentiated expression.
    pub partials: BTreeMap<String, f64>,
}

impl Gradient {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.partials.get(name).copied()
    }
}

pub fn partials(e: &Expr, a: &Assignment) -> Result<Gradient> {
    let slots = e.bind(a)?;
    let grad = partials_at(e, &slots)?;
    Ok(Gradient {
        point: a.clone(),
        partials: e.variables().iter().cloned().zip(grad).collect(),
    })
}

/// Partials in slot order, one dual pass per variable. Works over any
/// [`Scalar`], so the partials themselves can carry derivatives.
pub fn partials_at<S: Scalar>(e: &Expr, slots: &[S]) -> Result<Vec<S>> {
    let mut seeded: Vec<Dual<S>> = slots
        .iter()
        .map(|&x| Dual::new(x, S::constant(0.0)))
        .collect();
    let mut out = Vec::with_capacity(slots.len());
    for i in 0..slots.len() {
        seeded[i].du = S::constant(1.0);
        let y = e.eval_slots(&seeded)?;
        seeded[i].du = S::constant(0.0);
        if !y.du.is_finite() {
            return Err(Error::NotDifferentiable {
                variable: e.variables()[i].clone(),
            });
        }
        out.push(y.du);
    }
    Ok(out)
}

/// Largest `|dual − central difference| / max(1, |dual|)` over the
/// variables of `e`, using step `h`.
pub fn check_gradient(e: &Expr, a: &Assignment, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let slots = e.bind(a)?;
    let exact = partials_at(e, &slots)?;
    let mut worst: f64 = 0.0;
    let mut probe = slots.clone();
    for (i, &g) in exact.iter().enumerate() {
        probe[i] = slots[i] + h;
        let up = e.eval_slots(&probe)?;
        probe[i] = slots[i] - h;
        let down = e.eval_slots(&probe)?;
        probe[i] = slots[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(libm::fabs(g - fd) / libm::fmax(1.0, libm::fabs(g)));
    }
    Ok(worst)
}
