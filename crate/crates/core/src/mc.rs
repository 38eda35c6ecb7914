//! Monte-Carlo check of the delta method.
//!
//! Inputs are drawn jointly Gaussian with the variables' nominals as means,
//! link-model standard deviations and the given correlations. Sample `k`
//! always uses ChaCha stream `k` of the seeded generator, so any draw can be
//! reproduced on its own and results do not depend on how samples are split
//! into batches.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::expr::Expr;
use crate::linalg::Mat;
use crate::variance::{correlation_factor, sigma_of, slot_map, unique_names, CorrelationSet, DesignVariable};
use crate::{Error, Result};

/// Fraction of failed evaluations above which a run is aborted.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    /// Samples requested.
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub se_mean: f64,
    /// Large-sample standard error of the variance from the fourth central
    /// moment.
    pub se_variance: f64,
    pub seed: u64,
    /// Samples the transfer function could not be evaluated at.
    pub failures: usize,
}

/// Correlated Gaussian draws for a list of design variables.
#[derive(Debug, Clone)]
pub struct Sampler {
    means: Vec<f64>,
    /// Lower-triangular factor of the covariance matrix.
    factor: Mat,
    base: ChaCha8Rng,
}

impl Sampler {
    pub fn new(vars: &[DesignVariable], corr: &CorrelationSet, seed: u64) -> Result<Self> {
        let names = unique_names(vars)?;
        let pairs = corr.resolve(&names)?;
        let n = vars.len();
        let sigma = vars.iter().map(sigma_of).collect::<Result<Vec<_>>>()?;
        let mut factor = correlation_factor(n, &pairs)?;
        for i in 0..n {
            for j in 0..n {
                factor[(i, j)] *= sigma[i];
            }
        }
        Ok(Self {
            means: vars.iter().map(|v| v.nominal).collect(),
            factor,
            base: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Draw number `index`, in variable order. Pure in `index`.
    pub fn draw(&self, index: u64) -> Vec<f64> {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(0);
        let n = self.means.len();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        (0..n)
            .map(|i| self.means[i] + (0..=i).map(|k| self.factor[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

pub fn simulate(
    e: &Expr,
    vars: &[DesignVariable],
    corr: &CorrelationSet,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    let names = unique_names(vars)?;
    let map = slot_map(e, &names)?;
    let sampler = Sampler::new(vars, corr, seed)?;

    let mut values = Vec::with_capacity(n);
    let mut slots = alloc::vec![0.0; map.len()];
    let mut failures = 0;
    for k in 0..n {
        let x = sampler.draw(k as u64);
        for (s, &i) in slots.iter_mut().zip(&map) {
            *s = x[i];
        }
        match e.eval_slots(&slots) {
            Ok(y) if y.is_finite() => values.push(y),
            _ => failures += 1,
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * n as f64 || values.len() < 2 {
        return Err(Error::SampleFailures { failed: failures, n });
    }

    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let (mut m2, mut m4) = (0.0, 0.0);
    for y in &values {
        let d = y - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = m2 / (m - 1.0);
    let central2 = m2 / m;
    let central4 = m4 / m;
    let var_of_var = (central4 - (m - 3.0) / (m - 1.0) * central2 * central2) / m;
    Ok(McEstimate {
        n,
        mean,
        variance,
        se_mean: libm::sqrt(variance / m),
        se_variance: libm::sqrt(libm::fmax(var_of_var, 0.0)),
        seed,
        failures,
    })
}
