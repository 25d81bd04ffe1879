//! Error bounds and estimates for the truncated, discretised composition.
//!
//! Three sources of error are tracked:
//!
//! * the tail mass of the composed PLD beyond `L`, bounded through the
//!   Chernoff inequality `P[S_k >= L] <= e^{k alpha(lambda)} e^{-lambda L}`
//!   with `lambda = L/2`, either with the moment bound of [`alpha_bound`]
//!   ([`tail_estimate`], approximative) or with the rigorous bound of
//!   [`analytic_tail_bound`] (`q <= 1/5`, `sigma >= 4`);
//! * truncation and periodisation of the convolution integrals
//!   ([`periodisation_bound`]);
//! * discretisation, estimated by comparing the Riemann sums at `n` and `2n`
//!   points ([`discretization_estimate`]).
//!
//! The bounds are derived for Poisson subsampling. Every function returns a
//! [`BoundReport`] that carries the value together with the preconditions
//! that failed, so callers can still print an out-of-envelope figure with a
//! clear label.
//!
//! Rigorous discretisation bounds via the Euler-Maclaurin formula need
//! bounds on `|omega'|`, `|omega''|` and are not provided.

use serde::{Deserialize, Serialize};

use crate::accountant::{compose, delta_from_convolved};
use crate::discretization::Grid;
use crate::error::Result;
use crate::mechanisms::{MechanismSpec, Scheme};

/// A bound value with its validity envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub valid: bool,
    pub violations: Vec<String>,
}

impl BoundReport {
    fn new(value: f64, violations: Vec<String>) -> Self {
        Self {
            value,
            valid: violations.is_empty(),
            violations,
        }
    }
}

/// Parameters of the Chernoff tail bound at truncation radius `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailParams {
    /// Chernoff exponent, `L / 2`.
    pub lambda: f64,
    /// `log(1 + 1 / (q (lambda - 1)))`, used by the analytic bound.
    pub c: f64,
    /// Moment bound `alpha(lambda)` of [`alpha_bound`].
    pub alpha: f64,
    pub alpha_valid: bool,
    pub analytic_valid: bool,
}

impl TailParams {
    pub fn new(sigma: f64, q: f64, radius: f64) -> Self {
        let lambda = radius / 2.0;
        let alpha = alpha_bound(sigma, q, lambda);
        Self {
            lambda,
            c: analytic_c(q, lambda),
            alpha: alpha.value,
            alpha_valid: alpha.valid,
            analytic_valid: analytic_violations(sigma, q, lambda).is_empty(),
        }
    }
}

/// Upper end `sigma^2 ln(1/(q sigma))` of the `lambda` range where [`alpha_bound`] applies.
pub fn alpha_bound_lambda_max(sigma: f64, q: f64) -> f64 {
    sigma * sigma * (1.0 / (q * sigma)).ln()
}

/// Moment bound `alpha(lambda) <= q^2 lambda (lambda + 1) / ((1 - q) sigma^2)`
/// for Poisson subsampling, with the `O(q^3 lambda^3 / sigma^3)` term dropped.
///
/// Applies for `sigma >= 1`, `q < 1/(16 sigma)` and
/// `1 <= lambda <= sigma^2 ln(1/(q sigma))`.
pub fn alpha_bound(sigma: f64, q: f64, lambda: f64) -> BoundReport {
    let mut violations = Vec::new();
    if sigma < 1.0 {
        violations.push(format!("sigma = {sigma} < 1"));
    }
    if q >= 1.0 / (16.0 * sigma) {
        violations.push(format!("q = {q} >= 1/(16 sigma) = {}", 1.0 / (16.0 * sigma)));
    }
    if lambda < 1.0 {
        violations.push(format!("lambda = {lambda} < 1"));
    }
    let lambda_max = alpha_bound_lambda_max(sigma, q);
    if lambda > lambda_max {
        violations.push(format!("lambda = {lambda} > sigma^2 ln(1/(q sigma)) = {lambda_max}"));
    }
    let value = q * q * lambda * (lambda + 1.0) / ((1.0 - q) * sigma * sigma);
    BoundReport::new(value, violations)
}

/// `exp(k alpha - lambda L)`, the Chernoff bound for `P[S_k >= L]`.
pub fn chernoff_tail(k: f64, alpha: f64, lambda: f64, radius: f64) -> f64 {
    (k * alpha - lambda * radius).exp()
}

/// Approximative tail estimate
/// `exp(k q^2 (L/2 + 1)(L/2) / ((1 - q) sigma^2)) e^{-L^2/2}`.
///
/// At `q = 1` the moment bound above is infinite. The mechanism is then the
/// plain Gaussian one, whose log-moment `lambda (lambda + 1) / (2 sigma^2)` is
/// exact, and the Chernoff exponent is minimised over `lambda` instead of
/// being evaluated at `L / 2`.
pub fn tail_estimate(sigma: f64, q: f64, k: u64, radius: f64) -> BoundReport {
    if q >= 1.0 {
        return BoundReport::new(
            gaussian_chernoff_tail(k as f64 / (2.0 * sigma * sigma), radius),
            Vec::new(),
        );
    }
    let lambda = radius / 2.0;
    let alpha = alpha_bound(sigma, q, lambda);
    BoundReport::new(
        chernoff_tail(k as f64, alpha.value, lambda, radius),
        alpha.violations,
    )
}

/// `min_lambda exp(m lambda (lambda + 1) - lambda L)` for a sum of Gaussian
/// privacy losses with total mean `m`.
fn gaussian_chernoff_tail(mean: f64, radius: f64) -> f64 {
    let lambda = (radius - mean) / (2.0 * mean);
    if lambda <= 0.0 {
        return 1.0;
    }
    (mean * lambda * (lambda + 1.0) - lambda * radius).exp()
}

fn is_gaussian(spec: &MechanismSpec) -> bool {
    spec.scheme() == Scheme::PoissonRemoveAdd && spec.q() >= 1.0
}

/// Tail estimate for a composition of several mechanisms: the moment
/// bounds add up in the exponent.
pub fn composite_tail_estimate(components: &[(MechanismSpec, u64)], radius: f64) -> BoundReport {
    if !components.is_empty() && components.iter().all(|(spec, _)| is_gaussian(spec)) {
        let mean = components
            .iter()
            .map(|(spec, count)| *count as f64 / (2.0 * spec.sigma * spec.sigma))
            .sum();
        return BoundReport::new(gaussian_chernoff_tail(mean, radius), Vec::new());
    }
    let lambda = radius / 2.0;
    let mut exponent = -lambda * radius;
    let mut violations = Vec::new();
    for (spec, count) in components {
        if spec.scheme() != Scheme::PoissonRemoveAdd {
            violations.push(format!("moment bound derived for Poisson subsampling, not {}", spec.scheme()));
        }
        if is_gaussian(spec) {
            exponent += *count as f64 * lambda * (lambda + 1.0) / (2.0 * spec.sigma * spec.sigma);
            continue;
        }
        let alpha = alpha_bound(spec.sigma, spec.q(), lambda);
        exponent += *count as f64 * alpha.value;
        for v in alpha.violations {
            if !violations.contains(&v) {
                violations.push(v);
            }
        }
    }
    BoundReport::new(exponent.exp(), violations)
}

fn analytic_c(q: f64, lambda: f64) -> f64 {
    (1.0 / (q * (lambda - 1.0))).ln_1p()
}

/// Preconditions of the rigorous tail bound that fail at `lambda`.
pub fn analytic_violations(sigma: f64, q: f64, lambda: f64) -> Vec<String> {
    let mut violations = Vec::new();
    if q > 0.2 {
        violations.push(format!("q = {q} > 1/5"));
    }
    if sigma < 4.0 {
        violations.push(format!("sigma = {sigma} < 4"));
    }
    if lambda <= 1.0 {
        violations.push(format!("lambda = {lambda} <= 1"));
        return violations;
    }
    let c = analytic_c(q, lambda);
    let var = sigma * sigma;
    let first = 0.5 * var * c - 2.0 * sigma.ln();
    if lambda > first {
        violations.push(format!("lambda = {lambda} > sigma^2 c / 2 - 2 log sigma = {first}"));
    }
    let numer = 0.5 * var * c - 5f64.ln() - 2.0 * sigma.ln();
    let denom = c + (q * lambda).ln() + 1.0 / (2.0 * var);
    if denom <= 0.0 || lambda > numer / denom {
        violations.push(format!(
            "lambda = {lambda} > (sigma^2 c / 2 - log 5 - 2 log sigma) / (c + log(q lambda) + 1/(2 sigma^2)) = {}",
            numer / denom
        ));
    }
    violations
}

/// Rigorous tail bound `(1 + 2 q^2 (L/2 + 1)(L/2) / sigma^2)^k e^{-L^2/2}`.
///
/// The value is always computed; `valid` is set only when every
/// precondition holds at `lambda = L/2`.
pub fn analytic_tail_bound(sigma: f64, q: f64, k: u64, radius: f64) -> BoundReport {
    let lambda = radius / 2.0;
    let base = 2.0 * q * q * (lambda + 1.0) * lambda / (sigma * sigma);
    let value = (k as f64 * base.ln_1p() - radius * radius / 2.0).exp();
    BoundReport::new(value, analytic_violations(sigma, q, lambda))
}

/// Largest `lambda` up to which the analytic bound's preconditions hold
/// continuously from `lambda = 1`, or `None` if the `q`/`sigma` gate fails.
pub fn analytic_lambda_max(sigma: f64, q: f64) -> Option<f64> {
    const STEP: f64 = 1e-3;
    const LIMIT: f64 = 1e4;
    let ok = |lambda: f64| analytic_violations(sigma, q, lambda).is_empty();
    let mut good = 1.0 + STEP;
    if !ok(good) {
        return None;
    }
    let mut bad = good + STEP;
    while ok(bad) {
        good = bad;
        bad += STEP;
        if bad > LIMIT {
            return Some(f64::INFINITY);
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (good + bad);
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Periodisation and truncation bound with its individual terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodisationBound {
    pub report: BoundReport,
    /// `L k sigma e^{-(sigma^2 L + C)^2 / (2 sigma^2)}`.
    pub truncation_term: f64,
    /// `e^{alpha(L/2)} e^{-L^2/2}`.
    pub single_tail_term: f64,
    /// `2 sum_{j >= 1} e^{k alpha(jL)} e^{-2 (jL)^2}`.
    pub wrap_series: f64,
    /// Number of series terms evaluated.
    pub series_terms: usize,
}

const SERIES_CUTOFF: f64 = 1e-300;
const SERIES_MAX_TERMS: usize = 64;

/// Bound on the error from truncating and periodising the convolutions,
/// for Poisson subsampling with `0 < q < 1/2`, `L >= 1`:
///
/// ```text
/// L k sigma e^{-(sigma^2 L + C)^2/(2 sigma^2)} + e^{alpha(L/2)} e^{-L^2/2}
///     + 2 sum_{j>=1} e^{k alpha(jL)} e^{-2 (jL)^2},     C = sigma^2 log(1/(2q)) - 1/2
/// ```
///
/// `alpha` supplies the moment bound; its validity flags propagate. The
/// series stops at the first term below `1e-300` or after 64 terms; if it
/// has not started to decay by then the value is infinite.
pub fn periodisation_bound(
    sigma: f64,
    q: f64,
    k: u64,
    radius: f64,
    alpha: &dyn Fn(f64) -> BoundReport,
) -> PeriodisationBound {
    let mut violations = Vec::new();
    if !(q > 0.0 && q < 0.5) {
        violations.push(format!("q = {q} outside (0, 1/2)"));
    }
    if radius < 1.0 {
        violations.push(format!("L = {radius} < 1"));
    }
    let mut absorb = |report: BoundReport| {
        for v in report.violations {
            if !violations.contains(&v) {
                violations.push(v);
            }
        }
        report.value
    };

    let var = sigma * sigma;
    let offset = var * (1.0 / (2.0 * q)).ln() - 0.5;
    let shifted = var * radius + offset;
    let truncation_term = radius * k as f64 * sigma * (-shifted * shifted / (2.0 * var)).exp();

    let alpha_half = absorb(alpha(radius / 2.0));
    let single_tail_term = (alpha_half - radius * radius / 2.0).exp();

    let kf = k as f64;
    let mut wrap_series = 0.0;
    let mut series_terms = 0;
    let mut last_log = f64::INFINITY;
    let mut decayed = false;
    for j in 1..=SERIES_MAX_TERMS {
        let shift = j as f64 * radius;
        let log_term = kf * absorb(alpha(shift)) - 2.0 * shift * shift;
        series_terms = j;
        let term = log_term.exp();
        wrap_series += term;
        if term < SERIES_CUTOFF {
            decayed = true;
            break;
        }
        if log_term < last_log {
            decayed = true;
        }
        last_log = log_term;
    }
    if !decayed {
        wrap_series = f64::INFINITY;
    }
    wrap_series *= 2.0;

    PeriodisationBound {
        report: BoundReport::new(truncation_term + single_tail_term + wrap_series, violations),
        truncation_term,
        single_tail_term,
        wrap_series,
        series_terms,
    }
}

/// `2 |I_n - I_{2n}|`, the first-order estimate of the discretisation error.
pub fn richardson_estimate(coarse: f64, fine: f64) -> f64 {
    2.0 * (coarse - fine).abs()
}

/// Runs the pipeline at `grid` and at twice its resolution and returns
/// `2 |I_n - I_{2n}|` for the `delta(epsilon)` sum.
pub fn discretization_estimate(
    components: &[(MechanismSpec, u64)],
    grid: Grid,
    epsilon: f64,
) -> Result<f64> {
    let coarse = delta_from_convolved(&compose(components, grid)?, epsilon)?.value;
    let fine = delta_from_convolved(&compose(components, grid.refined())?, epsilon)?.value;
    Ok(richardson_estimate(coarse, fine))
}
