//! Privacy loss functions and PLD densities of the subsampled Gaussian mechanism.
//!
//! Every mechanism is reduced to a pair of one-dimensional output densities
//! `f_X`, `f_Y` (Gaussian mixtures with noise scale `sigma`, sensitivity 1).
//! The privacy loss function `L(t) = log(f_X(t) / f_Y(t))` is strictly
//! increasing, and the privacy loss distribution (PLD) is the law of `L(t)`
//! for `t ~ f_X`, with density
//!
//! ```text
//! omega(s) = f_X(L^{-1}(s)) * d/ds L^{-1}(s).
//! ```
//!
//! The `Y/X` direction swaps the roles of the two densities. Its loss is
//! written in the reflected output coordinate `u = -t`, so that it is also
//! increasing; this does not change the PLD.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{invalid, AccountantError, Result};

/// Which way the privacy loss ratio is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `log(f_X / f_Y)` with `t ~ f_X`.
    XOverY,
    /// `log(f_Y / f_X)` with `t ~ f_Y`.
    YOverX,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::XOverY, Direction::YOverX];

    pub fn name(self) -> &'static str {
        match self {
            Direction::XOverY => "x_over_y",
            Direction::YOverX => "y_over_x",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subsampling scheme tag, without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Poisson subsampling, add/remove neighbours.
    PoissonRemoveAdd,
    /// Fixed batch drawn without replacement, substitute neighbours.
    WithoutReplacementSubstitute,
    /// Fixed batch drawn with replacement, substitute neighbours.
    WithReplacementSubstitute,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::PoissonRemoveAdd => "poisson",
            Scheme::WithoutReplacementSubstitute => "without_replacement",
            Scheme::WithReplacementSubstitute => "with_replacement",
        }
    }

    /// Substitute-relation schemes have an odd loss function, so both
    /// directions give the same PLD.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Scheme::PoissonRemoveAdd)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subsampling scheme together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Sampling {
    Poisson {
        q: f64,
    },
    WithoutReplacement {
        q: f64,
    },
    WithReplacement {
        batch_size: u64,
        dataset_size: u64,
    },
}

/// One invocation of a subsampled Gaussian mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub sigma: f64,
    pub sampling: Sampling,
    pub direction: Direction,
}

impl MechanismSpec {
    pub fn poisson(sigma: f64, q: f64) -> Self {
        Self {
            sigma,
            sampling: Sampling::Poisson { q },
            direction: Direction::XOverY,
        }
    }

    pub fn without_replacement(sigma: f64, q: f64) -> Self {
        Self {
            sigma,
            sampling: Sampling::WithoutReplacement { q },
            direction: Direction::XOverY,
        }
    }

    pub fn with_replacement(sigma: f64, batch_size: u64, dataset_size: u64) -> Self {
        Self {
            sigma,
            sampling: Sampling::WithReplacement {
                batch_size,
                dataset_size,
            },
            direction: Direction::XOverY,
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn scheme(&self) -> Scheme {
        match self.sampling {
            Sampling::Poisson { .. } => Scheme::PoissonRemoveAdd,
            Sampling::WithoutReplacement { .. } => Scheme::WithoutReplacementSubstitute,
            Sampling::WithReplacement { .. } => Scheme::WithReplacementSubstitute,
        }
    }

    /// Probability that the differing record takes part in a batch.
    ///
    /// For sampling with replacement this is the per-draw probability `1 / n_data`.
    pub fn q(&self) -> f64 {
        match self.sampling {
            Sampling::Poisson { q } | Sampling::WithoutReplacement { q } => q,
            Sampling::WithReplacement { dataset_size, .. } => 1.0 / dataset_size as f64,
        }
    }

    /// `q = 1` is accepted: it is the plain (non-subsampled) Gaussian mechanism.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        match self.sampling {
            Sampling::Poisson { q } | Sampling::WithoutReplacement { q } => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(invalid(format!("q must lie in (0, 1], got {q}")));
                }
            }
            Sampling::WithReplacement {
                batch_size,
                dataset_size,
            } => {
                if batch_size == 0 || batch_size > dataset_size {
                    return Err(invalid(format!(
                        "need 1 <= batch_size <= dataset_size, got {batch_size} and {dataset_size}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Evaluator for the privacy loss function and the PLD density of one mechanism.
///
/// Immutable after construction; safe to share between threads.
#[derive(Debug, Clone)]
pub struct PldDensity {
    spec: MechanismSpec,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Poisson(Mixture),
    WithoutReplacement(Mixture),
    WithReplacement(Binomial),
}

/// Two-point mixture `q N(1, sigma^2) + (1 - q) N(0, sigma^2)`.
#[derive(Debug, Clone, Copy)]
struct Mixture {
    sigma: f64,
    q: f64,
    ln_q: f64,
    ln_1mq: f64,
}

/// Binomial mixture `sum_l b_l N(l, sigma^2)` with `l ~ Binomial(m, 1/n_data)`.
#[derive(Debug, Clone)]
struct Binomial {
    sigma: f64,
    /// `ln c_l = ln C(m, l) + l ln p + (m - l) ln(1 - p) - l^2 / (2 sigma^2)`.
    ln_c: Vec<f64>,
    /// Without-replacement closed form at `q = 1/n_data`, used to seed the root finder.
    seed: Mixture,
}

const ROOT_MAX_ITER: usize = 100;
const ROOT_TOL: f64 = 1e-13;

impl PldDensity {
    pub fn new(spec: MechanismSpec) -> Result<Self> {
        spec.validate()?;
        let kind = match spec.sampling {
            Sampling::Poisson { q } => Kind::Poisson(Mixture::new(spec.sigma, q)),
            Sampling::WithoutReplacement { q } => {
                Kind::WithoutReplacement(Mixture::new(spec.sigma, q))
            }
            Sampling::WithReplacement {
                batch_size,
                dataset_size,
            } => Kind::WithReplacement(Binomial::new(spec.sigma, batch_size, dataset_size)),
        };
        Ok(Self { spec, kind })
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    /// Open interval `(lo, hi)` outside of which the density vanishes.
    pub fn support(&self) -> (f64, f64) {
        match (&self.kind, self.spec.direction) {
            (Kind::Poisson(mix), Direction::XOverY) => (mix.ln_1mq, f64::INFINITY),
            (Kind::Poisson(mix), Direction::YOverX) => (f64::NEG_INFINITY, -mix.ln_1mq),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Lower end of the support (`log(1 - q)` for Poisson `X/Y`, `-inf` otherwise).
    pub fn support_lo(&self) -> f64 {
        self.support().0
    }

    /// The privacy loss function at output `t`.
    pub fn loss(&self, t: f64) -> f64 {
        match (&self.kind, self.spec.direction) {
            (Kind::Poisson(mix), Direction::XOverY) => mix.ln_ratio_shifted(t),
            (Kind::Poisson(mix), Direction::YOverX) => -mix.ln_ratio_shifted(-t),
            (Kind::WithoutReplacement(mix), _) => mix.substitute_loss(t),
            (Kind::WithReplacement(bin), _) => bin.loss(t),
        }
    }

    /// Derivative of [`Self::loss`] with respect to `t`.
    pub fn loss_derivative(&self, t: f64) -> f64 {
        match (&self.kind, self.spec.direction) {
            (Kind::Poisson(mix), Direction::XOverY) => mix.ln_ratio_shifted_derivative(t),
            (Kind::Poisson(mix), Direction::YOverX) => mix.ln_ratio_shifted_derivative(-t),
            (Kind::WithoutReplacement(mix), _) => mix.substitute_loss_derivative(t),
            (Kind::WithReplacement(bin), _) => bin.loss_and_derivative(t).1,
        }
    }

    /// `L^{-1}(s)`: the output `t` at which the loss equals `s`.
    pub fn loss_inverse(&self, s: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(s > lo && s < hi) {
            return Err(AccountantError::OutsideSupport { s, lo, hi });
        }
        Ok(match (&self.kind, self.spec.direction) {
            (Kind::Poisson(mix), Direction::XOverY) => mix.poisson_inverse(s),
            (Kind::Poisson(mix), Direction::YOverX) => -mix.poisson_inverse(-s),
            (Kind::WithoutReplacement(mix), _) => mix.substitute_inverse(s),
            (Kind::WithReplacement(bin), _) => bin.inverse(s)?,
        })
    }

    /// PLD density `omega(s)`; exactly zero outside the support.
    ///
    /// Only sampling with replacement can fail, when its root finder does
    /// not converge.
    pub fn density(&self, s: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(s > lo && s < hi) {
            return Ok(0.0);
        }
        Ok(match (&self.kind, self.spec.direction) {
            (Kind::Poisson(mix), Direction::XOverY) => mix.poisson_density_xy(s),
            (Kind::Poisson(mix), Direction::YOverX) => mix.poisson_density_yx(s),
            (Kind::WithoutReplacement(mix), _) => mix.substitute_density(s),
            (Kind::WithReplacement(bin), _) => bin.density(s)?,
        })
    }
}

fn gaussian_pdf(t: f64, mean: f64, sigma: f64) -> f64 {
    let z = t - mean;
    (-z * z / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Mixture {
    fn new(sigma: f64, q: f64) -> Self {
        Self {
            sigma,
            q,
            ln_q: q.ln(),
            ln_1mq: (-q).ln_1p(),
        }
    }

    fn var(&self) -> f64 {
        self.sigma * self.sigma
    }

    fn f_x(&self, t: f64) -> f64 {
        self.q * gaussian_pdf(t, 1.0, self.sigma) + (1.0 - self.q) * gaussian_pdf(t, 0.0, self.sigma)
    }

    /// `log(q e^{(2t-1)/(2 sigma^2)} + 1 - q)`, evaluated as a log-sum-exp so
    /// the `1 - q` branch does not lose the small exponential near the support edge.
    fn ln_ratio_shifted(&self, t: f64) -> f64 {
        log_add_exp(self.ln_q + (2.0 * t - 1.0) / (2.0 * self.var()), self.ln_1mq)
    }

    fn ln_ratio_shifted_derivative(&self, t: f64) -> f64 {
        let a = self.ln_q + (2.0 * t - 1.0) / (2.0 * self.var()) - self.ln_1mq;
        sigmoid(a) / self.var()
    }

    /// `sigma^2 log((e^s - (1 - q)) / q) + 1/2`; `e^s - (1 - q)` is formed as
    /// `expm1(s) + q`.
    fn poisson_inverse(&self, s: f64) -> f64 {
        self.var() * ((s.exp_m1() + self.q) / self.q).ln() + 0.5
    }

    fn poisson_inverse_derivative(&self, s: f64) -> f64 {
        self.var() * s.exp() / (s.exp_m1() + self.q)
    }

    fn poisson_density_xy(&self, s: f64) -> f64 {
        let gap = s.exp_m1() + self.q;
        if gap <= 0.0 {
            return 0.0;
        }
        let t = self.poisson_inverse(s);
        let value = self.f_x(t) * self.poisson_inverse_derivative(s);
        if value.is_finite() {
            value
        } else {
            0.0
        }
    }

    /// `t ~ f_Y = N(0, sigma^2)` and `L_{Y/X}(t) = -L_{X/Y}(t)`, so the output
    /// hitting loss `s` is `L_{X/Y}^{-1}(-s)`.
    fn poisson_density_yx(&self, s: f64) -> f64 {
        let r = -s;
        let gap = r.exp_m1() + self.q;
        if gap <= 0.0 {
            return 0.0;
        }
        let t = self.poisson_inverse(r);
        let value = gaussian_pdf(t, 0.0, self.sigma) * self.poisson_inverse_derivative(r);
        if value.is_finite() {
            value
        } else {
            0.0
        }
    }

    fn substitute_loss(&self, t: f64) -> f64 {
        self.ln_ratio_shifted(t) - self.ln_ratio_shifted(-t)
    }

    fn substitute_loss_derivative(&self, t: f64) -> f64 {
        self.ln_ratio_shifted_derivative(t) + self.ln_ratio_shifted_derivative(-t)
    }

    /// Positive root `x = e^{t / sigma^2}` of `c x^2 + (1-q)(1-e^s) x - c e^s = 0`
    /// with `c = q e^{-1/(2 sigma^2)}`.
    fn substitute_inverse(&self, s: f64) -> f64 {
        let c = self.q * (-1.0 / (2.0 * self.var())).exp();
        let y = s.exp();
        let a = -(1.0 - self.q) * s.exp_m1();
        let d = (a * a + 4.0 * c * c * y).sqrt();
        // For s < 0 the textbook numerator -a + d cancels; use the conjugate form.
        let x = if a > 0.0 {
            2.0 * c * y / (a + d)
        } else {
            (d - a) / (2.0 * c)
        };
        self.var() * x.ln()
    }

    fn substitute_density(&self, s: f64) -> f64 {
        let t = self.substitute_inverse(s);
        let value = self.f_x(t) / self.substitute_loss_derivative(t);
        if value.is_finite() {
            value
        } else {
            0.0
        }
    }
}

impl Binomial {
    fn new(sigma: f64, m: u64, n_data: u64) -> Self {
        let p = 1.0 / n_data as f64;
        let ln_p = p.ln();
        let ln_1mp = (-p).ln_1p();
        let var = sigma * sigma;
        let mut ln_binom = 0.0;
        let ln_c = (0..=m)
            .map(|l| {
                if l > 0 {
                    ln_binom += ((m - l + 1) as f64).ln() - (l as f64).ln();
                }
                let lf = l as f64;
                // (m - l) ln(1 - p) with the convention 0 * (-inf) = 0 at p = 1.
                let rest = if l == m { 0.0 } else { (m - l) as f64 * ln_1mp };
                ln_binom + lf * ln_p + rest - lf * lf / (2.0 * var)
            })
            .collect();
        Self {
            sigma,
            ln_c,
            seed: Mixture::new(sigma, p),
        }
    }

    fn var(&self) -> f64 {
        self.sigma * self.sigma
    }

    fn exponents(&self, t: f64, sign: f64) -> impl Iterator<Item = f64> + Clone + '_ {
        let slope = sign * t / self.var();
        self.ln_c
            .iter()
            .enumerate()
            .map(move |(l, &lc)| lc + l as f64 * slope)
    }

    fn loss(&self, t: f64) -> f64 {
        log_sum_exp(self.exponents(t, 1.0)) - log_sum_exp(self.exponents(t, -1.0))
    }

    /// Loss and its derivative; the derivative is `(E_+[l] + E_-[l]) / sigma^2`
    /// where `E_±` are means of `l` under weights `c_l x^{±l}`.
    fn loss_and_derivative(&self, t: f64) -> (f64, f64) {
        let side = |sign: f64| {
            let lse = log_sum_exp(self.exponents(t, sign));
            let mean: f64 = self
                .exponents(t, sign)
                .enumerate()
                .map(|(l, e)| l as f64 * (e - lse).exp())
                .sum();
            (lse, mean)
        };
        let (num, mean_plus) = side(1.0);
        let (den, mean_minus) = side(-1.0);
        (num - den, (mean_plus + mean_minus) / self.var())
    }

    /// Solves `L(t) = s` by Newton's method kept inside a bisection bracket.
    fn inverse(&self, s: f64) -> Result<f64> {
        let mut t = self.seed.substitute_inverse(s);
        if !t.is_finite() {
            t = 0.0;
        }
        let (mut value, mut slope) = self.loss_and_derivative(t);
        if (value - s).abs() <= ROOT_TOL {
            return Ok(t);
        }

        // Grow a bracket [lo, hi] with L(lo) < s < L(hi) around the seed.
        let mut step = t.abs().max(1.0);
        let (mut lo, mut hi);
        if value < s {
            lo = t;
            hi = t + step;
            while self.loss(hi) < s {
                lo = hi;
                step *= 2.0;
                hi += step;
            }
        } else {
            hi = t;
            lo = t - step;
            while self.loss(lo) > s {
                hi = lo;
                step *= 2.0;
                lo -= step;
            }
        }

        for _ in 0..ROOT_MAX_ITER {
            let residual = value - s;
            if residual.abs() <= ROOT_TOL {
                return Ok(t);
            }
            if residual < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - residual / slope;
            let next = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == t || hi - lo <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                // Bracket collapsed to machine resolution.
                return Ok(t);
            }
            t = next;
            (value, slope) = self.loss_and_derivative(t);
        }
        Err(AccountantError::NonConvergence {
            solver: "with-replacement loss inverse",
            iterations: ROOT_MAX_ITER,
            residual: (value - s).abs(),
        })
    }

    /// `f_X(t) = mu_0(t) * sum_l c_l x^l`.
    fn ln_f_x(&self, t: f64) -> f64 {
        let var = self.var();
        -t * t / (2.0 * var) - 0.5 * (2.0 * PI * var).ln() + log_sum_exp(self.exponents(t, 1.0))
    }

    fn density(&self, s: f64) -> Result<f64> {
        let t = self.inverse(s)?;
        let (_, slope) = self.loss_and_derivative(t);
        let value = self.ln_f_x(t).exp() / slope;
        Ok(if value.is_finite() { value } else { 0.0 })
    }
}
