//! Slow reference computations that share no code with the fast paths.
//!
//! * [`direct_convolution_delta`]: `delta(epsilon)` with the composed PLD
//!   formed by explicit periodic summation instead of transforms.
//! * [`gaussian_mechanism_delta`]: the closed form for the non-subsampled
//!   Gaussian mechanism, on top of a standalone `erfc`.
//! * [`bisection_epsilon`]: inversion of `delta(epsilon)` by plain bisection.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::accountant::compose;
use crate::discretization::{discretize, DiscretePld, Grid};
use crate::error::{invalid, AccountantError, Result};
use crate::mechanisms::{MechanismSpec, PldDensity};
use crate::spectral::ConvolvedPld;

/// Size limits for the quadratic-time oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub max_points: usize,
    pub max_factors: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_points: 8192,
            max_factors: 3,
        }
    }
}

/// Periodic convolution on the lattice `x_i = -L + i dx`:
/// `out_i = dx * sum_j a_j b_m` over all `j, m` with `x_j + x_m = x_i (mod 2L)`.
///
/// Only indices in `range` are computed; the rest are left at zero.
pub fn direct_periodic_convolution(
    a: &[f64],
    b: &[f64],
    dx: f64,
    range: std::ops::Range<usize>,
) -> Vec<f64> {
    let n = a.len();
    assert_eq!(n, b.len());
    assert!(n % 2 == 0);
    let half = n / 2;
    // x_j + x_m = -2L + (j + m) dx, which equals x_i when m = i - j + n/2 (mod n).
    // Reversing b turns the inner sum into two contiguous dot products.
    let rev: Vec<f64> = b.iter().rev().copied().collect();
    let mut out = vec![0.0; n];
    for i in range {
        let shift = (i + half) % n;
        // b[(shift - j) mod n] = rev[n - 1 - ((shift - j) mod n)]
        // j in 0..=shift       -> rev[n - 1 - shift + j]
        // j in shift+1..n      -> rev[j - shift - 1]
        let first = dot(&a[..=shift], &rev[n - 1 - shift..]);
        let second = dot(&a[shift + 1..], &rev[..n - 1 - shift]);
        out[i] = dx * (first + second);
    }
    out
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = x.len() / 8;
    for c in 0..chunks {
        let xs = &x[8 * c..8 * c + 8];
        let ys = &y[8 * c..8 * c + 8];
        for l in 0..8 {
            acc[l] += xs[l] * ys[l];
        }
    }
    let mut tail = 0.0;
    for j in 8 * chunks..x.len() {
        tail += x[j] * y[j];
    }
    acc.iter().sum::<f64>() + tail
}

/// `dx * sum_{x_l > eps} (1 - e^{eps - x_l}) c_l`, written out independently.
pub fn riemann_delta(values: &[f64], grid: Grid, epsilon: f64) -> f64 {
    let mut total = 0.0;
    for (l, &c) in values.iter().enumerate() {
        let x = -grid.radius() + l as f64 * grid.dx();
        if x > epsilon {
            total += (1.0 - (epsilon - x).exp()) * c;
        }
    }
    grid.dx() * total
}

/// Composed density of up to [`OracleConfig::max_factors`] PLDs by direct summation.
pub fn direct_composition(plds: &[&DiscretePld], config: OracleConfig) -> Result<Vec<f64>> {
    let first = plds.first().ok_or_else(|| invalid("oracle needs at least one PLD"))?;
    let grid = first.grid;
    if grid.len() > config.max_points {
        return Err(AccountantError::OracleTooLarge(format!(
            "n = {} exceeds {}",
            grid.len(),
            config.max_points
        )));
    }
    if plds.len() as u64 > config.max_factors {
        return Err(AccountantError::OracleTooLarge(format!(
            "{} factors exceed {}",
            plds.len(),
            config.max_factors
        )));
    }
    if plds.iter().any(|p| p.grid != grid) {
        return Err(invalid("oracle PLDs must share one grid"));
    }
    let mut acc = first.values.clone();
    for pld in &plds[1..] {
        acc = direct_periodic_convolution(&acc, &pld.values, grid.dx(), 0..grid.len());
    }
    Ok(acc)
}

/// `delta(epsilon)` of `k` repetitions of `spec` with the convolution done by
/// direct O(n^2) summation.
pub fn direct_convolution_delta(
    spec: MechanismSpec,
    k: u64,
    grid: Grid,
    epsilon: f64,
) -> Result<f64> {
    let config = OracleConfig::default();
    if k == 0 || k > config.max_factors {
        return Err(AccountantError::OracleTooLarge(format!(
            "k = {k} outside 1..={}",
            config.max_factors
        )));
    }
    let pld = discretize(&PldDensity::new(spec)?, grid)?;
    let refs: Vec<&DiscretePld> = (0..k).map(|_| &pld).collect();
    let composed = direct_composition(&refs, config)?;
    Ok(riemann_delta(&composed, grid, epsilon))
}

/// Complementary error function.
///
/// Power series of `erf` (all terms positive) for `|x| < 2`, Lentz's
/// continued fraction beyond; absolute accuracy around `1e-16`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        // erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (1 3 5 ... (2n+1))
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-17 * sum {
            n += 1.0;
            term *= 2.0 * x2 / (2.0 * n + 1.0);
            sum += term;
        }
        return 1.0 - 2.0 / PI.sqrt() * (-x2).exp() * sum;
    }
    // erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for j in 1..500 {
        let a = j as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Tight `delta(epsilon)` of `k` compositions of the Gaussian mechanism
/// with noise `sigma` and sensitivity 1:
/// `Phi(-eps sigma/sqrt(k) + sqrt(k)/(2 sigma)) - e^eps Phi(-eps sigma/sqrt(k) - sqrt(k)/(2 sigma))`.
pub fn gaussian_mechanism_delta(sigma: f64, k: u64, epsilon: f64) -> f64 {
    if sigma.is_infinite() {
        return 0.0;
    }
    let root_k = (k as f64).sqrt();
    let a = -epsilon * sigma / root_k;
    let b = root_k / (2.0 * sigma);
    (normal_cdf(a + b) - epsilon.exp() * normal_cdf(a - b)).max(0.0)
}

pub const BISECTION_TOLERANCE: f64 = 1e-9;
pub const BISECTION_WIDTH: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

/// `epsilon` with `|delta(epsilon) - target| <= 1e-9` by bisection over `[0, L)`.
///
/// Bisection continues until the bracket is also narrower than
/// [`BISECTION_WIDTH`], so small targets still pin down `epsilon`.
pub fn bisect_epsilon(conv: &ConvolvedPld, target: f64) -> Result<f64> {
    let grid = conv.grid;
    let at = |eps: f64| -> Result<f64> { Ok(riemann_delta(&conv.values, grid, eps)) };
    let d0 = at(0.0)?;
    if (d0 - target).abs() <= BISECTION_TOLERANCE {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = grid.radius() - grid.dx();
    if !(d0 > target && at(hi)? < target) {
        return Err(invalid(format!(
            "bisection bracket [0, {hi}] does not contain delta = {target}"
        )));
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let d = at(mid)?;
        if (d - target).abs() <= BISECTION_TOLERANCE && (hi - lo <= BISECTION_WIDTH || d == target) {
            return Ok(mid);
        }
        if d > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(AccountantError::NonConvergence {
        solver: "bisection oracle",
        iterations: BISECTION_MAX_ITER,
        residual: (at(0.5 * (lo + hi))? - target).abs(),
    })
}

/// [`bisect_epsilon`] for `k` repetitions of `spec`.
pub fn bisection_epsilon(spec: MechanismSpec, k: u64, grid: Grid, target: f64) -> Result<f64> {
    bisect_epsilon(&compose(&[(spec, k)], grid)?, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::{delta_from_convolved, delta_of_epsilon};
    use crate::mechanisms::Direction;

    #[test]
    fn erfc_reference_values() {
        // Reference values from 40-digit arithmetic.
        let cases = [
            (0.0, 1.0),
            (0.5, 0.47950012218695346),
            (1.0, 0.15729920705028513),
            (2.0, 0.0046777349810472658),
            (2.4999, 0.00040716990033345138),
            (2.5, 0.00040695201744495894),
            (3.0, 2.2090496998585441e-5),
            (5.0, 1.5374597944280349e-12),
            (10.0, 2.0884875837625448e-45),
            (-1.0, 1.8427007929497149),
        ];
        for (x, want) in cases {
            let got = erfc(x);
            assert!(
                (got - want).abs() <= 1e-15 * want.max(1e-300) + 2e-16,
                "erfc({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn gaussian_delta_at_zero_epsilon() {
        let d = gaussian_mechanism_delta(1.0, 1, 0.0);
        assert!((d - 0.38292492254802621).abs() < 1e-14, "{d}");
    }

    #[test]
    fn infinite_noise_leaks_nothing() {
        assert_eq!(gaussian_mechanism_delta(f64::INFINITY, 1, 1.0), 0.0);
        assert!(gaussian_mechanism_delta(1e6, 1, 1.0) < 1e-300);
    }

    #[test]
    fn single_factor_oracle_matches_pipeline() {
        let spec = MechanismSpec::poisson(1.5, 0.01);
        let grid = Grid::new(12.0, 4096).unwrap();
        let oracle = direct_convolution_delta(spec, 1, grid, 1.0).unwrap();
        let fast = delta_of_epsilon(spec, 1, grid, 1.0).unwrap().value;
        assert!((oracle - fast).abs() < 1e-14, "{oracle} vs {fast}");
    }

    #[test]
    fn symmetric_density_is_direction_invariant() {
        let grid = Grid::new(12.0, 2048).unwrap();
        let a = direct_convolution_delta(MechanismSpec::without_replacement(2.0, 0.1), 2, grid, 0.5).unwrap();
        let b = direct_convolution_delta(
            MechanismSpec::without_replacement(2.0, 0.1).with_direction(Direction::YOverX),
            2,
            grid,
            0.5,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_guards() {
        let spec = MechanismSpec::poisson(1.5, 0.01);
        let big = Grid::new(12.0, 16384).unwrap();
        assert!(matches!(
            direct_convolution_delta(spec, 2, big, 1.0),
            Err(AccountantError::OracleTooLarge(_))
        ));
        let small = Grid::new(12.0, 1024).unwrap();
        assert!(direct_convolution_delta(spec, 4, small, 1.0).is_err());
        assert!(direct_convolution_delta(spec, 0, small, 1.0).is_err());
    }

    #[test]
    fn periodic_convolution_of_impulses_adds_coordinates() {
        // Impulses at x = -1 and x = 2 on L = 4, n = 8 land at x = 1.
        let grid = Grid::new(4.0, 8).unwrap();
        let mut a = vec![0.0; 8];
        let mut b = vec![0.0; 8];
        a[3] = 1.0;
        b[6] = 1.0;
        let out = direct_periodic_convolution(&a, &b, grid.dx(), 0..8);
        let hit: Vec<usize> = (0..8).filter(|&i| out[i] != 0.0).collect();
        assert_eq!(hit, vec![5]);
        assert_eq!(grid.point(5), 1.0);
        // Wrap-around: x = 3 and x = 3 meet at x = 6 - 8 = -2.
        let mut c = vec![0.0; 8];
        c[7] = 1.0;
        let wrapped = direct_periodic_convolution(&c, &c, grid.dx(), 0..8);
        assert_eq!(wrapped[2], 1.0);
    }

    #[test]
    fn bisection_recovers_epsilon() {
        let spec = MechanismSpec::poisson(1.5, 0.01);
        let grid = Grid::new(6.0, 1 << 16).unwrap();
        let conv = compose(&[(spec, 2000)], grid).unwrap();
        let target = delta_from_convolved(&conv, 0.5).unwrap().value;
        let eps = bisect_epsilon(&conv, target).unwrap();
        assert!((eps - 0.5).abs() < 1e-6, "{eps}");
        let d0 = delta_from_convolved(&conv, 0.0).unwrap().value;
        assert_eq!(bisect_epsilon(&conv, d0).unwrap(), 0.0);
    }
}
