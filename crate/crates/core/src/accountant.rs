//! `delta(epsilon)` and `epsilon(delta)` for compositions of mechanisms.
//!
//! With `C` the discrete composed PLD on the lattice `x_l = -L + l dx`,
//!
//! ```text
//! delta(eps)  ~  dx * sum_{l >= l_eps} (1 - e^{eps - x_l}) C_l,   l_eps = min { l : x_l > eps }
//! delta'(eps) ~ -dx * sum_{l >= l_eps} e^{eps - x_l} C_l
//! ```
//!
//! `epsilon(delta)` inverts the first sum by Newton's method started at
//! `eps = 0`, safeguarded by a bisection bracket.

use serde::{Deserialize, Serialize};

use crate::discretization::{discretize, Grid};
use crate::error::{invalid, AccountantError, Result};
use crate::error_bounds::{
    analytic_tail_bound, composite_tail_estimate, discretization_estimate, BoundReport,
};
use crate::mechanisms::{Direction, MechanismSpec, PldDensity, Scheme};
use crate::spectral::{convolve_powers, ConvolvedPld};

/// Newton stopping tolerance `|delta(eps) - target| <= tau` used by default.
pub const DEFAULT_NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Derivatives smaller than this in magnitude trigger a bisection step.
pub const DERIVATIVE_FLOOR: f64 = 1e-300;

/// Once the residual is within tolerance, Newton keeps iterating until its
/// step in `epsilon` drops below this. For small targets an absolute residual
/// of `tau` leaves `epsilon` loosely determined.
pub const EPSILON_STEP_TOLERANCE: f64 = 1e-9;

pub const WARN_EMPTY_SUM: &str = "epsilon exceeds truncation radius";

/// Composed PLDs whose Riemann mass is further than this from 1 get a warning.
pub const MASS_WARNING_THRESHOLD: f64 = 1e-6;

/// What the query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Epsilon(f64),
    Delta(f64),
}

/// Which loss directions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Use the direction stored in each spec.
    AsSpecified,
    /// Evaluate `X/Y` and `Y/X` and report the larger privacy cost.
    Both,
}

/// Value of the `delta(epsilon)` Riemann sum on one composed PLD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSum {
    pub value: f64,
    /// First summed lattice index `l_eps` (`n` when the sum is empty).
    pub ell_eps: usize,
    pub empty: bool,
}

/// Outcome of the Newton inversion on one composed PLD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome {
    pub epsilon: f64,
    pub delta: f64,
    pub iterations: usize,
    pub bisection_steps: usize,
    pub ell_eps: usize,
}

/// A full accounting query.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionQuery {
    /// Mechanisms with their repetition counts.
    pub components: Vec<(MechanismSpec, u64)>,
    pub grid: Grid,
    pub target: Target,
    pub newton_tolerance: f64,
    pub directions: DirectionMode,
    /// Also run the pipeline at `2n` points for the discretisation estimate.
    pub with_discretization_estimate: bool,
}

/// Result of a query; `value` is `delta` or `epsilon` depending on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaResult {
    pub value: f64,
    pub kind: &'static str,
    /// `l_eps` of the direction that produced `value`.
    pub ell_eps: usize,
    /// Value per evaluated direction.
    pub per_direction: Vec<(Direction, f64)>,
    pub tail_estimate: BoundReport,
    /// Rigorous tail bound; only for pure Poisson compositions.
    pub analytic_tail_bound: Option<BoundReport>,
    /// `2 |I_n - I_{2n}|` at the reported `epsilon`, when requested.
    pub discretization_estimate: Option<f64>,
    /// Newton iterations (zero for delta queries).
    pub iterations: usize,
    pub grid: Grid,
    pub k: u64,
    pub warnings: Vec<String>,
}

/// Discretises each component and convolves them on `grid`.
pub fn compose(components: &[(MechanismSpec, u64)], grid: Grid) -> Result<ConvolvedPld> {
    if components.is_empty() {
        return Err(invalid("composition needs at least one mechanism"));
    }
    let mut plds = Vec::with_capacity(components.len());
    for (spec, count) in components {
        if *count == 0 {
            return Err(invalid("composition counts must be at least 1"));
        }
        let density = PldDensity::new(*spec)?;
        plds.push((discretize(&density, grid)?, *count));
    }
    let factors: Vec<_> = plds.iter().map(|(p, c)| (p, *c)).collect();
    convolve_powers(&factors)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    Ok(())
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Evaluates the `delta(epsilon)` sum on a composed PLD.
pub fn delta_from_convolved(conv: &ConvolvedPld, epsilon: f64) -> Result<DeltaSum> {
    check_epsilon(epsilon)?;
    let grid = conv.grid;
    let ell_eps = grid.first_index_above(epsilon);
    let sum = compensated_sum(
        (ell_eps..grid.len()).map(|l| (1.0 - (epsilon - grid.point(l)).exp()) * conv.values[l]),
    );
    Ok(DeltaSum {
        value: (grid.dx() * sum).max(0.0),
        ell_eps,
        empty: ell_eps >= grid.len(),
    })
}

/// `delta'(epsilon)`, always `<= 0`.
pub fn delta_derivative(conv: &ConvolvedPld, epsilon: f64) -> f64 {
    let grid = conv.grid;
    let ell_eps = grid.first_index_above(epsilon);
    let sum = compensated_sum(
        (ell_eps..grid.len()).map(|l| (epsilon - grid.point(l)).exp() * conv.values[l]),
    );
    -grid.dx() * sum
}

/// Solves `delta(eps) = target` for `eps >= 0` on a composed PLD.
///
/// Starts at `eps = 0` and keeps a bracket `[lo, hi]` with
/// `delta(lo) >= target >= delta(hi)`; Newton steps leaving the bracket, or
/// taken with a vanishing derivative, are replaced by bisection.
pub fn epsilon_from_convolved(
    conv: &ConvolvedPld,
    target: f64,
    tolerance: f64,
) -> Result<NewtonOutcome> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid(format!("target delta must lie in (0, 1), got {target}")));
    }
    if !(tolerance > 0.0) {
        return Err(invalid(format!("Newton tolerance must be positive, got {tolerance}")));
    }
    let grid = conv.grid;
    let at_zero = delta_from_convolved(conv, 0.0)?;
    if (at_zero.value - target).abs() <= tolerance {
        return Ok(NewtonOutcome {
            epsilon: 0.0,
            delta: at_zero.value,
            iterations: 0,
            bisection_steps: 0,
            ell_eps: at_zero.ell_eps,
        });
    }
    if target > at_zero.value {
        return Err(AccountantError::TargetAboveDeltaAtZero {
            target,
            delta_at_zero: at_zero.value,
        });
    }
    // Past L - 2dx only the last lattice cell contributes; below that, or below
    // the tolerance itself, the target is not resolvable on this grid.
    let floor = delta_from_convolved(conv, (grid.radius() - 2.0 * grid.dx()).max(0.0))?
        .value
        .max(tolerance);
    if target <= floor {
        return Err(AccountantError::TargetBelowFloor { target, floor });
    }

    let mut lo = 0.0;
    let mut hi = grid.radius() - grid.dx();
    let mut eps = 0.0;
    let mut current = at_zero;
    let mut bisection_steps = 0;
    for iteration in 1..=NEWTON_MAX_ITER {
        let residual = current.value - target;
        if residual > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let slope = delta_derivative(conv, eps);
        let newton = eps - residual / slope;
        let previous = eps;
        eps = if slope.abs() >= DERIVATIVE_FLOOR && newton > lo && newton < hi {
            newton
        } else {
            bisection_steps += 1;
            0.5 * (lo + hi)
        };
        current = delta_from_convolved(conv, eps)?;
        let residual = (current.value - target).abs();
        let settled = (eps - previous).abs() <= EPSILON_STEP_TOLERANCE
            || residual == 0.0
            || hi - lo <= EPSILON_STEP_TOLERANCE;
        if residual <= tolerance && (settled || iteration == NEWTON_MAX_ITER) {
            return Ok(NewtonOutcome {
                epsilon: eps,
                delta: current.value,
                iterations: iteration,
                bisection_steps,
                ell_eps: current.ell_eps,
            });
        }
    }
    Err(AccountantError::NonConvergence {
        solver: "Newton inversion of delta(epsilon)",
        iterations: NEWTON_MAX_ITER,
        residual: (current.value - target).abs(),
    })
}

impl CompositionQuery {
    /// `k` repetitions of a single mechanism.
    pub fn new(spec: MechanismSpec, k: u64, grid: Grid, target: Target) -> Self {
        Self::heterogeneous(vec![(spec, k)], grid, target)
    }

    pub fn heterogeneous(components: Vec<(MechanismSpec, u64)>, grid: Grid, target: Target) -> Self {
        Self {
            components,
            grid,
            target,
            newton_tolerance: DEFAULT_NEWTON_TOLERANCE,
            directions: DirectionMode::AsSpecified,
            with_discretization_estimate: false,
        }
    }

    pub fn with_directions(mut self, directions: DirectionMode) -> Self {
        self.directions = directions;
        self
    }

    pub fn with_discretization_estimate(mut self, enabled: bool) -> Self {
        self.with_discretization_estimate = enabled;
        self
    }

    pub fn with_newton_tolerance(mut self, tolerance: f64) -> Self {
        self.newton_tolerance = tolerance;
        self
    }

    pub fn total_count(&self) -> u64 {
        self.components.iter().map(|(_, c)| c).sum()
    }

    /// Component lists to evaluate, one per direction.
    fn direction_variants(&self) -> Vec<(Option<Direction>, Vec<(MechanismSpec, u64)>)> {
        let symmetric = self.components.iter().all(|(s, _)| s.scheme().is_symmetric());
        match self.directions {
            DirectionMode::Both if !symmetric => Direction::BOTH
                .iter()
                .map(|&d| {
                    let comps = self
                        .components
                        .iter()
                        .map(|(s, c)| (s.with_direction(d), *c))
                        .collect();
                    (Some(d), comps)
                })
                .collect(),
            _ => {
                let direction = self.components.first().map(|(s, _)| s.direction);
                vec![(direction, self.components.clone())]
            }
        }
    }

    pub fn run(&self) -> Result<DeltaResult> {
        if self.components.is_empty() {
            return Err(invalid("composition needs at least one mechanism"));
        }
        for (spec, _) in &self.components {
            spec.validate()?;
        }
        let mut warnings = Vec::new();
        let mut per_direction = Vec::new();
        let mut best: Option<(f64, usize, Vec<(MechanismSpec, u64)>)> = None;
        let mut iterations = 0;

        for (direction, components) in self.direction_variants() {
            let conv = compose(&components, self.grid)?;
            let mass = conv.mass();
            if (mass - 1.0).abs() > MASS_WARNING_THRESHOLD {
                let warning = format!("composed PLD mass {mass:.6e} differs from 1; refine the grid");
                if !warnings.contains(&warning) {
                    warnings.push(warning);
                }
            }
            let (value, ell_eps) = match self.target {
                Target::Epsilon(eps) => {
                    let sum = delta_from_convolved(&conv, eps)?;
                    if sum.empty && !warnings.iter().any(|w| w == WARN_EMPTY_SUM) {
                        warnings.push(WARN_EMPTY_SUM.to_string());
                    }
                    (sum.value, sum.ell_eps)
                }
                Target::Delta(delta) => {
                    let outcome = epsilon_from_convolved(&conv, delta, self.newton_tolerance)?;
                    iterations = iterations.max(outcome.iterations);
                    (outcome.epsilon, outcome.ell_eps)
                }
            };
            if let Some(d) = direction {
                per_direction.push((d, value));
            }
            if best.as_ref().map_or(true, |(v, _, _)| value > *v) {
                best = Some((value, ell_eps, components));
            }
        }
        let (value, ell_eps, worst_components) = best.expect("at least one direction evaluated");

        let discretization = if self.with_discretization_estimate {
            let eps = match self.target {
                Target::Epsilon(eps) => eps,
                Target::Delta(_) => value,
            };
            Some(discretization_estimate(&worst_components, self.grid, eps)?)
        } else {
            None
        };

        let tail = composite_tail_estimate(&self.components, self.grid.radius());
        if !tail.valid {
            warnings.push("tail estimate outside its validity envelope".to_string());
        }

        Ok(DeltaResult {
            value,
            kind: match self.target {
                Target::Epsilon(_) => "delta",
                Target::Delta(_) => "epsilon",
            },
            ell_eps,
            per_direction,
            tail_estimate: tail,
            analytic_tail_bound: self.analytic_bound(),
            discretization_estimate: discretization,
            iterations,
            grid: self.grid,
            k: self.total_count(),
            warnings,
        })
    }

    /// Product of the per-component analytic bounds, for Poisson-only compositions.
    fn analytic_bound(&self) -> Option<BoundReport> {
        if self
            .components
            .iter()
            .any(|(s, _)| s.scheme() != Scheme::PoissonRemoveAdd)
        {
            return None;
        }
        let radius = self.grid.radius();
        let mut log_value = radius * radius / 2.0 * (self.components.len() as f64 - 1.0);
        let mut violations = Vec::new();
        for (spec, count) in &self.components {
            let part = analytic_tail_bound(spec.sigma, spec.q(), *count, radius);
            log_value += part.value.ln();
            for v in part.violations {
                if !violations.contains(&v) {
                    violations.push(v);
                }
            }
        }
        Some(BoundReport {
            value: log_value.exp(),
            valid: violations.is_empty(),
            violations,
        })
    }
}

/// `delta(epsilon)` for `k` repetitions of `spec`, in the direction stored in `spec`.
pub fn delta_of_epsilon(spec: MechanismSpec, k: u64, grid: Grid, epsilon: f64) -> Result<DeltaResult> {
    CompositionQuery::new(spec, k, grid, Target::Epsilon(epsilon)).run()
}

/// `epsilon(delta)` for `k` repetitions of `spec`, in the direction stored in `spec`.
pub fn epsilon_of_delta(
    spec: MechanismSpec,
    k: u64,
    grid: Grid,
    delta: f64,
    tolerance: f64,
) -> Result<DeltaResult> {
    CompositionQuery::new(spec, k, grid, Target::Delta(delta))
        .with_newton_tolerance(tolerance)
        .run()
}

/// Composition of different mechanisms, each repeated `count` times.
pub fn compose_heterogeneous(
    components: &[(MechanismSpec, u64)],
    grid: Grid,
    target: Target,
) -> Result<DeltaResult> {
    CompositionQuery::heterogeneous(components.to_vec(), grid, target).run()
}
