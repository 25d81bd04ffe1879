//! Equidistant lattice on `[-L, L)` and sampling of PLD densities onto it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AccountantError, Result};
use crate::mechanisms::{MechanismSpec, PldDensity};

/// Lattice `x_i = -L + i dx`, `i = 0..n`, with `dx = 2L / n`.
///
/// The left endpoint is included and the right one excluded, so
/// `x_{n/2} = 0` and `x_{n-1} = L - dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    radius: f64,
    n: usize,
}

impl Grid {
    /// `radius` is the truncation radius `L`; `n` must be even and positive.
    pub fn new(radius: f64, n: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!("truncation radius must be positive, got {radius}")));
        }
        if n == 0 || n % 2 != 0 {
            return Err(invalid(format!("grid size must be even and positive, got {n}")));
        }
        Ok(Self { radius, n })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.radius / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.dx()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let dx = self.dx();
        let radius = self.radius;
        (0..self.n).map(move |i| -radius + i as f64 * dx)
    }

    /// The same interval with twice as many points.
    pub fn refined(&self) -> Self {
        Self {
            radius: self.radius,
            n: 2 * self.n,
        }
    }

    /// `min { l : x_l > value }`, or `n` when no lattice point exceeds `value`.
    pub fn first_index_above(&self, value: f64) -> usize {
        let dx = self.dx();
        let guess = ((value + self.radius) / dx).floor();
        let mut i = if guess < 0.0 {
            0
        } else {
            (guess as usize).min(self.n)
        };
        // Correct the floating-point guess against the actual lattice points.
        while i > 0 && self.point(i - 1) > value {
            i -= 1;
        }
        while i < self.n && self.point(i) <= value {
            i += 1;
        }
        i
    }
}

/// Samples `omega_i = omega(x_i)` of one mechanism's PLD.
#[derive(Debug, Clone)]
pub struct DiscretePld {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub spec: MechanismSpec,
}

impl DiscretePld {
    /// `dx * sum_i omega_i`, the Riemann-sum mass.
    pub fn mass(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }
}

/// Samples `density` on `grid`.
///
/// Fails when the left end of a bounded support (Poisson, `X/Y`) is not
/// strictly inside the interval, since the periodic convolution then folds
/// mass across the boundary.
pub fn discretize(density: &PldDensity, grid: Grid) -> Result<DiscretePld> {
    let support_lo = density.support_lo();
    if support_lo.is_finite() && support_lo <= -grid.radius() {
        return Err(AccountantError::TruncationTooSmall {
            radius: grid.radius(),
            support_lo,
        });
    }
    let values = grid
        .points()
        .map(|x| density.density(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscretePld {
        grid,
        values,
        spec: *density.spec(),
    })
}

/// The periodising permutation `D = [[0, I], [I, 0]]`: `out[i] = v[(i + n/2) mod n]`.
pub fn half_swap<T: Copy>(v: &[T]) -> Result<Vec<T>> {
    if v.len() % 2 != 0 {
        return Err(invalid(format!("half swap needs an even length, got {}", v.len())));
    }
    let half = v.len() / 2;
    Ok(v[half..].iter().chain(&v[..half]).copied().collect())
}

/// In-place variant of [`half_swap`] for even-length buffers.
pub(crate) fn half_swap_in_place<T>(v: &mut [T]) {
    debug_assert!(v.len() % 2 == 0);
    let half = v.len() / 2;
    v.rotate_left(half);
}
