//! Tight `(epsilon, delta)` accounting for compositions of subsampled
//! Gaussian mechanisms.
//!
//! The privacy loss distribution (PLD) of one mechanism is sampled on a
//! lattice over `[-L, L)`, its `k`-fold convolution is formed with the FFT,
//! and `delta(epsilon)` is read off as a Riemann sum. `epsilon(delta)` is
//! obtained by Newton's method on that sum.
//!
//! ```no_run
//! use fourier_accountant::{delta_of_epsilon, Grid, MechanismSpec};
//!
//! let spec = MechanismSpec::poisson(1.5, 0.01);
//! let grid = Grid::new(12.0, 3_200_000).unwrap();
//! let result = delta_of_epsilon(spec, 10_000, grid, 1.0).unwrap();
//! println!("delta = {}", result.value);
//! ```

pub mod accountant;
pub mod discretization;
pub mod error;
pub mod error_bounds;
pub mod mechanisms;
pub mod oracle;
pub mod spectral;

pub use accountant::{
    compose, compose_heterogeneous, delta_derivative, delta_from_convolved, delta_of_epsilon,
    epsilon_from_convolved, epsilon_of_delta, CompositionQuery, DeltaResult, DeltaSum,
    DirectionMode, NewtonOutcome, Target, DEFAULT_NEWTON_TOLERANCE,
};
pub use discretization::{discretize, half_swap, DiscretePld, Grid};
pub use error::{AccountantError, Result};
pub use error_bounds::{
    alpha_bound, analytic_tail_bound, discretization_estimate, periodisation_bound,
    tail_estimate, BoundReport, TailParams,
};
pub use mechanisms::{Direction, MechanismSpec, PldDensity, Sampling, Scheme};
pub use spectral::{
    convolution_power, convolution_product, convolve_powers, dft, inverse_dft, ConvolvedPld,
    SpectralVector,
};
