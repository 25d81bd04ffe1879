//! Workloads shared by the benchmarks in `benches/`.

use fourier_accountant::{Grid, MechanismSpec};

/// The reference composition: Poisson subsampling, sigma = 1.5, q = 0.01.
pub fn reference_spec() -> MechanismSpec {
    MechanismSpec::poisson(1.5, 0.01)
}

pub const REFERENCE_COUNT: u64 = 10_000;

/// Grid sizes benchmarked, from a quick check up to the finest reference grid.
pub const GRID_SIZES: [usize; 4] = [1 << 16, 400_000, 1 << 20, 3_200_000];

pub fn reference_grid(n: usize) -> Grid {
    Grid::new(12.0, n).expect("valid grid")
}
