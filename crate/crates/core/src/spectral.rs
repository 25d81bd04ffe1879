//! Discrete Fourier transforms and convolution powers of discretised PLDs.
//!
//! With `D` the half swap and `F` the DFT, the `k`-fold periodic convolution
//! of a lattice density is
//!
//! ```text
//! C^k = dx^{-1} D F^{-1}( F(D omega dx)^k )
//! ```
//!
//! and for a list of mechanisms the `k`-th power is replaced by the
//! elementwise product of their spectra.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::discretization::{half_swap_in_place, DiscretePld, Grid};
use crate::error::{invalid, AccountantError, Result};

/// Imaginary residue (relative to the largest real entry) above which the
/// inverse transform is considered broken.
pub const IMAGINARY_RESIDUE_LIMIT: f64 = 1e-6;

/// Frequency-domain representation of a length-`n` sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVector {
    pub values: Vec<Complex64>,
}

impl SpectralVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `(F x)_k = sum_j x_j e^{-2 pi i k j / n}`, for any length.
pub fn dft(v: &[Complex64]) -> SpectralVector {
    let mut buf = v.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    SpectralVector { values: buf }
}

/// `(F^{-1} w)_k = (1/n) sum_j w_j e^{2 pi i k j / n}`.
pub fn inverse_dft(w: &SpectralVector) -> Vec<Complex64> {
    let mut buf = w.values.clone();
    inverse_in_place(&mut buf);
    buf
}

fn inverse_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    FftPlanner::new().plan_fft_inverse(n).process(buf);
    let scale = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= scale;
    }
}

/// Discrete density of a composition on the original lattice.
#[derive(Debug, Clone)]
pub struct ConvolvedPld {
    pub grid: Grid,
    /// `C_i`, with negative round-off clamped to zero.
    pub values: Vec<f64>,
    /// Total number of composed mechanisms.
    pub k: u64,
    /// Largest `|Im|` of the inverse transform, relative to the largest real entry.
    pub imaginary_residue: f64,
    /// Most negative real entry before clamping (0 when none was negative).
    pub clamped_minimum: f64,
}

impl ConvolvedPld {
    /// `dx * sum_i C_i`.
    pub fn mass(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }
}

/// `F(D omega dx)` for one discretised PLD.
pub fn pld_spectrum(pld: &DiscretePld) -> SpectralVector {
    let dx = pld.grid.dx();
    let mut buf: Vec<Complex64> = pld.values.iter().map(|&w| Complex64::new(w * dx, 0.0)).collect();
    half_swap_in_place(&mut buf);
    dft(&buf)
}

/// `z^k` by repeated squaring.
pub(crate) fn complex_powu(mut z: Complex64, mut k: u64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    while k > 0 {
        if k & 1 == 1 {
            acc *= z;
        }
        k >>= 1;
        if k > 0 {
            z *= z;
        }
    }
    acc
}

/// `k`-fold self-convolution of `pld`.
pub fn convolution_power(pld: &DiscretePld, k: u64) -> Result<ConvolvedPld> {
    convolve_powers(&[(pld, k)])
}

/// Convolution of several PLDs on a shared grid, each used once.
pub fn convolution_product(plds: &[&DiscretePld]) -> Result<ConvolvedPld> {
    let factors: Vec<_> = plds.iter().map(|&p| (p, 1)).collect();
    convolve_powers(&factors)
}

/// Convolution of `count_i`-fold powers of several PLDs on a shared grid.
pub fn convolve_powers(factors: &[(&DiscretePld, u64)]) -> Result<ConvolvedPld> {
    let (first, _) = factors
        .first()
        .ok_or_else(|| invalid("convolution needs at least one PLD"))?;
    let grid = first.grid;
    for (pld, count) in factors {
        check_same_grid(&grid, &pld.grid)?;
        if *count == 0 {
            return Err(invalid("composition counts must be at least 1"));
        }
        if pld.values.len() != grid.len() {
            return Err(invalid("PLD sample count does not match its grid"));
        }
    }

    let mut product = vec![Complex64::new(1.0, 0.0); grid.len()];
    for (pld, count) in factors {
        let spectrum = pld_spectrum(pld);
        for (acc, &z) in product.iter_mut().zip(&spectrum.values) {
            *acc *= complex_powu(z, *count);
        }
    }
    let k = factors.iter().map(|(_, c)| c).sum();
    finish(grid, product, k)
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(AccountantError::GridMismatch {
            left_radius: a.radius(),
            left_n: a.len(),
            right_radius: b.radius(),
            right_n: b.len(),
        })
    }
}

/// Inverse transform, undo the half swap, rescale by `1/dx` and clamp.
fn finish(grid: Grid, mut spectrum: Vec<Complex64>, k: u64) -> Result<ConvolvedPld> {
    inverse_in_place(&mut spectrum);
    half_swap_in_place(&mut spectrum);

    let max_re = spectrum.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    let max_im = spectrum.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let imaginary_residue = if max_re > 0.0 { max_im / max_re } else { max_im };
    if imaginary_residue > IMAGINARY_RESIDUE_LIMIT {
        return Err(AccountantError::ImaginaryResidue {
            residue: imaginary_residue,
            limit: IMAGINARY_RESIDUE_LIMIT,
        });
    }

    let inv_dx = 1.0 / grid.dx();
    let mut clamped_minimum = 0.0f64;
    let values = spectrum
        .iter()
        .map(|z| {
            let v = z.re * inv_dx;
            if v < 0.0 {
                clamped_minimum = clamped_minimum.min(v);
                0.0
            } else {
                v
            }
        })
        .collect();

    Ok(ConvolvedPld {
        grid,
        values,
        k,
        imaginary_residue,
        clamped_minimum,
    })
}
