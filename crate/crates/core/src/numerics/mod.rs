//! Grids, upwind splitting, tridiagonal solves and bilinear lookup shared by
//! the PDE solvers.

mod grid;
mod interp;
mod tridiag;

pub use grid::{Grid1D, Grid2D};
pub use interp::SurfaceView;
pub(crate) use interp::linear_1d;
pub use tridiag::{ThomasSolver, TridiagonalSystem};

/// Splits a signed advection coefficient into its non-negative and
/// non-positive parts, `((a + |a|) / 2, (a - |a|) / 2)`.
#[inline]
pub fn upwind_split(a: f64) -> (f64, f64) {
    let abs = a.abs();
    (0.5 * (a + abs), 0.5 * (a - abs))
}

/// `x^(-1/3)` for positive normal `x`: exponent-bit initial guess refined by
/// Newton steps, accurate to a few ulp and much cheaper than `powf`.
#[inline]
pub(crate) fn inv_cbrt(x: f64) -> f64 {
    let mut y = f64::from_bits(0x553e_f0ff_289d_d796 - x.to_bits() / 3);
    for _ in 0..4 {
        y *= (4.0 - x * y * y * y) * (1.0 / 3.0);
    }
    y
}
