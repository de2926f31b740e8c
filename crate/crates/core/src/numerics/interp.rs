use std::sync::atomic::{AtomicUsize, Ordering};

use super::Grid1D;
use crate::error::{Error, Result};

/// Read-only view of nodal values on a wealth x habit tensor grid, stored
/// habit-major (`values[k * n_w + j]`).
#[derive(Debug)]
pub struct SurfaceView<'a> {
    w_axis: &'a Grid1D,
    c_axis: &'a Grid1D,
    values: &'a [f64],
    clamps: AtomicUsize,
}

impl<'a> SurfaceView<'a> {
    pub fn new(w_axis: &'a Grid1D, c_axis: &'a Grid1D, values: &'a [f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty surface".into()));
        }
        if values.len() != w_axis.len() * c_axis.len() {
            return Err(Error::GridMismatch(format!(
                "surface has {} values for a {}x{} grid",
                values.len(),
                w_axis.len(),
                c_axis.len()
            )));
        }
        Ok(Self { w_axis, c_axis, values, clamps: AtomicUsize::new(0) })
    }

    /// Bilinear blend of the four nodes around `(w, cbar)`. Queries outside
    /// the rectangle are clamped to its boundary and counted.
    pub fn interpolate(&self, w: f64, cbar: f64) -> f64 {
        let (j, sw, cw) = self.w_axis.locate(w);
        let (k, sc, cc) = self.c_axis.locate(cbar);
        if cw || cc {
            self.clamps.fetch_add(1, Ordering::Relaxed);
        }
        let n = self.w_axis.len();
        let v = self.values;
        let v00 = v[k * n + j];
        let v10 = v[k * n + j + 1];
        let v01 = v[(k + 1) * n + j];
        let v11 = v[(k + 1) * n + j + 1];
        (1.0 - sc) * ((1.0 - sw) * v00 + sw * v10) + sc * ((1.0 - sw) * v01 + sw * v11)
    }

    pub fn clamp_count(&self) -> usize {
        self.clamps.load(Ordering::Relaxed)
    }
}

/// Linear interpolation of `values` (one per node of `axis`) at `x`,
/// clamped at the ends.
pub(crate) fn linear_1d(axis: &Grid1D, values: &[f64], x: f64) -> f64 {
    let (i, s, _) = axis.locate(x);
    (1.0 - s) * values[i] + s * values[i + 1]
}
