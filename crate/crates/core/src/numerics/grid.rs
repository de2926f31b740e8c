use crate::error::{Error, Result};

/// Uniformly spaced, strictly increasing nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
    spacing: f64,
}

impl Grid1D {
    pub fn uniform(lo: f64, hi: f64, n_nodes: usize) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n_nodes}")));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidGrid(format!("bad interval [{lo}, {hi}]")));
        }
        let spacing = (hi - lo) / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|i| lo + spacing * i as f64).collect();
        // pin the end point exactly
        nodes[n_nodes - 1] = hi;
        Ok(Self { nodes, spacing })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Cell index `i` and fraction `s` in `[0, 1]` such that `x` lies at
    /// `(1 - s) nodes[i] + s nodes[i + 1]`. Points outside the grid are
    /// clamped; the flag reports whether clamping happened.
    pub fn locate(&self, x: f64) -> (usize, f64, bool) {
        let n = self.nodes.len();
        let clamped = !(x >= self.lo() && x <= self.hi());
        let x = if x.is_nan() { self.lo() } else { x.clamp(self.lo(), self.hi()) };
        let pos = (x - self.lo()) / self.spacing;
        let i = (pos.floor() as usize).min(n - 2);
        let s = (pos - i as f64).clamp(0.0, 1.0);
        (i, s, clamped)
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let (i, s, _) = self.locate(x);
        if s > 0.5 {
            i + 1
        } else {
            i
        }
    }

    /// True when every node of `self` is also a node of `finer`.
    pub fn nested_in(&self, finer: &Grid1D) -> Option<usize> {
        if (self.lo() - finer.lo()).abs() > 1e-12 * self.hi().abs().max(1.0)
            || (self.hi() - finer.hi()).abs() > 1e-12 * self.hi().abs().max(1.0)
        {
            return None;
        }
        let ci = self.len() - 1;
        let fi = finer.len() - 1;
        if fi % ci != 0 {
            return None;
        }
        Some(fi / ci)
    }
}

/// Tensor grid over wealth and habit, plus the backward time stepping
/// `t_n = T - n dt`, `n = 0..=n_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub w_axis: Grid1D,
    pub c_axis: Grid1D,
    pub n_time: usize,
    pub horizon: f64,
}

impl Grid2D {
    pub fn new(w_axis: Grid1D, c_axis: Grid1D, n_time: usize, horizon: f64) -> Result<Self> {
        if w_axis.lo() != 0.0 {
            return Err(Error::InvalidGrid("wealth axis must start at 0".into()));
        }
        if c_axis.lo() <= 0.0 {
            return Err(Error::InvalidGrid("habit axis must stay positive".into()));
        }
        if n_time == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "need n_time >= 1 and horizon > 0, got {n_time}, {horizon}"
            )));
        }
        Ok(Self { w_axis, c_axis, n_time, horizon })
    }

    /// Uniform grid on `[0, w_max] x [c_min, c_max]`.
    pub fn uniform(
        w_max: f64,
        n_w: usize,
        c_min: f64,
        c_max: f64,
        n_c: usize,
        n_time: usize,
        horizon: f64,
    ) -> Result<Self> {
        Self::new(
            Grid1D::uniform(0.0, w_max, n_w)?,
            Grid1D::uniform(c_min, c_max, n_c)?,
            n_time,
            horizon,
        )
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_time as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_time {
            0.0
        } else {
            self.horizon - n as f64 * self.dt()
        }
    }

    pub fn n_w(&self) -> usize {
        self.w_axis.len()
    }

    pub fn n_c(&self) -> usize {
        self.c_axis.len()
    }

    /// Flat index of node `(j, k)`; each habit column is contiguous in `j`.
    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        k * self.w_axis.len() + j
    }

    pub fn n_nodes(&self) -> usize {
        self.n_w() * self.n_c()
    }

    /// Same spatial axes (time stepping may differ).
    pub fn same_space(&self, other: &Grid2D) -> bool {
        self.w_axis == other.w_axis && self.c_axis == other.c_axis
    }
}
