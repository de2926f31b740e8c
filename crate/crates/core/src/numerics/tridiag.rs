use crate::error::{Error, Result};

/// `lower[j] u[j-1] + diag[j] u[j] + upper[j] u[j+1] = rhs[j]`.
/// `lower[0]` and `upper[M-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let m = diag.len();
        if m == 0 || lower.len() != m || upper.len() != m || rhs.len() != m {
            return Err(Error::InvalidGrid(format!(
                "tridiagonal bands must share a non-zero length: {} {} {} {}",
                lower.len(),
                m,
                upper.len(),
                rhs.len()
            )));
        }
        Ok(Self { lower, diag, upper, rhs })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        ThomasSolver::new(self.len()).solve(&self.lower, &self.diag, &self.upper, &self.rhs, &mut out)?;
        Ok(out)
    }

    /// Max-norm of `A u - rhs`.
    pub fn residual(&self, u: &[f64]) -> f64 {
        let m = self.len();
        (0..m)
            .map(|j| {
                let mut s = self.diag[j] * u[j];
                if j > 0 {
                    s += self.lower[j] * u[j - 1];
                }
                if j + 1 < m {
                    s += self.upper[j] * u[j + 1];
                }
                (s - self.rhs[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_diagonally_dominant(&self) -> bool {
        let m = self.len();
        (0..m).all(|j| {
            let off = if j > 0 { self.lower[j].abs() } else { 0.0 }
                + if j + 1 < m { self.upper[j].abs() } else { 0.0 };
            self.diag[j].abs() >= off * (1.0 - 1e-12)
        })
    }
}

/// Thomas algorithm with reusable scratch space.
#[derive(Debug, Clone, Default)]
pub struct ThomasSolver {
    c_prime: Vec<f64>,
    d_prime: Vec<f64>,
}

impl ThomasSolver {
    pub fn new(m: usize) -> Self {
        Self { c_prime: vec![0.0; m], d_prime: vec![0.0; m] }
    }

    pub fn solve(
        &mut self,
        lower: &[f64],
        diag: &[f64],
        upper: &[f64],
        rhs: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let m = diag.len();
        assert!(
            lower.len() == m && upper.len() == m && rhs.len() == m && out.len() == m,
            "tridiagonal bands must share one length"
        );
        if self.c_prime.len() < m {
            self.c_prime.resize(m, 0.0);
            self.d_prime.resize(m, 0.0);
        }
        let (cp, dp) = (&mut self.c_prime, &mut self.d_prime);
        if diag[0] == 0.0 {
            return Err(Error::SingularSystem { row: 0 });
        }
        cp[0] = if m > 1 { upper[0] / diag[0] } else { 0.0 };
        dp[0] = rhs[0] / diag[0];
        for j in 1..m {
            let den = diag[j] - lower[j] * cp[j - 1];
            if den == 0.0 || !den.is_finite() {
                return Err(Error::SingularSystem { row: j });
            }
            let inv = 1.0 / den;
            cp[j] = if j + 1 < m { upper[j] * inv } else { 0.0 };
            dp[j] = (rhs[j] - lower[j] * dp[j - 1]) * inv;
        }
        out[m - 1] = dp[m - 1];
        for j in (0..m - 1).rev() {
            out[j] = dp[j] - cp[j] * out[j + 1];
        }
        Ok(())
    }
}
