//! Shared numerical kernels: tridiagonal solves, fourth-order compact finite
//! differences on a uniform grid, and a classical four-stage Runge-Kutta step.
//!
//! Compact schemes (Lele family), interior rows:
//!
//! ```text
//! 1/4 u'_{i-1}  + u'_i  + 1/4 u'_{i+1}  = 3/(4h)  (u_{i+1} - u_{i-1})
//! 1/10 u''_{i-1} + u''_i + 1/10 u''_{i+1} = 6/(5h^2) (u_{i+1} - 2u_i + u_{i-1})
//! ```
//!
//! Boundary rows are fourth-order one-sided closures, mirrored at the right end:
//!
//! ```text
//! u'_0 + 3 u'_1 = (-17/6 u_0 + 3/2 u_1 + 3/2 u_2 - 1/6 u_3) / h
//! u''_0         = (45 u_0 - 154 u_1 + 214 u_2 - 156 u_3 + 61 u_4 - 10 u_5) / (12 h^2)
//! ```

use crate::error::{check_finite, check_len, Error, Result};

/// Minimum number of grid points the compact operators accept.
pub const MIN_STENCIL_POINTS: usize = 6;

/// Tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty tridiagonal system".into()));
        }
        check_len("tridiagonal lower diagonal", n - 1, lower.len())?;
        check_len("tridiagonal upper diagonal", n - 1, upper.len())?;
        Ok(Self { lower, diag, upper })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Matrix-vector product `A y`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        check_len("tridiagonal apply", n, y.len())?;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * y[i];
            if i > 0 {
                s += self.lower[i - 1] * y[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * y[i + 1];
            }
            out[i] = s;
        }
        Ok(out)
    }

    /// Runs the forward elimination once so repeated solves only pay for the
    /// two sweeps.
    pub fn factor(&self) -> Result<TridiagonalFactor> {
        let n = self.len();
        let mut c_prime = vec![0.0; n.saturating_sub(1)];
        let mut inv_denom = vec![0.0; n];
        let mut denom = self.diag[0];
        for i in 0..n {
            if i > 0 {
                denom = self.diag[i] - self.lower[i - 1] * c_prime[i - 1];
            }
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            inv_denom[i] = 1.0 / denom;
            if i + 1 < n {
                c_prime[i] = self.upper[i] * inv_denom[i];
            }
        }
        Ok(TridiagonalFactor {
            lower: self.lower.clone(),
            c_prime,
            inv_denom,
        })
    }
}

/// Pivot-free LU factors of a [`TridiagonalSystem`].
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    lower: Vec<f64>,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn len(&self) -> usize {
        self.inv_denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_denom.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        check_len("tridiagonal right-hand side", n, rhs.len())?;
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
        Ok(())
    }
}

/// Solves `sys · y = rhs` with the Thomas algorithm.
pub fn thomas_solve(sys: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    check_len("thomas_solve", sys.len(), rhs.len())?;
    let factor = sys.factor()?;
    let mut y = rhs.to_vec();
    factor.solve_in_place(&mut y)?;
    Ok(y)
}

/// Uniform grid on `[0, length]` with `n_points` nodes including both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    n_points: usize,
    spacing: f64,
    x: Vec<f64>,
}

impl UniformGrid {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid length must be positive, got {length}"
            )));
        }
        let intervals = (n_points - 1) as f64;
        let spacing = length / intervals;
        let x = (0..n_points)
            .map(|i| length * (i as f64) / intervals)
            .collect();
        Ok(Self {
            n_points,
            spacing,
            x,
        })
    }

    /// Unit domain split into `intervals` equal cells (`intervals + 1` points).
    pub fn unit(intervals: usize) -> Result<Self> {
        Self::new(intervals + 1, 1.0)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }
}

/// Prefactored first- and second-derivative compact operators for one grid.
#[derive(Debug, Clone)]
pub struct CompactOperators {
    n: usize,
    h: f64,
    first: TridiagonalFactor,
    second: TridiagonalFactor,
}

impl CompactOperators {
    pub fn new(grid: &UniformGrid) -> Result<Self> {
        let n = grid.n_points();
        if n < MIN_STENCIL_POINTS {
            return Err(Error::TooShort {
                len: n,
                min: MIN_STENCIL_POINTS,
            });
        }
        Ok(Self {
            n,
            h: grid.spacing(),
            first: first_derivative_system(n).factor()?,
            second: second_derivative_system(n).factor()?,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn first(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("compact first derivative", self.n, u.len())?;
        let n = self.n;
        let h = self.h;
        let mut r = vec![0.0; n];
        r[0] = (-17.0 / 6.0 * u[0] + 1.5 * u[1] + 1.5 * u[2] - u[3] / 6.0) / h;
        r[n - 1] =
            -(-17.0 / 6.0 * u[n - 1] + 1.5 * u[n - 2] + 1.5 * u[n - 3] - u[n - 4] / 6.0) / h;
        let a = 0.75 / h;
        for i in 1..n - 1 {
            r[i] = a * (u[i + 1] - u[i - 1]);
        }
        self.first.solve_in_place(&mut r)?;
        Ok(r)
    }

    pub fn second(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("compact second derivative", self.n, u.len())?;
        let n = self.n;
        let h2 = self.h * self.h;
        const EDGE: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
        let mut r = vec![0.0; n];
        let (mut left, mut right) = (0.0, 0.0);
        for (k, c) in EDGE.iter().enumerate() {
            left += c * u[k];
            right += c * u[n - 1 - k];
        }
        r[0] = left / (12.0 * h2);
        r[n - 1] = right / (12.0 * h2);
        let b = 1.2 / h2;
        for i in 1..n - 1 {
            r[i] = b * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
        }
        self.second.solve_in_place(&mut r)?;
        Ok(r)
    }
}

fn first_derivative_system(n: usize) -> TridiagonalSystem {
    let mut lower = vec![0.25; n - 1];
    let mut upper = vec![0.25; n - 1];
    upper[0] = 3.0;
    lower[n - 2] = 3.0;
    TridiagonalSystem {
        lower,
        diag: vec![1.0; n],
        upper,
    }
}

fn second_derivative_system(n: usize) -> TridiagonalSystem {
    let mut lower = vec![0.1; n - 1];
    let mut upper = vec![0.1; n - 1];
    upper[0] = 0.0;
    lower[n - 2] = 0.0;
    TridiagonalSystem {
        lower,
        diag: vec![1.0; n],
        upper,
    }
}

/// `∂u/∂x` by the fourth-order compact scheme.
pub fn compact_first_derivative(u: &[f64], grid: &UniformGrid) -> Result<Vec<f64>> {
    check_len("compact first derivative", grid.n_points(), u.len())?;
    CompactOperators::new(grid)?.first(u)
}

/// `∂²u/∂x²` by the fourth-order compact scheme.
pub fn compact_second_derivative(u: &[f64], grid: &UniformGrid) -> Result<Vec<f64>> {
    check_len("compact second derivative", grid.n_points(), u.len())?;
    CompactOperators::new(grid)?.second(u)
}

/// One classical RK4 step: `state + dt/6 (g1 + 2 g2 + 2 g3 + g4)`.
pub fn rk4_step<F>(mut rhs: F, state: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let n = state.len();
    let mut stage = |x: &[f64]| -> Result<Vec<f64>> {
        let g = rhs(x)?;
        check_len("rk4 stage", n, g.len())?;
        check_finite("rk4 stage", &g)?;
        Ok(g)
    };
    let shifted = |g: &[f64], w: f64| -> Vec<f64> {
        state.iter().zip(g).map(|(s, gi)| s + w * gi).collect()
    };

    let g1 = stage(state)?;
    let g2 = stage(&shifted(&g1, 0.5 * dt))?;
    let g3 = stage(&shifted(&g2, 0.5 * dt))?;
    let g4 = stage(&shifted(&g3, dt))?;

    let next: Vec<f64> = (0..n)
        .map(|i| state[i] + dt / 6.0 * (g1[i] + 2.0 * g2[i] + 2.0 * g3[i] + g4[i]))
        .collect();
    check_finite("rk4 result", &next)?;
    Ok(next)
}
