//! Galerkin reduced-order model of the Burgers equation in tensorial form:
//!
//! ```text
//! da_k/dt = nu Σ_i L[i,k] a_i + Σ_i Σ_j N[i,j,k] a_i a_j
//! L[i,k]   = ⟨φ_i'', φ_k⟩
//! N[i,j,k] = ⟨-φ_i φ_j', φ_k⟩
//! ```
//!
//! The operators are computed offline from the POD modes; online cost per
//! right-hand side evaluation is `O(R³)`.

use std::io::{Read, Write};
use std::path::Path;

use crate::binio;
use crate::error::{check_finite, check_len, Error, Result};
use crate::numerics::{rk4_step, CompactOperators, UniformGrid};
use crate::pod::{ModalState, PodBasis};

const GROM_MAGIC: &[u8] = b"RNGROM1";

/// A discrete-time map `a^{n+1} = M(a^n)` on modal coefficients.
pub trait ReducedModel {
    fn dim(&self) -> usize;
    fn step(&self, a: &[f64], dt: f64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GromOperators {
    r: usize,
    nu: f64,
    /// Row-major `R × R`, `linear[i * R + k] = L[i,k]`.
    linear: Vec<f64>,
    /// `quadratic[(i * R + j) * R + k] = N[i,j,k]` (k fastest).
    quadratic: Vec<f64>,
}

impl GromOperators {
    pub fn new(r: usize, nu: f64, linear: Vec<f64>, quadratic: Vec<f64>) -> Result<Self> {
        check_len("linear operator", r * r, linear.len())?;
        check_len("quadratic operator", r * r * r, quadratic.len())?;
        check_finite("linear operator", &linear)?;
        check_finite("quadratic operator", &quadratic)?;
        if !nu.is_finite() {
            return Err(Error::NonFinite("viscosity"));
        }
        Ok(Self {
            r,
            nu,
            linear,
            quadratic,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn linear(&self, i: usize, k: usize) -> f64 {
        self.linear[i * self.r + k]
    }

    pub fn quadratic(&self, i: usize, j: usize, k: usize) -> f64 {
        self.quadratic[(i * self.r + j) * self.r + k]
    }

    /// Continuous-time right-hand side `f(a)`.
    pub fn rhs(&self, a: &[f64]) -> Result<Vec<f64>> {
        let r = self.r;
        check_len("grom rhs", r, a.len())?;
        let mut f = vec![0.0; r];
        for (i, &ai) in a.iter().enumerate() {
            let lin = &self.linear[i * r..(i + 1) * r];
            let w = self.nu * ai;
            for (fk, l) in f.iter_mut().zip(lin) {
                *fk += w * l;
            }
        }
        for (i, &ai) in a.iter().enumerate() {
            for (j, &aj) in a.iter().enumerate() {
                let w = ai * aj;
                let base = (i * r + j) * r;
                for (fk, n) in f.iter_mut().zip(&self.quadratic[base..base + r]) {
                    *fk += w * n;
                }
            }
        }
        check_finite("grom rhs", &f)?;
        Ok(f)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, GROM_MAGIC)?;
        binio::write_u64(w, self.r as u64)?;
        binio::write_f64(w, self.nu)?;
        binio::write_f64s(w, &self.linear)?;
        binio::write_f64s(w, &self.quadratic)?;
        Ok(())
    }

    pub fn read_from<R: Read>(rd: &mut R) -> Result<Self> {
        const KIND: &str = "operator";
        binio::read_magic(rd, GROM_MAGIC, KIND)?;
        let r = binio::read_usize(rd, KIND)?;
        let nu = binio::read_f64(rd, KIND)?;
        let linear = binio::read_f64s(rd, r * r, KIND)?;
        let quadratic = binio::read_f64s(rd, r * r * r, KIND)?;
        binio::expect_eof(rd, KIND)?;
        Self::new(r, nu, linear, quadratic)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl ReducedModel for GromOperators {
    fn dim(&self) -> usize {
        self.r
    }

    fn step(&self, a: &[f64], dt: f64) -> Result<Vec<f64>> {
        rk4_step(|x| self.rhs(x), a, dt)
    }
}

/// Offline stage: differentiates the modes with the compact operators and
/// takes dot products.
pub fn precompute_operators(basis: &PodBasis, grid: &UniformGrid, nu: f64) -> Result<GromOperators> {
    check_len("basis vs grid", grid.n_points(), basis.n_points())?;
    let ops = CompactOperators::new(grid)?;
    let r = basis.r();
    let modes = &basis.modes;
    let d1 = modes
        .iter()
        .map(|phi| ops.first(phi))
        .collect::<Result<Vec<_>>>()?;
    let d2 = modes
        .iter()
        .map(|phi| ops.second(phi))
        .collect::<Result<Vec<_>>>()?;

    let mut linear = vec![0.0; r * r];
    for i in 0..r {
        for k in 0..r {
            linear[i * r + k] = dot(&d2[i], &modes[k]);
        }
    }
    let mut quadratic = vec![0.0; r * r * r];
    let mut prod = vec![0.0; grid.n_points()];
    for i in 0..r {
        for j in 0..r {
            for (p, (phi, dphi)) in prod.iter_mut().zip(modes[i].iter().zip(&d1[j])) {
                *p = -phi * dphi;
            }
            for k in 0..r {
                quadratic[(i * r + j) * r + k] = dot(&prod, &modes[k]);
            }
        }
    }
    GromOperators::new(r, nu, linear, quadratic)
}

pub fn grom_rhs(a: &ModalState, ops: &GromOperators) -> Result<Vec<f64>> {
    ops.rhs(&a.a)
}

/// One RK4 step of the GROM; advances `t` by `dt`.
pub fn grom_step(a: &ModalState, ops: &GromOperators, dt: f64) -> Result<ModalState> {
    Ok(ModalState {
        t: a.t + dt,
        a: ops.step(&a.a, dt)?,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine_basis(grid: &UniformGrid, r: usize) -> PodBasis {
        let modes = (1..=r)
            .map(|k| {
                let v: Vec<f64> = grid
                    .x()
                    .iter()
                    .map(|&x| (k as f64 * PI * x).sin())
                    .collect();
                let n = dot(&v, &v).sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        PodBasis {
            modes,
            singular_values: vec![1.0; r],
        }
    }

    #[test]
    fn sine_modes_give_diagonal_laplacian() {
        let grid = UniformGrid::unit(512).unwrap();
        let ops = precompute_operators(&sine_basis(&grid, 2), &grid, 1.0).unwrap();
        for k in 0..2 {
            let exact = -((k + 1) as f64 * PI).powi(2);
            assert!((ops.linear(k, k) - exact).abs() / exact.abs() < 1e-6);
        }
        assert!(ops.linear(0, 1).abs() < 1e-6 && ops.linear(1, 0).abs() < 1e-6);
    }

    #[test]
    fn zero_mode_gives_zero_rows() {
        let grid = UniformGrid::unit(64).unwrap();
        let mut basis = sine_basis(&grid, 2);
        basis.modes.push(vec![0.0; 65]);
        basis.singular_values.push(0.0);
        let ops = precompute_operators(&basis, &grid, 0.1).unwrap();
        for a in 0..3 {
            assert_eq!(ops.linear(2, a), 0.0);
            assert_eq!(ops.linear(a, 2), 0.0);
            for b in 0..3 {
                assert_eq!(ops.quadratic(2, a, b), 0.0);
                assert_eq!(ops.quadratic(a, 2, b), 0.0);
                assert_eq!(ops.quadratic(a, b, 2), 0.0);
            }
        }
    }

    #[test]
    fn zero_state_and_linear_only() {
        let ops = GromOperators::new(
            2,
            0.5,
            vec![-1.0, 0.0, 0.0, -4.0],
            vec![0.0; 8],
        )
        .unwrap();
        let zero = ModalState { t: 0.0, a: vec![0.0; 2] };
        assert_eq!(grom_rhs(&zero, &ops).unwrap(), vec![0.0, 0.0]);
        let a = ModalState { t: 0.0, a: vec![2.0, 3.0] };
        assert_eq!(grom_rhs(&a, &ops).unwrap(), vec![-1.0, -6.0]);
    }

    #[test]
    fn zero_operators_leave_state_unchanged() {
        let ops = GromOperators::new(3, 1.0, vec![0.0; 9], vec![0.0; 27]).unwrap();
        let a = ModalState { t: 0.2, a: vec![1.0, -2.0, 0.5] };
        let next = grom_step(&a, &ops, 0.01).unwrap();
        assert_eq!(next.a, a.a);
        assert!((next.t - 0.21).abs() < 1e-15);
    }

    #[test]
    fn linear_diagonal_system_tracks_exponential() {
        let lambda = [-1.0, -3.0];
        let ops =
            GromOperators::new(2, 0.5, vec![lambda[0], 0.0, 0.0, lambda[1]], vec![0.0; 8]).unwrap();
        let dt = 0.01;
        let mut a = ModalState { t: 0.0, a: vec![1.0, 2.0] };
        for _ in 0..100 {
            a = grom_step(&a, &ops, dt).unwrap();
        }
        for k in 0..2 {
            let exact = [1.0, 2.0][k] * (0.5 * lambda[k] * 1.0f64).exp();
            assert!((a.a[k] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn operator_file_layout() {
        let ops = GromOperators::new(
            2,
            1e-4,
            vec![1.0, 2.0, 3.0, 4.0],
            (0..8).map(f64::from).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        ops.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..7], b"RNGROM1");
        assert_eq!(buf.len(), 7 + 8 + 8 + 8 * (4 + 8));
        // N[0,1,1] sits at flat index 3
        let off = 7 + 16 + 8 * 4 + 8 * 3;
        assert_eq!(f64::from_le_bytes(buf[off..off + 8].try_into().unwrap()), 3.0);
        assert_eq!(GromOperators::read_from(&mut buf.as_slice()).unwrap(), ops);
    }

    #[test]
    fn bad_dimensions_rejected() {
        assert!(GromOperators::new(2, 1.0, vec![0.0; 3], vec![0.0; 8]).is_err());
        let ops = GromOperators::new(2, 1.0, vec![0.0; 4], vec![0.0; 8]).unwrap();
        assert!(ops.rhs(&[1.0]).is_err());
        let grid = UniformGrid::unit(64).unwrap();
        let basis = sine_basis(&UniformGrid::unit(32).unwrap(), 1);
        assert!(precompute_operators(&basis, &grid, 1.0).is_err());
    }
}
