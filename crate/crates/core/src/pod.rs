//! Proper orthogonal decomposition of a snapshot matrix.
//!
//! The thin SVD `A = U Σ Vᵀ` is obtained through the method of snapshots:
//! the `N × N` Gram matrix `AᵀA = V Σ² Vᵀ` is diagonalized with cyclic Jacobi
//! rotations and the retained left singular vectors are `U_k = A v_k / σ_k`.
//! Snapshots are decomposed as-is (no mean subtraction) and all inner
//! products are plain dot products.

use std::io::{Read, Write};
use std::path::Path;

use crate::binio;
use crate::burgers::{FieldState, SnapshotSet};
use crate::error::{check_len, Error, Result};

const BASIS_MAGIC: &[u8] = b"RNBASIS1";

/// Relative size below which a singular value counts as numerically zero.
pub const RANK_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// Retained modes, one column of length `M` per mode.
    pub modes: Vec<Vec<f64>>,
    /// All `N` singular values, nonincreasing.
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub t: f64,
    pub a: Vec<f64>,
}

impl PodBasis {
    pub fn r(&self) -> usize {
        self.modes.len()
    }

    pub fn n_points(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    /// `a_k = ⟨u, φ_k⟩`.
    pub fn coefficients(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("projection", self.n_points(), u.len())?;
        Ok(self.modes.iter().map(|phi| dot(u, phi)).collect())
    }

    /// `u = Σ a_k φ_k`.
    pub fn field(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_len("reconstruction", self.r(), a.len())?;
        let mut u = vec![0.0; self.n_points()];
        for (ak, phi) in a.iter().zip(&self.modes) {
            for (ui, pi) in u.iter_mut().zip(phi) {
                *ui += ak * pi;
            }
        }
        Ok(u)
    }

    /// Fraction of the snapshot energy captured by the first `r` modes.
    pub fn energy_fraction(&self, r: usize) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.singular_values.iter().take(r).map(|s| s * s).sum::<f64>() / total
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, BASIS_MAGIC)?;
        binio::write_u64(w, self.n_points() as u64)?;
        binio::write_u64(w, self.singular_values.len() as u64)?;
        binio::write_u64(w, self.r() as u64)?;
        binio::write_f64s(w, &self.singular_values)?;
        for phi in &self.modes {
            binio::write_f64s(w, phi)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        const KIND: &str = "basis";
        binio::read_magic(r, BASIS_MAGIC, KIND)?;
        let m = binio::read_usize(r, KIND)?;
        let n = binio::read_usize(r, KIND)?;
        let rank = binio::read_usize(r, KIND)?;
        if rank > n {
            return Err(Error::Format {
                kind: KIND,
                reason: format!("R = {rank} exceeds N = {n}"),
            });
        }
        let singular_values = binio::read_f64s(r, n, KIND)?;
        let modes = (0..rank)
            .map(|_| binio::read_f64s(r, m, KIND))
            .collect::<Result<Vec<_>>>()?;
        binio::expect_eof(r, KIND)?;
        Ok(Self {
            modes,
            singular_values,
        })
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

pub fn project(u: &FieldState, basis: &PodBasis) -> Result<ModalState> {
    Ok(ModalState {
        t: u.t,
        a: basis.coefficients(&u.u)?,
    })
}

pub fn reconstruct(state: &ModalState, basis: &PodBasis) -> Result<FieldState> {
    Ok(FieldState {
        t: state.t,
        u: basis.field(&state.a)?,
    })
}

/// Builds the `r`-mode POD basis of `snapshots`.
pub fn compute_basis(snapshots: &SnapshotSet, r: usize) -> Result<PodBasis> {
    let n = snapshots.n_snapshots();
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!(
            "number of modes must lie in 1..={n}, got {r}"
        )));
    }
    let m = snapshots.n_points();
    for col in &snapshots.columns {
        check_len("snapshot column", m, col.len())?;
    }
    let cols = &snapshots.columns;

    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let g = dot(&cols[i], &cols[j]);
            gram[i][j] = g;
            gram[j][i] = g;
        }
    }
    let (eigenvalues, eigenvectors) = symmetric_eigen(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eigenvalues[q].total_cmp(&eigenvalues[p]));
    let singular_values: Vec<f64> = order
        .iter()
        .map(|&k| eigenvalues[k].max(0.0).sqrt())
        .collect();

    let sigma_max = singular_values[0];
    if singular_values[r - 1] <= RANK_TOLERANCE * sigma_max {
        log::warn!(
            "snapshot matrix is rank deficient below r = {r}: sigma_r = {:e}, sigma_1 = {:e}",
            singular_values[r - 1],
            sigma_max
        );
    }

    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(r);
    for (rank, &k) in order.iter().take(r).enumerate() {
        let sigma = singular_values[rank];
        let mut phi = vec![0.0; m];
        if sigma > RANK_TOLERANCE * sigma_max && sigma > 0.0 {
            for (j, col) in cols.iter().enumerate() {
                let w = eigenvectors[j][k] / sigma;
                for (p, c) in phi.iter_mut().zip(col) {
                    *p += w * c;
                }
            }
        }
        let phi = orthonormalize_against(&modes, phi)
            .or_else(|| fill_direction(&modes, m))
            .ok_or_else(|| {
                Error::InvalidArgument(format!("cannot build {r} orthonormal modes in R^{m}"))
            })?;
        modes.push(phi);
    }
    for phi in &mut modes {
        fix_sign(phi);
    }
    Ok(PodBasis {
        modes,
        singular_values,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two passes of modified Gram-Schmidt; `None` when `v` collapses.
fn orthonormalize_against(basis: &[Vec<f64>], mut v: Vec<f64>) -> Option<Vec<f64>> {
    let start = dot(&v, &v).sqrt();
    if start == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for q in basis {
            let c = dot(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
    let norm = dot(&v, &v).sqrt();
    if norm <= 1e-10 * start {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Completes a rank-deficient basis with the first coordinate direction that
/// is not already spanned.
fn fill_direction(basis: &[Vec<f64>], m: usize) -> Option<Vec<f64>> {
    (0..m).find_map(|i| {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        orthonormalize_against(basis, e)
    })
}

/// Makes the entry of largest magnitude positive.
fn fix_sign(phi: &mut [f64]) {
    let mut best = 0.0f64;
    for &v in phi.iter() {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Cyclic Jacobi eigensolver for a dense symmetric matrix. Returns the
/// eigenvalues and the eigenvectors stored as columns (`v[i][k]`).
pub(crate) fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob2: f64 = a.iter().flatten().map(|x| x * x).sum();
    let tol = (f64::EPSILON * n as f64).powi(2) * frob2;

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snaps(columns: Vec<Vec<f64>>) -> SnapshotSet {
        SnapshotSet {
            times: (0..columns.len()).map(|i| i as f64).collect(),
            columns,
        }
    }

    fn orthonormal_columns(m: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
        // deterministic pseudo-random vectors, then Gram-Schmidt
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut out: Vec<Vec<f64>> = Vec::new();
        while out.len() < k {
            let v: Vec<f64> = (0..m).map(|_| next()).collect();
            if let Some(q) = orthonormalize_against(&out, v) {
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn rank_one_snapshot() {
        let v = vec![0.0, 3.0, 4.0, 0.0];
        let basis = compute_basis(&snaps(vec![v.clone()]), 1).unwrap();
        assert!((basis.singular_values[0] - 5.0).abs() < 1e-12);
        for (p, x) in basis.modes[0].iter().zip(&v) {
            assert!((p - x / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_rank_two() {
        let (m, n) = (40, 7);
        let q = orthonormal_columns(m, 2, 1);
        let w = orthonormal_columns(n, 2, 2);
        let columns: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..m).map(|i| 3.0 * q[0][i] * w[0][j] + q[1][i] * w[1][j]).collect())
            .collect();
        let basis = compute_basis(&snaps(columns), 2).unwrap();
        assert!((basis.singular_values[0] - 3.0).abs() < 1e-8);
        assert!((basis.singular_values[1] - 1.0).abs() < 1e-8);
        assert!(basis.singular_values[2..].iter().all(|s| s.abs() < 1e-6));
        for k in 0..2 {
            let c = dot(&basis.modes[k], &q[k]);
            assert!((c.abs() - 1.0).abs() < 1e-10, "mode {k} overlap {c}");
        }
    }

    #[test]
    fn rank_deficient_request_still_orthonormal() {
        let v: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let basis = compute_basis(&snaps(vec![v.clone(), v.clone(), v]), 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(&basis.modes[i], &basis.modes[j]);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((d - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn r_out_of_range() {
        let s = snaps(vec![vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(compute_basis(&s, 0).is_err());
        assert!(compute_basis(&s, 3).is_err());
    }

    #[test]
    fn projection_examples() {
        let modes = orthonormal_columns(30, 6, 9);
        let basis = PodBasis {
            modes: modes.clone(),
            singular_values: vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0],
        };
        let a = basis.coefficients(&modes[1]).unwrap();
        for (k, ak) in a.iter().enumerate() {
            let e = if k == 1 { 1.0 } else { 0.0 };
            assert!((ak - e).abs() < 1e-12);
        }
        let u: Vec<f64> = (0..30).map(|i| 2.0 * modes[0][i] - modes[2][i]).collect();
        let a = basis.coefficients(&u).unwrap();
        let expected = [2.0, 0.0, -1.0, 0.0, 0.0, 0.0];
        for (x, e) in a.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
        assert!(basis.field(&[0.0; 6]).unwrap().iter().all(|&v| v == 0.0));
        let back = basis.field(&basis.coefficients(&modes[0]).unwrap()).unwrap();
        for (x, e) in back.iter().zip(&modes[0]) {
            assert!((x - e).abs() < 1e-12);
        }
        assert!(basis.coefficients(&[1.0; 29]).is_err());
        assert!(basis.field(&[1.0; 5]).is_err());
    }

    #[test]
    fn reconstruction_error_shrinks_with_r() {
        let columns: Vec<Vec<f64>> = (0..8)
            .map(|j| {
                (0..50)
                    .map(|i| {
                        let x = i as f64 / 49.0;
                        ((j + 1) as f64 * x).sin() * (-(j as f64) * x).exp()
                    })
                    .collect()
            })
            .collect();
        let s = snaps(columns.clone());
        let u = &columns[5];
        let mut prev = f64::INFINITY;
        for r in 1..=8 {
            let basis = compute_basis(&s, r).unwrap();
            let back = basis.field(&basis.coefficients(u).unwrap()).unwrap();
            let err: f64 = back.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= prev + 1e-12, "r = {r}: {err} > {prev}");
            prev = err;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn sign_convention() {
        let v = vec![0.0, -1.0, -3.0, 2.0];
        let basis = compute_basis(&snaps(vec![v]), 1).unwrap();
        let phi = &basis.modes[0];
        assert!(phi[2] > 0.0);
    }

    #[test]
    fn basis_file_layout() {
        let basis = PodBasis {
            modes: vec![vec![1.0, 0.0, 0.0]],
            singular_values: vec![2.0, 1.0],
        };
        let mut buf = Vec::new();
        basis.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"RNBASIS1");
        assert_eq!(buf.len(), 8 + 24 + 8 * (2 + 3));
        assert_eq!(PodBasis::read_from(&mut buf.as_slice()).unwrap(), basis);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(PodBasis::read_from(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.25],
            vec![0.5, 0.25, 1.0],
        ];
        let (vals, vecs) = symmetric_eigen(a.clone());
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * vecs[j][k]).sum();
                assert!((av - vals[k] * vecs[i][k]).abs() < 1e-12);
            }
        }
    }
}
