//! Full-order solver for the 1D viscous Burgers equation
//! `u_t + u u_x = nu u_xx` on the unit interval with zero Dirichlet ends.
//!
//! Space is discretized with the compact operators from [`crate::numerics`],
//! the convective term in skew-symmetric form, and time with RK4.

use std::io::{Read, Write};
use std::path::Path;

use crate::binio;
use crate::error::{check_finite, check_len, Error, Result};
use crate::numerics::{rk4_step, CompactOperators, UniformGrid};

/// Any `|u|` above this aborts the run.
pub const BLOW_UP_THRESHOLD: f64 = 1.0e3;

const SNAPSHOT_MAGIC: &[u8] = b"RNSNAP1";

#[derive(Debug, Clone)]
pub struct FomConfig {
    pub nu: f64,
    pub grid: UniformGrid,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
}

impl FomConfig {
    /// Validates the configuration and returns the total number of steps.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be positive, got {}",
                self.nu
            )));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0) {
            return Err(Error::InvalidArgument(
                "dt and t_final must be positive".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidArgument(
                "snapshot_stride must be at least 1".into(),
            ));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(Error::Misaligned(format!(
                "dt = {} does not divide t_final = {}",
                self.dt, self.t_final
            )));
        }
        let steps = steps as usize;
        if steps % self.snapshot_stride != 0 {
            return Err(Error::Misaligned(format!(
                "{steps} steps are not a multiple of snapshot_stride = {}",
                self.snapshot_stride
            )));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
}

/// Snapshot matrix stored column by column; column `n` is `u(·, times[n])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl SnapshotSet {
    pub fn n_points(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_snapshots(&self) -> usize {
        self.columns.len()
    }

    /// Index of the snapshot stored at time `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    pub fn at_time(&self, t: f64) -> Result<&[f64]> {
        self.index_of(t)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Misaligned(format!("no snapshot stored at t = {t}")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, SNAPSHOT_MAGIC)?;
        binio::write_u64(w, self.n_points() as u64)?;
        binio::write_u64(w, self.n_snapshots() as u64)?;
        binio::write_f64s(w, &self.times)?;
        for col in &self.columns {
            binio::write_f64s(w, col)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        const KIND: &str = "snapshot";
        binio::read_magic(r, SNAPSHOT_MAGIC, KIND)?;
        let m = binio::read_usize(r, KIND)?;
        let n = binio::read_usize(r, KIND)?;
        let times = binio::read_f64s(r, n, KIND)?;
        let columns = (0..n)
            .map(|_| binio::read_f64s(r, m, KIND))
            .collect::<Result<Vec<_>>>()?;
        binio::expect_eof(r, KIND)?;
        Ok(Self { times, columns })
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

/// Square wave: 1 on (0, 0.5], 0 on (0.5, 1], with `u(0) = 0`.
pub fn square_wave_ic(grid: &UniformGrid) -> FieldState {
    let u = grid
        .x()
        .iter()
        .map(|&x| if x > 0.0 && x <= 0.5 { 1.0 } else { 0.0 })
        .collect();
    FieldState { t: 0.0, u }
}

/// Discrete kinetic energy `h Σ u_i²`.
pub fn energy(u: &[f64], grid: &UniformGrid) -> f64 {
    grid.spacing() * u.iter().map(|v| v * v).sum::<f64>()
}

/// Semi-discrete Burgers operator bound to one grid and viscosity.
#[derive(Debug, Clone)]
pub struct BurgersOperator {
    nu: f64,
    ops: CompactOperators,
}

impl BurgersOperator {
    pub fn new(nu: f64, grid: &UniformGrid) -> Result<Self> {
        Ok(Self {
            nu,
            ops: CompactOperators::new(grid)?,
        })
    }

    /// `nu u_xx - u u_x / 2 - (u²)_x / 4`, endpoints zeroed.
    pub fn rhs(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("burgers rhs", self.ops.n_points(), u.len())?;
        let ux = self.ops.first(u)?;
        let uxx = self.ops.second(u)?;
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let sqx = self.ops.first(&sq)?;
        let n = u.len();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = self.nu * uxx[i] - 0.5 * u[i] * ux[i] - 0.25 * sqx[i];
        }
        check_finite("burgers rhs", &out)?;
        Ok(out)
    }
}

/// Evaluates the Burgers right-hand side for `state` on `cfg.grid`.
pub fn burgers_rhs(state: &FieldState, cfg: &FomConfig) -> Result<Vec<f64>> {
    BurgersOperator::new(cfg.nu, &cfg.grid)?.rhs(&state.u)
}

/// Marches the full-order model with RK4 and stores the initial field plus one
/// snapshot every `snapshot_stride` steps.
pub fn solve_fom(cfg: &FomConfig, ic: &FieldState) -> Result<SnapshotSet> {
    let n_steps = cfg.n_steps()?;
    check_len("initial condition", cfg.grid.n_points(), ic.u.len())?;
    check_finite("initial condition", &ic.u)?;
    let op = BurgersOperator::new(cfg.nu, &cfg.grid)?;

    let mut u = ic.u.clone();
    let last = u.len() - 1;
    u[0] = 0.0;
    u[last] = 0.0;

    let n_snap = n_steps / cfg.snapshot_stride + 1;
    let mut times = Vec::with_capacity(n_snap);
    let mut columns = Vec::with_capacity(n_snap);
    times.push(ic.t);
    columns.push(u.clone());

    for step in 1..=n_steps {
        u = rk4_step(|x| op.rhs(x), &u, cfg.dt)?;
        u[0] = 0.0;
        u[last] = 0.0;
        let t = ic.t + step as f64 * cfg.dt;
        let max_abs = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs > BLOW_UP_THRESHOLD {
            return Err(Error::BlowUp { t, max_abs });
        }
        if step % cfg.snapshot_stride == 0 {
            times.push(t);
            columns.push(u.clone());
        }
    }
    log::debug!("full-order run finished: {n_steps} steps, {n_snap} snapshots");
    Ok(SnapshotSet { times, columns })
}
