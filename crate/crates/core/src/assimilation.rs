//! Twin-experiment data generation, training-set assembly, the nudged ROM
//! runs (learned and constant-gain) and error metrics.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::burgers::SnapshotSet;
use crate::error::{check_finite, check_len, Error, Result};
use crate::grom::ReducedModel;
use crate::lstm::{predict_correction, LstmNetwork, TrainingSet};
use crate::pod::{ModalState, PodBasis};
use crate::rng;

const TIME_TOL: f64 = 1e-9;

/// What the sensors measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Velocity,
    VelocitySquared,
}

impl Quantity {
    /// Tag stored in network checkpoints.
    pub fn tag(self) -> u64 {
        match self {
            Quantity::Velocity => 1,
            Quantity::VelocitySquared => 2,
        }
    }

    pub fn from_tag(tag: u64) -> Option<Self> {
        match tag {
            1 => Some(Quantity::Velocity),
            2 => Some(Quantity::VelocitySquared),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Velocity => "velocity",
            Quantity::VelocitySquared => "velocity_squared",
        }
    }

    fn apply(self, u: f64) -> f64 {
        match self {
            Quantity::Velocity => u,
            Quantity::VelocitySquared => u * u,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "velocity" | "u" => Ok(Quantity::Velocity),
            "velocity_squared" | "u2" | "u^2" => Ok(Quantity::VelocitySquared),
            other => Err(Error::InvalidArgument(format!(
                "unknown observed quantity `{other}` (expected velocity or velocity_squared)"
            ))),
        }
    }
}

fn tag_name(tag: u64) -> String {
    Quantity::from_tag(tag).map_or_else(|| format!("unknown tag {tag}"), |q| q.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperator {
    pub sensor_indices: Vec<usize>,
    pub quantity: Quantity,
    /// ROM steps between measurement signals.
    pub t_freq: usize,
}

impl ObservationOperator {
    pub fn new(sensor_indices: Vec<usize>, quantity: Quantity, t_freq: usize) -> Result<Self> {
        if t_freq == 0 {
            return Err(Error::InvalidArgument("t_freq must be at least 1".into()));
        }
        if sensor_indices.is_empty() {
            return Err(Error::InvalidArgument("no sensors".into()));
        }
        if sensor_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "sensor indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            sensor_indices,
            quantity,
            t_freq,
        })
    }

    /// Sensors at grid indices `0, s_freq, 2 s_freq, …` up to the last point.
    pub fn equally_spaced(
        n_points: usize,
        s_freq: usize,
        quantity: Quantity,
        t_freq: usize,
    ) -> Result<Self> {
        if s_freq == 0 || n_points == 0 {
            return Err(Error::InvalidArgument("s_freq and grid size must be positive".into()));
        }
        Self::new((0..n_points).step_by(s_freq).collect(), quantity, t_freq)
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_indices.len()
    }

    /// Noise-free measurement `h(u)`.
    pub fn observe(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.sensor_indices
            .iter()
            .map(|&i| {
                u.get(i).map(|&v| self.quantity.apply(v)).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "sensor index {i} outside a field of {} points",
                        u.len()
                    ))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_b: f64,
    pub sigma_m: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_b >= 0.0 && self.sigma_m >= 0.0 && self.sigma_b.is_finite() && self.sigma_m.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "noise levels must be finite and non-negative, got sigma_b={} sigma_m={}",
                self.sigma_b, self.sigma_m
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub times: Vec<f64>,
    /// One row of sensor values per time.
    pub z: Vec<Vec<f64>>,
}

impl ObservationRecord {
    fn at(&self, k: usize, t: f64) -> Result<&[f64]> {
        match (self.times.get(k), self.z.get(k)) {
            (Some(&tk), Some(z)) if (tk - t).abs() <= TIME_TOL * (1.0 + t.abs()) => Ok(z),
            _ => Err(Error::MissingObservation { t }),
        }
    }
}

/// `h(u) + ε_m`.
pub fn sample_sensors<R: Rng + ?Sized>(
    u: &[f64],
    op: &ObservationOperator,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut z = op.observe(u)?;
    if noise.sigma_m > 0.0 {
        z.iter_mut()
            .for_each(|v| *v += noise.sigma_m * rng::normal(rng));
    }
    Ok(z)
}

/// `u + ε_b` with i.i.d. Gaussian `ε_b`.
pub fn perturb_field<R: Rng + ?Sized>(u: &[f64], noise: &NoiseModel, rng: &mut R) -> Vec<f64> {
    if noise.sigma_b == 0.0 {
        return u.to_vec();
    }
    u.iter()
        .map(|&v| v + noise.sigma_b * rng::normal(rng))
        .collect()
}

/// Measurement instants `τ, 2τ, …, T` with `τ = t_freq · dt`.
pub fn measurement_times(t_final: f64, dt: f64, t_freq: usize) -> Result<Vec<f64>> {
    let tau = dt * t_freq as f64;
    if !(tau > 0.0 && t_final > 0.0) {
        return Err(Error::InvalidArgument("measurement period and horizon must be positive".into()));
    }
    let n = (t_final / tau).round();
    if n < 1.0 || (n * tau - t_final).abs() > TIME_TOL * (1.0 + t_final) {
        return Err(Error::Misaligned(format!(
            "horizon {t_final} is not a multiple of the measurement period {tau}"
        )));
    }
    Ok((1..=n as usize).map(|k| k as f64 * tau).collect())
}

/// Noisy measurements of the truth at every measurement instant.
pub fn generate_observations<R: Rng + ?Sized>(
    truth: &SnapshotSet,
    op: &ObservationOperator,
    noise: &NoiseModel,
    times: &[f64],
    rng: &mut R,
) -> Result<ObservationRecord> {
    noise.validate()?;
    let z = times
        .iter()
        .map(|&t| {
            let u = truth.at_time(t).map_err(|_| {
                Error::Misaligned(format!("no truth snapshot at measurement time {t}"))
            })?;
            sample_sensors(u, op, noise, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationRecord {
        times: times.to_vec(),
        z,
    })
}

/// Twin-experiment samples: for every ensemble member and window start
/// `t_n`, perturb the truth, project, run the model over one measurement
/// period and pair `[a_b, z]` with the correction `a_true − a_b`.
pub fn build_training_set<M: ReducedModel + ?Sized>(
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    model: &M,
    rom_dt: f64,
    obs_op: &ObservationOperator,
    noise: &NoiseModel,
    ensemble_size: usize,
) -> Result<TrainingSet> {
    noise.validate()?;
    check_len("model vs basis", basis.r(), model.dim())?;
    if ensemble_size == 0 {
        return Err(Error::InvalidArgument("ensemble size must be positive".into()));
    }
    let t_final = *snapshots
        .times
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty snapshot set".into()))?;
    let ends = measurement_times(t_final, rom_dt, obs_op.t_freq)?;
    let mut windows = Vec::with_capacity(ends.len());
    let mut start = 0.0;
    for &end in &ends {
        let lookup = |t: f64| {
            snapshots.at_time(t).map_err(|_| {
                Error::Misaligned(format!("training needs a snapshot at t={t}"))
            })
        };
        let u_start = lookup(start)?;
        let u_end = lookup(end)?;
        windows.push((u_start, u_end, basis.coefficients(u_end)?));
        start = end;
    }

    let mut inputs = Vec::with_capacity(ensemble_size * windows.len());
    let mut targets = Vec::with_capacity(ensemble_size * windows.len());
    for member in 0..ensemble_size as u64 {
        let mut bg_rng = rng::stream(noise.seed, "train-background", member);
        let mut meas_rng = rng::stream(noise.seed, "train-measurement", member);
        for (u_start, u_end, a_true) in &windows {
            let u_err = perturb_field(u_start, noise, &mut bg_rng);
            let mut a = basis.coefficients(&u_err)?;
            for _ in 0..obs_op.t_freq {
                a = model.step(&a, rom_dt)?;
            }
            let z = sample_sensors(u_end, obs_op, noise, &mut meas_rng)?;
            let target: Vec<f64> = a_true.iter().zip(&a).map(|(t, b)| t - b).collect();
            let mut input = a;
            input.extend(z);
            check_finite("training sample", &input)?;
            inputs.push(input);
            targets.push(target);
        }
    }
    Ok(TrainingSet { inputs, targets })
}

/// Modal coefficients sampled at every ROM step, including `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<ModalState> {
        Some(ModalState {
            t: *self.times.last()?,
            a: self.states.last()?.clone(),
        })
    }

    /// CSV with columns `t, a_1, …, a_R`.
    pub fn to_csv(&self) -> String {
        let r = self.states.first().map_or(0, |s| s.len());
        let mut s = String::from("t");
        for k in 1..=r {
            s.push_str(&format!(",a_{k}"));
        }
        s.push('\n');
        for (t, a) in self.times.iter().zip(&self.states) {
            s.push_str(&t.to_string());
            for v in a {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// One applied correction: the free-model state and what was added to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionEvent {
    pub step: usize,
    pub t: f64,
    pub background: Vec<f64>,
    pub correction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NudgedRun {
    pub trajectory: Trajectory,
    pub corrections: Vec<CorrectionEvent>,
}

/// Free model evolution for `n_steps`.
pub fn background_run<M: ReducedModel + ?Sized>(
    a0: &ModalState,
    model: &M,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    check_len("initial state", model.dim(), a0.a.len())?;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(a0.t);
    states.push(a0.a.clone());
    let mut a = a0.a.clone();
    for n in 1..=n_steps {
        a = model.step(&a, dt)?;
        times.push(a0.t + n as f64 * dt);
        states.push(a.clone());
    }
    Ok(Trajectory { times, states })
}

/// Model evolution with `correct(a_b, z)` added at every measurement instant.
pub fn nudge_run<M, F>(
    a0: &ModalState,
    model: &M,
    dt: f64,
    n_steps: usize,
    obs: &ObservationRecord,
    obs_op: &ObservationOperator,
    mut correct: F,
) -> Result<NudgedRun>
where
    M: ReducedModel + ?Sized,
    F: FnMut(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    check_len("initial state", model.dim(), a0.a.len())?;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut corrections = Vec::new();
    times.push(a0.t);
    states.push(a0.a.clone());
    let mut a = a0.a.clone();
    for n in 1..=n_steps {
        a = model.step(&a, dt)?;
        let t = a0.t + n as f64 * dt;
        if n % obs_op.t_freq == 0 {
            let z = obs.at(n / obs_op.t_freq - 1, t)?;
            let c = correct(&a, z)?;
            check_len("correction", a.len(), c.len())?;
            let background = a.clone();
            a.iter_mut().zip(&c).for_each(|(x, d)| *x += d);
            check_finite("nudged state", &a)?;
            corrections.push(CorrectionEvent {
                step: n,
                t,
                background,
                correction: c,
            });
        }
        times.push(t);
        states.push(a.clone());
    }
    Ok(NudgedRun {
        trajectory: Trajectory { times, states },
        corrections,
    })
}

/// Learned nudging: `aⁿ⁺¹ = a_b + C(a_b, z)`.
pub fn lstm_nudge_run<M: ReducedModel + ?Sized>(
    a0: &ModalState,
    model: &M,
    dt: f64,
    n_steps: usize,
    obs: &ObservationRecord,
    obs_op: &ObservationOperator,
    net: &LstmNetwork,
) -> Result<NudgedRun> {
    check_network(net, model.dim(), obs_op)?;
    nudge_run(a0, model, dt, n_steps, obs, obs_op, |a_b, z| {
        predict_correction(net, &ModalState { t: 0.0, a: a_b.to_vec() }, z)
    })
}

/// Rejects networks trained for another observable or sensor layout.
pub fn check_network(net: &LstmNetwork, r: usize, obs_op: &ObservationOperator) -> Result<()> {
    if net.meta.observable_tag != obs_op.quantity.tag() {
        return Err(Error::ObservableMismatch {
            trained: tag_name(net.meta.observable_tag),
            requested: obs_op.quantity.to_string(),
        });
    }
    check_len("network input (modes + sensors)", r + obs_op.n_sensors(), net.input_dim())?;
    check_len("network output", r, net.output_dim())
}

/// Constant-gain nudging `aⁿ⁺¹ = a_b + G (z − h(a_b))`; `gain` has one row
/// per mode and one column per sensor.
pub fn gain_nudge_run<M: ReducedModel + ?Sized>(
    a0: &ModalState,
    model: &M,
    dt: f64,
    n_steps: usize,
    basis: &PodBasis,
    obs: &ObservationRecord,
    obs_op: &ObservationOperator,
    gain: &[Vec<f64>],
) -> Result<NudgedRun> {
    check_len("gain rows", model.dim(), gain.len())?;
    for row in gain {
        check_len("gain columns", obs_op.n_sensors(), row.len())?;
    }
    nudge_run(a0, model, dt, n_steps, obs, obs_op, |a_b, z| {
        let h = obs_op.observe(&basis.field(a_b)?)?;
        check_len("observation", h.len(), z.len())?;
        let innovation: Vec<f64> = z.iter().zip(&h).map(|(z, h)| z - h).collect();
        Ok(gain
            .iter()
            .map(|row| row.iter().zip(&innovation).map(|(g, d)| g * d).sum())
            .collect())
    })
}

/// `sqrt(mean((u_ref − u)²))`.
pub fn rmse(reference: &[f64], u: &[f64]) -> Result<f64> {
    check_len("rmse fields", reference.len(), u.len())?;
    if u.is_empty() {
        return Err(Error::InvalidArgument("rmse of empty fields".into()));
    }
    let s: f64 = reference.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / u.len() as f64).sqrt())
}

pub fn rmse_series(references: &[Vec<f64>], fields: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_len("rmse series", references.len(), fields.len())?;
    references
        .iter()
        .zip(fields)
        .map(|(r, u)| rmse(r, u))
        .collect()
}

/// Trajectories of one experiment and their field errors against the FOM.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub times: Vec<f64>,
    pub true_projection: Trajectory,
    pub background: Trajectory,
    pub nudged: Trajectory,
    pub rmse_true_projection: Vec<f64>,
    pub rmse_background: Vec<f64>,
    pub rmse_nudged: Vec<f64>,
}

fn fom_at<'a>(truth: &'a SnapshotSet, t: f64) -> Result<&'a [f64]> {
    truth
        .at_time(t)
        .map_err(|_| Error::Misaligned(format!("no FOM snapshot at ROM time {t}")))
}

impl RunResult {
    pub fn assemble(
        truth: &SnapshotSet,
        basis: &PodBasis,
        background: Trajectory,
        nudged: Trajectory,
    ) -> Result<Self> {
        check_len("trajectory lengths", background.len(), nudged.len())?;
        let times = background.times.clone();
        let mut proj = Vec::with_capacity(times.len());
        let mut e_proj = Vec::with_capacity(times.len());
        let mut e_bg = Vec::with_capacity(times.len());
        let mut e_nud = Vec::with_capacity(times.len());
        for (k, &t) in times.iter().enumerate() {
            let u = fom_at(truth, t)?;
            let a = basis.coefficients(u)?;
            e_proj.push(rmse(u, &basis.field(&a)?)?);
            e_bg.push(rmse(u, &basis.field(&background.states[k])?)?);
            e_nud.push(rmse(u, &basis.field(&nudged.states[k])?)?);
            proj.push(a);
        }
        Ok(Self {
            true_projection: Trajectory {
                times: times.clone(),
                states: proj,
            },
            times,
            background,
            nudged,
            rmse_true_projection: e_proj,
            rmse_background: e_bg,
            rmse_nudged: e_nud,
        })
    }

    pub fn rmse_csv(&self) -> String {
        let mut s = String::from("t,rmse_true_projection,rmse_background,rmse_nudged\n");
        for k in 0..self.times.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.times[k], self.rmse_true_projection[k], self.rmse_background[k], self.rmse_nudged[k]
            ));
        }
        s
    }
}

/// Field RMSE immediately before and after each correction.
pub fn correction_effect(
    truth: &SnapshotSet,
    basis: &PodBasis,
    run: &NudgedRun,
) -> Result<Vec<(f64, f64, f64)>> {
    run.corrections
        .iter()
        .map(|c| {
            let u = fom_at(truth, c.t)?;
            let before = rmse(u, &basis.field(&c.background)?)?;
            let after = rmse(u, &basis.field(&run.trajectory.states[c.step])?)?;
            Ok((c.t, before, after))
        })
        .collect()
}

/// CSV with columns `x, u`.
pub fn field_csv(x: &[f64], u: &[f64]) -> Result<String> {
    check_len("field csv", x.len(), u.len())?;
    let mut s = String::from("x,u\n");
    for (x, u) in x.iter().zip(u) {
        s.push_str(&format!("{x},{u}\n"));
    }
    Ok(s)
}
