//! Experiment configuration (TOML) and its validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lstm_nudge::assimilation::{NoiseModel, ObservationOperator, Quantity};
use lstm_nudge::burgers::FomConfig;
use lstm_nudge::lstm::TrainConfig;
use lstm_nudge::numerics::UniformGrid;
use serde::{Deserialize, Serialize};

const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FomSection {
    pub re: f64,
    pub grid_intervals: usize,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
}

impl Default for FomSection {
    fn default() -> Self {
        Self {
            re: 1e4,
            grid_intervals: 4096,
            dt: 1e-4,
            t_final: 1.0,
            snapshot_stride: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomSection {
    pub r: usize,
    pub dt: f64,
}

impl Default for RomSection {
    fn default() -> Self {
        Self { r: 6, dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsSection {
    pub s_freq: usize,
    pub t_freq: usize,
    pub quantity: String,
}

impl Default for ObsSection {
    fn default() -> Self {
        Self {
            s_freq: 256,
            t_freq: 10,
            quantity: "velocity".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_b: f64,
    pub sigma_m: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigma_b: 1.0,
            sigma_m: 1.0,
        }
    }
}

/// Training hyperparameters. The optional keys decouple the conditions the
/// network is trained under from the ones it is evaluated under; when absent
/// they follow `[obs]` and `[noise]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub ensemble_size: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub hidden_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_freq: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_m: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            ensemble_size: 100,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            val_fraction: 0.2,
            patience: 20,
            hidden_dim: 40,
            t_freq: None,
            sigma_b: None,
            sigma_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub fom: FomSection,
    pub rom: RomSection,
    pub obs: ObsSection,
    pub noise: NoiseSection,
    pub train: TrainSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("out"),
            cache_dir: None,
            fom: FomSection::default(),
            rom: RomSection::default(),
            obs: ObsSection::default(),
            noise: NoiseSection::default(),
            train: TrainSection::default(),
        }
    }
}

/// A config file: the experiment itself plus an optional `[sweep]` table
/// mapping dotted keys to lists of values.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub base: toml::Table,
    pub sweep: toml::Table,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut base: toml::Table = toml::from_str(text).context("malformed config")?;
        let sweep = match base.remove("sweep") {
            None => toml::Table::new(),
            Some(toml::Value::Table(t)) => t,
            Some(_) => bail!("`sweep` must be a table of dotted keys to value lists"),
        };
        Ok(Self { base, sweep })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_table(self.base.clone())
    }
}

impl ExperimentConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .context("invalid config")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn nu(&self) -> f64 {
        1.0 / self.fom.re
    }

    pub fn grid(&self) -> Result<UniformGrid> {
        Ok(UniformGrid::unit(self.fom.grid_intervals)?)
    }

    pub fn fom_config(&self) -> Result<FomConfig> {
        Ok(FomConfig {
            nu: self.nu(),
            grid: self.grid()?,
            dt: self.fom.dt,
            t_final: self.fom.t_final,
            snapshot_stride: self.fom.snapshot_stride,
        })
    }

    pub fn quantity(&self) -> Result<Quantity> {
        Ok(self.obs.quantity.parse()?)
    }

    pub fn obs_operator(&self) -> Result<ObservationOperator> {
        Ok(ObservationOperator::equally_spaced(
            self.fom.grid_intervals + 1,
            self.obs.s_freq,
            self.quantity()?,
            self.obs.t_freq,
        )?)
    }

    pub fn train_obs_operator(&self) -> Result<ObservationOperator> {
        let mut op = self.obs_operator()?;
        op.t_freq = self.train.t_freq.unwrap_or(self.obs.t_freq);
        Ok(op)
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            sigma_b: self.noise.sigma_b,
            sigma_m: self.noise.sigma_m,
            seed: self.seed,
        }
    }

    pub fn train_noise_model(&self) -> NoiseModel {
        NoiseModel {
            sigma_b: self.train.sigma_b.unwrap_or(self.noise.sigma_b),
            sigma_m: self.train.sigma_m.unwrap_or(self.noise.sigma_m),
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            val_fraction: self.train.val_fraction,
            patience: self.train.patience,
            seed: self.seed,
        }
    }

    /// Number of ROM steps over the horizon.
    pub fn rom_steps(&self) -> usize {
        (self.fom.t_final / self.rom.dt).round() as usize
    }

    /// Checks ranges and time-grid alignment. Runs before any computation.
    pub fn validate(&self) -> Result<()> {
        let f = &self.fom;
        ensure!(f.re > 0.0 && f.re.is_finite(), "fom.re must be positive");
        ensure!(f.grid_intervals >= 5, "fom.grid_intervals must be at least 5");
        let n_snapshots = self.fom_config()?.n_steps()? / f.snapshot_stride + 1;

        let r = &self.rom;
        ensure!(r.r >= 1, "rom.r must be at least 1");
        ensure!(
            r.r <= n_snapshots,
            "rom.r = {} exceeds the {n_snapshots} stored snapshots",
            r.r
        );
        ensure!(r.dt > 0.0 && r.dt.is_finite(), "rom.dt must be positive");
        let spacing = f.dt * f.snapshot_stride as f64;
        check_multiple("rom.dt", r.dt, "the snapshot spacing fom.dt * fom.snapshot_stride", spacing)?;
        check_multiple("fom.t_final", f.t_final, "rom.dt", r.dt)?;

        let o = &self.obs;
        ensure!(
            o.s_freq >= 1 && o.s_freq <= f.grid_intervals,
            "obs.s_freq must lie in 1..={}",
            f.grid_intervals
        );
        ensure!(o.t_freq >= 1, "obs.t_freq must be at least 1");
        self.quantity()?;
        let tau = r.dt * o.t_freq as f64;
        check_multiple("fom.t_final", f.t_final, "the measurement period rom.dt * obs.t_freq", tau)?;
        if let Some(tf) = self.train.t_freq {
            ensure!(tf >= 1, "train.t_freq must be at least 1");
            check_multiple(
                "fom.t_final",
                f.t_final,
                "the training period rom.dt * train.t_freq",
                r.dt * tf as f64,
            )?;
        }

        self.noise_model().validate()?;
        self.train_noise_model().validate()?;

        let t = &self.train;
        ensure!(t.ensemble_size >= 1, "train.ensemble_size must be at least 1");
        ensure!(t.lr > 0.0 && t.lr.is_finite(), "train.lr must be positive");
        ensure!(t.batch_size >= 1, "train.batch_size must be at least 1");
        ensure!(t.max_epochs >= 1, "train.max_epochs must be at least 1");
        ensure!(
            t.val_fraction > 0.0 && t.val_fraction < 1.0,
            "train.val_fraction must lie in (0, 1)"
        );
        ensure!(t.patience >= 1, "train.patience must be at least 1");
        ensure!(t.hidden_dim >= 1, "train.hidden_dim must be at least 1");
        let windows = (f.t_final / (r.dt * self.train.t_freq.unwrap_or(o.t_freq) as f64)).round() as usize;
        ensure!(
            t.ensemble_size * windows >= 10,
            "training set would have {} samples; at least 10 are needed",
            t.ensemble_size * windows
        );
        Ok(())
    }
}

fn check_multiple(what: &str, value: f64, of: &str, unit: f64) -> Result<()> {
    let k = (value / unit).round();
    if k < 1.0 || (k * unit - value).abs() > ALIGN_TOL * value.abs().max(1.0) {
        bail!(lstm_nudge::Error::Misaligned(format!(
            "{what} = {value} is not a positive multiple of {of} = {unit}"
        )));
    }
    Ok(())
}

/// Assigns `value` at a dotted `key` such as `noise.sigma_m`.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|s| !s.is_empty()).context("empty sweep key")?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .with_context(|| format!("sweep key `{key}`: `{part}` is not a section"))?;
    }
    node.insert(leaf.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_base_case() {
        let cfg = ConfigFile::parse("").unwrap().experiment().unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.rom_steps(), 100);
        assert_eq!(cfg.obs_operator().unwrap().n_sensors(), 17);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigFile::parse("[fom]\nreynolds = 3").unwrap().experiment().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.sigma_b = Some(0.5);
        let text = cfg.to_toml();
        let back = ConfigFile::parse(&text).unwrap().experiment().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn misalignment_detected() {
        let mut cfg = ExperimentConfig::default();
        cfg.rom.dt = 0.015;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.obs.t_freq = 30;
        let err = cfg.validate().unwrap_err();
        assert!(format!("{err:#}").contains("not a positive multiple"));
    }

    #[test]
    fn dotted_assignment() {
        let mut t = toml::Table::new();
        set_dotted(&mut t, "noise.sigma_m", toml::Value::Float(0.1)).unwrap();
        set_dotted(&mut t, "seed", toml::Value::Integer(3)).unwrap();
        let cfg = ExperimentConfig::from_table(t).unwrap();
        assert_eq!(cfg.noise.sigma_m, 0.1);
        assert_eq!(cfg.seed, 3);
    }
}
