//! The staged experiment: FOM → POD/GROM → training → assimilation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use lstm_nudge::assimilation::{
    background_run, build_training_set, check_network, correction_effect, field_csv,
    generate_observations, lstm_nudge_run, measurement_times, perturb_field, RunResult,
};
use lstm_nudge::burgers::{solve_fom, square_wave_ic, SnapshotSet};
use lstm_nudge::grom::{precompute_operators, GromOperators};
use lstm_nudge::lstm::{train, LstmNetwork};
use lstm_nudge::pod::{compute_basis, ModalState, PodBasis};
use lstm_nudge::rng;
use serde::{Deserialize, Serialize};

use crate::cache::StageCache;
use crate::config::{ExperimentConfig, FomSection, RomSection, TrainSection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Fom,
    Pod,
    Train,
    Assimilate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Fom => "fom",
            Stage::Pod => "pod",
            Stage::Train => "train",
            Stage::Assimilate => "assimilate",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_trained: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_val_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rmse_true_projection: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rmse_background: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rmse_nudged: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rmse_true_projection: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rmse_background: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rmse_nudged: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub stages: Vec<String>,
    /// Files written under the output directory.
    pub files: Vec<String>,
    /// Cached stage artifacts, by name.
    pub artifacts: BTreeMap<String, PathBuf>,
    pub summary: Summary,
    pub cache_hits: BTreeMap<String, bool>,
    pub timings_s: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("malformed report {}", path.display()))
    }
}

/// How to treat stages before the requested one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upstream {
    /// Compute them if no cached result exists.
    Compute,
    /// Fail if they have not been run yet.
    Require,
}

#[derive(Serialize)]
struct PodKey<'a> {
    fom: &'a FomSection,
    r: usize,
}

#[derive(Serialize)]
struct TrainKey<'a> {
    seed: u64,
    fom: &'a FomSection,
    rom: &'a RomSection,
    s_freq: usize,
    t_freq: usize,
    quantity: &'a str,
    sigma_b: f64,
    sigma_m: f64,
    ensemble_size: usize,
    lr: f64,
    batch_size: usize,
    max_epochs: usize,
    val_fraction: f64,
    patience: usize,
    hidden_dim: usize,
}

impl<'a> TrainKey<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        let TrainSection {
            ensemble_size,
            lr,
            batch_size,
            max_epochs,
            val_fraction,
            patience,
            hidden_dim,
            ..
        } = cfg.train;
        let noise = cfg.train_noise_model();
        Self {
            seed: cfg.seed,
            fom: &cfg.fom,
            rom: &cfg.rom,
            s_freq: cfg.obs.s_freq,
            t_freq: cfg.train.t_freq.unwrap_or(cfg.obs.t_freq),
            quantity: &cfg.obs.quantity,
            sigma_b: noise.sigma_b,
            sigma_m: noise.sigma_m,
            ensemble_size,
            lr,
            batch_size,
            max_epochs,
            val_fraction,
            patience,
            hidden_dim,
        }
    }
}

const FOM_FILES: &[&str] = &["snapshots.bin"];
const POD_FILES: &[&str] = &["basis.bin", "operators.bin"];
const TRAIN_FILES: &[&str] = &["network.bin", "loss_history.csv"];

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    cache_root: PathBuf,
    report: ExperimentReport,
}

impl<'a> Runner<'a> {
    fn cached<T>(
        &mut self,
        stage: Stage,
        cache: &StageCache,
        files: &[&str],
        upstream: Upstream,
        load: impl FnOnce(&StageCache) -> Result<T>,
        compute: impl FnOnce(&StageCache) -> Result<T>,
    ) -> Result<T> {
        let name = stage.to_string();
        for f in files {
            self.report
                .artifacts
                .insert(f.to_string(), cache.path(f));
        }
        if cache.is_complete(files) {
            log::info!("{name}: reusing {}", cache.dir.display());
            self.report.cache_hits.insert(name.clone(), true);
            let out = load(cache).with_context(|| format!("cannot load cached {name} artifacts"));
            self.report.stages.push(name);
            return out;
        }
        if upstream == Upstream::Require {
            bail!(
                "missing upstream artifacts in {} (run the `{name}` stage first)",
                cache.dir.display()
            );
        }
        let clock = Instant::now();
        cache.prepare()?;
        let out = compute(cache)?;
        cache.commit(files)?;
        self.report.cache_hits.insert(name.clone(), false);
        self.report
            .timings_s
            .insert(name.clone(), clock.elapsed().as_secs_f64());
        self.report.stages.push(name);
        Ok(out)
    }

    fn fom(&mut self, upstream: Upstream) -> Result<SnapshotSet> {
        let cfg = self.cfg;
        let cache = StageCache::new(&self.cache_root, "fom", &cfg.fom)?;
        self.cached(
            Stage::Fom,
            &cache,
            FOM_FILES,
            upstream,
            |c| Ok(SnapshotSet::load(&c.path("snapshots.bin"))?),
            |c| {
                let fom = cfg.fom_config()?;
                log::info!(
                    "fom: {} steps on {} points",
                    fom.n_steps()?,
                    fom.grid.n_points()
                );
                let snaps = solve_fom(&fom, &square_wave_ic(&fom.grid))?;
                snaps.save(&c.path("snapshots.bin"))?;
                Ok(snaps)
            },
        )
    }

    fn pod(&mut self, upstream: Upstream, snaps: &SnapshotSet) -> Result<(PodBasis, GromOperators)> {
        let cfg = self.cfg;
        let key = PodKey {
            fom: &cfg.fom,
            r: cfg.rom.r,
        };
        let cache = StageCache::new(&self.cache_root, "pod", &key)?;
        let (basis, ops) = self.cached(
            Stage::Pod,
            &cache,
            POD_FILES,
            upstream,
            |c| {
                Ok((
                    PodBasis::load(&c.path("basis.bin"))?,
                    GromOperators::load(&c.path("operators.bin"))?,
                ))
            },
            |c| {
                let basis = compute_basis(snaps, cfg.rom.r)?;
                let ops = precompute_operators(&basis, &cfg.grid()?, cfg.nu())?;
                basis.save(&c.path("basis.bin"))?;
                ops.save(&c.path("operators.bin"))?;
                Ok((basis, ops))
            },
        )?;
        let energy = basis.energy_fraction(basis.r());
        log::info!("pod: {} modes retain {:.6} of the energy", basis.r(), energy);
        self.report.summary.energy_fraction = Some(energy);
        Ok((basis, ops))
    }

    fn train(
        &mut self,
        upstream: Upstream,
        snaps: &SnapshotSet,
        basis: &PodBasis,
        ops: &GromOperators,
    ) -> Result<LstmNetwork> {
        let cfg = self.cfg;
        let cache = StageCache::new(&self.cache_root, "train", &TrainKey::new(cfg))?;
        let net = self.cached(
            Stage::Train,
            &cache,
            TRAIN_FILES,
            upstream,
            |c| Ok(LstmNetwork::load(&c.path("network.bin"))?),
            |c| {
                let op = cfg.train_obs_operator()?;
                let data = build_training_set(
                    snaps,
                    basis,
                    ops,
                    cfg.rom.dt,
                    &op,
                    &cfg.train_noise_model(),
                    cfg.train.ensemble_size,
                )?;
                log::info!(
                    "train: {} samples, input {} -> output {}",
                    data.len(),
                    basis.r() + op.n_sensors(),
                    basis.r()
                );
                let net = LstmNetwork::init(
                    basis.r() + op.n_sensors(),
                    cfg.train.hidden_dim,
                    basis.r(),
                    &mut rng::stream(cfg.seed, "train-init", 0),
                );
                let (mut net, history) = train(net, &data, &cfg.train_config())?;
                net.meta.observable_tag = op.quantity.tag();
                net.save(&c.path("network.bin"))?;
                std::fs::write(c.path("loss_history.csv"), history.to_csv())?;
                Ok(net)
            },
        )?;
        self.report.summary.epochs_trained = Some(net.meta.epochs_trained);
        self.report.summary.best_val_mse = Some(net.meta.best_val_mse);
        Ok(net)
    }

    fn emit(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.cfg.output_dir.join(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.report.files.push(name.to_string());
        Ok(())
    }

    fn assimilate(
        &mut self,
        snaps: &SnapshotSet,
        basis: &PodBasis,
        ops: &GromOperators,
        net: &LstmNetwork,
    ) -> Result<()> {
        let cfg = self.cfg;
        let clock = Instant::now();
        let op = cfg.obs_operator()?;
        check_network(net, basis.r(), &op)?;
        let noise = cfg.noise_model();
        let u0 = perturb_field(
            snaps.at_time(0.0)?,
            &noise,
            &mut rng::stream(cfg.seed, "test-background", 0),
        );
        let a0 = ModalState {
            t: 0.0,
            a: basis.coefficients(&u0)?,
        };
        let times = measurement_times(cfg.fom.t_final, cfg.rom.dt, op.t_freq)?;
        let obs = generate_observations(
            snaps,
            &op,
            &noise,
            &times,
            &mut rng::stream(cfg.seed, "test-measurement", 0),
        )?;
        let n_steps = cfg.rom_steps();
        let background = background_run(&a0, ops, cfg.rom.dt, n_steps)?;
        let nudged = lstm_nudge_run(&a0, ops, cfg.rom.dt, n_steps, &obs, &op, net)?;
        let effect = correction_effect(snaps, basis, &nudged)?;
        let result = RunResult::assemble(snaps, basis, background, nudged.trajectory)?;

        let mut obs_csv = String::from("t");
        for k in 1..=op.n_sensors() {
            obs_csv.push_str(&format!(",z_{k}"));
        }
        obs_csv.push('\n');
        for (t, z) in obs.times.iter().zip(&obs.z) {
            obs_csv.push_str(&t.to_string());
            for v in z {
                obs_csv.push_str(&format!(",{v}"));
            }
            obs_csv.push('\n');
        }
        let mut corr_csv = String::from("t,rmse_before,rmse_after\n");
        for (t, before, after) in &effect {
            corr_csv.push_str(&format!("{t},{before},{after}\n"));
        }

        self.emit("a_true_projection.csv", &result.true_projection.to_csv())?;
        self.emit("a_background.csv", &result.background.to_csv())?;
        self.emit("a_nudged.csv", &result.nudged.to_csv())?;
        self.emit("rmse.csv", &result.rmse_csv())?;
        self.emit("corrections.csv", &corr_csv)?;
        self.emit("observations.csv", &obs_csv)?;

        let grid = cfg.grid()?;
        let t_end = *result.times.last().context("empty run")?;
        let last = result.times.len() - 1;
        self.emit("u_final_fom.csv", &field_csv(grid.x(), snaps.at_time(t_end)?)?)?;
        for (name, traj) in [
            ("true_projection", &result.true_projection),
            ("background", &result.background),
            ("nudged", &result.nudged),
        ] {
            let u = basis.field(&traj.states[last])?;
            self.emit(&format!("u_final_{name}.csv"), &field_csv(grid.x(), &u)?)?;
        }

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let s = &mut self.report.summary;
        s.final_rmse_true_projection = result.rmse_true_projection.last().copied();
        s.final_rmse_background = result.rmse_background.last().copied();
        s.final_rmse_nudged = result.rmse_nudged.last().copied();
        s.mean_rmse_true_projection = Some(mean(&result.rmse_true_projection));
        s.mean_rmse_background = Some(mean(&result.rmse_background));
        s.mean_rmse_nudged = Some(mean(&result.rmse_nudged));
        log::info!(
            "assimilate: final rmse nudged {:.4e}, background {:.4e}, true projection {:.4e}",
            result.rmse_nudged[last],
            result.rmse_background[last],
            result.rmse_true_projection[last]
        );
        self.report
            .timings_s
            .insert("assimilate".into(), clock.elapsed().as_secs_f64());
        self.report.stages.push("assimilate".into());
        Ok(())
    }
}

/// Runs every stage up to and including `until`, computing or reusing
/// upstream results as needed.
pub fn run_pipeline(cfg: &ExperimentConfig, until: Stage) -> Result<ExperimentReport> {
    execute(cfg, until, Upstream::Compute, None)
}

/// Runs one stage. Upstream results must already be cached; `checkpoint`
/// replaces the trained network for the assimilation stage.
pub fn run_stage(
    cfg: &ExperimentConfig,
    stage: Stage,
    checkpoint: Option<&Path>,
) -> Result<ExperimentReport> {
    execute(cfg, stage, Upstream::Require, checkpoint)
}

fn execute(
    cfg: &ExperimentConfig,
    until: Stage,
    upstream: Upstream,
    checkpoint: Option<&Path>,
) -> Result<ExperimentReport> {
    cfg.validate().context("invalid configuration")?;
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let clock = Instant::now();
    let mut runner = Runner {
        cfg,
        cache_root: cfg.cache_root(),
        report: ExperimentReport::default(),
    };
    let mode = |s: Stage| if s == until { Upstream::Compute } else { upstream };

    let snaps = runner.fom(mode(Stage::Fom)).context("stage fom")?;
    if until >= Stage::Pod {
        let (basis, ops) = runner
            .pod(mode(Stage::Pod), &snaps)
            .context("stage pod")?;
        if until >= Stage::Train {
            let net = match checkpoint {
                Some(path) if until == Stage::Assimilate => {
                    let net = LstmNetwork::load(path)
                        .with_context(|| format!("cannot load checkpoint {}", path.display()))
                        .context("stage assimilate")?;
                    runner
                        .report
                        .artifacts
                        .insert("network.bin".into(), path.to_path_buf());
                    net
                }
                _ => runner
                    .train(mode(Stage::Train), &snaps, &basis, &ops)
                    .context("stage train")?,
            };
            if until >= Stage::Assimilate {
                runner
                    .assimilate(&snaps, &basis, &ops, &net)
                    .context("stage assimilate")?;
            }
        }
    }

    runner
        .report
        .timings_s
        .insert("total".into(), clock.elapsed().as_secs_f64());
    runner.emit("config.toml", &cfg.to_toml())?;
    runner.report.files.push("report.toml".into());
    let path = cfg.output_dir.join("report.toml");
    std::fs::write(&path, toml::to_string(&runner.report)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(runner.report)
}
