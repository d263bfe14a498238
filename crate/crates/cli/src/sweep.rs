//! Parameter sweeps and the cross-run comparison table.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::config::{set_dotted, ConfigFile, ExperimentConfig};
use crate::pipeline::{run_pipeline, ExperimentReport, Stage};

pub const INDEX_FILE: &str = "sweep_index.csv";
pub const REPORT_FILE: &str = "sweep_report.csv";

#[derive(Debug, Clone)]
pub struct SweepChild {
    pub name: String,
    pub assignments: Vec<(String, toml::Value)>,
    pub config: ExperimentConfig,
}

impl SweepChild {
    pub fn label(&self) -> String {
        self.assignments
            .iter()
            .map(|(k, v)| format!("{k}={}", format_value(v)))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn format_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Cartesian product of the `[sweep]` lists, keys in sorted order with the
/// last key varying fastest. Children write to `<output_dir>/run_NNN` and
/// share the parent's cache.
pub fn expand_sweep(file: &ConfigFile, parent: &ExperimentConfig) -> Result<Vec<SweepChild>> {
    if file.sweep.is_empty() {
        bail!("config has no [sweep] table");
    }
    let mut axes: Vec<(String, Vec<toml::Value>)> = Vec::new();
    for (key, values) in &file.sweep {
        let toml::Value::Array(values) = values else {
            bail!("sweep key `{key}` must map to a list of values");
        };
        if values.is_empty() {
            bail!("sweep key `{key}` has no values");
        }
        axes.push((key.clone(), values.clone()));
    }
    axes.sort_by(|a, b| a.0.cmp(&b.0));

    let base: toml::Table = toml::from_str(&parent.to_toml())?;
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut children = Vec::with_capacity(total);
    for n in 0..total {
        let mut table = base.clone();
        let mut assignments = Vec::with_capacity(axes.len());
        let mut rem = n;
        for (key, values) in axes.iter().rev() {
            let v = values[rem % values.len()].clone();
            rem /= values.len();
            set_dotted(&mut table, key, v.clone())?;
            assignments.push((key.clone(), v));
        }
        assignments.reverse();
        let name = format!("run_{n:03}");
        let mut config = ExperimentConfig::from_table(table)
            .with_context(|| format!("sweep child {name}"))?;
        config.output_dir = parent.output_dir.join(&name);
        config.cache_dir = Some(parent.cache_root());
        children.push(SweepChild {
            name,
            assignments,
            config,
        });
    }
    Ok(children)
}

/// Validates every child first, then runs them in order and writes the index
/// and comparison table into the parent output directory.
pub fn run_sweep(file: &ConfigFile, parent: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    let children = expand_sweep(file, parent)?;
    for c in &children {
        c.config
            .validate()
            .with_context(|| format!("sweep child {} ({})", c.name, c.label()))?;
    }
    std::fs::create_dir_all(&parent.output_dir)?;
    let mut index = String::from("run,params\n");
    for c in &children {
        index.push_str(&format!("{},{}\n", c.name, c.label()));
    }
    std::fs::write(parent.output_dir.join(INDEX_FILE), index)?;

    let mut reports = Vec::with_capacity(children.len());
    for c in &children {
        log::info!("sweep: {} ({})", c.name, c.label());
        let report = run_pipeline(&c.config, Stage::Assimilate)
            .with_context(|| format!("sweep child {} ({})", c.name, c.label()))?;
        reports.push(report);
    }
    write_report(&parent.output_dir)?;
    Ok(reports)
}

fn child_dirs(dir: &Path) -> Result<Vec<(String, PathBuf, String)>> {
    let index = dir.join(INDEX_FILE);
    if index.is_file() {
        let text = std::fs::read_to_string(&index)?;
        return Ok(text
            .lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|l| {
                let (name, params) = l.split_once(',').unwrap_or((l, ""));
                (name.to_string(), dir.join(name), params.to_string())
            })
            .collect());
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))? {
        let path = entry?.path();
        if path.join("rmse.csv").is_file() && path.join("config.toml").is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            found.push((name, path, String::new()));
        }
    }
    found.sort();
    Ok(found)
}

/// Final and time-mean RMSE columns from an `rmse.csv`.
fn rmse_stats(path: &Path) -> Result<([f64; 3], [f64; 3])> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut last = [0.0; 3];
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let cols: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("malformed row in {}", path.display()))?;
        if cols.len() != 4 {
            bail!("malformed row in {}", path.display());
        }
        for k in 0..3 {
            last[k] = cols[k + 1];
            sum[k] += cols[k + 1];
        }
        n += 1;
    }
    if n == 0 {
        bail!("{} has no rows", path.display());
    }
    Ok((last, sum.map(|s| s / n as f64)))
}

/// Builds the comparison table over the runs in `dir`.
pub fn aggregate(dir: &Path) -> Result<String> {
    let children = child_dirs(dir)?;
    if children.is_empty() {
        bail!("no completed runs found under {}", dir.display());
    }
    let mut out = String::from(
        "run,params,sigma_m,sigma_b,s_freq,t_freq,quantity,\
         final_rmse_true_projection,final_rmse_background,final_rmse_nudged,\
         mean_rmse_true_projection,mean_rmse_background,mean_rmse_nudged\n",
    );
    for (name, path, params) in children {
        let cfg_file = ConfigFile::load(&path.join("config.toml"))
            .with_context(|| format!("missing upstream artifacts for {name}"))?;
        let cfg = cfg_file.experiment()?;
        let (last, mean) = rmse_stats(&path.join("rmse.csv"))?;
        out.push_str(&format!(
            "{name},{params},{},{},{},{},{},{},{},{},{},{},{}\n",
            cfg.noise.sigma_m,
            cfg.noise.sigma_b,
            cfg.obs.s_freq,
            cfg.obs.t_freq,
            cfg.obs.quantity,
            last[0],
            last[1],
            last[2],
            mean[0],
            mean[1],
            mean[2]
        ));
    }
    Ok(out)
}

pub fn write_report(dir: &Path) -> Result<PathBuf> {
    let table = aggregate(dir)?;
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, table).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}
