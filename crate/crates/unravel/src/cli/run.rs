//! Task dispatch and output writing: tabular CSV for time series, JSON for
//! distributions, and a JSON manifest carrying everything needed to
//! reproduce a run byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::analysis::{
    self, CountingDistribution, Provenance, TimeGrid,
};
use crate::diffusion::{self, HomodyneConfig};
use crate::error::Error;
use crate::hilbert::DensityMatrix;
use crate::jump::{self, PairConfig, TrajectoryConfig};
use crate::model::OpenSystem;

use super::config::{
    build_system, resolve_observable, resolve_single_operator, ConfigError, Observable,
    RunConfig, Task,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Numerical-guard failures (truncation, aliasing): exit status 3.
    #[error("numerical guard: {0}")]
    Guard(Error),
    #[error("numerical failure: {0}")]
    Numeric(Error),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Guard(_) => 3,
            _ => 1,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::TruncationExceeded { .. }
            | Error::AliasingGuard { .. }
            | Error::HierarchyTruncated { .. } => RunError::Guard(e),
            other => RunError::Numeric(other),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

pub struct RunReport {
    pub data_files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Execute a resolved configuration. Identical configurations produce
/// byte-identical data files regardless of worker count.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let sys = build_system(cfg)?;
    let prefix = PathBuf::from(&cfg.output.path);
    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut data_files = match cfg.task {
        Task::Master => run_master(cfg, &sys, &prefix)?,
        Task::Trajectories => run_trajectories(cfg, &sys, &prefix)?,
        Task::Homodyne => run_homodyne(cfg, &sys, &prefix)?,
        Task::Correlate => run_correlate(cfg, &sys, &prefix)?,
        Task::Counting => run_counting(cfg, &sys, &prefix)?,
        Task::Waiting => run_waiting(cfg, &sys, &prefix)?,
    };
    data_files.sort();
    let manifest = write_manifest(cfg, &prefix, &data_files, started.elapsed().as_secs_f64())?;
    Ok(RunReport {
        data_files,
        manifest,
    })
}

fn write_manifest(
    cfg: &RunConfig,
    prefix: &Path,
    files: &[PathBuf],
    wall_time_s: f64,
) -> Result<PathBuf, RunError> {
    let path = prefix.with_extension("manifest.json");
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let doc = json!({
        "artifact": "unravel",
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(cfg).map_err(|e| RunError::Io(e.to_string()))?,
        "seed": cfg.seed,
        "outputs": names,
        "wall_time_s": wall_time_s,
    });
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n")?;
    Ok(path)
}

/// Recover the resolved configuration embedded in a manifest.
pub fn config_from_manifest(text: &str) -> Result<RunConfig, ConfigError> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let cfg_value = doc
        .get("config")
        .ok_or_else(|| ConfigError::Parse("manifest has no `config` field".into()))?;
    let mut cfg: RunConfig = serde_json::from_value(cfg_value.clone())
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    super::config::resolve_and_validate(&mut cfg)?;
    Ok(cfg)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), RunError> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Flatten observables into CSV columns; complex expectations get re/im
/// pairs, Hermitian ones a single column.
struct ObservableColumns {
    headers: Vec<String>,
    // (observable index in `ops`, take imaginary part?) or entropy marker
    plan: Vec<ColumnSource>,
    ops: Vec<Observable>,
}

enum ColumnSource {
    Real(usize),
    Imag(usize),
    Entropy,
}

fn observable_columns(cfg: &RunConfig, sys: &OpenSystem) -> Result<ObservableColumns, RunError> {
    let mut headers = Vec::new();
    let mut plan = Vec::new();
    let mut ops = Vec::new();
    for name in &cfg.observables {
        if name == "entropy" {
            headers.push("entropy".to_string());
            plan.push(ColumnSource::Entropy);
            continue;
        }
        for obs in resolve_observable(name, sys)? {
            let idx = ops.len();
            if obs.hermitian {
                headers.push(obs.name.clone());
                plan.push(ColumnSource::Real(idx));
            } else {
                headers.push(format!("{}_re", obs.name));
                headers.push(format!("{}_im", obs.name));
                plan.push(ColumnSource::Real(idx));
                plan.push(ColumnSource::Imag(idx));
            }
            ops.push(obs);
        }
    }
    Ok(ObservableColumns { headers, plan, ops })
}

impl ObservableColumns {
    fn values(&self, rho: &DensityMatrix) -> Vec<f64> {
        let expectations: Vec<crate::C64> =
            self.ops.iter().map(|o| rho.expectation(&o.op)).collect();
        self.plan
            .iter()
            .map(|src| match src {
                ColumnSource::Real(i) => expectations[*i].re,
                ColumnSource::Imag(i) => expectations[*i].im,
                ColumnSource::Entropy => rho.entropy(),
            })
            .collect()
    }
}

fn run_master(cfg: &RunConfig, sys: &OpenSystem, prefix: &Path) -> Result<Vec<PathBuf>, RunError> {
    let t_max = cfg.t_max.unwrap();
    let grid = TimeGrid::uniform(t_max, cfg.grid_points);
    let psi0 = cfg.initial_state.resolve(sys.dim())?;
    let rho0 = DensityMatrix::pure(&psi0);
    let rhos = analysis::master_solve(sys, &rho0, &grid);
    let cols = observable_columns(cfg, sys)?;
    let mut header = vec!["time".to_string()];
    header.extend(cols.headers.clone());
    let rows: Vec<Vec<f64>> = grid
        .times()
        .iter()
        .zip(rhos.iter())
        .map(|(&t, rho)| {
            let mut row = vec![t];
            row.extend(cols.values(rho));
            row
        })
        .collect();
    let path = prefix.with_extension("csv");
    write_csv(&path, &header, &rows)?;
    Ok(vec![path])
}

fn run_trajectories(
    cfg: &RunConfig,
    sys: &OpenSystem,
    prefix: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let t_max = cfg.t_max.unwrap();
    let grid: Vec<f64> = TimeGrid::uniform(t_max, cfg.grid_points).times().to_vec();
    let tcfg = TrajectoryConfig::new(t_max, grid, cfg.dt.unwrap(), cfg.norm_tol, cfg.seed)?;
    let psi0 = cfg.initial_state.resolve(sys.dim())?;
    let records = jump::run_ensemble(sys, &psi0, &tcfg, cfg.n_traj)?;
    let cols = observable_columns(cfg, sys)?;
    // Standard error is tracked for the first Hermitian observable.
    let designated = cols
        .ops
        .iter()
        .find(|o| o.hermitian)
        .map(|o| (o.name.clone(), o.op.clone()))
        .unwrap_or_else(|| {
            let op = crate::hilbert::Operator::ketbra(sys.dim(), 0, 0);
            ("pop0".to_string(), op)
        });
    let est = jump::ensemble_density(&records, &designated.1)?;
    let mut header = vec!["time".to_string()];
    header.extend(cols.headers.clone());
    header.push(format!("se_{}", designated.0));
    let rows: Vec<Vec<f64>> = est
        .grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![t];
            row.extend(cols.values(&est.means[k]));
            row.push(est.obs_se[k]);
            row
        })
        .collect();
    let data = prefix.with_extension("csv");
    write_csv(&data, &header, &rows)?;

    // Event record: one row per count across the ensemble.
    let events_path = events_file(prefix);
    let header = ["trajectory", "time", "channel", "pre_jump_norm2"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for rec in &records {
        for e in &rec.events {
            rows.push(vec![
                rec.stream as f64,
                e.time,
                e.channel as f64,
                e.pre_jump_norm2,
            ]);
        }
    }
    write_csv(&events_path, &header, &rows)?;
    Ok(vec![data, events_path])
}

pub fn events_file(prefix: &Path) -> PathBuf {
    prefix.with_extension("events.csv")
}

fn run_homodyne(
    cfg: &RunConfig,
    sys: &OpenSystem,
    prefix: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let t_max = cfg.t_max.unwrap();
    let channel = cfg.homodyne.as_ref().map(|h| h.channel).unwrap_or(0);
    let hcfg = HomodyneConfig::uniform(t_max, cfg.grid_points, cfg.dt.unwrap(), cfg.seed, channel)?;
    hcfg.validate_for(sys)?;
    let psi0 = cfg.initial_state.resolve(sys.dim())?;
    let records = diffusion::run_homodyne_ensemble(sys, &psi0, &hcfg, cfg.n_traj)?;
    let cols = observable_columns(cfg, sys)?;
    let designated = cols
        .ops
        .iter()
        .find(|o| o.hermitian)
        .map(|o| o.op.clone())
        .unwrap_or_else(|| crate::hilbert::Operator::ketbra(sys.dim(), 0, 0));
    let est = diffusion::homodyne_ensemble_density(&records, &designated)?;
    let stats = diffusion::homodyne_statistics(&records, &[])?;
    let mut header = vec!["time".to_string()];
    header.extend(cols.headers.clone());
    header.push("mean_current".into());
    header.push("current_se".into());
    let rows: Vec<Vec<f64>> = est
        .grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![t];
            row.extend(cols.values(&est.means[k]));
            row.push(stats.mean_current[k]);
            row.push(stats.current_se[k]);
            row
        })
        .collect();
    let data = prefix.with_extension("csv");
    write_csv(&data, &header, &rows)?;
    Ok(vec![data])
}

fn run_correlate(
    cfg: &RunConfig,
    sys: &OpenSystem,
    prefix: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let c = cfg.correlate.as_ref().unwrap();
    let op_a = resolve_single_operator(&c.op_a, sys)?;
    let op_b = resolve_single_operator(&c.op_b, sys)?;
    let lags: Vec<f64> = (0..c.n_lags)
        .map(|k| k as f64 * c.lag_max / (c.n_lags - 1) as f64)
        .collect();
    let (header, rows) = match c.method.as_str() {
        "regression" => {
            let rho_ss = analysis::steady_state(sys)?;
            let series = analysis::regression_correlation(sys, &op_a, &op_b, &rho_ss, &lags);
            let header = ["lag", "re", "im"].map(String::from).to_vec();
            let rows: Vec<Vec<f64>> = series
                .lags
                .iter()
                .zip(series.values.iter())
                .map(|(&l, v)| vec![l, v.re, v.im])
                .collect();
            (header, rows)
        }
        "pair" => {
            let rate = sys.min_positive_rate().unwrap_or(1.0);
            let pcfg = PairConfig {
                burn_in: c.burn_in.unwrap_or(20.0 / rate),
                n_kicks: c.kicks,
                stride: c.lag_max + 5.0 / rate,
                lags: lags.clone(),
                n_traj: c.n_traj,
                dt_int: cfg.dt.unwrap(),
                norm_tol: cfg.norm_tol,
                seed: cfg.seed,
            };
            let psi0 = cfg.initial_state.resolve(sys.dim())?;
            let series = jump::simulate_correlation_pair(sys, &op_a, &op_b, &psi0, &pcfg)?;
            let errs = series.std_errors.as_ref().unwrap();
            let header = ["lag", "re", "im", "se_re", "se_im"].map(String::from).to_vec();
            let rows: Vec<Vec<f64>> = series
                .lags
                .iter()
                .zip(series.values.iter().zip(errs.iter()))
                .map(|(&l, (v, (sr, si)))| vec![l, v.re, v.im, *sr, *si])
                .collect();
            (header, rows)
        }
        other => {
            return Err(ConfigError::Invalid(format!("unknown correlate method `{other}`")).into())
        }
    };
    let data = prefix.with_extension("csv");
    write_csv(&data, &header, &rows)?;
    Ok(vec![data])
}

fn run_counting(
    cfg: &RunConfig,
    sys: &OpenSystem,
    prefix: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let t_max = cfg.t_max.unwrap();
    let psi0 = cfg.initial_state.resolve(sys.dim())?;
    let rho0 = DensityMatrix::pure(&psi0);
    let all: Vec<usize> = (0..sys.channels().len()).collect();
    let (channels, m_max, method) = match cfg.counting.as_ref() {
        Some(c) => (
            c.channels.clone().unwrap_or_else(|| all.clone()),
            c.m_max,
            c.method.clone(),
        ),
        None => (all, None, "oracle".to_string()),
    };
    let m_max = match m_max {
        Some(m) => m,
        None => {
            let mean = analysis::expected_count(sys, &rho0, t_max, &channels)?;
            (4.0 * mean.max(1.0)).ceil() as usize
        }
    };
    let dist = match method.as_str() {
        "oracle" => analysis::counting_oracle(sys, &rho0, t_max, m_max, &channels)?,
        "histogram" => {
            let tcfg = TrajectoryConfig::new(
                t_max,
                vec![t_max],
                cfg.dt.unwrap(),
                cfg.norm_tol,
                cfg.seed,
            )?;
            let records = jump::run_ensemble(sys, &psi0, &tcfg, cfg.n_traj)?;
            let counts: Vec<usize> = records
                .iter()
                .map(|r| {
                    r.events
                        .iter()
                        .filter(|e| channels.contains(&e.channel))
                        .count()
                })
                .collect();
            CountingDistribution::from_event_counts(t_max, &counts, m_max)
        }
        other => {
            return Err(ConfigError::Invalid(format!("unknown counting method `{other}`")).into())
        }
    };
    let provenance = match dist.provenance {
        Provenance::Oracle => "oracle",
        Provenance::TrajectoryEstimate => "trajectory_estimate",
    };
    let path = if cfg.output.format.as_deref() == Some("csv") {
        let header = ["m", "p"].map(String::from).to_vec();
        let rows = dist
            .probabilities
            .iter()
            .enumerate()
            .map(|(m, &p)| vec![m as f64, p])
            .collect::<Vec<_>>();
        let path = prefix.with_extension("csv");
        write_csv(&path, &header, &rows)?;
        path
    } else {
        let doc = json!({
            "horizon": dist.horizon,
            "m_max": m_max,
            "channels": channels,
            "probabilities": dist.probabilities,
            "mean": dist.mean(),
            "provenance": provenance,
        });
        let path = prefix.with_extension("json");
        fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n")?;
        path
    };
    Ok(vec![path])
}

fn run_waiting(
    cfg: &RunConfig,
    sys: &OpenSystem,
    prefix: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let t_max = cfg.t_max.unwrap();
    let grid = TimeGrid::uniform(t_max, cfg.grid_points);
    let psi = cfg.initial_state.resolve(sys.dim())?;
    let mut header = vec!["time".to_string()];
    let mut columns = Vec::new();
    for (j, ch) in sys.channels().iter().enumerate() {
        header.push(format!("p_{}", ch.label));
        columns.push(analysis::waiting_time_oracle(sys, &psi, j, &grid)?);
    }
    let rows: Vec<Vec<f64>> = grid
        .times()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![t];
            for col in &columns {
                row.push(col[k]);
            }
            row
        })
        .collect();
    let data = prefix.with_extension("csv");
    write_csv(&data, &header, &rows)?;
    Ok(vec![data])
}
