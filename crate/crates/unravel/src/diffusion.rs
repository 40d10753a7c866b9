//! Homodyne (diffusive) unraveling: fixed-step Euler–Maruyama integration of
//! the normalized diffusive stochastic Schrödinger equation, current records
//! `I = <x>_c + dW/dt`, and ensemble statistics.
//!
//! One output channel is homodyned per run; the normalized form is
//! integrated with explicit renormalization each step so state norms stay
//! bounded over long horizons.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::analysis::{CorrelationSeries, Provenance};
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Operator, StateVector};
use crate::jump::EnsembleEstimate;
use crate::model::OpenSystem;
use crate::rng::trajectory_rng;
use crate::C64;

/// Discretization of a homodyne run. Grid times must be multiples of `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneConfig {
    pub t_max: f64,
    pub grid: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
    /// Index of the channel being homodyned.
    pub channel: usize,
}

impl HomodyneConfig {
    pub fn new(t_max: f64, grid: Vec<f64>, dt: f64, seed: u64, channel: usize) -> Result<Self> {
        if !(dt > 0.0 && dt <= t_max) {
            return Err(Error::InvalidConfig("need 0 < dt <= t_max".into()));
        }
        for w in grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "grid times must be strictly increasing".into(),
                ));
            }
        }
        if let (Some(&first), Some(&last)) = (grid.first(), grid.last()) {
            if first < 0.0 || last > t_max + 1e-9 * dt {
                return Err(Error::InvalidConfig(
                    "grid times must lie within [0, t_max]".into(),
                ));
            }
        }
        for &t in &grid {
            let steps = t / dt;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "grid time {t} is not a multiple of dt = {dt}"
                )));
            }
        }
        Ok(HomodyneConfig {
            t_max,
            grid,
            dt,
            seed,
            channel,
        })
    }

    /// `n` grid points over [0, t_max], snapped to step boundaries.
    pub fn uniform(t_max: f64, n: usize, dt: f64, seed: u64, channel: usize) -> Result<Self> {
        assert!(n >= 2);
        let total_steps = (t_max / dt).round() as usize;
        let grid: Vec<f64> = (0..n)
            .map(|k| {
                let step = ((k as f64 / (n - 1) as f64) * total_steps as f64).round() as usize;
                step as f64 * dt
            })
            .collect();
        let mut dedup = grid.clone();
        dedup.dedup();
        HomodyneConfig::new(t_max, dedup, dt, seed, channel)
    }

    /// Step-size rule: dt no larger than 1e-2 over the largest rate in the
    /// system.
    pub fn validate_for(&self, sys: &OpenSystem) -> Result<()> {
        if self.channel >= sys.channels().len() {
            return Err(Error::InvalidChannel {
                index: self.channel,
                count: sys.channels().len(),
            });
        }
        let max_rate = sys.max_rate();
        if max_rate > 0.0 && self.dt > 1e-2 / max_rate * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} exceeds 1e-2 / max rate = {}",
                self.dt,
                1e-2 / max_rate
            )));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    fn grid_steps(&self) -> Vec<usize> {
        self.grid
            .iter()
            .map(|&t| (t / self.dt).round() as usize)
            .collect()
    }
}

/// One diffusive realization: states and currents on the grid, Wiener
/// increments per step (one extra increment feeds a current sample landing
/// exactly on t_max).
#[derive(Debug, Clone)]
pub struct HomodyneRecord {
    pub config: HomodyneConfig,
    pub seed: u64,
    pub stream: u64,
    pub states: Vec<StateVector>,
    pub dw: Vec<f64>,
    pub currents: Vec<f64>,
}

/// Precomputed operators for the diffusive stepper.
struct DiffusionContext {
    h: Operator,
    a: Operator,
    x: Operator,
    ada: Operator,
    other_damping: Operator,
}

impl DiffusionContext {
    fn new(sys: &OpenSystem, channel: usize) -> Result<Self> {
        let a = sys.channel(channel)?.absorbed();
        let x = a.add(&a.dagger());
        let ada = a.dagger().dot(&a);
        let mut other = Operator::zeros(sys.dim());
        for (j, ch) in sys.channels().iter().enumerate() {
            if j != channel {
                let aj = ch.absorbed();
                other = other.add(&aj.dagger().dot(&aj));
            }
        }
        Ok(DiffusionContext {
            h: sys.hamiltonian().clone(),
            a,
            x,
            ada,
            other_damping: other,
        })
    }

    /// <x>_c on a normalized state.
    fn mean_x(&self, psi: &StateVector) -> f64 {
        crate::hilbert::expectation(&self.x, psi)
            .expect("dimension checked at construction")
            .re
    }

    /// One Euler–Maruyama step of the normalized diffusive equation,
    /// renormalized afterwards.
    fn step(&self, psi: &StateVector, dt: f64, dw: f64) -> StateVector {
        let mx = self.mean_x(psi);
        let i = C64::new(0.0, 1.0);
        // drift = -iH psi - 1/2 (a^dag a) psi + (mx/2) a psi - (mx^2/8) psi
        //         - 1/2 (other damping) psi
        let mut drift = self.h.apply(psi).scale(-i);
        drift = drift.add(&self.ada.apply(psi).scale(C64::new(-0.5, 0.0)));
        drift = drift.add(&self.a.apply(psi).scale(C64::new(0.5 * mx, 0.0)));
        drift = drift.add(&psi.scale(C64::new(-mx * mx / 8.0, 0.0)));
        drift = drift.add(
            &self
                .other_damping
                .apply(psi)
                .scale(C64::new(-0.5, 0.0)),
        );
        // diffusion = (a - mx/2) psi
        let diffusion = self
            .a
            .apply(psi)
            .add(&psi.scale(C64::new(-0.5 * mx, 0.0)));
        let out = psi
            .add(&drift.scale(C64::new(dt, 0.0)))
            .add(&diffusion.scale(C64::new(dw, 0.0)));
        out.normalized()
    }
}

/// Single Euler–Maruyama step of the diffusive SSE for channel `j`,
/// renormalized. Non-homodyned channels contribute their damping drift only.
pub fn diffusive_step(
    sys: &OpenSystem,
    psi: &StateVector,
    j: usize,
    dt: f64,
    dw: f64,
) -> Result<StateVector> {
    let ctx = DiffusionContext::new(sys, j)?;
    Ok(ctx.step(psi, dt, dw))
}

/// Norm of the unnormalized update after one step, for step-bias tests.
pub fn diffusive_step_unnormalized_norm2(
    sys: &OpenSystem,
    psi: &StateVector,
    j: usize,
    dt: f64,
    dw: f64,
) -> Result<f64> {
    let ctx = DiffusionContext::new(sys, j)?;
    let mx = ctx.mean_x(psi);
    let i = C64::new(0.0, 1.0);
    let mut drift = ctx.h.apply(psi).scale(-i);
    drift = drift.add(&ctx.ada.apply(psi).scale(C64::new(-0.5, 0.0)));
    drift = drift.add(&ctx.a.apply(psi).scale(C64::new(0.5 * mx, 0.0)));
    drift = drift.add(&psi.scale(C64::new(-mx * mx / 8.0, 0.0)));
    drift = drift.add(&ctx.other_damping.apply(psi).scale(C64::new(-0.5, 0.0)));
    let diffusion = ctx.a.apply(psi).add(&psi.scale(C64::new(-0.5 * mx, 0.0)));
    let out = psi
        .add(&drift.scale(C64::new(dt, 0.0)))
        .add(&diffusion.scale(C64::new(dw, 0.0)));
    Ok(out.norm2())
}

/// Fixed-step chain of diffusive steps with dW ~ Normal(0, dt); deterministic
/// per (seed, stream).
pub fn simulate_homodyne_trajectory(
    sys: &OpenSystem,
    psi0: &StateVector,
    cfg: &HomodyneConfig,
    stream: u64,
) -> Result<HomodyneRecord> {
    if sys.channels().len() != 1 {
        return Err(Error::InvalidConfig(
            "homodyne runs support exactly one channel; mix or canonicalize first".into(),
        ));
    }
    cfg.validate_for(sys)?;
    assert!(psi0.is_normalized(1e-10));
    let ctx = DiffusionContext::new(sys, cfg.channel)?;
    let mut rng = trajectory_rng(cfg.seed, stream);
    let n_steps = cfg.n_steps();
    let grid_steps = cfg.grid_steps();
    let sqrt_dt = cfg.dt.sqrt();

    let mut psi = psi0.clone();
    let mut states = Vec::with_capacity(grid_steps.len());
    let mut currents = Vec::with_capacity(grid_steps.len());
    let mut dw_all = Vec::with_capacity(n_steps + 1);
    let mut cursor = 0usize;
    for k in 0..=n_steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        let dw = z * sqrt_dt;
        dw_all.push(dw);
        if cursor < grid_steps.len() && grid_steps[cursor] == k {
            let t = k as f64 * cfg.dt;
            if let Some(guard) = sys.guard() {
                let pop: f64 = guard
                    .indices
                    .iter()
                    .map(|&i| psi.amplitude(i).norm_sqr())
                    .sum();
                if pop > guard.threshold {
                    return Err(Error::TruncationExceeded {
                        time: t,
                        population: pop,
                    });
                }
            }
            states.push(psi.clone());
            currents.push(ctx.mean_x(&psi) + dw / cfg.dt);
            cursor += 1;
        }
        if k < n_steps {
            psi = ctx.step(&psi, cfg.dt, dw);
            if !psi.norm2().is_finite() {
                return Err(Error::NonFiniteOperator);
            }
        }
    }
    debug_assert_eq!(states.len(), cfg.grid.len());
    Ok(HomodyneRecord {
        config: cfg.clone(),
        seed: cfg.seed,
        stream,
        states,
        dw: dw_all,
        currents,
    })
}

/// Simulate `n_traj` records on streams 0..n_traj (order-independent).
pub fn run_homodyne_ensemble(
    sys: &OpenSystem,
    psi0: &StateVector,
    cfg: &HomodyneConfig,
    n_traj: usize,
) -> Result<Vec<HomodyneRecord>> {
    (0..n_traj)
        .into_par_iter()
        .map(|i| simulate_homodyne_trajectory(sys, psi0, cfg, i as u64))
        .collect()
}

/// Ensemble mean of the conditional projectors with the standard error of a
/// designated observable, as for jump trajectories.
pub fn homodyne_ensemble_density(
    records: &[HomodyneRecord],
    observable: &Operator,
) -> Result<EnsembleEstimate> {
    if records.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let grid = records[0].config.grid.clone();
    if records.iter().any(|r| r.config.grid != grid) {
        return Err(Error::GridMismatch);
    }
    let n = records.len();
    let dim = records[0].states[0].dim();
    let mut means = Vec::with_capacity(grid.len());
    let mut obs_mean = Vec::with_capacity(grid.len());
    let mut obs_se = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let mut total = DensityMatrix::zeros(dim);
        for rec in records {
            total = total.add(&DensityMatrix::pure(&rec.states[k]));
        }
        means.push(total.scale(C64::new(1.0 / n as f64, 0.0)));
        let samples: Vec<f64> = records
            .iter()
            .map(|rec| {
                crate::hilbert::expectation(observable, &rec.states[k])
                    .expect("observable dimension")
                    .re
            })
            .collect();
        let (m, se) = crate::stats::mean_and_se(&samples);
        obs_mean.push(m);
        obs_se.push(se);
    }
    Ok(EnsembleEstimate {
        grid,
        means,
        n_traj: n,
        obs_mean,
        obs_se,
    })
}

/// Mean current on the grid plus the two-time current correlation estimated
/// at the given positive lags (in grid steps). The delta-correlated shot
/// noise at equal times is never estimated from data; the oracle carries it
/// as an analytic flag.
#[derive(Debug, Clone)]
pub struct HomodyneStatistics {
    pub grid: Vec<f64>,
    pub mean_current: Vec<f64>,
    pub current_se: Vec<f64>,
    pub correlation: CorrelationSeries,
}

pub fn homodyne_statistics(
    records: &[HomodyneRecord],
    lag_steps: &[usize],
) -> Result<HomodyneStatistics> {
    if records.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let grid = records[0].config.grid.clone();
    if records.iter().any(|r| r.config.grid != grid) {
        return Err(Error::GridMismatch);
    }
    if grid.len() >= 2 {
        let d0 = grid[1] - grid[0];
        if grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - d0).abs() > 1e-9 * d0)
        {
            return Err(Error::InvalidConfig(
                "current correlation needs a uniform grid".into(),
            ));
        }
    }
    let n = records.len();
    let mut mean_current = Vec::with_capacity(grid.len());
    let mut current_se = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let samples: Vec<f64> = records.iter().map(|r| r.currents[k]).collect();
        if n >= 2 {
            let (m, se) = crate::stats::mean_and_se(&samples);
            mean_current.push(m);
            current_se.push(se);
        } else {
            mean_current.push(samples[0]);
            current_se.push(0.0);
        }
    }
    let spacing = if grid.len() >= 2 { grid[1] - grid[0] } else { 0.0 };
    let mut lags = Vec::with_capacity(lag_steps.len());
    let mut values = Vec::with_capacity(lag_steps.len());
    let mut errs = Vec::with_capacity(lag_steps.len());
    for &m in lag_steps {
        if m == 0 || m >= grid.len() {
            return Err(Error::InvalidConfig(
                "correlation lags must be positive and inside the grid".into(),
            ));
        }
        // One time-averaged product per record, standard error across
        // records.
        let per_record: Vec<f64> = records
            .iter()
            .map(|r| {
                let cnt = grid.len() - m;
                (0..cnt)
                    .map(|k| r.currents[k] * r.currents[k + m])
                    .sum::<f64>()
                    / cnt as f64
            })
            .collect();
        let (mean, se) = if n >= 2 {
            crate::stats::mean_and_se(&per_record)
        } else {
            (per_record[0], 0.0)
        };
        lags.push(m as f64 * spacing);
        values.push(C64::new(mean, 0.0));
        errs.push((se, 0.0));
    }
    Ok(HomodyneStatistics {
        grid,
        mean_current,
        current_se,
        correlation: CorrelationSeries {
            lags,
            values,
            provenance: Provenance::TrajectoryEstimate,
            std_errors: Some(errs),
        },
    })
}

/// Stationary two-time current correlation estimated without retaining
/// records: each stream simulates one realization, time-averages the lag
/// products of its current over the window after `burn_steps`, and only the
/// per-record averages are kept. Lags are in steps of `dt`.
#[allow(clippy::too_many_arguments)]
pub fn stationary_current_correlation(
    sys: &OpenSystem,
    psi0: &StateVector,
    dt: f64,
    seed: u64,
    n_records: usize,
    burn_steps: usize,
    window_steps: usize,
    lag_steps: &[usize],
) -> Result<CorrelationSeries> {
    if sys.channels().len() != 1 {
        return Err(Error::InvalidConfig(
            "homodyne runs support exactly one channel".into(),
        ));
    }
    let max_lag = lag_steps.iter().copied().max().unwrap_or(0);
    if max_lag >= window_steps {
        return Err(Error::InvalidConfig(
            "window must cover the largest lag".into(),
        ));
    }
    let ctx = DiffusionContext::new(sys, 0)?;
    let sqrt_dt = dt.sqrt();
    let total_steps = burn_steps + window_steps;
    let per_record: Vec<Vec<f64>> = (0..n_records)
        .into_par_iter()
        .map(|stream| {
            let mut rng = trajectory_rng(seed, stream as u64);
            let mut psi = psi0.clone();
            let mut window = Vec::with_capacity(window_steps);
            for k in 0..total_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let dw = z * sqrt_dt;
                if k >= burn_steps {
                    window.push(ctx.mean_x(&psi) + dw / dt);
                }
                psi = ctx.step(&psi, dt, dw);
            }
            lag_steps
                .iter()
                .map(|&m| {
                    let cnt = window.len() - m;
                    (0..cnt).map(|k| window[k] * window[k + m]).sum::<f64>() / cnt as f64
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(lag_steps.len());
    let mut errs = Vec::with_capacity(lag_steps.len());
    for l in 0..lag_steps.len() {
        let samples: Vec<f64> = per_record.iter().map(|r| r[l]).collect();
        let (mean, se) = crate::stats::mean_and_se(&samples);
        values.push(C64::new(mean, 0.0));
        errs.push((se, 0.0));
    }
    Ok(CorrelationSeries {
        lags: lag_steps.iter().map(|&m| m as f64 * dt).collect(),
        values,
        provenance: Provenance::TrajectoryEstimate,
        std_errors: Some(errs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{master_solve, TimeGrid};
    use crate::model::{build_two_level, liouvillian};

    fn ground() -> StateVector {
        StateVector::basis(2, 0)
    }

    #[test]
    fn config_validation() {
        assert!(HomodyneConfig::new(1.0, vec![0.0, 0.5, 1.0], 1e-2, 1, 0).is_ok());
        assert!(HomodyneConfig::new(1.0, vec![0.0, 0.3333], 1e-2, 1, 0).is_err());
        assert!(HomodyneConfig::new(1.0, vec![0.5, 0.2], 1e-2, 1, 0).is_err());
        let cfg = HomodyneConfig::new(1.0, vec![0.0, 1.0], 2e-2, 1, 0).unwrap();
        let sys = build_two_level(1.0, -1.0, 1.0);
        assert!(cfg.validate_for(&sys).is_err(), "dt too large for rate 1");
        let cfg = HomodyneConfig::new(1.0, vec![0.0, 1.0], 1e-2, 1, 0).unwrap();
        assert!(cfg.validate_for(&sys).is_ok());
    }

    #[test]
    fn step_reduces_to_unitary_euler_at_zero_rate() {
        let sys = build_two_level(0.8, 0.2, 0.0);
        let psi = StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let dt = 1e-3;
        let out = diffusive_step(&sys, &psi, 0, dt, 0.37).unwrap();
        // a = 0, so the dW term vanishes and the step is pure -iH dt.
        let i = C64::new(0.0, 1.0);
        let want = psi
            .add(&sys.hamiltonian().apply(&psi).scale(-i * C64::new(dt, 0.0)))
            .normalized();
        assert!(out.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn step_leaves_dark_state_fixed() {
        let sys = build_two_level(0.0, 0.0, 1.0);
        for &dw in &[-0.1, 0.0, 0.2] {
            let out = diffusive_step(&sys, &ground(), 0, 1e-3, dw).unwrap();
            assert!(out.max_abs_diff(&ground()) < 1e-14);
        }
    }

    #[test]
    fn step_mean_generator_matches_liouvillian() {
        // Mean of (rho' - rho)/dt over many dW at fixed psi approaches
        // L rho to O(dt).
        let sys = build_two_level(1.0, -1.0, 1.0);
        let psi = StateVector::new(vec![C64::new(0.8, 0.1), C64::new(0.3, -0.5)]).normalized();
        let rho = DensityMatrix::pure(&psi);
        let l_rho = liouvillian(&sys).apply(&rho);
        let dt: f64 = 1e-3;
        let sqrt_dt = dt.sqrt();
        // Antithetic +-dW pairs cancel the odd-moment sampling noise that
        // would otherwise swamp the O(dt) bias being measured.
        let n = 100_000;
        let mut rng = trajectory_rng(5, 0);
        let mut acc = DensityMatrix::zeros(2);
        for _ in 0..n / 2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            for dw in [z * sqrt_dt, -z * sqrt_dt] {
                let out = diffusive_step(&sys, &psi, 0, dt, dw).unwrap();
                acc = acc.add(&DensityMatrix::pure(&out));
            }
        }
        let mean = acc.scale(C64::new(1.0 / n as f64, 0.0));
        let rate = mean.sub(&rho).scale(C64::new(1.0 / dt, 0.0));
        let err = rate.max_abs_diff(&l_rho);
        assert!(err < 5e-3, "generator mismatch {err}");
    }

    #[test]
    fn trajectory_determinism_and_noise_moments() {
        let sys = build_two_level(1.0, -1.0, 1.0);
        let cfg = HomodyneConfig::uniform(5.0, 11, 1e-3, 42, 0).unwrap();
        let a = simulate_homodyne_trajectory(&sys, &ground(), &cfg, 3).unwrap();
        let b = simulate_homodyne_trajectory(&sys, &ground(), &cfg, 3).unwrap();
        assert_eq!(a.dw, b.dw);
        assert_eq!(a.currents, b.currents);
        for (x, y) in a.states.iter().zip(b.states.iter()) {
            assert_eq!(x.max_abs_diff(y), 0.0);
        }
        for s in &a.states {
            assert!(s.is_normalized(1e-8));
        }
        for c in &a.currents {
            assert!(c.is_finite());
        }
        // dW moments: mean within 3 sigma of 0, variance within 3 sigma of dt.
        let n = a.dw.len() as f64;
        let mean_dw: f64 = a.dw.iter().sum::<f64>() / n;
        let sigma_mean = (cfg.dt / n).sqrt();
        assert!(mean_dw.abs() <= 3.0 * sigma_mean, "{mean_dw}");
        let var_dw: f64 = a.dw.iter().map(|w| w * w).sum::<f64>() / n;
        let sigma_var = cfg.dt * (2.0 / n).sqrt();
        assert!((var_dw - cfg.dt).abs() <= 3.0 * sigma_var);
    }

    #[test]
    fn vacuum_current_is_white_noise() {
        let sys = build_two_level(0.0, 0.0, 1.0);
        let n_steps = 4000;
        let t_max = n_steps as f64 * 1e-3;
        let grid: Vec<f64> = (0..n_steps).map(|k| k as f64 * 1e-3).collect();
        let cfg = HomodyneConfig::new(t_max, grid, 1e-3, 9, 0).unwrap();
        let rec = simulate_homodyne_trajectory(&sys, &ground(), &cfg, 0).unwrap();
        // <x> = 0 in |g>, so the current is dW/dt with variance 1/dt.
        let n = rec.currents.len() as f64;
        let mean: f64 = rec.currents.iter().sum::<f64>() / n;
        let sigma = (1.0 / cfg.dt / n).sqrt();
        assert!(mean.abs() <= 3.0 * sigma, "mean {mean}, sigma {sigma}");
        // Correlation vanishes at distinct times.
        let stats = homodyne_statistics(&[rec], &[1, 5, 20]).unwrap();
        for (v, (se, _)) in stats
            .correlation
            .values
            .iter()
            .zip(stats.correlation.std_errors.as_ref().unwrap())
        {
            // Single record: compare against the per-lag sample scale.
            let scale = 1.0 / cfg.dt / (n as f64).sqrt() * 3.0;
            let _ = se;
            assert!(v.re.abs() <= scale, "corr {v}");
        }
    }

    #[test]
    fn unnormalized_step_norm_deviation_is_order_dt() {
        // Norm after one raw step deviates from 1 by O(dt): halving dt
        // roughly halves the mean deviation.
        let sys = build_two_level(1.0, -1.0, 1.0);
        let psi = StateVector::new(vec![C64::new(0.7, 0.2), C64::new(0.4, -0.4)]).normalized();
        let mut devs = Vec::new();
        for &dt in &[1e-2, 1e-3, 1e-4] {
            let mut rng = trajectory_rng(8, 0);
            let n = 4000;
            let mut acc = 0.0;
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                let n2 =
                    diffusive_step_unnormalized_norm2(&sys, &psi, 0, dt, z * dt.sqrt()).unwrap();
                acc += (n2 - 1.0).abs();
            }
            devs.push(acc / n as f64);
        }
        // Dominated by the sqrt(dt) diffusion term times |dW| ~ sqrt(dt):
        // mean |n2 - 1| scales like dt within a factor.
        assert!(devs[0] > devs[1] && devs[1] > devs[2]);
        let ratio01 = devs[0] / devs[1];
        let ratio12 = devs[1] / devs[2];
        assert!(
            ratio01 > 5.0 && ratio01 < 20.0 && ratio12 > 5.0 && ratio12 < 20.0,
            "scaling ratios {ratio01}, {ratio12}"
        );
    }

    #[test]
    fn ensemble_mean_tracks_master_equation() {
        let sys = build_two_level(1.0, -1.0, 1.0);
        let cfg = HomodyneConfig::uniform(4.0, 21, 1e-3, 77, 0).unwrap();
        let records = run_homodyne_ensemble(&sys, &ground(), &cfg, 300).unwrap();
        let pe = Operator::ketbra(2, 1, 1);
        let est = homodyne_ensemble_density(&records, &pe).unwrap();
        let oracle = master_solve(
            &sys,
            &DensityMatrix::pure(&ground()),
            &TimeGrid::from_times(cfg.grid.clone()).unwrap(),
        );
        let worst = est
            .means
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| a.trace_distance(b))
            .fold(0.0_f64, f64::max);
        assert!(worst <= 0.12, "max trace distance {worst}");
    }

    #[test]
    fn mean_current_tracks_quadrature_for_pure_decay() {
        // From (|g> + |e>)/sqrt(2) the mean current is sqrt(Gamma) Tr{x rho}
        // with the bare quadrature: here Tr{x_abs rho(t)} = sqrt(G) e^{-G t/2}.
        let gamma = 1.0;
        let sys = build_two_level(0.0, 0.0, gamma);
        let psi0 = StateVector::new(vec![
            C64::new(1.0 / 2f64.sqrt(), 0.0),
            C64::new(1.0 / 2f64.sqrt(), 0.0),
        ]);
        let cfg = HomodyneConfig::uniform(3.0, 13, 1e-3, 2025, 0).unwrap();
        let records = run_homodyne_ensemble(&sys, &psi0, &cfg, 1500).unwrap();
        let stats = homodyne_statistics(&records, &[1]).unwrap();
        for (k, &t) in stats.grid.iter().enumerate() {
            let want = gamma.sqrt() * (-gamma * t / 2.0).exp();
            let dev = (stats.mean_current[k] - want).abs();
            assert!(
                dev <= 3.5 * stats.current_se[k],
                "t = {t}: {} vs {want} (se {})",
                stats.mean_current[k],
                stats.current_se[k]
            );
        }
    }
}
