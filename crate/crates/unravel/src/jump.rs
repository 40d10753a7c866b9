//! Photon-counting unraveling: non-Hermitian no-jump propagation, waiting
//! times located by norm monitoring, channel selection, jump application,
//! whole trajectories, ensemble estimates, photon-number-resolved densities
//! and paired-trajectory correlation estimates.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{CorrelationSeries, Provenance};
use crate::error::{Error, Result};
use crate::hilbert::{linalg, DensityMatrix, Operator, StateVector};
use crate::model::{effective_hamiltonian, OpenSystem};
use crate::rng::{open_unit, trajectory_rng};
use crate::C64;

/// Discretization and reproducibility parameters for jump trajectories.
///
/// `dt_int` is the norm-monitoring granularity, not a truncation error
/// source: propagation is by exact exponentials. `norm_tol` bounds the
/// residual of the waiting-time equation 1 - ||psi||^2 = r at the located
/// jump time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub t_max: f64,
    pub grid: Vec<f64>,
    pub dt_int: f64,
    pub norm_tol: f64,
    pub seed: u64,
}

impl TrajectoryConfig {
    pub fn new(
        t_max: f64,
        grid: Vec<f64>,
        dt_int: f64,
        norm_tol: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(dt_int > 0.0 && dt_int <= t_max) {
            return Err(Error::InvalidConfig(
                "dt_int must satisfy 0 < dt_int <= t_max".into(),
            ));
        }
        if !(norm_tol > 0.0 && norm_tol <= 1e-6) {
            return Err(Error::InvalidConfig(
                "norm_tol must lie in (0, 1e-6]".into(),
            ));
        }
        for w in grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "grid times must be strictly increasing".into(),
                ));
            }
        }
        if let (Some(&first), Some(&last)) = (grid.first(), grid.last()) {
            if first < 0.0 || last > t_max {
                return Err(Error::InvalidConfig(
                    "grid times must lie within [0, t_max]".into(),
                ));
            }
        }
        Ok(TrajectoryConfig {
            t_max,
            grid,
            dt_int,
            norm_tol,
            seed,
        })
    }

    /// Uniform grid of `n` points over [0, t_max] with default tolerances.
    pub fn uniform(t_max: f64, n: usize, dt_int: f64, seed: u64) -> Result<Self> {
        assert!(n >= 2);
        let dt = t_max / (n - 1) as f64;
        // The last point is pinned to t_max; k*dt can overshoot by an ulp.
        let grid = (0..n)
            .map(|k| if k == n - 1 { t_max } else { k as f64 * dt })
            .collect();
        TrajectoryConfig::new(t_max, grid, dt_int, 1e-10, seed)
    }
}

/// One detected count.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
    /// Squared norm of the unnormalized state just before the jump;
    /// equals the survival probability 1 - r of the drawn variate.
    pub pre_jump_norm2: f64,
}

/// One quantum-jump realization.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub config: TrajectoryConfig,
    pub seed: u64,
    pub stream: u64,
    pub events: Vec<JumpEvent>,
    /// Normalized conditional state at every grid time.
    pub states: Vec<StateVector>,
}

impl TrajectoryRecord {
    /// Number of counts in (0, t].
    pub fn count_up_to(&self, t: f64) -> usize {
        self.events.iter().take_while(|e| e.time <= t).count()
    }
}

/// Time-gridded ensemble average with a designated scalar observable.
#[derive(Debug, Clone)]
pub struct EnsembleEstimate {
    pub grid: Vec<f64>,
    pub means: Vec<DensityMatrix>,
    pub n_traj: usize,
    pub obs_mean: Vec<f64>,
    pub obs_se: Vec<f64>,
}

/// Cached exact-exponential propagation for the no-jump evolution.
///
/// Holds exp(-i H_eff dt_int 2^k) ladders in both directions so that the
/// waiting-time walk (doubling steps) and the bisection refinement
/// (halving steps) are single matrix-vector products.
pub struct NoJumpPropagator {
    heff: Operator,
    dt_int: f64,
    up: Vec<Operator>,
    down: Vec<Operator>,
}

const DOWN_LEVELS: usize = 64;

impl NoJumpPropagator {
    pub fn new(sys: &OpenSystem, dt_int: f64, t_max: f64) -> Self {
        assert!(dt_int > 0.0 && t_max > 0.0);
        let heff = effective_hamiltonian(sys);
        let base = propagator_matrix(&heff, dt_int);
        let up_levels = ((t_max / dt_int).log2().ceil().max(0.0) as usize) + 2;
        let mut up = Vec::with_capacity(up_levels);
        up.push(base.clone());
        for k in 1..up_levels {
            let prev = &up[k - 1];
            up.push(prev.dot(prev));
        }
        let mut down = Vec::with_capacity(DOWN_LEVELS);
        down.push(base);
        for k in 1..DOWN_LEVELS {
            down.push(propagator_matrix(&heff, dt_int / 2f64.powi(k as i32)));
        }
        NoJumpPropagator {
            heff,
            dt_int,
            up,
            down,
        }
    }

    pub fn effective_hamiltonian(&self) -> &Operator {
        &self.heff
    }

    /// Apply exp(-i H_eff dt_int 2^e); e may be negative (ladder down).
    fn apply_scaled(&self, e: i32, psi: &StateVector) -> StateVector {
        if e >= 0 {
            self.up[e as usize].apply(psi)
        } else {
            self.down[(-e) as usize].apply(psi)
        }
    }

    fn max_up_level(&self) -> i32 {
        self.up.len() as i32 - 1
    }

    /// exp(-i H_eff dt) |psi> for arbitrary nonnegative dt.
    pub fn propagate(&self, psi: &StateVector, dt: f64) -> StateVector {
        assert!(dt >= 0.0);
        if dt == 0.0 {
            return psi.clone();
        }
        propagator_matrix(&self.heff, dt).apply(psi)
    }
}

fn propagator_matrix(heff: &Operator, dt: f64) -> Operator {
    let gen = heff.entries().mapv(|z| z * C64::new(0.0, -dt));
    Operator::new(linalg::expm(&gen))
}

/// U_eff(t1, t0) |psi>, unnormalized; the squared norm is non-increasing in
/// t1 - t0 for any dissipative system.
pub fn propagate_nojump(
    sys: &OpenSystem,
    psi: &StateVector,
    t0: f64,
    t1: f64,
) -> Result<StateVector> {
    assert!(t1 >= t0, "propagation must run forward");
    crate::hilbert::expm_apply(&effective_hamiltonian(sys), t1 - t0, psi)
}

/// Outcome of a waiting-time search: the jump time (absolute) when the
/// survival target is reached before `t_max`, plus the unnormalized state at
/// the returned time.
pub struct WaitingTime {
    pub t_jump: Option<f64>,
    pub state: StateVector,
}

/// Locate the smallest t with 1 - ||U_eff(t, t_start) psi||^2 = r by a
/// doubling walk and bisection on the monitored norm.
pub fn sample_waiting_time(
    prop: &NoJumpPropagator,
    psi: &StateVector,
    t_start: f64,
    t_max: f64,
    r: f64,
    norm_tol: f64,
) -> WaitingTime {
    assert!(r > 0.0 && r < 1.0, "variate must lie in (0,1)");
    debug_assert!(psi.is_normalized(1e-9));
    let target = 1.0 - r; // survival at the jump time
    let horizon = t_max - t_start;
    assert!(horizon >= 0.0);

    let mut tau_lo = 0.0_f64; // offset from t_start
    let mut psi_lo = psi.clone();
    let mut n_lo = psi_lo.norm2();
    let mut e: i32 = 0; // current step is dt_int * 2^e
    loop {
        let h = prop.dt_int * 2f64.powi(e);
        if tau_lo + h >= horizon {
            // Partial step to the horizon.
            let rest = horizon - tau_lo;
            let psi_end = prop.propagate(&psi_lo, rest);
            let n_end = psi_end.norm2();
            debug_assert!(n_end <= n_lo + 1e-12, "norm must not increase");
            if n_end > target {
                return WaitingTime {
                    t_jump: None,
                    state: psi_end,
                };
            }
            // Crossing inside (tau_lo, horizon]: plain real bisection.
            return bisect_real(prop, psi_lo, tau_lo, rest, n_end, target, r, norm_tol, t_start);
        }
        let psi_next = prop.apply_scaled(e, &psi_lo);
        let n_next = psi_next.norm2();
        debug_assert!(n_next <= n_lo + 1e-12, "norm must not increase");
        if n_next <= target {
            // Crossing inside (tau_lo, tau_lo + h]: dyadic bisection.
            return bisect_dyadic(prop, psi_lo, tau_lo, e, target, r, norm_tol, t_start);
        }
        tau_lo += h;
        psi_lo = psi_next;
        n_lo = n_next;
        if e < prop.max_up_level() {
            e += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bisect_dyadic(
    prop: &NoJumpPropagator,
    mut psi_lo: StateVector,
    mut tau_lo: f64,
    bracket_e: i32,
    target: f64,
    r: f64,
    norm_tol: f64,
    t_start: f64,
) -> WaitingTime {
    let mut e = bracket_e - 1; // half the bracket width
    loop {
        if e < -(DOWN_LEVELS as i32 - 1) {
            // Resolution floor: accept the lower edge pushed forward by the
            // smallest available step.
            let psi_mid = prop.apply_scaled(-(DOWN_LEVELS as i32 - 1), &psi_lo);
            let t = t_start + tau_lo;
            return WaitingTime {
                t_jump: Some(t),
                state: psi_mid,
            };
        }
        let half = prop.dt_int * 2f64.powi(e);
        let psi_mid = prop.apply_scaled(e, &psi_lo);
        let n_mid = psi_mid.norm2();
        let resid = (1.0 - n_mid) - r;
        if resid.abs() <= norm_tol {
            return WaitingTime {
                t_jump: Some(t_start + tau_lo + half),
                state: psi_mid,
            };
        }
        if n_mid > target {
            tau_lo += half;
            psi_lo = psi_mid;
        }
        e -= 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn bisect_real(
    prop: &NoJumpPropagator,
    psi_lo: StateVector,
    tau_lo: f64,
    width: f64,
    n_hi: f64,
    target: f64,
    r: f64,
    norm_tol: f64,
    t_start: f64,
) -> WaitingTime {
    let mut lo = 0.0_f64;
    let mut hi = width;
    let mut psi_hi = prop.propagate(&psi_lo, width);
    let mut n = n_hi;
    for _ in 0..200 {
        if ((1.0 - n) - r).abs() <= norm_tol || (hi - lo) < 1e-300 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let psi_mid = prop.propagate(&psi_lo, mid);
        let n_mid = psi_mid.norm2();
        if n_mid > target {
            lo = mid;
        } else {
            hi = mid;
            psi_hi = psi_mid;
            n = n_mid;
        }
    }
    WaitingTime {
        t_jump: Some(t_start + tau_lo + hi),
        state: psi_hi,
    }
}

/// Pick the jump channel with probability gamma_j ||c_j psi||^2 / total by
/// cumulative inversion of `u`; ties break to the lowest index.
pub fn select_channel(psi: &StateVector, sys: &OpenSystem, u: f64) -> Result<usize> {
    let weights: Vec<f64> = sys
        .channels()
        .iter()
        .map(|ch| ch.absorbed().apply(psi).norm2())
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoJumpPossible);
    }
    let threshold = u * total;
    let mut cum = 0.0;
    for (j, w) in weights.iter().enumerate() {
        cum += w;
        if cum >= threshold && *w > 0.0 {
            return Ok(j);
        }
    }
    // Roundoff fell past the end; return the last channel with weight.
    Ok(weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("total was positive"))
}

/// Conditional state after a detected count: c_j psi / ||c_j psi||.
pub fn apply_jump(psi: &StateVector, sys: &OpenSystem, j: usize) -> Result<StateVector> {
    let ch = sys.channel(j)?;
    let phi = ch.op.apply(psi);
    let n2 = phi.norm2();
    if n2 <= 1e-280 {
        return Err(Error::ZeroAmplitudeJump);
    }
    Ok(phi.scale(C64::new(1.0 / n2.sqrt(), 0.0)))
}

fn check_guard(sys: &OpenSystem, psi: &StateVector, t: f64) -> Result<()> {
    if let Some(guard) = sys.guard() {
        let pop: f64 = guard
            .indices
            .iter()
            .map(|&i| psi.amplitude(i).norm_sqr())
            .sum();
        let pop = pop / psi.norm2();
        if pop > guard.threshold {
            return Err(Error::TruncationExceeded {
                time: t,
                population: pop,
            });
        }
    }
    Ok(())
}

/// Simulate one trajectory on the RNG stream `stream` of `cfg.seed`.
/// The output is a pure function of (sys, psi0, cfg, stream).
pub fn simulate_trajectory(
    sys: &OpenSystem,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
    stream: u64,
) -> Result<TrajectoryRecord> {
    let prop = NoJumpPropagator::new(sys, cfg.dt_int, cfg.t_max);
    simulate_trajectory_with(&prop, sys, psi0, cfg, stream)
}

pub fn simulate_trajectory_with(
    prop: &NoJumpPropagator,
    sys: &OpenSystem,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
    stream: u64,
) -> Result<TrajectoryRecord> {
    assert!(psi0.is_normalized(1e-10), "initial state must be normalized");
    let mut rng = trajectory_rng(cfg.seed, stream);
    let mut events = Vec::new();
    let mut states = Vec::with_capacity(cfg.grid.len());
    let mut cursor = 0usize; // next grid index to fill
    let mut t_anchor = 0.0_f64;
    let mut psi_anchor = psi0.clone();
    check_guard(sys, &psi_anchor, 0.0)?;

    while t_anchor <= cfg.t_max {
        let r = open_unit(&mut rng);
        let wt = sample_waiting_time(prop, &psi_anchor, t_anchor, cfg.t_max, r, cfg.norm_tol);
        let segment_end = wt.t_jump.unwrap_or(cfg.t_max);
        while cursor < cfg.grid.len() && cfg.grid[cursor] <= segment_end {
            let tg = cfg.grid[cursor];
            let state = if tg == t_anchor {
                psi_anchor.clone()
            } else {
                prop.propagate(&psi_anchor, tg - t_anchor).normalized()
            };
            check_guard(sys, &state, tg)?;
            states.push(state);
            cursor += 1;
        }
        match wt.t_jump {
            None => break,
            Some(tj) => {
                let u: f64 = {
                    use rand::Rng;
                    rng.random()
                };
                let j = select_channel(&wt.state, sys, u)?;
                events.push(JumpEvent {
                    time: tj,
                    channel: j,
                    pre_jump_norm2: wt.state.norm2(),
                });
                psi_anchor = apply_jump(&wt.state, sys, j)?;
                check_guard(sys, &psi_anchor, tj)?;
                t_anchor = tj;
                if t_anchor >= cfg.t_max {
                    break;
                }
            }
        }
    }
    debug_assert_eq!(states.len(), cfg.grid.len());
    Ok(TrajectoryRecord {
        config: cfg.clone(),
        seed: cfg.seed,
        stream,
        events,
        states,
    })
}

/// Simulate `n_traj` independent trajectories on streams 0..n_traj.
/// Records come back in stream order, so the result is identical under any
/// worker count.
pub fn run_ensemble(
    sys: &OpenSystem,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
    n_traj: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let prop = NoJumpPropagator::new(sys, cfg.dt_int, cfg.t_max);
    (0..n_traj)
        .into_par_iter()
        .map(|i| simulate_trajectory_with(&prop, sys, psi0, cfg, i as u64))
        .collect()
}

fn check_shared_grid(records: &[TrajectoryRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let grid = &records[0].config.grid;
    if records.iter().any(|r| &r.config.grid != grid) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Mean projector per grid time, with the standard error of `observable`.
///
/// Summation is bucketed by event count (ascending) and runs in stream order
/// inside each bucket, so the photon-number-resolved parts add up to the
/// mean exactly.
pub fn ensemble_density(
    records: &[TrajectoryRecord],
    observable: &Operator,
) -> Result<EnsembleEstimate> {
    check_shared_grid(records)?;
    let grid = records[0].config.grid.clone();
    let n = records.len();
    let dim = records[0].states[0].dim();
    let mut means = Vec::with_capacity(grid.len());
    let mut obs_mean = Vec::with_capacity(grid.len());
    let mut obs_se = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let total = bucketed_projector_sum(records, k, t, dim);
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

/// Projector sum over the records whose count-up-to-t equals `class`,
/// accumulated from zero in record order.
fn class_projector_sum(
    records: &[TrajectoryRecord],
    k: usize,
    t: f64,
    dim: usize,
    class: usize,
) -> DensityMatrix {
    let mut sum = DensityMatrix::zeros(dim);
    for rec in records {
        if rec.count_up_to(t) == class {
            sum = sum.add(&DensityMatrix::pure(&rec.states[k]));
        }
    }
    sum
}

/// Sum of state projectors at grid index k, as the sum of per-class
/// subtotals in ascending count order. With a power-of-two record count this
/// makes the photon-number partition bitwise exact.
fn bucketed_projector_sum(
    records: &[TrajectoryRecord],
    k: usize,
    t: f64,
    dim: usize,
) -> DensityMatrix {
    let max_count = records
        .iter()
        .map(|r| r.count_up_to(t))
        .max()
        .unwrap_or(0);
    let mut total = DensityMatrix::zeros(dim);
    for class in 0..=max_count {
        total = total.add(&class_projector_sum(records, k, t, dim, class));
    }
    total
}

/// Unnormalized n-count part of the ensemble density and the empirical
/// probability of exactly n counts, per grid time.
pub fn photon_resolved_density(
    records: &[TrajectoryRecord],
    n: usize,
) -> Result<(Vec<DensityMatrix>, Vec<f64>)> {
    check_shared_grid(records)?;
    let grid = &records[0].config.grid;
    let n_traj = records.len();
    let dim = records[0].states[0].dim();
    let mut parts = Vec::with_capacity(grid.len());
    let mut probs = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let bucket = class_projector_sum(records, k, t, dim, n);
        parts.push(bucket.scale(C64::new(1.0 / n_traj as f64, 0.0)));
        let cnt = records.iter().filter(|r| r.count_up_to(t) == n).count();
        probs.push(cnt as f64 / n_traj as f64);
    }
    Ok((parts, probs))
}

/// Configuration of the paired-trajectory correlation estimator.
#[derive(Debug, Clone)]
pub struct PairConfig {
    /// First kick time; the system should have relaxed by then.
    pub burn_in: f64,
    /// Number of kicks per trajectory.
    pub n_kicks: usize,
    /// Distance between kicks; must cover the lag horizon.
    pub stride: f64,
    /// Lags (from 0, strictly increasing) at which the estimate is sampled.
    pub lags: Vec<f64>,
    pub n_traj: usize,
    pub dt_int: f64,
    pub norm_tol: f64,
    pub seed: u64,
}

impl PairConfig {
    fn validate(&self) -> Result<()> {
        if self.lags.is_empty() || self.lags[0] < 0.0 {
            return Err(Error::InvalidConfig("lags must start at >= 0".into()));
        }
        if self.lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("lags must be increasing".into()));
        }
        let horizon = *self.lags.last().unwrap();
        if self.n_kicks > 1 && self.stride < horizon {
            return Err(Error::InvalidConfig(
                "kick stride must cover the lag horizon".into(),
            ));
        }
        if self.n_kicks == 0 || self.n_traj == 0 {
            return Err(Error::InvalidConfig("need at least one kick and trajectory".into()));
        }
        Ok(())
    }
}

/// Estimate <A(t0 + tau) B(t0)> by propagating the pair (psi, B psi) through
/// a common jump record, averaging <psi|A|psi+>/||psi||^2 over trajectories
/// and kick times.
pub fn simulate_correlation_pair(
    sys: &OpenSystem,
    a: &Operator,
    b: &Operator,
    psi0: &StateVector,
    cfg: &PairConfig,
) -> Result<CorrelationSeries> {
    cfg.validate()?;
    let horizon = *cfg.lags.last().unwrap();
    let t_max = cfg.burn_in + (cfg.n_kicks - 1) as f64 * cfg.stride + horizon + cfg.dt_int;
    let prop = NoJumpPropagator::new(sys, cfg.dt_int, t_max);
    let per_traj: Vec<Vec<Vec<C64>>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| pair_trajectory(&prop, sys, a, b, psi0, cfg, i as u64, t_max))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<Vec<C64>> = per_traj.into_iter().flatten().collect();
    let n = samples.len();
    let mut values = Vec::with_capacity(cfg.lags.len());
    let mut errs = Vec::with_capacity(cfg.lags.len());
    for l in 0..cfg.lags.len() {
        let re: Vec<f64> = samples.iter().map(|s| s[l].re).collect();
        let im: Vec<f64> = samples.iter().map(|s| s[l].im).collect();
        if n >= 2 {
            let (mr, ser) = crate::stats::mean_and_se(&re);
            let (mi, sei) = crate::stats::mean_and_se(&im);
            values.push(C64::new(mr, mi));
            errs.push((ser, sei));
        } else {
            values.push(samples[0][l]);
            errs.push((0.0, 0.0));
        }
    }
    Ok(CorrelationSeries {
        lags: cfg.lags.clone(),
        values,
        provenance: Provenance::TrajectoryEstimate,
        std_errors: Some(errs),
    })
}

/// An active kick window: the pair (w, w+) anchored at the time of the last
/// jump (or the kick itself), sharing every linear map thereafter. Common
/// rescalings leave the sampled ratio invariant.
struct PairWindow {
    t0: f64,
    t_anchor: f64,
    next_lag: usize,
    w_anchor: StateVector,
    wp_anchor: StateVector,
    samples: Vec<C64>,
}

#[allow(clippy::too_many_arguments)]
fn pair_trajectory(
    prop: &NoJumpPropagator,
    sys: &OpenSystem,
    a: &Operator,
    b: &Operator,
    psi0: &StateVector,
    cfg: &PairConfig,
    stream: u64,
    t_max: f64,
) -> Result<Vec<Vec<C64>>> {
    let mut rng: ChaCha8Rng = trajectory_rng(cfg.seed, stream);
    let mut out = Vec::with_capacity(cfg.n_kicks);
    let mut t_anchor = 0.0_f64;
    let mut psi_anchor = psi0.clone();
    let mut window: Option<PairWindow> = None;
    let mut next_kick = 0usize;

    while t_anchor < t_max {
        let r = open_unit(&mut rng);
        let wt = sample_waiting_time(prop, &psi_anchor, t_anchor, t_max, r, cfg.norm_tol);
        let segment_end = wt.t_jump.unwrap_or(t_max);

        // Process kicks and lag samples inside (t_anchor, segment_end].
        loop {
            let kick_time = if window.is_none() && next_kick < cfg.n_kicks {
                Some(cfg.burn_in + next_kick as f64 * cfg.stride)
            } else {
                None
            };
            let sample_time = window
                .as_ref()
                .map(|w| w.t0 + cfg.lags[w.next_lag]);
            let action = match (kick_time, sample_time) {
                (Some(k), None) => Some((k, true)),
                (None, Some(s)) => Some((s, false)),
                (None, None) => None,
                (Some(_), Some(_)) => unreachable!("kick only fires without a window"),
            };
            let Some((t_act, is_kick)) = action else { break };
            if t_act > segment_end {
                break;
            }
            if is_kick {
                let w = if t_act == t_anchor {
                    psi_anchor.clone()
                } else {
                    prop.propagate(&psi_anchor, t_act - t_anchor)
                };
                let scale = C64::new(1.0 / w.norm2().sqrt(), 0.0);
                let w = w.scale(scale);
                let wp = b.apply(&w);
                window = Some(PairWindow {
                    t0: t_act,
                    t_anchor: t_act,
                    next_lag: 0,
                    w_anchor: w,
                    wp_anchor: wp,
                    samples: Vec::with_capacity(cfg.lags.len()),
                });
            } else {
                let win = window.as_mut().unwrap();
                let dt = t_act - win.t_anchor;
                let w = prop.propagate(&win.w_anchor, dt);
                let wp = prop.propagate(&win.wp_anchor, dt);
                win.samples.push(pair_value(a, &w, &wp));
                win.next_lag += 1;
                if win.next_lag >= cfg.lags.len() {
                    out.push(std::mem::take(&mut win.samples));
                    window = None;
                    next_kick += 1;
                }
            }
        }

        match wt.t_jump {
            None => break,
            Some(tj) => {
                let u: f64 = {
                    use rand::Rng;
                    rng.random()
                };
                let j = select_channel(&wt.state, sys, u)?;
                let post = apply_jump(&wt.state, sys, j)?;
                // Push the pair through the same jump with the common
                // rescaling that renormalizes the primary member.
                if let Some(win) = &mut window {
                    let dt = tj - win.t_anchor;
                    let w_pre = prop.propagate(&win.w_anchor, dt);
                    let wp_pre = prop.propagate(&win.wp_anchor, dt);
                    let ch = sys.channel(j)?;
                    let jw = ch.op.apply(&w_pre);
                    let jwp = ch.op.apply(&wp_pre);
                    let mu = C64::new(1.0 / jw.norm2().sqrt(), 0.0);
                    win.w_anchor = jw.scale(mu);
                    win.wp_anchor = jwp.scale(mu);
                    win.t_anchor = tj;
                }
                psi_anchor = post;
                t_anchor = tj;
            }
        }
    }
    Ok(out)
}

fn pair_value(a: &Operator, w: &StateVector, wp: &StateVector) -> C64 {
    let awp = a.apply(wp);
    w.inner(&awp) / C64::new(w.norm2(), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{
        master_solve, regression_correlation, steady_state, waiting_cdf, TimeGrid,
    };
    use crate::hilbert::expectation;
    use crate::model::{build_jcm_ion, build_three_level, build_two_level};

    fn driven_atom() -> OpenSystem {
        build_two_level(1.0, -1.0, 1.0)
    }

    fn ground(dim: usize) -> StateVector {
        StateVector::basis(dim, 0)
    }

    #[test]
    fn config_validation() {
        assert!(TrajectoryConfig::new(10.0, vec![0.0, 1.0], 0.01, 1e-10, 1).is_ok());
        assert!(TrajectoryConfig::new(10.0, vec![0.0, 1.0], 0.0, 1e-10, 1).is_err());
        assert!(TrajectoryConfig::new(10.0, vec![0.0, 1.0], 0.01, 1e-5, 1).is_err());
        assert!(TrajectoryConfig::new(10.0, vec![1.0, 0.5], 0.01, 1e-10, 1).is_err());
        assert!(TrajectoryConfig::new(10.0, vec![0.0, 11.0], 0.01, 1e-10, 1).is_err());
    }

    #[test]
    fn propagate_nojump_pure_decay_norm() {
        let gamma = 1.0;
        let sys = build_two_level(0.0, 0.0, gamma);
        let psi = StateVector::basis(2, 1);
        for &t in &[0.2, 1.0, 4.0] {
            let out = propagate_nojump(&sys, &psi, 0.5, 0.5 + t).unwrap();
            assert!((out.norm2() - (-gamma * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn propagate_nojump_closed_system_preserves_norm() {
        let sys = build_two_level(0.9, 0.4, 0.0);
        let psi = StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let out = propagate_nojump(&sys, &psi, 0.0, 25.0).unwrap();
        assert!((out.norm2() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn propagate_nojump_matches_dense_exponential() {
        let sys = driven_atom();
        let psi = ground(2);
        let direct = propagate_nojump(&sys, &psi, 0.0, 10.0).unwrap();
        // Step the same evolution in many exact pieces.
        let prop = NoJumpPropagator::new(&sys, 0.01, 11.0);
        let mut chained = psi.clone();
        for _ in 0..1000 {
            chained = prop.apply_scaled(0, &chained);
        }
        assert!(direct.max_abs_diff(&chained) < 1e-9);
    }

    #[test]
    fn waiting_time_pure_decay_closed_form() {
        let gamma = 2.0;
        let sys = build_two_level(0.0, 0.0, gamma);
        let prop = NoJumpPropagator::new(&sys, 0.01, 100.0);
        let psi = StateVector::basis(2, 1);
        for &r in &[0.1, 0.5, 1.0 - (-1.0f64).exp()] {
            let wt = sample_waiting_time(&prop, &psi, 3.0, 103.0, r, 1e-10);
            let want = 3.0 - (1.0 - r).ln() / gamma;
            let got = wt.t_jump.expect("decay always jumps");
            assert!((got - want).abs() < 1e-8, "r={r}: {got} vs {want}");
            assert!((wt.state.norm2() - (1.0 - r)).abs() <= 1e-10);
        }
        // r = 1 - e^{-1} gives a unit mean wait scaled by the rate.
        let r = 1.0 - (-1.0f64).exp();
        let wt = sample_waiting_time(&prop, &psi, 0.0, 100.0, r, 1e-10);
        assert!((wt.t_jump.unwrap() - 1.0 / gamma).abs() < 1e-8);
    }

    #[test]
    fn waiting_time_dark_state_never_jumps() {
        let sys = build_two_level(0.0, 0.0, 1.0);
        let prop = NoJumpPropagator::new(&sys, 0.01, 50.0);
        let psi = ground(2);
        for &r in &[0.01, 0.4, 0.9999] {
            let wt = sample_waiting_time(&prop, &psi, 0.0, 50.0, r, 1e-10);
            assert!(wt.t_jump.is_none());
            assert!((wt.state.norm2() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn waiting_time_matches_fine_grid_tabulation() {
        // Inverse-CDF sample against a dt = 1e-4 tabulation of 1 - ||psi||^2.
        let sys = driven_atom();
        let prop = NoJumpPropagator::new(&sys, 0.01, 40.0);
        let psi = ground(2);
        for &r in &[0.2, 0.5, 0.8, 0.95] {
            let wt = sample_waiting_time(&prop, &psi, 0.0, 40.0, r, 1e-10);
            let t = wt.t_jump.unwrap();
            // Tabulate around the reported time on the fine grid.
            let dt = 1e-4;
            let mut t_cross = None;
            let mut k = 0usize;
            let mut psi_k = psi.clone();
            let step = propagator_matrix(prop.effective_hamiltonian(), dt);
            while (k as f64) * dt < 40.0 {
                if 1.0 - psi_k.norm2() >= r {
                    t_cross = Some(k as f64 * dt);
                    break;
                }
                psi_k = step.apply(&psi_k);
                k += 1;
            }
            let t_tab = t_cross.expect("crossing exists");
            assert!((t - t_tab).abs() <= 1e-4 + 1e-6, "r={r}: {t} vs {t_tab}");
        }
    }

    #[test]
    fn waiting_times_keep_norm_monotone() {
        // Spot check norm monotonicity along sampled no-jump segments.
        let sys = driven_atom();
        let prop = NoJumpPropagator::new(&sys, 0.05, 30.0);
        let psi = ground(2);
        let mut prev = 1.0;
        for step in 1..=300 {
            let t = step as f64 * 0.1;
            let n = prop.propagate(&psi, t).norm2();
            assert!(n <= prev + 1e-12);
            prev = n;
        }
    }

    #[test]
    fn select_channel_basics() {
        let sys = build_three_level(1.0, 0.5, 0.0, 0.0, 1.0, 0.5);
        // State with excited amplitude only on e: only channel 0 possible.
        let psi = StateVector::basis(3, 1);
        for &u in &[0.0, 0.3, 0.99] {
            assert_eq!(select_channel(&psi, &sys, u).unwrap(), 0);
        }
        // Ground state: no jump possible.
        assert!(matches!(
            select_channel(&ground(3), &sys, 0.5),
            Err(Error::NoJumpPossible)
        ));
    }

    #[test]
    fn select_channel_frequencies_within_binomial_bands() {
        // Weights 0.3 / 0.7 over 10^4 draws.
        let w_e = 0.3_f64;
        let psi = StateVector::new(vec![
            C64::new(0.0, 0.0),
            C64::new(w_e.sqrt(), 0.0),
            C64::new((1.0 - w_e).sqrt(), 0.0),
        ]);
        let sys = build_three_level(0.0, 0.0, 0.0, 0.0, 1.0, 1.0);
        let mut rng = trajectory_rng(42, 0);
        let n = 10_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let u: f64 = {
                use rand::Rng;
                rng.random()
            };
            if select_channel(&psi, &sys, u).unwrap() == 0 {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let sigma = (w_e * (1.0 - w_e) / n as f64).sqrt();
        assert!(
            (p_hat - w_e).abs() <= 3.0 * sigma,
            "p_hat = {p_hat}, want {w_e} +- {}",
            3.0 * sigma
        );
    }

    #[test]
    fn apply_jump_examples() {
        let sys = build_two_level(1.0, 0.0, 1.0);
        let plus = StateVector::new(vec![
            C64::new(1.0 / 2f64.sqrt(), 0.0),
            C64::new(1.0 / 2f64.sqrt(), 0.0),
        ]);
        let out = apply_jump(&plus, &sys, 0).unwrap();
        assert!(out.max_abs_diff(&ground(2)) < 1e-14);
        assert!(matches!(
            apply_jump(&ground(2), &sys, 0),
            Err(Error::ZeroAmplitudeJump)
        ));

        // JCM channel on the dressed state (|0,e> + |1,g>)/sqrt(2) -> |0,g>.
        let jcm = build_jcm_ion(1.0, -1.0, 0.4, 0.1, 0.2, 3, true);
        let mut amps = vec![C64::new(0.0, 0.0); jcm.dim()];
        amps[1] = C64::new(1.0 / 2f64.sqrt(), 0.0); // |0, e>
        amps[2] = C64::new(1.0 / 2f64.sqrt(), 0.0); // |1, g>
        let dressed = StateVector::new(amps);
        let out = apply_jump(&dressed, &jcm, 0).unwrap();
        assert!((out.amplitude(0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_closed_system_has_no_events() {
        let sys = build_two_level(1.2, 0.3, 0.0);
        let cfg = TrajectoryConfig::uniform(5.0, 11, 0.01, 7).unwrap();
        let rec = simulate_trajectory(&sys, &ground(2), &cfg, 0).unwrap();
        assert!(rec.events.is_empty());
        // States equal the unitary evolution.
        for (k, &t) in cfg.grid.iter().enumerate() {
            let want = crate::hilbert::expm_apply(sys.hamiltonian(), t, &ground(2)).unwrap();
            assert!(rec.states[k].max_abs_diff(&want) < 1e-9);
        }
    }

    #[test]
    fn trajectory_determinism() {
        let sys = driven_atom();
        let cfg = TrajectoryConfig::uniform(20.0, 41, 0.01, 99).unwrap();
        let a = simulate_trajectory(&sys, &ground(2), &cfg, 5).unwrap();
        let b = simulate_trajectory(&sys, &ground(2), &cfg, 5).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(b.events.iter()) {
            assert_eq!(x.time.to_bits(), y.time.to_bits());
            assert_eq!(x.channel, y.channel);
        }
        for (x, y) in a.states.iter().zip(b.states.iter()) {
            assert_eq!(x.max_abs_diff(y), 0.0);
        }
        // And the ensemble runner reproduces the same record on its stream.
        let ens = run_ensemble(&sys, &ground(2), &cfg, 8).unwrap();
        let c = &ens[5];
        assert_eq!(c.events.len(), a.events.len());
        for (x, y) in c.events.iter().zip(a.events.iter()) {
            assert_eq!(x.time.to_bits(), y.time.to_bits());
        }
    }

    #[test]
    fn trajectory_states_are_normalized_and_events_ordered() {
        let sys = driven_atom();
        let cfg = TrajectoryConfig::uniform(50.0, 101, 0.01, 3).unwrap();
        let rec = simulate_trajectory(&sys, &ground(2), &cfg, 1).unwrap();
        assert!(!rec.events.is_empty());
        for s in &rec.states {
            assert!(s.is_normalized(1e-10));
        }
        for w in rec.events.windows(2) {
            assert!(w[1].time > w[0].time);
        }
        for e in &rec.events {
            assert!(e.time > 0.0 && e.time <= cfg.t_max);
            assert!(e.pre_jump_norm2 > 0.0 && e.pre_jump_norm2 <= 1.0);
        }
    }

    #[test]
    fn mean_jump_count_matches_stationary_rate() {
        // Mean count over [0,T] ~ Gamma * rho_ee^ss * T once relaxed.
        let sys = driven_atom();
        let t_max = 200.0;
        let cfg = TrajectoryConfig::new(t_max, vec![t_max], 0.01, 1e-10, 2024).unwrap();
        let records = run_ensemble(&sys, &ground(2), &cfg, 500).unwrap();
        let counts: Vec<f64> = records.iter().map(|r| r.events.len() as f64).collect();
        let (mean, se) = crate::stats::mean_and_se(&counts);
        let want = t_max / 7.0;
        assert!(
            (mean - want).abs() <= 3.0 * se,
            "mean {mean} vs {want} (se {se})"
        );
    }

    #[test]
    fn ensemble_density_matches_master_equation() {
        let sys = driven_atom();
        let cfg = TrajectoryConfig::uniform(10.0, 51, 0.01, 11).unwrap();
        let records = run_ensemble(&sys, &ground(2), &cfg, 600).unwrap();
        let pe = Operator::ketbra(2, 1, 1);
        let est = ensemble_density(&records, &pe).unwrap();
        for mean in &est.means {
            assert!((mean.trace().re - 1.0).abs() < 1e-12);
            assert!(mean.hermiticity_deviation() < 1e-10);
            assert!(mean.min_eigenvalue() > -1e-8);
        }
        let grid = TimeGrid::from_times(cfg.grid.clone()).unwrap();
        let rho0 = DensityMatrix::pure(&ground(2));
        let oracle = master_solve(&sys, &rho0, &grid);
        let worst = est
            .means
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| a.trace_distance(b))
            .fold(0.0_f64, f64::max);
        assert!(worst <= 0.08, "max trace distance {worst}");
    }

    #[test]
    fn photon_resolved_partition_is_exact() {
        let sys = driven_atom();
        let cfg = TrajectoryConfig::uniform(6.0, 13, 0.01, 21).unwrap();
        // Power-of-two ensemble size keeps the partition bitwise exact.
        let records = run_ensemble(&sys, &ground(2), &cfg, 128).unwrap();
        let pe = Operator::ketbra(2, 1, 1);
        let est = ensemble_density(&records, &pe).unwrap();
        let max_n = records
            .iter()
            .map(|r| r.events.len())
            .max()
            .unwrap();
        for (k, _) in cfg.grid.iter().enumerate() {
            let mut sum = DensityMatrix::zeros(2);
            let mut p_total = 0.0;
            for n in 0..=max_n {
                let (parts, probs) = photon_resolved_density(&records, n).unwrap();
                sum = sum.add(&parts[k]);
                p_total += probs[k];
            }
            assert_eq!(sum.max_abs_diff(&est.means[k]), 0.0, "grid index {k}");
            assert!((p_total - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn photon_resolved_pure_decay_probabilities() {
        let gamma = 1.0;
        let sys = build_two_level(0.0, 0.0, gamma);
        let cfg = TrajectoryConfig::uniform(2.0, 5, 0.01, 31).unwrap();
        let excited = StateVector::basis(2, 1);
        let records = run_ensemble(&sys, &excited, &cfg, 2000).unwrap();
        let (_, p0) = photon_resolved_density(&records, 0).unwrap();
        let (_, p1) = photon_resolved_density(&records, 1).unwrap();
        for (k, &t) in cfg.grid.iter().enumerate() {
            let want0 = (-gamma * t).exp();
            let sigma = (want0 * (1.0 - want0) / 2000.0).sqrt().max(1e-9);
            assert!(
                (p0[k] - want0).abs() <= 3.0 * sigma + 1e-9,
                "t={t}: {} vs {want0}",
                p0[k]
            );
            assert!((p0[k] + p1[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn waiting_time_law_ks() {
        let sys = driven_atom();
        let prop = NoJumpPropagator::new(&sys, 0.01, 400.0);
        let psi = ground(2);
        let n = 5000;
        let mut rng = trajectory_rng(7, 0);
        let mut waits = Vec::with_capacity(n);
        while waits.len() < n {
            let r = open_unit(&mut rng);
            if let Some(t) = sample_waiting_time(&prop, &psi, 0.0, 400.0, r, 1e-10).t_jump {
                waits.push(t);
            }
        }
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = crate::stats::ks_statistic(&waits, |t| waiting_cdf(&sys, &psi, t));
        let p = crate::stats::ks_pvalue(n, d);
        assert!(p >= 0.01, "KS p-value {p} (D = {d})");
    }

    #[test]
    fn appendix_lemma_normalized_vs_unnormalized_update() {
        // One Euler step of the normalized equation agrees with
        // normalize(one step of the unnormalized equation) to O(dt^2), in
        // both the drift and the jump branch.
        let sys = driven_atom();
        let heff = effective_hamiltonian(&sys);
        let drift = heff.scale(C64::new(0.0, -1.0)); // A = -i H_eff
        let a_dag_a = drift.add(&drift.dagger()); // A + A^dag
        let c_op = &sys.channels()[0].op;
        let dt = 1e-5;
        let mut rng = trajectory_rng(3, 9);
        for _ in 0..100 {
            use rand::Rng;
            let mut amps = Vec::with_capacity(2);
            for _ in 0..2 {
                amps.push(C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            }
            let psi = StateVector::new(amps).normalized();

            // Drift branch.
            let exp_aa = expectation(&a_dag_a, &psi).unwrap().re;
            let normalized_step = psi
                .add(&drift.apply(&psi).scale(C64::new(dt, 0.0)))
                .add(&psi.scale(C64::new(-0.5 * exp_aa * dt, 0.0)));
            let unnormalized_step = psi.add(&drift.apply(&psi).scale(C64::new(dt, 0.0)));
            let diff = normalized_step.max_abs_diff(&unnormalized_step.normalized());
            assert!(diff < 1e-8, "drift branch diff {diff}");
            // The normalized-form step is itself normalized to O(dt^2).
            assert!((normalized_step.norm2() - 1.0).abs() < 1e-8);

            // Jump branch: B / sqrt(<B^dag B>) psi vs normalize(B psi).
            let bpsi = c_op.apply(&psi);
            if bpsi.norm2() > 1e-12 {
                let exp_bb = expectation(&c_op.dagger().dot(c_op), &psi).unwrap().re;
                let lhs = bpsi.scale(C64::new(1.0 / exp_bb.sqrt(), 0.0));
                let rhs = bpsi.normalized();
                assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            }
        }
    }

    #[test]
    fn pair_correlation_identity_operator_gives_one() {
        let sys = driven_atom();
        let id = Operator::identity(2);
        let cfg = PairConfig {
            burn_in: 20.0,
            n_kicks: 3,
            stride: 6.0,
            lags: vec![0.0, 1.0, 3.0, 5.0],
            n_traj: 10,
            dt_int: 0.01,
            norm_tol: 1e-10,
            seed: 17,
        };
        let series = simulate_correlation_pair(&sys, &id, &id, &ground(2), &cfg).unwrap();
        for v in &series.values {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn pair_correlation_equal_time_matches_stationary_population() {
        let sys = driven_atom();
        let sp = Operator::ketbra(2, 1, 0);
        let sm = Operator::ketbra(2, 0, 1);
        let cfg = PairConfig {
            burn_in: 25.0,
            n_kicks: 8,
            stride: 8.0,
            lags: vec![0.0],
            n_traj: 120,
            dt_int: 0.01,
            norm_tol: 1e-10,
            seed: 23,
        };
        let series = simulate_correlation_pair(&sys, &sp, &sm, &ground(2), &cfg).unwrap();
        let (se_re, _) = series.std_errors.as_ref().unwrap()[0];
        let want = 1.0 / 7.0;
        assert!(
            (series.values[0].re - want).abs() <= 3.0 * se_re,
            "{} vs {want} (se {se_re})",
            series.values[0].re
        );
    }

    #[test]
    fn pair_correlation_matches_regression_oracle() {
        let sys = driven_atom();
        let sp = Operator::ketbra(2, 1, 0);
        let sm = Operator::ketbra(2, 0, 1);
        let lags: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let cfg = PairConfig {
            burn_in: 20.0,
            n_kicks: 6,
            stride: 11.0,
            lags: lags.clone(),
            n_traj: 400,
            dt_int: 0.01,
            norm_tol: 1e-10,
            seed: 12,
        };
        let est = simulate_correlation_pair(&sys, &sp, &sm, &ground(2), &cfg).unwrap();
        let rho_ss = steady_state(&sys).unwrap();
        let oracle = regression_correlation(&sys, &sp, &sm, &rho_ss, &lags);
        for (k, lag) in lags.iter().enumerate() {
            let (se_re, se_im) = est.std_errors.as_ref().unwrap()[k];
            let dr = (est.values[k].re - oracle.values[k].re).abs();
            let di = (est.values[k].im - oracle.values[k].im).abs();
            assert!(
                dr <= 3.0 * se_re.max(1e-4) && di <= 3.0 * se_im.max(1e-4),
                "lag {lag}: est {} oracle {} (se {se_re}/{se_im})",
                est.values[k],
                oracle.values[k]
            );
        }
    }

    #[test]
    fn jcm_truncation_guard_trips() {
        // Tiny Fock space, resonant drive strong enough to climb the ladder.
        let sys = build_jcm_ion(1.0, -1.0, 2.0, 0.5, 0.05, 2, false);
        let cfg = TrajectoryConfig::uniform(30.0, 61, 0.01, 5).unwrap();
        let mut amps = vec![C64::new(0.0, 0.0); sys.dim()];
        amps[1] = C64::new(1.0, 0.0); // |0, e>
        let psi0 = StateVector::new(amps);
        match simulate_trajectory(&sys, &psi0, &cfg, 0) {
            Err(Error::TruncationExceeded { population, .. }) => {
                assert!(population > 1e-4);
            }
            other => panic!("expected truncation guard, got {other:?}"),
        }
    }
}
