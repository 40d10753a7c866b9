//! Deterministic oracles and measurement statistics: master-equation
//! propagation, steady states, regression-theorem correlations, waiting-time
//! densities, exclusive probability densities, full counting statistics via
//! the characteristic density operator, and spectra.
//!
//! These are the fixed points the stochastic engines are judged against, so
//! they are built to be more accurate than any trajectory estimate.

mod integrate;

use std::collections::HashMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::hilbert::{
    expm_propagator, linalg, unvectorize, vectorize, DensityMatrix, Operator, StateVector,
    Superoperator,
};
use crate::model::{
    effective_hamiltonian, jump_superoperator_sum, liouvillian, OpenSystem,
};
use crate::C64;

/// Dimension bound under which generators are exponentiated densely;
/// larger systems go through adaptive integration of the matrix equation.
const DENSE_EXPM_MAX_DIM: usize = 16;

const RK_RTOL: f64 = 1e-11;
const RK_ATOL: f64 = 1e-13;

/// Ordered sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    uniform: bool,
}

impl TimeGrid {
    /// `n` points from 0 to `t_max` inclusive.
    pub fn uniform(t_max: f64, n: usize) -> Self {
        assert!(n >= 2 && t_max > 0.0);
        let dt = t_max / (n - 1) as f64;
        TimeGrid {
            times: (0..n)
                .map(|k| if k == n - 1 { t_max } else { k as f64 * dt })
                .collect(),
            uniform: true,
        }
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidConfig("empty time grid".into()));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "grid times must be strictly increasing".into(),
                ));
            }
        }
        let uniform = if times.len() >= 3 {
            let d0 = times[1] - times[0];
            times
                .windows(2)
                .all(|w| ((w[1] - w[0]) - d0).abs() <= 1e-9 * d0.max(1e-300))
        } else {
            true
        };
        Ok(TimeGrid { times, uniform })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Where a numerical series came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Oracle,
    TrajectoryEstimate,
}

/// Two-time correlation values on a lag grid.
#[derive(Debug, Clone)]
pub struct CorrelationSeries {
    pub lags: Vec<f64>,
    pub values: Vec<C64>,
    pub provenance: Provenance,
    /// Standard errors (re, im) for trajectory estimates.
    pub std_errors: Option<Vec<(f64, f64)>>,
}

/// Count distribution P_m for m = 0..=m_max over a horizon.
#[derive(Debug, Clone)]
pub struct CountingDistribution {
    pub horizon: f64,
    pub probabilities: Vec<f64>,
    pub provenance: Provenance,
}

impl CountingDistribution {
    pub fn from_event_counts(horizon: f64, counts: &[usize], m_max: usize) -> Self {
        let mut p = vec![0.0; m_max + 1];
        let n = counts.len() as f64;
        for &c in counts {
            if c <= m_max {
                p[c] += 1.0 / n;
            }
        }
        CountingDistribution {
            horizon,
            probabilities: p,
            provenance: Provenance::TrajectoryEstimate,
        }
    }

    pub fn total_variation(&self, other: &CountingDistribution) -> f64 {
        let len = self.probabilities.len().max(other.probabilities.len());
        let get = |p: &[f64], m: usize| p.get(m).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|m| (get(&self.probabilities, m) - get(&other.probabilities, m)).abs())
            .sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(m, p)| m as f64 * p)
            .sum()
    }
}

/// Shared stepping machinery: dense exponentials with per-spacing caching for
/// small systems, adaptive integration of the matrix-valued equation beyond.
pub struct LiouvillePropagator {
    rhs: LindbladRhs,
    superop: Option<Superoperator>,
    cache: HashMap<u64, Superoperator>,
}

struct LindbladRhs {
    h: Array2<C64>,
    channels: Vec<(Array2<C64>, Array2<C64>)>, // (a, a^dag a)
}

impl LindbladRhs {
    fn new(sys: &OpenSystem) -> Self {
        let channels = sys
            .channels()
            .iter()
            .map(|ch| {
                let a = ch.absorbed();
                let ada = a.dagger().dot(&a);
                (a.entries().clone(), ada.entries().clone())
            })
            .collect();
        LindbladRhs {
            h: sys.hamiltonian().entries().clone(),
            channels,
        }
    }

    fn eval(&self, m: &Array2<C64>) -> Array2<C64> {
        let i = C64::new(0.0, 1.0);
        let mut out = (self.h.dot(m) - m.dot(&self.h)).mapv(|z| z * (-i));
        for (a, ada) in &self.channels {
            let ah = linalg::adjoint(a);
            out = out + a.dot(m).dot(&ah);
            let half = C64::new(0.5, 0.0);
            out = out - (ada.dot(m) + m.dot(ada)).mapv(|z| z * half);
        }
        out
    }
}

impl LiouvillePropagator {
    pub fn new(sys: &OpenSystem) -> Self {
        let superop = if sys.dim() <= DENSE_EXPM_MAX_DIM {
            Some(liouvillian(sys))
        } else {
            None
        };
        LiouvillePropagator {
            rhs: LindbladRhs::new(sys),
            superop,
            cache: HashMap::new(),
        }
    }

    /// Advance an arbitrary matrix by `dt` under the master-equation
    /// generator (the input need not be Hermitian).
    pub fn step(&mut self, m: &Array2<C64>, dt: f64) -> Array2<C64> {
        assert!(dt >= 0.0);
        if dt == 0.0 {
            return m.clone();
        }
        if let Some(l) = &self.superop {
            let key = dt.to_bits();
            let prop = self
                .cache
                .entry(key)
                .or_insert_with(|| l.exp(dt))
                .clone();
            prop.apply_matrix(m)
        } else {
            let rhs = |y: &Array2<C64>| self.rhs.eval(y);
            integrate::rk45(&rhs, m, dt, RK_RTOL, RK_ATOL)
        }
    }
}

/// Solve the master equation from `rho0`, returning the state at every grid
/// time (grid times must start at or after 0; t = 0 returns `rho0` itself).
pub fn master_solve(sys: &OpenSystem, rho0: &DensityMatrix, grid: &TimeGrid) -> Vec<DensityMatrix> {
    assert_eq!(sys.dim(), rho0.dim());
    let mut prop = LiouvillePropagator::new(sys);
    let mut out = Vec::with_capacity(grid.len());
    let mut current = rho0.entries().clone();
    let mut t_current = 0.0_f64;
    for &t in grid.times() {
        assert!(t >= 0.0, "grid times must be nonnegative");
        let dt = t - t_current;
        assert!(dt >= 0.0);
        current = prop.step(&current, dt);
        t_current = t;
        out.push(DensityMatrix::new(current.clone()));
    }
    out
}

/// Unit-trace Hermitian kernel element of the Liouvillian.
///
/// Fails when the kernel is not one-dimensional (for example a closed system
/// with a nondegenerate Hamiltonian, whose kernel dimension equals dim).
pub fn steady_state(sys: &OpenSystem) -> Result<DensityMatrix> {
    let l = liouvillian(sys);
    let n2 = sys.dim() * sys.dim();
    let qr = linalg::PivotedQr::factor(l.entries());
    let rank = qr.rank(1e-8);
    let kernel_dim = n2 - rank;
    if kernel_dim != 1 {
        return Err(Error::NonUniqueSteadyState { kernel_dim });
    }
    let x = qr.null_vector(rank);
    let mut rho = unvectorize(&x, sys.dim());
    // Hermitize and fix the trace.
    let adj = linalg::adjoint(&rho);
    rho = (&rho + &adj).mapv(|z| z * C64::new(0.5, 0.0));
    let tr: C64 = (0..sys.dim()).map(|i| rho[(i, i)]).sum();
    if tr.norm() < 1e-12 {
        return Err(Error::NonUniqueSteadyState { kernel_dim: 0 });
    }
    rho = rho.mapv(|z| z / tr);
    // Refine within the row space to push the residual to roundoff.
    for _ in 0..3 {
        let resid = l.entries().dot(&vectorize(&rho));
        let resid_norm = resid.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if resid_norm <= 1e-12 {
            break;
        }
        let delta = qr.lstsq_rank(&resid.mapv(|z| -z), rank);
        let dm = unvectorize(&delta, sys.dim());
        rho = &rho + &dm;
        let adj = linalg::adjoint(&rho);
        rho = (&rho + &adj).mapv(|z| z * C64::new(0.5, 0.0));
        let tr: C64 = (0..sys.dim()).map(|i| rho[(i, i)]).sum();
        rho = rho.mapv(|z| z / tr);
    }
    Ok(DensityMatrix::new(rho))
}

/// Residual norm ||L rho|| (Frobenius on the vectorized form).
pub fn stationarity_residual(sys: &OpenSystem, rho: &DensityMatrix) -> f64 {
    let l = liouvillian(sys);
    let v = l.entries().dot(&vectorize(rho.entries()));
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Quantum-regression correlation <A(t0+tau) B(t0)> = Tr{A e^{L tau} (B rho0)}.
pub fn regression_correlation(
    sys: &OpenSystem,
    a: &Operator,
    b: &Operator,
    rho0: &DensityMatrix,
    lags: &[f64],
) -> CorrelationSeries {
    assert!(!lags.is_empty());
    assert!(lags.windows(2).all(|w| w[1] > w[0]));
    assert!(lags[0] >= 0.0);
    let mut prop = LiouvillePropagator::new(sys);
    let mut m = b.entries().dot(rho0.entries());
    let mut t_cur = 0.0;
    let mut values = Vec::with_capacity(lags.len());
    for &tau in lags {
        m = prop.step(&m, tau - t_cur);
        t_cur = tau;
        let am = a.entries().dot(&m);
        let tr: C64 = (0..sys.dim()).map(|i| am[(i, i)]).sum();
        values.push(tr);
    }
    CorrelationSeries {
        lags: lags.to_vec(),
        values,
        provenance: Provenance::Oracle,
        std_errors: None,
    }
}

/// Normally ordered intensity correlation Tr{J e^{L tau} J rho_ss} over the
/// given channel set (unnormalized G2).
pub fn intensity_correlation(
    sys: &OpenSystem,
    channels: &[usize],
    lags: &[f64],
) -> Result<CorrelationSeries> {
    let rho_ss = steady_state(sys)?;
    let j = jump_superoperator_sum(sys, channels)?;
    let mut prop = LiouvillePropagator::new(sys);
    let mut m = j.apply_matrix(rho_ss.entries());
    let mut t_cur = 0.0;
    let mut values = Vec::with_capacity(lags.len());
    for &tau in lags {
        m = prop.step(&m, tau - t_cur);
        t_cur = tau;
        let jm = j.apply_matrix(&m);
        let tr: C64 = (0..sys.dim()).map(|i| jm[(i, i)]).sum();
        values.push(tr);
    }
    Ok(CorrelationSeries {
        lags: lags.to_vec(),
        values,
        provenance: Provenance::Oracle,
        std_errors: None,
    })
}

/// Smooth part of the stationary homodyne current correlation,
/// Tr{x e^{L tau}(a rho_ss + rho_ss a^dag)} with a the rate-absorbed channel
/// operator and x = a + a^dag. The delta-correlated shot noise is reported as
/// the separate analytic weight, never estimated.
pub struct HomodyneCorrelation {
    pub series: CorrelationSeries,
    /// Weight of the delta(tau) shot-noise term for a unit-efficiency
    /// detector.
    pub shot_noise_weight: f64,
}

pub fn homodyne_correlation_oracle(
    sys: &OpenSystem,
    channel: usize,
    lags: &[f64],
) -> Result<HomodyneCorrelation> {
    let rho_ss = steady_state(sys)?;
    let a = sys.channel(channel)?.absorbed();
    let x = a.add(&a.dagger());
    let mut prop = LiouvillePropagator::new(sys);
    let seed = a.entries().dot(rho_ss.entries()) + rho_ss.entries().dot(a.dagger().entries());
    let mut m = seed;
    let mut t_cur = 0.0;
    let mut values = Vec::with_capacity(lags.len());
    for &tau in lags {
        m = prop.step(&m, tau - t_cur);
        t_cur = tau;
        let xm = x.entries().dot(&m);
        let tr: C64 = (0..sys.dim()).map(|i| xm[(i, i)]).sum();
        values.push(tr);
    }
    Ok(HomodyneCorrelation {
        series: CorrelationSeries {
            lags: lags.to_vec(),
            values,
            provenance: Provenance::Oracle,
            std_errors: None,
        },
        shot_noise_weight: 1.0,
    })
}

/// Squared-norm survival ||U_eff(t) psi||^2 of the no-count evolution.
pub fn survival_probability(sys: &OpenSystem, psi: &StateVector, t: f64) -> f64 {
    let heff = effective_hamiltonian(sys);
    crate::hilbert::expm_apply(&heff, t, psi)
        .expect("finite effective Hamiltonian")
        .norm2()
}

/// CDF of the waiting time for the next count (any channel).
pub fn waiting_cdf(sys: &OpenSystem, psi: &StateVector, t: f64) -> f64 {
    (1.0 - survival_probability(sys, psi, t)).clamp(0.0, 1.0)
}

/// Waiting-time density p(j, t) = gamma_j ||c_j U_eff(t) psi||^2 on a grid.
pub fn waiting_time_oracle(
    sys: &OpenSystem,
    psi: &StateVector,
    channel: usize,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let a = sys.channel(channel)?.absorbed();
    let heff = effective_hamiltonian(sys);
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        let phi = crate::hilbert::expm_apply(&heff, t, psi)?;
        out.push(a.apply(&phi).norm2());
    }
    Ok(out)
}

/// Exclusive probability density for the full record
/// (j_1, t_1; ...; j_m, t_m) and no other counts in (0, t]:
/// Tr{S(t,t_m) J_jm ... J_j1 S(t_1,0) rho0}.
pub fn epd_evaluate(
    sys: &OpenSystem,
    rho0: &DensityMatrix,
    sequence: &[(usize, f64)],
    t: f64,
) -> Result<f64> {
    let mut prev = 0.0_f64;
    for &(_, tk) in sequence {
        if tk <= prev {
            return Err(Error::UnorderedTimes);
        }
        prev = tk;
    }
    if prev > t {
        return Err(Error::UnorderedTimes);
    }
    let heff = effective_hamiltonian(sys);
    let mut rho = rho0.entries().clone();
    let mut t_cur = 0.0;
    for &(j, tk) in sequence {
        let u = expm_propagator(&heff, tk - t_cur);
        rho = u.entries().dot(&rho).dot(u.dagger().entries());
        let a = sys.channel(j)?.absorbed();
        rho = a.entries().dot(&rho).dot(a.dagger().entries());
        t_cur = tk;
    }
    let u = expm_propagator(&heff, t - t_cur);
    rho = u.entries().dot(&rho).dot(u.dagger().entries());
    let tr: C64 = (0..sys.dim()).map(|i| rho[(i, i)]).sum();
    Ok(tr.re)
}

/// Count distribution over (0, T] by the characteristic density operator:
/// solve d chi/dt = (L + (e^{ik} - 1) J) chi on the k-grid k_l = 2 pi l / M
/// and invert the discrete transform. M is the next power of two at or above
/// 4 (m_max + 1).
pub fn counting_oracle(
    sys: &OpenSystem,
    rho0: &DensityMatrix,
    horizon: f64,
    m_max: usize,
    channels: &[usize],
) -> Result<CountingDistribution> {
    assert!(horizon > 0.0);
    let l = liouvillian(sys);
    let j = jump_superoperator_sum(sys, channels)?;
    let m_points = (4 * (m_max + 1)).next_power_of_two();
    let mut phis = Vec::with_capacity(m_points);
    let rho_vec = vectorize(rho0.entries());
    for lidx in 0..m_points {
        let k = 2.0 * std::f64::consts::PI * lidx as f64 / m_points as f64;
        let factor = C64::new(0.0, k).exp() - C64::new(1.0, 0.0);
        let gen = l.add(&j.scale(factor));
        let chi = gen.exp(horizon);
        let chi_vec = chi.entries().dot(&rho_vec);
        let chi_mat = unvectorize(&chi_vec, sys.dim());
        let tr: C64 = (0..sys.dim()).map(|i| chi_mat[(i, i)]).sum();
        phis.push(tr);
    }
    let mut probabilities = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        let mut p = C64::new(0.0, 0.0);
        for (lidx, phi) in phis.iter().enumerate() {
            let k = 2.0 * std::f64::consts::PI * lidx as f64 / m_points as f64;
            p += phi * C64::new(0.0, -k * m as f64).exp();
        }
        p /= C64::new(m_points as f64, 0.0);
        probabilities.push(p.re);
    }
    let tail = probabilities[m_max];
    if tail >= 1e-4 {
        return Err(Error::AliasingGuard {
            m_max,
            p_tail: tail,
        });
    }
    Ok(CountingDistribution {
        horizon,
        probabilities,
        provenance: Provenance::Oracle,
    })
}

/// Integral of the mean counting rate, int_0^T Tr{J rho(s)} ds, by Simpson's
/// rule on a fine master-equation grid.
pub fn expected_count(
    sys: &OpenSystem,
    rho0: &DensityMatrix,
    horizon: f64,
    channels: &[usize],
) -> Result<f64> {
    let j = jump_superoperator_sum(sys, channels)?;
    let n = 400; // even
    let grid = TimeGrid::uniform(horizon, n + 1);
    let rhos = master_solve(sys, rho0, &grid);
    let rate = |rho: &DensityMatrix| -> f64 {
        let m = j.apply_matrix(rho.entries());
        (0..sys.dim()).map(|i| m[(i, i)].re).sum()
    };
    let h = horizon / n as f64;
    let mut s = rate(&rhos[0]) + rate(&rhos[n]);
    for (k, rho) in rhos.iter().enumerate().take(n).skip(1) {
        s += rate(rho) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(s * h / 3.0)
}

/// Photon-number-resolved decomposition for a single-channel two-dimensional
/// system: integrates the ladder
/// d rho^(n)/dt = -i(H_eff rho^(n) - rho^(n) H_eff^dag) + gamma c rho^(n-1) c^dag
/// up to `n_max`, returning rho^(n)(t) for every grid time.
pub fn hierarchy_integrate(
    sys: &OpenSystem,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    n_max: usize,
) -> Result<Vec<Vec<DensityMatrix>>> {
    let dim = sys.dim();
    if dim != 2 || sys.channels().len() != 1 {
        return Err(Error::InvalidConfig(
            "hierarchy integration expects a single-channel two-level model".into(),
        ));
    }
    let heff = effective_hamiltonian(sys);
    let a = sys.channels()[0].absorbed();
    // Block generator on stacked vec(rho^(0)), ..., vec(rho^(n_max)).
    let d2 = dim * dim;
    let nb = n_max + 1;
    let s_block = Superoperator::left_mult(&heff)
        .sub(&Superoperator::right_mult(&heff.dagger()))
        .scale(C64::new(0.0, -1.0));
    let feed = Superoperator::sandwich(&a, &a.dagger());
    let mut gen = Array2::<C64>::zeros((nb * d2, nb * d2));
    for n in 0..nb {
        for r in 0..d2 {
            for c in 0..d2 {
                gen[(n * d2 + r, n * d2 + c)] = s_block.entries()[(r, c)];
                if n > 0 {
                    gen[(n * d2 + r, (n - 1) * d2 + c)] = feed.entries()[(r, c)];
                }
            }
        }
    }
    let mut state = Array1::<C64>::zeros(nb * d2);
    let r0 = vectorize(rho0.entries());
    for r in 0..d2 {
        state[r] = r0[r];
    }
    let mut cache: HashMap<u64, Array2<C64>> = HashMap::new();
    let mut out = Vec::with_capacity(grid.len());
    let mut t_cur = 0.0;
    for &t in grid.times() {
        let dt = t - t_cur;
        assert!(dt >= 0.0);
        if dt > 0.0 {
            let prop = cache
                .entry(dt.to_bits())
                .or_insert_with(|| linalg::expm(&gen.mapv(|z| z * C64::new(dt, 0.0))))
                .clone();
            state = prop.dot(&state);
        }
        t_cur = t;
        let mut per_n = Vec::with_capacity(nb);
        for n in 0..nb {
            let v = Array1::from_iter((0..d2).map(|r| state[n * d2 + r]));
            per_n.push(DensityMatrix::new(unvectorize(&v, dim)));
        }
        out.push(per_n);
    }
    // Truncation check at the final time.
    let total: f64 = out
        .last()
        .unwrap()
        .iter()
        .map(|rho| rho.trace().re)
        .sum();
    if total < 1.0 - 1e-4 {
        return Err(Error::HierarchyTruncated { total });
    }
    Ok(out)
}

/// One-sided spectrum of a correlation series via a discrete Fourier
/// transform of the Hermitian-symmetric extension. Frequencies are angular.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// Largest imaginary part encountered, for diagnostics; the extension
    /// makes the transform real up to roundoff.
    pub max_imag: f64,
}

pub fn spectrum_fft(series: &CorrelationSeries) -> Result<Spectrum> {
    let l = series.lags.len();
    if l < 2 {
        return Err(Error::NonUniformLags);
    }
    let d0 = series.lags[1] - series.lags[0];
    for w in series.lags.windows(2) {
        if ((w[1] - w[0]) - d0).abs() > 1e-9 * d0.max(1e-300) {
            return Err(Error::NonUniformLags);
        }
    }
    let n = 2 * l - 1;
    let mut g = vec![C64::new(0.0, 0.0); n];
    g[0] = series.values[0];
    for j in 1..l {
        g[j] = series.values[j];
        g[n - j] = series.values[j].conj();
    }
    let mut frequencies = Vec::new();
    let mut power = Vec::new();
    let mut max_imag = 0.0_f64;
    let half = (n - 1) / 2;
    for k in 0..=half {
        let mut s = C64::new(0.0, 0.0);
        for (j, gj) in g.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
            s += gj * C64::new(0.0, phase).exp();
        }
        s *= C64::new(d0, 0.0);
        frequencies.push(2.0 * std::f64::consts::PI * k as f64 / (n as f64 * d0));
        power.push(s.re);
        max_imag = max_imag.max(s.im.abs());
    }
    Ok(Spectrum {
        frequencies,
        power,
        max_imag,
    })
}
