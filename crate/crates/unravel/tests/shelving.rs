//! Three-level shelving: the strong-line fluorescence telegraphs between
//! bright and dark periods, and the inter-count statistics on the strong
//! channel follow the resummed delay-function oracle
//! Tr{J_s exp((L - J_s) tau) J_s rho} / Tr{J_s rho}.

use unravel::hilbert::{unvectorize, vectorize, StateVector};
use unravel::jump::{run_ensemble, TrajectoryConfig};
use unravel::model::{build_three_level, jump_superoperator, liouvillian};
use unravel::stats::{ks_pvalue, ks_statistic, mean_and_se};

#[test]
fn dark_periods_match_delay_function_oracle() {
    // Strong transition at unit rate, weak metastable transition two orders
    // slower: shelving interrupts the strong-line fluorescence.
    let (gamma_s, gamma_w) = (1.0, 0.02);
    let sys = build_three_level(1.0, 0.05, 0.0, 0.0, gamma_s, gamma_w);

    // Survival of the no-strong-count evolution from |g>, weak counts
    // resummed: S(tau) = Tr{exp((L - J_s) tau) |g><g|}.
    let gen = liouvillian(&sys).sub(&jump_superoperator(&sys, 0).unwrap());
    let rho_g = {
        let psi = StateVector::basis(3, 0);
        unravel::hilbert::DensityMatrix::pure(&psi)
    };
    let survival = |tau: f64| -> f64 {
        let prop = gen.exp(tau);
        let v = prop.entries().dot(&vectorize(rho_g.entries()));
        let m = unvectorize(&v, 3);
        (0..3).map(|i| m[(i, i)].re).sum::<f64>().clamp(0.0, 1.0)
    };

    // Harvest inter-strong-count waits from an ensemble of long records.
    let t_max = 4000.0;
    let cfg = TrajectoryConfig::new(t_max, vec![t_max], 0.05, 1e-10, 31415).unwrap();
    let records = run_ensemble(&sys, &StateVector::basis(3, 0), &cfg, 24).unwrap();
    let mut waits: Vec<f64> = Vec::new();
    for rec in &records {
        let strong: Vec<f64> = rec
            .events
            .iter()
            .filter(|e| e.channel == 0)
            .map(|e| e.time)
            .collect();
        waits.extend(strong.windows(2).map(|w| w[1] - w[0]));
    }
    assert!(waits.len() > 5000, "need plenty of waits, got {}", waits.len());

    // Kolmogorov-Smirnov against the resummed delay-function CDF.
    waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d = ks_statistic(&waits, |t| 1.0 - survival(t));
    let p = ks_pvalue(waits.len(), d);
    assert!(p >= 0.01, "KS p-value {p} (D = {d})");

    // Dark periods: waits far beyond the bright-period scale occur at the
    // oracle rate and last on the order of 1/Gamma_w.
    let thr = 10.0 / gamma_s;
    let tail_oracle = survival(thr);
    let indicator: Vec<f64> = waits
        .iter()
        .map(|&w| if w > thr { 1.0 } else { 0.0 })
        .collect();
    let (tail_est, tail_se) = mean_and_se(&indicator);
    assert!(
        (tail_est - tail_oracle).abs() <= 3.0 * tail_se,
        "dark-period fraction {tail_est} vs oracle {tail_oracle} (se {tail_se})"
    );

    let dark: Vec<f64> = waits.iter().copied().filter(|&w| w > thr).collect();
    assert!(dark.len() > 30, "expected many dark periods, got {}", dark.len());
    let (mean_dark, se_dark) = mean_and_se(&dark);
    // Oracle conditional mean: thr + int S(t) dt / S(thr) beyond the
    // threshold, by trapezoid on the slow scale.
    let mut integral = 0.0;
    let dt = 2.0;
    let mut t = thr;
    let mut s_prev = survival(thr);
    while s_prev > 1e-8 * tail_oracle && t < 100.0 / gamma_w {
        let s_next = survival(t + dt);
        integral += 0.5 * (s_prev + s_next) * dt;
        s_prev = s_next;
        t += dt;
    }
    let mean_oracle = thr + integral / tail_oracle;
    assert!(
        (mean_dark - mean_oracle).abs() <= 4.0 * se_dark + 0.05 * mean_oracle,
        "mean dark period {mean_dark} vs oracle {mean_oracle} (se {se_dark})"
    );
    // The physics: dark periods live on the weak-transition scale.
    assert!(
        mean_dark > 0.2 / gamma_w && mean_dark < 5.0 / gamma_w,
        "mean dark period {mean_dark} not on the 1/Gamma_w scale"
    );
}
