//! Adaptive Dormand–Prince 5(4) integration for dense matrix-valued linear
//! ODEs, used where forming or exponentiating the full superoperator would be
//! wasteful.

use ndarray::Array2;

use crate::C64;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

fn lin<const N: usize>(terms: [(&Array2<C64>, f64); N]) -> Array2<C64> {
    let mut out: Array2<C64> = Array2::zeros(terms[0].0.dim());
    for (m, w) in terms {
        out.zip_mut_with(m, |o, &z| *o += z * C64::new(w, 0.0));
    }
    out
}

/// Integrate dy/dt = rhs(y) from 0 to `t_span`, returning the final value.
pub fn rk45(
    rhs: &dyn Fn(&Array2<C64>) -> Array2<C64>,
    y0: &Array2<C64>,
    t_span: f64,
    rtol: f64,
    atol: f64,
) -> Array2<C64> {
    assert!(t_span >= 0.0);
    if t_span == 0.0 {
        return y0.clone();
    }
    let mut y = y0.clone();
    let mut t = 0.0_f64;
    let mut k1 = rhs(&y);
    // Initial step from the local scale.
    let scale = max_abs(&k1).max(1e-12);
    let mut h = (0.01 * max_abs(&y).max(1.0) / scale).min(t_span);
    let mut steps = 0usize;
    while t < t_span {
        steps += 1;
        assert!(steps < 10_000_000, "integrator step limit exceeded");
        if t + h > t_span {
            h = t_span - t;
        }
        let k2 = rhs(&lin([(&y, 1.0), (&k1, A21 * h)]));
        let k3 = rhs(&lin([(&y, 1.0), (&k1, A31 * h), (&k2, A32 * h)]));
        let k4 = rhs(&lin([
            (&y, 1.0),
            (&k1, A41 * h),
            (&k2, A42 * h),
            (&k3, A43 * h),
        ]));
        let k5 = rhs(&lin([
            (&y, 1.0),
            (&k1, A51 * h),
            (&k2, A52 * h),
            (&k3, A53 * h),
            (&k4, A54 * h),
        ]));
        let k6 = rhs(&lin([
            (&y, 1.0),
            (&k1, A61 * h),
            (&k2, A62 * h),
            (&k3, A63 * h),
            (&k4, A64 * h),
            (&k5, A65 * h),
        ]));
        let y5 = lin([
            (&y, 1.0),
            (&k1, B1 * h),
            (&k3, B3 * h),
            (&k4, B4 * h),
            (&k5, B5 * h),
            (&k6, B6 * h),
        ]);
        let k7 = rhs(&y5);
        let err_mat = lin([
            (&k1, E1 * h),
            (&k3, E3 * h),
            (&k4, E4 * h),
            (&k5, E5 * h),
            (&k6, E6 * h),
            (&k7, E7 * h),
        ]);
        let err = max_abs(&err_mat);
        let tol = atol + rtol * max_abs(&y).max(max_abs(&y5));
        let ratio = err / tol;
        if ratio <= 1.0 {
            t += h;
            y = y5;
            k1 = k7; // FSAL
        }
        let factor = if ratio > 0.0 {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
    }
    y
}
