//! Reference solutions that share no code with the library: an adaptive
//! Dormand–Prince 5(4) integrator for scalar ODEs and a shooting method for
//! periodic solutions.

#![allow(dead_code)]

/// Integrates `y' = f(t, y)` from `t0` to `t1` with adaptive DOPRI5.
pub fn dopri5(f: &dyn Fn(f64, f64) -> f64, t0: f64, y0: f64, t1: f64, rtol: f64, atol: f64) -> f64 {
    const C2: f64 = 1.0 / 5.0;
    const C3: f64 = 3.0 / 10.0;
    const C4: f64 = 4.0 / 5.0;
    const C5: f64 = 8.0 / 9.0;
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
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let mut t = t0;
    let mut y = y0;
    let mut h = (t1 - t0) / 100.0;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let k1 = f(t, y);
        let k2 = f(t + C2 * h, y + h * A21 * k1);
        let k3 = f(t + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = f(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y5 = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        let k7 = f(t + h, y5);
        let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let sc = atol + rtol * y.abs().max(y5.abs());
        let ratio = (err / sc).abs();
        if ratio <= 1.0 {
            t += h;
            y = y5;
        }
        let fac = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= fac;
        assert!(h.abs() > 1e-14, "step size underflow at t = {t}");
    }
    y
}

/// Values at `t_j = j T / nt` of the periodic solution of `y' = f(t, y)`,
/// found by bisection on `y(0)` in `[lo, hi]` for `y(T) = y(0)`.
/// Requires `y(T) − y(0)` to change sign exactly once on the bracket.
pub fn periodic_by_shooting(f: &dyn Fn(f64, f64) -> f64, period: f64, lo: f64, hi: f64, nt: usize) -> Vec<f64> {
    let tol = 1e-13;
    let gap = |m: f64| dopri5(f, 0.0, m, period, tol, tol) - m;
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (gap(a), gap(b));
    assert!(
        ga * gb < 0.0,
        "shooting bracket does not straddle the periodic solution: {ga} {gb}"
    );
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let gm = gap(m);
        if gm == 0.0 || (b - a) < 1e-15 * m.abs() {
            a = m;
            b = m;
            break;
        }
        if gm * ga > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let m0 = 0.5 * (a + b);
    let tau = period / nt as f64;
    let mut out = Vec::with_capacity(nt);
    let mut y = m0;
    for j in 0..nt {
        out.push(y);
        y = dopri5(f, j as f64 * tau, y, (j + 1) as f64 * tau, tol, tol);
    }
    out
}

/// Values at `t_j` of the solution of `y' = f(t, y)` from `y(0) = y0`.
pub fn trajectory(f: &dyn Fn(f64, f64) -> f64, y0: f64, period: f64, nt: usize) -> Vec<f64> {
    let tau = period / nt as f64;
    let mut out = Vec::with_capacity(nt + 1);
    let mut y = y0;
    out.push(y);
    for j in 0..nt {
        y = dopri5(f, j as f64 * tau, y, (j + 1) as f64 * tau, 1e-13, 1e-13);
        out.push(y);
    }
    out
}

/// Least-squares slope of `log2(err)` against `log2(1/h)` for halving steps.
pub fn observed_order(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    let xs: Vec<f64> = (0..errors.len()).map(|k| k as f64).collect();
    let ys: Vec<f64> = errors.iter().map(|e| -e.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}
