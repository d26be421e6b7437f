//! Adaptive Dormand–Prince 5(4) integration of small complex ODE systems.

use num_complex::Complex64;

use crate::error::{Result, WmError};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = f(x, y)` from `x0` to `x1` (either direction) with
/// mixed absolute/relative tolerance `tol`.
pub fn dopri5<const N: usize>(
    f: impl Fn(f64, &[Complex64; N]) -> [Complex64; N],
    x0: f64,
    y0: [Complex64; N],
    x1: f64,
    tol: f64,
) -> Result<[Complex64; N]> {
    let dir = (x1 - x0).signum();
    let span = (x1 - x0).abs();
    if span == 0.0 {
        return Ok(y0);
    }
    let mut x = x0;
    let mut y = y0;
    let mut h = span * 1e-2;
    let mut steps = 0usize;
    while (x1 - x) * dir > 0.0 {
        if steps > 200_000 {
            return Err(WmError::IntegrationFailure(format!("step budget exhausted at x = {x}")));
        }
        steps += 1;
        if h > (x1 - x).abs() {
            h = (x1 - x).abs();
        }
        let hs = h * dir;
        let mut k = [[Complex64::new(0.0, 0.0); N]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for i in 0..N {
                    ys[i] += hs * A[s][j] * kj[i];
                }
            }
            k[s] = f(x + C[s] * hs, &ys);
        }
        let mut y5 = y;
        let mut err = 0.0_f64;
        for i in 0..N {
            let mut d5 = Complex64::new(0.0, 0.0);
            let mut d4 = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += hs * d5;
            let scale = tol * (1.0 + y[i].norm().max(y5[i].norm()));
            err = err.max((hs * (d5 - d4)).norm() / scale);
        }
        if !err.is_finite() {
            return Err(WmError::IntegrationFailure(format!("non-finite state at x = {x}")));
        }
        if err <= 1.0 {
            x += hs;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < span * 1e-14 {
            return Err(WmError::IntegrationFailure(format!("step size underflow at x = {x}")));
        }
    }
    Ok(y)
}
