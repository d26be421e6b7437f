//! Quadrature on uniform grids and Gauss–Legendre rules.

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// The 16-point rule mapped to `[0, 1]`, computed once.
pub fn gl16_unit() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(16);
        (x.iter().map(|x| 0.5 * (x + 1.0)).collect(), w.iter().map(|w| 0.5 * w).collect())
    })
}

/// `∫_a^b f` with the 16-point rule.
pub fn integrate_gl16(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gl16_unit();
    let len = b - a;
    x.iter().zip(w).map(|(x, w)| w * f(a + len * x)).sum::<f64>() * len
}

/// Composite Simpson rule over uniformly spaced samples. An even number of
/// intervals is handled exactly; otherwise the last three intervals use
/// Simpson's 3/8 rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals % 2 == 0 { (n - 1, false) } else { (n - 4, true) };
            let mut s = 0.0;
            let mut i = 0;
            while i + 2 <= simpson_end {
                s += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
                i += 2;
            }
            if tail {
                let j = n - 4;
                s += 3.0 * h / 8.0 * (values[j] + 3.0 * values[j + 1] + 3.0 * values[j + 2] + values[j + 3]);
            }
            s
        }
    }
}

/// Cumulative integral `F_i = ∫_0^{x_i} f` with Simpson pairs; odd nodes are
/// closed with the quadratic-interpolation rule on the last interval, so
/// every entry is third-order accurate and exact for quadratics.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            out[1] = 0.5 * h * (values[0] + values[1]);
        }
        return out;
    }
    for i in 1..n {
        out[i] = if i % 2 == 0 {
            out[i - 2] + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i])
        } else if i + 1 < n {
            out[i - 1] + h / 12.0 * (5.0 * values[i - 1] + 8.0 * values[i] - values[i + 1])
        } else {
            out[i - 1] + h / 12.0 * (5.0 * values[i] + 8.0 * values[i - 1] - values[i - 2])
        };
    }
    out
}

/// `∫_0^b` of a uniformly sampled function where `b` may fall between
/// nodes; the partial cell is integrated against the local cubic
/// interpolant so the result varies smoothly with `b`.
pub fn integrate_to(values: &[f64], h: f64, b: f64) -> f64 {
    use crate::grid::interpolate_cubic;
    if b <= 0.0 {
        return 0.0;
    }
    let full = ((b / h).floor() as usize).min(values.len() - 1);
    let mut s = 0.0;
    for c in 0..full {
        let a = c as f64 * h;
        s += integrate_gl16(a, a + h, |x| interpolate_cubic(values, h, None, x));
    }
    let a = full as f64 * h;
    if b > a {
        s += integrate_gl16(a, b, |x| interpolate_cubic(values, h, None, x));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_high_degree_polynomials() {
        let v = integrate_gl16(0.0, 2.0, |x| x.powi(31));
        assert!((v - 2f64.powi(32) / 32.0).abs() / v < 1e-13);
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn simpson_is_exact_for_cubics_with_either_parity_of_intervals() {
        for n in [11usize, 12] {
            let h = 1.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&v, h) - 0.25).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn cumulative_simpson_matches_antiderivative() {
        let n = 41;
        let h = 2.0 / 40.0;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).cos()).collect();
        let c = cumulative_simpson(&v, h);
        for (i, ci) in c.iter().enumerate() {
            assert!((ci - (i as f64 * h).sin()).abs() < 1e-5);
        }
    }

    #[test]
    fn integrate_to_handles_partial_cells() {
        let h = 0.05;
        let v: Vec<f64> = (0..41).map(|i| (i as f64 * h).powi(2)).collect();
        let s = integrate_to(&v, h, 1.234);
        assert!((s - 1.234f64.powi(3) / 3.0).abs() < 1e-12);
    }
}
