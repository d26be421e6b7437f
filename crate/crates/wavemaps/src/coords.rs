//! Cartesian, hyperboloidal similarity (HSC) and standard similarity
//! coordinates, the height function, and the coefficients of the radial
//! wave operator in HSC.
//!
//! Almost every closed form below is written in the variable
//! `w = sqrt(2 + η²)`, in which the height function becomes `h = w - 2`
//! and the recurring combination `η h' - h` collapses to `2(w - 1)/w`.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use crate::error::{Result, WmError};
use crate::grid::RadialGrid;

/// The height function `h(y) = sqrt(2 + |y|²) - 2` and its radial
/// derivatives. All methods accept signed arguments, so they also serve
/// the one-dimensional problem on `[-R, R]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeightFunction;

impl HeightFunction {
    pub fn w(self, eta: f64) -> f64 {
        (2.0 + eta * eta).sqrt()
    }

    pub fn h(self, eta: f64) -> f64 {
        // sqrt(2+η²) - 2 loses digits near η = √2 where it vanishes.
        (eta * eta - 2.0) / (self.w(eta) + 2.0)
    }

    pub fn dh(self, eta: f64) -> f64 {
        eta / self.w(eta)
    }

    pub fn d2h(self, eta: f64) -> f64 {
        2.0 / self.w(eta).powi(3)
    }

    /// `h₁ = 1/(η h' - h) = w / (2(w-1))`.
    pub fn h1(self, eta: f64) -> f64 {
        let w = self.w(eta);
        w / (2.0 * (w - 1.0))
    }

    pub fn dh1(self, eta: f64) -> f64 {
        let w = self.w(eta);
        -eta / (2.0 * w * (w - 1.0) * (w - 1.0))
    }
}

/// Outer radius `R(b) = (2b + sqrt(2(1+b²)))/(1-b²)` of the controlled
/// region; `b` is the slope of its lateral boundary.
pub fn outer_radius(b: f64) -> Result<f64> {
    if !(b > 0.0 && b <= 0.9) {
        return Err(WmError::Domain(format!("b must lie in (0, 0.9], got {b}")));
    }
    Ok(y_on_slope(b))
}

/// The radius where the hyperboloid `s = const` meets the ray `t - T = k r`,
/// i.e. the positive root of `h(y) = k y`, written without cancellation.
fn y_on_slope(k: f64) -> f64 {
    2.0 / ((2.0 * (1.0 + k * k)).sqrt() - 2.0 * k)
}

/// A coordinate chart attached to the blowup time `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordChart {
    pub t_blowup: f64,
}

impl CoordChart {
    pub fn new(t_blowup: f64) -> Self {
        Self { t_blowup }
    }

    /// `(t, r) = (T + e^{-s} h(y), e^{-s} y)`.
    pub fn hsc_to_cartesian(&self, s: f64, y: f64) -> (f64, f64) {
        let e = (-s).exp();
        (self.t_blowup + e * HeightFunction.h(y), e * y)
    }

    /// Inverse of [`hsc_to_cartesian`](Self::hsc_to_cartesian). Defined for
    /// points strictly below the future light cone `t - T < r` of the
    /// blowup point; on the axis this means `t < T`.
    pub fn cartesian_to_hsc(&self, t: f64, r: f64) -> Result<(f64, f64)> {
        if r < 0.0 {
            return Err(WmError::Domain(format!("radius must be non-negative, got {r}")));
        }
        let dt = t - self.t_blowup;
        if r == 0.0 {
            if dt >= 0.0 {
                return Err(WmError::Domain(format!("axis point t = {t} is not below the blowup time")));
            }
            return Ok((-(dt / HeightFunction.h(0.0)).ln(), 0.0));
        }
        let k = dt / r;
        if k >= 1.0 {
            return Err(WmError::Domain(format!("point (t, r) = ({t}, {r}) lies outside the hyperboloidal foliation")));
        }
        let y = y_on_slope(k);
        Ok(((y / r).ln(), y))
    }

    /// Similarity coordinates `(τ, ξ) = (s - log(-h(y)), -y/h(y))`, valid for `|y| < √2`.
    pub fn hsc_to_similarity(s: f64, y: f64) -> Result<(f64, f64)> {
        let h = HeightFunction.h(y);
        if h >= 0.0 {
            return Err(WmError::Domain(format!("similarity chart undefined at |y| = {} >= sqrt(2)", y.abs())));
        }
        Ok((s - (-h).ln(), -y / h))
    }

    /// `(t, r) = (T - e^{-τ}, e^{-τ} ξ)`.
    pub fn similarity_to_cartesian(&self, tau: f64, xi: f64) -> (f64, f64) {
        let e = (-tau).exp();
        (self.t_blowup - e, e * xi)
    }
}

/// Coefficients of the first-order-in-`s` radial wave system in `d` space
/// dimensions, `∂_s² v = c12 v'' + c11 v' + c21 ∂_s v' + c20 ∂_s v`.
/// `c11` carries a `1/η` singularity for `d > 1`; it is stored as
/// `c11_eta = η c11`, which is smooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemCoefficients {
    pub c12: f64,
    pub c11_eta: f64,
    pub c21: f64,
    pub c20: f64,
}

impl SystemCoefficients {
    pub fn at(eta: f64, dim: usize) -> Result<Self> {
        let w = HeightFunction.w(eta);
        let wm = w - 1.0;
        let e2 = eta * eta;
        let c12 = -w * w * (2.0 * w - 3.0);
        let c21 = -2.0 * w * eta;
        match dim {
            1 => Ok(Self { c12, c11_eta: -e2 * (2.0 * w * w - 4.0 * w + 3.0) / wm, c21, c20: (w - 2.0) / wm }),
            5 => {
                let p = curvature_p(w);
                Ok(Self {
                    c12,
                    c11_eta: 2.0 * wm * wm * (4.0 + p * e2),
                    c21,
                    c20: -(4.0 * w * w - 9.0 * w + 6.0) / wm,
                })
            }
            _ => Err(WmError::Domain(format!("only d = 1 and d = 5 are supported, got {dim}"))),
        }
    }
}

fn curvature_p(w: f64) -> f64 {
    -(6.0 * w * w - 12.0 * w + 7.0) / (2.0 * (w - 1.0).powi(3))
}

/// Characteristic speeds `w(η ± (w - 1))` of the `d = 5` system.
pub fn characteristic_speeds(eta: f64) -> (f64, f64) {
    let w = HeightFunction.w(eta);
    (w * (eta - (w - 1.0)), w * (eta + (w - 1.0)))
}

/// The contracted `H` tensor of the HSC derivative operators, reduced to
/// radial form and multiplied by `e^{-2s}`:
///
/// * `q00  = H^{μ0} H_μ⁰`
/// * `H^{μj} H_μ^k = δ^{jk} + beta y^j y^k`
/// * `H^{μj} H_μ⁰  = q10 y^j`
/// * `H^{μν} ∂_ν H_μ⁰ = p0`
/// * `H^{μν} ∂_ν H_μ^j = p y^j`
///
/// together with the `d = 5` system coefficients assembled from them.
#[derive(Debug, Clone, PartialEq)]
pub struct HTensor {
    pub eta: Vec<f64>,
    pub q00: Vec<f64>,
    pub beta: Vec<f64>,
    pub q10: Vec<f64>,
    pub p0: Vec<f64>,
    pub p: Vec<f64>,
    pub c12: Vec<f64>,
    pub c11_eta: Vec<f64>,
    pub c21: Vec<f64>,
    pub c20: Vec<f64>,
}

/// Radial contraction values at a single radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialContractions {
    pub q00: f64,
    pub beta: f64,
    pub q10: f64,
    pub p0: f64,
    pub p: f64,
}

impl RadialContractions {
    pub fn at(eta: f64) -> Self {
        let w = HeightFunction.w(eta);
        let wm = w - 1.0;
        Self {
            q00: -0.5 / (wm * wm),
            beta: -(2.0 * w - 1.0) / (2.0 * wm * wm),
            q10: -w / (2.0 * wm * wm),
            p0: -(4.0 * w * w - 9.0 * w + 6.0) / (2.0 * wm.powi(3)),
            p: curvature_p(w),
        }
    }
}

/// Samples the contracted tensor and the `d = 5` operator coefficients on
/// the grid. The outer radius must reach the light cone `η = 1/2`.
pub fn l5_coefficients(grid: &RadialGrid) -> Result<HTensor> {
    if grid.r_max() < 0.5 {
        return Err(WmError::Domain(format!("outer radius {} is inside the light cone 1/2", grid.r_max())));
    }
    let eta = grid.nodes();
    let n = eta.len();
    let mut t = HTensor {
        eta: eta.clone(),
        q00: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        q10: Vec::with_capacity(n),
        p0: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        c12: Vec::with_capacity(n),
        c11_eta: Vec::with_capacity(n),
        c21: Vec::with_capacity(n),
        c20: Vec::with_capacity(n),
    };
    for &e in &eta {
        let rc = RadialContractions::at(e);
        let sc = SystemCoefficients::at(e, 5)?;
        t.q00.push(rc.q00);
        t.beta.push(rc.beta);
        t.q10.push(rc.q10);
        t.p0.push(rc.p0);
        t.p.push(rc.p);
        t.c12.push(sc.c12);
        t.c11_eta.push(sc.c11_eta);
        t.c21.push(sc.c21);
        t.c20.push(sc.c20);
    }
    Ok(t)
}

/// Minkowski signature used to raise the first index.
const MINKOWSKI: [f64; 6] = [-1.0, 1.0, 1.0, 1.0, 1.0, 1.0];

/// The full tensor `H_μ^ν(s, y)` in five space dimensions, index order
/// `[μ][ν]` with `0` the `s` slot.
pub fn h_tensor(s: f64, y: &[f64; 5]) -> [[f64; 6]; 6] {
    let es = s.exp();
    let g = h_tensor_profile(y);
    let mut out = [[0.0; 6]; 6];
    for m in 0..6 {
        for n in 0..6 {
            out[m][n] = es * g[m][n];
        }
    }
    out
}

fn h_tensor_profile(y: &[f64; 5]) -> [[f64; 6]; 6] {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    let w = (2.0 + r2).sqrt();
    let d = 2.0 * (w - 1.0) / w;
    let mut g = [[0.0; 6]; 6];
    g[0][0] = 1.0 / d;
    for j in 0..5 {
        let hj = y[j] / w;
        g[0][j + 1] = y[j] / d;
        g[j + 1][0] = -hj / d;
        for k in 0..5 {
            g[j + 1][k + 1] = if j == k { 1.0 } else { 0.0 } - hj * y[k] / d;
        }
    }
    g
}

/// Spatial derivatives `∂_l H_μ^ν / e^s`, index order `[l][μ][ν]`.
fn h_tensor_profile_gradient(y: &[f64; 5]) -> [[[f64; 6]; 6]; 5] {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    let w = (2.0 + r2).sqrt();
    let w3 = w * w * w;
    let d = 2.0 * (w - 1.0) / w;
    let d2 = d * d;
    let mut out = [[[0.0; 6]; 6]; 5];
    for l in 0..5 {
        let dd = 2.0 * y[l] / w3;
        let g = &mut out[l];
        g[0][0] = -dd / d2;
        for j in 0..5 {
            let hj = y[j] / w;
            let dhj = if j == l { 1.0 / w } else { 0.0 } - y[j] * y[l] / w3;
            let djl = if j == l { 1.0 } else { 0.0 };
            g[0][j + 1] = djl / d - y[j] * dd / d2;
            g[j + 1][0] = -dhj / d + hj * dd / d2;
            for k in 0..5 {
                let dkl = if k == l { 1.0 } else { 0.0 };
                g[j + 1][k + 1] = -(dhj * y[k] + hj * dkl) / d + hj * y[k] * dd / d2;
            }
        }
    }
    out
}

/// The contractions entering the `d = 5` operator, evaluated from the full
/// tensor at `(s, y)` and multiplied by `e^{-2s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contractions5 {
    pub hh00: f64,
    pub hh_jk: [[f64; 5]; 5],
    pub hh_j0: [f64; 5],
    pub p0: f64,
    pub p_j: [f64; 5],
}

pub fn contractions_5d(s: f64, y: &[f64; 5]) -> Contractions5 {
    let h = h_tensor(s, y);
    let es = s.exp();
    let grad: Vec<[[f64; 6]; 6]> = h_tensor_profile_gradient(y)
        .iter()
        .map(|g| {
            let mut o = [[0.0; 6]; 6];
            for m in 0..6 {
                for n in 0..6 {
                    o[m][n] = es * g[m][n];
                }
            }
            o
        })
        .collect();
    // ∂_ν H for ν = 0 is ∂_s, and H is e^s times an s-independent profile.
    let deriv = |nu: usize, mu: usize, lam: usize| if nu == 0 { h[mu][lam] } else { grad[nu - 1][mu][lam] };
    let scale = (-2.0 * s).exp();
    let mut c = Contractions5 { hh00: 0.0, hh_jk: [[0.0; 5]; 5], hh_j0: [0.0; 5], p0: 0.0, p_j: [0.0; 5] };
    for mu in 0..6 {
        let sgn = MINKOWSKI[mu];
        c.hh00 += sgn * h[mu][0] * h[mu][0];
        for j in 0..5 {
            c.hh_j0[j] += sgn * h[mu][j + 1] * h[mu][0];
            for k in 0..5 {
                c.hh_jk[j][k] += sgn * h[mu][j + 1] * h[mu][k + 1];
            }
        }
        for nu in 0..6 {
            c.p0 += sgn * h[mu][nu] * deriv(nu, mu, 0);
            for j in 0..5 {
                c.p_j[j] += sgn * h[mu][nu] * deriv(nu, mu, j + 1);
            }
        }
    }
    c.hh00 *= scale;
    c.p0 *= scale;
    for j in 0..5 {
        c.hh_j0[j] *= scale;
        c.p_j[j] *= scale;
        for k in 0..5 {
            c.hh_jk[j][k] *= scale;
        }
    }
    c
}

/// Largest characteristic speed of the `d = 5` system on `[0, R]`.
pub fn max_speed(r_max: f64) -> f64 {
    characteristic_speeds(r_max).1
}

/// `h(0) = √2 - 2`.
pub const H0: f64 = SQRT_2 - 2.0;
