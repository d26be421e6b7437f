//! Radial dimensional descent from five space dimensions to one.
//!
//! On the level of Cartesian radial functions the descent is the classical
//! identity `∂_r²(r²∂_r + 3r) = (r²∂_r + 3r)(∂_r² + (4/r)∂_r)`. Rewritten in
//! hyperboloidal similarity coordinates it becomes the operator `D̂₅`, which
//! takes an even pair `(f̂₁, f̂₂)` on `[0, R]` to an odd pair and intertwines
//! the free `d = 5` and `d = 1` generators:
//!
//! ```text
//! D̂₅ L̂₅ f = L̂₁ D̂₅ f + D̂₅ f.
//! ```
//!
//! `D̂₅` is inverted explicitly by variation of constants. Only values of
//! `g = D̂₅f` are needed, never derivatives of `g`.

use std::f64::consts::SQRT_2;

use crate::coords::{HeightFunction, SystemCoefficients};
use crate::error::{Result, WmError};
use crate::grid::{check_len, DiffOp, GridFunction, LeftEdge, Parity, RadialGrid, StateVector};
use crate::quad::{integrate_gl16, simpson};

/// Stencil accuracy of every derivative taken in this module.
const ACCURACY: usize = 4;

/// Coefficients of `D̂₅`:
///
/// ```text
/// g₁ = a11 f̂₁' + a10 f̂₁ + a20 f̂₂
/// g₂ = b12 f̂₁'' + b11 f̂₁' + b10 f̂₁ + b21 f̂₂' + b20 f̂₂
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentCoefficients {
    pub a11: f64,
    pub a10: f64,
    pub a20: f64,
    pub b12: f64,
    pub b11: f64,
    pub b10: f64,
    pub b21: f64,
    pub b20: f64,
}

impl DescentCoefficients {
    pub fn at(eta: f64) -> Self {
        let hf = HeightFunction;
        let w = hf.w(eta);
        let h = hf.h(eta);
        let wm = w - 1.0;
        let e2 = eta * eta;
        let e3 = e2 * eta;
        let p = 2.0 * w * w - w - 2.0;
        Self {
            a11: -w * h * e2 / (2.0 * wm),
            a10: 3.0 * eta,
            a20: -e3 / (2.0 * wm),
            b12: w * w * (2.0 * w - 3.0) * e3 / (2.0 * wm),
            b11: e2 * (6.0 * w.powi(4) - 19.0 * w.powi(3) + 16.0 * w * w + 2.0 * w - 6.0) / (2.0 * wm * wm),
            b10: -3.0 * eta,
            b21: w * e2 * p / (2.0 * wm),
            b20: eta * (2.0 * w * w - 3.0 * w + 2.0) * p / (2.0 * wm * wm),
        }
    }
}

/// Closed-form ingredients of the inverse of `D̂₅`.
///
/// Eliminating `f̂₂` turns `D̂₅f = g` into a second-order equation for `f̂₁`
/// whose homogeneous solutions are `φ` and `ψ`; both are singular at the
/// origin, which is what pins down the regular solution uniquely.
#[derive(Debug, Clone, Copy, Default)]
pub struct InverseKernel;

impl InverseKernel {
    /// `φ = (√(2+η²) - √2)/η³`, written without cancellation.
    pub fn phi(&self, eta: f64) -> f64 {
        1.0 / (eta * (HeightFunction.w(eta) + SQRT_2))
    }

    pub fn psi(&self, eta: f64) -> f64 {
        eta.powi(-3)
    }

    pub fn dphi(&self, eta: f64) -> f64 {
        let w = HeightFunction.w(eta);
        1.0 / (w * eta.powi(2)) - 3.0 * self.phi(eta) / eta
    }

    pub fn dpsi(&self, eta: f64) -> f64 {
        -3.0 * eta.powi(-4)
    }

    /// `W = φψ' - φ'ψ = -1/(η⁵ √(2+η²))`.
    pub fn wronskian(&self, eta: f64) -> f64 {
        -1.0 / (eta.powi(5) * HeightFunction.w(eta))
    }

    pub fn a(&self, eta: f64) -> f64 {
        let hf = HeightFunction;
        let (h, hp) = (hf.h(eta), hf.dh(eta));
        (2.0 * eta * hp - h * (1.0 + hp * hp)) / (eta * hp - h)
    }

    pub fn b(&self, eta: f64) -> f64 {
        let w = HeightFunction.w(eta);
        1.0 / (w * w * (w - 1.0))
    }

    /// The four kernels `K` such that `f̂` is assembled from `∫₀^η K g`.
    /// Each is `η` times a smooth even function.
    pub fn kernels(&self, eta: f64) -> [f64; 4] {
        let w = HeightFunction.w(eta);
        let wm = w - 1.0;
        let k1_psi = -eta * (2.0 * w * w - 4.0 * w + 3.0) / (w * wm * wm);
        let k1_phi = -eta
            * (4.0 * w.powi(3) - (7.0 + 2.0 * SQRT_2) * w * w + (2.0 + 4.0 * SQRT_2) * w - 3.0 * SQRT_2 + 2.0)
            / (w * wm * wm);
        let k2_psi = -eta / (w * wm);
        let k2_phi = -eta * (w - SQRT_2) / (w * wm);
        [k1_psi, k1_phi, k2_psi, k2_phi]
    }
}

/// `c (e^{-a(x-μ)²} + e^{-a(x+μ)²})`: an even test function with analytic
/// derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvenBump {
    pub c: f64,
    pub a: f64,
    pub mu: f64,
}

impl EvenBump {
    pub fn random<R: rand::Rng>(rng: &mut R) -> Self {
        Self { c: rng.gen_range(-1.0..1.0), a: rng.gen_range(0.5..2.0), mu: rng.gen_range(0.0..1.5) }
    }

    /// The `k`-th derivative, `k ≤ 2`.
    pub fn eval(&self, x: f64, k: usize) -> f64 {
        let one = |z: f64| {
            let e = (-self.a * z * z).exp();
            match k {
                0 => e,
                1 => -2.0 * self.a * z * e,
                _ => (4.0 * self.a * self.a * z * z - 2.0 * self.a) * e,
            }
        };
        self.c * (one(x - self.mu) + one(x + self.mu))
    }
}

/// `D̂₅ f` evaluated with exact derivatives of the pair `(p, q)`.
pub fn apply_d5_exact(grid: &RadialGrid, p: &EvenBump, q: &EvenBump) -> StateVector {
    let mut img = StateVector::zeros(grid, Parity::Odd);
    for i in 0..grid.len() {
        let e = grid.node(i);
        let c = DescentCoefficients::at(e);
        img.f1[i] = c.a11 * p.eval(e, 1) + c.a10 * p.eval(e, 0) + c.a20 * q.eval(e, 0);
        img.f2[i] = c.b12 * p.eval(e, 2) + c.b11 * p.eval(e, 1) + c.b10 * p.eval(e, 0) + c.b21 * q.eval(e, 1)
            + c.b20 * q.eval(e, 0);
    }
    img
}

fn derivative(grid: &RadialGrid, v: &[f64], parity: Parity, k: usize) -> Result<Vec<f64>> {
    let op = DiffOp::new(grid.len(), grid.dr(), k, ACCURACY, LeftEdge::Parity)?;
    Ok(op.apply(v, parity))
}

/// `D̂₅ f` for an even pair.
pub fn apply_d5(grid: &RadialGrid, f: &StateVector) -> Result<StateVector> {
    check_len(grid, &f.f1)?;
    check_len(grid, &f.f2)?;
    if f.parity != Parity::Even {
        return Err(WmError::Parity("the descent operator acts on even pairs".into()));
    }
    let d1 = derivative(grid, &f.f1, Parity::Even, 1)?;
    let d2 = derivative(grid, &f.f1, Parity::Even, 2)?;
    let e1 = derivative(grid, &f.f2, Parity::Even, 1)?;
    let mut g1 = Vec::with_capacity(grid.len());
    let mut g2 = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let c = DescentCoefficients::at(grid.node(i));
        g1.push(c.a11 * d1[i] + c.a10 * f.f1[i] + c.a20 * f.f2[i]);
        g2.push(c.b12 * d2[i] + c.b11 * d1[i] + c.b10 * f.f1[i] + c.b21 * e1[i] + c.b20 * f.f2[i]);
    }
    Ok(StateVector { parity: Parity::Odd, f1: g1, f2: g2 })
}

/// `D̂₅⁻¹ g` for an odd pair, returning the unique regular even preimage.
pub fn apply_d5_inverse(grid: &RadialGrid, g: &StateVector) -> Result<StateVector> {
    check_len(grid, &g.f1)?;
    check_len(grid, &g.f2)?;
    let scale = g.max_abs().max(1.0);
    if g.parity != Parity::Odd || g.f1[0].abs() > 1e-10 * scale || g.f2[0].abs() > 1e-10 * scale {
        return Err(WmError::Parity(format!(
            "the inverse descent needs odd data vanishing at the origin, got g(0) = ({}, {})",
            g.f1[0], g.f2[0]
        )));
    }
    let n = grid.len();
    let kern = InverseKernel;
    let g1 = GridFunction { parity: Parity::Odd, values: g.f1.clone() };
    let g2 = GridFunction { parity: Parity::Odd, values: g.f2.clone() };
    // Cumulative ∫₀^η K g, cell by cell against the parity-aware cubic
    // interpolant of g. The η⁻³ prefactors amplify any error committed in
    // the first cells, so the rule has to be exact there for odd cubics.
    let mut ints = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 1..n {
        let (a, b) = (grid.node(i - 1), grid.node(i));
        for (k, int) in ints.iter_mut().enumerate() {
            let src = if k < 2 { &g1 } else { &g2 };
            int[i] = int[i - 1] + integrate_gl16(a, b, |x| kern.kernels(x)[k] * src.interpolate(grid, x));
        }
    }
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    for i in 1..n {
        let eta = grid.node(i);
        let w = HeightFunction.w(eta);
        let e3 = eta.powi(3);
        let i_psi = ints[0][i] - ints[2][i];
        let i_phi = ints[3][i] - ints[1][i];
        f1[i] = kern.phi(eta) * i_psi + i_phi / e3;
        let gauge = -(2.0 * w - 3.0) / ((w - 1.0) * eta);
        // 2w + 2 - 3√2, rearranged to avoid cancellation at small η.
        let c = 2.0 * eta * eta / (w + SQRT_2) + (2.0 - SQRT_2);
        f2[i] = gauge * g.f1[i] + (c * i_psi + 3.0 * i_phi) / e3;
    }
    if n >= 4 {
        // Both components are even: extrapolate in η² from the first nodes.
        f1[0] = 1.5 * f1[1] - 0.6 * f1[2] + 0.1 * f1[3];
        f2[0] = 1.5 * f2[1] - 0.6 * f2[2] + 0.1 * f2[3];
    }
    Ok(StateVector { parity: Parity::Even, f1, f2 })
}

/// Free generator of the `d`-dimensional radial wave system,
/// `L̂_d f = (f₂, c12 f₁'' + c11 f₁' + c21 f₂' + c20 f₂)`.
/// Even pairs for `d = 5`, odd pairs for `d = 1`.
pub fn free_generator(grid: &RadialGrid, f: &StateVector, dim: usize) -> Result<StateVector> {
    check_len(grid, &f.f1)?;
    check_len(grid, &f.f2)?;
    let d1 = derivative(grid, &f.f1, f.parity, 1)?;
    let d2 = derivative(grid, &f.f1, f.parity, 2)?;
    let e1 = derivative(grid, &f.f2, f.parity, 1)?;
    let mut out = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let eta = grid.node(i);
        let c = SystemCoefficients::at(eta, dim)?;
        let c11_term = if i == 0 {
            // c11 f' -> (η c11)(0) f''(0) for even f; the d = 1 term vanishes.
            if dim == 5 {
                c.c11_eta * d2[0]
            } else {
                0.0
            }
        } else {
            c.c11_eta / eta * d1[i]
        };
        out[i] = c.c12 * d2[i] + c11_term + c.c21 * e1[i] + c.c20 * f.f2[i];
    }
    Ok(StateVector { parity: f.parity, f1: f.f2.clone(), f2: out })
}

/// Intertwining defect `D̂₅L̂₅f - L̂₁D̂₅f - D̂₅f`; zero up to discretization.
pub fn intertwining_defect(grid: &RadialGrid, f: &StateVector) -> Result<StateVector> {
    let lhs = apply_d5(grid, &free_generator(grid, f, 5)?)?;
    let g = apply_d5(grid, f)?;
    let rhs = free_generator(grid, &g, 1)?;
    Ok(lhs.axpy(-1.0, &rhs).axpy(-1.0, &g))
}

/// `sqrt(∫₀^R v²)` by Simpson.
pub fn l2_half(grid: &RadialGrid, v: &[f64]) -> f64 {
    simpson(&v.iter().map(|x| x * x).collect::<Vec<_>>(), grid.dr()).sqrt()
}

/// `Σ_{j ≤ k} ‖∂^j v‖_{L²(0,R)}` for a parity-tagged grid function.
pub fn sobolev_half(grid: &RadialGrid, v: &[f64], parity: Parity, k: usize) -> Result<f64> {
    if k > 4 {
        return Err(WmError::Order(k));
    }
    let mut total = l2_half(grid, v);
    for j in 1..=k {
        total += l2_half(grid, &derivative(grid, v, parity, j)?);
    }
    Ok(total)
}

/// `‖η² f̂‖_{H^k(0,R)}`, the surrogate for the `H^k` norm of the radial
/// function `f̂(|x|)` on the five-dimensional ball.
pub fn weighted_h5_norm(grid: &RadialGrid, f: &[f64], k: usize) -> Result<f64> {
    check_len(grid, f)?;
    if k > 4 {
        return Err(WmError::Order(k));
    }
    let weighted: Vec<f64> = f.iter().enumerate().map(|(i, v)| grid.node(i).powi(2) * v).collect();
    sobolev_half(grid, &weighted, Parity::Even, k)
}

/// `‖f‖_{H^{k+1}_5 × H^k_5}` in the weighted surrogate.
pub fn pair_h5_norm(grid: &RadialGrid, f: &StateVector, k: usize) -> Result<f64> {
    Ok(weighted_h5_norm(grid, &f.f1, k + 1)? + weighted_h5_norm(grid, &f.f2, k)?)
}

/// `‖g‖_{H^k × H^{k-1}}` on `(0, R)` for an odd pair.
pub fn pair_h1_norm(grid: &RadialGrid, g: &StateVector, k: usize) -> Result<f64> {
    Ok(sobolev_half(grid, &g.f1, g.parity, k)? + sobolev_half(grid, &g.f2, g.parity, k.saturating_sub(1))?)
}

/// `x^{-m} ∫₀^x y^n w(y) f(y) dy`, evaluated as
/// `x^{n+1-m} ∫₀¹ t^n w(xt) f(xt) dt`. An odd `f` contributes one more
/// power of `y`, so the operator is regular when `n + 1 ≥ m` for even `f`
/// and `n + 2 ≥ m` for odd `f`.
pub fn integral_operator(
    m: i32,
    n: i32,
    parity: Parity,
    weight: impl Fn(f64) -> f64,
    f: impl Fn(f64) -> f64,
    x: f64,
) -> Result<f64> {
    let extra = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    if n + 1 + extra < m {
        return Err(WmError::Domain(format!("x^-{m} ∫ y^{n} is singular at the origin for {parity:?} data")));
    }
    if x == 0.0 {
        return Ok(if n + 1 + extra == m { weight(0.0) * limit_ratio(&f, parity) / m as f64 } else { 0.0 });
    }
    let inner = match parity {
        Parity::Even => integrate_gl16(0.0, 1.0, |t| t.powi(n) * weight(x * t) * f(x * t)),
        Parity::Odd => integrate_gl16(0.0, 1.0, |t| t.powi(n + 1) * weight(x * t) * f(x * t) / (x * t)),
    };
    Ok(x.powi(n + 1 + extra - m) * inner)
}

/// `f(0)` for even data, `f'(0)` for odd data.
fn limit_ratio(f: &impl Fn(f64) -> f64, parity: Parity) -> f64 {
    match parity {
        Parity::Even => f(0.0),
        Parity::Odd => {
            let e = 1e-6;
            (f(e) - f(-e)) / (2.0 * e)
        }
    }
}
