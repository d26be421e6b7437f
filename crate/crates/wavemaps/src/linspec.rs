//! Mode stability of the blowup profile: eigenvalues of the linearized
//! operator in the closed right half-plane are the `λ` for which
//!
//! ```text
//! -(1-ρ²)f'' - (2/ρ)f' + 2(λ+1)ρf' + λ(λ+1)f + 2(1-6ρ²+ρ⁴)/(ρ²(1+ρ²)²) f = 0
//! ```
//!
//! has a solution that is odd and smooth on `[0, 1]`. Both endpoints are
//! regular singular points. The regular branches are seeded from Frobenius
//! series, integrated to `ρ = 1/2` and compared there through their
//! Wronskian.
//!
//! Multiplying through by `ρ²(1+ρ²)²` gives the polynomial form
//! `P f'' + Q f' + S f = 0` used below. The indicial exponents are `{1, -2}`
//! at `ρ = 0` and `{0, 1-λ}` at `ρ = 1`. The regular branches are `ρ¹` and
//! `(1-ρ)⁰`. At `λ = 0` the exponents at `ρ = 1` are resonant and the seed is
//! undefined.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WmError};
use crate::ode::dopri5;

pub const MATCH_POINT: f64 = 0.5;
pub const SEED_OFFSET: f64 = 0.05;
pub const SHOOT_TOL: f64 = 1e-12;
pub const TOL_MATCH: f64 = 1e-10;
const NEWTON_STEP: f64 = 1e-7;
const MAX_TERMS: usize = 400;

type C = Complex64;

/// `V₀(ξ) = 2(cos(8 arctan(|ξ|/(1+√(1+|ξ|²)))) - 1)/|ξ|²`.
pub fn v0_trig(rho: f64) -> f64 {
    if rho == 0.0 {
        return -16.0;
    }
    let a = (rho / (1.0 + (1.0 + rho * rho).sqrt())).atan();
    2.0 * ((8.0 * a).cos() - 1.0) / (rho * rho)
}

/// Closed form of [`v0_trig`], `-16/(1+|ξ|²)²`.
pub fn v0(rho: f64) -> f64 {
    -16.0 / (1.0 + rho * rho).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Endpoint {
    Zero,
    One,
}

/// The spectral ODE at a fixed `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOde {
    pub lambda: C,
}

fn poly_mul(a: &[C], b: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[C], b: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn real(v: &[f64]) -> Vec<C> {
    v.iter().map(|x| C::new(*x, 0.0)).collect()
}

/// Coefficients of `p(x0 + x)` in powers of `x`.
fn poly_shift(p: &[C], x0: f64) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); p.len()];
    for (i, c) in p.iter().enumerate() {
        let mut binom = 1.0;
        for k in 0..=i {
            out[k] += c * binom * x0.powi((i - k) as i32);
            binom = binom * (i - k) as f64 / (k + 1) as f64;
        }
    }
    out
}

impl SpectralOde {
    pub fn new(lambda: C) -> Self {
        Self { lambda }
    }

    /// `(P, Q, S)` as coefficient vectors in powers of `ρ`.
    pub fn polynomials(&self) -> (Vec<C>, Vec<C>, Vec<C>) {
        let l = self.lambda;
        let opr2_sq = real(&[1.0, 0.0, 2.0, 0.0, 1.0]);
        let p = poly_mul(&real(&[0.0, 0.0, -1.0, 0.0, 1.0]), &opr2_sq);
        let q = poly_mul(&[C::new(0.0, 0.0), C::new(-2.0, 0.0), C::new(0.0, 0.0), 2.0 * (l + 1.0)], &opr2_sq);
        let s = poly_add(
            &poly_mul(&[C::new(0.0, 0.0), C::new(0.0, 0.0), l * (l + 1.0)], &opr2_sq),
            &real(&[2.0, 0.0, -12.0, 0.0, 2.0]),
        );
        (p, q, s)
    }

    /// `f''` from the ODE solved for the highest derivative.
    pub fn second_derivative(&self, rho: f64, f: C, fp: C) -> C {
        let l = self.lambda;
        let r2 = rho * rho;
        let pot = 2.0 * (1.0 - 6.0 * r2 + r2 * r2) / (r2 * (1.0 + r2).powi(2));
        (-(2.0 / rho) * fp + 2.0 * (l + 1.0) * rho * fp + l * (l + 1.0) * f + pot * f) / (1.0 - r2)
    }

    /// The left-hand side of the ODE.
    pub fn residual(&self, rho: f64, f: C, fp: C, fpp: C) -> C {
        -(1.0 - rho * rho) * fpp + (1.0 - rho * rho) * self.second_derivative(rho, f, fp)
    }
}

/// Frobenius coefficients `a_m` of the regular branch, normalized by
/// `a_0 = 1`. The series is `Σ a_m x^{m+α}` with `x = ρ` and `α = 1` at
/// `ρ = 0`, and `x = ρ - 1` and `α = 0` at `ρ = 1`.
pub fn frobenius_coefficients(lambda: C, endpoint: Endpoint, n_terms: usize) -> Result<(Vec<C>, i32)> {
    let (p, q, s) = SpectralOde::new(lambda).polynomials();
    // Bring the equation to x²p̃ f'' + x q̃ f' + s̃ f = 0 around the endpoint.
    let (pt, qt, st, alpha) = match endpoint {
        Endpoint::Zero => (p[2..].to_vec(), q[1..].to_vec(), s, 1),
        Endpoint::One => {
            let (ps, qs, ss) = (poly_shift(&p, 1.0), poly_shift(&q, 1.0), poly_shift(&s, 1.0));
            let mut st = vec![C::new(0.0, 0.0)];
            st.extend(ss);
            (ps[1..].to_vec(), qs, st, 0)
        }
    };
    let coef = |v: &[C], k: usize| v.get(k).copied().unwrap_or(C::new(0.0, 0.0));
    let width = pt.len().max(qt.len()).max(st.len());
    let mut a = vec![C::new(0.0, 0.0); n_terms];
    a[0] = C::new(1.0, 0.0);
    for m in 1..n_terms {
        let mut acc = C::new(0.0, 0.0);
        for k in 1..=m.min(width - 1) {
            let r = (m - k) as f64 + alpha as f64;
            acc += a[m - k] * (coef(&pt, k) * r * (r - 1.0) + coef(&qt, k) * r + coef(&st, k));
        }
        let r = m as f64 + alpha as f64;
        let den = coef(&pt, 0) * r * (r - 1.0) + coef(&qt, 0) * r + coef(&st, 0);
        if den.norm() < 1e-12 {
            return Err(WmError::SeriesDivergence(format!(
                "indicial resonance at term {m} for λ = {lambda} ({endpoint:?})"
            )));
        }
        a[m] = -acc / den;
    }
    Ok((a, alpha))
}

/// Value and derivative of the regular branch at `ρ = offset` or
/// `ρ = 1 - offset`.
pub fn frobenius_seed(lambda: C, endpoint: Endpoint, offset: f64) -> Result<(C, C)> {
    if !(offset > 0.0 && offset <= 0.1) {
        return Err(WmError::Domain(format!("seed offset must lie in (0, 0.1], got {offset}")));
    }
    let x = match endpoint {
        Endpoint::Zero => offset,
        Endpoint::One => -offset,
    };
    let (a, alpha) = frobenius_coefficients(lambda, endpoint, MAX_TERMS)?;
    sum_series(&a, alpha, x, 12)
}

fn sum_series(a: &[C], alpha: i32, x: f64, min_terms: usize) -> Result<(C, C)> {
    let mut f = C::new(0.0, 0.0);
    let mut fp = C::new(0.0, 0.0);
    let mut small = 0;
    for (m, am) in a.iter().enumerate() {
        let e = m as i32 + alpha;
        let term = am * x.powi(e);
        f += term;
        if e > 0 {
            fp += am * e as f64 * x.powi(e - 1);
        }
        if term.norm() <= 1e-17 * f.norm() {
            small += 1;
            if small >= 3 && m + 1 >= min_terms {
                return Ok((f, fp));
            }
        } else {
            small = 0;
        }
    }
    Err(WmError::SeriesDivergence(format!("Frobenius series terms do not decay at x = {x}")))
}

/// Values of both regular branches at the matching point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shot {
    pub left: (C, C),
    pub right: (C, C),
}

impl Shot {
    pub fn wronskian(&self) -> C {
        self.left.0 * self.right.1 - self.left.1 * self.right.0
    }

    /// The Wronskian divided by the norms of both Cauchy data; scale free.
    pub fn normalized_mismatch(&self) -> f64 {
        let nl = (self.left.0.norm_sqr() + self.left.1.norm_sqr()).sqrt();
        let nr = (self.right.0.norm_sqr() + self.right.1.norm_sqr()).sqrt();
        self.wronskian().norm() / (nl * nr)
    }
}

fn integrate_branch(lambda: C, start: f64, seed: (C, C), end: f64) -> Result<(C, C)> {
    let ode = SpectralOde::new(lambda);
    let y = dopri5(
        |rho, y: &[C; 2]| [y[1], ode.second_derivative(rho, y[0], y[1])],
        start,
        [seed.0, seed.1],
        end,
        SHOOT_TOL,
    )?;
    Ok((y[0], y[1]))
}

pub fn shoot(lambda: C) -> Result<Shot> {
    let left = integrate_branch(lambda, SEED_OFFSET, frobenius_seed(lambda, Endpoint::Zero, SEED_OFFSET)?, MATCH_POINT)?;
    let right =
        integrate_branch(lambda, 1.0 - SEED_OFFSET, frobenius_seed(lambda, Endpoint::One, SEED_OFFSET)?, MATCH_POINT)?;
    Ok(Shot { left, right })
}

/// Connection Wronskian `f_L f_R' - f_L' f_R` at `ρ = 1/2`; analytic in `λ`
/// and zero exactly at eigenvalues.
pub fn shoot_mismatch(lambda: C) -> Result<C> {
    Ok(shoot(lambda)?.wronskian())
}

/// The regular solution from `ρ = 0` at the given points, normalized to 1
/// at the matching point.
pub fn eigenfunction(lambda: C, rhos: &[f64]) -> Result<Vec<C>> {
    let seed = frobenius_seed(lambda, Endpoint::Zero, SEED_OFFSET)?;
    let (a, alpha) = frobenius_coefficients(lambda, Endpoint::Zero, MAX_TERMS)?;
    let norm = integrate_branch(lambda, SEED_OFFSET, seed, MATCH_POINT)?.0;
    rhos.iter()
        .map(|&r| {
            let v = if r <= SEED_OFFSET { sum_series(&a, alpha, r, 1)?.0 } else { integrate_branch(lambda, SEED_OFFSET, seed, r)?.0 };
            Ok(v / norm)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenCandidate {
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// Raw connection Wronskian at the final iterate.
    pub mismatch_re: f64,
    pub mismatch_im: f64,
    /// Normalized mismatch, the quantity compared with `TOL_MATCH`.
    pub mismatch_abs: f64,
    pub newton_iters: usize,
    pub converged: bool,
}

impl EigenCandidate {
    pub fn lambda(&self) -> C {
        C::new(self.lambda_re, self.lambda_im)
    }
}

/// One line of `spectrum.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub re: f64,
    pub im: f64,
    pub mismatch_abs: f64,
    pub converged: bool,
}

impl From<&EigenCandidate> for SpectrumEntry {
    fn from(c: &EigenCandidate) -> Self {
        Self { re: c.lambda_re, im: c.lambda_im, mismatch_abs: c.mismatch_abs, converged: c.converged }
    }
}

/// Newton iteration on the mismatch with a forward-difference derivative.
pub fn newton_polish(lambda0: C, max_iter: usize) -> EigenCandidate {
    let mut lambda = lambda0;
    let mut iters = 0;
    let mut last = shoot(lambda).ok();
    while iters < max_iter {
        let Some(shot) = last else { break };
        if shot.normalized_mismatch() < 1e-2 * TOL_MATCH {
            break;
        }
        let Ok(w1) = shoot_mismatch(lambda + NEWTON_STEP) else { break };
        let w0 = shot.wronskian();
        let dw = (w1 - w0) / NEWTON_STEP;
        if dw.norm() == 0.0 {
            break;
        }
        let step = w0 / dw;
        lambda -= step;
        iters += 1;
        last = shoot(lambda).ok();
        if step.norm() < 1e-14 * (1.0 + lambda.norm()) {
            break;
        }
    }
    let (w, m) = match last {
        Some(s) => (s.wronskian(), s.normalized_mismatch()),
        None => (C::new(f64::NAN, f64::NAN), f64::INFINITY),
    };
    EigenCandidate {
        lambda_re: lambda.re,
        lambda_im: lambda.im,
        mismatch_re: w.re,
        mismatch_im: w.im,
        mismatch_abs: m,
        newton_iters: iters,
        converged: m < TOL_MATCH,
    }
}

/// A rectangular search region in the `λ`-plane with its sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanBox {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for ScanBox {
    fn default() -> Self {
        Self { re: (0.0, 2.5), im: (-4.0, 4.0), n_re: 60, n_im: 80 }
    }
}

/// Leftmost real part the scan accepts. Further left the essential spectrum
/// is close and the shooting characterization is not used.
pub const MIN_SCAN_RE: f64 = -0.4;

impl ScanBox {
    fn is_degenerate(&self) -> bool {
        !(self.re.1 > self.re.0 && self.im.1 > self.im.0) || self.n_re < 2 || self.n_im < 2
    }

    fn cell(&self) -> (f64, f64) {
        ((self.re.1 - self.re.0) / (self.n_re - 1) as f64, (self.im.1 - self.im.0) / (self.n_im - 1) as f64)
    }

    fn point(&self, i: usize, j: usize) -> C {
        let (dr, di) = self.cell();
        C::new(self.re.0 + i as f64 * dr, self.im.0 + j as f64 * di)
    }

    fn contains_loosely(&self, z: C) -> bool {
        let (dr, di) = self.cell();
        z.re >= self.re.0 - 0.5 * dr && z.re <= self.re.1 + 0.5 * dr && z.im >= self.im.0 - 0.5 * di && z.im <= self.im.1 + 0.5 * di
    }
}

/// Coarse scan of the normalized mismatch followed by Newton polishing from
/// every local minimum. Every polished candidate is returned, including the
/// ones that failed to converge, deduplicated to `1e-6`.
pub fn scan_candidates(region: &ScanBox) -> Vec<EigenCandidate> {
    let mut region = *region;
    region.re.0 = region.re.0.max(MIN_SCAN_RE);
    if region.is_degenerate() {
        return Vec::new();
    }
    let (nr, ni) = (region.n_re, region.n_im);
    let values: Vec<f64> = (0..nr * ni)
        .into_par_iter()
        .map(|k| shoot(region.point(k / ni, k % ni)).map(|s| s.normalized_mismatch().ln()).unwrap_or(f64::INFINITY))
        .collect();
    let at = |i: i64, j: i64| -> f64 {
        if i < 0 || j < 0 || i >= nr as i64 || j >= ni as i64 {
            f64::INFINITY
        } else {
            values[i as usize * ni + j as usize]
        }
    };
    let mut starts = Vec::new();
    for i in 0..nr as i64 {
        for j in 0..ni as i64 {
            let v = at(i, j);
            if !v.is_finite() {
                continue;
            }
            let is_min = (-1..=1).all(|a| (-1..=1).all(|b| (a == 0 && b == 0) || at(i + a, j + b) >= v));
            if is_min {
                starts.push(region.point(i as usize, j as usize));
            }
        }
    }
    let polished: Vec<EigenCandidate> = starts.par_iter().map(|&z| newton_polish(z, 40)).collect();
    let mut out: Vec<EigenCandidate> = Vec::new();
    for c in polished {
        if !c.lambda_re.is_finite() || !region.contains_loosely(c.lambda()) {
            continue;
        }
        match out.iter_mut().find(|o| (o.lambda() - c.lambda()).norm() < 1e-6) {
            Some(o) => {
                if c.mismatch_abs < o.mismatch_abs {
                    *o = c;
                }
            }
            None => out.push(c),
        }
    }
    out.sort_by(|a, b| b.lambda_re.total_cmp(&a.lambda_re).then(a.lambda_im.total_cmp(&b.lambda_im)));
    out
}

/// Converged eigenvalue candidates inside the region. Real parts below
/// [`MIN_SCAN_RE`] are clipped from the search.
pub fn scan_halfplane(region: &ScanBox) -> Vec<EigenCandidate> {
    scan_candidates(region).into_iter().filter(|c| c.converged).collect()
}
