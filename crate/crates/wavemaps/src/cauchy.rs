//! Method-of-lines evolution of the radial wave-maps equation in the
//! standard `(t, r)` coordinates,
//!
//! ```text
//! û_tt = û_rr + (4/r) û_r + F(û, r),   F(u, r) = 4u³ ∫₀¹ cos(2sru)(1-s)² ds,
//! ```
//!
//! where `û = ψ/r` is the 5D radial representative. This module builds
//! perturbed initial data around `u₁*`, evolves it, and samples the result on
//! the initial hyperboloid of the similarity chart. That sample is the data
//! handed to the hyperboloidal flow.
//!
//! The initial hyperboloid reaches back to `t = T - 1 - 2ε < 0`, so
//! histories are built from two legs, one backward and one forward from
//! `t = 0`. The equation is time-reversible and both legs use the same
//! stepper.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::coords::HeightFunction;
use crate::error::{Result, WmError};
use crate::exact::{blowup_shift_difference, BlowupSolution};
use crate::grid::{check_len, interpolate_cubic, DiffOp, GridFunction, LeftEdge, Parity, RadialGrid, StateVector};
use crate::quad::{integrate_gl16, integrate_to};

pub const DEFAULT_CFL: f64 = 0.5;
pub const DEFAULT_CEILING: f64 = 1e6;
pub const DEFAULT_STORE_EVERY: usize = 4;
/// Surface area of the unit sphere `S⁴`.
pub const OMEGA4: f64 = 8.0 * PI * PI / 3.0;

/// `∫₀¹ cos(sz)(1-s)² ds`, by series for small `|z|`.
pub(crate) fn remainder_kernel(z: f64) -> f64 {
    if z.abs() < 0.5 {
        // Σ (-1)^k z^{2k}/(2k)! · 2/((2k+1)(2k+2)(2k+3))
        let z2 = z * z;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..8 {
            let kk = 2.0 * k as f64;
            sum += term * 2.0 / ((kk + 1.0) * (kk + 2.0) * (kk + 3.0));
            term *= -z2 / ((kk + 1.0) * (kk + 2.0));
        }
        sum
    } else {
        2.0 * (z - z.sin()) / (z * z * z)
    }
}

/// The nonlinearity `F(u, r) = -(sin(2ru) - 2ru)/r³`, smooth through `r = 0`.
pub fn wave_map_force(u: f64, r: f64) -> f64 {
    4.0 * u * u * u * remainder_kernel(2.0 * r * u)
}

/// `F` by direct quadrature of its integral form; a test oracle.
pub fn wave_map_force_quadrature(u: f64, r: f64) -> f64 {
    let z = 2.0 * r * u;
    let a = integrate_gl16(0.0, 0.5, |s| (s * z).cos() * (1.0 - s).powi(2));
    let b = integrate_gl16(0.5, 1.0, |s| (s * z).cos() * (1.0 - s).powi(2));
    4.0 * u.powi(3) * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Nonlinearity {
    WaveMap,
    Free,
}

/// Treatment of the outer node `r = r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OuterBoundary {
    /// Values of `u_T*`, exact whenever the perturbation's influence cone
    /// has not reached `r_max`.
    Exact { t_blowup: f64 },
    /// `(∂_t + ∂_r + 2/r) û = 0`, outgoing for 5D radial waves.
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchyConfig {
    pub cfl: f64,
    pub ceiling: f64,
    pub nonlinearity: Nonlinearity,
    pub boundary: OuterBoundary,
    /// Order of the finite-difference stencils (2 or 4).
    pub accuracy: usize,
}

impl Default for CauchyConfig {
    fn default() -> Self {
        Self {
            cfl: DEFAULT_CFL,
            ceiling: DEFAULT_CEILING,
            nonlinearity: Nonlinearity::WaveMap,
            boundary: OuterBoundary::Exact { t_blowup: 1.0 },
            accuracy: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyState {
    pub t: f64,
    pub u: GridFunction,
    pub du: GridFunction,
}

impl CauchyState {
    pub fn zeros(grid: &RadialGrid, t: f64) -> Self {
        Self { t, u: GridFunction::zeros(grid, Parity::Even), du: GridFunction::zeros(grid, Parity::Even) }
    }

    /// `u_T*` and `∂_t u_T*` at time `t`.
    pub fn exact(grid: &RadialGrid, t_blowup: f64, t: f64) -> Result<Self> {
        let sol = BlowupSolution::new(t_blowup);
        let u = grid.nodes().iter().map(|&r| sol.u(t, r)).collect::<Result<Vec<_>>>()?;
        let du = grid.nodes().iter().map(|&r| sol.du_dt(t, r)).collect::<Result<Vec<_>>>()?;
        Ok(Self { t, u: GridFunction { parity: Parity::Even, values: u }, du: GridFunction { parity: Parity::Even, values: du } })
    }

    pub fn max_abs(&self) -> f64 {
        self.u.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// One RK4 method-of-lines integrator on a fixed grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: RadialGrid,
    d1: DiffOp,
    d2: DiffOp,
    config: CauchyConfig,
}

impl Stepper {
    pub fn new(grid: &RadialGrid, config: CauchyConfig) -> Result<Self> {
        Ok(Self {
            grid: grid.clone(),
            d1: DiffOp::new(grid.len(), grid.dr(), 1, config.accuracy, LeftEdge::Parity)?,
            d2: DiffOp::new(grid.len(), grid.dr(), 2, config.accuracy, LeftEdge::Parity)?,
            config,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn config(&self) -> &CauchyConfig {
        &self.config
    }

    pub fn max_step(&self) -> f64 {
        self.config.cfl * self.grid.dr()
    }

    fn rhs(&self, t: f64, u: &[f64], du: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = u.len();
        let ur = self.d1.apply(u, Parity::Even);
        let urr = self.d2.apply(u, Parity::Even);
        let mut acc = vec![0.0; n];
        for i in 0..n {
            let r = self.grid.node(i);
            let lap = if i == 0 { 5.0 * urr[0] } else { urr[i] + 4.0 / r * ur[i] };
            let force = match self.config.nonlinearity {
                Nonlinearity::WaveMap => wave_map_force(u[i], r),
                Nonlinearity::Free => 0.0,
            };
            acc[i] = lap + force;
        }
        let mut vel = du.to_vec();
        let last = n - 1;
        let r = self.grid.r_max();
        match self.config.boundary {
            OuterBoundary::Exact { t_blowup } => {
                let tau = t_blowup - t;
                let q = tau * tau + r * r;
                vel[last] = 2.0 / q;
                acc[last] = 4.0 * tau / (q * q);
            }
            OuterBoundary::Outgoing => {
                let dur = self.d1.apply(du, Parity::Even);
                acc[last] = -dur[last] - 2.0 * du[last] / r;
            }
        }
        (vel, acc)
    }

    /// One RK4 step of signed size `dt`.
    pub fn step(&self, state: &CauchyState, dt: f64) -> Result<CauchyState> {
        let limit = self.max_step();
        if dt == 0.0 || dt.abs() > limit * (1.0 + 1e-12) {
            return Err(WmError::CflViolation { step: dt.abs(), limit });
        }
        check_len(&self.grid, &state.u.values)?;
        check_len(&self.grid, &state.du.values)?;
        let n = self.grid.len();
        let (u0, v0) = (&state.u.values, &state.du.values);
        let t = state.t;
        let (k1u, k1v) = self.rhs(t, u0, v0);
        let stage = |ku: &[f64], kv: &[f64], a: f64| -> (Vec<f64>, Vec<f64>) {
            ((0..n).map(|i| u0[i] + a * ku[i]).collect(), (0..n).map(|i| v0[i] + a * kv[i]).collect())
        };
        let (u1, v1) = stage(&k1u, &k1v, 0.5 * dt);
        let (k2u, k2v) = self.rhs(t + 0.5 * dt, &u1, &v1);
        let (u2, v2) = stage(&k2u, &k2v, 0.5 * dt);
        let (k3u, k3v) = self.rhs(t + 0.5 * dt, &u2, &v2);
        let (u3, v3) = stage(&k3u, &k3v, dt);
        let (k4u, k4v) = self.rhs(t + dt, &u3, &v3);
        let u: Vec<f64> = (0..n).map(|i| u0[i] + dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i])).collect();
        let du: Vec<f64> = (0..n).map(|i| v0[i] + dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])).collect();
        let out = CauchyState {
            t: t + dt,
            u: GridFunction { parity: Parity::Even, values: u },
            du: GridFunction { parity: Parity::Even, values: du },
        };
        let m = out.max_abs();
        if !m.is_finite() || m > self.config.ceiling {
            return Err(WmError::BlowupDetected { t: out.t, max_abs: m });
        }
        Ok(out)
    }

    /// Evolve to `t_end` (either direction) with equal steps, calling
    /// `observe` on the initial state and after every step.
    pub fn evolve(
        &self,
        state: &CauchyState,
        t_end: f64,
        mut observe: impl FnMut(&CauchyState),
    ) -> Result<CauchyState> {
        let span = t_end - state.t;
        let mut cur = state.clone();
        observe(&cur);
        if span == 0.0 {
            return Ok(cur);
        }
        let steps = (span.abs() / self.max_step()).ceil() as usize;
        let dt = span / steps as f64;
        for k in 1..=steps {
            cur = self.step(&cur, dt)?;
            if k == steps {
                cur.t = t_end;
            }
            observe(&cur);
        }
        Ok(cur)
    }
}

/// One RK4 step; see [`Stepper::step`].
pub fn step_cauchy(stepper: &Stepper, state: &CauchyState, dt: f64) -> Result<CauchyState> {
    stepper.step(state, dt)
}

/// Leapfrog for `û_tt = Δû + F`, used only as an independent cross-check.
pub fn leapfrog(grid: &RadialGrid, state: &CauchyState, t_end: f64, config: CauchyConfig) -> Result<CauchyState> {
    let stepper = Stepper::new(grid, config)?;
    let steps = ((t_end - state.t).abs() / stepper.max_step()).ceil() as usize;
    let dt = (t_end - state.t) / steps as f64;
    let n = grid.len();
    let accel = |t: f64, u: &[f64]| stepper.rhs(t, u, &vec![0.0; n]).1;
    // Taylor start: u¹ = u⁰ + dt v⁰ + dt²/2 a⁰.
    let a0 = accel(state.t, &state.u.values);
    let mut prev = state.u.values.clone();
    let mut cur: Vec<f64> = (0..n).map(|i| prev[i] + dt * state.du.values[i] + 0.5 * dt * dt * a0[i]).collect();
    let mut t = state.t + dt;
    for _ in 1..steps {
        let a = accel(t, &cur);
        let next: Vec<f64> = (0..n).map(|i| 2.0 * cur[i] - prev[i] + dt * dt * a[i]).collect();
        prev = std::mem::replace(&mut cur, next);
        t += dt;
    }
    let du: Vec<f64> = {
        let a = accel(t, &cur);
        (0..n).map(|i| (cur[i] - prev[i]) / dt + 0.5 * dt * a[i]).collect()
    };
    Ok(CauchyState {
        t: t_end,
        u: GridFunction { parity: Parity::Even, values: cur },
        du: GridFunction { parity: Parity::Even, values: du },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Profile {
    GaussianBump,
    PolynomialBump,
}

/// Smooth radial perturbation `(f, g) = (a_f P(r), a_g P(r))` supported in
/// the ball of radius `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub g_amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub profile: Profile,
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        Self { amplitude: 0.0, g_amplitude: 0.0, width: 0.01, center: 0.0, profile: Profile::GaussianBump }
    }

    pub fn gaussian(amplitude: f64, eps: f64) -> Self {
        Self { amplitude, g_amplitude: 0.0, width: eps / 6.0, center: 0.0, profile: Profile::GaussianBump }
    }

    /// The unit profile `P(r)`, even in `r`.
    pub fn shape(&self, r: f64) -> f64 {
        let one = |z: f64| match self.profile {
            Profile::GaussianBump => (-(z / self.width).powi(2)).exp(),
            Profile::PolynomialBump => {
                let q = 1.0 - (z / self.width).powi(2);
                if q > 0.0 {
                    q.powi(6)
                } else {
                    0.0
                }
            }
        };
        if self.center == 0.0 {
            one(r)
        } else {
            one(r - self.center) + one(r + self.center)
        }
    }

    pub fn f(&self, r: f64) -> f64 {
        self.amplitude * self.shape(r)
    }

    pub fn g(&self, r: f64) -> f64 {
        self.g_amplitude * self.shape(r)
    }

    /// Largest `|f|, |g|` on `r ≥ eps`, sampled finely.
    pub fn leak(&self, eps: f64) -> f64 {
        let amp = self.amplitude.abs().max(self.g_amplitude.abs());
        (0..=2000).map(|i| eps + 4.0 * eps * i as f64 / 2000.0).map(|r| amp * self.shape(r).abs()).fold(0.0, f64::max)
    }
}

/// `u₁*(0, ·) + f`, `∂₀u₁*(0, ·) + g` on the grid.
pub fn build_initial_data(grid: &RadialGrid, spec: &PerturbationSpec, eps: f64) -> Result<CauchyState> {
    if spec.width <= 0.0 {
        return Err(WmError::Domain(format!("perturbation width must be positive, got {}", spec.width)));
    }
    let leak = spec.leak(eps);
    if leak > 1e-12 {
        return Err(WmError::Support(format!("perturbation reaches {leak:.3e} outside the ball of radius {eps}")));
    }
    let mut s = CauchyState::exact(grid, 1.0, 0.0)?;
    for (i, r) in grid.nodes().into_iter().enumerate() {
        s.u.values[i] += spec.f(r);
        s.du.values[i] += spec.g(r);
    }
    Ok(s)
}

/// Snapshots of an evolution, kept for a trailing window in `t`.
#[derive(Debug, Clone)]
pub struct History {
    grid: RadialGrid,
    window: f64,
    states: VecDeque<CauchyState>,
}

impl History {
    pub fn new(grid: &RadialGrid, window: f64) -> Self {
        Self { grid: grid.clone(), window, states: VecDeque::new() }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &CauchyState> {
        self.states.iter()
    }

    /// Push a snapshot; times must increase. Snapshots older than the window
    /// are dropped.
    pub fn push(&mut self, s: CauchyState) {
        if let Some(last) = self.states.back() {
            if s.t <= last.t {
                return;
            }
        }
        let t = s.t;
        self.states.push_back(s);
        while self.states.front().is_some_and(|f| f.t < t - self.window) {
            self.states.pop_front();
        }
    }

    pub fn t_range(&self) -> Option<(f64, f64)> {
        Some((self.states.front()?.t, self.states.back()?.t))
    }

    /// `(u, ∂_t u, ∂_r u)` at `(t, r)` by cubic interpolation in `r` and
    /// cubic Lagrange interpolation in `t` over the four nearest snapshots.
    pub fn sample(&self, t: f64, r: f64) -> Result<(f64, f64, f64)> {
        let (t0, t1) = self.t_range().ok_or_else(|| WmError::Geometry("empty history".into()))?;
        if t < t0 - 1e-12 || t > t1 + 1e-12 || r.abs() > self.grid.r_max() {
            return Err(WmError::Geometry(format!("point (t, r) = ({t}, {r}) outside the stored history")));
        }
        if self.states.len() < 4 {
            return Err(WmError::Geometry("history too short to interpolate".into()));
        }
        let idx = self.states.partition_point(|s| s.t < t);
        let lo = idx.saturating_sub(2).min(self.states.len() - 4);
        let ts: Vec<f64> = (lo..lo + 4).map(|k| self.states[k].t).collect();
        let h = self.grid.dr();
        let mut out = (0.0, 0.0, 0.0);
        for (a, k) in (lo..lo + 4).enumerate() {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (t - ts[b]) / (ts[a] - ts[b]);
                }
            }
            let s = &self.states[k];
            let ur = s.u.derivative(&self.grid, 1, 4)?;
            out.0 += l * interpolate_cubic(&s.u.values, h, Some(Parity::Even), r.abs());
            out.1 += l * interpolate_cubic(&s.du.values, h, Some(Parity::Even), r.abs());
            out.2 += l * interpolate_cubic(&ur.values, h, Some(Parity::Odd), r.abs()) * r.signum();
        }
        Ok(out)
    }
}

/// `e^{-s₀}` of the initial hyperboloid, `s₀ = log(-h(0)/(1+2ε))`.
pub fn initial_slice(eps: f64) -> f64 {
    let h0 = HeightFunction.h(0.0);
    (-h0 / (1.0 + 2.0 * eps)).ln()
}

/// Whether `(t, r)` can be influenced by data supported in `B_ε` at `t = 0`.
pub fn in_influence_cone(t: f64, r: f64, eps: f64, margin: f64) -> bool {
    r.abs() < eps + t.abs() + margin
}

/// The data map `𝐔((f, g), T)` sampled on a `y`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperboloidTrace {
    pub s0: f64,
    pub t_blowup: f64,
    pub state: StateVector,
}

/// Time window of Cauchy data needed on the slice `s` of the chart centred
/// at `t_blowup`, or `None` if the slice never meets the influence cone.
pub fn slice_window(y_grid: &RadialGrid, t_blowup: f64, s: f64, eps: f64, margin: f64) -> Option<(f64, f64)> {
    let e = (-s).exp();
    let hf = HeightFunction;
    let mut out: Option<(f64, f64)> = None;
    for y in y_grid.nodes() {
        let (t, x) = (t_blowup + e * hf.h(y), e * y);
        if in_influence_cone(t, x, eps, margin) {
            let (lo, hi) = out.unwrap_or((t, t));
            out = Some((lo.min(t), hi.max(t)));
        }
    }
    out.map(|(lo, hi)| (lo - margin, hi + margin))
}

/// Time window `[t_min, t_max]` of Cauchy data needed for the traces at all
/// `T` in `t_range`; always contains `t = 0`.
pub fn required_window(y_grid: &RadialGrid, t_range: (f64, f64), eps: f64, margin: f64) -> (f64, f64) {
    let s0 = initial_slice(eps);
    let mut lo = 0.0_f64;
    let mut hi = 0.0_f64;
    for tb in [t_range.0, t_range.1] {
        if let Some((a, b)) = slice_window(y_grid, tb, s0, eps, margin) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    (lo, hi)
}

/// Evolve the data of `spec` backward and forward from `t = 0` so that the
/// history covers `window`, and return it.
pub fn evolve_history(
    grid: &RadialGrid,
    spec: &PerturbationSpec,
    eps: f64,
    window: (f64, f64),
    config: CauchyConfig,
    store_every: usize,
) -> Result<History> {
    let stepper = Stepper::new(grid, config)?;
    let data = build_initial_data(grid, spec, eps)?;
    let every = store_every.max(1);
    let mut back = Vec::new();
    let mut k = 0usize;
    stepper.evolve(&data, window.0.min(0.0), |s| {
        if k % every == 0 {
            back.push(s.clone());
        }
        k += 1;
    })?;
    let mut fwd = Vec::new();
    k = 0;
    stepper.evolve(&data, window.1.max(0.0), |s| {
        if k % every == 0 {
            fwd.push(s.clone());
        }
        k += 1;
    })?;
    let span = window.1 - window.0;
    let mut history = History::new(grid, 2.0 * span + 1.0);
    for s in back.into_iter().rev().chain(fwd) {
        history.push(s);
    }
    Ok(history)
}

/// Sample `e^{-s}(u - u_T*, ∂_s(u - u_T*))` on the slice `s` of the chart
/// centred at `t_blowup`. Points the perturbation cannot reach take their
/// values from `u₁*`.
pub fn extract_trace_on_slice(
    history: &History,
    y_grid: &RadialGrid,
    t_blowup: f64,
    eps: f64,
    s: f64,
) -> Result<HyperboloidTrace> {
    let e = (-s).exp();
    let hf = HeightFunction;
    let base = BlowupSolution::new(1.0);
    let target = BlowupSolution::new(t_blowup);
    let margin = 4.0 * history.grid().dr();
    let mut f1 = Vec::with_capacity(y_grid.len());
    let mut f2 = Vec::with_capacity(y_grid.len());
    for y in y_grid.nodes() {
        let (t, x) = (t_blowup + e * hf.h(y), e * y);
        let (u, ut, ur) = if in_influence_cone(t, x, eps, margin) {
            if x > history.grid().r_max() - margin {
                return Err(WmError::Geometry(format!("hyperboloid point r = {x} beyond the Cauchy grid")));
            }
            history.sample(t, x)?
        } else {
            (base.u(t, x)?, base.du_dt(t, x)?, base.du_dr(t, x)?)
        };
        let (v, vt, vr) = (u - target.u(t, x)?, ut - target.du_dt(t, x)?, ur - target.du_dr(t, x)?);
        let vs = -e * hf.h(y) * vt - e * y * vr;
        f1.push(e * v);
        f2.push(e * vs);
    }
    Ok(HyperboloidTrace { s0: s, t_blowup, state: StateVector { parity: Parity::Even, f1, f2 } })
}

/// The trace `𝐔((f, g), T)` on the initial slice `s₀`.
pub fn extract_hyperboloid_trace(
    history: &History,
    y_grid: &RadialGrid,
    t_blowup: f64,
    eps: f64,
) -> Result<HyperboloidTrace> {
    extract_trace_on_slice(history, y_grid, t_blowup, eps, initial_slice(eps))
}

/// `𝐔((0, 0), 1 + δ)` in closed form: the trace of `u₁*` relative to
/// `u_{1+δ}*`, accurate relative to `δ` even when `1 + δ` rounds to 1.
pub fn exact_trace(y_grid: &RadialGrid, delta: f64, eps: f64) -> Result<StateVector> {
    let s = initial_slice(eps);
    let e = (-s).exp();
    let hf = HeightFunction;
    let mut f1 = Vec::with_capacity(y_grid.len());
    let mut f2 = Vec::with_capacity(y_grid.len());
    for y in y_grid.nodes() {
        // t = 1 + δ + e h(y), so 1 - t = -δ - e h(y).
        let (v, vt, vr) = blowup_shift_difference(-delta - e * hf.h(y), e * y, delta)?;
        f1.push(e * v);
        f2.push(e * (-e * hf.h(y) * vt - e * y * vr));
    }
    Ok(StateVector { parity: Parity::Even, f1, f2 })
}

/// Builds `𝐔((f, g), T)` for any `T` in a fixed range from one Cauchy
/// evolution. The numerical background (a run with zero perturbation on
/// the same grid) is subtracted and replaced by the closed form, so only
/// the perturbation carries discretization error.
#[derive(Debug, Clone)]
pub struct TraceBuilder {
    y_grid: RadialGrid,
    eps: f64,
    perturbed: History,
    background: Option<History>,
}

impl TraceBuilder {
    pub fn new(
        grid: &RadialGrid,
        y_grid: &RadialGrid,
        spec: &PerturbationSpec,
        eps: f64,
        t_range: (f64, f64),
        config: CauchyConfig,
    ) -> Result<Self> {
        let window = required_window(y_grid, t_range, eps, 4.0 * grid.dr());
        let perturbed = evolve_history(grid, spec, eps, window, config, DEFAULT_STORE_EVERY)?;
        let background = if spec.amplitude == 0.0 && spec.g_amplitude == 0.0 {
            None
        } else {
            Some(evolve_history(grid, &PerturbationSpec::zero(), eps, window, config, DEFAULT_STORE_EVERY)?)
        };
        let builder = Self { y_grid: y_grid.clone(), eps, perturbed, background };
        // Containment of both extreme hyperboloids in the computed domain.
        builder.trace(t_range.0)?;
        builder.trace(t_range.1)?;
        Ok(builder)
    }

    pub fn y_grid(&self) -> &RadialGrid {
        &self.y_grid
    }

    pub fn history(&self) -> &History {
        &self.perturbed
    }

    pub fn trace(&self, t_blowup: f64) -> Result<StateVector> {
        self.trace_offset(t_blowup - 1.0)
    }

    /// `𝐔((f, g), 1 + δ)`; see [`exact_trace`] for why `δ` is passed
    /// separately.
    pub fn trace_offset(&self, delta: f64) -> Result<StateVector> {
        let exact = exact_trace(&self.y_grid, delta, self.eps)?;
        let Some(bg) = &self.background else {
            return Ok(exact);
        };
        let t_blowup = 1.0 + delta;
        let p = extract_hyperboloid_trace(&self.perturbed, &self.y_grid, t_blowup, self.eps)?.state;
        let b = extract_hyperboloid_trace(bg, &self.y_grid, t_blowup, self.eps)?.state;
        Ok(exact.axpy(1.0, &p.axpy(-1.0, &b)))
    }
}

/// The augmented energy on the backward light cone of `(T, 0)`:
/// `ω₄ [∫₀^{T-t} (u_t² + u_r²) r⁴ dr + (T-t)³ u(T-t)²]`.
pub fn lightcone_energy(grid: &RadialGrid, state: &CauchyState, t_blowup: f64) -> Result<f64> {
    let rad = t_blowup - state.t;
    if rad <= 0.0 {
        return Err(WmError::Domain(format!("t = {} is not before T = {t_blowup}", state.t)));
    }
    if rad > grid.r_max() {
        return Err(WmError::Geometry(format!("light cone radius {rad} exceeds the grid")));
    }
    let ur = state.u.derivative(grid, 1, 4)?;
    let dens: Vec<f64> = (0..grid.len())
        .map(|i| (state.du.values[i].powi(2) + ur.values[i].powi(2)) * grid.node(i).powi(4))
        .collect();
    let bulk = integrate_to(&dens, grid.dr(), rad);
    let edge = state.u.interpolate(grid, rad);
    Ok(OMEGA4 * (bulk + rad.powi(3) * edge * edge))
}

/// Write `snap_t<t>.csv` with header `t,r,u,du` into `dir`.
pub fn write_snapshot(dir: &Path, grid: &RadialGrid, state: &CauchyState) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("snap_t{:.6}.csv", state.t));
    let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "t,r,u,du")?;
    for i in 0..grid.len() {
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", state.t, grid.node(i), state.u.values[i], state.du.values[i])?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 0.05;

    fn cauchy_grid(n: usize) -> RadialGrid {
        RadialGrid::new(n, 1.0 + 4.0 * EPS + 0.3).unwrap()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn force_forms_agree() {
        for &(u, r) in &[(0.3, 0.0), (2.0, 0.2), (1e-3, 1.0), (-4.0, 0.7), (10.0, 1.3)] {
            let a = wave_map_force(u, r);
            let b = wave_map_force_quadrature(u, r);
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "({u}, {r}): {a} vs {b}");
            if r > 0.0 {
                let direct = -((2.0 * r * u).sin() - 2.0 * r * u) / r.powi(3);
                assert!((a - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            }
        }
        assert_eq!(wave_map_force(0.0, 0.5), 0.0);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = cauchy_grid(101);
        let cfg = CauchyConfig { nonlinearity: Nonlinearity::Free, boundary: OuterBoundary::Outgoing, ..Default::default() };
        let st = Stepper::new(&g, cfg).unwrap();
        let out = st.evolve(&CauchyState::zeros(&g, 0.0), 0.3, |_| {}).unwrap();
        assert_eq!(out.max_abs(), 0.0);
        // The wave-map nonlinearity vanishes at zero as well.
        let st = Stepper::new(&g, CauchyConfig { boundary: OuterBoundary::Outgoing, ..Default::default() }).unwrap();
        assert_eq!(st.evolve(&CauchyState::zeros(&g, 0.0), 0.3, |_| {}).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn cfl_violation() {
        let g = cauchy_grid(101);
        let st = Stepper::new(&g, CauchyConfig::default()).unwrap();
        let s = CauchyState::exact(&g, 1.0, 0.0).unwrap();
        assert!(matches!(st.step(&s, 2.0 * st.max_step()), Err(WmError::CflViolation { .. })));
    }

    #[test]
    fn blowup_detector_trips() {
        let g = cauchy_grid(101);
        let cfg = CauchyConfig { ceiling: 5.0, ..Default::default() };
        let st = Stepper::new(&g, cfg).unwrap();
        let err = st.evolve(&CauchyState::exact(&g, 1.0, 0.0).unwrap(), 0.9, |_| {}).unwrap_err();
        assert!(matches!(err, WmError::BlowupDetected { .. }));
    }

    #[test]
    fn exact_solution_is_reproduced_at_second_order() {
        let mut errs = Vec::new();
        for n in [101usize, 201, 401] {
            let g = cauchy_grid(n);
            let st = Stepper::new(&g, CauchyConfig::default()).unwrap();
            let out = st.evolve(&CauchyState::exact(&g, 1.0, 0.0).unwrap(), 0.5, |_| {}).unwrap();
            let exact = CauchyState::exact(&g, 1.0, 0.5).unwrap();
            errs.push(max_err(&out.u.values, &exact.u.values));
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 1.8 && o2 > 1.8, "errors {errs:?}");
    }

    #[test]
    fn backward_evolution_is_exact_too() {
        let g = cauchy_grid(201);
        let st = Stepper::new(&g, CauchyConfig::default()).unwrap();
        let out = st.evolve(&CauchyState::exact(&g, 1.0, 0.0).unwrap(), -0.2, |_| {}).unwrap();
        let exact = CauchyState::exact(&g, 1.0, -0.2).unwrap();
        assert!(max_err(&out.u.values, &exact.u.values) < 1e-4);
    }

    #[test]
    fn leapfrog_agrees_at_second_order() {
        let mut diffs = Vec::new();
        for n in [101usize, 201] {
            let g = cauchy_grid(n);
            let spec = PerturbationSpec::gaussian(0.1, 0.2);
            let data = build_initial_data(&g, &spec, 0.2).unwrap();
            let cfg = CauchyConfig::default();
            let rk = Stepper::new(&g, cfg).unwrap().evolve(&data, 0.4, |_| {}).unwrap();
            let lf = leapfrog(&g, &data, 0.4, cfg).unwrap();
            diffs.push(max_err(&rk.u.values, &lf.u.values));
        }
        assert!(diffs[1] < 1e-3 && (diffs[0] / diffs[1]).log2() > 1.7, "{diffs:?}");
    }

    #[test]
    fn perturbation_support() {
        let spec = PerturbationSpec::gaussian(1.0, EPS);
        assert!(spec.shape(1.5 * EPS) < 1e-15);
        assert!(spec.leak(EPS) < 1e-15);
        let wide = PerturbationSpec { width: EPS, ..spec };
        let g = cauchy_grid(101);
        assert!(matches!(build_initial_data(&g, &wide, EPS), Err(WmError::Support(_))));
        let poly = PerturbationSpec { profile: Profile::PolynomialBump, width: EPS, ..spec };
        assert_eq!(poly.leak(EPS), 0.0);
    }

    #[test]
    fn zero_spec_gives_exact_data() {
        let g = cauchy_grid(101);
        let d = build_initial_data(&g, &PerturbationSpec::zero(), EPS).unwrap();
        assert_eq!(d, CauchyState::exact(&g, 1.0, 0.0).unwrap());
    }

    #[test]
    fn data_norm_linear_in_amplitude() {
        let g = cauchy_grid(401);
        let base = CauchyState::exact(&g, 1.0, 0.0).unwrap();
        let norm = |a: f64| {
            let d = build_initial_data(&g, &PerturbationSpec::gaussian(a, EPS), EPS).unwrap();
            let diff: Vec<f64> = d.u.values.iter().zip(&base.u.values).map(|(x, y)| x - y).collect();
            crate::descent::weighted_h5_norm(&g, &diff, 2).unwrap()
        };
        let (n1, n2) = (norm(1e-3), norm(2e-3));
        assert!((n2 / n1 - 2.0).abs() < 1e-9);
    }

    fn history_for(grid: &RadialGrid, y_grid: &RadialGrid, spec: &PerturbationSpec, tb: (f64, f64)) -> History {
        let window = required_window(y_grid, tb, EPS, 0.05);
        evolve_history(grid, spec, EPS, window, CauchyConfig::default(), 2).unwrap()
    }

    #[test]
    fn trace_of_unperturbed_data_vanishes() {
        let yg = RadialGrid::new(201, 3.441_518_440_112_253).unwrap();
        let errs: Vec<f64> = [301usize, 601]
            .iter()
            .map(|&n| {
                let g = cauchy_grid(n);
                let h = history_for(&g, &yg, &PerturbationSpec::zero(), (1.0, 1.0));
                let tr = extract_hyperboloid_trace(&h, &yg, 1.0, EPS).unwrap();
                assert!(tr.state.is_finite());
                tr.state.max_abs()
            })
            .collect();
        assert!(errs[1] < 1e-5 && errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn trace_derivative_in_t_is_the_gauge_mode() {
        let g = cauchy_grid(301);
        let yg = RadialGrid::new(201, 3.441_518_440_112_253).unwrap();
        let d = 1e-4;
        let h = history_for(&g, &yg, &PerturbationSpec::zero(), (1.0 - d, 1.0 + d));
        let p = extract_hyperboloid_trace(&h, &yg, 1.0 + d, EPS).unwrap().state;
        let m = extract_hyperboloid_trace(&h, &yg, 1.0 - d, EPS).unwrap().state;
        let dir = p.axpy(-1.0, &m);
        let gauge = crate::exact::gauge_mode(&yg);
        let dot: f64 = dir.f1.iter().zip(&gauge.f1).chain(dir.f2.iter().zip(&gauge.f2)).map(|(a, b)| a * b).sum();
        let na: f64 = dir.f1.iter().chain(&dir.f2).map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = gauge.f1.iter().chain(&gauge.f2).map(|a| a * a).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.999, "cosine {}", dot / (na * nb));
    }

    #[test]
    fn exact_trace_agrees_with_unperturbed_evolution() {
        let g = cauchy_grid(601);
        let yg = RadialGrid::new(201, 3.441_518_440_112_253).unwrap();
        let h = history_for(&g, &yg, &PerturbationSpec::zero(), (1.02, 1.02));
        let num = extract_hyperboloid_trace(&h, &yg, 1.02, EPS).unwrap().state;
        let exact = exact_trace(&yg, 0.02, EPS).unwrap();
        assert!(num.axpy(-1.0, &exact).max_abs() < 1e-5 * exact.max_abs().max(1.0));
        assert_eq!(exact_trace(&yg, 0.0, EPS).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn trace_is_linear_for_small_amplitudes() {
        let g = cauchy_grid(301);
        let yg = RadialGrid::new(201, 3.441_518_440_112_253).unwrap();
        let trace = |a: f64| {
            let h = history_for(&g, &yg, &PerturbationSpec::gaussian(a, EPS), (1.0, 1.0));
            let z = history_for(&g, &yg, &PerturbationSpec::zero(), (1.0, 1.0));
            let t = extract_hyperboloid_trace(&h, &yg, 1.0, EPS).unwrap().state;
            let t0 = extract_hyperboloid_trace(&z, &yg, 1.0, EPS).unwrap().state;
            t.axpy(-1.0, &t0).scaled(1.0 / a)
        };
        let (a, b) = (trace(1e-3), trace(1e-4));
        let diff = a.axpy(-1.0, &b).max_abs() / b.max_abs();
        assert!(diff < 0.01, "relative difference {diff}");
    }

    #[test]
    fn finite_speed_of_propagation() {
        let g = cauchy_grid(401);
        let cfg = CauchyConfig::default();
        let st = Stepper::new(&g, cfg).unwrap();
        let a = build_initial_data(&g, &PerturbationSpec::gaussian(1e-2, EPS), EPS).unwrap();
        let b = build_initial_data(&g, &PerturbationSpec::gaussian(-2e-2, EPS), EPS).unwrap();
        let (mut sa, mut sb) = (a.clone(), b.clone());
        let dt = st.max_step();
        let mut worst = 0.0_f64;
        while sa.t < 0.5 {
            sa = st.step(&sa, dt).unwrap();
            sb = st.step(&sb, dt).unwrap();
            for i in 0..g.len() {
                if !in_influence_cone(sa.t, g.node(i), EPS, 0.05) {
                    worst = worst.max((sa.u.values[i] - sb.u.values[i]).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn lipschitz_dependence_on_data() {
        let g = cauchy_grid(201);
        let st = Stepper::new(&g, CauchyConfig::default()).unwrap();
        let base = st.evolve(&build_initial_data(&g, &PerturbationSpec::zero(), EPS).unwrap(), 0.3, |_| {}).unwrap();
        let diff = |a: f64| {
            let s = st.evolve(&build_initial_data(&g, &PerturbationSpec::gaussian(a, EPS), EPS).unwrap(), 0.3, |_| {}).unwrap();
            max_err(&s.u.values, &base.u.values)
        };
        let ratio = diff(2e-3) / diff(1e-3);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn energy_is_non_increasing_for_free_waves() {
        let g = RadialGrid::new(801, 2.0).unwrap();
        let cfg = CauchyConfig { nonlinearity: Nonlinearity::Free, boundary: OuterBoundary::Outgoing, accuracy: 4, ..Default::default() };
        let st = Stepper::new(&g, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let (a, c, w) = (rng.gen_range(0.5..1.5), rng.gen_range(0.0..0.6), rng.gen_range(0.1..0.3));
            let bump = |r: f64| a * ((-((r - c) / w).powi(2)).exp() + (-((r + c) / w).powi(2)).exp());
            let s0 = CauchyState { t: 0.0, u: GridFunction::sample(&g, Parity::Even, bump), du: GridFunction::zeros(&g, Parity::Even) };
            let e0 = lightcone_energy(&g, &s0, 1.0).unwrap();
            let mut prev = e0;
            st.evolve(&s0, 0.8, |s| {
                let e = lightcone_energy(&g, s, 1.0).unwrap();
                assert!(e <= prev + 1e-8 * e0, "energy grew from {prev} to {e} at t = {}", s.t);
                prev = e;
            })
            .unwrap();
        }
    }

    #[test]
    fn energy_of_zero_is_zero() {
        let g = RadialGrid::new(101, 2.0).unwrap();
        assert_eq!(lightcone_energy(&g, &CauchyState::zeros(&g, 0.0), 1.0).unwrap(), 0.0);
        assert!(lightcone_energy(&g, &CauchyState::zeros(&g, 1.0), 1.0).is_err());
    }

    #[test]
    fn embedding_inequality() {
        // ‖f‖² ≤ R²‖∇f‖² + 2R‖f‖²_{∂B} on the 5-ball, radial f.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (a, b, c, rr) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.3..2.0));
            let f = |r: f64| a * (-b * r * r).exp() + c * r * r;
            let df = |r: f64| -2.0 * a * b * r * (-b * r * r).exp() + 2.0 * c * r;
            let lhs = OMEGA4 * integrate_gl16(0.0, rr, |r| f(r).powi(2) * r.powi(4));
            let grad = OMEGA4 * integrate_gl16(0.0, rr, |r| df(r).powi(2) * r.powi(4));
            let bdry = OMEGA4 * rr.powi(4) * f(rr).powi(2);
            assert!(lhs <= rr * rr * grad + 2.0 * rr * bdry + 1e-12);
        }
    }

    #[test]
    fn snapshot_format() {
        let dir = tempfile::tempdir().unwrap();
        let g = RadialGrid::new(11, 1.0).unwrap();
        let s = CauchyState::exact(&g, 1.0, 0.25).unwrap();
        let p = write_snapshot(dir.path(), &g, &s).unwrap();
        assert_eq!(p.file_name().unwrap().to_str().unwrap(), "snap_t0.250000.csv");
        let text = std::fs::read_to_string(p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,r,u,du"));
        assert_eq!(lines.count(), 11);
    }
}
