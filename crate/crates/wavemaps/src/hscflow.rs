//! The nonlinear flow `∂_s Φ = 𝐋Φ + 𝐍(Φ)` in hyperboloidal similarity
//! coordinates, with `𝐋 = 𝐋₅ - 𝐈 + 𝐋'`.
//!
//! The state is `Φ = e^{-s}(v, ∂_s v)` where `v = u - u_T*` in HSC. Its first
//! row is `φ₂ - φ₁`; the second combines the free five-dimensional wave
//! operator, the `-φ₂` shift, the potential `V φ₁` and the nonlinearity
//! `-H(η) N(ηφ₁, η)`.
//!
//! The unstable gauge direction `f₁*` is controlled by shooting on the
//! blowup time `T` rather than by modifying the equation: for the right `T`
//! the late-time gauge projection stays small and the norm decays.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cauchy::remainder_kernel;
use crate::coords::{characteristic_speeds, l5_coefficients, HTensor, HeightFunction};
use crate::descent::pair_h5_norm;
use crate::error::{Result, WmError};
use crate::exact::{alpha0, gauge_mode, PotentialTable};
use crate::fit::fit_exponential;
use crate::grid::{check_len, DiffOp, LeftEdge, Parity, RadialGrid, StateVector};
use crate::quad::simpson;

pub const DEFAULT_CFL: f64 = 0.4;
pub const DEFAULT_K: usize = 2;
pub const OVERFLOW_NORM: f64 = 1e8;

/// Which pieces of `𝐋` to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OperatorOptions {
    /// Include `𝐋'`, the potential term `V φ₁`.
    pub potential: bool,
    /// Include the `-𝐈` shift.
    pub shift: bool,
    /// Finite-difference accuracy (2 or 4).
    pub accuracy: usize,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        Self { potential: true, shift: true, accuracy: 2 }
    }
}

impl OperatorOptions {
    /// The free operator `𝐋₅`.
    pub fn free() -> Self {
        Self { potential: false, shift: false, ..Self::default() }
    }
}

/// The discretized operator on `[0, R]` together with the tables needed
/// for the nonlinearity.
#[derive(Debug, Clone)]
pub struct HscOperator {
    grid: RadialGrid,
    options: OperatorOptions,
    d1: DiffOp,
    d2: DiffOp,
    coeffs: HTensor,
    potential: Vec<f64>,
    /// `-H(η) = 2(w-1)²`.
    neg_h: Vec<f64>,
    /// `sin(2ηα₀)/η` and `cos(2ηα₀)`.
    sin_a_eta: Vec<f64>,
    cos_a: Vec<f64>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl HscOperator {
    pub fn new(grid: &RadialGrid, options: OperatorOptions) -> Result<Self> {
        let r = grid.r_max();
        let (slow, fast) = characteristic_speeds(r);
        if !(slow > 0.0 && fast > 0.0) {
            return Err(WmError::Geometry(format!(
                "characteristic speeds ({slow:.4}, {fast:.4}) at R = {r} do not both leave the domain"
            )));
        }
        let table = PotentialTable::new(grid);
        let mut sin_a_eta = Vec::with_capacity(grid.len());
        let mut cos_a = Vec::with_capacity(grid.len());
        for (i, eta) in grid.nodes().into_iter().enumerate() {
            let a0 = if i == 0 { alpha0(0.0) } else { table.alpha0[i] };
            let a = 2.0 * eta * a0;
            sin_a_eta.push(2.0 * a0 * sinc(a));
            cos_a.push(a.cos());
        }
        Ok(Self {
            grid: grid.clone(),
            options,
            d1: DiffOp::new(grid.len(), grid.dr(), 1, options.accuracy, LeftEdge::Parity)?,
            d2: DiffOp::new(grid.len(), grid.dr(), 2, options.accuracy, LeftEdge::Parity)?,
            coeffs: l5_coefficients(grid)?,
            potential: table.v,
            neg_h: table.h.iter().map(|h| -h).collect(),
            sin_a_eta,
            cos_a,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn options(&self) -> OperatorOptions {
        self.options
    }

    /// Largest characteristic speed, attained at `R`.
    pub fn max_speed(&self) -> f64 {
        characteristic_speeds(self.grid.r_max()).1
    }

    /// Largest stable RK4 step for a given CFL number.
    pub fn max_step(&self, cfl: f64) -> f64 {
        cfl * self.grid.dr() / self.max_speed()
    }

    fn check(&self, phi: &StateVector) -> Result<()> {
        check_len(&self.grid, &phi.f1)?;
        check_len(&self.grid, &phi.f2)?;
        if phi.parity != Parity::Even {
            return Err(WmError::Parity("the HSC flow acts on even pairs".into()));
        }
        Ok(())
    }

    /// `𝐋φ` by finite differences.
    pub fn apply(&self, phi: &StateVector) -> Result<StateVector> {
        self.check(phi)?;
        Ok(self.apply_unchecked(phi))
    }

    fn apply_unchecked(&self, phi: &StateVector) -> StateVector {
        let n = self.grid.len();
        let f1p = self.d1.apply(&phi.f1, Parity::Even);
        // Where c12 < 0 the narrow second difference, paired with the
        // central first difference in the mixed term, turns the sawtooth mode
        // elliptic and unstable at a rate ~1/dy. There the second derivative
        // is taken as D₁D₁ instead, which keeps the semi-discrete principal
        // symbol hyperbolic.
        let narrow = self.d2.apply(&phi.f1, Parity::Even);
        let wide = self.d1.apply(&f1p, Parity::Odd);
        // The last two nodes keep the one-sided narrow stencil: differencing
        // the one-sided first derivative again would lose an order there.
        let f1pp: Vec<f64> =
            (0..n).map(|i| if self.coeffs.c12[i] > 0.0 || i + 2 >= n { narrow[i] } else { wide[i] }).collect();
        let f2p = self.d1.apply(&phi.f2, Parity::Even);
        let c = &self.coeffs;
        let mut out1 = phi.f2.clone();
        let mut out2 = vec![0.0; n];
        for i in 0..n {
            // c11 f' is singular-looking at the axis; for even f it tends to
            // (η c11)(0) f''(0).
            let c11_term = if i == 0 { c.c11_eta[0] * f1pp[0] } else { c.c11_eta[i] / c.eta[i] * f1p[i] };
            out2[i] = c.c12[i] * f1pp[i] + c11_term + c.c21[i] * f2p[i] + c.c20[i] * phi.f2[i];
            if self.options.shift {
                out1[i] -= phi.f1[i];
                out2[i] -= phi.f2[i];
            }
            if self.options.potential {
                out2[i] += self.potential[i] * phi.f1[i];
            }
        }
        StateVector { parity: Parity::Even, f1: out1, f2: out2 }
    }

    /// `𝐍(φ) = (0, -H N(ηφ₁, η))`, using
    /// `N(ηf, η) = 2 sin(a)/η · f² sinc²(ηf) + 4 cos(a) f³ K(2ηf)` with
    /// `a = 2ηα₀` and `K(z) = ∫₀¹ cos(sz)(1-s)² ds`.
    pub fn nonlinearity(&self, phi: &StateVector) -> Result<StateVector> {
        self.check(phi)?;
        Ok(self.nonlinearity_unchecked(phi))
    }

    fn nonlinearity_unchecked(&self, phi: &StateVector) -> StateVector {
        let n = self.grid.len();
        let mut f2 = vec![0.0; n];
        for (i, o) in f2.iter_mut().enumerate() {
            let f = phi.f1[i];
            if f == 0.0 {
                continue;
            }
            let eta = self.coeffs.eta[i];
            let q = sinc(eta * f);
            let nl = 2.0 * self.sin_a_eta[i] * f * f * q * q + 4.0 * self.cos_a[i] * f * f * f * remainder_kernel(2.0 * eta * f);
            *o = self.neg_h[i] * nl;
        }
        StateVector { parity: Parity::Even, f1: vec![0.0; n], f2 }
    }

    fn rhs(&self, phi: &StateVector, nonlinear: bool) -> StateVector {
        let l = self.apply_unchecked(phi);
        if nonlinear {
            l.axpy(1.0, &self.nonlinearity_unchecked(phi))
        } else {
            l
        }
    }

    /// The dense matrix of `𝐋` acting on `(φ₁, φ₂)` stacked.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        let mut e = StateVector::zeros(&self.grid, Parity::Even);
        for j in 0..2 * n {
            let slot = |e: &mut StateVector, v: f64| {
                if j < n {
                    e.f1[j] = v;
                } else {
                    e.f2[j - n] = v;
                }
            };
            slot(&mut e, 1.0);
            let col = self.apply_unchecked(&e);
            for i in 0..n {
                m[(i, j)] = col.f1[i];
                m[(n + i, j)] = col.f2[i];
            }
            slot(&mut e, 0.0);
        }
        m
    }
}

/// `𝐋φ`; see [`HscOperator::apply`].
pub fn apply_l(op: &HscOperator, phi: &StateVector) -> Result<StateVector> {
    op.apply(phi)
}

/// `∫₀^R η⁴ (a₁b₁ + a₂b₂) dη`.
pub fn weighted_pairing(grid: &RadialGrid, a: &StateVector, b: &StateVector) -> f64 {
    let dens: Vec<f64> = (0..grid.len())
        .map(|i| grid.node(i).powi(4) * (a.f1[i] * b.f1[i] + a.f2[i] * b.f2[i]))
        .collect();
    simpson(&dens, grid.dr())
}

/// The rank-one surrogate `⟨φ, f₁*⟩/⟨f₁*, f₁*⟩` of the gauge projection.
#[derive(Debug, Clone)]
pub struct GaugeSurrogate {
    grid: RadialGrid,
    mode: StateVector,
    norm2: f64,
}

impl GaugeSurrogate {
    pub fn new(grid: &RadialGrid) -> Self {
        let mode = gauge_mode(grid);
        let norm2 = weighted_pairing(grid, &mode, &mode);
        Self { grid: grid.clone(), mode, norm2 }
    }

    pub fn coefficient(&self, phi: &StateVector) -> f64 {
        weighted_pairing(&self.grid, phi, &self.mode) / self.norm2
    }

    pub fn mode(&self) -> &StateVector {
        &self.mode
    }
}

/// The spectral projection of the discrete operator onto its eigenvalue
/// near 1, from left and right eigenvectors computed by inverse iteration.
#[derive(Debug, Clone)]
pub struct DiscreteProjector {
    n: usize,
    left: Vec<f64>,
    right: Vec<f64>,
    /// The eigenvalue of the discrete operator closest to 1.
    pub eigenvalue: f64,
}

impl DiscreteProjector {
    pub fn new(op: &HscOperator) -> Result<Self> {
        let m = op.matrix();
        let n = op.grid().len();
        let shift = 1.0 + 1e-6;
        let shifted = &m - DMatrix::identity(2 * n, 2 * n) * shift;
        let lu = shifted.clone().lu();
        let lu_t = shifted.transpose().lu();
        let iterate = |solve: &dyn Fn(&nalgebra::DVector<f64>) -> Option<nalgebra::DVector<f64>>| -> Result<Vec<f64>> {
            let mut x = nalgebra::DVector::from_element(2 * n, 1.0);
            for _ in 0..4 {
                let y = solve(&x).ok_or_else(|| WmError::IntegrationFailure("singular shifted operator".into()))?;
                x = &y / y.norm();
            }
            Ok(x.iter().copied().collect())
        };
        let right = iterate(&|x| lu.solve(x))?;
        let left = iterate(&|x| lu_t.solve(x))?;
        let rv = nalgebra::DVector::from_vec(right.clone());
        let eigenvalue = rv.dot(&(&m * &rv)) / rv.dot(&rv);
        Ok(Self { n, left, right, eigenvalue })
    }

    fn flat(&self, phi: &StateVector) -> Vec<f64> {
        phi.f1.iter().chain(&phi.f2).copied().collect()
    }

    /// Component of `φ` along the unstable eigenvector, normalised so that
    /// the eigenvector itself has coefficient 1.
    pub fn coefficient(&self, phi: &StateVector) -> f64 {
        let x = self.flat(phi);
        let num: f64 = self.left.iter().zip(&x).map(|(a, b)| a * b).sum();
        let den: f64 = self.left.iter().zip(&self.right).map(|(a, b)| a * b).sum();
        num / den
    }

    pub fn eigenvector(&self) -> StateVector {
        StateVector { parity: Parity::Even, f1: self.right[..self.n].to_vec(), f2: self.right[self.n..].to_vec() }
    }

    /// `(𝐈 - 𝐏)φ`.
    pub fn remove(&self, phi: &StateVector) -> StateVector {
        phi.axpy(-self.coefficient(phi), &self.eigenvector())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowOptions {
    pub s_start: f64,
    pub s_max: f64,
    pub cfl: f64,
    /// Spacing of recorded samples in `s`.
    pub record_ds: f64,
    /// Sobolev index of the norm surrogate.
    pub k: usize,
    pub nonlinear: bool,
    /// Stop once the gauge projection exceeds this size.
    pub escape: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            s_start: 0.0,
            s_max: 8.0,
            cfl: DEFAULT_CFL,
            record_ds: 0.05,
            k: DEFAULT_K,
            nonlinear: true,
            escape: None,
        }
    }
}

/// One sample `(s, ‖Φ‖, ⟨Φ, f₁*⟩/⟨f₁*, f₁*⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowRecord {
    pub s: f64,
    pub norm: f64,
    pub projection: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    Overflow,
    Escaped,
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub history: Vec<FlowRecord>,
    pub state: StateVector,
    pub stop: StopReason,
}

impl FlowRun {
    pub fn last(&self) -> FlowRecord {
        *self.history.last().expect("a flow run records its initial state")
    }
}

/// RK4 integration of `∂_s Φ = 𝐋Φ (+ 𝐍(Φ))` from `s_start` to `s_max`.
pub fn evolve_flow(op: &HscOperator, phi0: &StateVector, opts: &FlowOptions) -> Result<FlowRun> {
    op.check(phi0)?;
    if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
        return Err(WmError::CflViolation { step: opts.cfl, limit: 1.0 });
    }
    if !(opts.s_max >= opts.s_start) || !(opts.record_ds > 0.0) {
        return Err(WmError::Domain(format!("bad flow interval [{}, {}]", opts.s_start, opts.s_max)));
    }
    let grid = op.grid();
    let gauge = GaugeSurrogate::new(grid);
    let record = |s: f64, phi: &StateVector| -> Result<FlowRecord> {
        Ok(FlowRecord { s, norm: pair_h5_norm(grid, phi, opts.k)?, projection: gauge.coefficient(phi) })
    };
    let ds_max = op.max_step(opts.cfl);
    let n_records = ((opts.s_max - opts.s_start) / opts.record_ds).round().max(0.0) as usize;
    let mut phi = phi0.clone();
    let mut history = vec![record(opts.s_start, &phi)?];
    let mut stop = StopReason::Completed;
    for r in 1..=n_records {
        let s_a = opts.s_start + (r - 1) as f64 * opts.record_ds;
        let s_b = if r == n_records { opts.s_max } else { opts.s_start + r as f64 * opts.record_ds };
        let steps = ((s_b - s_a) / ds_max).ceil().max(1.0) as usize;
        let ds = (s_b - s_a) / steps as f64;
        for _ in 0..steps {
            phi = rk4_step(op, &phi, ds, opts.nonlinear);
        }
        let rec = record(s_b, &phi)?;
        history.push(rec);
        if !rec.norm.is_finite() || rec.norm > OVERFLOW_NORM {
            stop = StopReason::Overflow;
            break;
        }
        if opts.escape.is_some_and(|e| rec.projection.abs() > e) {
            stop = StopReason::Escaped;
            break;
        }
    }
    Ok(FlowRun { history, state: phi, stop })
}

fn rk4_step(op: &HscOperator, phi: &StateVector, ds: f64, nonlinear: bool) -> StateVector {
    let k1 = op.rhs(phi, nonlinear);
    let k2 = op.rhs(&phi.axpy(0.5 * ds, &k1), nonlinear);
    let k3 = op.rhs(&phi.axpy(0.5 * ds, &k2), nonlinear);
    let k4 = op.rhs(&phi.axpy(ds, &k3), nonlinear);
    let mut out = phi.clone();
    for i in 0..out.f1.len() {
        out.f1[i] += ds / 6.0 * (k1.f1[i] + 2.0 * k2.f1[i] + 2.0 * k3.f1[i] + k4.f1[i]);
        out.f2[i] += ds / 6.0 * (k1.f2[i] + 2.0 * k2.f2[i] + 2.0 * k3.f2[i] + k4.f2[i]);
    }
    out
}

/// Least-squares rate and RMS residual of `ln ‖Φ‖` against `s` inside
/// `window`.
pub fn fit_decay_rate(history: &[FlowRecord], window: (f64, f64)) -> Result<(f64, f64)> {
    let inside: Vec<&FlowRecord> = history.iter().filter(|r| r.s >= window.0 - 1e-12 && r.s <= window.1 + 1e-12).collect();
    if inside.len() < 10 {
        return Err(WmError::InsufficientData(format!("{} samples in [{}, {}], need 10", inside.len(), window.0, window.1)));
    }
    let s: Vec<f64> = inside.iter().map(|r| r.s).collect();
    let n: Vec<f64> = inside.iter().map(|r| r.norm).collect();
    let fit = fit_exponential(&s, &n)?;
    Ok((fit.slope, fit.rms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    UnstableGrowth,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectOptions {
    pub flow: FlowOptions,
    /// Bracket width at which the search on `T` stops.
    pub t_tol: f64,
    pub max_iter: usize,
    /// Gauge projection size at which a trial run is declared escaped.
    pub escape: f64,
    /// A completed trial is accepted once the gauge component carries at
    /// most this fraction of the final norm.
    pub gauge_tol: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self { flow: FlowOptions::default(), t_tol: 1e-20, max_iter: 100, escape: 0.05, gauge_tol: 1e-3 }
    }
}

/// One trial blowup time and the normalised late gauge coefficient
/// `e^{-(s_end - s_start)} ⟨Φ(s_end), f₁*⟩/⟨f₁*, f₁*⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trial {
    pub t_blowup: f64,
    /// `T - 1`, carried separately at full precision.
    pub offset: f64,
    pub gauge: f64,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowResult {
    pub selected_t: f64,
    /// `T - 1` at full precision.
    pub selected_offset: f64,
    pub norm_history: Vec<FlowRecord>,
    pub fitted_rate: Option<f64>,
    pub fit_residual: Option<f64>,
    pub verdict: Verdict,
    pub trials: Vec<Trial>,
}

/// Shooting on `T`: bracketing false position (Illinois variant) on the
/// sign of the late gauge projection, then a decay fit over
/// `[s_start + 1, s_max - 1]` for the best completed trial.
pub fn select_t(
    trace_builder: impl Fn(f64) -> Result<StateVector>,
    op: &HscOperator,
    t_lo: f64,
    t_hi: f64,
    opts: &SelectOptions,
) -> Result<FlowResult> {
    select_t_offset(|d| trace_builder(1.0 + d), op, t_lo - 1.0, t_hi - 1.0, opts)
}

/// [`select_t`] parametrised by `δ = T - 1`. The selected `T` typically
/// differs from 1 by less than the spacing of doubles near 1, so the shoot
/// must run in `δ` for the gauge direction to be removed completely.
pub fn select_t_offset(
    trace_builder: impl Fn(f64) -> Result<StateVector>,
    op: &HscOperator,
    d_lo: f64,
    d_hi: f64,
    opts: &SelectOptions,
) -> Result<FlowResult> {
    if !(d_lo < d_hi) {
        return Err(WmError::Bracket(format!("empty interval [1 + {d_lo}, 1 + {d_hi}]")));
    }
    let flow = FlowOptions { escape: Some(opts.escape), ..opts.flow };
    // The sign test uses the discrete spectral projection: the surrogate
    // also sees stable modes, which would leave true gauge content behind.
    let projector = DiscreteProjector::new(op)?;
    let gauge_norm = pair_h5_norm(op.grid(), &projector.eigenvector(), flow.k)?;
    let mut trials = Vec::new();
    let mut best: Option<(Trial, FlowRun)> = None;
    let mut accepted = false;
    let mut eval = |d: f64| -> Result<(f64, bool)> {
        let run = evolve_flow(op, &trace_builder(d)?, &flow)?;
        let last = run.last();
        let p = projector.coefficient(&run.state);
        let g = p * (-(last.s - flow.s_start)).exp();
        let trial = Trial { t_blowup: 1.0 + d, offset: d, gauge: g, stop: run.stop };
        trials.push(trial);
        let completed = run.stop == StopReason::Completed;
        let ok = completed && p.abs() * gauge_norm <= opts.gauge_tol * last.norm;
        if completed && best.as_ref().is_none_or(|(b, _)| g.abs() < b.gauge.abs()) {
            best = Some((trial, run));
        }
        Ok((g, ok))
    };
    let (mut a, mut b) = (d_lo, d_hi);
    let ((mut fa, ok_a), (mut fb, ok_b)) = (eval(a)?, eval(b)?);
    accepted |= ok_a || ok_b;
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(WmError::Bracket(format!(
            "late gauge projection has one sign on [1 + {d_lo}, 1 + {d_hi}]: {fa:e}, {fb:e}"
        )));
    }
    let mut iter = 0;
    while !accepted && fa != 0.0 && fb != 0.0 && (b - a).abs() > opts.t_tol && iter < opts.max_iter {
        iter += 1;
        let mut c = (a * fb - b * fa) / (fb - fa);
        let (lo, hi) = (a.min(b), a.max(b));
        if !(c > lo && c < hi) {
            c = 0.5 * (a + b);
        }
        let (fc, ok) = eval(c)?;
        accepted |= ok;
        if fc.signum() != fb.signum() {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
    }
    let Some((trial, run)) = best else {
        return Err(WmError::Inconclusive(format!("no trial run completed after {} evaluations", trials.len())));
    };
    let window = (flow.s_start + 1.0, flow.s_max - 1.0);
    let (verdict, fitted_rate, fit_residual) = match fit_decay_rate(&run.history, window) {
        Ok((rate, res)) if rate < 0.0 => (Verdict::Converged, Some(rate), Some(res)),
        Ok(_) => (Verdict::UnstableGrowth, None, None),
        Err(_) => (Verdict::Inconclusive, None, None),
    };
    Ok(FlowResult {
        selected_t: trial.t_blowup,
        selected_offset: trial.offset,
        norm_history: run.history,
        fitted_rate,
        fit_residual,
        verdict,
        trials,
    })
}

/// `‖𝐋f₁* - f₁*‖/‖f₁*‖` in the `η⁴`-weighted `L²` norm.
pub fn gauge_residual(op: &HscOperator) -> Result<f64> {
    let mode = gauge_mode(op.grid());
    let r = op.apply(&mode)?.axpy(-1.0, &mode);
    Ok((weighted_pairing(op.grid(), &r, &r) / weighted_pairing(op.grid(), &mode, &mode)).sqrt())
}

/// The slice `s` at which `(t, r)` lies in the chart centred at `T`, if any;
/// convenience for mapping flow output back to `(t, r)`.
pub fn slice_through(t_blowup: f64, t: f64, r: f64) -> Option<(f64, f64)> {
    let tau = t_blowup - t;
    // t - T = e^{-s} h(y), r = e^{-s} y  ⇒  y solves h(y)/y = (t - T)/r.
    let hf = HeightFunction;
    if r == 0.0 {
        return (tau > 0.0).then(|| (-(tau / -hf.h(0.0)).ln(), 0.0));
    }
    let k = -tau / r;
    // h(y)/y increases to 1, so slopes k ≥ 1 are never reached.
    if k >= 1.0 {
        return None;
    }
    let y = 2.0 / ((2.0 * (1.0 + k * k)).sqrt() - 2.0 * k);
    Some((-(r / y).ln(), y))
}
