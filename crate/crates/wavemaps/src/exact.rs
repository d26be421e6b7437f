//! Closed-form objects: the blowup family `u_T*`, its derivatives, the gauge
//! mode, the potentials and the nonlinearity in hyperboloidal variables.
//!
//! Removable singularities at `r = 0` and `η = 0` are filled by short
//! Taylor series below the threshold [`SERIES_CUTOFF`].

use crate::coords::HeightFunction;
use crate::error::{Result, WmError};
use crate::grid::{Parity, RadialGrid, StateVector};
use crate::quad::integrate_gl16;

pub const SERIES_CUTOFF: f64 = 1e-4;

/// `atan(x)/x`, accurate for all `x`.
fn atan_over_x(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        1.0 - x2 / 3.0 + x2 * x2 / 5.0 - x2 * x2 * x2 / 7.0
    } else {
        x.atan() / x
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// The explicit blowup solution `u_T*(t, x) = 2 atan2(|x|, T - t) / |x|`
/// (the half-angle form of `(4/|x|) arctan(|x|/(T-t+sqrt((T-t)²+|x|²)))`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupSolution {
    pub t_blowup: f64,
}

impl BlowupSolution {
    pub fn new(t_blowup: f64) -> Self {
        Self { t_blowup }
    }

    pub fn u(&self, t: f64, r: f64) -> Result<f64> {
        let tau = self.t_blowup - t;
        if r == 0.0 {
            if tau <= 0.0 {
                return Err(WmError::Domain(format!("u_T* is singular on the axis for t = {t} >= T")));
            }
            return Ok(2.0 / tau);
        }
        let r = r.abs();
        if tau > 0.0 && r < SERIES_CUTOFF * tau {
            return Ok(2.0 / tau * atan_over_x(r / tau));
        }
        Ok(2.0 * r.atan2(tau) / r)
    }

    /// The co-rotational angle `ψ_T*(t, r) = r u_T*(t, r)`.
    pub fn psi(&self, t: f64, r: f64) -> f64 {
        2.0 * r.atan2(self.t_blowup - t)
    }

    /// `∂_t u_T* = 2/((T-t)² + r²)`.
    pub fn du_dt(&self, t: f64, r: f64) -> Result<f64> {
        let tau = self.t_blowup - t;
        let q = tau * tau + r * r;
        if q == 0.0 {
            return Err(WmError::Domain("time derivative undefined at the blowup point".into()));
        }
        Ok(2.0 / q)
    }

    /// `∂_r u_T*`; odd in `r`, with a series near the axis.
    pub fn du_dr(&self, t: f64, r: f64) -> Result<f64> {
        let tau = self.t_blowup - t;
        if r == 0.0 {
            if tau <= 0.0 {
                return Err(WmError::Domain(format!("u_T* is singular on the axis for t = {t} >= T")));
            }
            return Ok(0.0);
        }
        if tau > 0.0 && r.abs() < 1e-2 * tau {
            let x = r / tau;
            let x2 = x * x;
            return Ok(2.0 / (tau * tau) * x * (-2.0 / 3.0 + x2 * (4.0 / 5.0 + x2 * (-6.0 / 7.0 + x2 * 8.0 / 9.0))));
        }
        Ok(2.0 / (r * r) * (r * tau / (tau * tau + r * r) - r.abs().atan2(tau) * r.signum()))
    }

    /// `∂_T u_T* = -2/((T-t)² + r²)`.
    pub fn du_dtb(&self, t: f64, r: f64) -> Result<f64> {
        self.du_dt(t, r).map(|v| -v)
    }
}

/// `u₁* - u_{1+δ}*` and its `t`- and `r`-derivatives at `(t, r)`, where
/// `a = 1 - t` is passed directly. Every term is written as an explicit
/// multiple of `δ`, so the result keeps full relative precision even when
/// `1 + δ` rounds to 1.
pub fn blowup_shift_difference(a: f64, r: f64, delta: f64) -> Result<(f64, f64, f64)> {
    let b = a + delta;
    let r = r.abs();
    let (pa, pb) = (a * a + r * r, b * b + r * r);
    if pa == 0.0 || pb == 0.0 {
        return Err(WmError::Domain("difference evaluated at a blowup point".into()));
    }
    let dt = 2.0 * delta * (a + b) / (pa * pb);
    if r == 0.0 {
        return Ok((2.0 * delta / (a * b), dt, 0.0));
    }
    let q = a * b + r * r;
    let angle = (r * delta).atan2(q);
    let du = if q > 0.0 && r * delta.abs() < SERIES_CUTOFF * q {
        2.0 * delta / q * atan_over_x(r * delta / q)
    } else {
        2.0 * angle / r
    };
    let dr = if a > 0.0 && b > 0.0 && r < 1e-2 * a.min(b) {
        // Difference of the axis series of ∂_r u_τ*, term by term.
        let inv_diff = |n: i32| -> f64 {
            let mut sum = 0.0;
            for k in 0..n {
                sum += a.powi(k) * b.powi(n - 1 - k);
            }
            delta * sum / (a.powi(n) * b.powi(n))
        };
        let coeffs = [-4.0 / 3.0, 8.0 / 5.0, -12.0 / 7.0, 16.0 / 9.0];
        coeffs.iter().enumerate().map(|(k, c)| c * r.powi(2 * k as i32 + 1) * inv_diff(2 * k as i32 + 3)).sum()
    } else {
        2.0 * delta * (a * b - r * r) / (r * pa * pb) - 2.0 * angle / (r * r)
    };
    Ok((du, dt, dr))
}

pub fn eval_blowup(t_blowup: f64, t: f64, r: f64) -> Result<f64> {
    BlowupSolution::new(t_blowup).u(t, r)
}

pub fn eval_dt_blowup(t_blowup: f64, t: f64, r: f64) -> Result<f64> {
    BlowupSolution::new(t_blowup).du_dtb(t, r)
}

/// `θ(η) = atan2(η, -h(η))`; the blowup profile satisfies `2 η α₀ = 4θ`.
pub fn theta(eta: f64) -> f64 {
    eta.atan2(-HeightFunction.h(eta))
}

/// `θ/η`, smooth through `η = 0`.
fn theta_over_eta(eta: f64) -> f64 {
    let h = HeightFunction.h(eta);
    if eta.abs() < SERIES_CUTOFF {
        atan_over_x(eta / -h) / -h
    } else {
        theta(eta) / eta
    }
}

/// `α₀(η)`, defined by `u_T*(η_T(s, y)) = e^s α₀(|y|)`.
pub fn alpha0(eta: f64) -> f64 {
    2.0 * theta_over_eta(eta)
}

/// `H(η) = 1/Q00 = -2(w-1)²`, the inverse of `e^{-2s} H^{μ0} H_μ⁰`.
pub fn h_coefficient(eta: f64) -> f64 {
    let w = HeightFunction.w(eta);
    -2.0 * (w - 1.0) * (w - 1.0)
}

/// The HSC potential `V = H (2cos(2ηα₀) - 2)/η² = 8 h² / (w-1)²`.
pub fn potential(eta: f64) -> f64 {
    let hf = HeightFunction;
    let w = hf.w(eta);
    let h = hf.h(eta);
    8.0 * h * h / ((w - 1.0) * (w - 1.0))
}

/// The same potential assembled from its definition; only accurate away
/// from the axis.
pub fn potential_composed(eta: f64) -> f64 {
    h_coefficient(eta) * (2.0 * (4.0 * theta(eta)).cos() - 2.0) / (eta * eta)
}

/// `V₀(ρ) = -16/(1+ρ²)²`, the potential in standard similarity coordinates.
pub fn potential_similarity(rho: f64) -> f64 {
    -16.0 / (1.0 + rho * rho).powi(2)
}

pub fn potential_similarity_composed(rho: f64) -> f64 {
    let a = 8.0 * (rho / (1.0 + (1.0 + rho * rho).sqrt())).atan();
    2.0 / (rho * rho) * (a.cos() - 1.0)
}

/// `sin(2ηα₀)/η`, smooth through the axis.
fn sin_a_over_eta(eta: f64) -> f64 {
    let a = 4.0 * theta(eta);
    4.0 * theta_over_eta(eta) * sinc(a)
}

/// `Φ₀(f, η) = 4 ∫₀¹ cos(2ηα₀ + 2tηf)(1-t)² dt`.
fn phi0(f: f64, eta: f64) -> f64 {
    let a = 4.0 * theta(eta);
    let b = 2.0 * eta * f;
    4.0 * integrate_gl16(0.0, 1.0, |t| (a + b * t).cos() * (1.0 - t) * (1.0 - t))
}

/// `N(ηf, η) = 2 sin(2ηα₀)/η · f² + f³ Φ₀(f, η)`: the HSC nonlinearity with
/// its argument rescaled by `η`, smooth on the whole ball.
pub fn nonlinearity_scaled(f: f64, eta: f64) -> f64 {
    if f == 0.0 {
        return 0.0;
    }
    2.0 * sin_a_over_eta(eta) * f * f + f * f * f * phi0(f, eta)
}

/// `N(p, η) = -[sin(2ηα₀ + 2p) - sin(2ηα₀) - 2cos(2ηα₀)p]/η³`.
///
/// Near the axis the remainder representation is used; on the axis itself
/// the expression is only finite for `p = 0`, otherwise `±∞` is returned.
pub fn eval_nonlinearity(p: f64, eta: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    if eta == 0.0 {
        return f64::INFINITY.copysign(p);
    }
    if eta.abs() < SERIES_CUTOFF || p.abs() < 1e-3 {
        return nonlinearity_scaled(p / eta, eta);
    }
    let a = 4.0 * theta(eta);
    -((a + 2.0 * p).sin() - a.sin() - 2.0 * a.cos() * p) / eta.powi(3)
}

/// The gauge mode `f₁* = (1, 2)/(η² + h²)`, generated by time translation
/// of the blowup family.
pub fn gauge_mode_at(eta: f64) -> f64 {
    let w = HeightFunction.w(eta);
    1.0 / (2.0 * (w - 1.0) * (w - 1.0))
}

pub fn gauge_mode(grid: &RadialGrid) -> StateVector {
    StateVector::sample(grid, Parity::Even, gauge_mode_at, |e| 2.0 * gauge_mode_at(e))
}

/// Tabulated `α₀`, `V` and `H` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    pub eta: Vec<f64>,
    pub alpha0: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
}

impl PotentialTable {
    pub fn new(grid: &RadialGrid) -> Self {
        Self {
            eta: grid.nodes(),
            alpha0: grid.sample(alpha0),
            v: grid.sample(potential),
            h: grid.sample(h_coefficient),
        }
    }
}

/// Finite-difference residual of `u_T*` in the 5D radial equation at
/// `(t, r)` with step `dx`.
pub fn residual_u(sol: &BlowupSolution, t: f64, r: f64, dx: f64) -> Result<f64> {
    let u = |t: f64, r: f64| sol.u(t, r);
    let c = u(t, r)?;
    let utt = (u(t + dx, r)? - 2.0 * c + u(t - dx, r)?) / (dx * dx);
    let urr = (u(t, r + dx)? - 2.0 * c + u(t, r - dx)?) / (dx * dx);
    let ur = (u(t, r + dx)? - u(t, r - dx)?) / (2.0 * dx);
    let x = 2.0 * r * c;
    Ok(utt - urr - 4.0 / r * ur + (x.sin() - x) / r.powi(3))
}

/// Finite-difference residual of `ψ_T*` in the co-rotational equation.
pub fn residual_psi(sol: &BlowupSolution, t: f64, r: f64, dx: f64) -> f64 {
    let p = |t: f64, r: f64| sol.psi(t, r);
    let c = p(t, r);
    let ptt = (p(t + dx, r) - 2.0 * c + p(t - dx, r)) / (dx * dx);
    let prr = (p(t, r + dx) - 2.0 * c + p(t, r - dx)) / (dx * dx);
    let pr = (p(t, r + dx) - p(t, r - dx)) / (2.0 * dx);
    ptt - prr - 2.0 / r * pr + (2.0 * c).sin() / (r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::CoordChart;
    use proptest::prelude::*;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn blowup_examples() {
        assert!((eval_blowup(1.0, 0.0, 1.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((eval_blowup(1.0, 0.0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((eval_blowup(1.0, 0.0, 1e-9).unwrap() - 2.0).abs() < 1e-15);
        assert!(eval_blowup(1.0, 1.0, 0.0).is_err());
        assert!(eval_blowup(1.0, 1.5, 0.0).is_err());
        let sol = BlowupSolution::new(1.0);
        let direct = 4.0 / 0.3 * (0.3f64 / (0.6 + (0.36f64 + 0.09).sqrt())).atan();
        assert!((sol.u(0.4, 0.3).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn topological_charge_limits() {
        let sol = BlowupSolution::new(1.0);
        assert!(sol.psi(0.5, 1e-12).abs() < 1e-10);
        assert!((sol.psi(1.5, 1e-12) - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn t_derivative_examples() {
        assert_eq!(eval_dt_blowup(1.0, 0.0, 0.0).unwrap(), -2.0);
        assert_eq!(eval_dt_blowup(1.0, 1.0, 1.0).unwrap(), -2.0);
        assert!(eval_dt_blowup(1.0, 1.0, 0.0).is_err());
        let e = 1e-5;
        let fd = (eval_blowup(1.0 + e, 0.0, 0.5).unwrap() - eval_blowup(1.0 - e, 0.0, 0.5).unwrap()) / (2.0 * e);
        assert!((fd - eval_dt_blowup(1.0, 0.0, 0.5).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn spatial_derivative_matches_differences_across_series_switch() {
        let sol = BlowupSolution::new(1.0);
        for &r in &[1e-4f64, 5e-3, 1.1e-2, 0.3, 2.0] {
            let e = 1e-6;
            let fd = (sol.u(0.2, r + e).unwrap() - sol.u(0.2, r - e).unwrap()) / (2.0 * e);
            assert!((fd - sol.du_dr(0.2, r).unwrap()).abs() < 1e-8, "r = {r}");
        }
    }

    #[test]
    fn alpha0_axis_value() {
        assert!((alpha0(0.0) - (2.0 + SQRT_2)).abs() < 1e-14);
        assert!((alpha0(1e-6) - (2.0 + SQRT_2)).abs() < 1e-9);
    }

    #[test]
    fn potential_closed_form_matches_composition() {
        for &eta in &[0.05, 0.5, 1.0, 2.0, 3.4] {
            assert!((potential(eta) - potential_composed(eta)).abs() < 1e-10);
        }
        assert!((potential(0.0) - 16.0).abs() < 1e-12);
        assert!((potential(0.5) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn potential_matches_cartesian_potential_at_two_slices() {
        // V = H e^{-2s} V_T(η_T(s, y)) with V_T = (2cos(2 r u*) - 2)/r².
        let chart = CoordChart::new(1.0);
        let sol = BlowupSolution::new(1.0);
        for &s in &[0.0, 2.0] {
            for &eta in &[0.2, 0.7, 1.9, 3.0] {
                let (t, r) = chart.hsc_to_cartesian(s, eta);
                let vt = (2.0 * (2.0 * r * sol.u(t, r).unwrap()).cos() - 2.0) / (r * r);
                let v = h_coefficient(eta) * (-2.0 * s).exp() * vt;
                assert!((v - potential(eta)).abs() < 1e-10);
                let a = s.exp() * alpha0(eta);
                assert!((a - sol.u(t, r).unwrap()).abs() < 1e-12 * a);
            }
        }
    }

    #[test]
    fn similarity_potential_forms_agree() {
        for i in 1..=50 {
            let rho = i as f64 * 0.1;
            assert!((potential_similarity(rho) - potential_similarity_composed(rho)).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlinearity_forms_agree() {
        let direct = {
            let a = 4.0 * theta(1.0);
            -((a + 0.2).sin() - a.sin() - 2.0 * a.cos() * 0.1)
        };
        assert!((nonlinearity_scaled(0.1, 1.0) - direct).abs() < 1e-12);
        assert_eq!(eval_nonlinearity(0.0, 0.7), 0.0);
        assert_eq!(nonlinearity_scaled(0.0, 0.0), 0.0);
        // Smooth through the axis with p = η q.
        let q = 0.3;
        let near = nonlinearity_scaled(q, 1e-7);
        let at = nonlinearity_scaled(q, 0.0);
        assert!((near - at).abs() < 1e-9);
    }

    #[test]
    fn gauge_mode_examples() {
        let g = RadialGrid::new(64, 3.0).unwrap();
        let f = gauge_mode(&g);
        assert!((f.f1[0] - 2.914213562373095).abs() < 1e-12);
        assert!((f.f2[0] - 5.82842712474619).abs() < 1e-12);
        assert!(f.f1.iter().zip(&f.f2).all(|(a, b)| (b / a - 2.0).abs() < 1e-15 && *a > 0.0));
        let eta: f64 = 1.3;
        let h = HeightFunction.h(eta);
        assert!((gauge_mode_at(eta) - 1.0 / (eta * eta + h * h)).abs() < 1e-15);
    }

    #[test]
    fn residual_converges_at_second_order() {
        let sol = BlowupSolution::new(1.0);
        let e1 = residual_u(&sol, 0.3, 0.7, 1e-2).unwrap().abs();
        let e2 = residual_u(&sol, 0.3, 0.7, 5e-3).unwrap().abs();
        assert!(((e1 / e2).log2() - 2.0).abs() < 0.2);
    }

    proptest! {
        #[test]
        fn nonlinearity_has_no_constant_or_linear_part(eta in 0.0f64..3.5) {
            prop_assert_eq!(nonlinearity_scaled(0.0, eta), 0.0);
            let e = 1e-4;
            let d = (nonlinearity_scaled(e, eta) - nonlinearity_scaled(-e, eta)) / (2.0 * e);
            prop_assert!(d.abs() < 1e-3);
        }

        #[test]
        fn psi_is_r_times_u(t in -1.0f64..0.99, r in 1e-3f64..4.0) {
            let sol = BlowupSolution::new(1.0);
            prop_assert!((sol.psi(t, r) - r * sol.u(t, r).unwrap()).abs() < 1e-13 * sol.psi(t, r).abs().max(1.0));
        }
    }

    #[test]
    fn shift_difference_matches_direct_evaluation() {
        let (s1, s2) = (BlowupSolution::new(1.0), BlowupSolution::new(1.01));
        for &(t, r) in &[(0.0, 0.0), (-0.1, 1e-4), (0.2, 0.3), (-0.5, 2.0), (0.5, 1e-3)] {
            let (du, dt, dr) = blowup_shift_difference(1.0 - t, r, 0.01).unwrap();
            assert!((du - (s1.u(t, r).unwrap() - s2.u(t, r).unwrap())).abs() < 1e-12);
            assert!((dt - (s1.du_dt(t, r).unwrap() - s2.du_dt(t, r).unwrap())).abs() < 1e-12);
            assert!((dr - (s1.du_dr(t, r).unwrap() - s2.du_dr(t, r).unwrap())).abs() < 1e-10, "{t} {r}");
        }
    }

    #[test]
    fn shift_difference_is_linear_for_tiny_offsets() {
        // For δ → 0 the difference is -δ ∂_T u_T*.
        let s = BlowupSolution::new(1.0);
        for &(t, r) in &[(0.0, 0.0), (-0.1, 1e-4), (0.2, 0.3), (-0.5, 2.0)] {
            let d = 1e-20;
            let (du, dt, _) = blowup_shift_difference(1.0 - t, r, d).unwrap();
            let want = -d * s.du_dtb(t, r).unwrap();
            assert!((du / want - 1.0).abs() < 1e-10, "{t} {r}: {du} vs {want}");
            assert!(dt.abs() < 1e-18);
        }
    }
}
