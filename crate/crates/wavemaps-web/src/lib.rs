//! Browser bindings for a few cheap wavemaps computations.
//!
//! Build with `wasm-pack build --target web --out-dir www/pkg` and serve
//! `www/` with any static file server.

use num_complex::Complex64;
use wasm_bindgen::prelude::*;
use wavemaps::coords::outer_radius;
use wavemaps::exact::BlowupSolution;
use wavemaps::grid::RadialGrid;
use wavemaps::hscflow::{gauge_residual, DiscreteProjector, HscOperator, OperatorOptions};
use wavemaps::linspec::shoot;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Samples of `u_T*(t, r)` on `n` equispaced points of `[0, r_max]`.
#[wasm_bindgen]
pub fn blowup_profile(t_blowup: f64, t: f64, r_max: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    if n < 2 || !(r_max > 0.0) {
        return Err(js_err("need n >= 2 and r_max > 0"));
    }
    let sol = BlowupSolution::new(t_blowup);
    (0..n).map(|i| sol.u(t, r_max * i as f64 / (n - 1) as f64).map_err(js_err)).collect()
}

/// `log10` of the normalised connection mismatch on an `n_re × n_im` grid
/// over the box, row-major with `im` varying slowest. Zeros of the
/// mismatch are eigenvalues of the linearised similarity operator.
#[wasm_bindgen]
pub fn mismatch_map(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64, n_re: usize, n_im: usize) -> Vec<f64> {
    let step = |lo: f64, hi: f64, n: usize, i: usize| if n > 1 { lo + (hi - lo) * i as f64 / (n - 1) as f64 } else { lo };
    let mut out = Vec::with_capacity(n_re * n_im);
    for j in 0..n_im {
        for i in 0..n_re {
            let lambda = Complex64::new(step(re_lo, re_hi, n_re, i), step(im_lo, im_hi, n_im, j));
            out.push(shoot(lambda).map(|s| s.normalized_mismatch().max(1e-300).log10()).unwrap_or(f64::NAN));
        }
    }
    out
}

/// `[R(b), discrete unstable eigenvalue, gauge-mode residual]` for the
/// discretised flow operator on `n` points.
#[wasm_bindgen]
pub fn discrete_gauge(b: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    if !(64..=1024).contains(&n) {
        return Err(js_err("n must lie in [64, 1024]"));
    }
    let r = outer_radius(b).map_err(js_err)?;
    let grid = RadialGrid::new(n, r).map_err(js_err)?;
    let op = HscOperator::new(&grid, OperatorOptions::default()).map_err(js_err)?;
    let proj = DiscreteProjector::new(&op).map_err(js_err)?;
    Ok(vec![r, proj.eigenvalue, gauge_residual(&op).map_err(js_err)?])
}
