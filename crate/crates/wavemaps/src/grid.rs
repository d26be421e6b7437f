//! Uniform radial grids, parity-tagged grid functions and banded
//! finite-difference operators with parity ghost points at the origin.

use serde::Serialize;

use crate::error::{Result, WmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    /// Parity of the `k`-th derivative of a function with this parity.
    pub fn after_derivatives(self, k: usize) -> Parity {
        if k % 2 == 0 {
            self
        } else {
            self.flip()
        }
    }
}

/// Uniform grid `r_i = i * dr`, `i = 0..n`, on `[0, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    n: usize,
    r_max: f64,
    dr: f64,
}

impl RadialGrid {
    pub fn new(n_points: usize, r_max: f64) -> Result<Self> {
        if n_points < 8 {
            return Err(WmError::Domain(format!("grid needs at least 8 nodes, got {n_points}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(WmError::Domain(format!("grid radius must be positive, got {r_max}")));
        }
        Ok(Self { n: n_points, r_max, dr: r_max / (n_points - 1) as f64 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.r_max
        } else {
            i as f64 * self.dr
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.node(i))).collect()
    }

    /// Index of the cell `[r_i, r_{i+1}]` containing `r` (clamped).
    pub fn cell_of(&self, r: f64) -> usize {
        let i = (r / self.dr).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.n - 2)
        }
    }
}

/// A sampled radial function with its parity under `r -> -r`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub parity: Parity,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn sample(grid: &RadialGrid, parity: Parity, f: impl Fn(f64) -> f64) -> Self {
        Self { parity, values: grid.sample(f) }
    }

    pub fn zeros(grid: &RadialGrid, parity: Parity) -> Self {
        Self { parity, values: vec![0.0; grid.len()] }
    }

    /// `k`-th derivative at the given formal accuracy (2 or 4).
    pub fn derivative(&self, grid: &RadialGrid, k: usize, accuracy: usize) -> Result<GridFunction> {
        check_len(grid, &self.values)?;
        let op = DiffOp::new(grid.len(), grid.dr(), k, accuracy, LeftEdge::Parity)?;
        Ok(GridFunction { parity: self.parity.after_derivatives(k), values: op.apply(&self.values, self.parity) })
    }

    /// Value at an off-grid radius by cubic Lagrange interpolation.
    pub fn interpolate(&self, grid: &RadialGrid, r: f64) -> f64 {
        let v = interpolate_cubic(&self.values, grid.dr(), Some(self.parity), r.abs());
        if r < 0.0 {
            self.parity.sign() * v
        } else {
            v
        }
    }
}

/// The pair `(f1, f2)` evolved by the first-order-in-time systems.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub parity: Parity,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl StateVector {
    pub fn zeros(grid: &RadialGrid, parity: Parity) -> Self {
        Self { parity, f1: vec![0.0; grid.len()], f2: vec![0.0; grid.len()] }
    }

    pub fn sample(grid: &RadialGrid, parity: Parity, f1: impl Fn(f64) -> f64, f2: impl Fn(f64) -> f64) -> Self {
        Self { parity, f1: grid.sample(f1), f2: grid.sample(f2) }
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            parity: self.parity,
            f1: self.f1.iter().map(|x| a * x).collect(),
            f2: self.f2.iter().map(|x| a * x).collect(),
        }
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &StateVector) -> Self {
        Self {
            parity: self.parity,
            f1: self.f1.iter().zip(&other.f1).map(|(x, y)| x + a * y).collect(),
            f2: self.f2.iter().zip(&other.f2).map(|(x, y)| x + a * y).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.f1.iter().chain(&self.f2).fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.f1.iter().chain(&self.f2).all(|x| x.is_finite())
    }
}

pub(crate) fn check_len(grid: &RadialGrid, v: &[f64]) -> Result<()> {
    if v.len() != grid.len() {
        return Err(WmError::GridMismatch { expected: grid.len(), got: v.len() });
    }
    Ok(())
}

/// How stencils are closed at index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftEdge {
    /// Ghost values `f(-r) = ±f(r)` supplied from the parity tag.
    Parity,
    /// Shifted one-sided stencils, as at the right edge.
    OneSided,
}

/// Finite-difference weights for the `m`-th derivative at `x0` from the
/// nodes `xs` (Fornberg's recursion).
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Banded derivative operator on a uniform grid. Row `i` stores the
/// column offsets (possibly negative, i.e. ghost nodes) and weights.
#[derive(Debug, Clone)]
pub struct DiffOp {
    cols: Vec<Vec<i64>>,
    weights: Vec<Vec<f64>>,
}

impl DiffOp {
    pub fn new(n: usize, h: f64, order: usize, accuracy: usize, left: LeftEdge) -> Result<Self> {
        if order == 0 || order > 4 {
            return Err(WmError::Order(order));
        }
        if accuracy == 0 || accuracy % 2 == 1 {
            return Err(WmError::Domain(format!("accuracy must be even, got {accuracy}")));
        }
        let half = (order + 1) / 2 - 1 + accuracy / 2;
        let one_sided = order + accuracy;
        if n < one_sided + 1 {
            return Err(WmError::Domain(format!("grid with {n} nodes too small for stencil of {one_sided} points")));
        }
        let scale = h.powi(order as i32);
        let mut cols = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n as i64 {
            let (lo, hi) = if i + half as i64 > n as i64 - 1 {
                let hi = n as i64 - 1;
                (hi - one_sided as i64 + 1, hi)
            } else if i - (half as i64) < 0 && left == LeftEdge::OneSided {
                (0, one_sided as i64 - 1)
            } else {
                (i - half as i64, i + half as i64)
            };
            let xs: Vec<f64> = (lo..=hi).map(|j| (j - i) as f64).collect();
            let w: Vec<f64> = fornberg_weights(0.0, &xs, order).into_iter().map(|w| w / scale).collect();
            cols.push((lo..=hi).collect());
            weights.push(w);
        }
        Ok(Self { cols, weights })
    }

    pub fn apply(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, parity, &mut out);
        out
    }

    pub fn apply_into(&self, f: &[f64], parity: Parity, out: &mut [f64]) {
        let s = parity.sign();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (&j, &w) in self.cols[i].iter().zip(&self.weights[i]) {
                acc += w * if j >= 0 { f[j as usize] } else { s * f[(-j) as usize] };
            }
            *o = acc;
        }
    }
}

/// Cubic Lagrange interpolation of uniformly sampled data (`x_i = i*h`).
/// With a parity tag, nodes left of the origin come from reflection;
/// otherwise the stencil is shifted inward.
pub fn interpolate_cubic(values: &[f64], h: f64, parity: Option<Parity>, x: f64) -> f64 {
    let n = values.len() as i64;
    let t = x / h;
    let mut i0 = t.floor() as i64 - 1;
    if parity.is_none() && i0 < 0 {
        i0 = 0;
    }
    if i0 + 3 > n - 1 {
        i0 = n - 4;
    }
    let fetch = |j: i64| -> f64 {
        if j >= 0 {
            values[j as usize]
        } else {
            parity.map(|p| p.sign()).unwrap_or(1.0) * values[(-j) as usize]
        }
    };
    let mut acc = 0.0;
    for a in 0..4 {
        let xa = (i0 + a) as f64;
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                let xb = (i0 + b) as f64;
                l *= (t - xb) / (xa - xb);
            }
        }
        acc += l * fetch(i0 + a);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_reproduces_centered_second_difference() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] + 2.0).abs() < 1e-14 && (w[2] - 1.0).abs() < 1e-14);
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_converge_at_design_order() {
        let mut errs = Vec::new();
        for &n in &[101usize, 201] {
            let g = RadialGrid::new(n, 2.0).unwrap();
            let f = GridFunction::sample(&g, Parity::Even, |r| (-r * r).exp());
            let d2 = f.derivative(&g, 2, 2).unwrap();
            let err = g
                .nodes()
                .iter()
                .zip(&d2.values)
                .map(|(&r, v)| (v - (4.0 * r * r - 2.0) * (-r * r).exp()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.25, "order {order}");
    }

    #[test]
    fn odd_derivative_flips_parity_and_uses_ghosts() {
        let g = RadialGrid::new(64, 1.0).unwrap();
        let f = GridFunction::sample(&g, Parity::Odd, |r| r.sin());
        let d = f.derivative(&g, 1, 4).unwrap();
        assert_eq!(d.parity, Parity::Even);
        assert!((d.values[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let h = 0.1;
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * h).powi(3) - 2.0 * (i as f64 * h)).collect();
        for &x in &[0.05, 0.77, 1.83, 1.9] {
            let y = interpolate_cubic(&v, h, None, x);
            assert!((y - (x * x * x - 2.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_rejects_tiny_inputs() {
        assert!(RadialGrid::new(3, 1.0).is_err());
        assert!(RadialGrid::new(64, -1.0).is_err());
    }
}
