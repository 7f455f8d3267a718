//! Uniform radial grids, quadrature, finite differences and monotone
//! cubic interpolation for rotationally symmetric functions on R^3.
//!
//! The origin is never a grid node: all radial problems are solved in the
//! u(r) = r*psi(r) variable with u(0) = 0, so the first node sits at dr.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Uniform radial grid with nodes dr, 2*dr, ..., r_max.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialGrid {
    r_max: f64,
    n: usize,
    dr: f64,
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize) -> Result<Arc<Self>> {
        if !r_max.is_finite() || r_max <= 0.0 {
            return Err(CoreError::InvalidGrid(format!("r_max = {r_max} must be positive")));
        }
        if n < 16 {
            return Err(CoreError::InvalidGrid(format!("n = {n} too small, need n >= 16")));
        }
        Ok(Arc::new(RadialGrid { r_max, n, dr: r_max / n as f64 }))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    #[inline]
    pub fn dr(&self) -> f64 {
        self.dr
    }

    /// Radius of node `i` (zero-based): (i+1)*dr.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dr
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

/// Values of a rotationally symmetric function at the grid nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(CoreError::InvalidFunction(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::InvalidFunction(format!(
                "non-finite value {} at node {i}",
                values[i]
            )));
        }
        Ok(RadialFunction { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n()).map(|i| f(grid.node(i))).collect();
        RadialFunction::new(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// 3D mass 4*pi * int r^2 f(r) dr; equals 1 for a probability density.
    pub fn mass(&self) -> f64 {
        FOUR_PI * integrate_radial(self, 2)
    }

    /// Validates the density invariants: nonnegative values, unit 3D mass.
    pub fn check_density(&self, tol: f64) -> Result<()> {
        if let Some(i) = self.values.iter().position(|&v| v < 0.0) {
            return Err(CoreError::NegativeDensity { index: i, value: self.values[i] });
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > tol {
            return Err(CoreError::InvalidFunction(format!(
                "density mass {mass} deviates from 1 beyond {tol}"
            )));
        }
        Ok(())
    }

    /// Value at r = 0 by quadratic extrapolation through the first three nodes.
    pub fn extrapolate_origin(&self) -> f64 {
        3.0 * self.values[0] - 3.0 * self.values[1] + self.values[2]
    }
}

/// Composite quadrature of int_0^{r_max} r^power f(r) dr, power in {0,1,2}.
///
/// A virtual node at r = 0 closes the first cell: the integrand vanishes
/// there for power >= 1 and is extrapolated quadratically for power = 0.
/// Simpson weights give order-4 accuracy on smooth integrands.
pub fn integrate_radial(f: &RadialFunction, power: i32) -> f64 {
    assert!((0..=2).contains(&power), "power must be 0, 1 or 2");
    let grid = f.grid();
    let n = grid.n();
    let dr = grid.dr();
    let mut g = Vec::with_capacity(n + 1);
    g.push(if power == 0 { f.extrapolate_origin() } else { 0.0 });
    for i in 0..n {
        g.push(grid.node(i).powi(power) * f.value(i));
    }
    simpson_uniform(&g, dr)
}

/// Composite Simpson on uniformly spaced samples (3/8 rule closes an odd tail).
fn simpson_uniform(g: &[f64], h: f64) -> f64 {
    let intervals = g.len() - 1;
    assert!(intervals >= 3, "need at least 4 samples");
    let simpson_pairs = |s: &[f64]| -> f64 {
        // s has an even number of intervals
        let mut acc = s[0] + s[s.len() - 1];
        for (k, v) in s.iter().enumerate().take(s.len() - 1).skip(1) {
            acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        acc * h / 3.0
    };
    if intervals % 2 == 0 {
        simpson_pairs(g)
    } else {
        // Simpson over the first even block, 3/8 rule on the last 3 intervals
        let cut = g.len() - 4;
        let head = if cut >= 2 { simpson_pairs(&g[..=cut]) } else { 0.0 };
        let t = &g[cut..];
        head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3])
    }
}

/// Second-order finite-difference derivative, one-sided at the boundaries.
pub fn radial_derivative(f: &RadialFunction) -> RadialFunction {
    let grid = f.grid().clone();
    let n = grid.n();
    assert!(n >= 3);
    let dr = grid.dr();
    let v = f.values();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dr);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dr);
    }
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dr);
    RadialFunction { grid, values: d }
}

/// Monotone piecewise-cubic interpolant (Fritsch-Carlson slopes) with a
/// linear fallback on [0, dr). Exact at the nodes, C^1 inside the grid.
#[derive(Debug, Clone)]
pub struct RadialInterpolant {
    dr: f64,
    r_max: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl RadialInterpolant {
    pub fn new(f: &RadialFunction) -> Self {
        let grid = f.grid();
        let n = grid.n();
        let dr = grid.dr();
        let v = f.values();
        let delta: Vec<f64> = (0..n - 1).map(|i| (v[i + 1] - v[i]) / dr).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let (a, b) = (delta[i - 1], delta[i]);
            d[i] = if a * b <= 0.0 { 0.0 } else { 2.0 * a * b / (a + b) };
        }
        d[0] = endpoint_slope(delta[0], delta[1]);
        d[n - 1] = endpoint_slope(delta[n - 2], delta[n - 3]);
        RadialInterpolant { dr, r_max: grid.r_max(), values: v.to_vec(), slopes: d }
    }

    #[inline]
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Interpolated value; errors when r exceeds the grid end.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r > self.r_max {
            return Err(CoreError::Extrapolation { r, r_max: self.r_max });
        }
        Ok(self.eval_clamped(r))
    }

    /// Interpolated value with r clamped into [0, r_max]; never errors.
    #[inline]
    pub fn eval_clamped(&self, r: f64) -> f64 {
        let r = r.min(self.r_max).max(0.0);
        if r <= self.dr {
            // linear fallback between the (extrapolated) origin cell and node 0
            return self.values[0] + (r - self.dr) * self.slopes[0];
        }
        let s = r / self.dr - 1.0;
        let near = s.round();
        if (s - near).abs() < 1e-9 && near >= 0.0 && (near as usize) < self.values.len() {
            return self.values[near as usize]; // idempotent on node values
        }
        let i = (s as usize).min(self.values.len() - 2);
        let t = s - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * self.dr, self.slopes[i + 1] * self.dr);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * (t3 - t2)
    }
}

fn endpoint_slope(d_near: f64, d_far: f64) -> f64 {
    // shape-preserving three-point endpoint formula
    let d = (3.0 * d_near - d_far) / 2.0;
    if d * d_near <= 0.0 {
        0.0
    } else if d_near * d_far < 0.0 && d.abs() > 3.0 * d_near.abs() {
        3.0 * d_near
    } else {
        d
    }
}

/// Convenience wrapper matching the one-shot interpolation contract.
pub fn interpolate(f: &RadialFunction, r: f64) -> Result<f64> {
    RadialInterpolant::new(f).eval(r)
}

/// Quadratic Lagrange evaluation through the first three nodes, for radii
/// inside the first cell where smooth even profiles have zero slope and the
/// linear fallback is first-order only.
pub fn quadratic_near_origin(f: &RadialFunction, r: f64) -> f64 {
    let dr = f.grid().dr();
    let (x0, x1, x2) = (dr, 2.0 * dr, 3.0 * dr);
    let (y0, y1, y2) = (f.value(0), f.value(1), f.value(2));
    y0 * (r - x1) * (r - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (r - x0) * (r - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (r - x0) * (r - x1) / ((x2 - x0) * (x2 - x1))
}
