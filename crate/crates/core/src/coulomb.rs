//! Coulomb functionals of discrete occupation measures: the softened kernel
//! V_eta, the potential Lambda mu, the self-energy H(mu), cross energies,
//! the convex splitting identity, and the sup-norm distance to the orbit of
//! shifted maximizer potentials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::RadialInterpolant;
use crate::solver::PekarSolution;
use crate::stats::CompensatedSum;

const PAIR_BLOCK: usize = 256;
const PARALLEL_THRESHOLD: usize = 2048;

/// Softened Coulomb kernel V_eta(x) = (|x|^2 + eta^2)^(-1/2); eta = 0 is the
/// bare kernel, with the diagonal excluded downstream.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SoftenedKernel {
    pub eta: f64,
}

impl SoftenedKernel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta < 1.0) {
            return Err(CoreError::InvalidMeasure(format!("softening {eta} not in [0,1)")));
        }
        Ok(SoftenedKernel { eta })
    }

    #[inline]
    pub fn eval_sq(&self, dist_sq: f64) -> f64 {
        1.0 / (dist_sq + self.eta * self.eta).sqrt()
    }
}

/// Weighted 3D point cloud with a softening length; the discretization of a
/// normalized occupation measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupationMeasure {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    softening: f64,
}

impl OccupationMeasure {
    pub fn new(points: Vec<[f64; 3]>, weights: Vec<f64>, softening: f64) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(CoreError::InvalidMeasure(format!(
                "{} points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        if !(0.0..1.0).contains(&softening) {
            return Err(CoreError::InvalidMeasure(format!("softening {softening} not in [0,1)")));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(CoreError::InvalidMeasure("non-finite coordinate".into()));
        }
        if let Some(i) = weights.iter().position(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(CoreError::InvalidMeasure(format!("bad weight at {i}")));
        }
        let mut total = CompensatedSum::new();
        for &w in &weights {
            total.add(w);
        }
        if (total.value() - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidMeasure(format!(
                "weights sum to {} instead of 1",
                total.value()
            )));
        }
        Ok(OccupationMeasure { points, weights, softening })
    }

    /// Equal weights 1/n.
    pub fn uniform(points: Vec<[f64; 3]>, softening: f64) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(CoreError::InvalidMeasure("empty point set".into()));
        }
        // exact unit sum: n * (1/n) accumulates ulps, so rescale the last one
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        let partial: f64 = w * (n - 1) as f64;
        weights[n - 1] = 1.0 - partial;
        OccupationMeasure::new(points, weights, softening)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn softening(&self) -> f64 {
        self.softening
    }

    pub fn kernel(&self) -> SoftenedKernel {
        SoftenedKernel { eta: self.softening }
    }

    pub fn translated(&self, v: [f64; 3]) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| [p[0] + v[0], p[1] + v[1], p[2] + v[2]])
            .collect();
        OccupationMeasure { points, weights: self.weights.clone(), softening: self.softening }
    }

    /// Componentwise weighted median; robust location of the cloud.
    pub fn spatial_median(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (axis, slot) in out.iter_mut().enumerate() {
            let mut coords: Vec<(f64, f64)> =
                self.points.iter().zip(&self.weights).map(|(p, &w)| (p[axis], w)).collect();
            coords.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            let mut med = coords[coords.len() - 1].0;
            for (c, w) in coords {
                acc += w;
                if acc >= 0.5 {
                    med = c;
                    break;
                }
            }
            *slot = med;
        }
        out
    }

    pub fn max_distance_from(&self, c: [f64; 3]) -> f64 {
        self.points
            .iter()
            .map(|p| dist_sq(*p, c).sqrt())
            .fold(0.0, f64::max)
    }
}

#[inline]
fn dist_sq(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Coulomb potential (Lambda mu)(x) = sum_i w_i V_eta(x - p_i).
pub fn lambda_at(mu: &OccupationMeasure, x: [f64; 3]) -> f64 {
    let kernel = mu.kernel();
    let mut acc = CompensatedSum::new();
    for (p, w) in mu.points().iter().zip(mu.weights()) {
        acc.add(w * kernel.eval_sq(dist_sq(x, *p)));
    }
    acc.value()
}

/// Plain fixed-order evaluation of Lambda mu; the branch-free loop
/// vectorizes, which matters on the lattice sups of the orbit search.
fn lambda_at_fast(points: &[[f64; 3]], weights: &[f64], eta2: f64, x: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for (p, w) in points.iter().zip(weights) {
        let dx = x[0] - p[0];
        let dy = x[1] - p[1];
        let dz = x[2] - p[2];
        acc += w / (dx * dx + dy * dy + dz * dz + eta2).sqrt();
    }
    acc
}

/// Coulomb self-energy H(mu) = sum_{i,j} w_i w_j V_eta(p_i - p_j); the
/// diagonal is included for eta > 0 and excluded (with duplicate detection)
/// for eta = 0. Pairs accumulate in a fixed blocked order so the value is
/// independent of the parallel partitioning.
pub fn hamiltonian(mu: &OccupationMeasure) -> Result<f64> {
    let n = mu.len();
    let kernel = mu.kernel();
    let bare = mu.softening() == 0.0;
    let blocks = n.div_ceil(PAIR_BLOCK);
    let block_pairs: Vec<(usize, usize)> =
        (0..blocks).flat_map(|bi| (bi..blocks).map(move |bj| (bi, bj))).collect();

    let eval_block = |&(bi, bj): &(usize, usize)| -> Result<f64> {
        let (p, w) = (mu.points(), mu.weights());
        let i0 = bi * PAIR_BLOCK;
        let i1 = (i0 + PAIR_BLOCK).min(n);
        let j1 = (bj * PAIR_BLOCK + PAIR_BLOCK).min(n);
        let mut acc = CompensatedSum::new();
        for i in i0..i1 {
            let j0 = if bi == bj { i + 1 } else { bj * PAIR_BLOCK };
            for j in j0..j1 {
                let d2 = dist_sq(p[i], p[j]);
                if bare && d2 == 0.0 {
                    return Err(CoreError::DuplicatePoints { i, j });
                }
                acc.add(w[i] * w[j] * kernel.eval_sq(d2));
            }
        }
        Ok(acc.value())
    };

    let partials: Vec<Result<f64>> = if n >= PARALLEL_THRESHOLD {
        block_pairs.par_iter().map(eval_block).collect()
    } else {
        block_pairs.iter().map(eval_block).collect()
    };

    let mut total = CompensatedSum::new();
    for partial in partials {
        total.add(partial?);
    }
    let mut h = 2.0 * total.value();
    if !bare {
        let mut diag = CompensatedSum::new();
        for &w in mu.weights() {
            diag.add(w * w * kernel.eval_sq(0.0));
        }
        h += diag.value();
    }
    Ok(h)
}

/// Cross energy <mu, Lambda nu> = sum_{i,j} w_i v_j V_eta(p_i - q_j),
/// evaluated with mu's softening.
pub fn cross_energy(mu: &OccupationMeasure, nu: &OccupationMeasure) -> f64 {
    let kernel = mu.kernel();
    let mut total = CompensatedSum::new();
    for (p, wp) in mu.points().iter().zip(mu.weights()) {
        let mut row = CompensatedSum::new();
        for (q, wq) in nu.points().iter().zip(nu.weights()) {
            row.add(wq * kernel.eval_sq(dist_sq(*p, *q)));
        }
        total.add(wp * row.value());
    }
    total.value()
}

/// Cross energy of mu against a radial density centered at `center`, i.e.
/// <mu, Lambda psi^2(. - center)> = sum_i w_i * Lambda(|p_i - center|),
/// using the precomputed radial potential profile with its 1/r far field.
pub fn cross_energy_with_density(
    mu: &OccupationMeasure,
    sol: &PekarSolution,
    potential: &RadialInterpolant,
    center: [f64; 3],
) -> f64 {
    let mut acc = CompensatedSum::new();
    for (p, w) in mu.points().iter().zip(mu.weights()) {
        let r = dist_sq(*p, center).sqrt();
        acc.add(w * sol.potential_at(potential, r));
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplittingResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub absolute: f64,
    pub relative: f64,
}

/// Verifies the convex splitting of the Hamiltonian
/// t H(L_t) = (t0^2/t) H(L_{t0}) + 2 (t0 (t-t0)/t) <L_{t0}, Lambda_{t0,t}>
///          + ((t-t0)^2/t) H(L_{t0,t})
/// for a path-derived measure whose first m0 points cover [0, t0].
pub fn splitting_check(mu: &OccupationMeasure, t0: f64, t: f64) -> Result<SplittingResidual> {
    if !(t0 > 0.0 && t0 < t) {
        return Err(CoreError::InvalidConfig(format!("need 0 < t0 < t, got t0={t0}, t={t}")));
    }
    if mu.softening() == 0.0 {
        return Err(CoreError::InvalidConfig("splitting check requires softening > 0".into()));
    }
    let m = mu.len();
    let split = t0 / t * m as f64;
    let m0 = split.round() as usize;
    if (split - m0 as f64).abs() > 1e-9 || m0 == 0 || m0 >= m {
        return Err(CoreError::InvalidConfig(format!(
            "t0 = {t0} does not align with the {m}-point discretization of t = {t}"
        )));
    }
    let eta = mu.softening();
    let head = OccupationMeasure::uniform(mu.points()[..m0].to_vec(), eta)?;
    let tail = OccupationMeasure::uniform(mu.points()[m0..].to_vec(), eta)?;
    let lhs = t * hamiltonian(mu)?;
    let t1 = t - t0;
    let rhs = t0 * t0 / t * hamiltonian(&head)?
        + 2.0 * t0 * t1 / t * cross_energy(&head, &tail)
        + t1 * t1 / t * hamiltonian(&tail)?;
    let absolute = (lhs - rhs).abs();
    Ok(SplittingResidual { lhs, rhs, absolute, relative: absolute / lhs.abs().max(1e-300) })
}

/// Axis-aligned evaluation lattice standing in for the sup over R^3.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalGrid {
    pub center: [f64; 3],
    pub half_extent: [f64; 3],
    pub spacing: f64,
}

impl EvalGrid {
    pub const MAX_POINTS: usize = 1_500_000;

    pub fn new(center: [f64; 3], half_extent: [f64; 3], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(CoreError::InvalidConfig(format!("spacing {spacing} must be positive")));
        }
        let g = EvalGrid { center, half_extent, spacing };
        let n = g.counts().iter().product::<usize>();
        if n > Self::MAX_POINTS {
            return Err(CoreError::InvalidConfig(format!(
                "evaluation grid would hold {n} points (budget {})",
                Self::MAX_POINTS
            )));
        }
        Ok(g)
    }

    fn counts(&self) -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in 0..3 {
            c[a] = (2.0 * self.half_extent[a] / self.spacing).floor() as usize + 1;
        }
        c
    }

    pub fn len(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        let c = self.counts();
        let mut pts = Vec::with_capacity(self.len());
        for ix in 0..c[0] {
            for iy in 0..c[1] {
                for iz in 0..c[2] {
                    pts.push([
                        self.center[0] - self.half_extent[0] + ix as f64 * self.spacing,
                        self.center[1] - self.half_extent[1] + iy as f64 * self.spacing,
                        self.center[2] - self.half_extent[2] + iz as f64 * self.spacing,
                    ]);
                }
            }
        }
        pts
    }
}

/// min over candidate shifts w of max over the lattice of
/// |Lambda mu (x) - Lambda psi_w^2 (x)|; ties go to the lexicographically
/// smallest shift.
pub fn orbit_sup_distance(
    mu: &OccupationMeasure,
    sol: &PekarSolution,
    grid: &EvalGrid,
    shift_candidates: &[[f64; 3]],
) -> Result<(f64, [f64; 3])> {
    if shift_candidates.is_empty() {
        return Err(CoreError::EmptyCandidates);
    }
    let pts = grid.points();
    let eta2 = mu.softening() * mu.softening();
    let lam_mu: Vec<f64> = if pts.len() * mu.len() > 4_000_000 {
        pts.par_iter()
            .map(|x| lambda_at_fast(mu.points(), mu.weights(), eta2, *x))
            .collect()
    } else {
        pts.iter()
            .map(|x| lambda_at_fast(mu.points(), mu.weights(), eta2, *x))
            .collect()
    };
    let potential = sol.potential_interp();
    let sup_for = |w: &[f64; 3]| -> f64 {
        let mut worst = 0.0f64;
        for (x, lm) in pts.iter().zip(&lam_mu) {
            let r = dist_sq(*x, *w).sqrt();
            let reference = sol.potential_at(&potential, r);
            worst = worst.max((lm - reference).abs());
        }
        worst
    };
    let sups: Vec<f64> = if shift_candidates.len() * pts.len() > 2_000_000 {
        shift_candidates.par_iter().map(sup_for).collect()
    } else {
        shift_candidates.iter().map(sup_for).collect()
    };
    let mut best = f64::INFINITY;
    let mut best_w = shift_candidates[0];
    for (w, &d) in shift_candidates.iter().zip(&sups) {
        let eps = if best.is_finite() { 1e-12 * best.max(1e-30) } else { 0.0 };
        if d < best - eps {
            best = d;
            best_w = *w;
        } else if (d - best).abs() <= eps && lex_less(w, &best_w) {
            best = best.min(d);
            best_w = *w;
        }
    }
    Ok((best, best_w))
}

fn lex_less(a: &[f64; 3], b: &[f64; 3]) -> bool {
    for k in 0..3 {
        if a[k] < b[k] {
            return true;
        }
        if a[k] > b[k] {
            return false;
        }
    }
    false
}

fn cubic_lattice(center: [f64; 3], half_count: usize, spacing: f64) -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    let r = half_count as i64;
    for ix in -r..=r {
        for iy in -r..=r {
            for iz in -r..=r {
                pts.push([
                    center[0] + ix as f64 * spacing,
                    center[1] + iy as f64 * spacing,
                    center[2] + iz as f64 * spacing,
                ]);
            }
        }
    }
    pts
}

/// Location of best coincidence with a shifted maximizer: candidates seeded
/// at the spatial median, then two levels of lattice refinement around the
/// running argmin. Final shift resolution is `BEST_SHIFT_RESOLUTION`; the
/// evaluation lattice covers the support plus a margin where the far field
/// bounds the tail discrepancy.
pub const BEST_SHIFT_RESOLUTION: f64 = 0.05;

pub fn best_shift(mu: &OccupationMeasure, sol: &PekarSolution) -> Result<(f64, [f64; 3])> {
    let median = mu.spatial_median();
    let support = mu.max_distance_from(median);
    let half = (support + 2.5).min(9.0);
    let grid = EvalGrid::new(median, [half; 3], (half / 8.0).max(0.6))?;

    let coarse = cubic_lattice(median, 2, 0.8);
    let (_, w0) = orbit_sup_distance(mu, sol, &grid, &coarse)?;
    let mid = cubic_lattice(w0, 2, 0.2);
    let (_, w1) = orbit_sup_distance(mu, sol, &grid, &mid)?;
    let fine = cubic_lattice(w1, 2, BEST_SHIFT_RESOLUTION);
    orbit_sup_distance(mu, sol, &grid, &fine)
}
