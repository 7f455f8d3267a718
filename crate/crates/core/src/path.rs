//! Discretized Brownian paths: Wiener sampling, midpoint occupation
//! measures, Brownian-bridge and endpoint-block proposals, and the exact
//! log-densities needed for numerical detailed-balance checks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coulomb::OccupationMeasure;
use crate::error::{CoreError, Result};

/// Default softening of path-derived measures: eta = 0.1 sqrt(h).
pub const ETA_FACTOR: f64 = 0.1;

/// Time step h plus ordered positions W_0 .. W_{mh}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub h: f64,
    pub positions: Vec<[f64; 3]>,
    pub origin_start: bool,
}

impl DiscretePath {
    /// Number of segments m; positions.len() = m + 1.
    pub fn segments(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn total_time(&self) -> f64 {
        self.h * self.segments() as f64
    }

    pub fn endpoint(&self) -> [f64; 3] {
        *self.positions.last().unwrap()
    }

    pub fn translated(&self, v: [f64; 3]) -> Self {
        DiscretePath {
            h: self.h,
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] + v[0], p[1] + v[1], p[2] + v[2]])
                .collect(),
            origin_start: false,
        }
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Brownian path from the origin: increments iid N(0, h I_3).
pub fn sample_wiener(t: f64, h: f64, rng: &mut impl Rng) -> Result<DiscretePath> {
    if !(h > 0.0) {
        return Err(CoreError::InvalidPath(format!("step h = {h} must be positive")));
    }
    let steps = t / h;
    let m = steps.round() as usize;
    if m == 0 || (steps - m as f64).abs() > 1e-9 {
        return Err(CoreError::InvalidPath(format!("t/h = {steps} is not a whole number")));
    }
    let sqrt_h = h.sqrt();
    let mut positions = Vec::with_capacity(m + 1);
    let mut x = [0.0f64; 3];
    positions.push(x);
    for _ in 0..m {
        for c in x.iter_mut() {
            *c += sqrt_h * gauss(rng);
        }
        positions.push(x);
    }
    Ok(DiscretePath { h, positions, origin_start: true })
}

/// Midpoint-rule occupation measure: segment midpoints with equal weights
/// 1/m and softening eta = ETA_FACTOR * sqrt(h).
pub fn occupation_of(path: &DiscretePath) -> OccupationMeasure {
    occupation_with_eta(path, ETA_FACTOR * path.h.sqrt())
}

pub fn occupation_with_eta(path: &DiscretePath, eta: f64) -> OccupationMeasure {
    let m = path.segments();
    let mids: Vec<[f64; 3]> = (0..m)
        .map(|i| {
            let a = path.positions[i];
            let b = path.positions[i + 1];
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
        })
        .collect();
    OccupationMeasure::uniform(mids, eta).expect("midpoints form a valid measure")
}

/// Redraws positions i+1 .. j-1 as a Brownian bridge between the fixed
/// endpoints. Adjacent indices give the identity proposal. Sequential
/// conditionals: W_k | W_{k-1}, W_j ~ N(W_{k-1} + (W_j - W_{k-1})/(j-k+1),
/// h (j-k)/(j-k+1) I_3).
pub fn propose_bridge(
    path: &DiscretePath,
    i: usize,
    j: usize,
    rng: &mut impl Rng,
) -> Result<DiscretePath> {
    let m = path.segments();
    if i >= j || j > m {
        return Err(CoreError::InvalidPath(format!("bad bridge indices ({i}, {j}) for m = {m}")));
    }
    let mut out = path.clone();
    let h = path.h;
    for k in i + 1..j {
        let gap = (j - k) as f64; // remaining steps after this one
        let frac = 1.0 / (gap + 1.0);
        let var = h * gap * frac;
        let sd = var.sqrt();
        let prev = out.positions[k - 1];
        let target = out.positions[j];
        for (axis, slot) in out.positions[k].iter_mut().enumerate() {
            let mean = prev[axis] + (target[axis] - prev[axis]) * frac;
            *slot = mean + sd * gauss(rng);
        }
    }
    Ok(out)
}

/// Redraws positions i+1 .. m as a free Brownian continuation from W_i.
pub fn propose_endpoint_block(
    path: &DiscretePath,
    i: usize,
    rng: &mut impl Rng,
) -> Result<DiscretePath> {
    let m = path.segments();
    if i >= m {
        return Err(CoreError::InvalidPath(format!("bad endpoint index {i} for m = {m}")));
    }
    let mut out = path.clone();
    let sqrt_h = path.h.sqrt();
    for k in i + 1..=m {
        let prev = out.positions[k - 1];
        for (axis, slot) in out.positions[k].iter_mut().enumerate() {
            *slot = prev[axis] + sqrt_h * gauss(rng);
        }
    }
    Ok(out)
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

/// Log-density of the path increments under Wiener measure (start point not
/// weighted).
pub fn wiener_log_density(path: &DiscretePath) -> f64 {
    let mut acc = 0.0;
    for w in path.positions.windows(2) {
        for axis in 0..3 {
            acc += log_normal_pdf(w[1][axis], w[0][axis], path.h);
        }
    }
    acc
}

/// Log-density of the bridge proposal that produced `to` from `from` by
/// redrawing indices i+1..j-1 (product of the sequential conditionals).
pub fn bridge_log_density(from: &DiscretePath, to: &DiscretePath, i: usize, j: usize) -> f64 {
    let h = from.h;
    let mut acc = 0.0;
    for k in i + 1..j {
        let gap = (j - k) as f64;
        let frac = 1.0 / (gap + 1.0);
        let var = h * gap * frac;
        let prev = to.positions[k - 1];
        let target = to.positions[j];
        for axis in 0..3 {
            let mean = prev[axis] + (target[axis] - prev[axis]) * frac;
            acc += log_normal_pdf(to.positions[k][axis], mean, var);
        }
    }
    acc
}

/// Log-density of the endpoint-block proposal redrawing indices i+1..m.
pub fn endpoint_log_density(to: &DiscretePath, i: usize) -> f64 {
    let h = to.h;
    let mut acc = 0.0;
    for k in i + 1..=to.segments() {
        for axis in 0..3 {
            acc += log_normal_pdf(to.positions[k][axis], to.positions[k - 1][axis], h);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn wiener_construction() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let p = sample_wiener(1.0, 0.25, &mut rng).unwrap();
        assert_eq!(p.positions.len(), 5);
        assert_eq!(p.positions[0], [0.0; 3]);
        assert!((p.total_time() - 1.0).abs() < 1e-12);
        assert!(sample_wiener(1.0, 0.3, &mut rng).is_err());
        assert!(sample_wiener(1.0, -0.1, &mut rng).is_err());
    }

    #[test]
    fn wiener_endpoint_variance_and_covariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let t = 2.0;
        let h = 0.125;
        let reps = 10_000;
        let mut sum_sq = [0.0f64; 3];
        let mut cov = 0.0; // E[W_s . W_t]/3 with s = t/2
        let mid = ((t / 2.0) / h) as usize;
        for _ in 0..reps {
            let p = sample_wiener(t, h, &mut rng).unwrap();
            let e = p.endpoint();
            let ws = p.positions[mid];
            for a in 0..3 {
                sum_sq[a] += e[a] * e[a];
                cov += ws[a] * e[a];
            }
        }
        // per-axis var(W_t) = t, with chi^2 relative error sqrt(2/reps)
        let tol = 3.0 * (2.0 / reps as f64).sqrt() * t;
        for a in 0..3 {
            let v = sum_sq[a] / reps as f64;
            assert!((v - t).abs() < tol, "axis {a}: var {v}");
        }
        // cov(W_s, W_t) = min(s, t) = 1 per axis
        let c = cov / (3.0 * reps as f64);
        assert!((c - 1.0).abs() < 0.05, "cov = {c}");
    }

    #[test]
    fn occupation_measure_of_simple_paths() {
        let p = DiscretePath {
            h: 1.0,
            positions: vec![[0.0; 3], [2.0, 0.0, 0.0], [4.0, 0.0, 0.0]],
            origin_start: true,
        };
        let mu = occupation_of(&p);
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.points()[0], [1.0, 0.0, 0.0]);
        assert_eq!(mu.points()[1], [3.0, 0.0, 0.0]);
        assert!((mu.weights()[0] - 0.5).abs() < 1e-15);
        assert!((mu.softening() - 0.1).abs() < 1e-15);

        // equivariance under translation
        let shifted = occupation_of(&p.translated([1.0, -1.0, 2.0]));
        assert_eq!(shifted.points()[0], [2.0, -1.0, 2.0]);
    }

    #[test]
    fn path_measure_hamiltonian_matches_riemann_oracle() {
        // discrete double "time integral" over segment midpoints, coded
        // independently of the blocked pairwise summation
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let t = 2.0;
        let h = t / 64.0;
        let path = sample_wiener(t, h, &mut rng).unwrap();
        let mu = occupation_of(&path);
        let h_fast = crate::coulomb::hamiltonian(&mu).unwrap();
        let eta = mu.softening();
        let m = path.segments();
        let mid = |i: usize| -> [f64; 3] {
            let a = path.positions[i];
            let b = path.positions[i + 1];
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
        };
        let mut oracle = 0.0;
        for i in 0..m {
            for j in 0..m {
                let (p, q) = (mid(i), mid(j));
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                oracle += h * h / (d2 + eta * eta).sqrt();
            }
        }
        oracle /= t * t;
        assert!((h_fast - oracle).abs() <= 1e-12 * oracle, "{h_fast} vs {oracle}");
    }

    #[test]
    fn bridge_identity_and_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = sample_wiener(4.0, 0.5, &mut rng).unwrap();
        let q = propose_bridge(&p, 3, 4, &mut rng).unwrap();
        assert_eq!(p, q, "adjacent indices must be the identity");
        assert!(propose_bridge(&p, 4, 3, &mut rng).is_err());

        // zero noise reduces the recursion to its conditional means; verify
        // those means trace the straight line between the endpoints
        let (i, j) = (1usize, 5usize);
        let mut means = p.clone();
        for k in i + 1..j {
            let gap = (j - k) as f64;
            let frac = 1.0 / (gap + 1.0);
            let prev = means.positions[k - 1];
            for axis in 0..3 {
                means.positions[k][axis] =
                    prev[axis] + (means.positions[j][axis] - prev[axis]) * frac;
            }
        }
        // the recursion with zero noise reproduces the straight line
        for k in i..=j {
            let s = (k - i) as f64 / (j - i) as f64;
            for axis in 0..3 {
                let lin = p.positions[i][axis] + s * (p.positions[j][axis] - p.positions[i][axis]);
                assert!((means.positions[k][axis] - lin).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bridge_midpoint_law() {
        // redrawn midpoint ~ N((p_i + p_j)/2, h (j-i)/4) per axis
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let p = sample_wiener(4.0, 0.5, &mut rng).unwrap();
        let (i, j) = (2usize, 6usize);
        let mid = (i + j) / 2;
        let reps = 10_000;
        let mut mean = 0.0;
        let mut var = 0.0;
        for _ in 0..reps {
            let q = propose_bridge(&p, i, j, &mut rng).unwrap();
            mean += q.positions[mid][0];
        }
        mean /= reps as f64;
        let mut rng2 = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..reps {
            let q = propose_bridge(&p, i, j, &mut rng2).unwrap();
            let d = q.positions[mid][0] - mean;
            var += d * d;
        }
        var /= reps as f64;
        let expect_mean = 0.5 * (p.positions[i][0] + p.positions[j][0]);
        let expect_var = p.h * (j - i) as f64 / 4.0;
        let se_mean = (expect_var / reps as f64).sqrt();
        assert!((mean - expect_mean).abs() < 4.0 * se_mean, "{mean} vs {expect_mean}");
        assert!((var / expect_var - 1.0).abs() < 0.08, "{var} vs {expect_var}");
    }

    #[test]
    fn bridge_proposal_is_wiener_reversible() {
        // rho_W(x) q(x -> x') = rho_W(x') q(x' -> x) for bridge redraws
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let x = sample_wiener(4.0, 0.25, &mut rng).unwrap();
        for (i, j) in [(0usize, 5usize), (3, 9), (10, 16)] {
            let xp = propose_bridge(&x, i, j, &mut rng).unwrap();
            let lhs = wiener_log_density(&x) + bridge_log_density(&x, &xp, i, j);
            let rhs = wiener_log_density(&xp) + bridge_log_density(&xp, &x, i, j);
            assert!(
                (lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0),
                "({i},{j}): {lhs} vs {rhs}"
            );
        }
        // endpoint block likewise
        for i in [4usize, 12] {
            let xp = propose_endpoint_block(&x, i, &mut rng).unwrap();
            let lhs = wiener_log_density(&x) + endpoint_log_density(&xp, i);
            let rhs = wiener_log_density(&xp) + endpoint_log_density(&x, i);
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }
}
