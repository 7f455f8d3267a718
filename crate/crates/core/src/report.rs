//! Verification sections tying sampler and SDE output to the limit
//! statements: the law of the best shift against the psi0-weighted
//! reference, the endpoint law against the self-convolution reference,
//! orbit-distance quantiles, and the free-energy comparison.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{integrate_radial, RadialFunction, RadialGrid, RadialInterpolant, FOUR_PI};
use crate::sampler::TiResult;
use crate::solver::PekarSolution;
use crate::stats::{
    bootstrap_l1_sd, derive_seed, effective_sample_size, l1_distance,
    reference_bin_probabilities, RadialCdfSampler, RadialHistogram,
};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const DEFAULT_HIST_BINS: usize = 20;
pub const DEFAULT_HIST_RMAX: f64 = 5.0;
pub const MIN_EFFECTIVE_SAMPLES: f64 = 500.0;
/// L1 below which a histogram is considered to match its reference (the
/// exact-sample self test lands near 0.03 at 10^4 draws).
pub const MATCH_GATE: f64 = 0.05;

/// Radial self-convolution of a radial profile: (f * f)(s) on the same
/// grid, via (f*g)(s) = (2 pi / s) int r f(r) [G(s+r) - G(|s-r|)] dr with
/// G(u) = int_0^u v f(v) dv and f extended by zero beyond the grid.
/// The result lives on a grid of doubled extent: the convolution of two
/// profiles supported in [0, r_max] reaches out to 2 r_max, and the mass
/// there is not negligible at the 1e-6 level.
pub fn radial_self_convolution(f: &RadialFunction) -> RadialFunction {
    const REFINE: usize = 2;
    let grid = f.grid();
    let n = grid.n();
    let nn = n * REFINE;
    let ddr = grid.dr() / REFINE as f64;
    let interp = RadialInterpolant::new(f);
    let fine: Vec<f64> = (0..nn).map(|k| interp.eval_clamped((k + 1) as f64 * ddr)).collect();
    // G(k*ddr) = int_0^{k*ddr} v f(v) dv, flat beyond rmax where f vanishes
    let mut g = vec![0.0; 2 * nn + 1];
    for k in 1..=2 * nn {
        let add = if k <= nn {
            let r = k as f64 * ddr;
            let prev = if k >= 2 { (k as f64 - 1.0) * ddr * fine[k - 2] } else { 0.0 };
            0.5 * (prev + r * fine[k - 1]) * ddr
        } else {
            0.0
        };
        g[k] = g[k - 1] + add;
    }
    // (f*f)(s) = (2 pi / s) int r f(r) [G(s+r) - G(|s-r|)] dr; every argument
    // lands exactly on the fine table since s and r are node multiples
    let out_grid = RadialGrid::new(2.0 * grid.r_max(), 2 * n).unwrap();
    let mut out = vec![0.0; 2 * n];
    for (s_idx, slot) in out.iter_mut().enumerate() {
        let sk = (s_idx + 1) * REFINE;
        let s = sk as f64 * ddr;
        let mut acc = 0.0;
        for j in 0..nn {
            let r = (j + 1) as f64 * ddr;
            // trapezoid over [0, rmax] with a zero virtual origin node
            let w = if j == nn - 1 { 0.5 } else { 1.0 };
            let plus = (sk + j + 1).min(2 * nn);
            let minus = sk.abs_diff(j + 1);
            acc += w * r * fine[j] * (g[plus] - g[minus]) * ddr;
        }
        *slot = 2.0 * std::f64::consts::PI / s * acc;
    }
    RadialFunction::new(out_grid, out).unwrap()
}

/// Checks int_{R^3} (f * f) = (int f)^2 (both by radial quadrature).
pub fn convolution_mass_gap(f: &RadialFunction) -> f64 {
    let conv = radial_self_convolution(f);
    let lhs = FOUR_PI * integrate_radial(&conv, 2);
    let rhs = (FOUR_PI * integrate_radial(f, 2)).powi(2);
    (lhs - rhs).abs() / rhs.abs().max(1e-300)
}

/// Comparison of an empirical radius sample against a radial reference pdf.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramComparison {
    pub l1: f64,
    pub bootstrap_sd: f64,
    pub n_samples: usize,
    pub effective_samples: f64,
    pub conclusive: bool,
}

pub fn compare_radii(
    radii: &[f64],
    reference_weight: impl Fn(f64) -> f64,
    bins: usize,
    r_max: f64,
    seed: u64,
) -> HistogramComparison {
    let mut hist = RadialHistogram::new(r_max, bins);
    for &r in radii {
        hist.add(r);
    }
    let reference = reference_bin_probabilities(&reference_weight, r_max, bins, 4.0 * r_max);
    let l1 = l1_distance(&hist.probabilities(), &reference);
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0xb007));
    let bootstrap_sd = bootstrap_l1_sd(&hist, &reference, BOOTSTRAP_RESAMPLES, &mut rng);
    let ess = effective_sample_size(radii);
    HistogramComparison {
        l1,
        bootstrap_sd,
        n_samples: radii.len(),
        effective_samples: ess,
        conclusive: ess >= MIN_EFFECTIVE_SAMPLES,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendRow {
    pub t: f64,
    pub comparison: HistogramComparison,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendSection {
    pub rows: Vec<TrendRow>,
    /// L1 nonincreasing over the t-grid within paired bootstrap error.
    pub nonincreasing: bool,
    /// Self-test: exact draws from the reference at n = 10^4 land below 0.05.
    pub selftest_l1: f64,
    pub selftest_pass: bool,
    /// Negative control: the beta = 0 chain must NOT match the reference.
    pub negative_control_l1: Option<f64>,
    pub negative_control_fails_match: Option<bool>,
    pub all_conclusive: bool,
    pub pass: bool,
}

fn radii_of(samples: &[[f64; 3]]) -> Vec<f64> {
    samples
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .collect()
}

fn trend_nonincreasing(rows: &[TrendRow]) -> bool {
    rows.windows(2).all(|w| {
        let slack = 2.0
            * (w[0].comparison.bootstrap_sd.powi(2) + w[1].comparison.bootstrap_sd.powi(2)).sqrt();
        w[1].comparison.l1 <= w[0].comparison.l1 + slack
    })
}

fn build_trend_section(
    per_t: &[(f64, Vec<[f64; 3]>)],
    negative_control: Option<&[[f64; 3]]>,
    weight: impl Fn(f64) -> f64 + Copy,
    sampler_r_hi: f64,
    seed: u64,
) -> TrendSection {
    let rows: Vec<TrendRow> = per_t
        .iter()
        .enumerate()
        .map(|(k, (t, samples))| TrendRow {
            t: *t,
            comparison: compare_radii(
                &radii_of(samples),
                weight,
                DEFAULT_HIST_BINS,
                DEFAULT_HIST_RMAX,
                derive_seed(seed, k as u64),
            ),
        })
        .collect();
    let nonincreasing = trend_nonincreasing(&rows);

    // inverse-CDF self test with exact reference draws
    let sampler = RadialCdfSampler::from_weight(weight, sampler_r_hi, 8192);
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0x5e1f));
    let draws: Vec<f64> = (0..10_000).map(|_| sampler.sample_radius(&mut rng)).collect();
    let selftest =
        compare_radii(&draws, weight, DEFAULT_HIST_BINS, DEFAULT_HIST_RMAX, derive_seed(seed, 7));
    let selftest_pass = selftest.l1 <= MATCH_GATE;

    let (nc_l1, nc_flag) = match negative_control {
        Some(samples) => {
            let cmp = compare_radii(
                &radii_of(samples),
                weight,
                DEFAULT_HIST_BINS,
                DEFAULT_HIST_RMAX,
                derive_seed(seed, 0xc0),
            );
            // the control "fails to match" when its L1 sits clearly above
            // the 0.05 match gate established by the exact-sample self test
            (Some(cmp.l1), Some(cmp.l1 > 2.0 * MATCH_GATE))
        }
        None => (None, None),
    };
    let all_conclusive = rows.iter().all(|r| r.comparison.conclusive);
    let pass = nonincreasing
        && selftest_pass
        && all_conclusive
        && nc_flag.unwrap_or(true);
    TrendSection {
        rows,
        nonincreasing,
        selftest_l1: selftest.l1,
        selftest_pass,
        negative_control_l1: nc_l1,
        negative_control_fails_match: nc_flag,
        all_conclusive,
        pass,
    }
}

/// Law of the best shift Y(L_t): |Y| against the radial reference
/// proportional to r^2 psi0(r).
pub fn verify_shift_law(
    per_t: &[(f64, Vec<[f64; 3]>)],
    negative_control: Option<&[[f64; 3]]>,
    sol: &PekarSolution,
    seed: u64,
) -> TrendSection {
    let psi = sol.psi_interp();
    let weight = move |r: f64| {
        if r > psi.r_max() {
            0.0
        } else {
            r * r * psi.eval_clamped(r).max(0.0)
        }
    };
    build_trend_section(per_t, negative_control, &weight, 12.0, derive_seed(seed, 0x111))
}

/// Path endpoint law: |W_t| against the radial density of psi0 * psi0.
pub fn verify_endpoint_law(
    per_t: &[(f64, Vec<[f64; 3]>)],
    negative_control: Option<&[[f64; 3]]>,
    sol: &PekarSolution,
    seed: u64,
) -> TrendSection {
    let conv = radial_self_convolution(&sol.psi0);
    let interp = RadialInterpolant::new(&conv);
    let weight = move |r: f64| {
        if r > interp.r_max() {
            0.0
        } else {
            r * r * interp.eval_clamped(r).max(0.0)
        }
    };
    build_trend_section(per_t, negative_control, &weight, 15.0, derive_seed(seed, 0x222))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeRow {
    pub t: f64,
    pub beta: f64,
    pub median: f64,
    pub q90: f64,
    pub exceedance: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeSection {
    pub epsilon: f64,
    pub rows: Vec<TubeRow>,
    /// Exceedance fraction decreasing in t along beta = 1 rows.
    pub tilted_exceedance_decreasing: bool,
    /// beta = 0 medians stay above the configured floor (bounded away from
    /// zero). At desk-scale t both the tilted and the control distances are
    /// still falling; the rows carry the full picture.
    pub control_above_floor: bool,
    pub control_floor: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let t = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] * (1.0 - t) + sorted[lo + 1] * t
    } else {
        sorted[lo]
    }
}

/// Quantiles and epsilon-exceedance of orbit sup-distances per (t, beta).
pub fn verify_tube(rows_in: &[(f64, f64, Vec<f64>)], epsilon: f64, control_floor: f64) -> TubeSection {
    let mut rows = Vec::with_capacity(rows_in.len());
    for (t, beta, dists) in rows_in {
        let mut sorted = dists.clone();
        sorted.sort_by(f64::total_cmp);
        let exceed = sorted.iter().filter(|&&d| d > epsilon).count() as f64
            / sorted.len().max(1) as f64;
        rows.push(TubeRow {
            t: *t,
            beta: *beta,
            median: quantile(&sorted, 0.5),
            q90: quantile(&sorted, 0.9),
            exceedance: exceed,
            n_samples: sorted.len(),
        });
    }
    let mut tilted: Vec<&TubeRow> = rows.iter().filter(|r| r.beta == 1.0).collect();
    tilted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let tilted_exceedance_decreasing = tilted
        .windows(2)
        .all(|w| w[1].exceedance <= w[0].exceedance + 0.02 && w[1].median <= w[0].median * 1.05);
    let control_above_floor = rows
        .iter()
        .filter(|r| r.beta == 0.0)
        .all(|r| r.median > control_floor);
    TubeSection {
        epsilon,
        rows,
        tilted_exceedance_decreasing,
        control_above_floor,
        control_floor,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeEnergyRow {
    pub t: f64,
    pub estimate: f64,
    pub std_err: f64,
    pub ratio_to_rho: f64,
    pub gap_to_rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeEnergySection {
    pub rho: f64,
    pub gaussian_trial_bound: f64,
    pub rows: Vec<FreeEnergyRow>,
    pub all_positive: bool,
    /// estimate <= rho * 1.05 at every t (the finite-t cap).
    pub below_cap: bool,
    pub above_half_rho: bool,
    /// |estimate - rho| shrinking along the t-grid within error bars.
    pub gap_shrinking: bool,
    pub conclusive: bool,
}

pub fn verify_free_energy(ti: &[(f64, TiResult)], rho: f64) -> FreeEnergySection {
    let rows: Vec<FreeEnergyRow> = ti
        .iter()
        .map(|(t, r)| FreeEnergyRow {
            t: *t,
            estimate: r.estimate,
            std_err: r.std_err,
            ratio_to_rho: r.estimate / rho,
            gap_to_rho: r.estimate - rho,
        })
        .collect();
    let all_positive = rows.iter().all(|r| r.estimate > 0.0);
    let below_cap = rows.iter().all(|r| r.estimate <= 1.05 * rho);
    let above_half_rho = rows.iter().all(|r| r.estimate >= 0.5 * rho);
    let gap_shrinking = rows.windows(2).all(|w| {
        let slack = 2.0 * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
        w[1].gap_to_rho.abs() <= w[0].gap_to_rho.abs() + slack
    });
    let conclusive = rows.iter().all(|r| r.std_err <= 0.5 * rho);
    FreeEnergySection {
        rho,
        gaussian_trial_bound: crate::solver::GAUSSIAN_TRIAL_VALUE,
        rows,
        all_positive,
        below_cap,
        above_half_rho,
        gap_shrinking,
        conclusive,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub r_max: f64,
    pub n: usize,
    pub lambda: f64,
    pub lambda_eig: f64,
    pub rho: f64,
    pub coulomb_energy: f64,
    pub dirichlet: f64,
    pub el_residual: f64,
    pub virial_gap: f64,
    pub iterations: usize,
    pub psi_center: f64,
    pub potential_center: f64,
    pub gaussian_trial_bound: f64,
}

impl SolverSummary {
    pub fn from_solution(sol: &PekarSolution) -> Self {
        SolverSummary {
            r_max: sol.psi0.grid().r_max(),
            n: sol.psi0.grid().n(),
            lambda: sol.lambda,
            lambda_eig: sol.lambda_eig,
            rho: sol.rho,
            coulomb_energy: sol.coulomb_energy,
            dirichlet: sol.dirichlet,
            el_residual: sol.residual,
            virial_gap: (sol.coulomb_energy - 2.0 * sol.dirichlet).abs(),
            iterations: sol.change_history.len(),
            psi_center: sol.psi_center(),
            potential_center: sol.potential.extrapolate_origin(),
            gaussian_trial_bound: crate::solver::GAUSSIAN_TRIAL_VALUE,
        }
    }
}

/// One-dimensional marginal CDF of the radial density psi0^2: the marginal
/// pdf is f(x) = 2 pi int_{|x|}^{rmax} r psi0^2(r) dr.
#[derive(Debug, Clone)]
pub struct MarginalCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl MarginalCdf {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[self.xs.len() - 1] {
            return 1.0;
        }
        let k = self.xs.partition_point(|&v| v < x).max(1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let t = (x - x0) / (x1 - x0);
        self.cdf[k - 1] * (1.0 - t) + self.cdf[k] * t
    }

    pub fn support(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
}

pub fn psi2_marginal_cdf(sol: &PekarSolution) -> MarginalCdf {
    let grid = sol.psi0.grid();
    let n = grid.n();
    let dr = grid.dr();
    // tail integrals T(a) = int_a^rmax r psi^2 dr at the nodes
    let node_f = |i: usize| grid.node(i) * sol.psi0.value(i) * sol.psi0.value(i);
    let mut tail = vec![0.0; n];
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * (node_f(i) + node_f(i + 1)) * dr;
    }
    let pdf_at = |a: f64| -> f64 {
        let a = a.abs();
        if a >= grid.r_max() {
            return 0.0;
        }
        let s = (a / dr - 1.0).max(0.0);
        let lo = (s.floor() as usize).min(n - 2);
        let t = s - lo as f64;
        2.0 * std::f64::consts::PI * (tail[lo] * (1.0 - t) + tail[lo + 1] * t)
    };
    let m = 2000;
    let half = grid.r_max();
    let mut xs = Vec::with_capacity(2 * m + 1);
    let mut cdf = Vec::with_capacity(2 * m + 1);
    let dx = 2.0 * half / (2 * m) as f64;
    let mut acc = 0.0;
    let mut prev = pdf_at(-half);
    xs.push(-half);
    cdf.push(0.0);
    for k in 1..=2 * m {
        let x = -half + k as f64 * dx;
        let cur = pdf_at(x);
        acc += 0.5 * (prev + cur) * dx;
        prev = cur;
        xs.push(x);
        cdf.push(acc);
    }
    let norm = acc;
    for c in &mut cdf {
        *c /= norm;
    }
    MarginalCdf { xs, cdf }
}

/// Convenience: draw n points from the 3D law with radial pdf
/// proportional to r^2 psi0(r) (the limiting shift mixture).
pub fn sample_shift_reference(
    sol: &PekarSolution,
    n: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    let psi = sol.psi_interp();
    let weight = move |r: f64| {
        if r > psi.r_max() {
            0.0
        } else {
            r * r * psi.eval_clamped(r).max(0.0)
        }
    };
    let sampler = RadialCdfSampler::from_weight(weight, 12.0, 8192);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.sample_point(&mut rng)).collect())
}
