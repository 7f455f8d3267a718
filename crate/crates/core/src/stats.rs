//! Summation, summary statistics, radial histograms and samplers shared by
//! the sampler, SDE and verification modules.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Neumaier compensated accumulator; summation order fixes the result.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_total(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_total(xs.iter().copied()) / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    compensated_total(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

/// Mean and naive standard error (independent samples).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let se = (variance(xs) / xs.len() as f64).sqrt();
    (m, se)
}

/// Mean and batch-means standard error, robust to autocorrelation in
/// Markov-chain output.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let b = batches.clamp(2, xs.len().max(2) / 2);
    let per = xs.len() / b;
    if per < 2 {
        return mean_se(xs);
    }
    let batch_means: Vec<f64> = (0..b).map(|k| mean(&xs[k * per..(k + 1) * per])).collect();
    let m = mean(&batch_means);
    let se = (variance(&batch_means) / b as f64).sqrt();
    (m, se)
}

/// Integrated autocorrelation-based effective sample size (initial positive
/// sequence cut-off); floor at 1.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 8 {
        return n as f64;
    }
    let m = mean(xs);
    let c0 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let mut tau = 1.0;
    for lag in 1..(n / 2) {
        let mut c = 0.0;
        for i in 0..n - lag {
            c += (xs[i] - m) * (xs[i + lag] - m);
        }
        c /= n as f64;
        let r = c / c0;
        if r <= 0.0 {
            break;
        }
        tau += 2.0 * r;
    }
    (n as f64 / tau).max(1.0)
}

/// Fixed-width radial histogram over [0, r_max] with a trailing overflow bin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialHistogram {
    r_max: f64,
    counts: Vec<u64>,
    overflow: u64,
    total: u64,
}

impl RadialHistogram {
    pub fn new(r_max: f64, bins: usize) -> Self {
        assert!(r_max > 0.0 && bins >= 2);
        RadialHistogram { r_max, counts: vec![0; bins], overflow: 0, total: 0 }
    }

    #[inline]
    pub fn add(&mut self, r: f64) {
        let k = (r / self.r_max * self.counts.len() as f64) as usize;
        if r >= self.r_max || k >= self.counts.len() {
            self.overflow += 1;
        } else {
            self.counts[k] += 1;
        }
        self.total += 1;
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.r_max / self.counts.len() as f64
    }

    /// Empirical probability per bin (overflow appended as the last entry).
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        let mut p: Vec<f64> = self.counts.iter().map(|&c| c as f64 / t).collect();
        p.push(self.overflow as f64 / t);
        p
    }
}

/// Bin probabilities of a radial pdf (unnormalized weight w(r), r >= 0) on
/// the same layout as `RadialHistogram::probabilities`: `bins` cells over
/// [0, r_max] plus overflow mass. Integration by fine midpoint sums.
pub fn reference_bin_probabilities(
    w: impl Fn(f64) -> f64,
    r_max: f64,
    bins: usize,
    tail_to: f64,
) -> Vec<f64> {
    let sub = 64;
    let mut cell = vec![0.0; bins + 1];
    let dx = r_max / (bins * sub) as f64;
    for k in 0..bins {
        let mut s = 0.0;
        for j in 0..sub {
            let r = (k * sub + j) as f64 * dx + 0.5 * dx;
            s += w(r) * dx;
        }
        cell[k] = s;
    }
    // overflow integrated out to tail_to
    let tail_steps = (((tail_to - r_max) / dx).ceil() as usize).max(1);
    let mut s = 0.0;
    for j in 0..tail_steps {
        let r = r_max + (j as f64 + 0.5) * dx;
        s += w(r) * dx;
    }
    cell[bins] = s;
    let norm: f64 = cell.iter().sum();
    for c in &mut cell {
        *c /= norm;
    }
    cell
}

/// L1 distance between two probability vectors of equal length.
pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Bootstrap standard deviation of the histogram L1 distance to a reference.
pub fn bootstrap_l1_sd(
    hist: &RadialHistogram,
    reference: &[f64],
    resamples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let n = hist.total() as usize;
    if n == 0 {
        return f64::INFINITY;
    }
    // categorical over bins (incl. overflow) from the observed counts
    let mut cum = Vec::with_capacity(hist.bins() + 1);
    let mut acc = 0.0;
    for &c in hist.counts() {
        acc += c as f64;
        cum.push(acc);
    }
    acc += hist.overflow() as f64;
    cum.push(acc);
    let total = acc;
    let mut l1s = Vec::with_capacity(resamples);
    let mut counts = vec![0u64; hist.bins() + 1];
    for _ in 0..resamples {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * total;
            let k = cum.partition_point(|&c| c <= u).min(hist.bins());
            counts[k] += 1;
        }
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        l1s.push(l1_distance(&p, reference));
    }
    variance(&l1s).sqrt()
}

/// Inverse-CDF sampler for a radial pdf proportional to w(r) on [0, r_hi].
#[derive(Debug, Clone)]
pub struct RadialCdfSampler {
    radii: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialCdfSampler {
    pub fn from_weight(w: impl Fn(f64) -> f64, r_hi: f64, resolution: usize) -> Self {
        let m = resolution.max(64);
        let dx = r_hi / m as f64;
        let mut radii = Vec::with_capacity(m + 1);
        let mut cdf = Vec::with_capacity(m + 1);
        radii.push(0.0);
        cdf.push(0.0);
        let mut acc = 0.0;
        let mut prev = w(0.0);
        for k in 1..=m {
            let r = k as f64 * dx;
            let cur = w(r);
            acc += 0.5 * (prev + cur) * dx;
            prev = cur;
            radii.push(r);
            cdf.push(acc);
        }
        let norm = acc;
        for c in &mut cdf {
            *c /= norm;
        }
        RadialCdfSampler { radii, cdf }
    }

    pub fn sample_radius(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.radii[k - 1] + t * (self.radii[k] - self.radii[k - 1])
    }

    /// Radius from the pdf, direction uniform on the sphere.
    pub fn sample_point(&self, rng: &mut impl Rng) -> [f64; 3] {
        let r = self.sample_radius(rng);
        let dir = uniform_direction(rng);
        [r * dir[0], r * dir[1], r * dir[2]]
    }
}

pub fn uniform_direction(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let y: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let q = x * x + y * y + z * z;
        if q > 1e-12 && q <= 1.0 {
            let inv = 1.0 / q.sqrt();
            return [x * inv, y * inv, z * inv];
        }
    }
}

/// Wasserstein-1 distance between a weighted empirical 1D sample and a
/// reference CDF given on a uniform grid over [lo, hi].
pub fn w1_marginal(
    samples: &[(f64, f64)],
    reference_cdf: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    resolution: usize,
) -> f64 {
    let mut pts: Vec<(f64, f64)> = samples.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let wtot: f64 = pts.iter().map(|p| p.1).sum();
    let dx = (hi - lo) / resolution as f64;
    let mut acc = 0.0;
    let mut idx = 0;
    let mut emp = 0.0;
    for k in 0..resolution {
        let x = lo + (k as f64 + 0.5) * dx;
        while idx < pts.len() && pts[idx].0 <= x {
            emp += pts[idx].1 / wtot;
            idx += 1;
        }
        acc += (emp - reference_cdf(x)).abs() * dx;
    }
    acc
}

/// SplitMix64 step, used to derive independent substream seeds.
pub fn derive_seed(root: u64, tag: u64) -> u64 {
    let mut z = root ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
