//! Brute-force Monte Carlo of the interference gain.
//!
//! `Exact` draws the user position uniformly in the canonical sector and uses
//! the position-dependent path loss; `Approx` replaces it by λₙ. Draws are
//! split into fixed chunks, each with its own RNG stream, and chunk results
//! are merged in order, so outputs do not depend on the thread count.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::numeric::CompensatedSum;
use crate::propagation::{PropagationParams, Scenario, XI};
use crate::rng;

/// Draws per RNG stream.
pub const CHUNK_DRAWS: u64 = 1 << 16;

/// Draw count below which summaries also keep every sample for exact
/// quantiles.
pub const EXACT_QUANTILE_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Position-dependent path loss.
    Exact,
    /// Path loss replaced by its sector average λₙ.
    Approx,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Mode::Exact),
            "approx" => Ok(Mode::Approx),
            other => Err(Error::Config(format!("unknown simulation mode `{other}`"))),
        }
    }
}

/// Per-draw sampler for one scenario and mode.
#[derive(Debug, Clone)]
pub struct GainSampler {
    mode: Mode,
    shadow_mu: f64,
    shadow_sigma: f64,
    gamma: f64,
    d_ref: f64,
    vertices: [Point; 3],
    aps: Vec<Point>,
    lambdas: Vec<f64>,
}

impl GainSampler {
    pub fn new(scenario: &Scenario, mode: Mode) -> Result<Self> {
        let params = scenario.params();
        let aps = scenario
            .interferers()
            .iter()
            .map(|i| scenario.layout().ap(i.ap_index))
            .collect::<Result<_>>()?;
        Ok(Self {
            mode,
            shadow_mu: params.mu_db() / XI,
            shadow_sigma: params.sigma_nat(),
            gamma: params.gamma(),
            d_ref: params.d_ref(),
            vertices: scenario.layout().sector_vertices(),
            aps,
            lambdas: scenario.lambdas(),
        })
    }

    /// Single interferer with λ = 1, i.e. G_f·G_s.
    pub fn unit(sigma_db: f64) -> Result<Self> {
        let params = PropagationParams::new(3.0, 1.0, sigma_db)?;
        Ok(Self {
            mode: Mode::Approx,
            shadow_mu: params.mu_db() / XI,
            shadow_sigma: params.sigma_nat(),
            gamma: params.gamma(),
            d_ref: params.d_ref(),
            vertices: [Point::new(0.0, 0.0); 3],
            aps: Vec::new(),
            lambdas: vec![1.0],
        })
    }

    fn fading_shadowing<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let fading: f64 = Exp1.sample(rng);
        if self.shadow_sigma == 0.0 {
            fading
        } else {
            let z: f64 = StandardNormal.sample(rng);
            fading * (self.shadow_mu + self.shadow_sigma * z).exp()
        }
    }

    /// Uniform point in the canonical sector triangle.
    fn sector_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let [o, a, b] = self.vertices;
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        Point::new(
            o.x + u * (a.x - o.x) + v * (b.x - o.x),
            o.y + u * (a.y - o.y) + v * (b.y - o.y),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.mode {
            Mode::Approx => self
                .lambdas
                .iter()
                .map(|l| l * self.fading_shadowing(rng))
                .sum(),
            Mode::Exact => {
                let user = self.sector_point(rng);
                self.aps
                    .iter()
                    .map(|ap| {
                        let r = ap.distance(&user);
                        (self.d_ref / r).powf(self.gamma) * self.fading_shadowing(rng)
                    })
                    .sum()
            }
        }
    }
}

/// Number of RNG chunks covering `draws`.
pub fn chunk_count(draws: u64) -> u64 {
    draws.div_ceil(CHUNK_DRAWS)
}

fn chunk_ranges(draws: u64) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    chunk_subset(draws, 0..chunk_count(draws))
}

fn chunk_subset(
    draws: u64,
    chunks: std::ops::Range<u64>,
) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    let first = chunks.start;
    let len = chunks.end.min(chunk_count(draws)).saturating_sub(first) as usize;
    (0..len).into_par_iter().map(move |i| {
        let c = first + i as u64;
        let start = c * CHUNK_DRAWS;
        (c, (draws - start).min(CHUNK_DRAWS))
    })
}

/// Every draw, in a thread-count independent order.
pub fn simulate(sampler: &GainSampler, draws: u64, seed: u64) -> Vec<f64> {
    simulate_chunks(sampler, draws, seed, 0..chunk_count(draws))
}

/// The draws of chunks `chunks` out of a `draws`-sample run. Concatenating
/// consecutive batches reproduces [`simulate`].
pub fn simulate_chunks(
    sampler: &GainSampler,
    draws: u64,
    seed: u64,
    chunks: std::ops::Range<u64>,
) -> Vec<f64> {
    let parts: Vec<Vec<f64>> = chunk_subset(draws, chunks)
        .map(|(c, n)| {
            let mut r = rng::stream(seed, c);
            (0..n).map(|_| sampler.sample(&mut r)).collect()
        })
        .collect();
    parts.concat()
}

/// Samples of G with position-dependent path loss.
pub fn simulate_exact(scenario: &Scenario, draws: u64, seed: u64) -> Result<Vec<f64>> {
    Ok(simulate(
        &GainSampler::new(scenario, Mode::Exact)?,
        draws,
        seed,
    ))
}

/// Samples of Σ λₙ·G_f,n·G_s,n.
pub fn simulate_approx(scenario: &Scenario, draws: u64, seed: u64) -> Result<Vec<f64>> {
    Ok(simulate(
        &GainSampler::new(scenario, Mode::Approx)?,
        draws,
        seed,
    ))
}

/// Streaming summary over `draws` samples in constant memory (plus the raw
/// samples when `draws` is below [`EXACT_QUANTILE_LIMIT`]).
pub fn summarize(
    sampler: &GainSampler,
    draws: u64,
    seed: u64,
    thresholds: &[f64],
) -> SampleSummary {
    let keep = draws < EXACT_QUANTILE_LIMIT;
    let parts: Vec<SampleSummary> = chunk_ranges(draws)
        .map(|(c, n)| {
            let mut r = rng::stream(seed, c);
            let mut s = SampleSummary::new(thresholds, keep);
            for _ in 0..n {
                s.push(sampler.sample(&mut r));
            }
            s
        })
        .collect();
    let mut total = SampleSummary::new(thresholds, keep);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Relative accuracy of the streaming quantile sketch.
pub const SKETCH_ACCURACY: f64 = 1e-3;

/// Mergeable log-bucket quantile sketch: every positive value falls in bucket
/// ⌈log_γ x⌉ with γ = (1 + ε)/(1 − ε), so reported quantiles carry relative
/// error at most ε.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSketch {
    ln_gamma: f64,
    offset: i64,
    counts: Vec<u64>,
    zeros: u64,
    total: u64,
}

impl Default for QuantileSketch {
    fn default() -> Self {
        Self::new(SKETCH_ACCURACY)
    }
}

impl QuantileSketch {
    pub fn new(accuracy: f64) -> Self {
        Self {
            ln_gamma: ((1.0 + accuracy) / (1.0 - accuracy)).ln(),
            offset: 0,
            counts: Vec::new(),
            zeros: 0,
            total: 0,
        }
    }

    fn bucket(&self, x: f64) -> i64 {
        (x.ln() / self.ln_gamma).ceil() as i64
    }

    fn add_count(&mut self, bucket: i64, count: u64) {
        if self.counts.is_empty() {
            self.offset = bucket;
            self.counts.push(0);
        }
        if bucket < self.offset {
            let grow = (self.offset - bucket) as usize;
            self.counts.splice(0..0, std::iter::repeat_n(0, grow));
            self.offset = bucket;
        }
        let idx = (bucket - self.offset) as usize;
        if idx >= self.counts.len() {
            self.counts.resize(idx + 1, 0);
        }
        self.counts[idx] += count;
    }

    pub fn push(&mut self, x: f64) {
        self.total += 1;
        if x > 0.0 {
            self.add_count(self.bucket(x), 1);
        } else {
            self.zeros += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.total += other.total;
        self.zeros += other.zeros;
        for (i, c) in other.counts.iter().enumerate() {
            if *c > 0 {
                self.add_count(other.offset + i as i64, *c);
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    /// Value at lower-tail probability `q`.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let rank = (q.clamp(0.0, 1.0) * (self.total - 1) as f64).floor() as u64;
        if rank < self.zeros {
            return Some(0.0);
        }
        let mut cum = self.zeros;
        let gamma = self.ln_gamma.exp();
        for (i, c) in self.counts.iter().enumerate() {
            cum += c;
            if cum > rank {
                let b = (self.offset + i as i64) as f64;
                return Some(2.0 * (b * self.ln_gamma).exp() / (gamma + 1.0));
            }
        }
        None
    }
}

/// Streaming sample statistics.
#[derive(Debug, Clone)]
pub struct SampleSummary {
    count: u64,
    sums: [CompensatedSum; 3],
    min: f64,
    max: f64,
    sketch: QuantileSketch,
    thresholds: Vec<f64>,
    exceedances: Vec<u64>,
    samples: Option<Vec<f64>>,
}

impl SampleSummary {
    pub fn new(thresholds: &[f64], keep_samples: bool) -> Self {
        Self {
            count: 0,
            sums: [CompensatedSum::new(); 3],
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            sketch: QuantileSketch::default(),
            thresholds: thresholds.to_vec(),
            exceedances: vec![0; thresholds.len()],
            samples: keep_samples.then(Vec::new),
        }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let mut p = x;
        for s in &mut self.sums {
            s.add(p);
            p *= x;
        }
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        self.sketch.push(x);
        for (t, e) in self.thresholds.iter().zip(&mut self.exceedances) {
            if x > *t {
                *e += 1;
            }
        }
        if let Some(v) = &mut self.samples {
            v.push(x);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.merge(b);
        }
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.sketch.merge(&other.sketch);
        for (a, b) in self.exceedances.iter_mut().zip(&other.exceedances) {
            *a += b;
        }
        match (&mut self.samples, &other.samples) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (a, _) => *a = None,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Raw sample moment of order 1 to 3.
    pub fn moment(&self, k: usize) -> f64 {
        assert!((1..=3).contains(&k), "moments of order 1..=3 are tracked");
        self.sums[k - 1].value() / self.count as f64
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        (self.sums[1].value() - n * m * m) / (n - 1.0)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Counts of samples strictly above each threshold.
    pub fn exceedances(&self) -> &[u64] {
        &self.exceedances
    }

    /// Quantile from the retained samples when available, else from the
    /// sketch.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        match &self.samples {
            Some(v) if !v.is_empty() => {
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                let rank = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
                Some(sorted[rank])
            }
            _ => self.sketch.quantile(q),
        }
    }

    pub fn samples(&self) -> Option<&[f64]> {
        self.samples.as_deref()
    }
}

/// Kolmogorov–Smirnov distance between a sample and a cdf. Sorts `sample`.
pub fn ks_distance<F: FnMut(f64) -> f64>(sample: &mut [f64], mut cdf: F) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Largest gap between two empirical cdfs. Sorts both samples.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
