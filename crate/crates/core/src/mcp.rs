//! Monte-Carlo panel combination of per-link typical sets into a typical
//! set for the total interference gain.
//!
//! The M links with the largest λ are *compelled*: every combination of
//! their intervals is enumerated, each interval randomly permuted before the
//! element-wise sum. Remaining links draw one interval per block from the
//! loaded probabilities, which only cover the first 𝒥 intervals. Amplitudes
//! of compelled links are rescaled by f⁻ (first 𝒥 intervals) and f⁺ (the
//! rest) so the mean is preserved.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::propagation::Scenario;
use crate::rng;
use crate::typical_set::{PartitionSpec, TypicalSet};

/// Iterations merged per work unit; fixed so results do not depend on the
/// thread count.
const CHUNK: usize = 8;

/// Relative mean deviation above which a run counts as diverged.
pub const MAX_DEVIATION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McpConfig {
    /// Compelled-link count M.
    pub compelled: usize,
    /// Interval cutoff 𝒥 for non-compelled draws.
    pub loaded_intervals: usize,
    pub iterations: usize,
    pub seed: u64,
    pub partition: PartitionSpec,
    pub histogram_bins: usize,
    /// Weighted quantiles spanned by the histogram bins.
    pub histogram_range: (f64, f64),
    pub parallel: bool,
}

impl Default for McpConfig {
    fn default() -> Self {
        Self {
            compelled: 2,
            loaded_intervals: 3,
            iterations: 20_000,
            seed: 42,
            partition: PartitionSpec::default(),
            histogram_bins: 200,
            histogram_range: (1e-4, 1.0 - 1e-6),
            parallel: true,
        }
    }
}

impl McpConfig {
    /// Checks the configuration against a link count. M = N is accepted and
    /// runs without correction factors.
    pub fn validate(&self, links: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::McpConfig(msg));
        if self.compelled == 0 || self.compelled > links {
            return fail(format!(
                "compelled links M = {} must lie in 1..={links}",
                self.compelled
            ));
        }
        if self.loaded_intervals == 0 || self.loaded_intervals > self.partition.intervals {
            return fail(format!(
                "interval cutoff {} must lie in 1..={}",
                self.loaded_intervals, self.partition.intervals
            ));
        }
        if self.iterations == 0 {
            return fail("at least one iteration is required".into());
        }
        if self.histogram_bins == 0 {
            return fail("at least one histogram bin is required".into());
        }
        let (lo, hi) = self.histogram_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return fail(format!(
                "histogram quantile range ({lo}, {hi}) is not ordered in [0, 1]"
            ));
        }
        let blocks = (self.partition.intervals as u128).pow(self.compelled as u32);
        if blocks * self.partition.points as u128 > 1 << 28 {
            return fail(format!(
                "panel of {blocks} blocks x {} points exceeds the memory budget",
                self.partition.points
            ));
        }
        Ok(())
    }
}

/// Normalization α = 1 / Σ_{j≤𝒥} dⱼ of the loaded probabilities.
pub fn loading_factor(partition: &PartitionSpec, loaded_intervals: usize) -> f64 {
    1.0 / compensated_sum((0..loaded_intervals).map(|j| partition.length(j)))
}

/// Interval-draw probabilities for non-compelled links: α·dⱼ for j ≤ 𝒥.
pub fn loaded_probabilities(partition: &PartitionSpec, loaded_intervals: usize) -> Vec<f64> {
    let alpha = loading_factor(partition, loaded_intervals);
    (0..partition.intervals)
        .map(|j| {
            if j < loaded_intervals {
                alpha * partition.length(j)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionFactors {
    /// Applied to the first 𝒥 intervals of compelled links.
    pub minus: f64,
    /// Applied to the remaining intervals of compelled links.
    pub plus: f64,
}

impl CorrectionFactors {
    pub const IDENTITY: Self = Self {
        minus: 1.0,
        plus: 1.0,
    };
}

/// f⁺ = 1 + Σ_{n>M}λₙ / Σ_{n≤M}λₙ and f⁻ = 1 − (α − 1)·Σ_{n>M}λₙ / Σ_{n≤M}λₙ,
/// with `lambdas` sorted in decreasing order.
pub fn correction_factors(
    lambdas: &[f64],
    compelled: usize,
    alpha: f64,
) -> Result<CorrectionFactors> {
    if compelled == 0 || compelled >= lambdas.len() {
        return Err(Error::McpConfig(format!(
            "correction factors need 1 <= M < N (M = {compelled}, N = {})",
            lambdas.len()
        )));
    }
    let head = compensated_sum(lambdas[..compelled].iter().copied());
    if head <= 0.0 {
        return Err(Error::McpConfig(
            "compelled links carry zero mean gain".into(),
        ));
    }
    let ratio = compensated_sum(lambdas[compelled..].iter().copied()) / head;
    let factors = CorrectionFactors {
        minus: 1.0 - (alpha - 1.0) * ratio,
        plus: 1.0 + ratio,
    };
    debug_assert!(factors.plus >= 1.0 && factors.minus <= 1.0);
    Ok(factors)
}

/// A per-link typical set with amplitudes already scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSet {
    partition: PartitionSpec,
    amplitudes: Vec<f64>,
}

impl LinkSet {
    pub fn new(partition: PartitionSpec, amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != partition.len() {
            return Err(Error::MismatchedPartitions);
        }
        Ok(Self {
            partition,
            amplitudes,
        })
    }

    /// Unit-λ set scaled by `lambda`.
    pub fn weighted(set: &TypicalSet, lambda: f64) -> Self {
        Self {
            partition: set.partition(),
            amplitudes: set.amplitudes().iter().map(|x| lambda * x).collect(),
        }
    }

    /// Unit-λ set scaled by `lambda` and by the correction factor of each
    /// interval.
    pub fn compelled(
        set: &TypicalSet,
        lambda: f64,
        factors: CorrectionFactors,
        loaded_intervals: usize,
    ) -> Self {
        let p = set.partition().points;
        let amplitudes = set
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = if i / p < loaded_intervals {
                    factors.minus
                } else {
                    factors.plus
                };
                lambda * f * x
            })
            .collect();
        Self {
            partition: set.partition(),
            amplitudes,
        }
    }

    pub fn partition(&self) -> PartitionSpec {
        self.partition
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    fn interval(&self, j: usize) -> &[f64] {
        let p = self.partition.points;
        &self.amplitudes[j * p..(j + 1) * p]
    }
}

/// Typical set of the total gain: Jᴹ blocks of P amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSet {
    partition: PartitionSpec,
    compelled: usize,
    weights: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl PanelSet {
    pub(crate) fn from_parts(
        partition: PartitionSpec,
        compelled: usize,
        weights: Vec<f64>,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != partition.intervals.pow(compelled as u32)
            || amplitudes.len() != weights.len() * partition.points
        {
            return Err(Error::MismatchedPartitions);
        }
        Ok(Self {
            partition,
            compelled,
            weights,
            amplitudes,
        })
    }

    pub fn partition(&self) -> PartitionSpec {
        self.partition
    }

    pub fn compelled(&self) -> usize {
        self.compelled
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.weights.len()
    }

    /// Normalized block weights Π d_{j_m}.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn block(&self, b: usize) -> &[f64] {
        let p = self.partition.points;
        &self.amplitudes[b * p..(b + 1) * p]
    }

    /// Interval indices (j₁, …, j_M) of block `b`; the first link varies
    /// fastest.
    pub fn combo(&self, b: usize) -> Vec<usize> {
        let j = self.partition.intervals;
        let mut rest = b;
        (0..self.compelled)
            .map(|_| {
                let d = rest % j;
                rest /= j;
                d
            })
            .collect()
    }

    /// (amplitude, probability) pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let p = self.partition.points;
        self.amplitudes
            .iter()
            .enumerate()
            .map(move |(i, x)| (*x, self.weights[i / p] / p as f64))
    }

    pub fn weighted_moment(&self, k: i32) -> f64 {
        let p = self.partition.points as f64;
        let mut acc = CompensatedSum::new();
        for (b, w) in self.weights.iter().enumerate() {
            acc.add(w * compensated_sum(self.block(b).iter().map(|x| x.powi(k))) / p);
        }
        acc.value()
    }

    pub fn weighted_mean(&self) -> f64 {
        self.weighted_moment(1)
    }
}

fn shared_partition(sets: &[LinkSet]) -> Result<PartitionSpec> {
    let first = sets
        .first()
        .ok_or_else(|| Error::McpConfig("no link sets supplied".into()))?
        .partition;
    if sets.iter().any(|s| s.partition != first) {
        return Err(Error::MismatchedPartitions);
    }
    Ok(first)
}

/// Enumerates every interval combination of the compelled links. Each use
/// of an interval is a fresh random permutation of its P elements.
pub fn combine_compelled<R: Rng + ?Sized>(sets: &[LinkSet], rng: &mut R) -> Result<PanelSet> {
    let partition = shared_partition(sets)?;
    let (j, p) = (partition.intervals, partition.points);
    let blocks = j.pow(sets.len() as u32);
    let lengths = partition.lengths();
    let mut weights = Vec::with_capacity(blocks);
    let mut amplitudes = vec![0.0; blocks * p];
    let mut scratch = vec![0.0; p];
    for b in 0..blocks {
        let out = &mut amplitudes[b * p..(b + 1) * p];
        let mut rest = b;
        let mut weight = 1.0;
        for set in sets {
            let interval = rest % j;
            rest /= j;
            weight *= lengths[interval];
            scratch.copy_from_slice(set.interval(interval));
            scratch.shuffle(rng);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += s;
            }
        }
        weights.push(weight);
    }
    let total = compensated_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Ok(PanelSet {
        partition,
        compelled: sets.len(),
        weights,
        amplitudes,
    })
}

/// Adds every non-compelled link into each block: one interval drawn from
/// the loaded probabilities, permuted, summed element-wise. Weights are
/// unchanged.
pub fn add_noncompelled<R: Rng + ?Sized>(
    mut panel: PanelSet,
    sets: &[LinkSet],
    loaded_intervals: usize,
    rng: &mut R,
) -> Result<PanelSet> {
    if sets.is_empty() {
        return Ok(panel);
    }
    let partition = shared_partition(sets)?;
    if partition != panel.partition {
        return Err(Error::MismatchedPartitions);
    }
    if loaded_intervals == 0 || loaded_intervals > partition.intervals {
        return Err(Error::McpConfig(format!(
            "interval cutoff {loaded_intervals} outside 1..={}",
            partition.intervals
        )));
    }
    let draw =
        WeightedIndex::new(&loaded_probabilities(&partition, loaded_intervals)[..loaded_intervals])
            .map_err(|e| Error::McpConfig(e.to_string()))?;
    let p = partition.points;
    let mut scratch = vec![0.0; p];
    for out in panel.amplitudes.chunks_exact_mut(p) {
        for set in sets {
            scratch.copy_from_slice(set.interval(draw.sample(rng)));
            scratch.shuffle(rng);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += s;
            }
        }
    }
    Ok(panel)
}

/// Log-binned histogram of a weighted sample with explicit tail masses.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedHistogram {
    ln_lo: f64,
    ln_step: f64,
    masses: Vec<f64>,
    underflow: f64,
    overflow: f64,
}

impl WeightedHistogram {
    /// Empty histogram with `bins` log-spaced bins on `[lo, hi)`.
    pub fn log_spaced(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || bins == 0 {
            return Err(Error::InvalidParameter {
                name: "histogram range",
                value: lo,
                reason: "needs 0 < lo < hi < inf and at least one bin",
            });
        }
        let ln_lo = lo.ln();
        Ok(Self {
            ln_lo,
            ln_step: (hi.ln() - ln_lo) / bins as f64,
            masses: vec![0.0; bins],
            underflow: 0.0,
            overflow: 0.0,
        })
    }

    /// Empty histogram spanning the `q_lo` to `q_hi` weighted quantiles of
    /// `samples`.
    pub fn spanning<I>(samples: I, bins: usize, q_lo: f64, q_hi: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pairs: Vec<(f64, f64)> = samples.into_iter().filter(|(_, w)| *w > 0.0).collect();
        if pairs.is_empty() {
            return Err(Error::McpConfig(
                "histogram needs at least one weighted sample".into(),
            ));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = compensated_sum(pairs.iter().map(|(_, w)| *w));
        let quantile = |q: f64| {
            let mut cum = 0.0;
            for (x, w) in &pairs {
                cum += w / total;
                if cum >= q {
                    return *x;
                }
            }
            pairs[pairs.len() - 1].0
        };
        let positive_floor = pairs
            .iter()
            .map(|(x, _)| *x)
            .find(|x| *x > 0.0)
            .unwrap_or(f64::MIN_POSITIVE);
        let lo = quantile(q_lo).max(positive_floor);
        let mut hi = quantile(q_hi);
        if hi <= lo {
            hi = lo * (1.0 + 1e-9);
        }
        Self::log_spaced(lo, hi, bins)
    }

    pub fn add(&mut self, x: f64, weight: f64) {
        let pos = (x.ln() - self.ln_lo) / self.ln_step;
        if pos.is_nan() || pos < 0.0 {
            self.underflow += weight;
        } else if pos >= self.masses.len() as f64 {
            self.overflow += weight;
        } else {
            self.masses[pos as usize] += weight;
        }
    }

    /// Adds masses of a histogram with identical bins.
    pub fn merge(&mut self, other: &Self) {
        debug_assert_eq!(self.masses.len(), other.masses.len());
        for (a, b) in self.masses.iter_mut().zip(&other.masses) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }

    fn cleared(&self) -> Self {
        Self {
            masses: vec![0.0; self.masses.len()],
            underflow: 0.0,
            overflow: 0.0,
            ..*self
        }
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    /// `bins + 1` bin edges.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.masses.len())
            .map(|k| (self.ln_lo + k as f64 * self.ln_step).exp())
            .collect()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Mass below the first edge.
    pub fn underflow(&self) -> f64 {
        self.underflow
    }

    /// Mass at or above the last edge.
    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn total_mass(&self) -> f64 {
        self.underflow + self.overflow + compensated_sum(self.masses.iter().copied())
    }

    /// Mass divided by bin width.
    pub fn densities(&self) -> Vec<f64> {
        let edges = self.edges();
        self.masses
            .iter()
            .zip(edges.windows(2))
            .map(|(m, e)| m / (e[1] - e[0]))
            .collect()
    }

    /// Cumulative mass at every bin edge.
    pub fn cdf_at_edges(&self) -> Vec<(f64, f64)> {
        let mut cum = self.underflow;
        let edges = self.edges();
        let mut out = Vec::with_capacity(edges.len());
        out.push((edges[0], cum));
        for (m, e) in self.masses.iter().zip(&edges[1..]) {
            cum += m;
            out.push((*e, cum));
        }
        out
    }

    /// Largest absolute gap between the histogram cdf and `cdf` over the
    /// bin edges.
    pub fn sup_distance<F: FnMut(f64) -> f64>(&self, mut cdf: F) -> f64 {
        self.cdf_at_edges()
            .into_iter()
            .map(|(x, c)| (cdf(x) - c).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct McpResult {
    /// Panel set of the final iteration.
    pub panel: PanelSet,
    /// Histogram pooled over all iterations, each weighted 1/iterations.
    pub histogram: WeightedHistogram,
    /// Weighted mean averaged over iterations.
    pub mean: f64,
    /// Σλₙ.
    pub exact_mean: f64,
    pub iterations: usize,
}

impl McpResult {
    /// Relative deviation of the mean from Σλₙ.
    pub fn deviation(&self) -> f64 {
        self.mean / self.exact_mean - 1.0
    }

    /// Fails with [`Error::McpDivergence`] when the mean ends more than 2%
    /// from Σλₙ.
    pub fn check(&self) -> Result<()> {
        let deviation = self.deviation();
        if deviation.abs() > MAX_DEVIATION {
            return Err(Error::McpDivergence {
                mean: self.mean,
                exact: self.exact_mean,
                deviation: 100.0 * deviation,
            });
        }
        Ok(())
    }
}

/// Scaled link sets for a scenario: compelled links first.
pub fn link_sets(
    scenario: &Scenario,
    set: &TypicalSet,
    config: &McpConfig,
) -> Result<(Vec<LinkSet>, Vec<LinkSet>)> {
    let lambdas = scenario.lambdas();
    config.validate(lambdas.len())?;
    if set.partition() != config.partition {
        return Err(Error::MismatchedPartitions);
    }
    if (set.sigma_db() - scenario.params().sigma_db()).abs() > 1e-12 {
        return Err(Error::McpConfig(format!(
            "typical set built for sigma_dB = {} but scenario uses {}",
            set.sigma_db(),
            scenario.params().sigma_db()
        )));
    }
    let m = config.compelled;
    let factors = if m == lambdas.len() {
        CorrectionFactors::IDENTITY
    } else {
        let alpha = loading_factor(&config.partition, config.loaded_intervals);
        correction_factors(&lambdas, m, alpha)?
    };
    let compelled = lambdas[..m]
        .iter()
        .map(|l| LinkSet::compelled(set, *l, factors, config.loaded_intervals))
        .collect();
    let rest = lambdas[m..]
        .iter()
        .map(|l| LinkSet::weighted(set, *l))
        .collect();
    Ok((compelled, rest))
}

/// One full pass: compelled enumeration followed by non-compelled draws.
/// Depends only on the seed and the iteration index.
pub fn mcp_iteration(
    compelled: &[LinkSet],
    rest: &[LinkSet],
    config: &McpConfig,
    iteration: usize,
) -> Result<PanelSet> {
    let mut rng = rng::stream(config.seed, iteration as u64);
    let panel = combine_compelled(compelled, &mut rng)?;
    add_noncompelled(panel, rest, config.loaded_intervals, &mut rng)
}

struct Partial {
    histogram: WeightedHistogram,
    mean: CompensatedSum,
}

fn run_chunk(
    compelled: &[LinkSet],
    rest: &[LinkSet],
    config: &McpConfig,
    template: &WeightedHistogram,
    chunk: usize,
) -> Result<Partial> {
    let mut partial = Partial {
        histogram: template.cleared(),
        mean: CompensatedSum::new(),
    };
    let scale = 1.0 / config.iterations as f64;
    let end = ((chunk + 1) * CHUNK).min(config.iterations);
    for it in chunk * CHUNK..end {
        let panel = mcp_iteration(compelled, rest, config, it)?;
        partial.mean.add(panel.weighted_mean() * scale);
        let p = panel.partition.points as f64;
        for (b, w) in panel.weights.iter().enumerate() {
            let mass = w / p * scale;
            for x in panel.block(b) {
                partial.histogram.add(*x, mass);
            }
        }
    }
    Ok(partial)
}

/// Runs `config.iterations` independent passes and pools their weighted
/// samples into one histogram and one mean.
///
/// Iterations are grouped into fixed chunks merged in order, so serial and
/// parallel runs give bit-identical results. Convergence is reported by
/// [`McpResult::check`].
pub fn run_mcp(scenario: &Scenario, set: &TypicalSet, config: &McpConfig) -> Result<McpResult> {
    let (compelled, rest) = link_sets(scenario, set, config)?;
    let first = mcp_iteration(&compelled, &rest, config, 0)?;
    let template = WeightedHistogram::spanning(
        first.iter(),
        config.histogram_bins,
        config.histogram_range.0,
        config.histogram_range.1,
    )?;

    let chunks = config.iterations.div_ceil(CHUNK);
    let work = |c| run_chunk(&compelled, &rest, config, &template, c);
    let partials: Vec<Partial> = if config.parallel {
        (0..chunks)
            .into_par_iter()
            .map(work)
            .collect::<Result<_>>()?
    } else {
        (0..chunks).map(work).collect::<Result<_>>()?
    };

    let mut histogram = template.cleared();
    let mut mean = CompensatedSum::new();
    for part in &partials {
        histogram.merge(&part.histogram);
        mean.merge(&part.mean);
    }
    let panel = if config.iterations == 1 {
        first
    } else {
        mcp_iteration(&compelled, &rest, config, config.iterations - 1)?
    };
    let result = McpResult {
        panel,
        histogram,
        mean: mean.value(),
        exact_mean: scenario.mean_gain(),
        iterations: config.iterations,
    };
    log::info!(
        "MCP: {} iterations, mean {:.6} vs exact {:.6} ({:+.3}%)",
        config.iterations,
        result.mean,
        result.exact_mean,
        100.0 * result.deviation()
    );
    if result.check().is_err() {
        log::warn!("MCP mean has not converged to within 2% of the exact mean");
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::multi_moment;
    use crate::geometry::ReusePattern;
    use crate::typical_set::build_typical_set;

    const FR1: [f64; 18] = [
        6.467, 3.588, 1.708, 1.069, 0.767, 0.663, 0.568, 0.426, 0.316, 0.307, 0.260, 0.219, 0.188,
        0.178, 0.158, 0.145, 0.118, 0.107,
    ];

    fn canonical_alpha() -> f64 {
        loading_factor(&PartitionSpec::default(), 3)
    }

    #[test]
    fn loading_factor_matches_closed_form() {
        assert!((canonical_alpha() - 1.0 / (1.0 - 1e-3)).abs() < 1e-15);
        let p = loaded_probabilities(&PartitionSpec::default(), 3);
        assert!((compensated_sum(p.iter().copied()) - 1.0).abs() < 1e-15);
        assert!(p[3..].iter().all(|x| *x == 0.0));
        let full = PartitionSpec::new(4, 10).unwrap();
        assert_eq!(loading_factor(&full, 4), 1.0);
    }

    #[test]
    fn fr1_correction_factors() {
        let f = correction_factors(&FR1, 2, canonical_alpha()).unwrap();
        let ratio = 7.197 / 10.055;
        assert!((f.plus - (1.0 + ratio)).abs() < 1e-3);
        assert!((f.plus - 1.7158).abs() < 1e-3);
        assert!((f.minus - 0.99928).abs() < 1e-5);
    }

    #[test]
    fn fr3_correction_factor() {
        let lambdas = Scenario::standard(ReusePattern::FR3, 0.0)
            .unwrap()
            .lambdas();
        let f = correction_factors(&lambdas, 2, canonical_alpha()).unwrap();
        assert!((f.plus - 1.868).abs() < 5e-3, "{}", f.plus);
    }

    #[test]
    fn vanishing_tail_gives_identity_factors() {
        let f = correction_factors(&[2.0, 1.0, 1e-300], 2, canonical_alpha()).unwrap();
        assert!((f.plus - 1.0).abs() < 1e-15 && (f.minus - 1.0).abs() < 1e-15);
        assert!(correction_factors(&[1.0, 1.0], 2, 1.0).is_err());
        assert!(correction_factors(&[0.0, 1.0], 1, 1.0).is_err());
    }

    #[test]
    fn two_interval_two_link_weights() {
        let spec = PartitionSpec {
            intervals: 2,
            points: 2,
        };
        let a = LinkSet::new(spec, vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let b = LinkSet::new(spec, vec![100.0, 200.0, 1000.0, 2000.0]).unwrap();
        let panel = combine_compelled(&[a, b], &mut rng::stream(1, 0)).unwrap();
        let w = panel.weights();
        let expected = [0.81, 0.09, 0.09, 0.01];
        for (x, e) in w.iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }
        assert_eq!(panel.combo(1), vec![1, 0]);
        assert_eq!(panel.combo(2), vec![0, 1]);
        // each block holds one of the two pairings of its intervals
        for b in 0..4 {
            let combo = panel.combo(b);
            let mut block = panel.block(b).to_vec();
            block.sort_by(f64::total_cmp);
            let lo = [1.0, 10.0][combo[0]];
            let hi = [100.0, 1000.0][combo[1]];
            let straight = [lo + hi, 2.0 * (lo + hi)];
            let crossed = [lo + 2.0 * hi, 2.0 * lo + hi];
            let mut crossed_sorted = crossed;
            crossed_sorted.sort_by(f64::total_cmp);
            assert!(block == straight || block == crossed_sorted, "{block:?}");
        }
    }

    #[test]
    fn single_point_blocks_are_interval_sums() {
        let spec = PartitionSpec::new(3, 1).unwrap();
        let a = LinkSet::new(spec, vec![1.0, 2.0, 3.0]).unwrap();
        let b = LinkSet::new(spec, vec![10.0, 20.0, 30.0]).unwrap();
        let panel = combine_compelled(&[a, b], &mut rng::stream(3, 0)).unwrap();
        for blk in 0..9 {
            let c = panel.combo(blk);
            assert_eq!(
                panel.block(blk),
                &[(c[0] + 1) as f64 + 10.0 * (c[1] + 1) as f64]
            );
        }
    }

    #[test]
    fn mismatched_partitions_are_rejected() {
        let a = LinkSet::new(PartitionSpec::new(2, 2).unwrap(), vec![1.0; 4]).unwrap();
        let b = LinkSet::new(PartitionSpec::new(1, 4).unwrap(), vec![1.0; 4]).unwrap();
        assert!(matches!(
            combine_compelled(&[a, b], &mut rng::stream(0, 0)),
            Err(Error::MismatchedPartitions)
        ));
        assert!(LinkSet::new(PartitionSpec::new(2, 2).unwrap(), vec![1.0; 3]).is_err());
    }

    #[test]
    fn single_compelled_link_mean() {
        let spec = PartitionSpec::new(6, 50).unwrap();
        let set = build_typical_set(4.0, spec).unwrap();
        let lambdas = [3.0, 1.0, 0.5];
        let alpha = loading_factor(&spec, 3);
        let f = correction_factors(&lambdas, 1, alpha).unwrap();
        let link = LinkSet::compelled(&set, lambdas[0], f, 3);
        let panel = combine_compelled(&[link], &mut rng::stream(5, 0)).unwrap();
        let a: f64 = (0..3).map(|j| spec.length(j) * set.interval_mean(j)).sum();
        let b: f64 = (3..6).map(|j| spec.length(j) * set.interval_mean(j)).sum();
        let expected = lambdas[0] * (a * f.minus + b * f.plus);
        assert!((panel.weighted_mean() / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_support_draws_follow_interval_lengths() {
        let spec = PartitionSpec::new(3, 1).unwrap();
        let p = loaded_probabilities(&spec, 3);
        for (x, d) in p.iter().zip(spec.lengths()) {
            assert!((x - d).abs() < 1e-15);
        }
        // the drawn interval is identified by its single amplitude
        let link = LinkSet::new(spec, vec![0.0, 1.0, 2.0]).unwrap();
        let base = LinkSet::new(PartitionSpec::new(1, 1).unwrap(), vec![0.0]).unwrap();
        let n = 200_000;
        let mut counts = [0usize; 3];
        let mut r = rng::stream(9, 0);
        for _ in 0..n {
            let mut panel = combine_compelled(std::slice::from_ref(&base), &mut r).unwrap();
            panel.partition = spec;
            let out = add_noncompelled(panel, std::slice::from_ref(&link), 3, &mut r).unwrap();
            counts[out.amplitudes()[0] as usize] += 1;
        }
        for (c, d) in counts.iter().zip(spec.lengths()) {
            let se = (d * (1.0 - d) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - d).abs() < 5.0 * se + 1e-12);
        }
    }

    #[test]
    fn noncompelled_mean_matches_linearity() {
        let spec = PartitionSpec::new(5, 20).unwrap();
        let set = build_typical_set(6.0, spec).unwrap();
        let lambda = 0.7;
        let link = LinkSet::weighted(&set, lambda);
        let base = LinkSet::new(spec, vec![0.0; spec.len()]).unwrap();
        let mut r = rng::stream(21, 0);
        let mut acc = CompensatedSum::new();
        let mut blocks = 0;
        while blocks < 100_000 {
            let panel = combine_compelled(std::slice::from_ref(&base), &mut r).unwrap();
            let panel = add_noncompelled(panel, std::slice::from_ref(&link), 3, &mut r).unwrap();
            for b in 0..panel.block_count() {
                acc.add(compensated_sum(panel.block(b).iter().copied()) / spec.points as f64);
                blocks += 1;
            }
        }
        let alpha = loading_factor(&spec, 3);
        let expected: f64 = lambda
            * alpha
            * (0..3)
                .map(|j| spec.length(j) * set.interval_mean(j))
                .sum::<f64>();
        assert!((acc.value() / blocks as f64 / expected - 1.0).abs() < 5e-3);
    }

    #[test]
    fn histogram_bookkeeping() {
        let mut h = WeightedHistogram::log_spaced(1.0, 100.0, 2).unwrap();
        for (x, w) in [(0.5, 0.1), (2.0, 0.2), (50.0, 0.3), (100.0, 0.4)] {
            h.add(x, w);
        }
        assert_eq!(h.masses(), &[0.2, 0.3]);
        assert_eq!(h.underflow(), 0.1);
        assert_eq!(h.overflow(), 0.4);
        assert!((h.total_mass() - 1.0).abs() < 1e-15);
        let e = h.edges();
        assert!((e[1] - 10.0).abs() < 1e-12);
        let cdf = h.cdf_at_edges();
        assert!((cdf[2].1 - 0.6).abs() < 1e-15);
        assert!(WeightedHistogram::log_spaced(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn toy_all_compelled_moments_match_enumeration() {
        let scenario = Scenario::standard(ReusePattern::FR1, 6.0)
            .unwrap()
            .restricted_to(&[0, 1])
            .unwrap();
        let spec = PartitionSpec::new(25, 40).unwrap();
        let set = build_typical_set(6.0, spec).unwrap();
        let config = McpConfig {
            compelled: 2,
            loaded_intervals: 25,
            iterations: 4,
            partition: spec,
            ..McpConfig::default()
        };
        let result = run_mcp(&scenario, &set, &config).unwrap();
        let lambdas = scenario.lambdas();
        for k in 1..=2 {
            let exact = multi_moment(k, &lambdas, 6.0).unwrap();
            let got = result.panel.weighted_moment(k as i32);
            assert!((got / exact - 1.0).abs() < 0.02, "k={k}: {got} vs {exact}");
        }
        assert!((result.histogram.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn serial_and_parallel_runs_agree_bitwise() {
        let scenario = Scenario::standard(ReusePattern::FR3, 3.0).unwrap();
        let spec = PartitionSpec::new(8, 30).unwrap();
        let set = build_typical_set(3.0, spec).unwrap();
        let config = McpConfig {
            iterations: 20,
            partition: spec,
            ..McpConfig::default()
        };
        let par = run_mcp(&scenario, &set, &config).unwrap();
        let ser = run_mcp(
            &scenario,
            &set,
            &McpConfig {
                parallel: false,
                ..config
            },
        )
        .unwrap();
        assert_eq!(par.mean.to_bits(), ser.mean.to_bits());
        assert_eq!(par.histogram, ser.histogram);
        assert_eq!(par.panel, ser.panel);
        assert!(par.panel.amplitudes().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn config_validation() {
        let c = McpConfig::default();
        assert!(c.validate(18).is_ok());
        assert!(c.validate(1).is_err());
        assert!(McpConfig {
            loaded_intervals: 0,
            ..c
        }
        .validate(18)
        .is_err());
        assert!(McpConfig { compelled: 4, ..c }.validate(18).is_err());
        assert!(McpConfig { iterations: 0, ..c }.validate(18).is_err());
    }
}
