//! Single-interferer gain under Rayleigh fading and lognormal shadowing,
//! and its typical set built by inverting the cdf on a non-uniform
//! partition of [0, 1].
//!
//! With λ normalized to 1, G = G_f·G_s and
//!
//! ```text
//! F(x) = ∫₀^∞ Q(10·log10(u/x)/σ_dB − σ_dB/(2ξ)) e^(−u) du
//! ```
//!
//! The integral is evaluated over w = ln u, which resolves both the
//! small-gain region (u ~ x) and the heavy upper tail. Both F and S = 1 − F
//! are integrated directly, so either tail keeps full relative precision.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, gaussian_pdf, gaussian_q, CompensatedSum};
use crate::propagation::XI;
use crate::quadrature::{integrate, Tolerance};

/// Relative accuracy of every tail integral.
pub const CDF_REL_TOL: f64 = 1e-12;

/// Interval layout of the [0, 1] probability axis.
///
/// Interval `j` (1-based) spans `[1 − 10^−(j−1), 1 − 10^−j]` with length
/// `9·10^−j`; the last interval takes the remaining `10^−(J−1)` so the
/// lengths sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartitionSpec {
    pub intervals: usize,
    pub points: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            intervals: 25,
            points: 900,
        }
    }
}

impl PartitionSpec {
    pub fn new(intervals: usize, points: usize) -> Result<Self> {
        if intervals == 0 || points == 0 {
            return Err(Error::InvalidParameter {
                name: "partition",
                value: intervals.min(points) as f64,
                reason: "J and P must both be at least 1",
            });
        }
        if intervals > 300 {
            return Err(Error::InvalidParameter {
                name: "intervals",
                value: intervals as f64,
                reason: "interval probabilities underflow beyond J = 300",
            });
        }
        Ok(Self { intervals, points })
    }

    pub fn len(&self) -> usize {
        self.intervals * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length dⱼ of interval `j` (0-based).
    pub fn length(&self, j: usize) -> f64 {
        if j + 1 < self.intervals {
            9.0 / 10f64.powi(j as i32 + 1)
        } else {
            1.0 / 10f64.powi(j as i32)
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        (0..self.intervals).map(|j| self.length(j)).collect()
    }

    /// Per-element probability δⱼ = dⱼ / P.
    pub fn element_probability(&self, j: usize) -> f64 {
        self.length(j) / self.points as f64
    }

    /// Probability mass above the start of interval `j`: 10^−j.
    fn upper_mass(&self, j: usize) -> f64 {
        1.0 / 10f64.powi(j as i32)
    }

    /// Target tail probability of element `i` of interval `j`: the midpoint
    /// of its equal-probability sub-cell.
    pub fn target(&self, j: usize, i: usize) -> TailProbability {
        let offset = (i as f64 + 0.5) * self.element_probability(j);
        let upper = self.upper_mass(j) - offset;
        if upper < 0.5 {
            TailProbability::Upper(upper)
        } else {
            TailProbability::Lower(1.0 - self.upper_mass(j) + offset)
        }
    }
}

/// A probability expressed on whichever side keeps precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailProbability {
    /// P(G ≤ x) = p
    Lower(f64),
    /// P(G > x) = s
    Upper(f64),
}

impl TailProbability {
    pub fn lower(&self) -> f64 {
        match *self {
            TailProbability::Lower(p) => p,
            TailProbability::Upper(s) => 1.0 - s,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            TailProbability::Lower(p) => 1.0 - p,
            TailProbability::Upper(s) => s,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            TailProbability::Lower(p) | TailProbability::Upper(p) => p,
        }
    }
}

/// Law of G_f·G_s for one unit-λ interferer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowedRayleigh {
    sigma_db: f64,
}

impl ShadowedRayleigh {
    pub fn new(sigma_db: f64) -> Result<Self> {
        if !(sigma_db >= 0.0 && sigma_db.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma_dB",
                value: sigma_db,
                reason: "must be finite and non-negative",
            });
        }
        Ok(Self { sigma_db })
    }

    pub fn sigma_db(&self) -> f64 {
        self.sigma_db
    }

    fn sigma(&self) -> f64 {
        self.sigma_db / XI
    }

    fn tolerance() -> Tolerance {
        Tolerance {
            abs: 1e-300,
            rel: CDF_REL_TOL,
            max_panels: 4000,
        }
    }

    /// Integrates `h(z(w)) · exp(w − eʷ)` over w = ln u, where
    /// `z = (w − ln x)/σ − σ/2`. The weight is the density of ln u for
    /// u ~ Exp(1); above w = 6.7 it underflows and below `w_lo` its mass is
    /// under 1e-17 of any tail integral evaluated here.
    fn log_integral(&self, x: f64, h: impl Fn(f64) -> f64) -> Result<f64> {
        let ln_x = x.ln();
        let sigma = self.sigma();
        let w_hi = 6.7;
        let w_lo = ln_x.min(0.0) - 40.0;
        let centre = ln_x + 0.5 * sigma * sigma;
        let mut cuts: Vec<f64> = (0..)
            .map(|k| w_lo + 4.0 * k as f64)
            .take_while(|w| *w < w_hi)
            .collect();
        cuts.extend([0.0, centre, centre - 2.0 * sigma, centre + 2.0 * sigma]);
        let r = integrate(
            |w| {
                let z = (w - ln_x) / sigma - 0.5 * sigma;
                h(z) * (w - w.exp()).exp()
            },
            w_lo,
            w_hi,
            &cuts,
            Self::tolerance(),
        )?;
        Ok(r.value)
    }

    fn check_x(x: f64) -> Result<()> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "x",
                value: x,
                reason: "gain must be positive and finite",
            })
        }
    }

    /// P(G ≤ x).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        Self::check_x(x)?;
        if self.sigma_db == 0.0 {
            return Ok(-(-x).exp_m1());
        }
        let f = self.lower_integral(x)?;
        if f < 0.5 {
            Ok(f)
        } else {
            Ok(1.0 - self.upper_integral(x)?)
        }
    }

    /// P(G > x).
    pub fn survival(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(1.0);
        }
        Self::check_x(x)?;
        if self.sigma_db == 0.0 {
            return Ok((-x).exp());
        }
        let s = self.upper_integral(x)?;
        if s < 0.5 {
            Ok(s)
        } else {
            Ok(1.0 - self.lower_integral(x)?)
        }
    }

    /// Density of G.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        if self.sigma_db == 0.0 {
            return Ok((-x).exp());
        }
        Ok(self.log_integral(x, gaussian_pdf)? / (self.sigma() * x))
    }

    fn lower_integral(&self, x: f64) -> Result<f64> {
        self.log_integral(x, gaussian_q)
    }

    fn upper_integral(&self, x: f64) -> Result<f64> {
        self.log_integral(x, |z| gaussian_q(-z))
    }

    /// Probability on the requested side together with the density.
    fn side(&self, x: f64, target: &TailProbability) -> Result<f64> {
        match target {
            TailProbability::Lower(_) => {
                if self.sigma_db == 0.0 {
                    Ok(-(-x).exp_m1())
                } else {
                    self.lower_integral(x)
                }
            }
            TailProbability::Upper(_) => self.survival(x),
        }
    }

    /// Generalized inverse: x with P(G ≤ x) = p (or P(G > x) = s).
    pub fn quantile(&self, target: TailProbability) -> Result<f64> {
        self.quantile_from(target, None)
    }

    /// Quantile with an optional starting guess for the search.
    pub fn quantile_from(&self, target: TailProbability, guess: Option<f64>) -> Result<f64> {
        let t = target.value();
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidParameter {
                name: "probability",
                value: target.lower(),
                reason: "must lie strictly inside (0, 1)",
            });
        }
        if self.sigma_db == 0.0 {
            return Ok(match target {
                TailProbability::Lower(p) => -(-p).ln_1p(),
                TailProbability::Upper(s) => -s.ln(),
            });
        }

        let ln_target = t.ln();
        let increasing = matches!(target, TailProbability::Lower(_));
        // h(τ) increases with τ = ln x and vanishes at the quantile.
        let h = |tau: f64| -> Result<f64> {
            let prob = self.side(tau.exp(), &target)?;
            let d = prob.ln() - ln_target;
            Ok(if increasing { d } else { -d })
        };

        let start = guess
            .filter(|g| *g > 0.0 && g.is_finite())
            .map(f64::ln)
            .unwrap_or_else(|| {
                let exp_quantile = match target {
                    TailProbability::Lower(p) => -(-p).ln_1p(),
                    TailProbability::Upper(s) => -s.ln(),
                };
                exp_quantile.ln()
            });

        // log-space bracketing
        let mut tau = start;
        let mut h_tau = h(tau)?;
        let (mut lo, mut hi);
        if h_tau == 0.0 {
            return Ok(tau.exp());
        }
        let mut step = 0.25;
        if h_tau < 0.0 {
            lo = tau;
            loop {
                hi = lo + step;
                let h_hi = h(hi)?;
                if h_hi >= 0.0 || !h_hi.is_finite() {
                    break;
                }
                lo = hi;
                step *= 2.0;
                if hi > 750.0 {
                    return Err(Error::Inversion {
                        target: t,
                        residual: h_hi,
                    });
                }
            }
        } else {
            hi = tau;
            loop {
                lo = hi - step;
                let h_lo = h(lo)?;
                if h_lo <= 0.0 {
                    break;
                }
                hi = lo;
                step *= 2.0;
                if lo < -750.0 {
                    return Err(Error::Inversion {
                        target: t,
                        residual: h_lo,
                    });
                }
            }
        }

        // safeguarded Newton on τ
        tau = tau.clamp(lo, hi);
        h_tau = h(tau)?;
        for _ in 0..200 {
            if h_tau == 0.0 {
                return Ok(tau.exp());
            }
            if h_tau < 0.0 {
                lo = tau;
            } else {
                hi = tau;
            }
            let x = tau.exp();
            let prob = self.side(x, &target)?;
            let slope = x * self.pdf(x)? / prob;
            let mut next = tau - h_tau / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let delta = (next - tau).abs();
            tau = next;
            h_tau = h(tau)?;
            if delta < 1e-13 || h_tau.abs() < 1e-13 || hi - lo < 1e-14 {
                return Ok(tau.exp());
            }
        }
        Err(Error::Inversion {
            target: t,
            residual: h_tau,
        })
    }
}

/// P(G ≤ x) for a unit-λ interferer (σ_dB = 0 gives 1 − e^−x).
pub fn single_cdf(sigma_db: f64, x: f64) -> Result<f64> {
    ShadowedRayleigh::new(sigma_db)?.cdf(x)
}

/// Quantile at lower-tail probability `p`.
pub fn invert_cdf(sigma_db: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "must lie strictly inside (0, 1)",
        });
    }
    let target = if p > 0.5 {
        TailProbability::Upper(1.0 - p)
    } else {
        TailProbability::Lower(p)
    };
    ShadowedRayleigh::new(sigma_db)?.quantile(target)
}

/// Weighted ensemble of ℓ = J·P gains representing the unit-λ law.
#[derive(Debug, Clone, PartialEq)]
pub struct TypicalSet {
    sigma_db: f64,
    partition: PartitionSpec,
    amplitudes: Vec<f64>,
}

impl TypicalSet {
    pub(crate) fn from_parts(
        sigma_db: f64,
        partition: PartitionSpec,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        if amplitudes.len() != partition.len() {
            return Err(Error::Cache(format!(
                "expected {} amplitudes, found {}",
                partition.len(),
                amplitudes.len()
            )));
        }
        Ok(Self {
            sigma_db,
            partition,
            amplitudes,
        })
    }

    pub fn sigma_db(&self) -> f64 {
        self.sigma_db
    }

    pub fn partition(&self) -> PartitionSpec {
        self.partition
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// The P amplitudes of interval `j` (0-based).
    pub fn interval(&self, j: usize) -> &[f64] {
        let p = self.partition.points;
        &self.amplitudes[j * p..(j + 1) * p]
    }

    /// Per-element probabilities, interval by interval.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.partition.intervals)
            .flat_map(|j| {
                std::iter::repeat_n(self.partition.element_probability(j), self.partition.points)
            })
            .collect()
    }

    /// Σ δⱼ · xᵏ over the set.
    pub fn weighted_moment(&self, k: i32) -> f64 {
        let mut acc = CompensatedSum::new();
        for j in 0..self.partition.intervals {
            let inner = compensated_sum(self.interval(j).iter().map(|x| x.powi(k)));
            acc.add(self.partition.element_probability(j) * inner);
        }
        acc.value()
    }

    /// Probability-weighted mean of interval `j`.
    pub fn interval_mean(&self, j: usize) -> f64 {
        compensated_sum(self.interval(j).iter().copied()) / self.partition.points as f64
    }
}

/// Inverts the cdf at the midpoint of every probability sub-cell.
///
/// Intervals are processed in parallel; inside an interval each inversion is
/// warm-started from its predecessor, so the result does not depend on
/// scheduling.
pub fn build_typical_set(sigma_db: f64, partition: PartitionSpec) -> Result<TypicalSet> {
    let law = ShadowedRayleigh::new(sigma_db)?;
    let blocks: Vec<Vec<f64>> = (0..partition.intervals)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::with_capacity(partition.points);
            let mut guess = None;
            for i in 0..partition.points {
                let x = law.quantile_from(partition.target(j, i), guess)?;
                out.push(x);
                guess = Some(x);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let amplitudes = blocks.into_iter().flatten().collect();
    TypicalSet::from_parts(sigma_db, partition, amplitudes)
}
