//! Channel gain model: normalized path loss × Rayleigh fading × lognormal
//! shadowing, and the position-averaged path loss λₙ of each interferer.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{positive, Error, Result};
use crate::geometry::{build_layout, sector_samples, NetworkLayout, ReusePattern, SectorScheme};

/// dB ↔ neper conversion constant ξ = 10 / ln 10.
pub const XI: f64 = 10.0 / std::f64::consts::LN_10;

/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default operating frequency (Hz).
pub const DEFAULT_FREQUENCY_HZ: f64 = 1.0e9;
/// Default antenna far-field distance d₀ (m).
pub const DEFAULT_FAR_FIELD_M: f64 = 10.0;
/// Default cell radius (m).
pub const DEFAULT_CELL_RADIUS_M: f64 = 700.0;
/// Default path-loss exponent.
pub const DEFAULT_GAMMA: f64 = 3.2;
/// Default normalization distance as a multiple of the cell radius.
pub const DEFAULT_DREF_MULTIPLIER: f64 = 2.0;

/// Relative convergence target for the λ quadrature.
pub const LAMBDA_REL_TOL: f64 = 1e-4;

/// Path-loss exponent, normalization distance and shadowing spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    gamma: f64,
    d_ref: f64,
    sigma_db: f64,
}

impl PropagationParams {
    pub fn new(gamma: f64, d_ref: f64, sigma_db: f64) -> Result<Self> {
        if !(gamma > 2.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "path-loss exponent must exceed 2",
            });
        }
        positive("d_ref", d_ref)?;
        if !(0.0..=12.0).contains(&sigma_db) {
            return Err(Error::InvalidParameter {
                name: "sigma_dB",
                value: sigma_db,
                reason: "shadowing spread must lie in [0, 12] dB",
            });
        }
        Ok(Self {
            gamma,
            d_ref,
            sigma_db,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn d_ref(&self) -> f64 {
        self.d_ref
    }

    pub fn sigma_db(&self) -> f64 {
        self.sigma_db
    }

    /// μ_dB = −σ_dB² / (2ξ), which makes the shadowing gain unit-mean.
    pub fn mu_db(&self) -> f64 {
        -self.sigma_db * self.sigma_db / (2.0 * XI)
    }

    /// Natural-log standard deviation σ = σ_dB / ξ.
    pub fn sigma_nat(&self) -> f64 {
        self.sigma_db / XI
    }

    pub fn with_sigma_db(&self, sigma_db: f64) -> Result<Self> {
        Self::new(self.gamma, self.d_ref, sigma_db)
    }
}

/// Dimensional constant K = (c / (4π f d₀))² of the unnormalized path loss.
/// It cancels out of every normalized quantity and is provided for reference.
pub fn free_space_constant(frequency_hz: f64, far_field_m: f64) -> f64 {
    (SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * frequency_hz * far_field_m)).powi(2)
}

/// Normalized path loss (d_ref / r)^γ.
pub fn normalized_pathloss(params: &PropagationParams, r: f64) -> Result<f64> {
    let r = positive("distance", r)?;
    Ok((params.d_ref / r).powf(params.gamma))
}

/// Unit-mean exponential fading gain.
pub fn sample_rayleigh<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Unit-mean lognormal shadowing gain; exactly 1 when σ_dB = 0.
pub fn sample_shadowing<R: Rng + ?Sized>(params: &PropagationParams, rng: &mut R) -> f64 {
    if params.sigma_db == 0.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (params.mu_db() / XI + params.sigma_nat() * z).exp()
}

/// Quadrature outcome for one interferer's λ.
#[derive(Debug, Clone, Copy)]
pub struct LambdaEstimate {
    pub value: f64,
    pub error: f64,
    pub nodes: usize,
}

/// Averages the normalized path loss of each AP in `indices` over the
/// canonical sector, refining the centroid grid until every λ has converged
/// to `rel_tol`.
pub fn average_pathlosses(
    layout: &NetworkLayout,
    params: &PropagationParams,
    indices: &[usize],
    rel_tol: f64,
) -> Result<Vec<LambdaEstimate>> {
    for &i in indices {
        layout.ap(i)?;
    }
    let eval = |count: usize| -> Result<Vec<f64>> {
        let nodes = sector_samples(layout, SectorScheme::Grid, count)?;
        let mut sums = vec![0.0; indices.len()];
        for node in &nodes {
            let p = node.point.to_cartesian();
            for (s, &i) in sums.iter_mut().zip(indices) {
                let r = layout.distance_from(i, &p)?;
                *s += node.weight * normalized_pathloss(params, r)?;
            }
        }
        Ok(sums)
    };

    let mut n = 128usize;
    let mut coarse = eval(n * n)?;
    loop {
        let m = 2 * n;
        let fine = eval(m * m)?;
        let worst = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| (c - f).abs() / f.abs())
            .fold(0.0, f64::max);
        if worst <= rel_tol {
            return Ok(fine
                .iter()
                .zip(&coarse)
                .map(|(&f, &c)| LambdaEstimate {
                    value: f,
                    error: (f - c).abs(),
                    nodes: m * m,
                })
                .collect());
        }
        if m >= 4096 {
            let (i, (c, f)) = coarse
                .iter()
                .zip(&fine)
                .enumerate()
                .max_by(|a, b| (a.1 .0 - a.1 .1).abs().total_cmp(&(b.1 .0 - b.1 .1).abs()))
                .expect("at least one interferer");
            log::warn!("lambda quadrature for AP {} stalled", indices[i]);
            return Err(Error::Quadrature {
                estimate: *f,
                error: (c - f).abs(),
            });
        }
        n = m;
        coarse = fine;
    }
}

/// λ of a single AP.
pub fn average_pathloss(
    layout: &NetworkLayout,
    params: &PropagationParams,
    n: usize,
) -> Result<f64> {
    Ok(average_pathlosses(layout, params, &[n], LAMBDA_REL_TOL)?[0].value)
}

/// An interfering AP and its average path loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub ap_index: usize,
    pub lambda: f64,
}

/// Layout, reuse pattern, propagation parameters and the interferers ordered
/// by decreasing λ.
#[derive(Debug, Clone)]
pub struct Scenario {
    layout: NetworkLayout,
    reuse: ReusePattern,
    params: PropagationParams,
    interferers: Vec<Interferer>,
}

impl Scenario {
    pub fn new(
        layout: NetworkLayout,
        reuse: ReusePattern,
        params: PropagationParams,
    ) -> Result<Self> {
        let indices = reuse.interferer_indices(&layout);
        let lambdas = average_pathlosses(&layout, &params, &indices, LAMBDA_REL_TOL)?;
        let mut interferers: Vec<Interferer> = indices
            .iter()
            .zip(&lambdas)
            .map(|(&ap_index, est)| Interferer {
                ap_index,
                lambda: est.value,
            })
            .collect();
        interferers.sort_by(|a, b| {
            b.lambda
                .total_cmp(&a.lambda)
                .then(a.ap_index.cmp(&b.ap_index))
        });
        Ok(Self {
            layout,
            reuse,
            params,
            interferers,
        })
    }

    /// Default geometry (R = 700 m, γ = 3.2, d_ref = 2R).
    pub fn standard(reuse: ReusePattern, sigma_db: f64) -> Result<Self> {
        let layout = build_layout(DEFAULT_CELL_RADIUS_M)?;
        let params = PropagationParams::new(
            DEFAULT_GAMMA,
            DEFAULT_DREF_MULTIPLIER * DEFAULT_CELL_RADIUS_M,
            sigma_db,
        )?;
        Self::new(layout, reuse, params)
    }

    /// Same geometry with a different shadowing spread (λs are unaffected).
    pub fn with_sigma_db(&self, sigma_db: f64) -> Result<Self> {
        Ok(Self {
            params: self.params.with_sigma_db(sigma_db)?,
            ..self.clone()
        })
    }

    /// Keeps only the interferers at the given ranks (0 = strongest).
    pub fn restricted_to(&self, ranks: &[usize]) -> Result<Self> {
        let mut interferers = Vec::with_capacity(ranks.len());
        for &r in ranks {
            let i = self.interferers.get(r).ok_or(Error::IndexOutOfRange {
                index: r,
                count: self.interferers.len(),
            })?;
            interferers.push(*i);
        }
        interferers.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
        Ok(Self {
            interferers,
            ..self.clone()
        })
    }

    pub fn layout(&self) -> &NetworkLayout {
        &self.layout
    }

    pub fn reuse(&self) -> ReusePattern {
        self.reuse
    }

    pub fn params(&self) -> &PropagationParams {
        &self.params
    }

    pub fn interferers(&self) -> &[Interferer] {
        &self.interferers
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.interferers.iter().map(|i| i.lambda).collect()
    }

    /// Exact mean interference gain E{G} = Σλₙ.
    pub fn mean_gain(&self) -> f64 {
        crate::numeric::compensated_sum(self.interferers.iter().map(|i| i.lambda))
    }
}
