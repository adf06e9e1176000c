//! Truncated four-parameter Burr-XII surrogate for the total interference
//! gain, with parameters given by empirical laws in σ_dB.
//!
//! ```text
//! F(x) = (1 − (1 + (x/β)^α)^(−k))^η
//! ```
//!
//! The model is truncated at x_t and renormalized by A = 1/F(x_t).

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ReusePattern;
use crate::quadrature::{integrate, Tolerance};

/// σ_dB range the empirical laws were fitted on.
pub const SIGMA_RANGE_DB: (f64, f64) = (0.0, 12.0);

/// Shape and scale parameters of the untruncated law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurrParams {
    pub eta: f64,
    pub alpha: f64,
    pub k: f64,
    pub beta: f64,
}

impl BurrParams {
    pub fn new(eta: f64, alpha: f64, k: f64, beta: f64) -> Result<Self> {
        for (name, value) in [("eta", eta), ("alpha", alpha), ("k", k), ("beta", beta)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "Burr parameters must be positive and finite",
                });
            }
        }
        Ok(Self {
            eta,
            alpha,
            k,
            beta,
        })
    }

    /// ln(1 + (x/β)^α)
    fn log_base(&self, x: f64) -> f64 {
        (x / self.beta).powf(self.alpha).ln_1p()
    }

    /// Untruncated cdf.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        let inner = -(-self.k * self.log_base(x)).exp_m1();
        (self.eta * inner.ln()).exp()
    }

    /// Untruncated 1 − F(x), accurate in the upper tail.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let e = -self.k * self.log_base(x);
        // ln F^(1/η) = ln(1 − s), from whichever of s, 1 − s is not near 1
        let s = e.exp();
        let ln_inner = if s > 0.5 {
            (-e.exp_m1()).ln()
        } else {
            (-s).ln_1p()
        };
        -(self.eta * ln_inner).exp_m1()
    }

    /// Untruncated density.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x == f64::INFINITY {
            return 0.0;
        }
        let order = self.alpha * self.eta;
        if x == 0.0 {
            return if order > 1.0 {
                0.0
            } else if order < 1.0 {
                f64::INFINITY
            } else {
                self.eta * self.alpha * self.k.powf(self.eta) / self.beta
            };
        }
        let lb = self.log_base(x);
        let ln_p = (self.eta * self.alpha * self.k / self.beta).ln()
            + (self.alpha - 1.0) * (x / self.beta).ln()
            + (self.eta - 1.0) * (self.k * lb).exp_m1().ln()
            - (self.k * self.eta + 1.0) * lb;
        ln_p.exp()
    }

    /// Inverse of the untruncated cdf for u in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        let w = (u.ln() / self.eta).exp();
        let t = (-(-w).ln_1p() / self.k).exp_m1();
        self.beta * t.powf(1.0 / self.alpha)
    }
}

/// Coefficients a₁..a₆ of the shape/scale law
/// `a₁ + a₂·(1 − σ/a₃)/(1 + (σ/a₃)^a₄)^(1/a₄) · 1/(1 + (σ/a₅)^a₆)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamLaw(pub [f64; 6]);

impl ParamLaw {
    pub fn eval(&self, sigma_db: f64) -> f64 {
        let [a1, a2, a3, a4, a5, a6] = self.0;
        let r = sigma_db / a3;
        a1 + a2 * (1.0 - r) / (1.0 + r.powf(a4)).powf(1.0 / a4) / (1.0 + (sigma_db / a5).powf(a6))
    }
}

/// Coefficients a₁..a₅ of the truncation law
/// `a₁·exp((σ/a₂)^a₃)·exp(exp(−((σ − a₄)/a₅)²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationLaw(pub [f64; 5]);

impl TruncationLaw {
    pub fn eval(&self, sigma_db: f64) -> f64 {
        let [a1, a2, a3, a4, a5] = self.0;
        let g = (sigma_db - a4) / a5;
        a1 * (sigma_db / a2).powf(a3).exp() * (-g * g).exp().exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Parameter {
    Eta,
    Alpha,
    K,
    Beta,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [
        Parameter::Eta,
        Parameter::Alpha,
        Parameter::K,
        Parameter::Beta,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Parameter::Eta => "eta",
            Parameter::Alpha => "alpha",
            Parameter::K => "k",
            Parameter::Beta => "beta",
        }
    }
}

/// Empirical-law coefficients for one reuse pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalLawCoeffs {
    pub eta: ParamLaw,
    pub alpha: ParamLaw,
    pub k: ParamLaw,
    pub beta: ParamLaw,
    pub truncation: TruncationLaw,
}

pub const FR1_COEFFS: EmpiricalLawCoeffs = EmpiricalLawCoeffs {
    eta: ParamLaw([4.0, 0.0, 1.0, 1.0, 1.0, 1.0]),
    alpha: ParamLaw([0.93, 0.87, 65.0, 1.0, 7.2, 3.2]),
    k: ParamLaw([0.65, 2.18, 3.3, 0.39, 4.75, 2.06]),
    beta: ParamLaw([0.04, 16.44, 13.45, 9.0, 6.35, 2.56]),
    truncation: TruncationLaw([61.56, 6.06, 1.84, 5.27, 2.51]),
};

pub const FR3_COEFFS: EmpiricalLawCoeffs = EmpiricalLawCoeffs {
    eta: ParamLaw([0.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
    alpha: ParamLaw([0.38, 0.94, 39.90, 2.00, 8.30, 3.00]),
    k: ParamLaw([0.0, 12.70, 2.35, 2.07, 11.00, 6.47]),
    beta: ParamLaw([1.81, 24.35, 3.60, 2.77, 1.77, 1.31]),
    truncation: TruncationLaw([1.71, 5.10, 1.89, 6.40, 2.30]),
};

impl EmpiricalLawCoeffs {
    pub fn for_reuse(reuse: ReusePattern) -> &'static Self {
        match reuse {
            ReusePattern::FR1 => &FR1_COEFFS,
            ReusePattern::FR3 => &FR3_COEFFS,
        }
    }

    pub fn law(&self, which: Parameter) -> &ParamLaw {
        match which {
            Parameter::Eta => &self.eta,
            Parameter::Alpha => &self.alpha,
            Parameter::K => &self.k,
            Parameter::Beta => &self.beta,
        }
    }
}

fn check_sigma(sigma_db: f64) -> Result<()> {
    if (SIGMA_RANGE_DB.0..=SIGMA_RANGE_DB.1).contains(&sigma_db) {
        Ok(())
    } else {
        Err(Error::SigmaOutOfRange(sigma_db))
    }
}

/// Value of one empirical parameter law; σ_dB outside [0, 12] is refused.
pub fn empirical_param(which: Parameter, reuse: ReusePattern, sigma_db: f64) -> Result<f64> {
    check_sigma(sigma_db)?;
    Ok(EmpiricalLawCoeffs::for_reuse(reuse)
        .law(which)
        .eval(sigma_db))
}

/// Truncation gain x_t; σ_dB outside [0, 12] is refused.
pub fn truncation_point(reuse: ReusePattern, sigma_db: f64) -> Result<f64> {
    check_sigma(sigma_db)?;
    Ok(EmpiricalLawCoeffs::for_reuse(reuse)
        .truncation
        .eval(sigma_db))
}

/// Truncated and renormalized Burr law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurrModel {
    pub params: BurrParams,
    pub x_t: f64,
    /// Normalization A = 1/F(x_t).
    pub a: f64,
}

impl BurrModel {
    pub fn new(params: BurrParams, x_t: f64) -> Result<Self> {
        let f = params.cdf(x_t);
        if !(x_t > 0.0 && f > 0.0) {
            return Err(Error::InvalidParameter {
                name: "x_t",
                value: x_t,
                reason: "truncation point must carry positive probability",
            });
        }
        Ok(Self {
            params,
            x_t,
            a: 1.0 / f,
        })
    }

    /// Truncated cdf A·F(x), equal to 1 from x_t on.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= self.x_t {
            1.0
        } else {
            self.a * self.params.cdf(x)
        }
    }

    /// Truncated density A·p(x) on [0, x_t].
    pub fn pdf(&self, x: f64) -> f64 {
        if x > self.x_t {
            0.0
        } else {
            self.a * self.params.pdf(x)
        }
    }

    /// Inverse of the truncated cdf for p in [0, 1].
    pub fn quantile(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return self.x_t;
        }
        self.params.quantile(p / self.a).min(self.x_t)
    }

    /// ∫₀^{x_t} x·A·p(x) dx = A·(x_t·F(x_t) − ∫₀^{x_t} F(x) dx).
    pub fn truncated_mean(&self) -> Result<f64> {
        let inner = integrate(
            |x| self.params.cdf(x),
            0.0,
            self.x_t,
            &[self.params.beta],
            Tolerance::relative(1e-12),
        )?;
        Ok(self.a * (self.x_t / self.a - inner.value))
    }

    /// Numeric ∫₀^{x_t} A·p(x) dx.
    pub fn total_mass(&self) -> Result<f64> {
        let r = integrate(
            |x| self.pdf(x),
            0.0,
            self.x_t,
            &[self.params.beta],
            Tolerance::relative(1e-12),
        )?;
        Ok(r.value)
    }

    /// Mean truncated-model report against an exact mean.
    pub fn mean_report(&self, exact_mean: f64) -> Result<MeanReport> {
        let truncated_mean = self.truncated_mean()?;
        Ok(MeanReport {
            truncated_mean,
            exact_mean,
            deviation: truncated_mean / exact_mean - 1.0,
        })
    }

    /// Draws by inverse transform of the truncated law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanReport {
    pub truncated_mean: f64,
    pub exact_mean: f64,
    /// Relative deviation of the truncated mean from the exact mean.
    pub deviation: f64,
}

/// Assembles the model from the empirical laws. Any parameter evaluating to
/// zero or below is an error rather than a clamp.
pub fn model_for(reuse: ReusePattern, sigma_db: f64) -> Result<BurrModel> {
    check_sigma(sigma_db)?;
    let coeffs = EmpiricalLawCoeffs::for_reuse(reuse);
    let mut values = [0.0; 4];
    for (slot, which) in values.iter_mut().zip(Parameter::ALL) {
        let v = coeffs.law(which).eval(sigma_db);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveModelParameter {
                name: which.name(),
                value: v,
                sigma_db,
            });
        }
        *slot = v;
    }
    let x_t = coeffs.truncation.eval(sigma_db);
    if !(x_t > 0.0 && x_t.is_finite()) {
        return Err(Error::NonPositiveModelParameter {
            name: "x_t",
            value: x_t,
            sigma_db,
        });
    }
    let [eta, alpha, k, beta] = values;
    BurrModel::new(BurrParams::new(eta, alpha, k, beta)?, x_t)
}

/// `count` i.i.d. draws from the truncated model.
pub fn sample_model<R: Rng + ?Sized>(model: &BurrModel, rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| model.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn fr1_base() -> BurrParams {
        BurrParams::new(4.0, 1.8, 2.83, 16.5).unwrap()
    }

    #[test]
    fn standard_burr_and_unit_case() {
        let p = BurrParams::new(1.0, 2.0, 3.0, 5.0).unwrap();
        for x in [0.1, 1.0, 7.0, 40.0] {
            let std = 1.0 - (1.0 + (x / 5.0f64).powf(2.0)).powf(-3.0);
            assert!((p.cdf(x) - std).abs() < 1e-14);
        }
        let unit = BurrParams::new(1.0, 1.0, 1.0, 3.0).unwrap();
        assert!((unit.cdf(3.0) - 0.5).abs() < 1e-15);
        assert_eq!(unit.cdf(0.0), 0.0);
        assert!(BurrParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(BurrParams::new(1.0, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn pdf_is_cdf_derivative() {
        let p = fr1_base();
        for i in 0..50 {
            let x = 10f64.powf(-2.0 + 5.0 * i as f64 / 49.0);
            let h = 1e-5 * x;
            let fd = if p.cdf(x) < 0.5 {
                (p.cdf(x + h) - p.cdf(x - h)) / (2.0 * h)
            } else {
                (p.survival(x - h) - p.survival(x + h)) / (2.0 * h)
            };
            let pdf = p.pdf(x);
            if pdf > 1e-250 {
                assert!((fd / pdf - 1.0).abs() < 1e-6, "x={x}: {fd} vs {pdf}");
            }
        }
    }

    #[test]
    fn quantile_round_trip() {
        let p = fr1_base();
        for u in [1e-12, 1e-4, 0.1, 0.5, 0.9, 0.999_999] {
            assert!((p.cdf(p.quantile(u)) - u).abs() < 1e-10 * u.max(1e-3));
        }
        let m = model_for(ReusePattern::FR1, 0.0).unwrap();
        for q in [0.001, 0.3, 0.77, 0.999_999_9] {
            let x = m.quantile(q);
            assert!(x <= m.x_t);
            assert!((m.cdf(x) - q).abs() < 1e-10);
        }
        assert_eq!(m.quantile(1.0), m.x_t);
        assert_eq!(m.quantile(0.0), 0.0);
    }

    #[test]
    fn empirical_law_values() {
        use Parameter::*;
        use ReusePattern::*;
        for s in [0.0, 3.3, 12.0] {
            assert_eq!(empirical_param(Eta, FR1, s).unwrap(), 4.0);
        }
        assert!((empirical_param(Alpha, FR1, 0.0).unwrap() - 1.80).abs() < 1e-14);
        assert!((empirical_param(K, FR3, 0.0).unwrap() - 12.70).abs() < 1e-14);
        assert!((empirical_param(Beta, FR1, 0.0).unwrap() - 16.48).abs() < 1e-14);
        assert!(empirical_param(Eta, FR1, 12.5).is_err());
        assert!(empirical_param(Eta, FR1, -0.1).is_err());
    }

    #[test]
    fn truncation_law() {
        use ReusePattern::*;
        let g = |a4: f64, a5: f64| (-(a4 / a5) * (a4 / a5)).exp().exp();
        let fr1 = truncation_point(FR1, 0.0).unwrap();
        assert!((fr1 - 61.56 * g(5.27, 2.51)).abs() < 1e-12);
        assert!((fr1 - 62.31).abs() < 0.01);
        let fr3 = truncation_point(FR3, 0.0).unwrap();
        assert!((fr3 - 1.711).abs() < 1e-3);
        let at = |s| truncation_point(FR1, s).unwrap();
        assert!(at(12.0) > at(6.0) && at(6.0) > at(0.0));
        assert!(truncation_point(FR3, 13.0).is_err());
    }

    #[test]
    fn fr1_model_normalization_and_mean() {
        let m = model_for(ReusePattern::FR1, 0.0).unwrap();
        assert!(m.a >= 1.0);
        assert!((m.a * m.params.cdf(m.x_t) - 1.0).abs() < 1e-15);
        assert!((m.total_mass().unwrap() - 1.0).abs() < 1e-8);
        let report = m.mean_report(17.25).unwrap();
        assert!(report.deviation.abs() < 0.05, "{report:?}");
        // independent check of the truncated mean via ∫ x·A·p
        let direct = integrate(
            |x| x * m.pdf(x),
            0.0,
            m.x_t,
            &[m.params.beta],
            Tolerance::relative(1e-11),
        )
        .unwrap()
        .value;
        assert!((direct / report.truncated_mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fr3_eta_law_turns_negative() {
        assert!(model_for(ReusePattern::FR3, 0.0).is_ok());
        match model_for(ReusePattern::FR3, 3.0) {
            Err(Error::NonPositiveModelParameter { name, value, .. }) => {
                assert_eq!(name, "eta");
                assert!(value < 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn samples_respect_truncation_and_law() {
        let m = model_for(ReusePattern::FR1, 0.0).unwrap();
        let mut r = rng::stream(17, 0);
        let n = 1_000_000;
        let mut xs = sample_model(&m, &mut r, n);
        assert!(xs.iter().all(|x| *x >= 0.0 && *x <= m.x_t));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean / m.truncated_mean().unwrap() - 1.0).abs() < 0.01);
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = m.cdf(*x);
                (f - i as f64 / n as f64)
                    .abs()
                    .max((f - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        // 99.9% Kolmogorov bound
        assert!(ks < 1.95 / (n as f64).sqrt(), "{ks}");
    }

    proptest! {
        #[test]
        fn eta_power_is_a_cdf(
            eta in 0.05f64..8.0,
            alpha in 0.2f64..5.0,
            k in 0.1f64..10.0,
            beta in 0.01f64..100.0,
        ) {
            let p = BurrParams::new(eta, alpha, k, beta).unwrap();
            let mut prev = 0.0;
            for i in 0..60 {
                let x = beta * 10f64.powf(-6.0 + 12.0 * i as f64 / 59.0);
                let f = p.cdf(x);
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(f >= prev);
                prop_assert!((f + p.survival(x) - 1.0).abs() < 1e-12);
                prev = f;
            }
            prop_assert!(p.cdf(0.0) == 0.0);
            prop_assert!(p.cdf(f64::INFINITY) == 1.0);
            prop_assert!(p.pdf(beta) >= 0.0);
        }
    }
}
