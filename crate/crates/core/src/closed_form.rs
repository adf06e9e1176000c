//! Exact analytics for the interference gain.
//!
//! Without shadowing, G ≈ Σ λₙ·G_f,n is hypoexponential with
//! F(x) = 1 − Σ Aₙ exp(−x/λₙ), Aₙ = Π_{j≠n} λₙ / (λₙ − λⱼ).
//! With shadowing, the moments of G are known in closed form:
//! E{Gᵏ} = k! Σ_{|a|=k} λ^a exp(σ²/2 · (Σαₙ² − k)), σ = σ_dB / ξ.

use crate::error::{positive, Error, Result};
use crate::numeric::CompensatedSum;
use crate::propagation::XI;

/// Pairwise relative gap below which two λ are treated as equal.
pub const DEGENERACY_GAP: f64 = 1e-9;
/// Relative perturbation applied to separate equal λ.
pub const DEGENERACY_NUDGE: f64 = 1e-8;
/// Default refusal threshold for the multi-index enumeration.
pub const DEFAULT_TERM_CAP: u128 = 100_000_000;

/// Sum of independent exponentials with distinct means λₙ.
#[derive(Debug, Clone)]
pub struct HypoExp {
    lambdas: Vec<f64>,
    coefficients: Vec<f64>,
}

impl HypoExp {
    pub fn new(lambdas: &[f64]) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidParameter {
                name: "lambdas",
                value: 0.0,
                reason: "at least one rate is required",
            });
        }
        let mut lambdas = lambdas
            .iter()
            .map(|&l| positive("lambda", l))
            .collect::<Result<Vec<_>>>()?;
        separate_degenerate(&mut lambdas);
        let coefficients = lambdas
            .iter()
            .enumerate()
            .map(|(n, &ln)| {
                lambdas
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != n)
                    .map(|(_, &lj)| ln / (ln - lj))
                    .product()
            })
            .collect();
        Ok(Self {
            lambdas,
            coefficients,
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// The Aₙ coefficients; they sum to one.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn mean(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        let mut tail = CompensatedSum::new();
        for (&a, &l) in self.coefficients.iter().zip(&self.lambdas) {
            tail.add(a * (-x / l).exp());
        }
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        acc.add(-tail.value());
        Ok(acc.value().clamp(0.0, 1.0))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        let mut acc = CompensatedSum::new();
        for (&a, &l) in self.coefficients.iter().zip(&self.lambdas) {
            acc.add(a / l * (-x / l).exp());
        }
        Ok(acc.value().max(0.0))
    }
}

fn check_support(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "x",
            value: x,
            reason: "gain must be non-negative",
        })
    }
}

fn separate_degenerate(lambdas: &mut [f64]) {
    loop {
        let mut nudged = false;
        for i in 0..lambdas.len() {
            for j in (i + 1)..lambdas.len() {
                let (a, b) = (lambdas[i], lambdas[j]);
                if (a - b).abs() <= DEGENERACY_GAP * a.max(b) {
                    let k = if a <= b { i } else { j };
                    log::warn!(
                        "near-equal rates {a} and {b}; perturbing by a relative {DEGENERACY_NUDGE}"
                    );
                    lambdas[k] *= 1.0 - DEGENERACY_NUDGE;
                    nudged = true;
                }
            }
        }
        if !nudged {
            break;
        }
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// k-th moment of a single unit-λ interferer: k!·exp(k(k−1)σ²/2).
pub fn single_moment(k: u32, sigma_db: f64) -> f64 {
    let sigma = sigma_db / XI;
    let k_f = f64::from(k);
    factorial(k) * (k_f * (k_f - 1.0) * sigma * sigma / 2.0).exp()
}

/// Number of multi-indices of N components summing to k: C(k+N−1, N−1).
pub fn multi_index_count(k: u32, n: usize) -> u128 {
    if n == 0 {
        return u128::from(k == 0);
    }
    let (top, r) = (
        u128::from(k) + n as u128 - 1,
        u128::from(k).min(n as u128 - 1),
    );
    let mut c: u128 = 1;
    for i in 0..r {
        c = c * (top - i) / (i + 1);
    }
    c
}

/// Streams every N-component non-negative multi-index with |a| = k.
///
/// Order is colexicographic, generated from the stars-and-bars bijection
/// without materializing the full list.
#[derive(Debug, Clone)]
pub struct MultiIndices {
    current: Vec<u32>,
    done: bool,
}

impl MultiIndices {
    pub fn new(k: u32, n: usize) -> Self {
        let mut current = vec![0; n];
        let done = n == 0 && k > 0;
        if n > 0 {
            current[0] = k;
        }
        Self { current, done }
    }

    fn advance(&mut self) {
        let a = &mut self.current;
        // first non-zero component that can shift one unit to its right neighbour
        let Some(i) = a
            .iter()
            .take(a.len().saturating_sub(1))
            .position(|&x| x > 0)
        else {
            self.done = true;
            return;
        };
        let carry = a[i] - 1;
        a[i] = 0;
        a[i + 1] += 1;
        a[0] = carry;
    }
}

impl Iterator for MultiIndices {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.advance();
        Some(out)
    }
}

/// k-th moment of G = Σ λₙ G_f,n G_s,n under independent unit-mean factors.
pub fn multi_moment(k: u32, lambdas: &[f64], sigma_db: f64) -> Result<f64> {
    multi_moment_capped(k, lambdas, sigma_db, DEFAULT_TERM_CAP)
}

pub fn multi_moment_capped(k: u32, lambdas: &[f64], sigma_db: f64, cap: u128) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            value: 0.0,
            reason: "moment order must be at least 1",
        });
    }
    let terms = multi_index_count(k, lambdas.len());
    if terms > cap {
        return Err(Error::TooManyTerms { terms, cap });
    }
    let half_var = 0.5 * (sigma_db / XI).powi(2);
    let k_f = f64::from(k);
    let mut acc = CompensatedSum::new();
    for a in MultiIndices::new(k, lambdas.len()) {
        let mut term = 1.0;
        let mut squares = 0.0;
        for (&alpha, &l) in a.iter().zip(lambdas) {
            if alpha > 0 {
                term *= l.powi(alpha as i32);
                squares += f64::from(alpha * alpha);
            }
        }
        acc.add(term * (half_var * (squares - k_f)).exp());
    }
    Ok(factorial(k) * acc.value())
}
