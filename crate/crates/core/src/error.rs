use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("AP index {index} out of range (layout has {count} APs)")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("point (r0 = {r0} m, theta = {theta} rad) lies outside the symmetry sector")]
    OutsideSector { r0: f64, theta: f64 },

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("root finding did not converge for target {target:e} (residual {residual:e})")]
    Inversion { target: f64, residual: f64 },

    #[error("moment enumeration needs {terms} terms, above the cap of {cap}")]
    TooManyTerms { terms: u128, cap: u128 },

    #[error("typical sets have mismatched partitions")]
    MismatchedPartitions,

    #[error("invalid MCP configuration: {0}")]
    McpConfig(String),

    #[error("MCP weighted mean {mean} deviates {deviation:.3}% from the exact mean {exact}")]
    McpDivergence {
        mean: f64,
        exact: f64,
        deviation: f64,
    },

    #[error(
        "model parameter `{name}` evaluates to {value} at sigma_dB = {sigma_db} (must be > 0)"
    )]
    NonPositiveModelParameter {
        name: &'static str,
        value: f64,
        sigma_db: f64,
    },

    #[error("sigma_dB = {0} outside the fitted range [0, 12]")]
    SigmaOutOfRange(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("cache entry is invalid: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}
