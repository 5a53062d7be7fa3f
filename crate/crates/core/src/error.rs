//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the provisioning pipeline, the attack suite, and the
/// configuration loader.
#[derive(Debug, Error)]
pub enum Error {
    /// A feature range or other configuration value is invalid.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A feature had identical min and max over the reference batch, so the
    /// normalizer cannot be fitted.
    #[error("degenerate feature '{feature}': min == max == {value}")]
    DegenerateFeature { feature: &'static str, value: f64 },

    /// An operation needed more data points than it was given.
    #[error("insufficient data: needed {needed}, got {got} ({context})")]
    InsufficientData {
        needed: usize,
        got: usize,
        context: &'static str,
    },

    /// Silhouette score is undefined (fewer than two clusters present).
    #[error("silhouette score undefined: {0}")]
    UndefinedScore(String),

    /// Boundary refinement cannot proceed (e.g. all midpoints coincide).
    #[error("degenerate boundary geometry: {0}")]
    DegenerateBoundary(String),

    /// A lookup fell outside the table's domain.
    #[error("value {value} outside table domain [{min}, {max}]")]
    Domain { value: f64, min: f64, max: f64 },

    /// The VM catalog is empty or unusable.
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
