//! Crate-wide error types.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain (axis {axis})")]
    PointOutsideDomain { point: Vec<f64>, axis: usize },

    #[error("metric is not positive definite (eigenvalue {eigenvalue:.3e})")]
    MetricNotPositiveDefinite { eigenvalue: f64 },

    #[error("metric is not symmetric (componentwise residual {residual:.3e})")]
    MetricNotSymmetric { residual: f64 },

    #[error("numerical breakdown: {what}")]
    NumericalBreakdown { what: String },

    #[error("degenerate 2-plane (wedge norm {wedge_norm:.3e})")]
    DegeneratePlane { wedge_norm: f64 },

    #[error("metric is not block-diagonal across the requested block (residual {residual:.3e})")]
    NotBlockDiagonal { residual: f64 },

    #[error("block {block} is rank deficient (smallest Gram singular value {sigma_min:.3e})")]
    RankDeficientBlock { block: usize, sigma_min: f64 },

    #[error("blocks {block_a} and {block_b} are not orthogonal (cross Gram entry {value:.3e})")]
    BlocksNotOrthogonal { block_a: usize, block_b: usize, value: f64 },

    #[error("block {block} is not totally umbilical (deviation {deviation:.3e})")]
    NotUmbilic { block: usize, deviation: f64 },

    #[error("immersion differential is rank deficient (smallest singular value {sigma_min:.3e})")]
    RankDeficientDifferential { sigma_min: f64 },

    #[error("map is not an isometric immersion (pullback residual {residual:.3e})")]
    NotIsometric { residual: f64 },

    #[error("subspace configuration is not orthonormal (residual {residual:.3e})")]
    NotOrthonormal { residual: f64 },

    #[error("infeasible ranks: sum {total} exceeds dimension {dim} (or a rank is zero)")]
    InfeasibleRanks { total: usize, dim: usize },

    #[error("empty sample region")]
    EmptyRegion,

    #[error("requested rank {requested} for block {block} exceeds distribution rank {available}")]
    RanksExceedDistribution { block: usize, requested: usize, available: usize },

    #[error("warping function {warping} is not positive at {point:?} (value {value:.3e})")]
    NonPositiveWarping { warping: usize, point: Vec<f64>, value: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },

    #[error("leaf axis {axis} is unbounded")]
    UnboundedLeaf { axis: usize },

    #[error("domain axis {axis} is unbounded; integral criteria need a bounded domain")]
    UnboundedDomainForIntegral { axis: usize },

    #[error("scenario has no immersion")]
    MissingImmersion,

    #[error("scenario has no distribution set")]
    MissingDistributions,

    #[error("scenario manifold was not built as a twisted product")]
    NotTwistedProduct,

    #[error("prerequisite not met for {check}: {detail}")]
    PrerequisiteNotMet { check: String, detail: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("scenario validation failed:\n{}", format_issues(.0))]
    Validation(Vec<ValidationIssue>),
}

/// Expression-language parse errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },

    #[error("unknown identifier `{name}` (known: {known})")]
    UnknownIdentifier { name: String, known: String },

    #[error("unknown function `{name}`")]
    UnknownFunction { name: String },
}

/// One located problem found while validating a scenario document.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationIssue {
    /// Slash-separated path into the document, e.g. `/manifold/warpings/2`.
    pub location: String,
    pub message: String,
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {}: {}", i.location, i.message))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// Exit-code class for the CLI: 2 = input/validation, 3 = numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Validation(_) | Error::DimensionMismatch { .. } => 2,
            _ => 3,
        }
    }
}
