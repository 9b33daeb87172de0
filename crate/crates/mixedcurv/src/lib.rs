//! Numerical differential geometry of Riemannian almost k-product manifolds.
//!
//! A chart-level toolkit that
//!
//! * computes curvature (Christoffel symbols, Riemann/Ricci/scalar curvature,
//!   divergence, gradient, Laplacian) of a metric given as a plain function of
//!   chart coordinates ([`geomcore`]);
//! * handles k pairwise-orthogonal distributions: adapted frames, second
//!   fundamental forms `h_i`, integrability tensors `T_i`, mean curvatures
//!   `H_i`, the mixed scalar curvature and its structural identities
//!   ([`structure`]);
//! * analyses isometric immersions: ambient second fundamental form, mean
//!   curvature, Gauss-equation and trace-identity residuals ([`immersion`]);
//! * estimates extremal mixed-curvature invariants (`delta_mix`,
//!   `hat_delta_mix`, Chen's delta, q-th Ricci suprema) by seeded
//!   random-restart ascent over orthonormal frame configurations
//!   ([`extremal`]);
//! * builds scenarios (space forms, multiply twisted/warped products with
//!   expression-defined warpings, built-in immersions) and runs inequality /
//!   criterion checkers over coordinate grids ([`scenarios`], [`verify`]),
//!   with JSON/CSV reporting through the CLI ([`cli`]).
//!
//! Sign conventions are fixed once and used everywhere:
//!
//! * curvature: `R(X,Y)Z = ∇_X ∇_Y Z − ∇_Y ∇_X Z − ∇_{[X,Y]} Z` and
//!   `K(X,Y) = g(R(X,Y)Y, X)` for orthonormal `X, Y`, so the unit sphere has
//!   `K = +1`;
//! * **the Laplacian is the geometer's one**, `Δu = −Div(∇u)`; most numerical
//!   libraries use the opposite sign. `Δ(sin t) = sin t` on a Euclidean line.
//!
//! All operations are pure functions of immutable inputs and are
//! deterministic: identical inputs (including seeds) produce bitwise
//! identical outputs within one build.

pub mod error;
pub mod tensor;
pub mod geomcore;
pub mod structure;
pub mod immersion;
pub mod extremal;
pub mod scenarios;
pub mod verify;
pub mod report;
pub mod cli;

pub use error::{Error, ParseError, Result};
pub use geomcore::{ChartManifold, CurvatureAtPoint, DiffConfig, DiffScheme, LaplacianMode, StepScaling};
pub use structure::{AdaptedFrame, CurvatureDecomposition, DistributionSet, FundamentalData, StructuralIdentity};
pub use immersion::{AmbientSff, ImmersionData, TraceIdentity};
pub use extremal::{ExtremalResult, Objective, OptimizerParams, SubspaceConfig};
pub use scenarios::{Scenario, ScenarioDoc, WarpExpression};
pub use verify::{CriterionVerdict, InequalityReport, Verdict};
