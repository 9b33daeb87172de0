//! Built-in scenario catalog, addressable as `builtin:<name>`.

use crate::error::{Error, Result, ValidationIssue};
use crate::extremal::OptimizerParams;
use crate::scenarios::doc::{
    build_scenario, DistributionsSpec, FactorSpec, ImmersionSpec, ManifoldSpec, ScenarioDoc,
    Tolerances,
};
use crate::scenarios::Scenario;
use crate::structure::StructuralIdentity as SI;
use crate::verify::{CheckSpec, CorollaryId, CriterionId, TraceKind};

fn base_doc(label: &str, manifold: ManifoldSpec) -> ScenarioDoc {
    ScenarioDoc {
        mixedcurv_schema: 1,
        label: label.to_string(),
        manifold,
        distributions: None,
        ambient: None,
        immersion: None,
        ambient_distributions: None,
        checks: Vec::new(),
        tolerances: Tolerances::default(),
        grid: 3,
        optimizer: OptimizerParams {
            restarts: 8,
            max_iters: 100,
            points_per_axis: 2,
            ..OptimizerParams::default()
        },
        seed: 42,
    }
}

fn interval(lo: f64, hi: f64) -> [f64; 2] {
    [lo, hi]
}

fn circle_fiber(name: &str) -> FactorSpec {
    FactorSpec {
        coords: vec![name.to_string()],
        domain: vec![interval(0.0, std::f64::consts::TAU)],
        periodic: vec![true],
    }
}

fn sphere3_ranks_1_2() -> ScenarioDoc {
    let mut doc = base_doc("s3_ranks_1_2", ManifoldSpec::SpaceForm { dim: 3, curvature: 1.0 });
    doc.distributions = Some(DistributionsSpec::CoordinateBlocks { blocks: vec![vec![0], vec![1, 2]] });
    doc.ambient = Some(ManifoldSpec::Euclidean { dim: 4, coords: None, domain: None });
    doc.immersion = Some(ImmersionSpec::UnitSphereChart);
    doc.grid = 2;
    doc.checks = vec![
        CheckSpec::Isometry,
        CheckSpec::Gauss,
        CheckSpec::Trace(TraceKind::Si),
        CheckSpec::Trace(TraceKind::Sii(0)),
        CheckSpec::Trace(TraceKind::Sii(1)),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
        CheckSpec::Structural(SI::Pw),
        CheckSpec::MainInequality,
        CheckSpec::Corollary(CorollaryId::RicciK2),
    ];
    doc
}

fn sphere4_ranks_2_2() -> ScenarioDoc {
    let mut doc = base_doc("s4_ranks_2_2", ManifoldSpec::SpaceForm { dim: 4, curvature: 1.0 });
    doc.distributions = Some(DistributionsSpec::CoordinateBlocks { blocks: vec![vec![0, 1], vec![2, 3]] });
    doc.ambient = Some(ManifoldSpec::Euclidean { dim: 5, coords: None, domain: None });
    doc.immersion = Some(ImmersionSpec::UnitSphereChart);
    doc.grid = 2;
    doc.checks = vec![
        CheckSpec::Isometry,
        CheckSpec::Trace(TraceKind::Si),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
        CheckSpec::MainInequality,
    ];
    doc
}

fn sphere3_ranks_1_1_1() -> ScenarioDoc {
    let mut doc = base_doc("s3_ranks_1_1_1", ManifoldSpec::SpaceForm { dim: 3, curvature: 1.0 });
    doc.distributions =
        Some(DistributionsSpec::CoordinateBlocks { blocks: vec![vec![0], vec![1], vec![2]] });
    doc.ambient = Some(ManifoldSpec::Euclidean { dim: 4, coords: None, domain: None });
    doc.immersion = Some(ImmersionSpec::UnitSphereChart);
    doc.grid = 2;
    doc.checks = vec![
        CheckSpec::Isometry,
        CheckSpec::Trace(TraceKind::Si),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
        CheckSpec::Structural(SI::Pw3k),
        CheckSpec::MainInequality,
    ];
    doc
}

fn warped_sphere() -> ScenarioDoc {
    let mut doc = base_doc(
        "warped_sphere",
        ManifoldSpec::TwistedProduct {
            base: FactorSpec {
                coords: vec!["t".into()],
                domain: vec![interval(0.05, std::f64::consts::PI - 0.05)],
                periodic: vec![],
            },
            fibers: vec![circle_fiber("phi")],
            warpings: vec!["sin(t)".into()],
        },
    );
    doc.ambient = Some(ManifoldSpec::Euclidean { dim: 3, coords: None, domain: None });
    doc.immersion = Some(ImmersionSpec::UnitSphereChart);
    doc.checks = vec![
        CheckSpec::Isometry,
        CheckSpec::Gauss,
        CheckSpec::Trace(TraceKind::Si),
        CheckSpec::TwistedSmix,
        CheckSpec::TwistedInequality,
        CheckSpec::MainInequality,
        CheckSpec::Structural(SI::Pw),
        CheckSpec::Structural(SI::Pw3k),
        CheckSpec::Structural(SI::Umb),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
        CheckSpec::Criterion(CriterionId::TwistedPair),
        CheckSpec::Criterion(CriterionId::CompactIntegral),
    ];
    doc
}

fn hyperbolic_warp() -> ScenarioDoc {
    let mut doc = base_doc(
        "hyperbolic_warp",
        ManifoldSpec::TwistedProduct {
            base: FactorSpec {
                coords: vec!["t".into()],
                domain: vec![interval(-1.2, 1.2)],
                periodic: vec![],
            },
            fibers: vec![FactorSpec {
                coords: vec!["y".into()],
                domain: vec![interval(-1.5, 1.5)],
                periodic: vec![],
            }],
            warpings: vec!["exp(t)".into()],
        },
    );
    doc.checks = vec![
        CheckSpec::TwistedSmix,
        CheckSpec::Structural(SI::Pw),
        CheckSpec::Structural(SI::Pw3k),
        CheckSpec::Structural(SI::Umb),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
    ];
    doc
}

fn heisenberg_span() -> ScenarioDoc {
    let mut doc = base_doc(
        "heisenberg_span",
        ManifoldSpec::Euclidean {
            dim: 3,
            coords: Some(vec!["x".into(), "y".into(), "z".into()]),
            domain: Some(vec![interval(-1.0, 1.0); 3]),
        },
    );
    doc.distributions = Some(DistributionsSpec::Fields {
        blocks: vec![
            vec![
                vec!["1".into(), "0".into(), "0".into()],
                vec!["0".into(), "1".into(), "x".into()],
            ],
            vec![vec!["0".into(), "-x".into(), "1".into()]],
        ],
    });
    doc.checks = vec![
        CheckSpec::Structural(SI::Pw),
        CheckSpec::Structural(SI::Pw3k),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
    ];
    doc
}

fn flat_plane() -> ScenarioDoc {
    let mut doc = base_doc(
        "flat_plane",
        ManifoldSpec::TwistedProduct {
            base: FactorSpec {
                coords: vec!["x".into()],
                domain: vec![interval(-1.0, 1.0)],
                periodic: vec![],
            },
            fibers: vec![FactorSpec {
                coords: vec!["y".into()],
                domain: vec![interval(-1.0, 1.0)],
                periodic: vec![],
            }],
            warpings: vec!["1".into()],
        },
    );
    doc.ambient = Some(ManifoldSpec::Euclidean { dim: 3, coords: None, domain: None });
    doc.immersion = Some(ImmersionSpec::Linear {
        matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]],
        offset: None,
    });
    doc.ambient_distributions =
        Some(DistributionsSpec::CoordinateBlocks { blocks: vec![vec![0], vec![1, 2]] });
    doc.checks = vec![
        CheckSpec::Isometry,
        CheckSpec::Gauss,
        CheckSpec::Trace(TraceKind::Si),
        CheckSpec::TwistedSmix,
        CheckSpec::TwistedInequality,
        CheckSpec::MainInequality,
        CheckSpec::Corollary(CorollaryId::Dd),
        CheckSpec::Corollary(CorollaryId::Adapted2k),
        CheckSpec::Criterion(CriterionId::Splitting),
    ];
    doc
}

fn graph_paraboloid() -> ScenarioDoc {
    let mut doc = base_doc(
        "graph_paraboloid",
        ManifoldSpec::Graph {
            coords: vec!["x".into(), "y".into()],
            domain: vec![interval(-0.8, 0.8), interval(-0.8, 0.8)],
            height: "x^2+y^2".into(),
        },
    );
    // the pullback metric has g_xy = 4xy, so the second block is the explicit
    // g-orthogonal complement of ∂x rather than the coordinate field ∂y
    doc.distributions = Some(DistributionsSpec::Fields {
        blocks: vec![
            vec![vec!["1".into(), "0".into()]],
            vec![vec!["-4*x*y".into(), "1+4*x^2".into()]],
        ],
    });
    doc.ambient = Some(ManifoldSpec::Euclidean {
        dim: 3,
        coords: None,
        domain: Some(vec![interval(-3.0, 3.0); 3]),
    });
    doc.immersion = Some(ImmersionSpec::Exprs {
        map: vec!["x".into(), "y".into(), "x^2+y^2".into()],
    });
    doc.checks = vec![
        CheckSpec::Isometry,
        CheckSpec::Gauss,
        CheckSpec::Trace(TraceKind::Si),
        CheckSpec::Trace(TraceKind::Sii(0)),
        CheckSpec::Trace(TraceKind::Sii(1)),
        CheckSpec::MainInequality,
    ];
    doc
}

fn s2xr_ambient() -> ScenarioDoc {
    let mut doc = base_doc(
        "s2xr_ambient",
        ManifoldSpec::Product {
            factors: vec![
                ManifoldSpec::SpaceForm { dim: 2, curvature: 1.0 },
                ManifoldSpec::Euclidean {
                    dim: 1,
                    coords: Some(vec!["z".into()]),
                    domain: Some(vec![interval(-1.5, 1.5)]),
                },
            ],
        },
    );
    doc.distributions = Some(DistributionsSpec::CoordinateBlocks { blocks: vec![vec![0, 1], vec![2]] });
    doc.grid = 2;
    doc.checks = vec![
        CheckSpec::Structural(SI::Pw),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
    ];
    doc
}

fn h2_in_h3() -> ScenarioDoc {
    let mut doc = base_doc(
        "h2_in_h3",
        ManifoldSpec::TwistedProduct {
            base: FactorSpec {
                coords: vec!["t".into()],
                domain: vec![interval(-0.8, 0.8)],
                periodic: vec![],
            },
            fibers: vec![FactorSpec {
                coords: vec!["y1".into()],
                domain: vec![interval(-1.0, 1.0)],
                periodic: vec![],
            }],
            warpings: vec!["exp(t)".into()],
        },
    );
    doc.ambient = Some(ManifoldSpec::SpaceForm { dim: 3, curvature: -1.0 });
    doc.immersion = Some(ImmersionSpec::Linear {
        matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]],
        offset: None,
    });
    doc.checks = vec![
        CheckSpec::Isometry,
        CheckSpec::Gauss,
        CheckSpec::Trace(TraceKind::Si),
        CheckSpec::TwistedSmix,
        CheckSpec::TwistedInequality,
        CheckSpec::MainInequality,
        CheckSpec::Structural(SI::Pw),
        CheckSpec::Structural(SI::Umb),
        CheckSpec::Structural(SI::Smix3),
        CheckSpec::Structural(SI::DkSmix),
        CheckSpec::Criterion(CriterionId::Splitting),
    ];
    doc
}

/// Names of all built-in scenarios.
pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "s3_ranks_1_2",
        "s4_ranks_2_2",
        "s3_ranks_1_1_1",
        "warped_sphere",
        "hyperbolic_warp",
        "heisenberg_span",
        "flat_plane",
        "graph_paraboloid",
        "s2xr_ambient",
        "h2_in_h3",
    ]
}

/// Document of a built-in scenario, if the name is known.
pub fn builtin_doc(name: &str) -> Option<ScenarioDoc> {
    Some(match name {
        "s3_ranks_1_2" => sphere3_ranks_1_2(),
        "s4_ranks_2_2" => sphere4_ranks_2_2(),
        "s3_ranks_1_1_1" => sphere3_ranks_1_1_1(),
        "warped_sphere" => warped_sphere(),
        "hyperbolic_warp" => hyperbolic_warp(),
        "heisenberg_span" => heisenberg_span(),
        "flat_plane" => flat_plane(),
        "graph_paraboloid" => graph_paraboloid(),
        "s2xr_ambient" => s2xr_ambient(),
        "h2_in_h3" => h2_in_h3(),
        _ => return None,
    })
}

/// Build a built-in scenario by name.
pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let doc = builtin_doc(name).ok_or_else(|| {
        Error::Validation(vec![ValidationIssue {
            location: "/scenario".into(),
            message: format!("unknown builtin `{name}`; known: {}", builtin_names().join(", ")),
        }])
    })?;
    build_scenario(&doc)
}
