//! Scenario document schema (JSON, `"mixedcurv_schema": 1`) and the builder
//! that validates and assembles it. Unknown fields are rejected; validation
//! reports every problem with its location and never panics on bad input.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};
use crate::extremal::OptimizerParams;
use crate::geomcore::{ChartManifold, DiffConfig, VectorFieldFn};
use crate::immersion::{ImmersionData, JacobianFn, MapFn};
use crate::scenarios::{
    build_twisted_product, product_chart, space_form_chart, sphere_embedding, Scenario,
    TwistedProduct, WarpExpression,
};
use crate::structure::DistributionSet;
use crate::verify::CheckSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerances used by the checkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Equality band on inequality gaps.
    pub tol_eq: f64,
    /// Isometric-immersion pullback residual.
    pub tol_iso: f64,
    /// Identity residual threshold.
    pub tol_identity: f64,
    /// Curvature symmetry residual (relative).
    pub tol_sym: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol_eq: 1e-5, tol_iso: 1e-8, tol_identity: 1e-5, tol_sym: 1e-6 }
    }
}

/// A flat factor of a twisted product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub coords: Vec<String>,
    /// One `[lo, hi]` interval per coordinate.
    #[serde(rename = "box")]
    pub domain: Vec<[f64; 2]>,
    #[serde(default)]
    pub periodic: Vec<bool>,
}

impl FactorSpec {
    fn build(&self, label: &str) -> ChartManifold {
        let periodic = if self.periodic.len() == self.coords.len() {
            self.periodic.clone()
        } else {
            vec![false; self.coords.len()]
        };
        ChartManifold::euclidean(
            label,
            self.coords.clone(),
            self.domain.iter().map(|b| (b[0], b[1])).collect(),
        )
        .with_periodic(periodic)
    }
}

/// Manifold constructors available to documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean {
        dim: usize,
        #[serde(default)]
        coords: Option<Vec<String>>,
        #[serde(rename = "box", default)]
        domain: Option<Vec<[f64; 2]>>,
    },
    /// Constant-curvature chart: sphere (c > 0), flat (c = 0), hyperbolic (c < 0).
    SpaceForm { dim: usize, curvature: f64 },
    TwistedProduct {
        base: FactorSpec,
        fibers: Vec<FactorSpec>,
        warpings: Vec<String>,
    },
    Product { factors: Vec<ManifoldSpec> },
    /// Graph of `height` over a flat box, with the pullback metric.
    Graph {
        coords: Vec<String>,
        #[serde(rename = "box")]
        domain: Vec<[f64; 2]>,
        height: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionsSpec {
    CoordinateBlocks { blocks: Vec<Vec<usize>> },
    /// Blocks of vector fields, each field a list of component expressions.
    Fields { blocks: Vec<Vec<Vec<String>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImmersionSpec {
    /// Round embedding of the nested sphere chart into Euclidean (n+1)-space.
    UnitSphereChart,
    /// Affine map `x ↦ A x + b`.
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    /// Components given as expressions of the source coordinates; the
    /// Jacobian comes from symbolic differentiation of the expressions.
    Exprs { map: Vec<String> },
}

/// A scenario document: everything needed to assemble and check a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub mixedcurv_schema: u32,
    pub label: String,
    pub manifold: ManifoldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributions: Option<DistributionsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<ManifoldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immersion: Option<ImmersionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_distributions: Option<DistributionsSpec>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub optimizer: OptimizerParams,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> usize {
    3
}

struct Issues(Vec<ValidationIssue>);

impl Issues {
    fn push(&mut self, location: &str, message: impl Into<String>) {
        self.0.push(ValidationIssue { location: location.to_string(), message: message.into() });
    }
}

fn build_manifold(
    spec: &ManifoldSpec,
    label: &str,
    loc: &str,
    issues: &mut Issues,
) -> Option<(ChartManifold, Option<TwistedProduct>)> {
    match spec {
        ManifoldSpec::Euclidean { dim, coords, domain } => {
            let coords = coords
                .clone()
                .unwrap_or_else(|| (0..*dim).map(|i| format!("x{i}")).collect());
            if coords.len() != *dim {
                issues.push(loc, format!("{} coordinate names for dimension {dim}", coords.len()));
                return None;
            }
            let dom: Vec<(f64, f64)> = match domain {
                Some(b) if b.len() == *dim => b.iter().map(|i| (i[0], i[1])).collect(),
                Some(b) => {
                    issues.push(loc, format!("{} box intervals for dimension {dim}", b.len()));
                    return None;
                }
                None => vec![(-2.0, 2.0); *dim],
            };
            Some((ChartManifold::euclidean(label, coords, dom).with_space_form(0.0), None))
        }
        ManifoldSpec::SpaceForm { dim, curvature } => {
            if *dim < 2 {
                issues.push(loc, "space form needs dimension ≥ 2");
                return None;
            }
            if (curvature.abs() - 1.0).abs() > 1e-12 && *curvature != 0.0 {
                issues.push(loc, "supported curvatures are −1, 0, +1");
                return None;
            }
            Some((space_form_chart(*dim, *curvature), None))
        }
        ManifoldSpec::TwistedProduct { base, fibers, warpings } => {
            if warpings.len() != fibers.len() {
                issues.push(
                    &format!("{loc}/warpings"),
                    format!("{} warpings for {} fibers", warpings.len(), fibers.len()),
                );
                return None;
            }
            let mut parsed = Vec::new();
            for (i, w) in warpings.iter().enumerate() {
                match WarpExpression::parse(w) {
                    Ok(e) => parsed.push(e),
                    Err(e) => {
                        issues.push(&format!("{loc}/warpings/{i}"), e.to_string());
                        return None;
                    }
                }
            }
            let base_chart = base.build(&format!("{label}_base"));
            let fiber_charts: Vec<ChartManifold> = fibers
                .iter()
                .enumerate()
                .map(|(i, f)| f.build(&format!("{label}_fiber{i}")))
                .collect();
            match build_twisted_product(base_chart, fiber_charts, parsed) {
                Ok(tp) => Some((tp.manifold.clone(), Some(tp))),
                Err(e) => {
                    issues.push(loc, e.to_string());
                    None
                }
            }
        }
        ManifoldSpec::Product { factors } => {
            let mut charts = Vec::new();
            for (i, f) in factors.iter().enumerate() {
                let (c, _) = build_manifold(f, &format!("{label}_{i}"), &format!("{loc}/factors/{i}"), issues)?;
                charts.push(c);
            }
            Some((product_chart(label, &charts), None))
        }
        ManifoldSpec::Graph { coords, domain, height } => {
            if domain.len() != coords.len() {
                issues.push(loc, "box must have one interval per coordinate");
                return None;
            }
            let h = match WarpExpression::parse(height) {
                Ok(h) => h,
                Err(e) => {
                    issues.push(&format!("{loc}/height"), e.to_string());
                    return None;
                }
            };
            let partials: Vec<_> = coords.iter().map(|c| h.derivative(c)).collect();
            let mut compiled = Vec::new();
            for (i, p) in partials.iter().enumerate() {
                match p.compile(coords) {
                    Ok(c) => compiled.push(c),
                    Err(e) => {
                        issues.push(&format!("{loc}/height"), format!("partial {i}: {e}"));
                        return None;
                    }
                }
            }
            let n = coords.len();
            let metric = Arc::new(move |x: &[f64]| {
                let grad: Vec<f64> = compiled.iter().map(|c| c.eval(x)).collect();
                DMatrix::from_fn(n, n, |a, b| {
                    let id = if a == b { 1.0 } else { 0.0 };
                    id + grad[a] * grad[b]
                })
            });
            Some((
                ChartManifold::new(
                    label,
                    coords.clone(),
                    domain.iter().map(|b| (b[0], b[1])).collect(),
                    metric,
                ),
                None,
            ))
        }
    }
}

fn build_distributions(
    spec: &DistributionsSpec,
    manifold: &ChartManifold,
    loc: &str,
    issues: &mut Issues,
) -> Option<DistributionSet> {
    let n = manifold.dim();
    match spec {
        DistributionsSpec::CoordinateBlocks { blocks } => {
            let mut seen = vec![false; n];
            for (bi, b) in blocks.iter().enumerate() {
                for &i in b {
                    if i >= n {
                        issues.push(&format!("{loc}/blocks/{bi}"), format!("coordinate index {i} out of range"));
                        return None;
                    }
                    if seen[i] {
                        issues.push(&format!("{loc}/blocks/{bi}"), format!("coordinate {i} used twice"));
                        return None;
                    }
                    seen[i] = true;
                }
            }
            match DistributionSet::coordinate_blocks(manifold.clone(), blocks) {
                Ok(d) => Some(d),
                Err(e) => {
                    issues.push(loc, e.to_string());
                    None
                }
            }
        }
        DistributionsSpec::Fields { blocks } => {
            let coords = manifold.coords().to_vec();
            let mut built: Vec<Vec<VectorFieldFn>> = Vec::new();
            for (bi, block) in blocks.iter().enumerate() {
                let mut fields = Vec::new();
                for (fi, comps) in block.iter().enumerate() {
                    if comps.len() != n {
                        issues.push(
                            &format!("{loc}/blocks/{bi}/{fi}"),
                            format!("{} components for dimension {n}", comps.len()),
                        );
                        return None;
                    }
                    let mut compiled = Vec::new();
                    for (ci, src) in comps.iter().enumerate() {
                        let parsed = match WarpExpression::parse(src) {
                            Ok(p) => p,
                            Err(e) => {
                                issues.push(&format!("{loc}/blocks/{bi}/{fi}/{ci}"), e.to_string());
                                return None;
                            }
                        };
                        match parsed.compile(&coords) {
                            Ok(c) => compiled.push(c),
                            Err(e) => {
                                issues.push(&format!("{loc}/blocks/{bi}/{fi}/{ci}"), e.to_string());
                                return None;
                            }
                        }
                    }
                    let field: VectorFieldFn = Arc::new(move |x: &[f64]| {
                        DVector::from_iterator(compiled.len(), compiled.iter().map(|c| c.eval(x)))
                    });
                    fields.push(field);
                }
                built.push(fields);
            }
            match DistributionSet::new(manifold.clone(), built) {
                Ok(d) => Some(d),
                Err(e) => {
                    issues.push(loc, e.to_string());
                    None
                }
            }
        }
    }
}

fn build_immersion(
    spec: &ImmersionSpec,
    source: &ChartManifold,
    ambient: &ChartManifold,
    loc: &str,
    issues: &mut Issues,
) -> Option<(MapFn, Option<JacobianFn>)> {
    let n = source.dim();
    let m = ambient.dim();
    match spec {
        ImmersionSpec::UnitSphereChart => {
            if m != n + 1 {
                issues.push(loc, format!("sphere chart embedding needs ambient dimension {}", n + 1));
                return None;
            }
            let (map, jac) = sphere_embedding(n);
            Some((map, Some(jac)))
        }
        ImmersionSpec::Linear { matrix, offset } => {
            if matrix.len() != m || matrix.iter().any(|r| r.len() != n) {
                issues.push(&format!("{loc}/matrix"), format!("matrix must be {m}×{n}"));
                return None;
            }
            let a = DMatrix::from_fn(m, n, |r, c| matrix[r][c]);
            let b = match offset {
                Some(o) if o.len() == m => DVector::from_column_slice(o),
                Some(o) => {
                    issues.push(&format!("{loc}/offset"), format!("{} entries for dimension {m}", o.len()));
                    return None;
                }
                None => DVector::zeros(m),
            };
            let a2 = a.clone();
            let map: MapFn = Arc::new(move |x: &[f64]| {
                let v = &a * DVector::from_column_slice(x) + &b;
                v.iter().copied().collect()
            });
            let jac: JacobianFn = Arc::new(move |_x: &[f64]| a2.clone());
            Some((map, Some(jac)))
        }
        ImmersionSpec::Exprs { map } => {
            if map.len() != m {
                issues.push(loc, format!("{} map components for ambient dimension {m}", map.len()));
                return None;
            }
            let coords = source.coords().to_vec();
            let mut comps = Vec::new();
            let mut jac_rows = Vec::new();
            for (i, src) in map.iter().enumerate() {
                let parsed = match WarpExpression::parse(src) {
                    Ok(p) => p,
                    Err(e) => {
                        issues.push(&format!("{loc}/map/{i}"), e.to_string());
                        return None;
                    }
                };
                let mut row = Vec::new();
                for c in &coords {
                    match parsed.derivative(c).compile(&coords) {
                        Ok(d) => row.push(d),
                        Err(e) => {
                            issues.push(&format!("{loc}/map/{i}"), e.to_string());
                            return None;
                        }
                    }
                }
                match parsed.compile(&coords) {
                    Ok(c) => comps.push(c),
                    Err(e) => {
                        issues.push(&format!("{loc}/map/{i}"), e.to_string());
                        return None;
                    }
                }
                jac_rows.push(row);
            }
            let map: MapFn = Arc::new(move |x: &[f64]| comps.iter().map(|c| c.eval(x)).collect());
            let jac: JacobianFn = Arc::new(move |x: &[f64]| {
                DMatrix::from_fn(m, n, |r, c| jac_rows[r][c].eval(x))
            });
            Some((map, Some(jac)))
        }
    }
}

/// Validate a document and assemble the scenario. All problems are collected
/// into a single [`Error::Validation`] with locations.
pub fn build_scenario(doc: &ScenarioDoc) -> Result<Scenario> {
    let mut issues = Issues(Vec::new());
    if doc.mixedcurv_schema != SCHEMA_VERSION {
        issues.push(
            "/mixedcurv_schema",
            format!("unsupported schema version {} (expected {SCHEMA_VERSION})", doc.mixedcurv_schema),
        );
        return Err(Error::Validation(issues.0));
    }
    if doc.grid == 0 {
        issues.push("/grid", "grid must be positive");
    }

    let built = build_manifold(&doc.manifold, &doc.label, "/manifold", &mut issues);
    let ambient = doc
        .ambient
        .as_ref()
        .and_then(|a| build_manifold(a, &format!("{}_ambient", doc.label), "/ambient", &mut issues))
        .map(|(c, _)| c);

    let (manifold, twisted) = match built {
        Some(b) => b,
        None => return Err(Error::Validation(issues.0)),
    };

    let distributions = match (&doc.distributions, &twisted) {
        (Some(spec), _) => build_distributions(spec, &manifold, "/distributions", &mut issues),
        (None, Some(tp)) => Some(tp.distributions.clone()),
        (None, None) => None,
    };

    let immersion = match (&doc.immersion, &ambient) {
        (Some(spec), Some(amb)) => {
            build_immersion(spec, &manifold, amb, "/immersion", &mut issues).map(|(map, jac)| {
                let imm = ImmersionData::new(manifold.clone(), amb.clone(), map, jac);
                match &distributions {
                    Some(d) => imm.with_distributions(d.clone()),
                    None => imm,
                }
            })
        }
        (Some(_), None) => {
            issues.push("/immersion", "an immersion requires an ambient manifold");
            None
        }
        (None, _) => None,
    };

    let ambient_distributions = match (&doc.ambient_distributions, &ambient) {
        (Some(spec), Some(amb)) => build_distributions(spec, amb, "/ambient_distributions", &mut issues),
        (Some(_), None) => {
            issues.push("/ambient_distributions", "requires an ambient manifold");
            None
        }
        (None, _) => None,
    };

    if !issues.0.is_empty() {
        return Err(Error::Validation(issues.0));
    }

    let mut optimizer = doc.optimizer.clone();
    if optimizer.seed == 0 {
        optimizer.seed = doc.seed;
    }
    let scenario = Scenario {
        label: doc.label.clone(),
        manifold,
        distributions,
        immersion,
        ambient_distributions,
        twisted,
        checks: doc.checks.clone(),
        tolerances: doc.tolerances,
        grid: doc.grid,
        optimizer,
        seed: doc.seed,
    };

    // eager spot checks on the grid: isometry residual and block validity
    let mut issues = Issues(Vec::new());
    if let Ok(grid) = scenario.grid_points() {
        let cfg = DiffConfig::default();
        for (pi, p) in grid.iter().enumerate() {
            if let Some(imm) = &scenario.immersion {
                match imm.isometry_residual(p, &cfg) {
                    Ok(r) if r > scenario.tolerances.tol_iso => {
                        issues.push(
                            "/immersion",
                            format!("not isometric at grid point {pi} ({p:?}): residual {r:.3e}"),
                        );
                    }
                    Ok(_) => {}
                    Err(e) => issues.push("/immersion", format!("at grid point {pi} ({p:?}): {e}")),
                }
            }
            if let Some(d) = &scenario.distributions {
                if let Err(e) = d.validate_at(p) {
                    issues.push("/distributions", format!("at grid point {pi} ({p:?}): {e}"));
                }
            }
        }
    } else {
        issues.push("/grid", "no interior grid points");
    }
    if !issues.0.is_empty() {
        return Err(Error::Validation(issues.0));
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_doc_roundtrip_through_json() {
        let doc = crate::scenarios::builtin_doc("warped_sphere").unwrap();
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let back: ScenarioDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(doc, back);
        build_scenario(&back).unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{ "mixedcurv_schema": 1, "label": "x", "manifold": {"kind":"euclidean","dim":2}, "bogus": 1 }"#;
        assert!(serde_json::from_str::<ScenarioDoc>(text).is_err());
    }

    #[test]
    fn wrong_warping_count_is_reported() {
        let doc = ScenarioDoc {
            mixedcurv_schema: 1,
            label: "bad".into(),
            manifold: ManifoldSpec::TwistedProduct {
                base: FactorSpec { coords: vec!["t".into()], domain: vec![[0.0, 1.0]], periodic: vec![] },
                fibers: vec![FactorSpec {
                    coords: vec!["a".into(), "b".into()],
                    domain: vec![[0.0, 1.0], [0.0, 1.0]],
                    periodic: vec![],
                }],
                warpings: vec!["1".into(), "1".into(), "1".into()],
            },
            distributions: None,
            ambient: None,
            immersion: None,
            ambient_distributions: None,
            checks: vec![],
            tolerances: Tolerances::default(),
            grid: 3,
            optimizer: OptimizerParams::default(),
            seed: 0,
        };
        match build_scenario(&doc) {
            Err(Error::Validation(issues)) => {
                assert!(issues.iter().any(|i| i.location.contains("warpings")), "{issues:?}");
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn schema_version_enforced() {
        let doc = ScenarioDoc {
            mixedcurv_schema: 2,
            label: "x".into(),
            manifold: ManifoldSpec::Euclidean { dim: 2, coords: None, domain: None },
            distributions: None,
            ambient: None,
            immersion: None,
            ambient_distributions: None,
            checks: vec![],
            tolerances: Tolerances::default(),
            grid: 3,
            optimizer: OptimizerParams::default(),
            seed: 0,
        };
        assert!(matches!(build_scenario(&doc), Err(Error::Validation(_))));
    }

    #[test]
    fn non_isometric_doc_rejected_eagerly() {
        let doc = ScenarioDoc {
            mixedcurv_schema: 1,
            label: "bad-iso".into(),
            manifold: ManifoldSpec::Euclidean {
                dim: 2,
                coords: Some(vec!["t".into(), "p".into()]),
                domain: Some(vec![[0.3, 2.8], [0.0, 6.28]]),
            },
            distributions: None,
            ambient: Some(ManifoldSpec::Euclidean { dim: 3, coords: None, domain: None }),
            immersion: Some(ImmersionSpec::Exprs {
                map: vec!["sin(t)*cos(p)".into(), "sin(t)*sin(p)".into(), "cos(t)".into()],
            }),
            ambient_distributions: None,
            checks: vec![],
            tolerances: Tolerances::default(),
            grid: 3,
            optimizer: OptimizerParams::default(),
            seed: 0,
        };
        match build_scenario(&doc) {
            Err(Error::Validation(issues)) => {
                assert!(issues.iter().any(|i| i.message.contains("not isometric")), "{issues:?}");
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }
}
