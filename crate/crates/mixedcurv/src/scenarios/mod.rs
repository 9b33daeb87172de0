//! Scenario construction: space-form charts, product metrics, multiply
//! twisted/warped products with expression-defined warpings, built-in
//! immersions, and the scenario document schema.

pub mod expr;
mod doc;
mod builtins;

pub use builtins::{builtin_doc, builtin_names, builtin_scenario};
pub use doc::{
    build_scenario, DistributionsSpec, FactorSpec, ImmersionSpec, ManifoldSpec, ScenarioDoc,
    Tolerances,
};
pub use expr::{CompiledExpr, Expr, WarpExpression};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::extremal::OptimizerParams;
use crate::geomcore::{ChartManifold, DiffConfig, LaplacianMode};
use crate::immersion::{ImmersionData, JacobianFn, MapFn};
use crate::structure::DistributionSet;
use crate::verify::CheckSpec;

// ---------------------------------------------------------------------------
// chart constructors

/// Nested polar chart of the unit d-sphere: coordinates `x1..xd`,
/// `g_jj = Π_{l<j} sin² x_l`, last angle periodic. Curvature +1.
pub fn sphere_chart(d: usize) -> ChartManifold {
    assert!(d >= 1);
    let coords: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    let mut domain = vec![(0.3, std::f64::consts::PI - 0.3); d];
    domain[d - 1] = (0.0, std::f64::consts::TAU);
    let mut periodic = vec![false; d];
    periodic[d - 1] = true;
    ChartManifold::new(
        format!("sphere{d}"),
        coords,
        domain,
        Arc::new(move |x: &[f64]| {
            let mut diag = DVector::from_element(d, 1.0);
            let mut prefix = 1.0;
            for j in 1..d {
                prefix *= x[j - 1].sin().powi(2);
                diag[j] = prefix;
            }
            DMatrix::from_diagonal(&diag)
        }),
    )
    .with_periodic(periodic)
    .with_space_form(1.0)
}

/// Horospherical chart of hyperbolic d-space: `dt² + e^{2t}(dy₁² + …)`.
/// Curvature −1.
pub fn hyperbolic_chart(d: usize) -> ChartManifold {
    assert!(d >= 2);
    let mut coords = vec!["t".to_string()];
    coords.extend((1..d).map(|i| format!("y{i}")));
    let mut domain = vec![(-1.5, 1.5)];
    domain.extend(std::iter::repeat((-2.0, 2.0)).take(d - 1));
    ChartManifold::new(
        format!("hyperbolic{d}"),
        coords,
        domain,
        Arc::new(move |x: &[f64]| {
            let w = (2.0 * x[0]).exp();
            let mut diag = DVector::from_element(d, w);
            diag[0] = 1.0;
            DMatrix::from_diagonal(&diag)
        }),
    )
    .with_space_form(-1.0)
}

/// Chart of the simply connected space form of curvature `c`.
pub fn space_form_chart(d: usize, c: f64) -> ChartManifold {
    if c > 0.5 {
        sphere_chart(d)
    } else if c < -0.5 {
        hyperbolic_chart(d)
    } else {
        ChartManifold::euclidean(
            format!("euclidean{d}"),
            (0..d).map(|i| format!("x{i}")).collect(),
            vec![(-2.0, 2.0); d],
        )
    }
}

/// Block-diagonal product metric of several charts. Duplicate coordinate
/// names get a `_f<index>` suffix.
pub fn product_chart(label: &str, factors: &[ChartManifold]) -> ChartManifold {
    let mut coords = Vec::new();
    let mut domain = Vec::new();
    let mut periodic = Vec::new();
    let mut offsets = Vec::new();
    let mut off = 0usize;
    for (fi, f) in factors.iter().enumerate() {
        offsets.push(off);
        for c in f.coords() {
            let name = if coords.contains(c) { format!("{c}_f{fi}") } else { c.clone() };
            coords.push(name);
        }
        domain.extend_from_slice(f.domain());
        periodic.extend_from_slice(f.periodic());
        off += f.dim();
    }
    let total = off;
    let parts: Vec<ChartManifold> = factors.to_vec();
    let offs = offsets.clone();
    let flat = factors.iter().all(|f| f.space_form() == Some(0.0));
    let chart = ChartManifold::new(
        label,
        coords,
        domain,
        Arc::new(move |x: &[f64]| {
            let mut g = DMatrix::zeros(total, total);
            for (f, &o) in parts.iter().zip(&offs) {
                let gb = f.metric_raw(&x[o..o + f.dim()]);
                for a in 0..f.dim() {
                    for b in 0..f.dim() {
                        g[(o + a, o + b)] = gb[(a, b)];
                    }
                }
            }
            g
        }),
    )
    .with_periodic(periodic);
    if flat {
        chart.with_space_form(0.0)
    } else {
        chart
    }
}

/// The warped 2-sphere chart `dt² + sin²t dφ²` on `(0.05, π−0.05) × S¹`.
pub fn warped_metric() -> ChartManifold {
    ChartManifold::new(
        "warped_sphere_chart",
        vec!["t".into(), "phi".into()],
        vec![(0.05, std::f64::consts::PI - 0.05), (0.0, std::f64::consts::TAU)],
        Arc::new(|x: &[f64]| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, x[0].sin().powi(2)]))),
    )
    .with_periodic(vec![false, true])
    .with_space_form(1.0)
}

// ---------------------------------------------------------------------------
// sphere immersions

fn sphere_embed_factors(d: usize) -> Vec<Vec<(usize, bool)>> {
    // output component j as a product of (coordinate index, is_sin) factors
    let mut rows = Vec::with_capacity(d + 1);
    rows.push(vec![(0, false)]); // cos x1
    for j in 1..d {
        let mut f: Vec<(usize, bool)> = (0..j).map(|l| (l, true)).collect();
        f.push((j, false));
        rows.push(f);
    }
    rows.push((0..d).map(|l| (l, true)).collect()); // sin x1 … sin xd
    rows
}

/// Round embedding of the nested sphere chart into Euclidean (d+1)-space,
/// with its analytic Jacobian.
pub fn sphere_embedding(d: usize) -> (MapFn, JacobianFn) {
    let rows = sphere_embed_factors(d);
    let rows2 = rows.clone();
    let map: MapFn = Arc::new(move |x: &[f64]| {
        rows.iter()
            .map(|fs| fs.iter().map(|&(l, s)| if s { x[l].sin() } else { x[l].cos() }).product())
            .collect()
    });
    let jac: JacobianFn = Arc::new(move |x: &[f64]| {
        DMatrix::from_fn(d + 1, d, |r, m| {
            let fs = &rows2[r];
            if !fs.iter().any(|&(l, _)| l == m) {
                return 0.0;
            }
            fs.iter()
                .map(|&(l, s)| match (l == m, s) {
                    (false, true) => x[l].sin(),
                    (false, false) => x[l].cos(),
                    (true, true) => x[l].cos(),
                    (true, false) => -x[l].sin(),
                })
                .product()
        })
    });
    (map, jac)
}

/// Unit d-sphere isometrically immersed in Euclidean (d+1)-space, with the
/// distribution split (1, d−1) attached for d ≥ 2.
pub fn sphere_immersion(d: usize) -> ImmersionData {
    let source = sphere_chart(d);
    let ambient = ChartManifold::euclidean(
        format!("r{}", d + 1),
        (0..=d).map(|i| format!("X{i}")).collect(),
        vec![(-2.0, 2.0); d + 1],
    );
    let (map, jac) = sphere_embedding(d);
    let imm = ImmersionData::new(source.clone(), ambient, map, Some(jac));
    if d >= 2 {
        let blocks = vec![vec![0usize], (1..d).collect()];
        let ds = DistributionSet::coordinate_blocks(source, &blocks).unwrap();
        imm.with_distributions(ds)
    } else {
        imm
    }
}

// ---------------------------------------------------------------------------
// twisted products

/// A multiply twisted product assembled from a base chart, fiber charts and
/// one warping expression per fiber.
#[derive(Clone)]
pub struct TwistedProduct {
    pub manifold: ChartManifold,
    pub distributions: DistributionSet,
    pub base_axes: Vec<usize>,
    pub fiber_axes: Vec<Vec<usize>>,
    pub warpings: Vec<WarpExpression>,
    pub compiled: Vec<CompiledExpr>,
    /// True when every warping depends only on base coordinates.
    pub is_warped: bool,
}

impl std::fmt::Debug for TwistedProduct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwistedProduct")
            .field("manifold", &self.manifold.label())
            .field("base_axes", &self.base_axes)
            .field("fiber_axes", &self.fiber_axes)
            .field("warpings", &self.warpings.iter().map(|w| w.source_text()).collect::<Vec<_>>())
            .field("is_warped", &self.is_warped)
            .finish()
    }
}

/// Build the product manifold with metric
/// `g_base ⊕ u₂² g_{F₂} ⊕ … ⊕ u_k² g_{F_k}` and its coordinate blocks.
pub fn build_twisted_product(
    base: ChartManifold,
    fibers: Vec<ChartManifold>,
    warpings: Vec<WarpExpression>,
) -> Result<TwistedProduct> {
    if warpings.len() != fibers.len() {
        return Err(Error::DimensionMismatch {
            what: "one warping per fiber".into(),
            expected: fibers.len(),
            got: warpings.len(),
        });
    }
    let mut coords: Vec<String> = base.coords().to_vec();
    let mut domain = base.domain().to_vec();
    let mut periodic = base.periodic().to_vec();
    let base_axes: Vec<usize> = (0..base.dim()).collect();
    let mut fiber_axes = Vec::with_capacity(fibers.len());
    for f in &fibers {
        let start = coords.len();
        for c in f.coords() {
            if coords.contains(c) {
                return Err(Error::DimensionMismatch {
                    what: format!("duplicate coordinate name `{c}`"),
                    expected: 0,
                    got: 1,
                });
            }
            coords.push(c.clone());
        }
        domain.extend_from_slice(f.domain());
        periodic.extend_from_slice(f.periodic());
        fiber_axes.push((start..coords.len()).collect::<Vec<usize>>());
    }

    // each warping may only see the base and its own fiber
    let mut compiled = Vec::with_capacity(warpings.len());
    let mut is_warped = true;
    for (i, w) in warpings.iter().enumerate() {
        let mut allowed: Vec<String> = base.coords().to_vec();
        for &a in &fiber_axes[i] {
            allowed.push(coords[a].clone());
        }
        for v in w.free_variables() {
            if !allowed.contains(v) {
                return Err(Error::Parse(crate::error::ParseError::UnknownIdentifier {
                    name: v.clone(),
                    known: allowed.join(", "),
                }));
            }
            if !base.coords().contains(v) {
                is_warped = false;
            }
        }
        compiled.push(w.compile(&coords).map_err(Error::Parse)?);
    }

    let total = coords.len();
    let base_dim = base.dim();
    let base_cl = base.clone();
    let fibers_cl = fibers.clone();
    let fiber_axes_cl = fiber_axes.clone();
    let compiled_cl = compiled.clone();
    let metric = Arc::new(move |x: &[f64]| {
        let mut g = DMatrix::zeros(total, total);
        let gb = base_cl.metric_raw(&x[..base_dim]);
        for a in 0..base_dim {
            for b in 0..base_dim {
                g[(a, b)] = gb[(a, b)];
            }
        }
        for (i, f) in fibers_cl.iter().enumerate() {
            let axes = &fiber_axes_cl[i];
            let xf: Vec<f64> = axes.iter().map(|&a| x[a]).collect();
            let gf = f.metric_raw(&xf);
            let u = compiled_cl[i].eval(x);
            let u2 = u * u;
            for a in 0..axes.len() {
                for b in 0..axes.len() {
                    g[(axes[a], axes[b])] = u2 * gf[(a, b)];
                }
            }
        }
        g
    });
    let manifold = ChartManifold::new(
        format!("{}_twisted", base.label()),
        coords,
        domain,
        metric,
    )
    .with_periodic(periodic);

    // positivity of every warping on a coarse build grid
    let grid = crate::extremal::region_grid(&manifold, 4, 4096)?;
    for (i, c) in compiled.iter().enumerate() {
        for p in &grid {
            let v = c.eval(p);
            if !(v > 0.0) {
                return Err(Error::NonPositiveWarping { warping: i, point: p.clone(), value: v });
            }
        }
    }

    let mut groups = vec![base_axes.clone()];
    groups.extend(fiber_axes.iter().cloned());
    let distributions = DistributionSet::coordinate_blocks(manifold.clone(), &groups)?;

    Ok(TwistedProduct {
        manifold,
        distributions,
        base_axes,
        fiber_axes,
        warpings,
        compiled,
        is_warped,
    })
}

impl TwistedProduct {
    pub fn k(&self) -> usize {
        1 + self.fiber_axes.len()
    }

    pub fn fiber_rank(&self, i: usize) -> usize {
        self.fiber_axes[i].len()
    }

    /// `Σ_{i≥2} n_i Δ⁽¹⁾u_i / u_i` at `x`: the leafwise-Laplacian side of the
    /// warped-product curvature formula.
    pub fn laplacian_side(&self, x: &[f64], cfg: &DiffConfig) -> Result<f64> {
        let mut sum = 0.0;
        for (i, c) in self.compiled.iter().enumerate() {
            let ni = self.fiber_rank(i) as f64;
            let cc = c.clone();
            let u: crate::geomcore::ScalarFieldFn = Arc::new(move |y: &[f64]| cc.eval(y));
            let lap = self.manifold.laplacian(&u, x, cfg, LaplacianMode::Leafwise(self.base_axes.clone()))?;
            sum += ni * lap / c.eval(x);
        }
        Ok(sum)
    }

    /// Residual between the curvature route (mixed scalar curvature of the
    /// base against everything else) and the leafwise-Laplacian route.
    pub fn twisted_smix_residual(&self, x: &[f64], cfg: &DiffConfig) -> Result<f64> {
        let dec = self.distributions.curvature_decomposition(x, cfg)?;
        let curvature_side = dec.pair_with_complement(0);
        let laplacian_side = self.laplacian_side(x, cfg)?;
        Ok((curvature_side - laplacian_side).abs())
    }

    /// `‖P₁ ∇ log u_i‖²` at `x` (base-block gradient under the base metric),
    /// one value per fiber.
    pub fn base_log_gradient_sq(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.manifold.metric_at(x)?;
        let nb = self.base_axes.len();
        let gb = DMatrix::from_fn(nb, nb, |a, b| g[(self.base_axes[a], self.base_axes[b])]);
        let gb_inv = gb.try_inverse().ok_or(Error::MetricNotPositiveDefinite { eigenvalue: 0.0 })?;
        let coords: Vec<String> = self.manifold.coords().to_vec();
        let mut out = Vec::with_capacity(self.warpings.len());
        for (i, w) in self.warpings.iter().enumerate() {
            let u = self.compiled[i].eval(x);
            let mut du = DVector::zeros(nb);
            for (bi, &axis) in self.base_axes.iter().enumerate() {
                let d = w.derivative(&coords[axis]).compile(&coords).map_err(Error::Parse)?;
                du[bi] = d.eval(x) / u;
            }
            out.push((du.transpose() * &gb_inv * &du)[(0, 0)]);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// leaf quadrature

/// Tensor-product trapezoid quadrature on a leaf: the listed axes vary over
/// their domain intervals (uniform without endpoint duplication on periodic
/// axes), the rest stay frozen at `template`. Weights include the volume
/// factor `√det(g restricted to the leaf block)`.
pub fn leaf_quadrature(
    m: &ChartManifold,
    axes: &[usize],
    template: &[f64],
    resolution: usize,
) -> Result<Vec<(Vec<f64>, f64)>> {
    assert!(resolution >= 2);
    for &a in axes {
        let (lo, hi) = m.domain()[a];
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::UnboundedLeaf { axis: a });
        }
    }
    let mut nodes: Vec<(Vec<f64>, f64)> = vec![(template.to_vec(), 1.0)];
    for &a in axes {
        let (lo, hi) = m.domain()[a];
        let span = hi - lo;
        let ticks: Vec<(f64, f64)> = if m.periodic()[a] {
            let h = span / resolution as f64;
            (0..resolution).map(|i| (lo + i as f64 * h, h)).collect()
        } else {
            let h = span / (resolution - 1) as f64;
            (0..resolution)
                .map(|i| {
                    let w = if i == 0 || i == resolution - 1 { 0.5 * h } else { h };
                    (lo + i as f64 * h, w)
                })
                .collect()
        };
        let mut next = Vec::with_capacity(nodes.len() * ticks.len());
        for (p, w) in &nodes {
            for &(t, tw) in &ticks {
                let mut q = p.clone();
                q[a] = t;
                next.push((q, w * tw));
            }
        }
        nodes = next;
    }
    for (p, w) in nodes.iter_mut() {
        let g = m.metric_raw(p);
        let sub = DMatrix::from_fn(axes.len(), axes.len(), |i, j| g[(axes[i], axes[j])]);
        *w *= sub.determinant().max(0.0).sqrt();
    }
    Ok(nodes)
}

// ---------------------------------------------------------------------------
// assembled scenario

/// A fully assembled scenario: manifold, optional structure, optional
/// immersion, check plan and numeric parameters.
#[derive(Clone)]
pub struct Scenario {
    pub label: String,
    pub manifold: ChartManifold,
    pub distributions: Option<DistributionSet>,
    pub immersion: Option<ImmersionData>,
    pub ambient_distributions: Option<DistributionSet>,
    pub twisted: Option<TwistedProduct>,
    pub checks: Vec<CheckSpec>,
    pub tolerances: Tolerances,
    pub grid: usize,
    pub optimizer: OptimizerParams,
    pub seed: u64,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("label", &self.label)
            .field("manifold", &self.manifold.label())
            .field("checks", &self.checks.len())
            .field("grid", &self.grid)
            .field("seed", &self.seed)
            .finish()
    }
}

impl Scenario {
    pub fn ambient(&self) -> Option<&ChartManifold> {
        self.immersion.as_ref().map(|i| i.ambient())
    }

    /// Evaluation grid over the source manifold (margin 10% per side on
    /// non-periodic axes).
    pub fn grid_points(&self) -> Result<Vec<Vec<f64>>> {
        crate::extremal::region_grid(&self.manifold, self.grid, 4096)
    }
}
