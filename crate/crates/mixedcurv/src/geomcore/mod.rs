//! Chart-level tensor calculus.
//!
//! A [`ChartManifold`] is a single coordinate chart: a dimension, an open
//! axis-aligned domain box and a metric given as a pure function from a
//! coordinate point to a symmetric positive-definite matrix. Everything else
//! (Christoffel symbols, curvature, divergence, Laplacian) is manufactured
//! from that function by central finite differences.
//!
//! Conventions:
//!
//! * `R(X,Y)Z = ∇_X ∇_Y Z − ∇_Y ∇_X Z − ∇_{[X,Y]} Z`, lowered as
//!   `R_{abcd} = g(R(∂_c,∂_d)∂_b, ∂_a)`, so that
//!   `K(X,Y) = R_{abcd} X^a Y^b X^c Y^d` for orthonormal `X, Y` and the unit
//!   sphere has `K = +1`;
//! * scalar curvature is the full trace `τ = Σ_{a≠b} K(e_a, e_b)`;
//! * `Δu = −Div(∇u)` (geometer sign: `Δ` has nonnegative spectrum on a
//!   closed manifold). This is the opposite of the sign most numerical
//!   libraries use.

pub mod stencil;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tensor4};

/// Metric field: chart point to matrix of components `g_{ab}`.
pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// Vector field: chart point to components `X^a`.
pub type VectorFieldFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
/// Scalar field.
pub type ScalarFieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Finite-difference scheme order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffScheme {
    Central2,
    Central4,
}

/// How the step scales with the coordinate value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepScaling {
    Absolute,
    RelativeToCoordinate,
}

/// Numerical differentiation configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiffConfig {
    pub scheme: DiffScheme,
    pub base_step: f64,
    pub step_scaling: StepScaling,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig {
            scheme: DiffScheme::Central4,
            base_step: 1e-4,
            step_scaling: StepScaling::Absolute,
        }
    }
}

impl DiffConfig {
    /// Configuration for differentiating fields that are themselves computed
    /// numerically (mean-curvature fields, flux terms). The larger step keeps
    /// the evaluation noise of the inner computation from being amplified.
    pub fn outer(&self) -> DiffConfig {
        DiffConfig { base_step: self.base_step.max(1e-4) * 50.0, ..*self }
    }
}

/// Laplacian flavour: full chart Laplacian or the leafwise one taken along a
/// subset of coordinates with the metric restricted to that block.
#[derive(Debug, Clone, PartialEq)]
pub enum LaplacianMode {
    Full,
    Leafwise(Vec<usize>),
}

/// A single coordinate chart with a smooth metric field.
#[derive(Clone)]
pub struct ChartManifold {
    label: String,
    coords: Vec<String>,
    domain: Vec<(f64, f64)>,
    periodic: Vec<bool>,
    metric: MetricFn,
    space_form: Option<f64>,
}

impl fmt::Debug for ChartManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartManifold")
            .field("label", &self.label)
            .field("coords", &self.coords)
            .field("domain", &self.domain)
            .field("periodic", &self.periodic)
            .field("space_form", &self.space_form)
            .finish()
    }
}

impl ChartManifold {
    pub fn new(
        label: impl Into<String>,
        coords: Vec<String>,
        domain: Vec<(f64, f64)>,
        metric: MetricFn,
    ) -> Self {
        let n = coords.len();
        assert_eq!(domain.len(), n, "domain box must have one interval per coordinate");
        ChartManifold {
            label: label.into(),
            coords,
            domain,
            periodic: vec![false; n],
            metric,
            space_form: None,
        }
    }

    /// Euclidean chart on the given box.
    pub fn euclidean(label: impl Into<String>, coords: Vec<String>, domain: Vec<(f64, f64)>) -> Self {
        let n = coords.len();
        Self::new(label, coords, domain, Arc::new(move |_x: &[f64]| DMatrix::identity(n, n)))
            .with_space_form(0.0)
    }

    /// Mark coordinates as periodic (angles); differencing ignores the flag,
    /// domain checks and quadrature respect it.
    pub fn with_periodic(mut self, periodic: Vec<bool>) -> Self {
        assert_eq!(periodic.len(), self.dim());
        self.periodic = periodic;
        self
    }

    /// Declare constant sectional curvature; extremal invariants then have a
    /// closed form that short-circuits optimization.
    pub fn with_space_form(mut self, c: f64) -> Self {
        self.space_form = Some(c);
        self
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn space_form(&self) -> Option<f64> {
        self.space_form
    }

    /// Raw metric evaluation with no validity checks (stencil hot path).
    pub fn metric_raw(&self, x: &[f64]) -> DMatrix<f64> {
        (self.metric)(x)
    }

    /// Metric evaluation with symmetry / positive-definiteness checks.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric_raw(x);
        let n = self.dim();
        if g.nrows() != n || g.ncols() != n {
            return Err(Error::DimensionMismatch { what: "metric matrix".into(), expected: n, got: g.nrows() });
        }
        let mut asym = 0.0_f64;
        for a in 0..n {
            for b in 0..a {
                asym = asym.max((g[(a, b)] - g[(b, a)]).abs());
            }
        }
        if asym > 1e-12 {
            return Err(Error::MetricNotSymmetric { residual: asym });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown { what: format!("metric not finite at {x:?}") });
        }
        let sym = (g.clone() + g.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_ev <= 0.0 {
            return Err(Error::MetricNotPositiveDefinite { eigenvalue: min_ev });
        }
        Ok(g)
    }

    /// True when `x` lies in the domain shrunk by `margin` on every
    /// non-periodic axis.
    pub fn contains(&self, x: &[f64], margin: f64) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.domain.iter().zip(self.periodic.iter())).all(
                |(&xi, (&(lo, hi), &per))| per || (xi > lo + margin && xi < hi - margin),
            )
    }

    /// Error unless the whole differencing stencil around `x` stays inside
    /// the domain.
    pub fn check_stencil_domain(&self, x: &[f64], cfg: &DiffConfig, levels: usize) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { what: "point".into(), expected: self.dim(), got: x.len() });
        }
        for axis in 0..self.dim() {
            if self.periodic[axis] {
                continue;
            }
            let reach = levels as f64 * stencil::extent(cfg) as f64 * stencil::step(cfg, x, axis);
            let (lo, hi) = self.domain[axis];
            if x[axis] - reach <= lo || x[axis] + reach >= hi {
                return Err(Error::PointOutsideDomain { point: x.to_vec(), axis });
            }
        }
        Ok(())
    }

    /// First and second metric derivatives plus inverse at a point.
    pub fn metric_jet(&self, x: &[f64], cfg: &DiffConfig, order: usize) -> Result<MetricJet> {
        self.check_stencil_domain(x, cfg, if order >= 2 { 2 } else { 1 })?;
        let g = self.metric_at(x)?;
        let n = self.dim();
        let ginv = g.clone().try_inverse().ok_or(Error::NumericalBreakdown {
            what: "metric inversion failed".into(),
        })?;
        let f = |y: &[f64]| self.metric_raw(y);
        let mut dg = Vec::with_capacity(n);
        for a in 0..n {
            let d = stencil::d1(&f, x, a, cfg);
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBreakdown { what: format!("metric derivative not finite at {x:?}") });
            }
            dg.push(d);
        }
        let mut d2g: Vec<Vec<DMatrix<f64>>> = Vec::new();
        if order >= 2 {
            for a in 0..n {
                let mut row = Vec::with_capacity(n);
                for b in 0..n {
                    let d = if b < a {
                        d2g[b][a].clone()
                    } else {
                        stencil::d2(&f, x, a, b, cfg)
                    };
                    if d.iter().any(|v: &f64| !v.is_finite()) {
                        return Err(Error::NumericalBreakdown {
                            what: format!("metric second derivative not finite at {x:?}"),
                        });
                    }
                    row.push(d);
                }
                d2g.push(row);
            }
        }
        Ok(MetricJet { g, ginv, dg, d2g })
    }

    /// Christoffel symbols `Γ^a_{bc}` of the Levi-Civita connection.
    pub fn christoffel(&self, x: &[f64], cfg: &DiffConfig) -> Result<Tensor3> {
        let jet = self.metric_jet(x, cfg, 1)?;
        Ok(jet.christoffel())
    }

    /// Riemann, Ricci and scalar curvature at a point.
    pub fn curvature_at(&self, x: &[f64], cfg: &DiffConfig) -> Result<CurvatureAtPoint> {
        let jet = self.metric_jet(x, cfg, 2)?;
        let n = self.dim();
        let gamma = jet.christoffel();
        let dgamma = jet.christoffel_derivatives();

        // R^a_{bcd} with R(∂_c,∂_d)∂_b = R^a_{bcd} ∂_a.
        let mut upper = Tensor4::zeros(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut v = dgamma[[c, a, d, b]] - dgamma[[d, a, c, b]];
                        for e in 0..n {
                            v += gamma[[a, c, e]] * gamma[[e, d, b]] - gamma[[a, d, e]] * gamma[[e, c, b]];
                        }
                        upper[[a, b, c, d]] = v;
                    }
                }
            }
        }
        let mut lowered = Tensor4::zeros(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut v = 0.0;
                        for e in 0..n {
                            v += jet.g[(a, e)] * upper[[e, b, c, d]];
                        }
                        lowered[[a, b, c, d]] = v;
                    }
                }
            }
        }
        let mut ricci = DMatrix::zeros(n, n);
        for b in 0..n {
            for d in 0..n {
                let mut v = 0.0;
                for a in 0..n {
                    v += upper[[a, b, a, d]];
                }
                ricci[(b, d)] = v;
            }
        }
        let mut tau = 0.0;
        for b in 0..n {
            for d in 0..n {
                tau += jet.ginv[(b, d)] * ricci[(b, d)];
            }
        }
        if !tau.is_finite() {
            return Err(Error::NumericalBreakdown { what: format!("curvature not finite at {x:?}") });
        }
        Ok(CurvatureAtPoint {
            point: x.to_vec(),
            metric: jet.g,
            metric_inv: jet.ginv,
            gamma,
            riemann_lowered: lowered,
            ricci,
            tau,
        })
    }

    /// Sectional curvature of the plane spanned by `u` and `v`.
    pub fn sectional(&self, x: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let curv = self.curvature_at(x, &DiffConfig::default())?;
        curv.sectional(u, v)
    }

    /// Divergence via the orthonormal-basis trace `Σ g(∇_{e_i} X, e_i)`.
    pub fn divergence(&self, field: &VectorFieldFn, x: &[f64], cfg: &DiffConfig) -> Result<f64> {
        let n = self.dim();
        let jet = self.metric_jet(x, cfg, 1)?;
        let gamma = jet.christoffel();
        let xval = field(x);
        if xval.len() != n {
            return Err(Error::DimensionMismatch { what: "vector field".into(), expected: n, got: xval.len() });
        }
        let f = |y: &[f64]| field(y);
        let mut dfield = Vec::with_capacity(n);
        for a in 0..n {
            dfield.push(stencil::d1(&f, x, a, cfg));
        }
        // ∇_{∂_a} X = (∂_a X^b + Γ^b_{ac} X^c) ∂_b, assembled as a matrix
        // N[b][a], then traced against any g-orthonormal basis.
        let mut nabla = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let mut v = dfield[a][b];
                for c in 0..n {
                    v += gamma[[b, a, c]] * xval[c];
                }
                nabla[(b, a)] = v;
            }
        }
        let basis = gram_schmidt(&jet.g, &DMatrix::identity(n, n), 1e-12)
            .ok_or(Error::NumericalBreakdown { what: "orthonormal basis construction failed".into() })?;
        let mut div = 0.0;
        for i in 0..n {
            let e = basis.column(i);
            let de = &nabla * e;
            div += (e.transpose() * &jet.g * de)[(0, 0)];
        }
        if !div.is_finite() {
            return Err(Error::NumericalBreakdown { what: format!("divergence not finite at {x:?}") });
        }
        Ok(div)
    }

    /// Divergence via the coordinate formula `(1/√det g) ∂_a(√det g X^a)`;
    /// independent route used to cross-check [`ChartManifold::divergence`].
    pub fn divergence_coordinate(&self, field: &VectorFieldFn, x: &[f64], cfg: &DiffConfig) -> Result<f64> {
        let n = self.dim();
        self.check_stencil_domain(x, cfg, 1)?;
        let sqrt_det = |y: &[f64]| self.metric_raw(y).determinant().max(0.0).sqrt();
        let mut div = 0.0;
        for a in 0..n {
            let fa = |y: &[f64]| sqrt_det(y) * field(y)[a];
            div += stencil::d1(&fa, x, a, cfg);
        }
        let sd = sqrt_det(x);
        if sd <= 0.0 {
            return Err(Error::MetricNotPositiveDefinite { eigenvalue: 0.0 });
        }
        Ok(div / sd)
    }

    /// Gradient `(∇u)^a = g^{ab} ∂_b u`.
    pub fn gradient(&self, u: &ScalarFieldFn, x: &[f64], cfg: &DiffConfig) -> Result<DVector<f64>> {
        let jet = self.metric_jet(x, cfg, 1)?;
        let n = self.dim();
        let f = |y: &[f64]| u(y);
        let mut du = DVector::zeros(n);
        for b in 0..n {
            du[b] = stencil::d1(&f, x, b, cfg);
        }
        Ok(&jet.ginv * du)
    }

    /// Geometer-sign Laplacian `Δu = −Div(∇u)`.
    ///
    /// `Leafwise(block)` restricts both the derivatives and the metric to the
    /// listed coordinates (the leaf through `x` with the transverse
    /// coordinates frozen); the metric must be block-diagonal across that
    /// block at `x`.
    pub fn laplacian(&self, u: &ScalarFieldFn, x: &[f64], cfg: &DiffConfig, mode: LaplacianMode) -> Result<f64> {
        let n = self.dim();
        let block: Vec<usize> = match &mode {
            LaplacianMode::Full => (0..n).collect(),
            LaplacianMode::Leafwise(b) => {
                let g = self.metric_at(x)?;
                let mut cross = 0.0_f64;
                for &a in b {
                    for c in 0..n {
                        if !b.contains(&c) {
                            cross = cross.max(g[(a, c)].abs());
                        }
                    }
                }
                if cross > 1e-10 {
                    return Err(Error::NotBlockDiagonal { residual: cross });
                }
                b.clone()
            }
        };
        self.check_stencil_domain(x, cfg, 2)?;
        let sub = |y: &[f64]| -> DMatrix<f64> {
            let g = self.metric_raw(y);
            DMatrix::from_fn(block.len(), block.len(), |i, j| g[(block[i], block[j])])
        };
        // Δu = −(1/√det gB) Σ_a ∂_a(√det gB · gB^{ab} ∂_b u), all indices in
        // the block, transverse coordinates frozen at x.
        let mut div = 0.0;
        for (ai, &a) in block.iter().enumerate() {
            let block_ref = &block;
            let flux = |y: &[f64]| -> f64 {
                let gb = sub(y);
                let det = gb.determinant();
                let ginv = gb.try_inverse().unwrap_or_else(|| DMatrix::zeros(block_ref.len(), block_ref.len()));
                let mut v = 0.0;
                for (bi, &b) in block_ref.iter().enumerate() {
                    let ub = |z: &[f64]| u(z);
                    v += ginv[(ai, bi)] * stencil::d1(&ub, y, b, cfg);
                }
                det.max(0.0).sqrt() * v
            };
            div += stencil::d1(&flux, x, a, cfg);
        }
        let det0 = sub(x).determinant();
        if det0 <= 0.0 {
            return Err(Error::MetricNotPositiveDefinite { eigenvalue: 0.0 });
        }
        let lap = -div / det0.sqrt();
        if !lap.is_finite() {
            return Err(Error::NumericalBreakdown { what: format!("laplacian not finite at {x:?}") });
        }
        Ok(lap)
    }
}

/// Metric value, inverse and derivatives at one point.
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    /// `dg[c][(a,b)] = ∂_c g_{ab}`.
    pub dg: Vec<DMatrix<f64>>,
    /// `d2g[c][d][(a,b)] = ∂_c ∂_d g_{ab}`; empty unless second order requested.
    pub d2g: Vec<Vec<DMatrix<f64>>>,
}

impl MetricJet {
    /// `Γ^a_{bc} = ½ g^{ad} (∂_b g_{dc} + ∂_c g_{db} − ∂_d g_{bc})`.
    pub fn christoffel(&self) -> Tensor3 {
        let n = self.g.nrows();
        Tensor3::from_fn(n, |a, b, c| {
            let mut v = 0.0;
            for d in 0..n {
                v += self.ginv[(a, d)] * (self.dg[b][(d, c)] + self.dg[c][(d, b)] - self.dg[d][(b, c)]);
            }
            0.5 * v
        })
    }

    /// `∂_e Γ^a_{bc}`, indexed `[e, a, b, c]`, assembled from the metric
    /// first and second derivatives (no nested differencing of Γ itself).
    pub fn christoffel_derivatives(&self) -> Tensor4 {
        let n = self.g.nrows();
        assert!(!self.d2g.is_empty(), "second-order jet required");
        // ∂_e g^{ad} = −(g^{-1} ∂_e g g^{-1})_{ad}
        let dginv: Vec<DMatrix<f64>> =
            (0..n).map(|e| -(&self.ginv * &self.dg[e] * &self.ginv)).collect();
        let mut out = Tensor4::zeros(n);
        for e in 0..n {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let mut v = 0.0;
                        for d in 0..n {
                            v += dginv[e][(a, d)]
                                * (self.dg[b][(d, c)] + self.dg[c][(d, b)] - self.dg[d][(b, c)]);
                            v += self.ginv[(a, d)]
                                * (self.d2g[e][b][(d, c)] + self.d2g[e][c][(d, b)]
                                    - self.d2g[e][d][(b, c)]);
                        }
                        out[[e, a, b, c]] = 0.5 * v;
                    }
                }
            }
        }
        out
    }
}

/// Curvature data at one chart point.
#[derive(Debug, Clone)]
pub struct CurvatureAtPoint {
    pub point: Vec<f64>,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub gamma: Tensor3,
    /// `R_{abcd} = g(R(∂_c,∂_d)∂_b, ∂_a)`.
    pub riemann_lowered: Tensor4,
    pub ricci: DMatrix<f64>,
    /// Full-trace scalar curvature `τ = g^{bd} Ric_{bd}`.
    pub tau: f64,
}

impl CurvatureAtPoint {
    pub fn dim(&self) -> usize {
        self.metric.nrows()
    }

    /// Quadrilinear evaluation `R(a, b, c, d) = R_{ijkl} a^i b^j c^k d^l`,
    /// equal to `g(R(c,d)b, a)` on coordinate components.
    pub fn rm4(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let n = self.dim();
        let r = &self.riemann_lowered;
        let mut v = 0.0;
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if b[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    if c[k] == 0.0 {
                        continue;
                    }
                    for l in 0..n {
                        v += r[[i, j, k, l]] * a[i] * b[j] * c[k] * d[l];
                    }
                }
            }
        }
        v
    }

    /// `K(u, v)` for arbitrary linearly independent `u, v` (normalized by the
    /// Gram determinant of the plane).
    pub fn sectional(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let gu = self.metric_pair(u, u);
        let gv = self.metric_pair(v, v);
        let guv = self.metric_pair(u, v);
        let wedge = gu * gv - guv * guv;
        if wedge < 1e-12 {
            return Err(Error::DegeneratePlane { wedge_norm: wedge });
        }
        Ok(self.rm4(u, v, u, v) / wedge)
    }

    pub fn metric_pair(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.metric * v)[(0, 0)]
    }

    /// Max relative residual over the pair symmetries
    /// `R_{abcd} = −R_{bacd} = −R_{abdc} = R_{cdab}`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.dim();
        let r = &self.riemann_lowered;
        let scale = r.max_abs().max(1.0);
        let mut res = 0.0_f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = r[[a, b, c, d]];
                        res = res.max((v + r[[b, a, c, d]]).abs());
                        res = res.max((v + r[[a, b, d, c]]).abs());
                        res = res.max((v - r[[c, d, a, b]]).abs());
                    }
                }
            }
        }
        res / scale
    }

    /// Max relative residual of the first Bianchi identity
    /// `R_{abcd} + R_{acdb} + R_{adbc} = 0`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.dim();
        let r = &self.riemann_lowered;
        let scale = r.max_abs().max(1.0);
        let mut res = 0.0_f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        res = res.max((r[[a, b, c, d]] + r[[a, c, d, b]] + r[[a, d, b, c]]).abs());
                    }
                }
            }
        }
        res / scale
    }

    /// `|τ − tr_{g^{-1}} Ric|` relative; trivially small by construction,
    /// kept as a consistency probe for the stored fields.
    pub fn trace_residual(&self) -> f64 {
        let n = self.dim();
        let mut t = 0.0;
        for b in 0..n {
            for d in 0..n {
                t += self.metric_inv[(b, d)] * self.ricci[(b, d)];
            }
        }
        (t - self.tau).abs() / self.tau.abs().max(1.0)
    }
}

/// Modified Gram–Schmidt of the columns of `v` under the inner product `g`.
/// Returns `None` when a column drops below `tol` in norm after projection.
pub fn gram_schmidt(g: &DMatrix<f64>, v: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let mut q = v.clone();
    let p = q.ncols();
    for j in 0..p {
        for i in 0..j {
            let qi = q.column(i).clone_owned();
            let coeff = (qi.transpose() * g * q.column(j))[(0, 0)];
            let mut col = q.column_mut(j);
            col.axpy(-coeff, &qi, 1.0);
        }
        let norm2 = (q.column(j).transpose() * g * q.column(j))[(0, 0)];
        if !(norm2 > tol) {
            return None;
        }
        let inv = 1.0 / norm2.sqrt();
        q.column_mut(j).scale_mut(inv);
    }
    Some(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn euclidean(n: usize) -> ChartManifold {
        ChartManifold::euclidean(
            "euclidean",
            (0..n).map(|i| format!("x{i}")).collect(),
            vec![(-10.0, 10.0); n],
        )
    }

    /// Round sphere chart `dt² + sin²t dφ²`.
    fn sphere2() -> ChartManifold {
        ChartManifold::new(
            "s2",
            vec!["t".into(), "phi".into()],
            vec![(0.05, std::f64::consts::PI - 0.05), (0.0, std::f64::consts::TAU)],
            Arc::new(|x: &[f64]| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, x[0].sin().powi(2)]))),
        )
        .with_periodic(vec![false, true])
        .with_space_form(1.0)
    }

    /// Nested sphere chart of dimension `d`, constant curvature +1.
    fn sphere(d: usize) -> ChartManifold {
        crate::scenarios::sphere_chart(d)
    }

    fn hyperbolic2() -> ChartManifold {
        ChartManifold::new(
            "h2",
            vec!["t".into(), "y".into()],
            vec![(-3.0, 3.0), (-3.0, 3.0)],
            Arc::new(|x: &[f64]| {
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, (2.0 * x[0]).exp()]))
            }),
        )
        .with_space_form(-1.0)
    }

    #[test]
    fn christoffel_vanishes_for_constant_metric() {
        let m = euclidean(3);
        let gamma = m.christoffel(&[0.3, -0.4, 1.1], &DiffConfig::default()).unwrap();
        for v in gamma.iter() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn christoffel_sphere_closed_form() {
        // Symbolic oracle for g = dt² + w(t)² dφ²:
        //   Γ^t_{φφ} = −w w',  Γ^φ_{tφ} = w'/w.
        let t = std::f64::consts::PI / 3.0;
        let (w, dw) = (t.sin(), t.cos());
        let gamma = sphere2().christoffel(&[t, 1.0], &DiffConfig::default()).unwrap();
        assert!((gamma[[0, 1, 1]] - (-w * dw)).abs() < 1e-6);
        assert!((gamma[[1, 0, 1]] - dw / w).abs() < 1e-6);
        assert!((gamma[[1, 1, 0]] - dw / w).abs() < 1e-6);
        // symmetric in the lower indices
        assert!((gamma[[1, 0, 1]] - gamma[[1, 1, 0]]).abs() < 1e-10);
        // numeric values quoted for t = π/3
        assert!((gamma[[0, 1, 1]] + 0.433_012_701_892_219_3).abs() < 1e-6);
        assert!((gamma[[1, 0, 1]] - 0.577_350_269_189_625_8).abs() < 1e-6);
    }

    #[test]
    fn christoffel_hyperbolic_closed_form() {
        // Same oracle with w = e^t at t = 0: Γ^t_{φφ} = −1, Γ^φ_{tφ} = 1.
        let gamma = hyperbolic2().christoffel(&[0.0, 0.3], &DiffConfig::default()).unwrap();
        assert!((gamma[[0, 1, 1]] + 1.0).abs() < 1e-6);
        assert!((gamma[[1, 0, 1]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn point_outside_domain_detected() {
        let m = sphere2();
        let err = m.christoffel(&[0.05, 1.0], &DiffConfig::default()).unwrap_err();
        assert!(matches!(err, Error::PointOutsideDomain { axis: 0, .. }));
    }

    #[test]
    fn non_positive_definite_metric_reported() {
        let m = ChartManifold::new(
            "bad",
            vec!["x".into(), "y".into()],
            vec![(-1.0, 1.0); 2],
            Arc::new(|_x: &[f64]| {
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]))
            }),
        );
        let err = m.metric_at(&[0.0, 0.0]).unwrap_err();
        match err {
            Error::MetricNotPositiveDefinite { eigenvalue } => assert!((eigenvalue + 2.0).abs() < 1e-12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn curvature_flat_space() {
        let m = euclidean(4);
        let c = m.curvature_at(&[0.1, 0.2, -0.3, 0.4], &DiffConfig::default()).unwrap();
        assert!(c.riemann_lowered.max_abs() < 1e-9);
        assert!(c.tau.abs() < 1e-9);
    }

    #[test]
    fn curvature_spheres_closed_form() {
        // τ = n(n−1)c for a space form of curvature c.
        let c2 = sphere2().curvature_at(&[std::f64::consts::FRAC_PI_2, 1.0], &DiffConfig::default()).unwrap();
        assert!((c2.tau - 2.0).abs() < 1e-5, "tau(S²) = {}", c2.tau);

        let s3 = sphere(3);
        let c3 = s3.curvature_at(&[1.2, 1.0, 2.0], &DiffConfig::default()).unwrap();
        assert!((c3.tau - 6.0).abs() < 1e-5, "tau(S³) = {}", c3.tau);
    }

    #[test]
    fn curvature_symmetries_and_bianchi() {
        let s3 = sphere(3);
        let c = s3.curvature_at(&[1.2, 0.9, 2.5], &DiffConfig::default()).unwrap();
        assert!(c.symmetry_residual() < 1e-6);
        assert!(c.bianchi_residual() < 1e-6);
        assert!(c.trace_residual() < 1e-10);
    }

    #[test]
    fn sectional_space_forms() {
        let m = euclidean(3);
        let k = m
            .sectional(
                &[0.0, 0.0, 0.0],
                &DVector::from_vec(vec![1.0, 2.0, 0.0]),
                &DVector::from_vec(vec![0.0, 1.0, 1.0]),
            )
            .unwrap();
        assert!(k.abs() < 1e-9);

        let s3 = sphere(3);
        let k = s3
            .sectional(
                &[1.2, 1.0, 2.0],
                &DVector::from_vec(vec![1.0, 0.4, -0.3]),
                &DVector::from_vec(vec![0.2, 1.0, 0.8]),
            )
            .unwrap();
        assert!((k - 1.0).abs() < 1e-5, "K = {k}");
    }

    #[test]
    fn sectional_product_mixed_plane_flat() {
        // S²(1)×ℝ: a plane spanned by one sphere direction and the line
        // direction is flat (block-metric oracle).
        let m = crate::scenarios::product_chart(
            "s2xr",
            &[sphere2(), ChartManifold::euclidean("r", vec!["z".into()], vec![(-5.0, 5.0)])],
        );
        let k = m
            .sectional(
                &[1.0, 2.0, 0.3],
                &DVector::from_vec(vec![1.0, 0.0, 0.0]),
                &DVector::from_vec(vec![0.0, 0.0, 1.0]),
            )
            .unwrap();
        assert!(k.abs() < 1e-5);
        // while the sphere-tangent plane has K = 1
        let k = m
            .sectional(
                &[1.0, 2.0, 0.3],
                &DVector::from_vec(vec![1.0, 0.0, 0.0]),
                &DVector::from_vec(vec![0.0, 1.0, 0.0]),
            )
            .unwrap();
        assert!((k - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sectional_degenerate_plane_rejected() {
        let m = euclidean(3);
        let u = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let err = m.sectional(&[0.0; 3], &u, &(u.clone() * 2.0)).unwrap_err();
        assert!(matches!(err, Error::DegeneratePlane { .. }));
    }

    #[test]
    fn sectional_plane_basis_invariance() {
        let s3 = sphere(3);
        let x = [1.2, 1.0, 2.0];
        let curv = s3.curvature_at(&x, &DiffConfig::default()).unwrap();
        let u = DVector::from_vec(vec![1.0, 0.3, -0.2]);
        let v = DVector::from_vec(vec![0.1, 1.0, 0.5]);
        let k0 = curv.sectional(&u, &v).unwrap();
        // replace (u, v) by another basis of the same 2-plane
        let u2 = &u * 2.0 + &v * 0.7;
        let v2 = &u * -0.3 + &v * 1.1;
        let k1 = curv.sectional(&u2, &v2).unwrap();
        assert!((k0 - k1).abs() <= 1e-9 * k0.abs().max(1.0));
    }

    #[test]
    fn divergence_examples() {
        let m = euclidean(3);
        let cfg = DiffConfig::default();
        let constant: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, -2.0, 0.5]));
        assert!(m.divergence(&constant, &[0.1, 0.2, 0.3], &cfg).unwrap().abs() < 1e-10);

        // radial field X(x) = x has divergence n
        for n in 2..=4 {
            let m = euclidean(n);
            let radial: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_column_slice(x));
            let d = m.divergence(&radial, &vec![0.3; n], &cfg).unwrap();
            assert!((d - n as f64).abs() < 1e-8, "dim {n}: {d}");
        }

        // ∂_t on the round sphere: Div ∂_t = cot t
        let t = std::f64::consts::FRAC_PI_4;
        let field: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, 0.0]));
        let d = sphere2().divergence(&field, &[t, 1.0], &cfg).unwrap();
        assert!((d - 1.0).abs() < 1e-5, "cot(π/4) = {d}");
    }

    #[test]
    fn divergence_two_routes_agree() {
        let cfg = DiffConfig::default();
        let m = sphere2();
        let field: VectorFieldFn =
            Arc::new(|x: &[f64]| DVector::from_vec(vec![x[0].cos(), x[1].sin() + 0.5]));
        let x = [1.1, 2.0];
        let a = m.divergence(&field, &x, &cfg).unwrap();
        let b = m.divergence_coordinate(&field, &x, &cfg).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn divergence_linear_in_field() {
        let cfg = DiffConfig::default();
        let m = sphere2();
        let f1: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_vec(vec![x[0].cos(), 0.2]));
        let f2: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_vec(vec![0.1, x[0].sin()]));
        let sum: VectorFieldFn = Arc::new(move |x: &[f64]| {
            DVector::from_vec(vec![x[0].cos() + 0.1, 0.2 + x[0].sin()])
        });
        let x = [1.3, 0.7];
        let a = m.divergence(&f1, &x, &cfg).unwrap() + m.divergence(&f2, &x, &cfg).unwrap();
        let b = m.divergence(&sum, &x, &cfg).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn laplacian_constant_and_analytic() {
        let cfg = DiffConfig::default();
        let line = ChartManifold::euclidean("line", vec!["t".into()], vec![(-5.0, 5.0)]);
        let constant: ScalarFieldFn = Arc::new(|_x: &[f64]| 5.0);
        assert!(line.laplacian(&constant, &[0.4], &cfg, LaplacianMode::Full).unwrap().abs() < 1e-8);

        // Δu = −u″: u = e^t gives Δu/u = −1
        let expt: ScalarFieldFn = Arc::new(|x: &[f64]| x[0].exp());
        let lap = line.laplacian(&expt, &[0.4], &cfg, LaplacianMode::Full).unwrap();
        assert!((lap / 0.4_f64.exp() + 1.0).abs() < 1e-6, "Δe^t/e^t = {}", lap / 0.4_f64.exp());
    }

    #[test]
    fn leafwise_laplacian_on_warped_chart() {
        // On dt² + sin²t dφ², the leafwise Laplacian along {t} of u = sin t
        // is −u″ = sin t, so Δ⁽¹⁾u/u = 1 everywhere.
        let cfg = DiffConfig::default();
        let m = sphere2();
        let u: ScalarFieldFn = Arc::new(|x: &[f64]| x[0].sin());
        for &t in &[0.8, 1.3, 2.1] {
            let lap = m.laplacian(&u, &[t, 1.0], &cfg, LaplacianMode::Leafwise(vec![0])).unwrap();
            assert!((lap / t.sin() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn leafwise_laplacian_requires_block_diagonal() {
        let m = ChartManifold::new(
            "sheared",
            vec!["x".into(), "y".into()],
            vec![(-1.0, 1.0); 2],
            Arc::new(|_x: &[f64]| {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0])
            }),
        );
        let u: ScalarFieldFn = Arc::new(|x: &[f64]| x[0]);
        let err = m
            .laplacian(&u, &[0.0, 0.0], &DiffConfig::default(), LaplacianMode::Leafwise(vec![0]))
            .unwrap_err();
        assert!(matches!(err, Error::NotBlockDiagonal { .. }));
    }

    #[test]
    fn scheme_convergence_order() {
        // central2 vs central4 disagreement is O(h²): halving the step
        // shrinks it by a factor in [3, 5] on a smooth metric.
        let m = sphere2();
        let x = [1.1, 0.5];
        let gamma = |h: f64, scheme: DiffScheme| {
            let cfg = DiffConfig { scheme, base_step: h, step_scaling: StepScaling::Absolute };
            m.christoffel(&x, &cfg).unwrap()[[0, 1, 1]]
        };
        let d = |h: f64| (gamma(h, DiffScheme::Central2) - gamma(h, DiffScheme::Central4)).abs();
        let ratio = d(1e-2) / d(5e-3);
        assert!((3.0..=5.0).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn randomized_perturbation_metrics_satisfy_symmetries() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..8 {
            let n = 3;
            // g = I + small symmetric quadratic form in the coordinates
            let mut coef = vec![[[0.0; 3]; 3]; 6];
            for c in coef.iter_mut() {
                for row in c.iter_mut() {
                    for v in row.iter_mut() {
                        *v = rng.gen_range(-0.05..0.05);
                    }
                }
            }
            let coef = Arc::new(coef);
            let cc = coef.clone();
            let m = ChartManifold::new(
                format!("perturbed{trial}"),
                vec!["x".into(), "y".into(), "z".into()],
                vec![(-1.0, 1.0); 3],
                Arc::new(move |x: &[f64]| {
                    let mut g = DMatrix::identity(n, n);
                    let mut idx = 0;
                    for a in 0..n {
                        for b in a..n {
                            let mut q = 0.0;
                            for c in 0..n {
                                for d in 0..n {
                                    q += cc[idx][c][d] * x[c] * x[d];
                                }
                            }
                            g[(a, b)] += q;
                            if a != b {
                                g[(b, a)] += q;
                            }
                            idx += 1;
                        }
                    }
                    g
                }),
            );
            let x = [0.2, -0.3, 0.4];
            let c = m.curvature_at(&x, &DiffConfig::default()).unwrap();
            assert!(c.symmetry_residual() < 1e-6, "sym {}", c.symmetry_residual());
            assert!(c.bianchi_residual() < 1e-6, "bianchi {}", c.bianchi_residual());
        }
    }
}
