//! Isometric immersions at chart level: differential, isometry check,
//! ambient second fundamental form, mean curvatures, Gauss-equation and
//! trace-identity residuals.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geomcore::{gram_schmidt, stencil, ChartManifold, DiffConfig};
use crate::structure::{AdaptedFrame, DistributionSet};

/// Map of source coordinates to ambient coordinates.
pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Jacobian of the map (ambient dim × source dim).
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Componentwise tolerance on the pullback residual for a map to count as an
/// isometric immersion.
pub const TOL_ISO: f64 = 1e-8;

/// An immersion of one chart into another, with its differential either
/// supplied analytically or manufactured by finite differences (flagged).
#[derive(Clone)]
pub struct ImmersionData {
    source: ChartManifold,
    distributions: Option<DistributionSet>,
    ambient: ChartManifold,
    map: MapFn,
    jacobian: Option<JacobianFn>,
}

impl ImmersionData {
    pub fn new(
        source: ChartManifold,
        ambient: ChartManifold,
        map: MapFn,
        jacobian: Option<JacobianFn>,
    ) -> Self {
        ImmersionData { source, distributions: None, ambient, map, jacobian }
    }

    pub fn with_distributions(mut self, d: DistributionSet) -> Self {
        self.distributions = Some(d);
        self
    }

    pub fn source(&self) -> &ChartManifold {
        &self.source
    }

    pub fn ambient(&self) -> &ChartManifold {
        &self.ambient
    }

    pub fn distributions(&self) -> Option<&DistributionSet> {
        self.distributions.as_ref()
    }

    /// True when the differential comes from finite differences of the map
    /// rather than a user-supplied function.
    pub fn differential_is_fd(&self) -> bool {
        self.jacobian.is_none()
    }

    pub fn map_at(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }

    /// Differential at `x`, checking for full rank.
    pub fn differential(&self, x: &[f64], cfg: &DiffConfig) -> Result<DMatrix<f64>> {
        let n = self.source.dim();
        let m = self.ambient.dim();
        let j = match &self.jacobian {
            Some(jac) => jac(x),
            None => {
                let f = |y: &[f64]| DVector::from_vec((self.map)(y));
                let mut j = DMatrix::zeros(m, n);
                for a in 0..n {
                    j.set_column(a, &stencil::d1(&f, x, a, cfg));
                }
                j
            }
        };
        if j.nrows() != m || j.ncols() != n {
            return Err(Error::DimensionMismatch { what: "jacobian".into(), expected: m * n, got: j.nrows() * j.ncols() });
        }
        let svd = j.clone().svd(false, false);
        let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(sigma_min >= 1e-8) {
            return Err(Error::RankDeficientDifferential { sigma_min });
        }
        Ok(j)
    }

    /// Max-norm of `Jᵀ ḡ J − g`; at most [`TOL_ISO`] for a valid isometric
    /// immersion at `x`.
    pub fn isometry_residual(&self, x: &[f64], cfg: &DiffConfig) -> Result<f64> {
        let j = self.differential(x, cfg)?;
        let g = self.source.metric_at(x)?;
        let fx = self.map_at(x);
        let gbar = self.ambient.metric_at(&fx)?;
        let pullback = j.transpose() * gbar * &j;
        Ok((pullback - g).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    /// Second derivatives of the map, `d2map[a][b] = ∂_a ∂_b f`.
    fn map_hessian(&self, x: &[f64], cfg: &DiffConfig) -> Vec<Vec<DVector<f64>>> {
        let n = self.source.dim();
        let f = |y: &[f64]| DVector::from_vec((self.map)(y));
        let mut out: Vec<Vec<DVector<f64>>> = vec![vec![DVector::zeros(self.ambient.dim()); n]; n];
        for a in 0..n {
            for b in a..n {
                let d = stencil::d2(&f, x, a, b, cfg);
                out[a][b] = d.clone();
                out[b][a] = d;
            }
        }
        out
    }

    /// Ambient second fundamental form on the adapted frame, with mean
    /// curvature decomposition and norms. Requires a distribution set for the
    /// block quantities; without one, the whole frame forms a single block.
    pub fn ambient_sff(&self, x: &[f64], cfg: &DiffConfig) -> Result<AmbientSff> {
        let iso = self.isometry_residual(x, cfg)?;
        if iso > TOL_ISO {
            return Err(Error::NotIsometric { residual: iso });
        }
        let frame = match &self.distributions {
            Some(d) => d.adapted_frame(x, None)?,
            None => {
                let trivial = DistributionSet::coordinate_blocks(
                    self.source.clone(),
                    &[(0..self.source.dim() - 1).collect::<Vec<_>>(), vec![self.source.dim() - 1]],
                )?;
                let mut f = trivial.adapted_frame(x, None)?;
                // single block when no distinguished structure is present
                f.block_of = vec![0; f.vectors.len()];
                f
            }
        };
        self.ambient_sff_with_frame(x, cfg, &frame)
    }

    /// Same, reusing a caller-supplied adapted frame (frame-invariance tests).
    pub fn ambient_sff_with_frame(
        &self,
        x: &[f64],
        cfg: &DiffConfig,
        frame: &AdaptedFrame,
    ) -> Result<AmbientSff> {
        let n = self.source.dim();
        let m = self.ambient.dim();
        let k = frame.block_of.iter().copied().max().unwrap_or(0) + 1;
        let j = self.differential(x, cfg)?;
        let fx = self.map_at(x);
        let gbar = self.ambient.metric_at(&fx)?;
        let gamma_bar = self.ambient.christoffel(&fx, cfg)?;
        let hess = self.map_hessian(x, cfg);

        // ∇̄_{∂_a} f_* ∂_b in ambient coordinates
        let jcols: Vec<DVector<f64>> = (0..n).map(|c| j.column(c).clone_owned()).collect();
        let mut dsec: Vec<Vec<DVector<f64>>> = vec![vec![DVector::zeros(m); n]; n];
        for a in 0..n {
            for b in 0..n {
                let mut w = hess[a][b].clone();
                for alpha in 0..m {
                    let mut v = 0.0;
                    for beta in 0..m {
                        let jb = jcols[a][beta];
                        if jb == 0.0 {
                            continue;
                        }
                        for gam in 0..m {
                            v += gamma_bar[[alpha, beta, gam]] * jb * jcols[b][gam];
                        }
                    }
                    w[alpha] += v;
                }
                dsec[a][b] = w;
            }
        }

        // tangential projector from the orthonormalized pushed-forward frame
        let pushed = DMatrix::from_fn(m, n, |r, c| {
            let mut v = 0.0;
            for i in 0..n {
                v += j[(r, i)] * frame.vectors[c][i];
            }
            v
        });
        let tangent =
            gram_schmidt(&gbar, &pushed, 1e-16).ok_or(Error::RankDeficientDifferential { sigma_min: 0.0 })?;
        // projector idempotency check
        let mut proj = DMatrix::<f64>::identity(m, m);
        for c in 0..n {
            let t = tangent.column(c).clone_owned();
            proj -= &t * (t.transpose() * &gbar);
        }
        let idem = (&proj * &proj - &proj).iter().fold(0.0_f64, |mx, v| mx.max(v.abs()));
        if idem > 1e-12 {
            return Err(Error::NumericalBreakdown { what: format!("normal projector not idempotent ({idem:.3e})") });
        }
        let normal_project = |w: &DVector<f64>| -> DVector<f64> { &proj * w };

        // h̄ on the adapted frame via bilinearity over coordinate pairs
        let mut hbar = vec![vec![DVector::zeros(m); n]; n];
        for (ea, va) in frame.vectors.iter().enumerate() {
            for (eb, vb) in frame.vectors.iter().enumerate() {
                let mut w = DVector::zeros(m);
                for a in 0..n {
                    if va[a] == 0.0 {
                        continue;
                    }
                    for b in 0..n {
                        if vb[b] == 0.0 {
                            continue;
                        }
                        w.axpy(va[a] * vb[b], &dsec[a][b], 1.0);
                    }
                }
                hbar[ea][eb] = normal_project(&w);
            }
        }

        let sq = |v: &DVector<f64>| (v.transpose() * &gbar * v)[(0, 0)];

        let mut mean = DVector::zeros(m);
        for a in 0..n {
            mean += &hbar[a][a];
        }
        let mut mean_blocks = vec![DVector::zeros(m); k];
        for a in 0..n {
            mean_blocks[frame.block_of[a]] += &hbar[a][a];
        }
        let mut norm_sq = 0.0;
        let mut block_norms = vec![0.0; k];
        let mut mixed = DMatrix::zeros(k, k);
        for a in 0..n {
            for b in 0..n {
                let v = sq(&hbar[a][b]);
                norm_sq += v;
                let (ia, ib) = (frame.block_of[a], frame.block_of[b]);
                if ia == ib {
                    block_norms[ia] += v;
                } else {
                    // ordered pairs: each unordered mixed pair counts twice
                    mixed[(ia.min(ib), ia.max(ib))] += v;
                }
            }
        }
        let mixed_norms: Vec<((usize, usize), f64)> = (0..k)
            .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
            .map(|(i, j)| ((i, j), mixed[(i, j)]))
            .collect();

        let norm_mean_sq = sq(&mean);
        let mean_blocks_norm_sq: Vec<f64> = mean_blocks.iter().map(|v| sq(v)).collect();
        Ok(AmbientSff {
            point: x.to_vec(),
            ambient_point: fx,
            ambient_metric: gbar,
            pushed_frame: pushed,
            tangent_frame: tangent,
            block_of: frame.block_of.clone(),
            hbar,
            norm_mean_sq,
            mean_blocks_norm_sq,
            mean_curvature: mean,
            mean_blocks,
            norm_hbar_sq: norm_sq,
            block_norms,
            mixed_norms,
        })
    }

    /// Max Gauss-equation residual over all frame 4-tuples.
    pub fn gauss_residual(&self, x: &[f64], cfg: &DiffConfig) -> Result<f64> {
        let sff = self.ambient_sff(x, cfg)?;
        let src_curv = self.source.curvature_at(x, cfg)?;
        let amb_curv = self.ambient.curvature_at(&sff.ambient_point, cfg)?;
        let frame = match &self.distributions {
            Some(d) => d.adapted_frame(x, None)?,
            None => {
                let trivial = DistributionSet::coordinate_blocks(
                    self.source.clone(),
                    &[(0..self.source.dim() - 1).collect::<Vec<_>>(), vec![self.source.dim() - 1]],
                )?;
                trivial.adapted_frame(x, None)?
            }
        };
        let n = self.source.dim();
        let pushed: Vec<DVector<f64>> = (0..n).map(|c| sff.pushed_frame.column(c).clone_owned()).collect();
        let gb = &sff.ambient_metric;
        let pair = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * gb * v)[(0, 0)];

        let mut worst = 0.0_f64;
        for y in 0..n {
            for z in 0..n {
                for u in 0..n {
                    for v in 0..n {
                        // ḡ(R̄(Y,Z)U, V) = g(R(Y,Z)U, V)
                        //   + ḡ(h̄(Y,U), h̄(Z,V)) − ḡ(h̄(Z,U), h̄(Y,V))
                        let lhs = amb_curv.rm4(&pushed[v], &pushed[u], &pushed[y], &pushed[z]);
                        let intr = src_curv.rm4(&frame.vectors[v], &frame.vectors[u], &frame.vectors[y], &frame.vectors[z]);
                        let extr = pair(&sff.hbar[y][u], &sff.hbar[z][v]) - pair(&sff.hbar[z][u], &sff.hbar[y][v]);
                        worst = worst.max((lhs - intr - extr).abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Residual of a trace identity obtained from the Gauss equation:
    /// full trace (`Si`) or the trace along one block (`Sii`).
    pub fn trace_identity_residual(&self, x: &[f64], id: TraceIdentity, cfg: &DiffConfig) -> Result<f64> {
        let parts = self.trace_identity_parts(x, id, cfg)?;
        Ok((parts.curvature_side - parts.sff_side).abs())
    }

    /// Both sides of a trace identity: `τ̄|_M − τ` and `‖h̄‖² − ‖H̄‖²` (full),
    /// or the per-block versions.
    pub fn trace_identity_parts(&self, x: &[f64], id: TraceIdentity, cfg: &DiffConfig) -> Result<TraceParts> {
        let sff = self.ambient_sff(x, cfg)?;
        let amb_curv = self.ambient.curvature_at(&sff.ambient_point, cfg)?;
        let n = self.source.dim();
        let pushed: Vec<DVector<f64>> = (0..n).map(|c| sff.pushed_frame.column(c).clone_owned()).collect();

        let members: Vec<usize> = match id {
            TraceIdentity::Si => (0..n).collect(),
            TraceIdentity::Sii(i) => (0..n).filter(|&a| sff.block_of[a] == i).collect(),
        };
        let mut tau_bar = 0.0;
        for &a in &members {
            for &b in &members {
                if a != b {
                    tau_bar += amb_curv.rm4(&pushed[a], &pushed[b], &pushed[a], &pushed[b]);
                }
            }
        }
        let (tau_src, h_sq, mean_sq) = match id {
            TraceIdentity::Si => {
                let curv = self.source.curvature_at(x, cfg)?;
                (curv.tau, sff.norm_hbar_sq, sff.norm_mean_sq)
            }
            TraceIdentity::Sii(i) => {
                let d = self.distributions.as_ref().ok_or(Error::MissingDistributions)?;
                let dec = d.curvature_decomposition(x, cfg)?;
                (dec.per_block_tau[i], sff.block_norms[i], sff.mean_blocks_norm_sq[i])
            }
        };
        Ok(TraceParts { curvature_side: tau_bar - tau_src, sff_side: h_sq - mean_sq })
    }
}

/// Which trace of the Gauss equation to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceIdentity {
    /// Full trace: `τ̄|_M − τ = ‖h̄‖² − ‖H̄‖²`.
    Si,
    /// Trace along block `i`: `τ̄(D_i) − τ(D_i) = ‖h̄_i‖² − ‖H̄_i‖²`.
    Sii(usize),
}

/// The two independently computed sides of a trace identity.
#[derive(Debug, Clone, Copy)]
pub struct TraceParts {
    pub curvature_side: f64,
    pub sff_side: f64,
}

/// Ambient second fundamental form data at one point.
#[derive(Debug, Clone)]
pub struct AmbientSff {
    pub point: Vec<f64>,
    pub ambient_point: Vec<f64>,
    pub ambient_metric: DMatrix<f64>,
    /// Pushed-forward adapted frame `f_* e_a` as columns (isometric, so
    /// already ḡ-orthonormal up to the isometry residual).
    pub pushed_frame: DMatrix<f64>,
    /// Strictly ḡ-orthonormalized copy of the pushed frame.
    pub tangent_frame: DMatrix<f64>,
    pub block_of: Vec<usize>,
    /// `h̄(e_a, e_b)` in ambient coordinates, ḡ-orthogonal to the image.
    pub hbar: Vec<Vec<DVector<f64>>>,
    /// `H̄ = Σ_a h̄(e_a, e_a)`.
    pub mean_curvature: DVector<f64>,
    /// `H̄_i`, the block contributions; `H̄ = Σ_i H̄_i`.
    pub mean_blocks: Vec<DVector<f64>>,
    pub norm_hbar_sq: f64,
    pub norm_mean_sq: f64,
    pub mean_blocks_norm_sq: Vec<f64>,
    /// `‖h̄_i‖²` over ordered intra-block pairs.
    pub block_norms: Vec<f64>,
    /// `‖h̄^mix_{ij}‖²` for `i < j`, over ordered cross pairs (both orders).
    pub mixed_norms: Vec<((usize, usize), f64)>,
}

impl AmbientSff {
    pub fn mixed_norm_total(&self) -> f64 {
        self.mixed_norms.iter().map(|(_, v)| v).sum()
    }

    /// `max_i ‖H̄_i − H̄/k‖`, the spread of the block mean curvatures.
    pub fn mean_spread(&self) -> f64 {
        let k = self.mean_blocks.len() as f64;
        let avg = &self.mean_curvature * (1.0 / k);
        self.mean_blocks
            .iter()
            .map(|h| {
                let d = h - &avg;
                (d.transpose() * &self.ambient_metric * &d)[(0, 0)].max(0.0).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Residual of the decomposition `‖h̄‖² = Σ‖h̄_i‖² + Σ_{i<j}‖h̄^mix‖²`.
    pub fn decomposition_residual(&self) -> f64 {
        let sum: f64 = self.block_norms.iter().sum::<f64>() + self.mixed_norm_total();
        (self.norm_hbar_sq - sum).abs()
    }

    /// Residual of `H̄ = Σ_i H̄_i`.
    pub fn mean_sum_residual(&self) -> f64 {
        let mut s = DVector::zeros(self.mean_curvature.len());
        for h in &self.mean_blocks {
            s += h;
        }
        (s - &self.mean_curvature).norm()
    }

    /// Worst ḡ-pairing of any `h̄(e_a, e_b)` with the tangent frame.
    pub fn normality_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for row in &self.hbar {
            for v in row {
                for c in 0..self.tangent_frame.ncols() {
                    let t = self.tangent_frame.column(c);
                    worst = worst.max((t.transpose() * &self.ambient_metric * v)[(0, 0)].abs());
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{sphere_chart, sphere_immersion, warped_metric};
    use std::sync::Arc;

    fn cfg() -> DiffConfig {
        DiffConfig::default()
    }

    fn plane_in_r3() -> ImmersionData {
        let source = ChartManifold::euclidean("plane", vec!["x".into(), "y".into()], vec![(-3.0, 3.0); 2]);
        let ambient = ChartManifold::euclidean("r3", vec!["X".into(), "Y".into(), "Z".into()], vec![(-9.0, 9.0); 3]);
        let map: MapFn = Arc::new(|x: &[f64]| vec![x[0], x[1], 0.0]);
        let jac: JacobianFn = Arc::new(|_x: &[f64]| {
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        });
        let d = DistributionSet::coordinate_blocks(source.clone(), &[vec![0], vec![1]]).unwrap();
        ImmersionData::new(source, ambient, map, Some(jac)).with_distributions(d)
    }

    fn paraboloid() -> ImmersionData {
        let source = ChartManifold::new(
            "graph",
            vec!["x".into(), "y".into()],
            vec![(-1.0, 1.0); 2],
            Arc::new(|x: &[f64]| {
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        1.0 + 4.0 * x[0] * x[0],
                        4.0 * x[0] * x[1],
                        4.0 * x[0] * x[1],
                        1.0 + 4.0 * x[1] * x[1],
                    ],
                )
            }),
        );
        let ambient = ChartManifold::euclidean("r3", vec!["X".into(), "Y".into(), "Z".into()], vec![(-9.0, 9.0); 3]);
        let map: MapFn = Arc::new(|x: &[f64]| vec![x[0], x[1], x[0] * x[0] + x[1] * x[1]]);
        let jac: JacobianFn = Arc::new(|x: &[f64]| {
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0 * x[0], 2.0 * x[1]])
        });
        let d = DistributionSet::coordinate_blocks(source.clone(), &[vec![0], vec![1]]).unwrap();
        ImmersionData::new(source, ambient, map, Some(jac)).with_distributions(d)
    }

    #[test]
    fn identity_map_is_isometric() {
        let m = ChartManifold::euclidean("e3", vec!["x".into(), "y".into(), "z".into()], vec![(-3.0, 3.0); 3]);
        let imm = ImmersionData::new(
            m.clone(),
            m,
            Arc::new(|x: &[f64]| x.to_vec()),
            Some(Arc::new(|_x: &[f64]| DMatrix::identity(3, 3))),
        );
        assert_eq!(imm.isometry_residual(&[0.1, 0.2, 0.3], &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn sphere_chart_is_isometric() {
        let imm = sphere_immersion(2);
        let r = imm.isometry_residual(&[1.0, 2.0], &cfg()).unwrap();
        assert!(r <= 1e-12, "residual {r}");
    }

    #[test]
    fn wrong_source_metric_detected() {
        // source declared flat but mapped onto the round sphere: residual is
        // |sin²t − 1| at the queried t
        let source = ChartManifold::euclidean("flat", vec!["t".into(), "phi".into()], vec![(0.1, 3.0), (0.0, 6.3)]);
        let ambient = ChartManifold::euclidean("r3", vec!["X".into(), "Y".into(), "Z".into()], vec![(-2.0, 2.0); 3]);
        let map: MapFn = Arc::new(|x: &[f64]| {
            vec![x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin(), x[0].cos()]
        });
        let imm = ImmersionData::new(source, ambient, map, None);
        let t = 1.1;
        let r = imm.isometry_residual(&[t, 2.0], &cfg()).unwrap();
        assert!((r - (t.sin().powi(2) - 1.0).abs()) < 1e-6, "residual {r}");
        assert!(imm.differential_is_fd());
    }

    #[test]
    fn rank_deficiency_detected() {
        let source = ChartManifold::euclidean("line", vec!["t".into()], vec![(-1.0, 1.0)]);
        let ambient = ChartManifold::euclidean("r2", vec!["X".into(), "Y".into()], vec![(-2.0, 2.0); 2]);
        let imm = ImmersionData::new(
            source,
            ambient,
            Arc::new(|_x: &[f64]| vec![0.0, 0.0]),
            Some(Arc::new(|_x: &[f64]| DMatrix::zeros(2, 1))),
        );
        assert!(matches!(
            imm.differential(&[0.0], &cfg()),
            Err(Error::RankDeficientDifferential { .. })
        ));
    }

    #[test]
    fn plane_is_totally_geodesic() {
        let imm = plane_in_r3();
        let sff = imm.ambient_sff(&[0.3, -0.4], &cfg()).unwrap();
        assert!(sff.norm_hbar_sq < 1e-12);
        assert!(sff.norm_mean_sq < 1e-12);
        assert!(imm.gauss_residual(&[0.3, -0.4], &cfg()).unwrap() < 1e-10);
        assert!(imm.trace_identity_residual(&[0.3, -0.4], TraceIdentity::Si, &cfg()).unwrap() < 1e-10);
    }

    #[test]
    fn sphere3_mean_curvature_decomposition() {
        // unit S³ ⊂ ℝ⁴ with ranks (1,2): ‖H̄‖² = 9, H̄₁ = H̄/3, H̄₂ = 2H̄/3,
        // all mixed norms ≈ 0
        let imm = sphere_immersion(3);
        let x = [1.2, 1.0, 2.0];
        let sff = imm.ambient_sff(&x, &cfg()).unwrap();
        assert!((sff.norm_mean_sq - 9.0).abs() < 1e-5, "‖H̄‖² = {}", sff.norm_mean_sq);
        let third = &sff.mean_curvature * (1.0 / 3.0);
        assert!((&sff.mean_blocks[0] - third).norm() < 1e-6);
        let two_thirds = &sff.mean_curvature * (2.0 / 3.0);
        assert!((&sff.mean_blocks[1] - two_thirds).norm() < 1e-6);
        assert!(sff.mixed_norm_total() < 1e-8);
        assert!(sff.mean_sum_residual() < 1e-9);
        assert!(sff.decomposition_residual() < 1e-8);
        assert!(sff.normality_residual() < 1e-9);
        assert!((sff.norm_hbar_sq - 3.0).abs() < 1e-5);
    }

    #[test]
    fn paraboloid_mean_curvature_at_origin() {
        let imm = paraboloid();
        let sff = imm.ambient_sff(&[0.0, 0.0], &cfg()).unwrap();
        assert!((sff.norm_mean_sq - 16.0).abs() < 1e-5, "‖H̄‖² = {}", sff.norm_mean_sq);
    }

    #[test]
    fn gauss_equation_on_spheres() {
        let s2 = crate::scenarios::builtin_scenario("warped_sphere").unwrap();
        let imm = s2.immersion.as_ref().unwrap();
        let r = imm.gauss_residual(&[1.1, 0.5], &cfg()).unwrap();
        assert!(r < 1e-5, "S² Gauss residual {r}");

        let imm3 = sphere_immersion(3);
        let r = imm3.gauss_residual(&[1.2, 1.0, 2.0], &cfg()).unwrap();
        assert!(r < 1e-5, "S³ Gauss residual {r}");
    }

    #[test]
    fn trace_identities_on_sphere3() {
        // 0 − 6 = 3 − 9 for the full trace; 0 − 2 = 2 − 4 on the rank-2 block
        let imm = sphere_immersion(3);
        let x = [1.2, 1.0, 2.0];
        let parts = imm.trace_identity_parts(&x, TraceIdentity::Si, &cfg()).unwrap();
        assert!((parts.curvature_side + 6.0).abs() < 1e-5);
        assert!((parts.sff_side + 6.0).abs() < 1e-5);
        assert!(imm.trace_identity_residual(&x, TraceIdentity::Si, &cfg()).unwrap() < 1e-5);

        let parts = imm.trace_identity_parts(&x, TraceIdentity::Sii(1), &cfg()).unwrap();
        assert!((parts.curvature_side + 2.0).abs() < 1e-5);
        assert!((parts.sff_side + 2.0).abs() < 1e-5);
    }

    #[test]
    fn mean_block_lower_bound() {
        // Σ‖H̄_i‖² ≥ ‖H̄‖²/k with equality iff all H̄_i agree
        let imm = sphere_immersion(3);
        let sff = imm.ambient_sff(&[1.2, 1.0, 2.0], &cfg()).unwrap();
        let k = sff.mean_blocks.len() as f64;
        let sum: f64 = sff.mean_blocks_norm_sq.iter().sum();
        assert!(sum + 1e-9 >= sff.norm_mean_sq / k);
        // ranks (1,2) on the sphere: strict
        assert!(sum > sff.norm_mean_sq / k + 1e-3);
    }

    #[test]
    fn non_isometric_input_rejected_by_sff() {
        let source = ChartManifold::euclidean("flat", vec!["t".into(), "phi".into()], vec![(0.2, 2.9), (0.0, 6.3)]);
        let ambient = ChartManifold::euclidean("r3", vec!["X".into(), "Y".into(), "Z".into()], vec![(-2.0, 2.0); 3]);
        let map: MapFn = Arc::new(|x: &[f64]| {
            vec![x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin(), x[0].cos()]
        });
        let imm = ImmersionData::new(source, ambient, map, None);
        assert!(matches!(imm.ambient_sff(&[1.1, 2.0], &cfg()), Err(Error::NotIsometric { .. })));
    }

    #[test]
    fn sff_block_quantities_frame_invariant() {
        let imm = sphere_immersion(3);
        let x = [1.2, 1.0, 2.0];
        let base = imm.ambient_sff(&x, &cfg()).unwrap();
        let d = imm.distributions().unwrap();
        for seed in [1_u64, 7, 23] {
            let frame = d.adapted_frame(&x, Some(seed)).unwrap();
            let sff = imm.ambient_sff_with_frame(&x, &cfg(), &frame).unwrap();
            assert!((sff.norm_hbar_sq - base.norm_hbar_sq).abs() < 1e-8);
            assert!((sff.norm_mean_sq - base.norm_mean_sq).abs() < 1e-8);
            for (a, b) in sff.block_norms.iter().zip(&base.block_norms) {
                assert!((a - b).abs() < 1e-8);
            }
            for ((_, a), (_, b)) in sff.mixed_norms.iter().zip(&base.mixed_norms) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn warped_chart_not_used_uninitialized() {
        // guard: the warped chart used in other tests stays positive definite
        let m = warped_metric();
        assert!(m.metric_at(&[1.0, 0.5]).is_ok());
        let s3 = sphere_chart(3);
        assert!(s3.metric_at(&[1.2, 1.0, 2.0]).is_ok());
    }
}
