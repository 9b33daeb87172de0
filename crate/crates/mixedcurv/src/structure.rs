//! Almost k-product structure on a chart: orthogonal distributions, adapted
//! frames, second fundamental forms `h_i`, integrability tensors `T_i`, mean
//! curvatures `H_i`, the mixed scalar curvature and its structural
//! identities.
//!
//! Norm conventions: `‖h_i‖²`, `‖T_i‖²` and `‖h̄‖²`-style quantities sum the
//! squared g-norms over *ordered* pairs of frame vectors (so a single
//! off-diagonal value contributes twice). This is the convention under which
//! the divergence identities below balance exactly; the bracket example
//! `[∂x, ∂y + x∂z] = ∂z` gives `‖T₁‖² = 1/2`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geomcore::{gram_schmidt, stencil, ChartManifold, DiffConfig, VectorFieldFn};

/// k pairwise-orthogonal blocks of spanning vector fields on a chart.
#[derive(Clone)]
pub struct DistributionSet {
    manifold: ChartManifold,
    blocks: Vec<Vec<VectorFieldFn>>,
}

impl std::fmt::Debug for DistributionSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistributionSet")
            .field("manifold", &self.manifold.label())
            .field("ranks", &self.ranks())
            .finish()
    }
}

impl DistributionSet {
    pub fn new(manifold: ChartManifold, blocks: Vec<Vec<VectorFieldFn>>) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::DimensionMismatch {
                what: "distribution blocks (need k ≥ 2)".into(),
                expected: 2,
                got: blocks.len(),
            });
        }
        let total: usize = blocks.iter().map(|b| b.len()).sum();
        if total != manifold.dim() {
            return Err(Error::DimensionMismatch {
                what: "sum of block ranks".into(),
                expected: manifold.dim(),
                got: total,
            });
        }
        Ok(DistributionSet { manifold, blocks })
    }

    /// Blocks spanned by coordinate fields, given as index groups.
    pub fn coordinate_blocks(manifold: ChartManifold, groups: &[Vec<usize>]) -> Result<Self> {
        let n = manifold.dim();
        let blocks = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&i| {
                        let field: VectorFieldFn = Arc::new(move |_x: &[f64]| {
                            let mut v = DVector::zeros(n);
                            v[i] = 1.0;
                            v
                        });
                        field
                    })
                    .collect()
            })
            .collect();
        Self::new(manifold, blocks)
    }

    pub fn manifold(&self) -> &ChartManifold {
        &self.manifold
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn blocks(&self) -> &[Vec<VectorFieldFn>] {
        &self.blocks
    }

    /// Raw spanning vectors of one block evaluated at `x`, as matrix columns.
    fn block_matrix(&self, i: usize, x: &[f64]) -> DMatrix<f64> {
        let n = self.manifold.dim();
        let fields = &self.blocks[i];
        DMatrix::from_fn(n, fields.len(), |r, c| fields[c](x)[r])
    }

    /// Check the set's pointwise invariants: within-block independence and
    /// pairwise g-orthogonality of the (blockwise orthonormalized) blocks.
    pub fn validate_at(&self, x: &[f64]) -> Result<()> {
        let g = self.manifold.metric_at(x)?;
        let mut frames = Vec::with_capacity(self.k());
        for i in 0..self.k() {
            let raw = self.block_matrix(i, x);
            let gram = raw.transpose() * &g * &raw;
            let eig = gram.clone().symmetric_eigen();
            let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            // Gram eigenvalues are squared singular values of √g·raw
            if min_ev.max(0.0).sqrt() < 1e-8 {
                return Err(Error::RankDeficientBlock { block: i, sigma_min: min_ev.max(0.0).sqrt() });
            }
            let q = gram_schmidt(&g, &raw, 1e-16)
                .ok_or(Error::RankDeficientBlock { block: i, sigma_min: 0.0 })?;
            frames.push(q);
        }
        for i in 0..self.k() {
            for j in (i + 1)..self.k() {
                let cross = frames[i].transpose() * &g * &frames[j];
                let worst = cross.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if worst > 1e-10 {
                    return Err(Error::BlocksNotOrthogonal { block_a: i, block_b: j, value: worst });
                }
            }
        }
        Ok(())
    }

    /// Adapted orthonormal frame at `x`: blockwise modified Gram–Schmidt in
    /// declaration order (each block is also orthogonalized against the
    /// preceding ones). A seed mixes each block's spanning set by a random
    /// invertible matrix first; the result stays a frame of the same flags.
    pub fn adapted_frame(&self, x: &[f64], seed: Option<u64>) -> Result<AdaptedFrame> {
        let g = self.manifold.metric_at(x)?;
        let n = self.manifold.dim();
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut block_of = Vec::with_capacity(n);
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        for (i, fields) in self.blocks.iter().enumerate() {
            let raw = self.block_matrix(i, x);
            let gram = raw.transpose() * &g * &raw;
            let min_ev = gram
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min_ev.max(0.0).sqrt() < 1e-8 {
                return Err(Error::RankDeficientBlock { block: i, sigma_min: min_ev.max(0.0).sqrt() });
            }
            let mixed = match rng.as_mut() {
                None => raw,
                Some(r) => {
                    let m = fields.len();
                    let mix = random_invertible(r, m);
                    raw * mix
                }
            };
            // orthogonalize against everything accepted so far
            let mut work: Vec<DVector<f64>> = (0..mixed.ncols()).map(|c| mixed.column(c).clone_owned()).collect();
            for v in work.iter_mut() {
                for e in cols.iter() {
                    let coeff = (e.transpose() * &g * &*v)[(0, 0)];
                    v.axpy(-coeff, e, 1.0);
                }
                let norm2 = (v.transpose() * &g * &*v)[(0, 0)];
                if !(norm2 > 1e-16) {
                    return Err(Error::RankDeficientBlock { block: i, sigma_min: norm2.max(0.0).sqrt() });
                }
                v.scale_mut(1.0 / norm2.sqrt());
                cols.push(v.clone());
                block_of.push(i);
            }
        }
        Ok(AdaptedFrame { point: x.to_vec(), metric: g, vectors: cols, block_of })
    }

    /// Second fundamental form, integrability tensor and mean curvature of
    /// block `i` and of its orthogonal complement, with norms.
    pub fn fundamental_data(&self, i: usize, x: &[f64], cfg: &DiffConfig) -> Result<FundamentalData> {
        self.validate_at(x)?;
        let frame = self.adapted_frame(x, None)?;
        let gamma = self.manifold.christoffel(x, cfg)?;
        let g = &frame.metric;
        let n = self.manifold.dim();

        // Covariant derivatives of the raw spanning fields of one index set.
        let nabla = |fields: &[VectorFieldFn]| -> Result<Vec<Vec<DVector<f64>>>> {
            let m = fields.len();
            let vals: Vec<DVector<f64>> = fields.iter().map(|f| f(x)).collect();
            let mut dvals = Vec::with_capacity(m);
            for f in fields {
                let fc = |y: &[f64]| f(y);
                let mut cols = Vec::with_capacity(n);
                for a in 0..n {
                    cols.push(stencil::d1(&fc, x, a, cfg));
                }
                dvals.push(cols);
            }
            let mut out = vec![vec![DVector::zeros(n); m]; m];
            for a in 0..m {
                for b in 0..m {
                    // ∇_{v_a} v_b = v_a^e (∂_e v_b + Γ(·, e, ·) v_b)
                    let mut w = DVector::zeros(n);
                    for e in 0..n {
                        let va_e = vals[a][e];
                        if va_e == 0.0 {
                            continue;
                        }
                        w.axpy(va_e, &dvals[b][e], 1.0);
                        for c in 0..n {
                            let vb_c = vals[b][c];
                            if vb_c == 0.0 {
                                continue;
                            }
                            for out_c in 0..n {
                                w[out_c] += va_e * gamma[[out_c, e, c]] * vb_c;
                            }
                        }
                    }
                    out[a][b] = w;
                }
            }
            Ok(out)
        };

        // one side: fields spanning the block; other side: the complement
        let own_fields = self.blocks[i].clone();
        let mut perp_fields = Vec::new();
        for (j, b) in self.blocks.iter().enumerate() {
            if j != i {
                perp_fields.extend(b.iter().cloned());
            }
        }

        let own_frame: Vec<&DVector<f64>> = frame.block(i).collect();
        let perp_frame: Vec<&DVector<f64>> =
            frame.vectors.iter().zip(&frame.block_of).filter(|(_, &b)| b != i).map(|(v, _)| v).collect();

        let side = |fields: &[VectorFieldFn],
                    members: &[&DVector<f64>],
                    projector_basis: &[&DVector<f64>]|
         -> Result<SideData> {
            let m = fields.len();
            let nab = nabla(fields)?;
            let vals: Vec<DVector<f64>> = fields.iter().map(|f| f(x)).collect();
            // coordinates of the orthonormal members in the raw spanning set
            let gram = DMatrix::from_fn(m, m, |a, b| (vals[a].transpose() * g * &vals[b])[(0, 0)]);
            let gram_inv = gram.try_inverse().ok_or(Error::RankDeficientBlock { block: i, sigma_min: 0.0 })?;
            let coeff: Vec<DVector<f64>> = members
                .iter()
                .map(|e| {
                    let rhs = DVector::from_fn(m, |a, _| (vals[a].transpose() * g * *e)[(0, 0)]);
                    &gram_inv * rhs
                })
                .collect();
            let project = |w: &DVector<f64>| -> DVector<f64> {
                let mut out = w.clone();
                for e in members.iter() {
                    let c = (e.transpose() * g * w)[(0, 0)];
                    out.axpy(-c, *e, 1.0);
                }
                // numerical cleanup: re-express in the complementary frame
                let mut clean = DVector::zeros(n);
                for e in projector_basis.iter() {
                    let c = (e.transpose() * g * &out)[(0, 0)];
                    clean.axpy(c, *e, 1.0);
                }
                clean
            };
            // raw-pair values, then transform tensorially to the frame
            let mut h = vec![vec![DVector::zeros(n); m]; m];
            let mut t = vec![vec![DVector::zeros(n); m]; m];
            for a in 0..m {
                for b in 0..m {
                    let sym = (&nab[a][b] + &nab[b][a]) * 0.5;
                    let skw = (&nab[a][b] - &nab[b][a]) * 0.5;
                    h[a][b] = project(&sym);
                    t[a][b] = project(&skw);
                }
            }
            let mut h_f = vec![vec![DVector::zeros(n); m]; m];
            let mut t_f = vec![vec![DVector::zeros(n); m]; m];
            for a in 0..m {
                for b in 0..m {
                    let mut hv = DVector::zeros(n);
                    let mut tv = DVector::zeros(n);
                    for p in 0..m {
                        let ca = coeff[a][p];
                        if ca == 0.0 {
                            continue;
                        }
                        for q in 0..m {
                            let cb = coeff[b][q];
                            if cb == 0.0 {
                                continue;
                            }
                            hv.axpy(ca * cb, &h[p][q], 1.0);
                            tv.axpy(ca * cb, &t[p][q], 1.0);
                        }
                    }
                    h_f[a][b] = hv;
                    t_f[a][b] = tv;
                }
            }
            let mut mean = DVector::zeros(n);
            for a in 0..m {
                mean += &h_f[a][a];
            }
            let sq = |v: &DVector<f64>| (v.transpose() * g * v)[(0, 0)];
            let mut h_sq = 0.0;
            let mut t_sq = 0.0;
            let mut umb = 0.0;
            for a in 0..m {
                for b in 0..m {
                    h_sq += sq(&h_f[a][b]);
                    t_sq += sq(&t_f[a][b]);
                    let dev = if a == b { &h_f[a][b] - &mean * (1.0 / m as f64) } else { h_f[a][b].clone() };
                    umb += sq(&dev);
                }
            }
            Ok(SideData { h: h_f, t: t_f, mean_sq: sq(&mean), mean, h_sq, t_sq, umbilic_deviation: umb })
        };

        let own = side(&own_fields, &own_frame, &perp_frame)?;
        let perp = side(&perp_fields, &perp_frame, &own_frame)?;

        Ok(FundamentalData {
            block: i,
            h: own.h,
            t: own.t,
            mean_curvature: own.mean,
            h_perp: perp.h,
            t_perp: perp.t,
            mean_curvature_perp: perp.mean,
            norm_h_sq: own.h_sq,
            norm_t_sq: own.t_sq,
            norm_mean_sq: own.mean_sq,
            norm_h_perp_sq: perp.h_sq,
            norm_t_perp_sq: perp.t_sq,
            norm_mean_perp_sq: perp.mean_sq,
            umbilic_deviation: own.umbilic_deviation,
            umbilic_deviation_perp: perp.umbilic_deviation,
        })
    }

    /// Mixed scalar curvature split into pairwise terms, per-block scalar
    /// curvatures and the full scalar curvature.
    pub fn curvature_decomposition(&self, x: &[f64], cfg: &DiffConfig) -> Result<CurvatureDecomposition> {
        self.curvature_decomposition_seeded(x, cfg, None)
    }

    /// Same with a re-randomized adapted frame; the result must not depend on
    /// the seed (frame invariance).
    pub fn curvature_decomposition_seeded(
        &self,
        x: &[f64],
        cfg: &DiffConfig,
        seed: Option<u64>,
    ) -> Result<CurvatureDecomposition> {
        self.validate_at(x)?;
        let frame = self.adapted_frame(x, seed)?;
        let curv = self.manifold.curvature_at(x, cfg)?;
        let k = self.k();
        let mut pairwise = DMatrix::zeros(k, k);
        for a in 0..frame.vectors.len() {
            for b in 0..frame.vectors.len() {
                if a == b {
                    continue;
                }
                let (ia, ib) = (frame.block_of[a], frame.block_of[b]);
                let kab = curv.rm4(&frame.vectors[a], &frame.vectors[b], &frame.vectors[a], &frame.vectors[b]);
                pairwise[(ia, ib)] += kab;
            }
        }
        // pairwise[(i, j)] now counts ordered frame pairs; S_mix(D_i, D_j)
        // for i ≠ j is the single sum over (a ∈ i, b ∈ j).
        let mut pair_sym = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    pair_sym[(i, j)] = 0.5 * (pairwise[(i, j)] + pairwise[(j, i)]);
                }
            }
        }
        let mut total = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                total += pair_sym[(i, j)];
            }
        }
        let per_block_tau: Vec<f64> = (0..k).map(|i| pairwise[(i, i)]).collect();
        Ok(CurvatureDecomposition { pairwise: pair_sym, total, per_block_tau, tau: curv.tau })
    }

    /// Residual `|LHS − RHS|` of one structural identity, with the divergence
    /// side and the curvature side computed by independent code paths.
    pub fn check_structural_identity(
        &self,
        id: StructuralIdentity,
        x: &[f64],
        cfg: &DiffConfig,
    ) -> Result<f64> {
        self.validate_at(x)?;
        let k = self.k();
        let n = self.manifold.dim();
        let decomp = self.curvature_decomposition(x, cfg)?;
        let outer = cfg.outer();

        // divergence of a derived mean-curvature field, fresh data per point
        let div_of = |pick: Arc<dyn Fn(&FundamentalData) -> DVector<f64> + Send + Sync>,
                      blocks: Vec<usize>|
         -> Result<f64> {
            let this = self.clone();
            let cfg_inner = *cfg;
            let field: VectorFieldFn = Arc::new(move |y: &[f64]| {
                let mut v = DVector::zeros(n);
                for &i in &blocks {
                    match this.fundamental_data(i, y, &cfg_inner) {
                        Ok(fd) => v += pick(&fd),
                        Err(_) => return DVector::from_element(n, f64::NAN),
                    }
                }
                v
            });
            self.manifold.divergence(&field, x, &outer)
        };

        match id {
            StructuralIdentity::Pw => {
                let fd = self.fundamental_data(0, x, cfg)?;
                let pick: Arc<dyn Fn(&FundamentalData) -> DVector<f64> + Send + Sync> =
                    Arc::new(|fd: &FundamentalData| &fd.mean_curvature + &fd.mean_curvature_perp);
                let lhs = div_of(pick, vec![0])?;
                let smix_first = (1..k).map(|j| decomp.pairwise[(0, j)]).sum::<f64>();
                let rhs = smix_first + fd.norm_h_sq + fd.norm_h_perp_sq
                    - fd.norm_mean_sq
                    - fd.norm_mean_perp_sq
                    - fd.norm_t_sq
                    - fd.norm_t_perp_sq;
                Ok((lhs - rhs).abs())
            }
            StructuralIdentity::Pw3k => {
                let pick: Arc<dyn Fn(&FundamentalData) -> DVector<f64> + Send + Sync> =
                    Arc::new(|fd: &FundamentalData| &fd.mean_curvature + &fd.mean_curvature_perp);
                let lhs = div_of(pick, (0..k).collect())?;
                let mut rhs = 2.0 * decomp.total;
                for i in 0..k {
                    let fd = self.fundamental_data(i, x, cfg)?;
                    rhs += fd.norm_h_sq - fd.norm_mean_sq - fd.norm_t_sq + fd.norm_h_perp_sq
                        - fd.norm_mean_perp_sq
                        - fd.norm_t_perp_sq;
                }
                Ok((lhs - rhs).abs())
            }
            StructuralIdentity::Umb => {
                let mut data = Vec::with_capacity(k);
                for i in 0..k {
                    let fd = self.fundamental_data(i, x, cfg)?;
                    if fd.umbilic_deviation > 1e-6 {
                        return Err(Error::NotUmbilic { block: i, deviation: fd.umbilic_deviation });
                    }
                    if fd.umbilic_deviation_perp > 1e-6 {
                        return Err(Error::NotUmbilic { block: i, deviation: fd.umbilic_deviation_perp });
                    }
                    data.push(fd);
                }
                let pick: Arc<dyn Fn(&FundamentalData) -> DVector<f64> + Send + Sync> =
                    Arc::new(|fd: &FundamentalData| &fd.mean_curvature + &fd.mean_curvature_perp);
                let lhs = div_of(pick, (0..k).collect())?;
                let ranks = self.ranks();
                let mut rhs = 2.0 * decomp.total;
                for (i, fd) in data.iter().enumerate() {
                    let ni = ranks[i] as f64;
                    let nip = (n - ranks[i]) as f64;
                    rhs -= (ni - 1.0) / ni * fd.norm_mean_sq;
                    rhs -= (nip - 1.0) / nip * fd.norm_mean_perp_sq;
                    rhs -= fd.norm_t_sq + fd.norm_t_perp_sq;
                }
                Ok((lhs - rhs).abs())
            }
            StructuralIdentity::Smix3 => {
                let rhs = 2.0 * decomp.total + decomp.per_block_tau.iter().sum::<f64>();
                Ok((decomp.tau - rhs).abs())
            }
            StructuralIdentity::DkSmix => {
                let mut sum = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        if i != j {
                            sum += decomp.pairwise[(i, j)];
                        }
                    }
                }
                Ok((2.0 * decomp.total - sum).abs())
            }
        }
    }
}

fn random_invertible(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    loop {
        let mat = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0_f64));
        if mat.determinant().abs() > 1e-3 {
            return mat;
        }
    }
}

/// Structural identities relating flux of mean-curvature fields to the mixed
/// scalar curvature and tensor norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StructuralIdentity {
    /// `Div(H₁ + H₁^⊥)` against the first block's pair curvature and norms.
    Pw,
    /// Sum of the flux identities over all blocks.
    Pw3k,
    /// The totally umbilical specialization of `Pw3k`.
    Umb,
    /// Full scalar curvature split: `τ = 2 S_mix + Σ τ(D_i)`.
    Smix3,
    /// Double-count identity `2 S_mix = Σ_i S_mix(D_i, D_i^⊥)`.
    DkSmix,
}

impl StructuralIdentity {
    pub fn name(&self) -> &'static str {
        match self {
            StructuralIdentity::Pw => "PW",
            StructuralIdentity::Pw3k => "PW3K",
            StructuralIdentity::Umb => "UMB",
            StructuralIdentity::Smix3 => "SMIX3",
            StructuralIdentity::DkSmix => "DKSMIX",
        }
    }
}

/// g-orthonormal frame grouped into blocks.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub point: Vec<f64>,
    pub metric: DMatrix<f64>,
    pub vectors: Vec<DVector<f64>>,
    pub block_of: Vec<usize>,
}

impl AdaptedFrame {
    pub fn block(&self, i: usize) -> impl Iterator<Item = &DVector<f64>> {
        self.vectors.iter().zip(&self.block_of).filter(move |(_, &b)| b == i).map(|(v, _)| v)
    }

    /// Worst deviation of the Gram matrix from the identity.
    pub fn gram_residual(&self) -> f64 {
        let mut res = 0.0_f64;
        for (a, va) in self.vectors.iter().enumerate() {
            for (b, vb) in self.vectors.iter().enumerate() {
                let gab = (va.transpose() * &self.metric * vb)[(0, 0)];
                let target = if a == b { 1.0 } else { 0.0 };
                res = res.max((gab - target).abs());
            }
        }
        res
    }
}

struct SideData {
    h: Vec<Vec<DVector<f64>>>,
    t: Vec<Vec<DVector<f64>>>,
    mean: DVector<f64>,
    mean_sq: f64,
    h_sq: f64,
    t_sq: f64,
    umbilic_deviation: f64,
}

/// Second fundamental form / integrability data for one block and its
/// orthogonal complement, expressed on the adapted frame.
#[derive(Debug, Clone)]
pub struct FundamentalData {
    pub block: usize,
    /// `h_i(e_a, e_b)` over the block frame, values in `D_i^⊥`.
    pub h: Vec<Vec<DVector<f64>>>,
    pub t: Vec<Vec<DVector<f64>>>,
    /// `H_i = tr_g h_i`.
    pub mean_curvature: DVector<f64>,
    pub h_perp: Vec<Vec<DVector<f64>>>,
    pub t_perp: Vec<Vec<DVector<f64>>>,
    pub mean_curvature_perp: DVector<f64>,
    pub norm_h_sq: f64,
    pub norm_t_sq: f64,
    pub norm_mean_sq: f64,
    pub norm_h_perp_sq: f64,
    pub norm_t_perp_sq: f64,
    pub norm_mean_perp_sq: f64,
    /// `‖h_i − (H_i/n_i) g‖²` restricted to the block.
    pub umbilic_deviation: f64,
    pub umbilic_deviation_perp: f64,
}

/// Mixed scalar curvature data at one point.
#[derive(Debug, Clone)]
pub struct CurvatureDecomposition {
    /// `S_mix(D_i, D_j)` for `i ≠ j` (symmetric, zero diagonal).
    pub pairwise: DMatrix<f64>,
    /// `S_mix(D_1, …, D_k) = Σ_{i<j}` pairwise.
    pub total: f64,
    /// Scalar curvature of each block, full-trace convention.
    pub per_block_tau: Vec<f64>,
    /// Scalar curvature of the manifold, full-trace convention.
    pub tau: f64,
}

impl CurvatureDecomposition {
    /// `S_mix(D_i, D_i^⊥) = Σ_{j≠i} S_mix(D_i, D_j)`.
    pub fn pair_with_complement(&self, i: usize) -> f64 {
        (0..self.pairwise.ncols()).filter(|&j| j != i).map(|j| self.pairwise[(i, j)]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomcore::LaplacianMode;
    use crate::scenarios::{sphere_chart, warped_metric};
    use std::sync::Arc;

    fn euclidean3() -> ChartManifold {
        ChartManifold::euclidean("e3", vec!["x".into(), "y".into(), "z".into()], vec![(-5.0, 5.0); 3])
    }

    /// Heisenberg-type span on flat space: {∂x, ∂y + x ∂z} and its
    /// orthogonal complement {−x ∂y + ∂z}.
    fn heisenberg_span() -> DistributionSet {
        let m = euclidean3();
        let v1: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let v2: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_vec(vec![0.0, 1.0, x[0]]));
        let w: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_vec(vec![0.0, -x[0], 1.0]));
        DistributionSet::new(m, vec![vec![v1, v2], vec![w]]).unwrap()
    }

    #[test]
    fn adapted_frame_coordinate_blocks() {
        let d = DistributionSet::coordinate_blocks(euclidean3(), &[vec![0], vec![1, 2]]).unwrap();
        let f = d.adapted_frame(&[0.1, 0.2, 0.3], None).unwrap();
        assert!(f.gram_residual() < 1e-12);
        for (i, v) in f.vectors.iter().enumerate() {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v[j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adapted_frame_forces_gram_schmidt() {
        let m = ChartManifold::euclidean("e2", vec!["x".into(), "y".into()], vec![(-5.0, 5.0); 2]);
        let v1: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, 1.0]));
        let v2: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, -1.0]));
        let d = DistributionSet::new(m, vec![vec![v1], vec![v2]]).unwrap();
        let f = d.adapted_frame(&[0.0, 0.0], None).unwrap();
        let s = 0.5_f64.sqrt();
        assert!((f.vectors[0][0] - s).abs() < 1e-12 && (f.vectors[0][1] - s).abs() < 1e-12);
        assert!((f.vectors[1][0] - s).abs() < 1e-12 && (f.vectors[1][1] + s).abs() < 1e-12);
        assert!(f.gram_residual() < 1e-12);
    }

    #[test]
    fn adapted_frame_sequential_orthogonalization() {
        // blocks {∂x, ∂y + x∂z}, {∂z} at x = 1: the second block is not
        // orthogonal to the first, sequential MGS still yields Gram = I and
        // normalizes the second spanning vector by 1/√2.
        let m = euclidean3();
        let v1: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let v2: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_vec(vec![0.0, 1.0, x[0]]));
        let v3: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![0.0, 0.0, 1.0]));
        let d = DistributionSet::new(m, vec![vec![v1, v2], vec![v3]]).unwrap();
        let f = d.adapted_frame(&[1.0, 0.0, 0.0], None).unwrap();
        let s = 0.5_f64.sqrt();
        assert!((f.vectors[1][1] - s).abs() < 1e-12 && (f.vectors[1][2] - s).abs() < 1e-12);
        assert!(f.gram_residual() < 1e-10);
        // while validation flags the non-orthogonality
        let err = d.validate_at(&[1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::BlocksNotOrthogonal { block_a: 0, block_b: 1, .. }));
    }

    #[test]
    fn adapted_frame_rank_deficiency() {
        let m = euclidean3();
        let v1: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let v2: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, 1e-12, 0.0]));
        let v3: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![0.0, 0.0, 1.0]));
        let d = DistributionSet::new(m, vec![vec![v1, v2], vec![v3]]).unwrap();
        let err = d.validate_at(&[0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::RankDeficientBlock { block: 0, .. }));
    }

    #[test]
    fn seeded_frames_stay_adapted() {
        let d = heisenberg_span();
        let x = [0.4, 0.1, -0.2];
        for seed in 0..8 {
            let f = d.adapted_frame(&x, Some(seed)).unwrap();
            assert!(f.gram_residual() < 1e-10);
        }
        // deterministic for a fixed seed
        let f1 = d.adapted_frame(&x, Some(3)).unwrap();
        let f2 = d.adapted_frame(&x, Some(3)).unwrap();
        for (a, b) in f1.vectors.iter().zip(&f2.vectors) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn warped_product_leaves_totally_geodesic() {
        // dt² + sin²t dθ²: block {∂t} has h₁ = T₁ = 0.
        let m = warped_metric();
        let d = DistributionSet::coordinate_blocks(m, &[vec![0], vec![1]]).unwrap();
        let fd = d.fundamental_data(0, &[1.1, 0.7], &DiffConfig::default()).unwrap();
        assert!(fd.norm_h_sq < 1e-7, "‖h₁‖² = {}", fd.norm_h_sq);
        assert!(fd.norm_t_sq < 1e-7);
    }

    #[test]
    fn warped_product_fiber_mean_curvature() {
        // block {∂θ} at t = π/3: H₂ = −cot(π/3) ∂t.
        let t = std::f64::consts::PI / 3.0;
        let m = warped_metric();
        let d = DistributionSet::coordinate_blocks(m, &[vec![0], vec![1]]).unwrap();
        let fd = d.fundamental_data(1, &[t, 0.7], &DiffConfig::default()).unwrap();
        let expect = -1.0 / t.tan();
        assert!((fd.mean_curvature[0] - expect).abs() < 1e-6, "H₂·∂t = {}", fd.mean_curvature[0]);
        assert!(fd.mean_curvature[1].abs() < 1e-8);
        assert!((expect + 0.577_350_269_189_625_8).abs() < 1e-12);
    }

    #[test]
    fn integrability_tensor_of_bracket() {
        // [∂x, ∂y + x∂z] = ∂z, T₁(e₁,e₂) = ½ ∂z at the origin, ordered-pair
        // norm ‖T₁‖² = 2·(1/2)² = 1/2.
        let d = heisenberg_span();
        let fd = d.fundamental_data(0, &[0.0, 0.3, -0.2], &DiffConfig::default()).unwrap();
        assert!((fd.norm_t_sq - 0.5).abs() < 1e-7, "‖T₁‖² = {}", fd.norm_t_sq);
    }

    #[test]
    fn mean_curvature_is_trace_of_h() {
        let d = heisenberg_span();
        let fd = d.fundamental_data(0, &[0.5, 0.1, 0.2], &DiffConfig::default()).unwrap();
        let mut trace = DVector::zeros(3);
        for a in 0..fd.h.len() {
            trace += &fd.h[a][a];
        }
        assert!((trace - &fd.mean_curvature).norm() < 1e-9);
    }

    #[test]
    fn coordinate_spans_commute() {
        // coordinate blocks have vanishing integrability tensors
        let d = DistributionSet::coordinate_blocks(sphere_chart(3), &[vec![0, 1], vec![2]]).unwrap();
        let fd = d.fundamental_data(0, &[1.2, 1.0, 2.0], &DiffConfig::default()).unwrap();
        assert!(fd.norm_t_sq < 1e-7);
        assert!(fd.norm_t_perp_sq < 1e-7);
    }

    #[test]
    fn fundamental_data_frame_independent() {
        let d = heisenberg_span();
        let x = [0.4, -0.1, 0.3];
        let a = d.fundamental_data(0, &x, &DiffConfig::default()).unwrap();
        // distribution with the same spans declared in swapped order
        let m = euclidean3();
        let v1: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_vec(vec![0.0, 1.0, x[0]]));
        let v2: VectorFieldFn = Arc::new(|_x: &[f64]| DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let w: VectorFieldFn = Arc::new(|x: &[f64]| DVector::from_vec(vec![0.0, -x[0], 1.0]));
        let d2 = DistributionSet::new(m, vec![vec![v1, v2], vec![w]]).unwrap();
        let b = d2.fundamental_data(0, &x, &DiffConfig::default()).unwrap();
        for (pa, pb) in [
            (a.norm_h_sq, b.norm_h_sq),
            (a.norm_t_sq, b.norm_t_sq),
            (a.norm_mean_sq, b.norm_mean_sq),
            (a.umbilic_deviation, b.umbilic_deviation),
        ] {
            assert!((pa - pb).abs() < 1e-8, "{pa} vs {pb}");
        }
        assert!((&a.mean_curvature - &b.mean_curvature).norm() < 1e-8);
    }

    #[test]
    fn decomposition_on_spheres() {
        let cfg = DiffConfig::default();
        let s3 = sphere_chart(3);
        let x = [1.2, 1.0, 2.0];
        let d12 = DistributionSet::coordinate_blocks(s3.clone(), &[vec![0], vec![1, 2]]).unwrap();
        let dec = d12.curvature_decomposition(&x, &cfg).unwrap();
        assert!((dec.total - 2.0).abs() < 1e-5, "S_mix(1,2) = {}", dec.total);
        assert!((dec.tau - 6.0).abs() < 1e-5);

        let d111 = DistributionSet::coordinate_blocks(s3, &[vec![0], vec![1], vec![2]]).unwrap();
        let dec = d111.curvature_decomposition(&x, &cfg).unwrap();
        assert!((dec.total - 3.0).abs() < 1e-5, "S_mix(1,1,1) = {}", dec.total);

        // Euclidean: everything vanishes
        let de = DistributionSet::coordinate_blocks(euclidean3(), &[vec![0], vec![1, 2]]).unwrap();
        let dec = de.curvature_decomposition(&[0.1, 0.2, 0.3], &cfg).unwrap();
        assert!(dec.total.abs() < 1e-9 && dec.tau.abs() < 1e-9);
        for t in &dec.per_block_tau {
            assert!(t.abs() < 1e-9);
        }
    }

    #[test]
    fn decomposition_frame_invariance() {
        let d = DistributionSet::coordinate_blocks(sphere_chart(3), &[vec![0], vec![1, 2]]).unwrap();
        let x = [1.2, 1.0, 2.0];
        let base = d.curvature_decomposition(&x, &DiffConfig::default()).unwrap();
        for seed in 0..32 {
            let dec = d.curvature_decomposition_seeded(&x, &DiffConfig::default(), Some(seed)).unwrap();
            let scale = base.total.abs().max(1.0);
            assert!((dec.total - base.total).abs() <= 1e-9 * scale);
            assert!((dec.tau - base.tau).abs() <= 1e-9 * base.tau.abs().max(1.0));
            for (a, b) in dec.per_block_tau.iter().zip(&base.per_block_tau) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn identities_on_flat_coordinate_blocks() {
        let d = DistributionSet::coordinate_blocks(euclidean3(), &[vec![0], vec![1, 2]]).unwrap();
        let x = [0.3, -0.2, 0.5];
        for id in [
            StructuralIdentity::Pw,
            StructuralIdentity::Pw3k,
            StructuralIdentity::Umb,
            StructuralIdentity::Smix3,
            StructuralIdentity::DkSmix,
        ] {
            let r = d.check_structural_identity(id, &x, &DiffConfig::default()).unwrap();
            assert!(r < 1e-10, "{id:?} residual {r}");
        }
    }

    #[test]
    fn flux_identity_on_warped_sphere() {
        // both sides computed independently: flux of H₁ + H₁^⊥ versus the
        // curvature-and-norms side; at t = π/3 each equals 1.
        let m = warped_metric();
        let d = DistributionSet::coordinate_blocks(m, &[vec![0], vec![1]]).unwrap();
        let x = [std::f64::consts::PI / 3.0, 0.7];
        let r = d.check_structural_identity(StructuralIdentity::Pw, &x, &DiffConfig::default()).unwrap();
        assert!(r < 1e-5, "PW residual {r}");
    }

    #[test]
    fn smix3_on_sphere_ranks_1_2() {
        // τ = 6 = 2·2 + (0 + 2)
        let d = DistributionSet::coordinate_blocks(sphere_chart(3), &[vec![0], vec![1, 2]]).unwrap();
        let r = d
            .check_structural_identity(StructuralIdentity::Smix3, &[1.2, 1.0, 2.0], &DiffConfig::default())
            .unwrap();
        assert!(r < 1e-5, "SMIX3 residual {r}");
    }

    #[test]
    fn one_dimensional_blocks_halve_tau() {
        let d = DistributionSet::coordinate_blocks(sphere_chart(3), &[vec![0], vec![1], vec![2]]).unwrap();
        let dec = d.curvature_decomposition(&[1.2, 1.0, 2.0], &DiffConfig::default()).unwrap();
        assert!((2.0 * dec.total - dec.tau).abs() < 1e-6);
    }

    #[test]
    fn umbilic_gate_rejects_non_umbilic_blocks() {
        let d = heisenberg_span();
        let err = d
            .check_structural_identity(StructuralIdentity::Umb, &[0.4, 0.0, 0.0], &DiffConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::NotUmbilic { .. }));
    }

    #[test]
    fn leafwise_matches_fiber_ratio() {
        // consistency probe tying this module to the Laplacian: on the
        // warped chart, S_mix(D₁, D₂) = Δ⁽¹⁾u/u with u = sin t
        let m = warped_metric();
        let d = DistributionSet::coordinate_blocks(m.clone(), &[vec![0], vec![1]]).unwrap();
        let x = [1.05, 0.4];
        let dec = d.curvature_decomposition(&x, &DiffConfig::default()).unwrap();
        let u: crate::geomcore::ScalarFieldFn = Arc::new(|y: &[f64]| y[0].sin());
        let lap = m
            .laplacian(&u, &x, &DiffConfig::default(), LaplacianMode::Leafwise(vec![0]))
            .unwrap();
        assert!((dec.total - lap / x[0].sin()).abs() < 1e-5);
    }
}
