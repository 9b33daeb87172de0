//! Extremal mixed-curvature invariants by optimization over orthonormal
//! subspace configurations.
//!
//! The search space at a point is the set of k pairwise ḡ-orthogonal
//! orthonormal blocks of prescribed ranks in the tangent space. A
//! configuration is moved by composed two-column Givens rotations acting on a
//! full orthonormal column set (including rotations into the orthogonal
//! complement), so iterates stay exactly on the constraint set. Ascent is
//! coordinate-wise line search with Armijo backtracking, restarted from
//! seeded random configurations.
//!
//! A supremum approximated by sampling plus local ascent is a certified
//! *lower* bound of the true supremum; results are labelled accordingly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geomcore::{gram_schmidt, ChartManifold, CurvatureAtPoint, DiffConfig};
use crate::structure::DistributionSet;

/// A point of the ambient chart plus pairwise-orthonormal tangent blocks,
/// stored as ḡ-orthonormal matrix columns with block boundaries.
#[derive(Debug, Clone)]
pub struct SubspaceConfig {
    pub point: Vec<f64>,
    /// N×p matrix, columns ḡ(point)-orthonormal, grouped by `ranks`.
    pub columns: DMatrix<f64>,
    pub ranks: Vec<usize>,
}

impl SubspaceConfig {
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.ranks[..i].iter().sum();
        start..start + self.ranks[i]
    }

    /// Worst deviation of the column Gram matrix (under `g`) from identity.
    pub fn orthonormality_residual(&self, g: &DMatrix<f64>) -> f64 {
        let gram = self.columns.transpose() * g * &self.columns;
        let mut res = 0.0_f64;
        for a in 0..gram.nrows() {
            for b in 0..gram.ncols() {
                let target = if a == b { 1.0 } else { 0.0 };
                res = res.max((gram[(a, b)] - target).abs());
            }
        }
        res
    }
}

/// Optimization budget and sampling parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerParams {
    pub restarts: usize,
    pub max_iters: usize,
    pub ascent_tol: f64,
    pub rotation_step0: f64,
    pub seed: u64,
    /// Sample grid over the ambient domain: points per axis, capped in total.
    pub points_per_axis: usize,
    pub max_points: usize,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            restarts: 64,
            max_iters: 500,
            ascent_tol: 1e-8,
            rotation_step0: 0.1,
            seed: 0,
            points_per_axis: 9,
            max_points: 4096,
        }
    }
}

/// What to maximize over configurations.
#[derive(Clone)]
pub enum Objective {
    /// `S̄_mix(V_1, …, V_k) = Σ_{i<j} Σ_{a∈i, b∈j} K̄(e_a, e_b)`.
    Smix,
    /// Same, with each block confined to the matching ambient distribution.
    SmixConstrained(DistributionSet),
    /// `−Σ_i τ̄(V_i)`; its maximum is minus the infimum of the block-trace sum.
    NegSumBlockTau,
    /// q-th Ricci curvature `Σ_{i=1}^q K̄(E₀, E_i)`, i.e. `Smix` with ranks (1, q).
    QRicci(usize),
}

/// Term pattern of an objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjKind {
    /// Sum of `K̄` over pairs from different blocks.
    CrossBlocks,
    /// Minus the sum of `K̄` over ordered pairs within each block.
    MinusIntraBlocks,
}

/// Result of an extremal-invariant estimation.
#[derive(Debug, Clone)]
pub struct ExtremalResult {
    pub value: f64,
    pub argmax: SubspaceConfig,
    /// Pointwise supremum estimate over the sample grid.
    pub per_point_field: Vec<(Vec<f64>, f64)>,
    pub iterations: usize,
    pub restarts_used: usize,
    /// Always true: sampling + ascent certifies a lower bound of the sup.
    pub certified_lower_bound: bool,
    /// Final objective value of every restart, point-major order.
    pub restart_values: Vec<f64>,
    /// Set when a declared space form short-circuited the optimization.
    pub via_closed_form: bool,
}

impl ExtremalResult {
    /// Re-evaluate the objective at the stored argmax (staleness check). The
    /// closed-form path re-derives the same constant; the optimizer path
    /// reruns the identical contraction.
    pub fn recompute(&self, ambient: &ChartManifold, kind: ObjKind) -> Result<f64> {
        if self.via_closed_form {
            let c = ambient.space_form().ok_or(Error::NumericalBreakdown {
                what: "closed-form result for a chart without declared curvature".into(),
            })?;
            return Ok(c * cross_pair_count(&self.argmax.ranks));
        }
        let curv = ambient.curvature_at(&self.argmax.point, &DiffConfig::default())?;
        let cols: Vec<DVector<f64>> =
            (0..self.argmax.columns.ncols()).map(|c| self.argmax.columns.column(c).clone_owned()).collect();
        Ok(objective_value(&curv, &cols, &self.argmax.ranks, kind))
    }
}

fn cross_pair_count(ranks: &[usize]) -> f64 {
    let mut s = 0.0;
    for i in 0..ranks.len() {
        for j in (i + 1)..ranks.len() {
            s += (ranks[i] * ranks[j]) as f64;
        }
    }
    s
}

/// `S̄_mix` of an explicit configuration.
pub fn smix_of_config(ambient: &ChartManifold, config: &SubspaceConfig) -> Result<f64> {
    let g = ambient.metric_at(&config.point)?;
    let res = config.orthonormality_residual(&g);
    if res > 1e-10 {
        return Err(Error::NotOrthonormal { residual: res });
    }
    let total: usize = config.ranks.iter().sum();
    if total > ambient.dim() {
        return Err(Error::InfeasibleRanks { total, dim: ambient.dim() });
    }
    let curv = ambient.curvature_at(&config.point, &DiffConfig::default())?;
    let cols: Vec<DVector<f64>> =
        (0..config.columns.ncols()).map(|c| config.columns.column(c).clone_owned()).collect();
    Ok(objective_value(&curv, &cols, &config.ranks, ObjKind::CrossBlocks))
}

/// Objective value on explicit ambient columns grouped by `ranks`.
pub fn objective_value(curv: &CurvatureAtPoint, cols: &[DVector<f64>], ranks: &[usize], kind: ObjKind) -> f64 {
    let mut value = 0.0;
    for (a, b) in term_pairs(ranks, kind) {
        value += curv.rm4(&cols[a], &cols[b], &cols[a], &cols[b]);
    }
    if kind == ObjKind::MinusIntraBlocks {
        value = -value;
    }
    value
}

/// Analytic directional derivative of the objective when column `a` moves
/// with velocity `adot` and (optionally) column `b` with velocity `bdot`.
pub fn objective_directional_derivative(
    curv: &CurvatureAtPoint,
    cols: &[DVector<f64>],
    ranks: &[usize],
    kind: ObjKind,
    moving: &[(usize, DVector<f64>)],
) -> f64 {
    let mut deriv = 0.0;
    for (p, q) in term_pairs(ranks, kind) {
        let du_p = moving.iter().find(|(c, _)| *c == p).map(|(_, d)| d);
        let du_q = moving.iter().find(|(c, _)| *c == q).map(|(_, d)| d);
        if du_p.is_none() && du_q.is_none() {
            continue;
        }
        let (u, v) = (&cols[p], &cols[q]);
        if let Some(du) = du_p {
            deriv += curv.rm4(du, v, u, v) + curv.rm4(u, v, du, v);
        }
        if let Some(dv) = du_q {
            deriv += curv.rm4(u, dv, u, v) + curv.rm4(u, v, u, dv);
        }
    }
    if kind == ObjKind::MinusIntraBlocks {
        deriv = -deriv;
    }
    deriv
}

/// Ordered index pairs entering the objective.
fn term_pairs(ranks: &[usize], kind: ObjKind) -> Vec<(usize, usize)> {
    let mut boundaries = vec![0usize];
    for r in ranks {
        boundaries.push(boundaries.last().unwrap() + r);
    }
    let block_of = |c: usize| boundaries.iter().position(|&b| b > c).unwrap() - 1;
    let total = *boundaries.last().unwrap();
    let mut pairs = Vec::new();
    for a in 0..total {
        for b in (a + 1)..total {
            let same = block_of(a) == block_of(b);
            match kind {
                ObjKind::CrossBlocks if !same => pairs.push((a, b)),
                // ordered pairs inside a block: K is symmetric, count twice
                ObjKind::MinusIntraBlocks if same => {
                    pairs.push((a, b));
                    pairs.push((b, a));
                }
                _ => {}
            }
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// ascent state

/// Orthonormal column families moved by Givens rotations. One family with an
/// identity embedding covers the unconstrained case; one family per ambient
/// distribution block covers the constrained case.
struct AscentState {
    /// (embedding, coefficients): ambient column = embed · coeff column.
    families: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    /// Active columns in objective order: (family, column, objective block).
    active: Vec<(usize, usize, usize)>,
    ranks: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Generator {
    family: usize,
    a: usize,
    b: usize,
    /// Position of column `a` in the active list.
    active_a: usize,
    /// Position of column `b` in the active list when `b` is active.
    active_b: Option<usize>,
}

impl AscentState {
    fn ambient_column(&self, family: usize, col: usize) -> DVector<f64> {
        let (embed, coeff) = &self.families[family];
        embed * coeff.column(col)
    }

    fn active_columns(&self) -> Vec<DVector<f64>> {
        self.active.iter().map(|&(f, c, _)| self.ambient_column(f, c)).collect()
    }

    fn config(&self, point: &[f64]) -> SubspaceConfig {
        let cols = self.active_columns();
        let n = cols[0].len();
        let mat = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
        SubspaceConfig { point: point.to_vec(), columns: mat, ranks: self.ranks.clone() }
    }

    fn generators(&self) -> Vec<Generator> {
        let mut gens = Vec::new();
        for (active_a, &(fam, a, block_a)) in self.active.iter().enumerate() {
            let cols = self.families[fam].1.ncols();
            for b in 0..cols {
                if b <= a {
                    // (a,b) and (b,a) generate the same rotation; keep a < b,
                    // except when b is an earlier active column of another
                    // block, which the a-side enumeration already covered.
                    continue;
                }
                let active_b = self.active.iter().position(|&(f2, c2, _)| f2 == fam && c2 == b);
                if let Some(pos) = active_b {
                    if self.active[pos].2 == block_a {
                        continue; // intra-block rotations leave the objective fixed
                    }
                }
                gens.push(Generator { family: fam, a, b, active_a, active_b });
            }
        }
        gens
    }

    fn rotate(&mut self, gen: &Generator, theta: f64) {
        let (c, s) = (theta.cos(), theta.sin());
        let coeff = &mut self.families[gen.family].1;
        let ca = coeff.column(gen.a).clone_owned();
        let cb = coeff.column(gen.b).clone_owned();
        coeff.set_column(gen.a, &(&ca * c + &cb * s));
        coeff.set_column(gen.b, &(&ca * (-s) + &cb * c));
    }

    /// Velocities of the active columns under the generator at θ = 0.
    fn velocities(&self, gen: &Generator) -> Vec<(usize, DVector<f64>)> {
        let mut out = Vec::with_capacity(2);
        out.push((gen.active_a, self.ambient_column(gen.family, gen.b)));
        if let Some(pos) = gen.active_b {
            out.push((pos, -self.ambient_column(gen.family, gen.a)));
        }
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based restart seeds: reproducible and order-independent.
fn restart_seed(seed: u64, point_idx: usize, restart: usize) -> u64 {
    splitmix(seed ^ splitmix((point_idx as u64) << 32 | restart as u64 ^ 0xA5A5_5A5A))
}

fn random_orthonormal(rng: &mut ChaCha8Rng, g: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    loop {
        let raw = DMatrix::from_fn(n, n, |_, _| {
            // Box–Muller normals keep the column distribution isotropic
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        });
        if let Some(q) = gram_schmidt(g, &raw, 1e-12) {
            return q;
        }
    }
}

/// Sample grid over a chart's domain box: `per_axis` points per axis with a
/// 10% margin on non-periodic axes, total capped at `max_points`.
pub fn region_grid(m: &ChartManifold, per_axis: usize, max_points: usize) -> Result<Vec<Vec<f64>>> {
    if per_axis == 0 || max_points == 0 {
        return Err(Error::EmptyRegion);
    }
    let n = m.dim();
    let mut per = per_axis;
    while per > 1 && (per as u128).pow(n as u32) > max_points as u128 {
        per -= 1;
    }
    let mut grid = vec![Vec::new()];
    for axis in 0..n {
        let (lo, hi) = m.domain()[axis];
        let span = hi - lo;
        let ticks: Vec<f64> = if m.periodic()[axis] {
            (0..per).map(|i| lo + span * i as f64 / per as f64).collect()
        } else if per == 1 {
            vec![lo + 0.5 * span]
        } else {
            let (a, b) = (lo + 0.1 * span, hi - 0.1 * span);
            (0..per).map(|i| a + (b - a) * i as f64 / (per - 1) as f64).collect()
        };
        let mut next = Vec::with_capacity(grid.len() * ticks.len());
        for base in &grid {
            for &t in &ticks {
                let mut p = base.clone();
                p.push(t);
                next.push(p);
            }
        }
        grid = next;
    }
    if grid.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(grid)
}

/// Maximize an objective over configurations of the given ranks, sampling the
/// ambient domain and running seeded random-restart ascent at each point.
pub fn optimize_config(
    ambient: &ChartManifold,
    ranks: &[usize],
    objective: Objective,
    params: &OptimizerParams,
) -> Result<ExtremalResult> {
    let (ranks, kind, constraint): (Vec<usize>, ObjKind, Option<&DistributionSet>) = match &objective {
        Objective::Smix => (ranks.to_vec(), ObjKind::CrossBlocks, None),
        Objective::QRicci(q) => (vec![1, *q], ObjKind::CrossBlocks, None),
        Objective::NegSumBlockTau => (ranks.to_vec(), ObjKind::MinusIntraBlocks, None),
        Objective::SmixConstrained(d) => (ranks.to_vec(), ObjKind::CrossBlocks, Some(d)),
    };
    let n = ambient.dim();
    let total: usize = ranks.iter().sum();
    if ranks.len() < 2 || total > n || ranks.iter().any(|&r| r == 0) {
        return Err(Error::InfeasibleRanks { total, dim: n });
    }
    if let Some(d) = constraint {
        let avail = d.ranks();
        if avail.len() != ranks.len() {
            return Err(Error::DimensionMismatch {
                what: "constrained ranks".into(),
                expected: avail.len(),
                got: ranks.len(),
            });
        }
        for (i, (&want, &have)) in ranks.iter().zip(avail.iter()).enumerate() {
            if want > have {
                return Err(Error::RanksExceedDistribution { block: i, requested: want, available: have });
            }
        }
    }

    let grid = region_grid(ambient, params.points_per_axis, params.max_points)?;
    let mut best: Option<(f64, SubspaceConfig)> = None;
    let mut per_point_field = Vec::with_capacity(grid.len());
    let mut restart_values = Vec::with_capacity(grid.len() * params.restarts);
    let mut iterations = 0usize;

    for (pi, point) in grid.iter().enumerate() {
        let curv = ambient.curvature_at(point, &DiffConfig::default())?;
        let g = &curv.metric;

        // fixed embeddings for this point
        let embeddings: Vec<DMatrix<f64>> = match constraint {
            None => vec![DMatrix::identity(n, n)],
            Some(d) => {
                let frame = d.adapted_frame(point, None)?;
                (0..d.k())
                    .map(|i| {
                        let cols: Vec<&DVector<f64>> = frame.block(i).collect();
                        DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
                    })
                    .collect()
            }
        };

        let mut point_best: Option<(f64, SubspaceConfig)> = None;
        for restart in 0..params.restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(params.seed, pi, restart));
            let mut state = match constraint {
                None => {
                    let basis = random_orthonormal(&mut rng, g, n);
                    let mut active = Vec::with_capacity(total);
                    let mut col = 0;
                    for (bi, &r) in ranks.iter().enumerate() {
                        for _ in 0..r {
                            active.push((0usize, col, bi));
                            col += 1;
                        }
                    }
                    AscentState { families: vec![(embeddings[0].clone(), basis)], active, ranks: ranks.clone() }
                }
                Some(_) => {
                    let mut families = Vec::with_capacity(ranks.len());
                    let mut active = Vec::with_capacity(total);
                    for (bi, emb) in embeddings.iter().enumerate() {
                        let ni = emb.ncols();
                        let coeff = random_orthonormal(&mut rng, &DMatrix::identity(ni, ni), ni);
                        families.push((emb.clone(), coeff));
                        for c in 0..ranks[bi] {
                            active.push((bi, c, bi));
                        }
                    }
                    AscentState { families, active, ranks: ranks.clone() }
                }
            };

            let generators = state.generators();
            let mut f0 = objective_value(&curv, &state.active_columns(), &ranks, kind);
            for _sweep in 0..params.max_iters {
                iterations += 1;
                let mut improved = false;
                for gen in &generators {
                    let cols = state.active_columns();
                    let moving = state.velocities(gen);
                    let d = objective_directional_derivative(&curv, &cols, &ranks, kind, &moving);
                    if d.abs() <= params.ascent_tol {
                        continue;
                    }
                    let dir = d.signum();
                    let mut step = params.rotation_step0;
                    while step > 1e-13 {
                        let theta = dir * step;
                        let mut cand = AscentState {
                            families: state.families.clone(),
                            active: state.active.clone(),
                            ranks: state.ranks.clone(),
                        };
                        cand.rotate(gen, theta);
                        let f1 = objective_value(&curv, &cand.active_columns(), &ranks, kind);
                        if f1 >= f0 + 1e-4 * theta * d {
                            if f1 > f0 + params.ascent_tol {
                                improved = true;
                            }
                            state = cand;
                            f0 = f1;
                            break;
                        }
                        step *= 0.5;
                    }
                }
                if !improved {
                    break;
                }
            }
            restart_values.push(f0);
            if point_best.as_ref().map_or(true, |(v, _)| f0 > *v) {
                point_best = Some((f0, state.config(point)));
            }
        }
        let (pv, pc) = point_best.ok_or(Error::EmptyRegion)?;
        per_point_field.push((point.clone(), pv));
        if best.as_ref().map_or(true, |(v, _)| pv > *v) {
            best = Some((pv, pc));
        }
    }

    let (value, argmax) = best.ok_or(Error::EmptyRegion)?;
    Ok(ExtremalResult {
        value,
        argmax,
        per_point_field,
        iterations,
        restarts_used: params.restarts,
        certified_lower_bound: true,
        restart_values,
        via_closed_form: false,
    })
}

/// Canonical configuration (coordinate frame, Gram–Schmidt under ḡ) at a
/// point: the argmax reported by closed-form paths.
fn canonical_config(ambient: &ChartManifold, point: &[f64], ranks: &[usize]) -> Result<SubspaceConfig> {
    let g = ambient.metric_at(point)?;
    let n = ambient.dim();
    let total: usize = ranks.iter().sum();
    let basis = gram_schmidt(&g, &DMatrix::identity(n, n), 1e-14)
        .ok_or(Error::MetricNotPositiveDefinite { eigenvalue: 0.0 })?;
    Ok(SubspaceConfig {
        point: point.to_vec(),
        columns: basis.columns(0, total).clone_owned(),
        ranks: ranks.to_vec(),
    })
}

/// Supremum of `S̄_mix` over configurations of the given ranks. Declared
/// space forms of curvature `c` return the closed form `c · Σ_{i<j} n_i n_j`;
/// otherwise the result is the seeded-optimizer region supremum, a certified
/// lower bound.
pub fn delta_mix(ambient: &ChartManifold, ranks: &[usize], params: &OptimizerParams) -> Result<ExtremalResult> {
    let n = ambient.dim();
    let total: usize = ranks.iter().sum();
    if ranks.len() < 2 || total > n || ranks.iter().any(|&r| r == 0) {
        return Err(Error::InfeasibleRanks { total, dim: n });
    }
    if let Some(c) = ambient.space_form() {
        let value = c * cross_pair_count(ranks);
        let grid = region_grid(ambient, params.points_per_axis, params.max_points)?;
        let argmax = canonical_config(ambient, &grid[0], ranks)?;
        return Ok(ExtremalResult {
            value,
            argmax,
            per_point_field: grid.into_iter().map(|p| (p, value)).collect(),
            iterations: 0,
            restarts_used: 0,
            certified_lower_bound: true,
            restart_values: Vec::new(),
            via_closed_form: true,
        });
    }
    optimize_config(ambient, ranks, Objective::Smix, params)
}

/// Constrained variant: each block confined to the matching ambient
/// distribution. Always at most `delta_mix` of the same ranks.
pub fn hat_delta_mix(
    ambient_distributions: &DistributionSet,
    ranks: &[usize],
    params: &OptimizerParams,
) -> Result<ExtremalResult> {
    optimize_config(
        ambient_distributions.manifold(),
        ranks,
        Objective::SmixConstrained(ambient_distributions.clone()),
        params,
    )
}

/// Chen-type invariant `δ̄(n_1, …, n_k)`: half of (full-trace scalar curvature
/// minus the infimum of the block scalar-curvature sum), maximized over the
/// sample region. The half converts from the full-trace bookkeeping used
/// everywhere here to the half-trace scalar curvature under which the
/// invariant is usually stated.
pub fn chen_delta(ambient: &ChartManifold, ranks: &[usize], params: &OptimizerParams) -> Result<f64> {
    let n = ambient.dim();
    let total: usize = ranks.iter().sum();
    if ranks.len() < 2 || total > n || ranks.iter().any(|&r| r == 0) {
        return Err(Error::InfeasibleRanks { total, dim: n });
    }
    if let Some(c) = ambient.space_form() {
        // every subspace of a space form has τ̄(V) = n_i(n_i − 1)c
        let intra: f64 = ranks.iter().map(|&r| (r * (r - 1)) as f64).sum();
        return Ok(0.5 * c * ((n * (n - 1)) as f64 - intra));
    }
    let neg = optimize_config(ambient, ranks, Objective::NegSumBlockTau, params)?;
    let mut best = f64::NEG_INFINITY;
    for (point, neg_value) in &neg.per_point_field {
        let tau = ambient.curvature_at(point, &DiffConfig::default())?.tau;
        best = best.max(0.5 * (tau + neg_value));
    }
    Ok(best)
}

/// Supremum of the q-th Ricci curvature: `delta_mix` with ranks (1, q).
pub fn qth_ricci_sup(ambient: &ChartManifold, q: usize, params: &OptimizerParams) -> Result<ExtremalResult> {
    if q == 0 || q + 1 > ambient.dim() {
        return Err(Error::InfeasibleRanks { total: q + 1, dim: ambient.dim() });
    }
    delta_mix(ambient, &[1, q], params)
}

/// Random valid configuration at a point (test harness for lower-bound and
/// invariance properties).
pub fn random_config(
    ambient: &ChartManifold,
    point: &[f64],
    ranks: &[usize],
    seed: u64,
) -> Result<SubspaceConfig> {
    let g = ambient.metric_at(point)?;
    let n = ambient.dim();
    let total: usize = ranks.iter().sum();
    if total > n {
        return Err(Error::InfeasibleRanks { total, dim: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = random_orthonormal(&mut rng, &g, n);
    Ok(SubspaceConfig { point: point.to_vec(), columns: basis.columns(0, total).clone_owned(), ranks: ranks.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{product_chart, sphere_chart};

    fn quick_params() -> OptimizerParams {
        OptimizerParams {
            restarts: 8,
            max_iters: 200,
            points_per_axis: 1,
            seed: 42,
            ..OptimizerParams::default()
        }
    }

    fn euclidean(n: usize) -> ChartManifold {
        ChartManifold::euclidean("eucl", (0..n).map(|i| format!("x{i}")).collect(), vec![(-2.0, 2.0); n])
    }

    fn s2xr() -> ChartManifold {
        product_chart(
            "s2xr",
            &[
                sphere_chart(2),
                ChartManifold::euclidean("line", vec!["z".into()], vec![(-2.0, 2.0)]),
            ],
        )
    }

    #[test]
    fn smix_of_config_flat_and_spheres() {
        let e4 = euclidean(4);
        let c = random_config(&e4, &[0.0; 4], &[1, 2], 1).unwrap();
        assert!(smix_of_config(&e4, &c).unwrap().abs() < 1e-9);

        // unit S⁴, blocks (2,2): constant curvature gives Σ n_i n_j = 4
        let s4 = sphere_chart(4);
        let x = [1.3, 1.2, 1.1, 2.0];
        let c = random_config(&s4, &x, &[2, 2], 5).unwrap();
        let v = smix_of_config(&s4, &c).unwrap();
        assert!((v - 4.0).abs() < 1e-5, "S̄_mix = {v}");
    }

    #[test]
    fn smix_of_config_product_sphere_tangent() {
        // both vectors tangent to the sphere factor: K̄ = 1
        let m = s2xr();
        let x = [1.2, 0.7, 0.1];
        let g = m.metric_at(&x).unwrap();
        let mut cols = DMatrix::zeros(3, 2);
        cols[(0, 0)] = 1.0;
        cols[(1, 1)] = 1.0 / g[(1, 1)].sqrt();
        let c = SubspaceConfig { point: x.to_vec(), columns: cols, ranks: vec![1, 1] };
        let v = smix_of_config(&m, &c).unwrap();
        assert!((v - 1.0).abs() < 1e-5, "S̄_mix = {v}");
    }

    #[test]
    fn non_orthonormal_config_rejected() {
        let e3 = euclidean(3);
        let mut cols = DMatrix::zeros(3, 2);
        cols[(0, 0)] = 1.0;
        cols[(0, 1)] = 1.0; // duplicate direction
        let c = SubspaceConfig { point: vec![0.0; 3], columns: cols, ranks: vec![1, 1] };
        assert!(matches!(smix_of_config(&e3, &c), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn intra_block_rotation_invariance() {
        let s4 = sphere_chart(4);
        let x = [1.3, 1.2, 1.1, 2.0];
        let c = random_config(&s4, &x, &[2, 2], 9).unwrap();
        let v0 = smix_of_config(&s4, &c).unwrap();
        // rotate inside the first block
        let (th, _) = (0.7_f64, ());
        let (cs, sn) = (th.cos(), th.sin());
        let mut cols = c.columns.clone();
        let a = cols.column(0).clone_owned();
        let b = cols.column(1).clone_owned();
        cols.set_column(0, &(&a * cs + &b * sn));
        cols.set_column(1, &(&a * (-sn) + &b * cs));
        let c2 = SubspaceConfig { columns: cols, ..c.clone() };
        let v1 = smix_of_config(&s4, &c2).unwrap();
        assert!((v0 - v1).abs() <= 1e-9 * v0.abs().max(1.0));
    }

    #[test]
    fn optimizer_flat_is_zero() {
        let e4 = euclidean(4);
        let r = optimize_config(&e4, &[1, 2], Objective::Smix, &quick_params()).unwrap();
        assert!(r.value.abs() < 1e-7, "value {}", r.value);
        for v in &r.restart_values {
            assert!(v.abs() < 1e-7);
        }
    }

    #[test]
    fn optimizer_matches_space_form_closed_form() {
        let s3 = sphere_chart(3);
        let r = optimize_config(&s3, &[1, 2], Objective::Smix, &quick_params()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-4, "value {}", r.value);
        // closed-form fast path agrees and flags itself
        let d = delta_mix(&s3, &[1, 2], &quick_params()).unwrap();
        assert!(d.via_closed_form);
        assert_eq!(d.value, 2.0);
        assert!((d.recompute(&s3, ObjKind::CrossBlocks).unwrap() - d.value).abs() < 1e-10);
    }

    #[test]
    fn optimizer_product_metric() {
        // S²(1)×ℝ, ranks (1,1): supremum 1, attained sphere-tangent
        let m = s2xr();
        let r = optimize_config(&m, &[1, 1], Objective::Smix, &quick_params()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-4, "value {}", r.value);
        // argmax columns have negligible line components
        let cols = &r.argmax.columns;
        assert!(cols[(2, 0)].abs() + cols[(2, 1)].abs() < 1e-3);
        // recomputation returns the stored value
        let again = r.recompute(&m, ObjKind::CrossBlocks).unwrap();
        assert!((again - r.value).abs() <= 1e-10);
    }

    #[test]
    fn delta_mix_closed_forms() {
        let e3 = euclidean(3);
        assert_eq!(delta_mix(&e3, &[1, 2], &quick_params()).unwrap().value, 0.0);
        let s4 = sphere_chart(4);
        assert_eq!(delta_mix(&s4, &[1, 1, 1], &quick_params()).unwrap().value, 3.0);
        let h3 = crate::scenarios::hyperbolic_chart(3);
        assert_eq!(delta_mix(&h3, &[1, 1], &quick_params()).unwrap().value, -1.0);
    }

    #[test]
    fn hat_delta_constrained_below_unconstrained() {
        // S²×ℝ with the sphere/line split: constrained mixed planes are flat
        let m = s2xr();
        let d = DistributionSet::coordinate_blocks(m.clone(), &[vec![0, 1], vec![2]]).unwrap();
        let hat = hat_delta_mix(&d, &[1, 1], &quick_params()).unwrap();
        assert!(hat.value.abs() < 1e-4, "hat value {}", hat.value);
        let unc = optimize_config(&m, &[1, 1], Objective::Smix, &quick_params()).unwrap();
        assert!(hat.value <= unc.value + 1e-6);
        assert!((unc.value - 1.0).abs() < 1e-4);

        // Euclidean with coordinate distributions: zero
        let e3 = euclidean(3);
        let de = DistributionSet::coordinate_blocks(e3, &[vec![0], vec![1, 2]]).unwrap();
        let hat = hat_delta_mix(&de, &[1, 1], &quick_params()).unwrap();
        assert!(hat.value.abs() < 1e-7);
    }

    #[test]
    fn hat_delta_on_sphere_distribution() {
        let s3 = sphere_chart(3);
        let d = DistributionSet::coordinate_blocks(s3, &[vec![0], vec![1, 2]]).unwrap();
        let hat = hat_delta_mix(&d, &[1, 1], &quick_params()).unwrap();
        assert!((hat.value - 1.0).abs() < 1e-4, "hat {}", hat.value);
    }

    #[test]
    fn hat_delta_rank_overflow_rejected() {
        let s3 = sphere_chart(3);
        let d = DistributionSet::coordinate_blocks(s3, &[vec![0], vec![1, 2]]).unwrap();
        assert!(matches!(
            hat_delta_mix(&d, &[2, 1], &quick_params()),
            Err(Error::RanksExceedDistribution { block: 0, .. })
        ));
    }

    #[test]
    fn chen_delta_values() {
        let e4 = euclidean(4);
        assert_eq!(chen_delta(&e4, &[2, 2], &quick_params()).unwrap(), 0.0);
        // S⁴ ranks (2,2): blocks fill the tangent space, equals delta_mix = 4
        let s4 = sphere_chart(4);
        assert_eq!(chen_delta(&s4, &[2, 2], &quick_params()).unwrap(), 4.0);
        // S³ ranks (1,1): delta_mix(1,1) = 1 ≤ chen delta = 3
        let s3 = sphere_chart(3);
        let dm = delta_mix(&s3, &[1, 1], &quick_params()).unwrap().value;
        let cd = chen_delta(&s3, &[1, 1], &quick_params()).unwrap();
        assert!(dm <= cd + 1e-4);
        assert_eq!(cd, 3.0);
    }

    #[test]
    fn chen_delta_numeric_matches_closed_form() {
        // same chart without the declared-curvature tag goes through the
        // optimizer and must land on the closed form
        let s3 = sphere_chart(3);
        let undeclared = ChartManifold::new(
            "s3-undeclared",
            s3.coords().to_vec(),
            s3.domain().to_vec(),
            std::sync::Arc::new({
                let m = s3.clone();
                move |x: &[f64]| m.metric_raw(x)
            }),
        )
        .with_periodic(s3.periodic().to_vec());
        let cd = chen_delta(&undeclared, &[1, 1], &quick_params()).unwrap();
        assert!((cd - 3.0).abs() < 1e-4, "chen delta {cd}");
    }

    #[test]
    fn qth_ricci_examples() {
        let e3 = euclidean(3);
        assert_eq!(qth_ricci_sup(&e3, 2, &quick_params()).unwrap().value, 0.0);
        let s3 = sphere_chart(3);
        assert_eq!(qth_ricci_sup(&s3, 2, &quick_params()).unwrap().value, 2.0);
    }

    #[test]
    fn qth_ricci_product_of_spheres() {
        // S³(1)×S³(1), q = 4: a direction plus two partners in its own factor
        // and two in the other: supremum 2
        let m = product_chart("s3xs3", &[sphere_chart(3), sphere_chart(3)]);
        let mut p = quick_params();
        p.restarts = 12;
        let r = qth_ricci_sup(&m, 4, &p).unwrap();
        assert!((r.value - 2.0).abs() < 1e-3, "q-Ricci sup {}", r.value);
    }

    #[test]
    fn monotone_ascent_and_lower_bound() {
        let m = s2xr();
        let x = [1.2, 0.7, 0.1];
        let sup = optimize_config(&m, &[1, 1], Objective::Smix, &quick_params()).unwrap();
        for seed in 0..200 {
            let c = random_config(&m, &x, &[1, 1], seed).unwrap();
            let v = smix_of_config(&m, &c).unwrap();
            assert!(v <= sup.value + 1e-6, "sample {v} exceeds sup {}", sup.value);
        }
    }

    #[test]
    fn determinism_for_fixed_seed() {
        let m = s2xr();
        let a = optimize_config(&m, &[1, 1], Objective::Smix, &quick_params()).unwrap();
        let b = optimize_config(&m, &[1, 1], Objective::Smix, &quick_params()).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.restart_values.len(), b.restart_values.len());
        for (x, y) in a.restart_values.iter().zip(&b.restart_values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn infeasible_ranks_rejected() {
        let e3 = euclidean(3);
        assert!(matches!(
            optimize_config(&e3, &[2, 2], Objective::Smix, &quick_params()),
            Err(Error::InfeasibleRanks { .. })
        ));
        assert!(matches!(delta_mix(&e3, &[4, 1], &quick_params()), Err(Error::InfeasibleRanks { .. })));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let m = s2xr();
        let x = [1.2, 0.7, 0.1];
        let curv = m.curvature_at(&x, &DiffConfig::default()).unwrap();
        let g = &curv.metric;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let basis = random_orthonormal(&mut rng, g, 3);
            let ranks = vec![1, 1];
            let cols: Vec<DVector<f64>> = (0..2).map(|c| basis.column(c).clone_owned()).collect();
            // rotate active column 0 with the complement column 2
            let vel = basis.column(2).clone_owned();
            let analytic = objective_directional_derivative(
                &curv,
                &cols,
                &ranks,
                ObjKind::CrossBlocks,
                &[(0, vel.clone())],
            );
            let eval = |theta: f64| {
                let c0 = basis.column(0).clone_owned();
                let rotated = vec![&c0 * theta.cos() + &vel * theta.sin(), cols[1].clone()];
                objective_value(&curv, &rotated, &ranks, ObjKind::CrossBlocks)
            };
            let h = 1e-5;
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!(
                (analytic - fd).abs() <= 1e-5 * analytic.abs().max(fd.abs()).max(1.0),
                "analytic {analytic} vs fd {fd}"
            );
        }
    }
}
