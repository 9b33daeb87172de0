//! Inequality and criterion checkers with equality-case diagnostics.
//!
//! Every check that compares a curvature quantity against a bound built from
//! an extremal invariant uses the *region-supremum lower bound* produced by
//! the optimizer (or the closed form on declared space forms). The reports
//! carry the corresponding one-sided semantics: PASS verdicts are
//! conservative, VIOLATION verdicts are definitive.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{self, ObjKind, OptimizerParams};
use crate::geomcore::{ChartManifold, DiffConfig, VectorFieldFn};
use crate::immersion::TraceIdentity;
use crate::scenarios::{leaf_quadrature, Scenario};
use crate::structure::StructuralIdentity;

pub const RHS_NOTE: &str =
    "rhs uses certified lower bound of delta_mix; PASS verdicts are conservative, VIOLATION verdicts are definitive";

/// One check of a scenario's plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSpec {
    Isometry,
    Gauss,
    MainInequality,
    TwistedInequality,
    TwistedSmix,
    Structural(StructuralIdentity),
    Trace(TraceKind),
    Corollary(CorollaryId),
    Criterion(CriterionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "SII")]
    Sii(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorollaryId {
    #[serde(rename = "RICCI_K2")]
    RicciK2,
    #[serde(rename = "DD")]
    Dd,
    #[serde(rename = "ADAPTED_2K")]
    Adapted2k,
    #[serde(rename = "ADAPTED_NPROD")]
    AdaptedNprod,
}

impl CorollaryId {
    pub fn name(&self) -> &'static str {
        match self {
            CorollaryId::RicciK2 => "RICCI_K2",
            CorollaryId::Dd => "DD",
            CorollaryId::Adapted2k => "ADAPTED_2K",
            CorollaryId::AdaptedNprod => "ADAPTED_NPROD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CriterionId {
    Splitting,
    CompactTangent,
    CompactFactor,
    TwistedPair,
    CompactIntegral,
}

impl CriterionId {
    pub fn name(&self) -> &'static str {
        match self {
            CriterionId::Splitting => "SPLITTING",
            CriterionId::CompactTangent => "COMPACT_TANGENT",
            CriterionId::CompactFactor => "COMPACT_FACTOR",
            CriterionId::TwistedPair => "TWISTED_PAIR",
            CriterionId::CompactIntegral => "COMPACT_INTEGRAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Equality,
    Violation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualityDiagnostics {
    /// `Σ_{i<j} ‖h̄^mix_{ij}‖²`.
    pub mixed_sff_norm: f64,
    /// `max_i ‖H̄_i − H̄/k‖`.
    pub hbar_spread: f64,
    /// `delta_mix − S̄_mix(D_1(x), …, D_k(x))`.
    pub smix_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisStatus {
    Holds,
    Fails,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub status: HypothesisStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Hypothesis {
    fn new(name: &str, status: HypothesisStatus, value: Option<f64>) -> Self {
        Hypothesis { name: name.to_string(), status, value }
    }
}

/// LHS/RHS comparison at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub inequality_id: String,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub gap: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<EqualityDiagnostics>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub hypotheses: Vec<Hypothesis>,
    pub tol_eq: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs_note: Option<&'static str>,
}

impl InequalityReport {
    fn from_sides(id: &str, point: &[f64], lhs: f64, rhs: f64, tol_eq: f64) -> Self {
        let gap = rhs - lhs;
        let verdict = if gap.abs() <= tol_eq {
            Verdict::Equality
        } else if gap < -tol_eq {
            Verdict::Violation
        } else {
            Verdict::Pass
        };
        InequalityReport {
            inequality_id: id.to_string(),
            point: point.to_vec(),
            lhs,
            rhs,
            gap,
            verdict,
            diagnostics: None,
            hypotheses: Vec::new(),
            tol_eq,
            rhs_note: None,
        }
    }
}

/// Verdict of a structural criterion: measured hypotheses and a conclusion
/// that is asserted only when every hypothesis holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionVerdict {
    pub criterion_id: String,
    pub hypotheses: Vec<Hypothesis>,
    pub conclusion: String,
    pub asserted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integral_value: Option<f64>,
}

/// A record produced by the scenario runner.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CheckRecord {
    Inequality(InequalityReport),
    Criterion(CriterionVerdict),
}

// ---------------------------------------------------------------------------
// extremal-invariant cache

/// Caches the region-supremum extremal invariants of one scenario so that a
/// grid of check points shares a single optimizer run per invariant.
pub struct VerifyCtx<'a> {
    pub scenario: &'a Scenario,
    cfg: DiffConfig,
    delta_ambient: BTreeMap<Vec<usize>, f64>,
    delta_source: BTreeMap<Vec<usize>, f64>,
    hat_ambient: BTreeMap<Vec<usize>, f64>,
}

impl<'a> VerifyCtx<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        VerifyCtx {
            scenario,
            cfg: DiffConfig::default(),
            delta_ambient: BTreeMap::new(),
            delta_source: BTreeMap::new(),
            hat_ambient: BTreeMap::new(),
        }
    }

    pub fn cfg(&self) -> DiffConfig {
        self.cfg
    }

    fn params(&self) -> OptimizerParams {
        self.scenario.optimizer.clone()
    }

    fn ambient(&self) -> Result<&'a ChartManifold> {
        self.scenario.ambient().ok_or(Error::MissingImmersion)
    }

    /// Region-sup `delta_mix` of the ambient for the given ranks.
    pub fn delta_ambient(&mut self, ranks: &[usize]) -> Result<f64> {
        if let Some(v) = self.delta_ambient.get(ranks) {
            return Ok(*v);
        }
        let ambient = self.ambient()?;
        let v = extremal::delta_mix(ambient, ranks, &self.params())?.value;
        self.delta_ambient.insert(ranks.to_vec(), v);
        Ok(v)
    }

    /// Region-sup `delta_mix` of the source manifold itself.
    pub fn delta_source(&mut self, ranks: &[usize]) -> Result<f64> {
        if let Some(v) = self.delta_source.get(ranks) {
            return Ok(*v);
        }
        let v = extremal::delta_mix(&self.scenario.manifold, ranks, &self.params())?.value;
        self.delta_source.insert(ranks.to_vec(), v);
        Ok(v)
    }

    /// Constrained `hat_delta_mix` of the ambient distributions.
    pub fn hat_ambient(&mut self, ranks: &[usize]) -> Result<f64> {
        if let Some(v) = self.hat_ambient.get(ranks) {
            return Ok(*v);
        }
        let d = self.scenario.ambient_distributions.as_ref().ok_or(Error::PrerequisiteNotMet {
            check: "ADAPTED_2K".into(),
            detail: "ambient distribution set required".into(),
        })?;
        let v = extremal::hat_delta_mix(d, ranks, &self.params())?.value;
        self.hat_ambient.insert(ranks.to_vec(), v);
        Ok(v)
    }

    /// Supremum of the q-th Ricci curvature of the ambient.
    pub fn qth_ricci(&mut self, q: usize) -> Result<f64> {
        self.delta_ambient(&[1, q])
    }
}

// ---------------------------------------------------------------------------
// per-point checks

fn equality_diagnostics(
    sc: &Scenario,
    ctx: &mut VerifyCtx,
    x: &[f64],
    sff: &crate::immersion::AmbientSff,
    ranks: &[usize],
) -> Result<EqualityDiagnostics> {
    let ambient = ctx.ambient()?;
    let curv = ambient.curvature_at(&sff.ambient_point, &ctx.cfg())?;
    let cols: Vec<DVector<f64>> =
        (0..sff.tangent_frame.ncols()).map(|c| sff.tangent_frame.column(c).clone_owned()).collect();
    let current = extremal::objective_value(&curv, &cols, ranks, ObjKind::CrossBlocks);
    let delta = ctx.delta_ambient(ranks)?;
    let _ = (sc, x);
    Ok(EqualityDiagnostics {
        mixed_sff_norm: sff.mixed_norm_total(),
        hbar_spread: sff.mean_spread(),
        smix_gap: delta - current,
    })
}

/// Mixed scalar curvature against the mean-curvature/extremal bound.
pub fn check_main_inequality(sc: &Scenario, ctx: &mut VerifyCtx, x: &[f64]) -> Result<InequalityReport> {
    let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
    let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
    let cfg = ctx.cfg();
    let iso = imm.isometry_residual(x, &cfg)?;
    if iso > sc.tolerances.tol_iso {
        return Err(Error::NotIsometric { residual: iso });
    }
    let dec = d.curvature_decomposition(x, &cfg)?;
    let sff = imm.ambient_sff(x, &cfg)?;
    let ranks = d.ranks();
    let k = ranks.len() as f64;
    let delta = ctx.delta_ambient(&ranks)?;
    let lhs = dec.total;
    let rhs = (k - 1.0) / (2.0 * k) * sff.norm_mean_sq + delta;
    let mut report = InequalityReport::from_sides("main_inequality", x, lhs, rhs, sc.tolerances.tol_eq);
    report.diagnostics = Some(equality_diagnostics(sc, ctx, x, &sff, &ranks)?);
    report.rhs_note = Some(RHS_NOTE);
    Ok(report)
}

/// Derived inequalities for special block patterns.
pub fn check_corollary(
    id: CorollaryId,
    sc: &Scenario,
    ctx: &mut VerifyCtx,
    x: &[f64],
) -> Result<InequalityReport> {
    let cfg = ctx.cfg();
    let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
    let tol_eq = sc.tolerances.tol_eq;
    match id {
        CorollaryId::RicciK2 => {
            let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
            let ranks = d.ranks();
            if ranks.len() != 2 || ranks[0] != 1 {
                return Err(Error::PrerequisiteNotMet {
                    check: "RICCI_K2".into(),
                    detail: format!("needs two blocks with a rank-1 first block, got {ranks:?}"),
                });
            }
            let q = ranks[1];
            let frame = d.adapted_frame(x, None)?;
            let n_vec = &frame.vectors[0];
            let curv = sc.manifold.curvature_at(x, &cfg)?;
            let lhs = (n_vec.transpose() * &curv.ricci * n_vec)[(0, 0)];
            let sff = imm.ambient_sff(x, &cfg)?;
            let rq = ctx.qth_ricci(q)?;
            let rhs = 0.25 * sff.norm_mean_sq + rq;
            let mut report = InequalityReport::from_sides("corollary:RICCI_K2", x, lhs, rhs, tol_eq);
            report.diagnostics = Some(equality_diagnostics(sc, ctx, x, &sff, &ranks)?);
            report.rhs_note = Some(RHS_NOTE);
            Ok(report)
        }
        CorollaryId::Dd => {
            let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
            let ranks = d.ranks();
            let k = ranks.len() as f64;
            let lhs = ctx.delta_source(&ranks)?;
            let sff = imm.ambient_sff(x, &cfg)?;
            let rhs = (k - 1.0) / (2.0 * k) * sff.norm_mean_sq + ctx.delta_ambient(&ranks)?;
            let mut report = InequalityReport::from_sides("corollary:DD", x, lhs, rhs, tol_eq);
            report.rhs_note = Some(RHS_NOTE);
            Ok(report)
        }
        CorollaryId::Adapted2k => {
            let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
            let ranks = d.ranks();
            let k = ranks.len() as f64;
            let amb_d = sc.ambient_distributions.as_ref().ok_or(Error::PrerequisiteNotMet {
                check: "ADAPTED_2K".into(),
                detail: "ambient distribution set required".into(),
            })?;
            let dec = d.curvature_decomposition(x, &cfg)?;
            let sff = imm.ambient_sff(x, &cfg)?;
            // adaptedness: pushed block vectors must lie in the matching
            // ambient distribution at f(x)
            let amb_frame = amb_d.adapted_frame(&sff.ambient_point, None)?;
            let gb = &sff.ambient_metric;
            let mut adapt_res = 0.0_f64;
            for (c, &bi) in sff.block_of.iter().enumerate() {
                let v = sff.pushed_frame.column(c).clone_owned();
                let mut inside = DVector::zeros(v.len());
                for e in amb_frame.block(bi) {
                    let coeff = (e.transpose() * gb * &v)[(0, 0)];
                    inside.axpy(coeff, e, 1.0);
                }
                let out = &v - &inside;
                adapt_res = adapt_res.max((out.transpose() * gb * &out)[(0, 0)].max(0.0).sqrt());
            }
            let hat = ctx.hat_ambient(&ranks)?;
            let lhs = dec.total;
            let rhs = (k - 1.0) / (2.0 * k) * sff.norm_mean_sq + hat;
            let mut report = InequalityReport::from_sides("corollary:ADAPTED_2K", x, lhs, rhs, tol_eq);
            report.hypotheses.push(Hypothesis::new(
                "adapted (pushed blocks inside ambient distributions)",
                if adapt_res <= 1e-8 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(adapt_res),
            ));
            report.diagnostics = Some(equality_diagnostics(sc, ctx, x, &sff, &ranks)?);
            report.rhs_note = Some(RHS_NOTE);
            Ok(report)
        }
        CorollaryId::AdaptedNprod => {
            let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
            let ranks = d.ranks();
            if ranks.iter().any(|&r| r != 1) {
                return Err(Error::PrerequisiteNotMet {
                    check: "ADAPTED_NPROD".into(),
                    detail: format!("needs rank-1 induced blocks, got {ranks:?}"),
                });
            }
            let n = ranks.len();
            let curv = sc.manifold.curvature_at(x, &cfg)?;
            let sff = imm.ambient_sff(x, &cfg)?;
            let tau_n = 2.0 * ctx.delta_ambient(&vec![1; n])?;
            let lhs = curv.tau;
            let rhs = (n as f64 - 1.0) / (2.0 * n as f64) * sff.norm_mean_sq + tau_n;
            let mut report = InequalityReport::from_sides("corollary:ADAPTED_NPROD", x, lhs, rhs, tol_eq);
            // the inequality presupposes an adapted immersion into an
            // ambient n-product; record whether that hypothesis holds
            let adapted = match &sc.ambient_distributions {
                Some(amb) if amb.k() == n => HypothesisStatus::Holds,
                _ => HypothesisStatus::Fails,
            };
            report
                .hypotheses
                .push(Hypothesis::new("adapted to an ambient n-product structure", adapted, None));
            if report.verdict == Verdict::Equality {
                report.hypotheses.push(Hypothesis::new(
                    "totally geodesic residual ‖h̄‖²",
                    if sff.norm_hbar_sq <= tol_eq { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                    Some(sff.norm_hbar_sq),
                ));
            }
            report.rhs_note = Some(RHS_NOTE);
            Ok(report)
        }
    }
}

/// Twisted-product inequality: leafwise-Laplacian side against the bound.
pub fn check_twisted_inequality(sc: &Scenario, ctx: &mut VerifyCtx, x: &[f64]) -> Result<InequalityReport> {
    let tp = sc.twisted.as_ref().ok_or(Error::NotTwistedProduct)?;
    let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
    let cfg = ctx.cfg();
    let lhs = tp.laplacian_side(x, &cfg)?;
    let sff = imm.ambient_sff(x, &cfg)?;
    let ranks = tp.distributions.ranks();
    let k = ranks.len() as f64;
    let delta = ctx.delta_ambient(&ranks)?;
    let rhs = (k - 1.0) / (2.0 * k) * sff.norm_mean_sq + delta;
    let mut report = InequalityReport::from_sides("twisted_inequality", x, lhs, rhs, sc.tolerances.tol_eq);
    report.diagnostics = Some(equality_diagnostics(sc, ctx, x, &sff, &ranks)?);
    report.rhs_note = Some(RHS_NOTE);
    Ok(report)
}

/// Cross-module consistency: curvature route vs leafwise-Laplacian route.
pub fn check_twisted_smix(sc: &Scenario, ctx: &VerifyCtx, x: &[f64]) -> Result<InequalityReport> {
    let tp = sc.twisted.as_ref().ok_or(Error::NotTwistedProduct)?;
    let cfg = ctx.cfg();
    let dec = tp.distributions.curvature_decomposition(x, &cfg)?;
    let lhs = dec.pair_with_complement(0);
    let rhs = tp.laplacian_side(x, &cfg)?;
    Ok(InequalityReport::from_sides("twisted_smix", x, lhs, rhs, sc.tolerances.tol_identity))
}

pub fn check_structural(
    id: StructuralIdentity,
    sc: &Scenario,
    ctx: &VerifyCtx,
    x: &[f64],
) -> Result<InequalityReport> {
    let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
    let residual = d.check_structural_identity(id, x, &ctx.cfg())?;
    Ok(InequalityReport::from_sides(
        &format!("structural:{}", id.name()),
        x,
        residual,
        0.0,
        sc.tolerances.tol_identity,
    ))
}

pub fn check_gauss(sc: &Scenario, ctx: &VerifyCtx, x: &[f64]) -> Result<InequalityReport> {
    let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
    let residual = imm.gauss_residual(x, &ctx.cfg())?;
    Ok(InequalityReport::from_sides("gauss", x, residual, 0.0, sc.tolerances.tol_identity))
}

pub fn check_trace(kind: TraceKind, sc: &Scenario, ctx: &VerifyCtx, x: &[f64]) -> Result<InequalityReport> {
    let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
    let (id, tid) = match kind {
        TraceKind::Si => ("trace:SI".to_string(), TraceIdentity::Si),
        TraceKind::Sii(i) => (format!("trace:SII({i})"), TraceIdentity::Sii(i)),
    };
    let parts = imm.trace_identity_parts(x, tid, &ctx.cfg())?;
    Ok(InequalityReport::from_sides(&id, x, parts.curvature_side, parts.sff_side, sc.tolerances.tol_identity))
}

pub fn check_isometry(sc: &Scenario, ctx: &VerifyCtx, x: &[f64]) -> Result<InequalityReport> {
    let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
    let residual = imm.isometry_residual(x, &ctx.cfg())?;
    let tol = sc.tolerances.tol_iso;
    let mut report = InequalityReport::from_sides("isometry", x, residual, tol, sc.tolerances.tol_eq);
    report.verdict = if residual <= tol { Verdict::Pass } else { Verdict::Violation };
    Ok(report)
}

// ---------------------------------------------------------------------------
// criteria

/// A chart copy with the non-periodic domain shrunk by `frac` per side, so
/// integral criteria stay clear of the differencing margin.
fn shrunk_chart(m: &ChartManifold, frac: f64) -> ChartManifold {
    let domain: Vec<(f64, f64)> = m
        .domain()
        .iter()
        .zip(m.periodic())
        .map(|(&(lo, hi), &per)| {
            if per {
                (lo, hi)
            } else {
                let s = frac * (hi - lo);
                (lo + s, hi - s)
            }
        })
        .collect();
    let inner = m.clone();
    let chart = ChartManifold::new(
        m.label().to_string(),
        m.coords().to_vec(),
        domain,
        std::sync::Arc::new(move |x: &[f64]| inner.metric_raw(x)),
    )
    .with_periodic(m.periodic().to_vec());
    match m.space_form() {
        Some(c) => chart.with_space_form(c),
        None => chart,
    }
}

/// Structural criteria: hypotheses are measured on the grid and the paper
/// conclusion templates are asserted only when every hypothesis holds.
pub fn evaluate_criterion(id: CriterionId, sc: &Scenario, ctx: &mut VerifyCtx) -> Result<CriterionVerdict> {
    let cfg = ctx.cfg();
    match id {
        CriterionId::Splitting => {
            let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
            let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
            let ranks = d.ranks();
            let grid = sc.grid_points()?;
            let mut max_umb = 0.0_f64;
            let mut max_mean_bar = 0.0_f64;
            let mut max_h_block = 0.0_f64;
            let mut max_t_block = 0.0_f64;
            let mut max_mean_block = 0.0_f64;
            let mut smix_mid = 0.0;
            for (pi, p) in grid.iter().enumerate() {
                for i in 0..d.k() {
                    let fd = d.fundamental_data(i, p, &cfg)?;
                    max_umb = max_umb.max(fd.umbilic_deviation);
                    max_h_block = max_h_block.max(fd.norm_h_sq);
                    max_t_block = max_t_block.max(fd.norm_t_sq);
                    max_mean_block = max_mean_block.max(fd.norm_mean_sq.max(0.0).sqrt());
                }
                let sff = imm.ambient_sff(p, &cfg)?;
                max_mean_bar = max_mean_bar.max(sff.norm_mean_sq.max(0.0).sqrt());
                if pi == grid.len() / 2 {
                    smix_mid = d.curvature_decomposition(p, &cfg)?.total;
                }
            }
            let delta = ctx.delta_ambient(&ranks)?;
            let tol = sc.tolerances.tol_eq;
            let umb = Hypothesis::new(
                "all blocks totally umbilical (max deviation)",
                if max_umb <= 1e-6 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(max_umb),
            );
            let minimal = Hypothesis::new(
                "immersion minimal (max ‖H̄‖ on grid)",
                if max_mean_bar <= tol { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(max_mean_bar),
            );
            let nonpos = Hypothesis::new(
                "delta_mix ≤ 0",
                if delta <= tol { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(delta),
            );
            // a chart is a bounded window: completeness and integrability of
            // ‖H_i‖ can only be certified when the fields vanish outright
            let l1 = Hypothesis::new(
                "complete with ‖H_i‖ ∈ L¹ (max ‖H_i‖ on grid)",
                if max_mean_block <= 1e-7 { HypothesisStatus::Holds } else { HypothesisStatus::Unverifiable },
                Some(max_mean_block),
            );
            let measured_h = Hypothesis::new(
                "measured max ‖h_i‖² (splitting requires 0)",
                if max_h_block <= 1e-7 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(max_h_block),
            );
            let measured_t = Hypothesis::new(
                "measured max ‖T_i‖² (splitting requires 0)",
                if max_t_block <= 1e-7 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(max_t_block),
            );
            let measured_smix = Hypothesis::new(
                "measured S_mix at grid midpoint",
                HypothesisStatus::Holds,
                Some(smix_mid),
            );
            let asserted = [&umb, &minimal, &nonpos, &l1]
                .iter()
                .all(|h| h.status == HypothesisStatus::Holds);
            Ok(CriterionVerdict {
                criterion_id: "SPLITTING".into(),
                hypotheses: vec![umb, minimal, nonpos, l1, measured_h, measured_t, measured_smix],
                conclusion: "splits along the distributions and delta_mix = 0".into(),
                asserted,
                integral_value: None,
            })
        }
        CriterionId::CompactTangent => {
            let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
            let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
            let ranks = d.ranks();
            let k = ranks.len() as f64;
            let delta = ctx.delta_ambient(&ranks)?;
            let grid = sc.grid_points()?;
            let mut max_h1 = 0.0_f64;
            let mut min_margin = f64::INFINITY;
            for p in &grid {
                let mut norm_terms = 0.0;
                for i in 0..d.k() {
                    let fd = d.fundamental_data(i, p, &cfg)?;
                    if i == 0 {
                        max_h1 = max_h1.max(fd.norm_mean_sq.max(0.0).sqrt());
                    }
                    norm_terms += fd.norm_h_sq + fd.norm_h_perp_sq - fd.norm_t_perp_sq;
                }
                let sff = imm.ambient_sff(p, &cfg)?;
                let margin = -delta - norm_terms - (k - 1.0) / (2.0 * k) * sff.norm_mean_sq;
                min_margin = min_margin.min(margin);
            }
            let minimal = Hypothesis::new(
                "first block minimal (max ‖H₁‖ on grid)",
                if max_h1 <= sc.tolerances.tol_eq { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(max_h1),
            );
            let strict = Hypothesis::new(
                "(k−1)/(2k)‖H̄‖² < −delta_mix − Σ(‖h_i‖²+‖h_i^⊥‖²−‖T_i^⊥‖²) on grid (min margin)",
                if min_margin > 0.0 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(min_margin),
            );
            let asserted =
                minimal.status == HypothesisStatus::Holds && strict.status == HypothesisStatus::Holds;
            Ok(CriterionVerdict {
                criterion_id: "COMPACT_TANGENT".into(),
                hypotheses: vec![minimal, strict],
                conclusion: "no compact submanifold tangent to the first block exists".into(),
                asserted,
                integral_value: None,
            })
        }
        CriterionId::CompactFactor => {
            let tp = sc.twisted.as_ref().ok_or(Error::NotTwistedProduct)?;
            let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
            let ranks = tp.distributions.ranks();
            let k = ranks.len() as f64;
            let delta = ctx.delta_ambient(&ranks)?;
            let grid = sc.grid_points()?;
            let mut max_cond1 = f64::NEG_INFINITY;
            let mut min_margin = f64::INFINITY;
            for p in &grid {
                let grads = tp.base_log_gradient_sq(p)?;
                let grad_term: f64 =
                    grads.iter().enumerate().map(|(i, g)| tp.fiber_rank(i) as f64 * g).sum();
                max_cond1 = max_cond1.max(delta + grad_term);
                let sff = imm.ambient_sff(p, &cfg)?;
                min_margin =
                    min_margin.min(-delta - grad_term - (k - 1.0) / (2.0 * k) * sff.norm_mean_sq);
            }
            let cond1 = Hypothesis::new(
                "delta_mix < −Σ n_i ‖P₁∇log u_i‖² on grid (max of sum)",
                if max_cond1 < 0.0 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(max_cond1),
            );
            let cond2 = Hypothesis::new(
                "(k−1)/(2k)‖H̄‖² < −delta_mix − Σ n_i ‖P₁∇log u_i‖² on grid (min margin)",
                if min_margin > 0.0 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(min_margin),
            );
            let asserted =
                cond1.status == HypothesisStatus::Holds && cond2.status == HypothesisStatus::Holds;
            Ok(CriterionVerdict {
                criterion_id: "COMPACT_FACTOR".into(),
                hypotheses: vec![cond1, cond2],
                conclusion: "the base factor is non-compact".into(),
                asserted,
                integral_value: None,
            })
        }
        CriterionId::TwistedPair => {
            let tp = sc.twisted.as_ref().ok_or(Error::NotTwistedProduct)?;
            let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
            if tp.k() != 2 {
                return Err(Error::PrerequisiteNotMet {
                    check: "TWISTED_PAIR".into(),
                    detail: format!("needs a twisted product with one fiber, got {}", tp.k()),
                });
            }
            let ranks = tp.distributions.ranks();
            let delta = ctx.delta_ambient(&ranks)?;
            // integrate over the fiber leaf through the domain midpoint
            let template: Vec<f64> =
                sc.manifold.domain().iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
            let axes = tp.fiber_axes[0].clone();
            let closed = axes.iter().all(|&a| sc.manifold.periodic()[a]);
            let quad = leaf_quadrature(&sc.manifold, &axes, &template, 64)?;
            let mut integral = 0.0;
            for (p, w) in &quad {
                let sff = imm.ambient_sff(p, &cfg)?;
                let u2 = tp.compiled[0].eval(p);
                integral += w * (0.25 * sff.norm_mean_sq + delta) * u2;
            }
            // flux identity along the closed leaf: the leafwise divergence of
            // the fiber mean curvature integrates to −∫‖H‖²
            let comp2 = if closed { Some(comp2_residual(sc, tp, &quad, &cfg)?) } else { None };
            let neg = Hypothesis::new(
                "delta_mix(n₁, n₂) < 0",
                if delta < 0.0 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                Some(delta),
            );
            let leaf = Hypothesis::new(
                "integration leaf closed (periodic fiber)",
                if closed { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                None,
            );
            let mut hypotheses = vec![neg, leaf];
            if let Some(r) = comp2 {
                hypotheses.push(Hypothesis::new(
                    "leaf flux identity residual |∫Div_leaf H + ∫‖H‖²|",
                    if r <= 1e-4 { HypothesisStatus::Holds } else { HypothesisStatus::Fails },
                    Some(r),
                ));
            }
            let triggered = hypotheses[0].status == HypothesisStatus::Holds
                && hypotheses[1].status == HypothesisStatus::Holds
                && integral < 0.0;
            Ok(CriterionVerdict {
                criterion_id: "TWISTED_PAIR".into(),
                hypotheses,
                conclusion: "the base factor is non-compact".into(),
                asserted: triggered,
                integral_value: Some(integral),
            })
        }
        CriterionId::CompactIntegral => {
            let d = sc.distributions.as_ref().ok_or(Error::MissingDistributions)?;
            let imm = sc.immersion.as_ref().ok_or(Error::MissingImmersion)?;
            for (a, &(lo, hi)) in sc.manifold.domain().iter().enumerate() {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::UnboundedDomainForIntegral { axis: a });
                }
            }
            let ranks = d.ranks();
            let k = ranks.len() as f64;
            let delta = ctx.delta_ambient(&ranks)?;
            let proxy = shrunk_chart(&sc.manifold, 0.1);
            let axes: Vec<usize> = (0..proxy.dim()).collect();
            let template: Vec<f64> =
                proxy.domain().iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
            let quad = leaf_quadrature(&proxy, &axes, &template, 5.max(sc.grid))?;
            let mut lhs = 0.0;
            let mut mean_int = 0.0;
            let mut vol = 0.0;
            for (p, w) in &quad {
                let mut term = 0.0;
                for i in 0..d.k() {
                    let fd = d.fundamental_data(i, p, &cfg)?;
                    term += fd.norm_mean_sq + fd.norm_mean_perp_sq - fd.norm_h_sq - fd.norm_h_perp_sq
                        + fd.norm_t_sq
                        + fd.norm_t_perp_sq;
                }
                lhs += w * term;
                let sff = imm.ambient_sff(p, &cfg)?;
                mean_int += w * sff.norm_mean_sq;
                vol += w;
            }
            let rhs = (k - 1.0) / (2.0 * k) * mean_int + delta * vol;
            let holds = lhs <= rhs + 1e-4 * rhs.abs().max(1.0);
            let hypotheses = vec![
                Hypothesis::new("domain bounded (chart box treated as the manifold)", HypothesisStatus::Holds, None),
                Hypothesis::new("lhs integral", HypothesisStatus::Holds, Some(lhs)),
                Hypothesis::new("rhs integral", HypothesisStatus::Holds, Some(rhs)),
            ];
            Ok(CriterionVerdict {
                criterion_id: "COMPACT_INTEGRAL".into(),
                hypotheses,
                conclusion: "integral mean-curvature inequality holds on the chart box".into(),
                asserted: holds,
                integral_value: Some(rhs - lhs),
            })
        }
    }
}

/// `|∫ Div_leaf H_fiber + ∫ ‖H_fiber‖²|` over a closed fiber leaf, where
/// `Div_leaf` traces the ambient connection over the leaf-tangent frame.
fn comp2_residual(
    sc: &Scenario,
    tp: &crate::scenarios::TwistedProduct,
    quad: &[(Vec<f64>, f64)],
    cfg: &DiffConfig,
) -> Result<f64> {
    let d = &tp.distributions;
    let n = sc.manifold.dim();
    let fiber_block = 1usize;
    let d_cl = d.clone();
    let cfg_inner = *cfg;
    let h_field: VectorFieldFn = std::sync::Arc::new(move |y: &[f64]| {
        match d_cl.fundamental_data(fiber_block, y, &cfg_inner) {
            Ok(fd) => fd.mean_curvature,
            Err(_) => DVector::from_element(n, f64::NAN),
        }
    });
    let outer = cfg.outer();
    let mut integral = 0.0;
    for (p, w) in quad {
        let gamma = sc.manifold.christoffel(p, cfg)?;
        let g = sc.manifold.metric_at(p)?;
        let hval = h_field(p);
        let mut dh = Vec::with_capacity(n);
        let hf = |y: &[f64]| h_field(y);
        for a in 0..n {
            dh.push(crate::geomcore::stencil::d1(&hf, p, a, &outer));
        }
        let frame = d.adapted_frame(p, None)?;
        let mut div_leaf = 0.0;
        for (vi, &bi) in frame.block_of.iter().enumerate() {
            if bi != fiber_block {
                continue;
            }
            let e = &frame.vectors[vi];
            // ∇_e H = e^a (∂_a H^b + Γ^b_{ac} H^c)
            let mut nabla = DVector::zeros(n);
            for a in 0..n {
                if e[a] == 0.0 {
                    continue;
                }
                nabla.axpy(e[a], &dh[a], 1.0);
                for c in 0..n {
                    if hval[c] == 0.0 {
                        continue;
                    }
                    for b in 0..n {
                        nabla[b] += e[a] * gamma[[b, a, c]] * hval[c];
                    }
                }
            }
            div_leaf += (e.transpose() * &g * &nabla)[(0, 0)];
        }
        let h_sq = (hval.transpose() * &g * &hval)[(0, 0)];
        integral += w * (div_leaf + h_sq);
    }
    Ok(integral.abs())
}

// ---------------------------------------------------------------------------
// runner

/// Execute a scenario's check plan over its grid; records appear in plan
/// order, per-point checks in grid order.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<CheckRecord>> {
    let mut ctx = VerifyCtx::new(sc);
    let grid = sc.grid_points()?;
    let mut records = Vec::new();
    for check in &sc.checks {
        match check {
            CheckSpec::Criterion(id) => {
                records.push(CheckRecord::Criterion(evaluate_criterion(*id, sc, &mut ctx)?));
            }
            per_point => {
                for x in &grid {
                    let report = match per_point {
                        CheckSpec::Isometry => check_isometry(sc, &ctx, x)?,
                        CheckSpec::Gauss => check_gauss(sc, &ctx, x)?,
                        CheckSpec::MainInequality => check_main_inequality(sc, &mut ctx, x)?,
                        CheckSpec::TwistedInequality => check_twisted_inequality(sc, &mut ctx, x)?,
                        CheckSpec::TwistedSmix => check_twisted_smix(sc, &ctx, x)?,
                        CheckSpec::Structural(id) => check_structural(*id, sc, &ctx, x)?,
                        CheckSpec::Trace(kind) => check_trace(*kind, sc, &ctx, x)?,
                        CheckSpec::Corollary(id) => check_corollary(*id, sc, &mut ctx, x)?,
                        CheckSpec::Criterion(_) => unreachable!(),
                    };
                    records.push(CheckRecord::Inequality(report));
                }
            }
        }
    }
    Ok(records)
}
