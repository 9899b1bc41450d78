//! Numeric identifiability checks for a known Q-matrix and population.

use itertools::Itertools;
use rayon::prelude::*;

use super::slip::compass_minimize;
use super::{population_alpha, run_pool, score, AlphaVector, ProfileDistribution};
use crate::error::{Error, Result};
use crate::qmatrix::{enumerate_candidates, QMatrix, DEFAULT_BUDGET};
use crate::tmatrix::properties::{arrange_complete, is_block_upper_unit_triangular, leading_block, min_singular_value};
use crate::tmatrix::{build_d, build_t, build_t_tilde, build_tc, ComboOrder, DinaParams};

/// Smallest singular value accepted as full rank.
pub const RANK_TOL: f64 = 1e-10;
/// Largest deviation accepted in the D-matrix identity.
pub const D_IDENTITY_TOL: f64 = 1e-12;
/// Largest item count for the dense D-matrix identity check.
pub const D_IDENTITY_MAX_ITEMS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiabilityOptions {
    /// Candidates at or below this distance are flagged.
    pub threshold: f64,
    /// Spacing of the slip grid on `[0, 1]^m`.
    pub grid_step: f64,
    /// Grid points used as starts for the local refinement.
    pub refine_starts: usize,
    /// Cap on `classes * grid_points`.
    pub budget: u128,
    pub workers: Option<usize>,
}

impl Default for IdentifiabilityOptions {
    fn default() -> Self {
        IdentifiabilityOptions { threshold: 1e-6, grid_step: 0.1, refine_starts: 3, budget: DEFAULT_BUDGET, workers: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateDelta {
    pub q: QMatrix,
    /// Smallest score found over slip vectors; an upper bound on the infimum.
    pub delta: f64,
    /// Slip vector attaining `delta`.
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiabilityReport {
    pub threshold: f64,
    /// Every canonical class other than that of the true matrix, by
    /// increasing `delta`.
    pub candidates: Vec<CandidateDelta>,
    pub min_delta: f64,
    pub flagged: Vec<QMatrix>,
    pub warnings: Vec<String>,
}

impl IdentifiabilityReport {
    pub fn identifiable(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn grid_points(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| (i as f64 * step).min(1.0)).collect()
}

/// Smallest score of `q` against `alpha` over slip vectors: a grid search
/// refined by compass search from the best grid points.
pub fn profiled_delta(
    q: &QMatrix,
    alpha: &AlphaVector,
    g: &[f64],
    opts: &IdentifiabilityOptions,
) -> Result<CandidateDelta> {
    let eval = |c: &[f64]| score(q, alpha, &DinaParams { c: c.to_vec(), g: g.to_vec() });
    let points = grid_points(opts.grid_step);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    for c in std::iter::repeat_n(points.iter().copied(), q.m()).multi_cartesian_product() {
        scored.push((eval(&c)?, c));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.partial_cmp(&b.1).unwrap()));
    let starts: Vec<Vec<f64>> = scored.iter().take(opts.refine_starts.max(1)).map(|(_, c)| c.clone()).collect();
    let (c, delta, _) = compass_minimize(&starts, eval)?;
    let (grid_best, grid_c) = &scored[0];
    if *grid_best <= delta {
        return Ok(CandidateDelta { q: q.clone(), delta: *grid_best, c: grid_c.clone() });
    }
    Ok(CandidateDelta { q: q.clone(), delta, c })
}

/// Profiled distance from the population alpha-vector of `(q, params,
/// p_star)` to every inequivalent class, minimised over slips with `g` held.
pub fn check_identifiability(
    q: &QMatrix,
    params: &DinaParams<f64>,
    p_star: &ProfileDistribution,
    opts: &IdentifiabilityOptions,
) -> Result<IdentifiabilityReport> {
    if !q.is_complete() {
        return Err(Error::Precondition("the Q-matrix is not complete: some attribute has no single-attribute item".into()));
    }
    if params.m() != q.m() {
        return Err(Error::DimensionMismatch(format!("parameters for {} items, Q has {}", params.m(), q.m())));
    }
    params.check_unit_interval()?;
    let mut warnings = Vec::new();
    if !p_star.is_positive() {
        warnings.push("p* has zero mass on some profile, so identifiability is not guaranteed".to_string());
    }
    let grid = grid_points(opts.grid_step).len() as u128;
    let classes: Vec<QMatrix> = enumerate_candidates(q.m(), q.k(), opts.budget)?.collect();
    let needed = (classes.len() as u128).saturating_mul(grid.saturating_pow(q.m() as u32));
    if needed > opts.budget {
        return Err(Error::BudgetExceeded { needed, budget: opts.budget });
    }
    let order = ComboOrder::saturated(q.m())?;
    let alpha = population_alpha(q, params, p_star, &order)?;
    let truth = q.canonicalize();
    let others: Vec<QMatrix> = classes.into_iter().filter(|c| *c != truth).collect();
    let deltas: Vec<Result<CandidateDelta>> = run_pool(opts.workers, || {
        others.par_iter().map(|c| profiled_delta(c, &alpha, &params.g, opts)).collect()
    })?;
    let mut candidates = deltas.into_iter().collect::<Result<Vec<_>>>()?;
    candidates.sort_by(|a, b| a.delta.total_cmp(&b.delta).then_with(|| a.q.cmp(&b.q)));
    let min_delta = candidates.first().map_or(f64::INFINITY, |c| c.delta);
    let flagged = candidates.iter().filter(|c| c.delta <= opts.threshold).map(|c| c.q.clone()).collect();
    Ok(IdentifiabilityReport { threshold: opts.threshold, candidates, min_delta, flagged, warnings })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Measured margin, e.g. a minimum singular value.
    pub value: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, status: CheckStatus, value: Option<f64>, detail: impl Into<String>) -> Self {
        Check { name, status, value, detail: detail.into() }
    }

    fn threshold(name: &'static str, value: f64, pass: bool, detail: impl Into<String>) -> Self {
        let status = if pass { CheckStatus::Pass } else { CheckStatus::Fail };
        Check::new(name, status, Some(value), detail)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub identifiability: Option<IdentifiabilityReport>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

/// Rank, D-matrix and identifiability checks for `q` under `params` and
/// `p_star`.
pub fn verify(
    q: &QMatrix,
    params: &DinaParams<f64>,
    p_star: &ProfileDistribution,
    opts: &IdentifiabilityOptions,
) -> Result<VerifyReport> {
    if params.m() != q.m() {
        return Err(Error::DimensionMismatch(format!("parameters for {} items, Q has {}", params.m(), q.m())));
    }
    if p_star.k() != q.k() {
        return Err(Error::DimensionMismatch(format!("p* over {} attributes, Q has {}", p_star.k(), q.k())));
    }
    params.check_unit_interval()?;
    let order = ComboOrder::saturated(q.m())?;
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    let complete = q.is_complete();
    let needs_complete = "requires a complete Q-matrix";

    checks.push(Check::new(
        "complete",
        if complete { CheckStatus::Pass } else { CheckStatus::Fail },
        None,
        if complete { "every attribute has a single-attribute item".to_string() } else { missing_units(q) },
    ));

    match arrange_complete(q) {
        Some(arranged) => {
            let t = build_t::<f64>(&arranged, &order)?;
            let sv = min_singular_value(&leading_block(&t));
            let triangular = is_block_upper_unit_triangular(&t);
            checks.push(Check::threshold(
                "leading_block_full_rank",
                sv,
                triangular && sv > RANK_TOL,
                format!("block upper triangular with unit diagonal: {triangular}; minimum singular value"),
            ));
        }
        None => checks.push(Check::new("leading_block_full_rank", CheckStatus::Skipped, None, needs_complete)),
    }

    if !complete {
        checks.push(Check::new("tc_full_rank", CheckStatus::Skipped, None, needs_complete));
    } else if let Some(i) = params.c.iter().position(|&c| c == 0.0) {
        checks.push(Check::new("tc_full_rank", CheckStatus::Skipped, None, format!("c_{} = 0", i + 1)));
    } else {
        let sv = min_singular_value(&build_tc(q, &params.c, &order)?.entries);
        checks.push(Check::threshold("tc_full_rank", sv, sv > RANK_TOL, "minimum singular value"));
    }

    if !complete {
        checks.push(Check::new("t_tilde_full_rank", CheckStatus::Skipped, None, needs_complete));
    } else if let Err(e) = params.check_distinct() {
        checks.push(Check::new("t_tilde_full_rank", CheckStatus::Skipped, None, e.to_string()));
    } else {
        let sv = min_singular_value(&build_t_tilde(q, params, &order)?.entries);
        checks.push(Check::threshold("t_tilde_full_rank", sv, sv > RANK_TOL, "minimum singular value"));
    }

    if q.m() <= D_IDENTITY_MAX_ITEMS {
        let err = d_identity_error(q, params, &order)?;
        checks.push(Check::threshold("d_identity", err, err <= D_IDENTITY_TOL, "max abs deviation"));
    } else {
        checks.push(Check::new(
            "d_identity",
            CheckStatus::Skipped,
            None,
            format!("more than {D_IDENTITY_MAX_ITEMS} items"),
        ));
    }

    let identifiability = if complete {
        let report = check_identifiability(q, params, p_star, opts)?;
        warnings.extend(report.warnings.iter().cloned());
        checks.push(Check::threshold(
            "identifiability",
            report.min_delta,
            report.identifiable(),
            format!("{} of {} inequivalent classes within {:e}", report.flagged.len(), report.candidates.len(), report.threshold),
        ));
        Some(report)
    } else {
        checks.push(Check::new("identifiability", CheckStatus::Skipped, None, needs_complete));
        None
    };

    Ok(VerifyReport { checks, identifiability, warnings })
}

fn missing_units(q: &QMatrix) -> String {
    let missing: Vec<String> =
        (0..q.k()).filter(|&j| !q.row_bits().contains(&(1 << j))).map(|j| format!("A{}", j + 1)).collect();
    format!("no single-attribute item for {}", missing.join(", "))
}

/// Max-norm of `D T~ - (0 | T_{c-g})`.
pub fn d_identity_error(q: &QMatrix, params: &DinaParams<f64>, order: &ComboOrder) -> Result<f64> {
    let d = build_d(&params.g, order)?;
    let t_tilde = build_t_tilde(q, params, order)?;
    let lhs = &d.entries * &t_tilde.entries;
    let t_cg = build_tc(q, &params.c_minus_g(), order)?;
    let mut err: f64 = lhs.column(0).amax();
    for j in 0..t_cg.ncols() {
        for i in 0..t_cg.nrows() {
            err = err.max((lhs[(i, j + 1)] - t_cg.entries[(i, j)]).abs());
        }
    }
    Ok(err)
}
