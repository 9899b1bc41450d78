//! Slip estimation with known guessing: moment estimates for items with a
//! covering combo, profiled score minimisation for the rest.

use itertools::Itertools;
use rayon::prelude::*;

use super::{assemble, check_alpha, estimate_p, run_pool, score, AlphaVector, Diagnostic, EstimationResult};
use super::{ScoredCandidate, SearchOptions};
use crate::error::{Error, Result};
use crate::qmatrix::{enumerate_candidates, ItemCombo, QMatrix};
use crate::tmatrix::{d_row_terms, DinaParams};

/// Denominators at or below this are treated as degenerate.
const DEGENERATE_DENOMINATOR: f64 = 1e-12;
const COMPASS_STARTS: [f64; 4] = [1.0, 0.8, 0.6, 0.4];
const COMPASS_STEP: f64 = 0.25;
const COMPASS_TOL: f64 = 1e-7;

/// Smallest combo of other items whose attributes cover those of `item`
/// (0-based), ties broken lexicographically.
pub fn find_cover_combo(q: &QMatrix, item: usize) -> Result<Option<ItemCombo>> {
    if item >= q.m() {
        return Err(Error::ItemOutOfRange { item: item + 1, m: q.m() });
    }
    let need = q.row(item);
    // items sharing no attribute with `item` never appear in a smallest cover
    let helpers: Vec<usize> = (0..q.m()).filter(|&j| j != item && q.row(j) & need != 0).collect();
    let reachable = helpers.iter().fold(0u16, |acc, &j| acc | q.row(j));
    if reachable & need != need {
        return Ok(None);
    }
    for size in 1..=helpers.len() {
        for combo in helpers.iter().copied().combinations(size) {
            if combo.iter().fold(0u16, |acc, &j| acc | q.row(j)) & need == need {
                return ItemCombo::from_items(&combo).map(Some);
            }
        }
    }
    Ok(None)
}

fn d_row_dot(alpha: &AlphaVector, g: &[f64], combo: ItemCombo) -> Result<f64> {
    let mut sum = 0.0;
    for (u, coeff) in d_row_terms(g, combo) {
        sum += coeff * match u {
            Some(u) => alpha.rate(u)?,
            None => 1.0,
        };
    }
    Ok(sum)
}

/// Moment estimate of `c_item` from the D rows of `cover` and
/// `cover + item`, clamped to `[0, 1]`.
pub fn moment_slip(g: &[f64], alpha: &AlphaVector, item: usize, cover: ItemCombo) -> Result<f64> {
    if g.len() != alpha.m() {
        return Err(Error::DimensionMismatch(format!("g has {} entries, alpha has {} items", g.len(), alpha.m())));
    }
    if item >= alpha.m() {
        return Err(Error::ItemOutOfRange { item: item + 1, m: alpha.m() });
    }
    if cover.contains(item) {
        return Err(Error::InvalidParams(format!("item {} is inside its cover {cover}", item + 1)));
    }
    let denominator = d_row_dot(alpha, g, cover)?;
    if denominator.abs() <= DEGENERATE_DENOMINATOR {
        return Err(Error::DegenerateSample { item: item + 1, denominator });
    }
    let numerator = d_row_dot(alpha, g, cover.with(item))?;
    Ok((g[item] + numerator / denominator).clamp(0.0, 1.0))
}

/// Result of a slip fit for one Q-matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SlipFit {
    pub c: Vec<f64>,
    /// Score of the Q-matrix at `c`.
    pub score: f64,
    /// Items whose `c` came from the moment estimate.
    pub moment_items: Vec<usize>,
    pub evaluations: usize,
}

/// Bounded compass search on `[0, 1]^n` from several starts.
pub(crate) fn compass_minimize(
    starts: &[Vec<f64>],
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, f64, usize)> {
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let mut x = start.clone();
        let mut fx = f(&x)?;
        evaluations += 1;
        let mut step = COMPASS_STEP;
        while step >= COMPASS_TOL {
            let mut improved = false;
            for j in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let old = x[j];
                    let trial = (old + dir * step).clamp(0.0, 1.0);
                    if trial == old {
                        continue;
                    }
                    x[j] = trial;
                    let ft = f(&x)?;
                    evaluations += 1;
                    if ft < fx {
                        fx = ft;
                        improved = true;
                        break;
                    }
                    x[j] = old;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(_, b)| fx < *b) {
            best = Some((x, fx));
        }
    }
    let (x, fx) = best.ok_or_else(|| Error::InvalidParams("no starting point".into()))?;
    Ok((x, fx, evaluations))
}

/// Minimises the score of `q` over the `c` coordinates left `None` in
/// `fixed`, holding the others.
pub fn profile_slip(q: &QMatrix, g: &[f64], alpha: &AlphaVector, fixed: &[Option<f64>]) -> Result<SlipFit> {
    if fixed.len() != q.m() || g.len() != q.m() {
        return Err(Error::DimensionMismatch(format!(
            "Q has {} items, {} fixed slips, {} guesses",
            q.m(),
            fixed.len(),
            g.len()
        )));
    }
    let free: Vec<usize> = (0..q.m()).filter(|&i| fixed[i].is_none()).collect();
    let moment_items: Vec<usize> = (0..q.m()).filter(|&i| fixed[i].is_some()).collect();
    let base: Vec<f64> = fixed.iter().map(|c| c.unwrap_or(1.0).clamp(0.0, 1.0)).collect();
    let eval = |sub: &[f64]| -> Result<f64> {
        let mut c = base.clone();
        for (&i, &v) in free.iter().zip(sub) {
            c[i] = v;
        }
        score(q, alpha, &DinaParams { c, g: g.to_vec() })
    };
    if free.is_empty() {
        return Ok(SlipFit { score: eval(&[])?, c: base, moment_items, evaluations: 1 });
    }
    let starts: Vec<Vec<f64>> = COMPASS_STARTS.iter().map(|&s| vec![s; free.len()]).collect();
    let (sub, best, evaluations) = compass_minimize(&starts, eval)?;
    let mut c = base;
    for (&i, &v) in free.iter().zip(&sub) {
        c[i] = v;
    }
    Ok(SlipFit { c, score: best, moment_items, evaluations })
}

/// Combined slip estimate for `q`: moment estimates on covered items, then
/// profiled minimisation over the rest.
pub fn fit_slip(q: &QMatrix, g: &[f64], alpha: &AlphaVector) -> Result<SlipFit> {
    let mut fixed = vec![None; q.m()];
    for (item, slot) in fixed.iter_mut().enumerate() {
        if let Some(cover) = find_cover_combo(q, item)? {
            *slot = Some(moment_slip(g, alpha, item, cover)?);
        }
    }
    profile_slip(q, g, alpha, &fixed)
}

/// Exhaustive search with known guessing and estimated slipping. Candidates
/// whose moment estimate is degenerate score `+inf` and are listed in the
/// diagnostics.
pub fn estimate_q_unknown_c(alpha: &AlphaVector, g: &[f64], k: usize, opts: &SearchOptions) -> Result<EstimationResult> {
    check_alpha(alpha, g.len())?;
    let candidates: Vec<QMatrix> = enumerate_candidates(alpha.m(), k, opts.budget)?.collect();
    let n_candidates = candidates.len();
    let fitted: Vec<Result<(ScoredCandidate, Option<Diagnostic>)>> = run_pool(opts.workers, || {
        candidates
            .into_par_iter()
            .map(|q| match fit_slip(&q, g, alpha) {
                Ok(fit) => Ok((ScoredCandidate { q, score: fit.score, c_hat: Some(fit.c) }, None)),
                Err(e @ Error::DegenerateSample { .. }) => {
                    let diag = Diagnostic { q: q.clone(), message: e.to_string() };
                    Ok((ScoredCandidate { q, score: f64::INFINITY, c_hat: None }, Some(diag)))
                }
                Err(e) => Err(e),
            })
            .collect()
    })?;
    let mut scored = Vec::with_capacity(n_candidates);
    let mut diagnostics = Vec::new();
    for item in fitted {
        let (cand, diag) = item?;
        scored.push(cand);
        diagnostics.extend(diag);
    }
    diagnostics.sort_by(|a, b| a.q.cmp(&b.q));
    assemble(scored, diagnostics, n_candidates, opts, |best| {
        let c = best.c_hat.clone().expect("finite scores carry a slip estimate");
        estimate_p(&best.q, alpha, &DinaParams { c, g: g.to_vec() })
    })
}
