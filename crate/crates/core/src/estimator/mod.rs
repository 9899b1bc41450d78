//! Scores, Q-matrix search and parameter estimation.
//!
//! The score of a candidate `Q'` is the distance between the observed
//! alpha-vector and the closest point `p_0 g + T_{c,g}(Q') p` with `(p_0, p)`
//! on the probability simplex. With `c = 1, g = 0` the guessing column is
//! zero and `p_0` acts as slack, so the constraint reduces to
//! `sum_{A != 0} p_A <= 1`.

mod identifiability;
mod slip;
mod split;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra as na;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qmatrix::{enumerate_candidates, AttributeProfile, QMatrix, DEFAULT_BUDGET};
use crate::solver::{simplex_lsq, LsqProblem, LsqSolution};
use crate::tmatrix::{build_tcg, guess_vector, ComboOrder, DinaParams};

pub use identifiability::{
    check_identifiability, d_identity_error, profiled_delta, verify, CandidateDelta, Check, CheckStatus,
    IdentifiabilityOptions, IdentifiabilityReport, VerifyReport, D_IDENTITY_TOL, RANK_TOL,
};
pub use slip::{estimate_q_unknown_c, find_cover_combo, fit_slip, moment_slip, profile_slip, SlipFit};
pub use split::{split_estimate, GroupResult, SplitResult};

/// Default tolerance for reporting tied candidates.
pub const DEFAULT_TIE_TOL: f64 = 1e-7;

/// Empirical positive-response rates per item combination.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaVector {
    pub order: ComboOrder,
    pub rates: Vec<f64>,
    pub n_subjects: usize,
}

impl AlphaVector {
    pub fn new(order: ComboOrder, rates: Vec<f64>, n_subjects: usize) -> Result<Self> {
        if rates.len() != order.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rates for {} combos",
                rates.len(),
                order.len()
            )));
        }
        if rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("alpha-vector"));
        }
        Ok(AlphaVector { order, rates, n_subjects })
    }

    pub fn m(&self) -> usize {
        self.order.m()
    }

    pub fn rate(&self, combo: crate::qmatrix::ItemCombo) -> Result<f64> {
        Ok(self.rates[self.order.lookup(combo)?])
    }

    /// Restriction to the listed items (0-based), over a saturated order of
    /// the sub-test. Needs every combo of those items in `self`.
    pub fn restrict(&self, items: &[usize]) -> Result<AlphaVector> {
        let order = ComboOrder::saturated(items.len())?;
        let mut rates = Vec::with_capacity(order.len());
        for combo in order.combos() {
            let original: Vec<usize> = combo.items().map(|i| items[i]).collect();
            rates.push(self.rate(crate::qmatrix::ItemCombo::from_items(&original)?)?);
        }
        AlphaVector::new(order, rates, self.n_subjects)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("combo\trate\n");
        for (c, r) in self.order.combos().iter().zip(&self.rates) {
            out.push_str(&format!("{}\t{}\n", c.label(), r));
        }
        out
    }
}

/// Probabilities over all `2^k` attribute profiles, indexed by profile bits.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileDistribution {
    k: usize,
    probs: Vec<f64>,
}

impl ProfileDistribution {
    /// Validates nonnegativity and a unit sum (within `1e-9`), then
    /// normalises exactly.
    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << k {
            return Err(Error::DimensionMismatch(format!("{} probabilities for k = {k}", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParams("profile probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSimplex { sum });
        }
        Ok(ProfileDistribution { k, probs: probs.into_iter().map(|p| p / sum).collect() })
    }

    pub fn uniform(k: usize) -> Self {
        let n = 1usize << k;
        ProfileDistribution { k, probs: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(k: usize, profile: AttributeProfile) -> Self {
        let mut probs = vec![0.0; 1 << k];
        probs[usize::from(profile.bits())] = 1.0;
        ProfileDistribution { k, probs }
    }

    /// Empirical frequencies of the drawn profiles.
    pub fn empirical(k: usize, profiles: &[AttributeProfile]) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::InvalidParams("no profiles".into()));
        }
        let mut counts = vec![0usize; 1 << k];
        for p in profiles {
            counts[usize::from(p.bits())] += 1;
        }
        let n = profiles.len() as f64;
        Ok(ProfileDistribution { k, probs: counts.into_iter().map(|c| c as f64 / n).collect() })
    }

    /// From `(p_0, p_A for A != 0 in column order)`.
    pub fn from_simplex_vector(k: usize, x: &[f64]) -> Self {
        let mut probs = vec![0.0; 1 << k];
        probs[0] = x[0];
        for (p, &v) in AttributeProfile::nonzero_profiles(k).iter().zip(&x[1..]) {
            probs[usize::from(p.bits())] = v;
        }
        ProfileDistribution { k, probs }
    }

    /// `(p_0, p_A for A != 0 in column order)`.
    pub fn to_simplex_vector(&self) -> Vec<f64> {
        let mut x = vec![self.probs[0]];
        x.extend(AttributeProfile::nonzero_profiles(self.k).iter().map(|p| self.prob(*p)));
        x
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn prob(&self, profile: AttributeProfile) -> f64 {
        self.probs[usize::from(profile.bits())]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Every profile, including the zero profile, has positive mass.
    pub fn is_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn labelled(&self) -> BTreeMap<String, f64> {
        (0..self.probs.len())
            .map(|b| (AttributeProfile::from_bits(b as u16).label(self.k), self.probs[b]))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &ProfileDistribution) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `[g | T_{c,g}(q)]` on the given order.
pub fn design_matrix(q: &QMatrix, params: &DinaParams<f64>, order: &ComboOrder) -> Result<na::DMatrix<f64>> {
    let tcg = build_tcg(q, params, order)?;
    let gv = guess_vector(&params.g, order)?;
    let mut design = na::DMatrix::zeros(order.len(), tcg.ncols() + 1);
    design.set_column(0, &gv);
    design.columns_mut(1, tcg.ncols()).copy_from(&tcg.entries);
    Ok(design)
}

/// Simplex least-squares fit of `q` to `alpha`.
pub fn fit(q: &QMatrix, alpha: &AlphaVector, params: &DinaParams<f64>) -> Result<LsqSolution<f64>> {
    if params.m() != q.m() {
        return Err(Error::DimensionMismatch(format!("parameters for {} items, Q has {}", params.m(), q.m())));
    }
    let design = design_matrix(q, params, &alpha.order)?;
    let problem = LsqProblem::new(design, na::DVector::from_column_slice(&alpha.rates))?;
    simplex_lsq(&problem)
}

/// Distance from `alpha` to the model image of `q`.
pub fn score(q: &QMatrix, alpha: &AlphaVector, params: &DinaParams<f64>) -> Result<f64> {
    Ok(fit(q, alpha, params)?.residual)
}

/// Attribute-distribution estimate for `q`, labelled by `q`'s column order.
pub fn estimate_p(q: &QMatrix, alpha: &AlphaVector, params: &DinaParams<f64>) -> Result<ProfileDistribution> {
    let sol = fit(q, alpha, params)?;
    Ok(ProfileDistribution::from_simplex_vector(q.k(), &sol.x))
}

/// Population alpha-vector `p_0 g + T_{c,g}(q) p` under `p_star`.
pub fn population_alpha(
    q: &QMatrix,
    params: &DinaParams<f64>,
    p_star: &ProfileDistribution,
    order: &ComboOrder,
) -> Result<AlphaVector> {
    if p_star.k() != q.k() {
        return Err(Error::DimensionMismatch(format!("p* over k = {}, Q has k = {}", p_star.k(), q.k())));
    }
    let design = design_matrix(q, params, order)?;
    let rates = design * na::DVector::from_vec(p_star.to_simplex_vector());
    AlphaVector::new(order.clone(), rates.iter().copied().collect(), 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    /// Cap on `(2^k - 1)^m`.
    pub budget: u128,
    pub tie_tol: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Keep the full per-candidate score table.
    pub keep_table: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: DEFAULT_BUDGET, tie_tol: DEFAULT_TIE_TOL, workers: None, keep_table: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub q: QMatrix,
    pub score: f64,
    pub c_hat: Option<Vec<f64>>,
}

/// A candidate dropped from the search, with the reason.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub q: QMatrix,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub q_hat: QMatrix,
    pub score: f64,
    /// Candidates within the tie tolerance of the best score, best first.
    pub ties: Vec<ScoredCandidate>,
    pub p_tilde: ProfileDistribution,
    pub c_hat: Option<Vec<f64>>,
    pub n_candidates: usize,
    pub table: Option<Vec<ScoredCandidate>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl EstimationResult {
    /// More than one equivalence class attains the best score.
    pub fn has_ties(&self) -> bool {
        self.ties.len() > 1
    }
}

/// Which parameters are known to the estimator.
#[derive(Clone, Debug, PartialEq)]
pub enum EstimatorMode {
    /// `c = 1`, `g = 0`.
    Noiseless,
    /// Known slipping and guessing.
    KnownCg(DinaParams<f64>),
    /// Known guessing, slipping estimated per candidate.
    KnownG(Vec<f64>),
}

impl EstimatorMode {
    pub fn select(&self, items: &[usize]) -> EstimatorMode {
        match self {
            EstimatorMode::Noiseless => EstimatorMode::Noiseless,
            EstimatorMode::KnownCg(p) => EstimatorMode::KnownCg(p.select(items)),
            EstimatorMode::KnownG(g) => EstimatorMode::KnownG(items.iter().map(|&i| g[i]).collect()),
        }
    }
}

/// Runs the estimator matching `mode`.
pub fn estimate(alpha: &AlphaVector, k: usize, mode: &EstimatorMode, opts: &SearchOptions) -> Result<EstimationResult> {
    match mode {
        EstimatorMode::Noiseless => estimate_q(alpha, &DinaParams::noiseless(alpha.m()), k, opts),
        EstimatorMode::KnownCg(params) => estimate_q(alpha, params, k, opts),
        EstimatorMode::KnownG(g) => estimate_q_unknown_c(alpha, g, k, opts),
    }
}

pub(crate) fn run_pool<R: Send>(workers: Option<usize>, job: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParams(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

pub(crate) fn candidate_cmp(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    a.score.total_cmp(&b.score).then_with(|| a.q.cmp(&b.q))
}

fn check_alpha(alpha: &AlphaVector, m: usize) -> Result<()> {
    if !alpha.order.is_saturated() {
        return Err(Error::NonSaturatedOrder);
    }
    if alpha.m() != m {
        return Err(Error::DimensionMismatch(format!("alpha over {} items, parameters for {m}", alpha.m())));
    }
    Ok(())
}

/// Sorts scored candidates and assembles the result around the winner.
pub(crate) fn assemble(
    mut scored: Vec<ScoredCandidate>,
    diagnostics: Vec<Diagnostic>,
    n_candidates: usize,
    opts: &SearchOptions,
    p_tilde_for: impl FnOnce(&ScoredCandidate) -> Result<ProfileDistribution>,
) -> Result<EstimationResult> {
    scored.sort_by(candidate_cmp);
    let best = scored
        .first()
        .filter(|c| c.score.is_finite())
        .cloned()
        .ok_or_else(|| Error::Precondition("no candidate produced a finite score".into()))?;
    let ties: Vec<ScoredCandidate> =
        scored.iter().take_while(|c| c.score <= best.score + opts.tie_tol).cloned().collect();
    let p_tilde = p_tilde_for(&best)?;
    Ok(EstimationResult {
        q_hat: best.q.clone(),
        score: best.score,
        ties,
        p_tilde,
        c_hat: best.c_hat.clone(),
        n_candidates,
        table: opts.keep_table.then_some(scored),
        diagnostics,
    })
}

/// Exhaustive search over canonical candidates with known `c` and `g`.
pub fn estimate_q(
    alpha: &AlphaVector,
    params: &DinaParams<f64>,
    k: usize,
    opts: &SearchOptions,
) -> Result<EstimationResult> {
    check_alpha(alpha, params.m())?;
    let candidates: Vec<QMatrix> = enumerate_candidates(alpha.m(), k, opts.budget)?.collect();
    let n_candidates = candidates.len();
    let scored: Vec<Result<ScoredCandidate>> = run_pool(opts.workers, || {
        candidates
            .into_par_iter()
            .map(|q| Ok(ScoredCandidate { score: score(&q, alpha, params)?, q, c_hat: None }))
            .collect()
    })?;
    let scored = scored.into_iter().collect::<Result<Vec<_>>>()?;
    assemble(scored, Vec::new(), n_candidates, opts, |best| estimate_p(&best.q, alpha, params))
}
