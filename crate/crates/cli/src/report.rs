//! JSON reports. The layouts are described by the schemas in `schema/`.

use std::collections::BTreeMap;

use serde::Serialize;

use qmatrix::estimator::{
    CheckStatus, EstimationResult, IdentifiabilityReport, ProfileDistribution, SplitResult, VerifyReport,
};
use qmatrix::QMatrix;

pub const SCHEMA_VERSION: u32 = 1;

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Serialize)]
pub struct SimulateMeta {
    pub schema_version: u32,
    pub command: &'static str,
    pub version: String,
    pub q: Vec<String>,
    pub pstar: BTreeMap<String, f64>,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub responses: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Tie {
    pub q: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Serialize)]
pub struct Diagnostic {
    pub q: Vec<String>,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct GroupReport {
    pub items: Vec<usize>,
    pub q_hat: Vec<String>,
    pub score: f64,
    pub ties: Vec<Tie>,
    pub c_hat: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub version: String,
    pub mode: &'static str,
    pub k: usize,
    pub n_subjects: usize,
    pub q_hat: Vec<String>,
    pub score: Option<f64>,
    pub ties: Vec<Tie>,
    pub p_tilde: Option<BTreeMap<String, f64>>,
    pub c_hat: Option<Vec<f64>>,
    pub n_candidates: usize,
    pub groups: Option<Vec<GroupReport>>,
    pub diagnostics: Vec<Diagnostic>,
    pub seed: Option<u64>,
    pub wall_time: Option<f64>,
}

fn ties(result: &EstimationResult) -> Vec<Tie> {
    result.ties.iter().map(|t| Tie { q: t.q.row_strings(), score: t.score }).collect()
}

fn diagnostics(result: &EstimationResult) -> Vec<Diagnostic> {
    result.diagnostics.iter().map(|d| Diagnostic { q: d.q.row_strings(), message: d.message.clone() }).collect()
}

impl EstimateReport {
    pub fn from_full(mode: &'static str, k: usize, n_subjects: usize, result: &EstimationResult) -> Self {
        EstimateReport {
            schema_version: SCHEMA_VERSION,
            command: "estimate",
            version: version(),
            mode,
            k,
            n_subjects,
            q_hat: result.q_hat.row_strings(),
            score: Some(result.score),
            ties: ties(result),
            p_tilde: Some(result.p_tilde.labelled()),
            c_hat: result.c_hat.clone(),
            n_candidates: result.n_candidates,
            groups: None,
            diagnostics: diagnostics(result),
            seed: None,
            wall_time: None,
        }
    }

    /// Split runs report per-group fits; the stitched matrix has no single
    /// score or attribute distribution.
    pub fn from_split(mode: &'static str, k: usize, n_subjects: usize, m: usize, result: &SplitResult) -> Self {
        let mut c_hat: Option<Vec<f64>> = None;
        if result.groups.iter().all(|g| g.result.c_hat.is_some()) {
            let mut c = vec![f64::NAN; m];
            for g in result.groups.iter().rev() {
                for (&item, &v) in g.items.iter().zip(g.result.c_hat.as_ref().unwrap()) {
                    c[item] = v;
                }
            }
            c_hat = Some(c);
        }
        EstimateReport {
            schema_version: SCHEMA_VERSION,
            command: "estimate",
            version: version(),
            mode,
            k,
            n_subjects,
            q_hat: result.q_hat.row_strings(),
            score: None,
            ties: Vec::new(),
            p_tilde: None,
            c_hat,
            n_candidates: result.groups.iter().map(|g| g.result.n_candidates).sum(),
            groups: Some(
                result
                    .groups
                    .iter()
                    .map(|g| GroupReport {
                        items: g.items.iter().map(|i| i + 1).collect(),
                        q_hat: g.result.q_hat.row_strings(),
                        score: g.result.score,
                        ties: ties(&g.result),
                        c_hat: g.result.c_hat.clone(),
                    })
                    .collect(),
            ),
            diagnostics: result.groups.iter().flat_map(|g| diagnostics(&g.result)).collect(),
            seed: None,
            wall_time: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub status: &'static str,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct CandidateReport {
    pub delta: f64,
    pub c: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct IdentifiabilitySection {
    pub threshold: f64,
    pub min_delta: Option<f64>,
    pub n_candidates: usize,
    pub flagged: Vec<Vec<String>>,
    /// Keyed by the candidate's rows joined with commas.
    pub candidates: BTreeMap<String, CandidateReport>,
}

impl From<&IdentifiabilityReport> for IdentifiabilitySection {
    fn from(r: &IdentifiabilityReport) -> Self {
        IdentifiabilitySection {
            threshold: r.threshold,
            min_delta: r.min_delta.is_finite().then_some(r.min_delta),
            n_candidates: r.candidates.len(),
            flagged: r.flagged.iter().map(QMatrix::row_strings).collect(),
            candidates: r
                .candidates
                .iter()
                .map(|c| (c.q.row_strings().join(","), CandidateReport { delta: c.delta, c: c.c.clone() }))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyJson {
    pub schema_version: u32,
    pub command: &'static str,
    pub version: String,
    pub q: Vec<String>,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub pstar: BTreeMap<String, f64>,
    pub all_passed: bool,
    pub checks: Vec<CheckReport>,
    pub identifiability: Option<IdentifiabilitySection>,
    pub warnings: Vec<String>,
}

impl VerifyJson {
    pub fn new(q: &QMatrix, c: Vec<f64>, g: Vec<f64>, p_star: &ProfileDistribution, report: &VerifyReport) -> Self {
        VerifyJson {
            schema_version: SCHEMA_VERSION,
            command: "verify",
            version: version(),
            q: q.row_strings(),
            c,
            g,
            pstar: p_star.labelled(),
            all_passed: report.all_passed(),
            checks: report
                .checks
                .iter()
                .map(|c| CheckReport {
                    name: c.name,
                    status: match c.status {
                        CheckStatus::Pass => "pass",
                        CheckStatus::Fail => "fail",
                        CheckStatus::Skipped => "skipped",
                    },
                    value: c.value.filter(|v| v.is_finite()),
                    detail: c.detail.clone(),
                })
                .collect(),
            identifiability: report.identifiability.as_ref().map(IdentifiabilitySection::from),
            warnings: report.warnings.clone(),
        }
    }
}
