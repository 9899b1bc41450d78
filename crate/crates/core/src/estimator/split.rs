//! Estimation on overlapping item groups, stitched into one Q-matrix.
//!
//! Each group is estimated on its own saturated alpha-vector. Later results
//! are matched to the rows already assigned by permuting their columns so
//! that the overlap items agree.

use itertools::Itertools;

use super::{estimate, EstimationResult, EstimatorMode, SearchOptions};
use crate::error::{Error, Result};
use crate::qmatrix::QMatrix;
use crate::simulator::{compute_alpha, ResponseData};
use crate::tmatrix::ComboOrder;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupResult {
    /// 0-based items of the group.
    pub items: Vec<usize>,
    pub result: EstimationResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    /// Canonical stitched matrix.
    pub q_hat: QMatrix,
    pub groups: Vec<GroupResult>,
}

impl SplitResult {
    pub fn has_ties(&self) -> bool {
        self.groups.iter().any(|g| g.result.has_ties())
    }
}

fn check_groups(m: usize, groups: &[Vec<usize>]) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::InvalidParams("no item groups given".into()));
    }
    let mut seen = vec![false; m];
    for group in groups {
        if group.is_empty() {
            return Err(Error::InvalidParams("empty item group".into()));
        }
        if !group.iter().all_unique() {
            return Err(Error::InvalidParams(format!("item repeated in group {group:?}")));
        }
        for &i in group {
            *seen.get_mut(i).ok_or(Error::ItemOutOfRange { item: i + 1, m })? = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidParams(format!("item {} is in no group", missing + 1)));
    }
    Ok(())
}

/// Stitches a group result onto the partially assigned rows.
fn merge(rows: &mut [Option<u16>], k: usize, items: &[usize], sub: &QMatrix) -> Result<()> {
    let mut options: Vec<Vec<Option<u16>>> = Vec::new();
    for perm in (0..k).permutations(k) {
        let permuted = sub.permute_columns(&perm)?;
        let agrees = items.iter().enumerate().all(|(r, &i)| rows[i].is_none_or(|row| row == permuted.row(r)));
        if !agrees {
            continue;
        }
        let mut next = rows.to_vec();
        for (r, &i) in items.iter().enumerate() {
            next[i] = Some(permuted.row(r));
        }
        if !options.contains(&next) {
            options.push(next);
        }
    }
    let assigned = |rows: &[Option<u16>]| QMatrix::from_row_bits(k, rows.iter().flatten().copied().collect());
    match options.len() {
        0 => Err(Error::Alignment(format!(
            "overlap items {} disagree with earlier groups under every column matching",
            overlap_label(rows, items)
        ))),
        1 => {
            rows.copy_from_slice(&options[0]);
            Ok(())
        }
        _ => {
            // matchings that differ only by a relabelling of the whole partial
            // matrix are interchangeable
            let first = assigned(&options[0])?.canonicalize();
            for other in &options[1..] {
                if assigned(other)?.canonicalize() != first {
                    return Err(Error::Alignment(format!(
                        "overlap items {} do not determine a unique column matching for group {}",
                        overlap_label(rows, items),
                        items.iter().map(|i| (i + 1).to_string()).join(",")
                    )));
                }
            }
            rows.copy_from_slice(&options[0]);
            Ok(())
        }
    }
}

fn overlap_label(rows: &[Option<u16>], items: &[usize]) -> String {
    let overlap: Vec<String> = items.iter().filter(|&&i| rows[i].is_some()).map(|i| (i + 1).to_string()).collect();
    if overlap.is_empty() {
        "(none)".into()
    } else {
        format!("{{{}}}", overlap.join(","))
    }
}

/// Runs the estimator for `mode` on each group and stitches the results.
/// `groups` hold 0-based item indices.
pub fn split_estimate(
    responses: &ResponseData,
    k: usize,
    groups: &[Vec<usize>],
    mode: &EstimatorMode,
    opts: &SearchOptions,
) -> Result<SplitResult> {
    let m = responses.m();
    check_groups(m, groups)?;
    let mut rows: Vec<Option<u16>> = vec![None; m];
    let mut results = Vec::with_capacity(groups.len());
    for items in groups {
        let sub = responses.select_items(items)?;
        let alpha = compute_alpha(&sub, &ComboOrder::saturated(items.len())?)?;
        let result = estimate(&alpha, k, &mode.select(items), opts)?;
        merge(&mut rows, k, items, &result.q_hat)?;
        results.push(GroupResult { items: items.clone(), result });
    }
    let bits: Vec<u16> = rows.into_iter().map(|r| r.expect("every item lies in a group")).collect();
    Ok(SplitResult { q_hat: QMatrix::from_row_bits(k, bits)?.canonicalize(), groups: results })
}
